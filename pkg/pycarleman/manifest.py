# -*- coding: utf-8 -*-
""" Manifest Module

    Keeps track of every artifact a run writes and emits manifest.json
    with the resolved configuration and a checksum per file
"""
import hashlib
import os
import threading

from pycarleman.errors import StorageError
from pycarleman.storage import write_json

MANIFEST_NAME = "manifest.json"
DIGEST = "sha256"


def stream_digest(stream):
    """ Hex digest of a binary artifact stream, rewound to its start first """
    stream.seek(0)
    return hashlib.file_digest(stream, DIGEST).hexdigest()


def artifact_digest(path):
    """ Hex digest of one artifact on disk

    Raises:
        StorageError: the artifact cannot be read
    """
    try:
        with open(path, "rb") as handle:
            return stream_digest(handle)
    except OSError as error:
        raise StorageError("Error reading artifact {}: {}".format(path, str(error)))


class ArtifactManifest:
    """ collects the artifacts of one run and writes them out with their checksums
    """
    def __init__(self, out_dir):
        self.out_dir = out_dir
        self._artifacts = {}
        self._volatile = set()
        self._lock = threading.Lock()

    def _relative(self, path):
        return os.path.relpath(path, self.out_dir).replace(os.sep, "/")

    def record(self, path, volatile=False):
        """ Registers a written file; volatile files (timings) are listed without checksum """
        name = self._relative(path)
        with self._lock:
            if volatile:
                self._volatile.add(name)
            else:
                self._artifacts[name] = path
        return path

    @property
    def names(self):
        return sorted(self._artifacts)

    def entries(self):
        return [{"path": name, DIGEST: artifact_digest(self._artifacts[name])} for name in self.names]

    def write(self, config, command):
        """ Writes manifest.json

        Args:
            config: resolved RunConfig
            command: subcommand that produced the artifacts
        Returns:
            manifest path
        """
        path = os.path.join(self.out_dir, MANIFEST_NAME)
        payload = {"command": command, "config": config.as_dict(), "artifacts": self.entries(),
                   "volatile": sorted(self._volatile)}
        return write_json(path, payload)
