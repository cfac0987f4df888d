""" Storage Module
    Holds functions for reading and writing lab artifacts: CNSF field
    snapshots, CSV tables, JSON summaries and SVG plots
"""
import csv
import json
import os
import struct
from dataclasses import dataclass

import matplotlib
matplotlib.use("Agg")
from matplotlib.figure import Figure
import numpy as np

from pycarleman.errors import FormatError, StorageError, ValidationError
from pycarleman.grid import Field, centre, edges, faces, lattice_shape, node

MAGIC = b"CNSF"
VERSION = 1
HEADER = "<4sIBB"
KINDS = ("centre", "node", "face", "edge")
SVG_SALT = "pycarleman"


def kind_stags(kind, dim):
    """ Staggering tags of a snapshot kind """
    if kind == "centre":
        return (centre(dim),)
    if kind == "node":
        return (node(dim),)
    if kind == "face":
        return faces(dim)
    if kind == "edge":
        return edges(dim)
    raise FormatError("Unknown snapshot kind {}, expected one of {}".format(kind, KINDS))


def field_kind(field_):
    """ Snapshot kind of a Field's staggering

    Raises:
        FormatError: staggering is none of the CNSF kinds
    """
    for kind in KINDS:
        if field_.stags == kind_stags(kind, field_.dim):
            return kind
    raise FormatError("Staggering {} has no snapshot kind".format(field_.stags))


def ensure_dir(path):
    """ Creates an output directory and checks it can be written

    Raises:
        StorageError: directory cannot be created or written
    """
    if path is None or len(str(path)) <= 0:
        raise StorageError("Output directory cannot be empty.")
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as error:
        raise StorageError("Error creating {}: {}".format(path, str(error)))
    if not os.access(path, os.W_OK):
        raise StorageError("Output directory {} is not writable".format(path))
    return path


def _write_bytes(path, data):
    try:
        with open(path, "wb") as handle:
            handle.write(data)
    except OSError as error:
        raise StorageError("Error writing {}: {}".format(path, str(error)))
    return path


def encode_snapshot(field_):
    """ CNSF bytes of one Field snapshot

    Layout: magic, version (u32), dim (u8), component count (u8), cells
    per axis (u32 each), spacing per axis (f64 each), then every
    component's values as little endian f64 in row-major order.
    """
    if field_.batch_shape:
        raise ValidationError("A snapshot holds a single time, got batch shape {}".format(field_.batch_shape))
    field_kind(field_)
    grid = field_.grid
    parts = [struct.pack(HEADER, MAGIC, VERSION, grid.dim, len(field_.values)),
             struct.pack("<{}I".format(grid.dim), *grid.cells),
             struct.pack("<{}d".format(grid.dim), *grid.spacing)]
    for value in field_.values:
        parts.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return b"".join(parts)


def write_snapshot(path, field_):
    """ Writes one Field snapshot in CNSF format

    Raises:
        StorageError: file cannot be written
    """
    return _write_bytes(path, encode_snapshot(field_))


@dataclass(frozen=True, eq=False)
class Snapshot:
    """ Decoded CNSF file

    Attributes:
        kind: centre, node, face or edge
        cells: cells per axis
        spacing: spacing per axis
        values: one array per component, lattice shaped
    """
    kind: str
    cells: tuple
    spacing: tuple
    values: tuple

    @property
    def dim(self):
        return len(self.cells)

    def to_field(self, grid, bc="none"):
        """ Field on a grid with matching cells and spacing

        Raises:
            FormatError: grid does not match the header
        """
        if tuple(grid.cells) != self.cells or not np.allclose(grid.spacing, self.spacing, rtol=1e-12, atol=0):
            raise FormatError("Snapshot of {} cells does not fit grid {}".format(self.cells, grid.cells))
        return Field(grid, kind_stags(self.kind, self.dim), self.values, bc)


def _lattice(cells, stag):
    return tuple(n + 1 if s else n for n, s in zip(cells, stag))


def decode_snapshot(data, kind=None):
    """ Parses CNSF bytes

    Args:
        data: file contents
        kind: snapshot kind; inferred from the sizes when None, which
            fails when two kinds fit (2D face and edge fields)
    Returns:
        Snapshot
    Raises:
        FormatError: wrong magic, version, truncated or ambiguous data
    """
    fixed = struct.calcsize(HEADER)
    try:
        magic, version, dim, count = struct.unpack_from(HEADER, data, 0)
    except struct.error as error:
        raise FormatError("Error reading CNSF header: {}".format(str(error)))
    if magic != MAGIC:
        raise FormatError("Not a CNSF snapshot (magic {!r})".format(magic))
    if version != VERSION:
        raise FormatError("Unsupported CNSF version {}".format(version))
    if dim not in (2, 3):
        raise FormatError("Unsupported CNSF dimension {}".format(dim))
    try:
        cells = struct.unpack_from("<{}I".format(dim), data, fixed)
        spacing = struct.unpack_from("<{}d".format(dim), data, fixed + 4 * dim)
    except struct.error as error:
        raise FormatError("Error reading CNSF header: {}".format(str(error)))
    offset = fixed + 12 * dim
    payload = (len(data) - offset) // 8
    if (len(data) - offset) % 8:
        raise FormatError("CNSF payload is not a whole number of reals")
    if kind is None:
        fits = [k for k in KINDS if len(kind_stags(k, dim)) == count
                and sum(int(np.prod(_lattice(cells, s))) for s in kind_stags(k, dim)) == payload]
        if not fits:
            raise FormatError("CNSF payload of {} reals fits no snapshot kind".format(payload))
        if len(fits) > 1:
            raise FormatError("CNSF payload is ambiguous between {}, pass the kind".format(fits))
        kind = fits[0]
    stags = kind_stags(kind, dim)
    if len(stags) != count:
        raise FormatError("CNSF file has {} components, kind {} needs {}".format(count, kind, len(stags)))
    shapes = [_lattice(cells, s) for s in stags]
    if sum(int(np.prod(shape)) for shape in shapes) != payload:
        raise FormatError("CNSF payload of {} reals does not fit a {} snapshot".format(payload, kind))
    flat = np.frombuffer(data, dtype="<f8", offset=offset).astype(np.float64)
    values, start = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        values.append(flat[start:start + size].reshape(shape))
        start += size
    return Snapshot(kind=kind, cells=tuple(cells), spacing=tuple(spacing), values=tuple(values))


def read_snapshot(path, kind=None):
    """ Reads a CNSF file

    Raises:
        StorageError: file cannot be read
        FormatError: malformed contents
    """
    try:
        with open(path, "rb") as handle:
            data = handle.read()
    except OSError as error:
        raise StorageError("Error reading {}: {}".format(path, str(error)))
    return decode_snapshot(data, kind)


def plain(value):
    """ JSON friendly copy of nested containers holding numpy values """
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def dumps_json(data):
    return json.dumps(plain(data), sort_keys=True, indent=2) + "\n"


def write_json(path, data):
    """ JSON with sorted keys, two space indent and a trailing newline """
    return _write_bytes(path, dumps_json(data).encode("utf-8"))


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as error:
        raise StorageError("Error reading {}: {}".format(path, str(error)))
    except ValueError as error:
        raise FormatError("Error parsing {}: {}".format(path, str(error)))


def write_csv(path, rows, fieldnames=None):
    """ CSV table with a header row, minimal quoting and CRLF line ends

    Args:
        path: target file
        rows: list of dicts
        fieldnames: column order, the keys of the first row when None
    """
    rows = [plain(row) for row in rows]
    if fieldnames is None:
        if not rows:
            raise ValidationError("Cannot infer CSV columns from an empty table")
        fieldnames = list(rows[0].keys())
    try:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\r\n",
                                    extrasaction="ignore")
            writer.writeheader()
            writer.writerows(rows)
    except OSError as error:
        raise StorageError("Error writing {}: {}".format(path, str(error)))
    return path


def read_csv(path):
    try:
        with open(path, "r", newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))
    except OSError as error:
        raise StorageError("Error reading {}: {}".format(path, str(error)))


def write_svg(path, series, xlabel, ylabel, title=None, loglog=True, scatter=False):
    """ Line or scatter plot of named series, written as SVG

    Every series becomes one group with id "series-<name>". Axes switch to
    linear when a series holds non positive values.

    Args:
        path: target file
        series: dict name -> (x values, y values)
        xlabel: x axis label
        ylabel: y axis label
        title: optional title
        loglog: logarithmic axes
        scatter: markers only
    Raises:
        ValidationError: no data to plot
        StorageError: file cannot be written
    """
    if not series or not any(len(x) for x, _ in series.values()):
        raise ValidationError("Cannot plot an empty table")
    figure = Figure(figsize=(6, 4))
    axes = figure.add_subplot(1, 1, 1)
    positive = True
    for name in sorted(series):
        x, y = (np.asarray(v, dtype=np.float64) for v in series[name])
        positive = positive and bool(np.all(x > 0)) and bool(np.all(y > 0))
        if scatter:
            artist = axes.scatter(x, y, label=name)
        else:
            (artist,) = axes.plot(x, y, marker="o", label=name)
        artist.set_gid("series-{}".format(name))
    if loglog and positive:
        axes.set_xscale("log")
        axes.set_yscale("log")
    axes.set_xlabel(xlabel)
    axes.set_ylabel(ylabel)
    if title:
        axes.set_title(title)
    axes.legend()
    try:
        with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
            figure.savefig(path, format="svg", metadata={"Date": None})
    except OSError as error:
        raise StorageError("Error writing {}: {}".format(path, str(error)))
    return path


def write_report(rows, fmt, path, x="s", y="ratio", group=None):
    """ Writes a row table as csv, json or an svg plot of y against x

    Args:
        rows: list of dicts
        fmt: csv, json or svg
        path: target file
        x: column on the horizontal axis (svg)
        y: column on the vertical axis (svg)
        group: column naming the series (svg), one series when None
    """
    if fmt == "csv":
        return write_csv(path, rows)
    if fmt == "json":
        return write_json(path, rows)
    if fmt != "svg":
        raise ValidationError("Unknown report format {}".format(fmt))
    if not rows:
        raise ValidationError("Cannot plot an empty table")
    series = {}
    for row in rows:
        if row.get(y) in (None, ""):
            continue
        name = str(row[group]) if group else y
        xs, ys = series.setdefault(name, ([], []))
        xs.append(float(row[x]))
        ys.append(float(row[y]))
    return write_svg(path, series, x, y)
