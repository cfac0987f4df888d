# -*- coding: utf-8 -*-
""" Utility Module

    Holds helper functions for parsing command values, sizing worker
    pools and setting up logging
"""
import logging
import os

from pycarleman.errors import ConfigError

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

def parse_float_list(text):
    """ Parses a comma separated list of reals

    Args:
        text: string such as "1,2,4,8"
    Returns:
        list of floats in the given order
    Raises:
        ConfigError: empty list or non numeric entry
    """
    if text is None or len(str(text).strip()) <= 0:
        raise ConfigError("List value cannot be empty.")
    try:
        return [float(item) for item in str(text).split(",") if item.strip()]
    except ValueError as error:
        raise ConfigError("Error parsing list {}: {}".format(text, str(error)))

def parse_box(text):
    """ Parses an axis aligned box written as "lo:hi,lo:hi[,lo:hi]"

    Args:
        text: box string
    Returns:
        tuple of (lo, hi) pairs, one per axis
    Raises:
        ConfigError: malformed box
    """
    if text is None or len(str(text).strip()) <= 0:
        raise ConfigError("Box value cannot be empty.")
    box = []
    try:
        for interval in str(text).split(","):
            lo, hi = interval.split(":")
            box.append((float(lo), float(hi)))
    except ValueError as error:
        raise ConfigError("Error parsing box {}: {}".format(text, str(error)))
    return tuple(box)

def format_box(box):
    """ Inverse of parse_box """
    return ",".join("{}:{}".format(lo, hi) for lo, hi in box)

def parse_bool(text):
    """ Reads yes/no style flags the way configparser does """
    value = str(text).strip().lower()
    if value in ("1", "yes", "true", "on"):
        return True
    if value in ("0", "no", "false", "off"):
        return False
    raise ConfigError("Error parsing boolean {}".format(text))

def worker_count(default=None):
    """ Number of concurrent workers for sweeps and experiment rows

    The CNSF_THREADS environment variable caps the pool size.

    Args:
        default: preferred size, cpu count when None
    Returns:
        positive integer
    Raises:
        ConfigError: CNSF_THREADS is not a positive integer
    """
    count = default or os.cpu_count() or 1
    cap = os.environ.get("CNSF_THREADS")
    if cap is not None and cap.strip():
        try:
            cap = int(cap)
        except ValueError:
            raise ConfigError("CNSF_THREADS must be an integer, got {}".format(cap))
        if cap <= 0:
            raise ConfigError("CNSF_THREADS must be positive, got {}".format(cap))
        count = min(count, cap)
    return max(1, count)

def configure_logging(verbose=False):
    """ Configures the root logger once for command line runs """
    level = logging.DEBUG if verbose else logging.INFO
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=level, format=LOG_FORMAT)
    root.setLevel(level)
