""" Config Module

    Holds the run configuration and functions for loading and saving it as
    flat key/value text with section headers
"""
import configparser
import os
from dataclasses import asdict, dataclass, replace

from pycarleman.errors import ConfigError
from pycarleman.util import format_box, parse_bool, parse_box, parse_float_list

LEMMA3_INPUTS = ("one", "box")


def _ints(text):
    values = [int(v) for v in parse_float_list(text)]
    return values[0] if len(values) == 1 else tuple(values)


def _optional_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


def _optional_point(text):
    return None if str(text).strip().lower() in ("", "none") else tuple(parse_float_list(text))


def _join(values):
    return ",".join(str(v) for v in values)


def _show(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, (list, tuple)):
        return _join(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """ Fully resolved settings of one lab run """
    extent: tuple = (1.0, 1.0)
    cells: object = 32
    T: float = 2.0
    time_steps: int = 40
    omega: tuple = ((0.3, 0.7), (0.3, 0.7))
    omega0: tuple = ((0.4, 0.6), (0.4, 0.6))
    lam: float = 1.0
    c0: float = 1.0
    method: str = "analytic"
    peak: float = None
    s: tuple = (1.0, 2.0, 4.0, 8.0)
    m: int = 0
    project_source: bool = True
    bumps: int = 10
    g: str = "one"
    catalog: str = "stokes-pulse"
    snapshot_every: int = 10
    sources: int = 4
    M: float = 5.0
    amplitude: float = 1.0
    profile: str = "linear"
    window: float = 0.0
    obstruction_center: tuple = None
    obstruction_radius: float = None
    obstruction_amplitude: float = 1.0
    example_cells: int = 16
    example_time_steps: int = 8
    out_dir: str = "out"
    plots: bool = False
    seed: int = 0

    def validate(self):
        """ Checks the cross field invariants

        Raises:
            ConfigError: empty or unordered s list, bad counts or choices
        """
        if len(self.s) == 0:
            raise ConfigError("s list cannot be empty.")
        if any(b <= a for a, b in zip(self.s[:-1], self.s[1:])):
            raise ConfigError("s list must be ascending, got {}".format(_join(self.s)))
        if self.m < 0:
            raise ConfigError("m must be non negative, got {}".format(self.m))
        if self.g not in LEMMA3_INPUTS:
            raise ConfigError("Unknown lemma3 input {}, expected one of {}".format(self.g, LEMMA3_INPUTS))
        if self.bumps < 2:
            raise ConfigError("bumps must be at least 2 (calibration and holdout), got {}".format(self.bumps))
        if self.snapshot_every <= 0:
            raise ConfigError("snapshot_every must be positive, got {}".format(self.snapshot_every))
        if self.out_dir is None or len(self.out_dir) <= 0:
            raise ConfigError("Output directory cannot be empty.")
        return self

    def with_overrides(self, **changes):
        """ Copy with every non None change applied """
        return replace(self, **{k: v for k, v in changes.items() if v is not None}).validate()

    def as_dict(self):
        return asdict(self)


# (section, key) -> (RunConfig attribute, parser)
OPTIONS = {
    ("grid", "extent"): ("extent", lambda t: tuple(parse_float_list(t))),
    ("grid", "cells"): ("cells", _ints),
    ("grid", "T"): ("T", float),
    ("grid", "time_steps"): ("time_steps", int),
    ("subdomains", "omega"): ("omega", parse_box),
    ("subdomains", "omega0"): ("omega0", parse_box),
    ("weights", "lambda"): ("lam", float),
    ("weights", "c0"): ("c0", float),
    ("weights", "method"): ("method", str),
    ("weights", "peak"): ("peak", _optional_float),
    ("carleman", "s"): ("s", lambda t: tuple(parse_float_list(t))),
    ("carleman", "m"): ("m", int),
    ("carleman", "project_source"): ("project_source", parse_bool),
    ("carleman", "bumps"): ("bumps", int),
    ("carleman", "g"): ("g", str),
    ("forward", "catalog"): ("catalog", str),
    ("forward", "snapshot_every"): ("snapshot_every", int),
    ("stability", "sources"): ("sources", int),
    ("stability", "M"): ("M", float),
    ("stability", "amplitude"): ("amplitude", float),
    ("stability", "profile"): ("profile", str),
    ("stability", "window"): ("window", float),
    ("obstruction", "center"): ("obstruction_center", _optional_point),
    ("obstruction", "radius"): ("obstruction_radius", _optional_float),
    ("obstruction", "amplitude"): ("obstruction_amplitude", float),
    ("examples", "cells"): ("example_cells", int),
    ("examples", "time_steps"): ("example_time_steps", int),
    ("output", "dir"): ("out_dir", str),
    ("output", "plots"): ("plots", parse_bool),
    ("output", "seed"): ("seed", int),
}


def _parser():
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    return parser


def parse_config(text, source="<string>"):
    """ RunConfig from key/value text

    Raises:
        ConfigError: unknown section or key, malformed value
    """
    parser = _parser()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as error:
        raise ConfigError("Error parsing config file {}: {}".format(source, str(error)))
    known = {section for section, _ in OPTIONS}
    changes = {}
    for section in parser.sections():
        if section not in known:
            raise ConfigError("Unknown section [{}] in {}".format(section, source))
        for option, text_value in parser.items(section):
            if (section, option) not in OPTIONS:
                raise ConfigError("Unknown key {} in section [{}] of {}".format(option, section, source))
            attribute, convert = OPTIONS[(section, option)]
            try:
                changes[attribute] = convert(text_value)
            except (ValueError, ConfigError) as error:
                raise ConfigError("Error parsing {}.{} in {}: {}".format(section, option, source, str(error)))
    return replace(RunConfig(), **changes).validate()


def load_config(path):
    """ Load configuration file

    Args:
        path: config file path
    Returns:
        RunConfig
    Raises:
        ConfigError: missing, unreadable or malformed file
    """
    if path is None or len(str(path)) <= 0:
        raise ConfigError("Config path cannot be empty.")
    if not os.path.isfile(path):
        raise ConfigError("Config file {} does not exist".format(path))
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as error:
        raise ConfigError("Error loading config file {}: {}".format(path, str(error)))
    return parse_config(text, path)


def dumps_config(config):
    """ Key/value text that parse_config reads back """
    parser = _parser()
    for (section, option), (attribute, _) in OPTIONS.items():
        if not parser.has_section(section):
            parser.add_section(section)
        value = getattr(config, attribute)
        if attribute in ("omega", "omega0"):
            text = format_box(value)
        else:
            text = _show(value)
        parser.set(section, option, text)
    lines = []
    for section in parser.sections():
        lines.append("[{}]".format(section))
        lines.extend("{} = {}".format(option, value) for option, value in parser.items(section))
        lines.append("")
    return "\n".join(lines)


def save_config(path, config):
    """ Save configuration file

    Raises:
        ConfigError: file cannot be written
    """
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(dumps_config(config))
    except OSError as error:
        raise ConfigError("Error saving config file {}: {}".format(path, str(error)))
    return path
