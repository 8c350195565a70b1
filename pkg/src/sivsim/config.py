"""Experiment configuration documents.

A config is a line-oriented text file::

    # comment
    [system]
    preset = mw
    b_mag = 1.6 kG
    alpha = aligned
    temperature = 100 mK

    [noise]
    type = preset
    name = tutorial

    [experiment]
    type = cpmg
    n_pulses = 1, 2, 4
    total_times = linspace(0.1 ms, 2 ms, 20)

    [run]
    seed = 1
    shots = 400

Numbers take an optional SI unit that is converted to base units (Hz, s,
K, G, deg, rad/s). Lists are comma separated; ``linspace(a, b, n)`` and
``geomspace(a, b, n)`` expand to grids. ``[noise]`` may repeat; every
other section appears at most once.

:func:`dump_canonical` writes a config back in a fixed key order with every
number in base units and shortest round-trip form, so that dumping is a
fixed point of parse-then-dump.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import defaults, noise
from .model import FieldConfig, SivParams

# unit -> (dimension, factor to base unit)
UNITS = {
    "GHz": ("Hz", 1e9), "MHz": ("Hz", 1e6), "kHz": ("Hz", 1e3), "Hz": ("Hz", 1.0),
    "s": ("s", 1.0), "ms": ("s", 1e-3), "us": ("s", 1e-6), "ns": ("s", 1e-9),
    "K": ("K", 1.0), "mK": ("K", 1e-3),
    "G": ("G", 1.0), "kG": ("G", 1e3),
    "deg": ("deg", 1.0),
    "rad/s": ("rad/s", 1.0), "krad/s": ("rad/s", 1e3), "Mrad/s": ("rad/s", 1e6),
}

EXPERIMENT_TYPES = ("odmr", "rabi", "ramsey", "cpmg", "t1", "pumping", "readout_histogram", "ple")
NOISE_TYPES = ("ou", "quasistatic", "tabulated", "single_c13", "preset")
NOISE_PRESETS = ("natural_abundance", "slow_ou", "tutorial")


class ConfigError(ValueError):
    """Base class of config diagnostics; ``code`` names the kind, ``line`` the 1-based line."""

    code = "config_error"

    def __init__(self, message, line=None):
        self.line = line
        self.message = message
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")

    def to_dict(self):
        return {"error": self.code, "line": self.line, "message": self.message}


class ConfigSyntaxError(ConfigError):
    code = "syntax"


class UnknownKeyError(ConfigError):
    code = "unknown_key"


class UnitError(ConfigError):
    code = "bad_unit"


class MissingSectionError(ConfigError):
    code = "missing_section"


class ConfigValueError(ConfigError):
    code = "bad_value"


class MissingFileError(ConfigError):
    code = "missing_file"


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Key:
    """One config key: value kind, physical dimension, default, allowed words."""

    kind: str  # float | int | str | bool | floats | ints | path
    dim: str = ""
    default: object = None
    choices: tuple = ()
    words: tuple = ()  # symbolic values allowed for numbers, e.g. "aligned"


_PARAM_DIMS = {
    "lambda_so": "Hz", "strain_x": "Hz", "strain_y": "Hz", "g_spin": "", "q_orbital": "",
    "lambda_so_es": "Hz", "strain_x_es": "Hz", "strain_y_es": "Hz", "g_spin_es": "",
    "q_orbital_es": "", "tau_optical": "s", "tau_ub": "s", "gamma0_phonon": "Hz",
    "branch_ub": "", "gamma_t1": "Hz", "delta_g": "", "r_max": "Hz", "offres_fraction": "",
    "eta_collect": "",
}

SYSTEM_KEYS = {
    "preset": Key("str", default="optical", choices=("optical", "mw")),
    "b_mag": Key("float", "G", 0.0),
    "alpha": Key("float", "deg", 0.0, words=("aligned",)),
    "temperature": Key("float", "K", 0.1),
    **{name: Key("float", dim) for name, dim in _PARAM_DIMS.items()},
}

NOISE_KEYS = {
    "ou": {"sigma": Key("float", "rad/s"), "tau_c": Key("float", "s")},
    "quasistatic": {"sigma": Key("float", "rad/s"), "t2star": Key("float", "s")},
    "tabulated": {"file": Key("path")},
    "single_c13": {"a_par": Key("float", "Hz"), "a_perp": Key("float", "Hz"), "b_mag": Key("float", "G")},
    "preset": {"name": Key("str", choices=NOISE_PRESETS)},
}

_COMMON_SEQ = {
    "init": Key("float", "s"),
    "readout": Key("float", "s"),
    "qubit_init": Key("str", default="up", choices=("up", "down")),
}

EXPERIMENT_KEYS = {
    "odmr": {"tau_mw": Key("float", "s"), "f_center": Key("float", "Hz", words=("auto",)),
             "f_span": Key("float", "Hz"), "n_points": Key("int"), "rabi": Key("float", "Hz"),
             **_COMMON_SEQ},
    "rabi": {"durations": Key("floats", "s"), "rabi": Key("float", "Hz"),
             "detuning": Key("float", "Hz", 0.0), **_COMMON_SEQ},
    "ramsey": {"delays": Key("floats", "s"), "detuning": Key("float", "Hz"),
               "rabi": Key("float", "Hz"), "ideal": Key("bool", default=False), **_COMMON_SEQ},
    "cpmg": {"n_pulses": Key("ints"), "total_times": Key("floats", "s"),
             "time_scaling": Key("float", default=0.0), "rabi": Key("float", "Hz"),
             "ideal": Key("bool", default=False), "fit_exponent": Key("float", words=("free",)),
             **_COMMON_SEQ},
    "t1": {"waits": Key("floats", "s"), **_COMMON_SEQ},
    "pumping": {"alphas": Key("floats", "deg"), "b_mags": Key("floats", "G"),
                "saturation": Key("float", default=defaults.PUMP_SATURATION),
                "transition": Key("str", default="down", choices=("down", "up"))},
    "readout_histogram": {"window": Key("float", "s", defaults.READOUT_WINDOW),
                          "saturation": Key("float", default=defaults.READOUT_SATURATION),
                          "spin_flips": Key("bool", default=True)},
    "ple": {"temperatures": Key("floats", "K"), "linewidth": Key("float", "Hz", 5e9),
            "rel_noise": Key("float", default=0.0), "spectrum_points": Key("int", default=0)},
}

_REQUIRED = {
    "odmr": ("tau_mw", "f_span", "n_points"),
    "rabi": ("durations", "rabi"),
    "ramsey": ("delays", "detuning"),
    "cpmg": ("n_pulses", "total_times"),
    "t1": ("waits",),
    "pumping": (),
    "readout_histogram": (),
    "ple": ("temperatures",),
    "ou": ("sigma", "tau_c"),
    "quasistatic": (),
    "tabulated": ("file",),
    "single_c13": ("a_par", "a_perp", "b_mag"),
    "preset": ("name",),
}

RUN_KEYS = {
    "seed": Key("int", default=0),
    "shots": Key("int", default=100),
    "workers": Key("int", default=1),
    "out": Key("str"),
    "dt": Key("float", "s"),
    "readout": Key("str", default="counts", choices=("counts", "projective")),
    "threshold": Key("int", default=1),
    "pulse_error": Key("float", default=0.0),
    "phonon_dephasing": Key("bool", default=True),
    "plot": Key("bool", default=True),
}

SECTIONS = ("system", "noise", "experiment", "run")


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QTY = re.compile(rf"^({_NUM})\s*([A-Za-z/]+)?$")
_GRID = re.compile(r"^(linspace|geomspace)\((.*)\)$")


def parse_quantity(text, dim, line=None):
    """Number with optional unit, converted to the base unit of ``dim``."""
    m = _QTY.match(text.strip())
    if not m:
        raise ConfigValueError(f"not a number: {text!r}", line)
    value, unit = float(m.group(1)), m.group(2)
    if unit is None:
        return value
    if unit not in UNITS:
        raise UnitError(f"unknown unit {unit!r} in {text!r}", line)
    udim, factor = UNITS[unit]
    if udim != dim:
        expected = f"a {dim} quantity" if dim else "a dimensionless number"
        raise UnitError(f"unit {unit!r} does not fit {expected}", line)
    return value * factor


def _split_args(text):
    return [a.strip() for a in text.split(",") if a.strip()]


def _parse_floats(text, dim, line):
    m = _GRID.match(text.strip())
    if m:
        args = _split_args(m.group(2))
        if len(args) != 3:
            raise ConfigValueError(f"{m.group(1)} takes (start, stop, n), got {text!r}", line)
        a, b = (parse_quantity(x, dim, line) for x in args[:2])
        n = _parse_int(args[2], line)
        if n < 1:
            raise ConfigValueError("grid needs n >= 1", line)
        if m.group(1) == "geomspace" and not (a > 0 and b > 0):
            raise ConfigValueError("geomspace needs positive endpoints", line)
        grid = np.linspace(a, b, n) if m.group(1) == "linspace" else np.geomspace(a, b, n)
        return tuple(float(v) for v in grid)
    items = _split_args(text)
    if not items:
        raise ConfigValueError("empty list", line)
    return tuple(parse_quantity(x, dim, line) for x in items)


def _parse_int(text, line):
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigValueError(f"not an integer: {text!r}", line) from None


def _parse_value(name, key: Key, text, line):
    text = text.strip()
    if key.words and text in key.words:
        return text
    if key.kind == "float":
        return parse_quantity(text, key.dim, line)
    if key.kind == "int":
        return _parse_int(text, line)
    if key.kind == "bool":
        low = text.lower()
        if low not in ("true", "false", "yes", "no", "on", "off"):
            raise ConfigValueError(f"{name} must be true or false, got {text!r}", line)
        return low in ("true", "yes", "on")
    if key.kind == "floats":
        return _parse_floats(text, key.dim, line)
    if key.kind == "ints":
        return tuple(_parse_int(x, line) for x in _split_args(text))
    if key.kind in ("str", "path"):
        if not text:
            raise ConfigValueError(f"{name} is empty", line)
        if key.choices and text not in key.choices:
            raise ConfigValueError(f"{name} must be one of {', '.join(key.choices)}; got {text!r}", line)
        return text
    raise AssertionError(key.kind)


def format_value(v):
    """Canonical text of a parsed value."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(format_value(x) for x in v)
    return str(v)


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Parsed config: one dict of explicit keys per section, noise blocks as a list.

    Only keys present in the text are stored, so the canonical dump echoes
    the user's choices; defaults are applied when the objects are built.
    ``base_dir`` anchors relative file paths and takes no part in equality.
    """

    system: dict
    experiment: dict
    noise: list = field(default_factory=list)
    run: dict = field(default_factory=dict)
    base_dir: Optional[Path] = field(default=None, compare=False)

    @property
    def kind(self):
        return self.experiment["type"]

    def run_value(self, name):
        return self.run.get(name, RUN_KEYS[name].default)

    def exp_value(self, name):
        return self.experiment.get(name, EXPERIMENT_KEYS[self.kind][name].default)

    # -- builders -----------------------------------------------------------
    def params(self) -> SivParams:
        overrides = {k: v for k, v in self.system.items() if k in _PARAM_DIMS}
        return SivParams.preset(self.system.get("preset", "optical"), **overrides)

    def field_config(self) -> FieldConfig:
        alpha = self.system.get("alpha", 0.0)
        if alpha == "aligned":
            alpha = defaults.ALIGNED_ALPHA
        return FieldConfig(self.system.get("b_mag", 0.0), alpha)

    @property
    def temperature(self):
        return self.system.get("temperature", SYSTEM_KEYS["temperature"].default)

    def noise_models(self):
        out = []
        for block in self.noise:
            t = block["type"]
            if t == "ou":
                out.append(noise.OU(block["sigma"], block["tau_c"]))
            elif t == "quasistatic":
                if "sigma" in block:
                    out.append(noise.QuasiStatic(block["sigma"]))
                else:
                    out.append(noise.QuasiStatic(np.sqrt(2.0) / block["t2star"]))
            elif t == "tabulated":
                out.append(noise.load_spectrum(self.resolve(block["file"])))
            elif t == "single_c13":
                out.append(noise.SingleC13(block["a_par"], block["a_perp"], block["b_mag"]))
            else:
                out.append(noise.preset(block["name"]))
        return out

    def resolve(self, path):
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p


def _check_block(section, block, required, header_line):
    for k in required:
        if k not in block:
            raise ConfigValueError(f"[{section}] of type {block.get('type', '?')!r} needs key {k!r}",
                                   header_line)
    if section == "noise" and block["type"] == "quasistatic" and ("sigma" in block) == ("t2star" in block):
        raise ConfigValueError("quasistatic noise needs exactly one of sigma, t2star", header_line)


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    """Parse a config document; see the module docstring for the format.

    Raises a :class:`ConfigError` subclass carrying the line number.
    """
    base_dir = Path(base_dir) if base_dir is not None else None
    sections = []  # (name, header line, {key: (raw, line)})
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigSyntaxError(f"malformed section header {raw.strip()!r}", lineno)
            name = line[1:-1].strip()
            if name not in SECTIONS:
                raise UnknownKeyError(f"unknown section [{name}]; expected one of "
                                      f"{', '.join(SECTIONS)}", lineno)
            if name != "noise" and any(s[0] == name for s in sections):
                raise ConfigSyntaxError(f"section [{name}] appears twice", lineno)
            current = (name, lineno, {})
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigSyntaxError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if current is None:
            raise ConfigSyntaxError("key outside of any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in current[2]:
            raise ConfigSyntaxError(f"key {key!r} given twice in [{current[0]}]", lineno)
        current[2][key] = (value, lineno)

    names = [s[0] for s in sections]
    for required in ("system", "experiment"):
        if required not in names:
            raise MissingSectionError(f"missing section [{required}]", None)

    out = {"system": {}, "experiment": {}, "noise": [], "run": {}}
    for name, header, items in sections:
        if name == "system":
            out["system"] = _parse_keys(name, items, SYSTEM_KEYS)
        elif name == "run":
            out["run"] = _parse_keys(name, items, RUN_KEYS)
        else:
            types = EXPERIMENT_TYPES if name == "experiment" else NOISE_TYPES
            table = EXPERIMENT_KEYS if name == "experiment" else NOISE_KEYS
            if "type" not in items:
                raise ConfigValueError(f"[{name}] needs a 'type' key", header)
            t, tline = items["type"]
            if t not in types:
                raise ConfigValueError(f"unknown {name} type {t!r}; expected one of {', '.join(types)}", tline)
            rest = {k: v for k, v in items.items() if k != "type"}
            block = {"type": t, **_parse_keys(f"{name}:{t}", rest, table[t])}
            _check_block(name, block, _REQUIRED[t], header)
            if name == "noise" and t == "tabulated":
                p = Path(block["file"])
                full = p if p.is_absolute() or base_dir is None else base_dir / p
                if not full.is_file():
                    raise MissingFileError(f"spectrum file not found: {full}", items["file"][1])
            if name == "experiment":
                out["experiment"] = block
            else:
                out["noise"].append(block)
    cfg = ExperimentConfig(out["system"], out["experiment"], out["noise"], out["run"], base_dir)
    _validate(cfg, {n: h for n, h, _ in sections})
    return cfg


def _parse_keys(section, items, keys):
    block = {}
    for k, (raw, line) in items.items():
        if k not in keys:
            raise UnknownKeyError(f"unknown key {k!r} in [{section.split(':')[0]}]"
                                  + (f" of type {section.split(':')[1]!r}" if ":" in section else ""), line)
        block[k] = _parse_value(k, keys[k], raw, line)
    return block


def _validate(cfg: ExperimentConfig, headers):
    """Build the physical objects once so that bad values surface at parse time."""
    try:
        cfg.params()
        cfg.field_config()
    except ValueError as exc:
        raise ConfigValueError(str(exc), headers.get("system")) from None
    if not cfg.temperature > 0:
        raise ConfigValueError("temperature must be > 0", headers.get("system"))
    for k in ("shots", "workers"):
        if cfg.run_value(k) < 1:
            raise ConfigValueError(f"{k} must be >= 1", headers.get("run"))
    e = cfg.experiment
    if e["type"] == "pumping" and ("alphas" in e) != ("b_mags" in e):
        raise ConfigValueError("pumping needs both alphas and b_mags, or neither", headers["experiment"])
    if e["type"] == "pumping" and "alphas" in e and len(e["alphas"]) != len(e["b_mags"]):
        raise ConfigValueError("alphas and b_mags must have equal length", headers["experiment"])
    if e["type"] == "cpmg" and any(n < 1 for n in e["n_pulses"]):
        raise ConfigValueError("n_pulses must be >= 1", headers["experiment"])


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def _block_lines(block, keys):
    lines = []
    if "type" in block:
        lines.append(f"type = {block['type']}")
    for k in keys:
        if k in block:
            lines.append(f"{k} = {format_value(block[k])}")
    return lines


def dump_canonical(cfg: ExperimentConfig) -> str:
    """Canonical text: fixed section and key order, base units, shortest float repr."""
    out = ["[system]"] + _block_lines(cfg.system, SYSTEM_KEYS)
    for block in cfg.noise:
        out += ["", "[noise]"] + _block_lines(block, NOISE_KEYS[block["type"]])
    out += ["", "[experiment]"] + _block_lines(cfg.experiment, EXPERIMENT_KEYS[cfg.kind])
    if cfg.run:
        out += ["", "[run]"] + _block_lines(cfg.run, RUN_KEYS)
    return "\n".join(out) + "\n"
