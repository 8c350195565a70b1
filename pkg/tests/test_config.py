"""Experiment config parsing, diagnostics and canonical dumps."""
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

import sivsim
from sivsim.config import (
    ConfigSyntaxError, ConfigValueError, MissingFileError, MissingSectionError, UnitError, UnknownKeyError,
    dump_canonical, load_config, parse_config, parse_quantity,
)
from sivsim.noise import OU, QuasiStatic, Tabulated

CONFIG_DIR = Path(sivsim.__file__).parent / "configs"
SHIPPED = sorted(CONFIG_DIR.glob("*.cfg"))
GOLDEN = Path(__file__).parent / "golden"

MINIMAL = """\
[system]
preset = mw
b_mag = 1.6 kG

[experiment]
type = t1
waits = 1 ms, 2 ms
"""


def with_lines(*extra):
    return MINIMAL + "\n".join(extra) + "\n"


# --- quantities -------------------------------------------------------------

@pytest.mark.parametrize("text,dim,value", [
    ("2.7 kG", "G", 2700.0), ("100 mK", "K", 0.1), ("13 ms", "s", 13e-3), ("500us", "s", 500e-6),
    ("48 GHz", "Hz", 48e9), ("2 Mrad/s", "rad/s", 2e6), ("1.5e-3", "", 1.5e-3), ("-3 kHz", "Hz", -3e3),
])
def test_units(text, dim, value):
    assert parse_quantity(text, dim) == pytest.approx(value, rel=1e-15)


def test_unit_errors():
    with pytest.raises(UnitError):
        parse_quantity("3 furlongs", "s")
    with pytest.raises(UnitError):
        parse_quantity("3 ms", "G")
    with pytest.raises(ConfigValueError):
        parse_quantity("three", "s")


@given(st.floats(1e-6, 1e6), st.sampled_from(["ms", "us", "ns", "s"]))
def test_quantity_round_trip(v, unit):
    factor = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}[unit]
    assert parse_quantity(f"{v!r} {unit}", "s") == pytest.approx(v * factor, rel=1e-15)


# --- documents --------------------------------------------------------------

def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.kind == "t1"
    assert cfg.experiment["waits"] == (1e-3, 2e-3)
    assert cfg.run_value("seed") == 0
    assert cfg.run_value("shots") == 100
    assert cfg.field_config().b_mag == 1600.0
    assert cfg.noise_models() == []


def test_grids():
    cfg = parse_config(MINIMAL.replace("1 ms, 2 ms", "geomspace(1 ms, 100 ms, 3)"))
    assert cfg.experiment["waits"] == pytest.approx((1e-3, 1e-2, 1e-1))
    cfg = parse_config(MINIMAL.replace("1 ms, 2 ms", "linspace(0 s, 1 ms, 5)"))
    assert cfg.experiment["waits"][-1] == 1e-3 and len(cfg.experiment["waits"]) == 5


def test_noise_blocks():
    cfg = parse_config(with_lines("[noise]", "type = ou", "sigma = 100 krad/s", "tau_c = 10 ms",
                                  "[noise]", "type = quasistatic", "t2star = 1.5 us",
                                  "[noise]", "type = preset", "name = tutorial"))
    ou, qs, tab = cfg.noise_models()
    assert isinstance(ou, OU) and ou.sigma == 1e5 and ou.tau_c == 1e-2
    assert isinstance(qs, QuasiStatic)
    assert isinstance(tab, Tabulated)


@pytest.mark.parametrize("text,exc,line", [
    (MINIMAL + "[run]\nseed 3\n", ConfigSyntaxError, 9),
    (MINIMAL + "[run]\nsed = 3\n", UnknownKeyError, 9),
    (MINIMAL + "[runs]\n", UnknownKeyError, 8),
    (MINIMAL + "[run\n", ConfigSyntaxError, 8),
    (MINIMAL + "[system]\n", ConfigSyntaxError, 8),
    (MINIMAL.replace("1.6 kG", "1.6 ms"), UnitError, 3),
    (MINIMAL.replace("type = t1", "type = t3"), ConfigValueError, 6),
    ("[experiment]\ntype = t1\nwaits = 1 ms\n", MissingSectionError, None),
    ("[system]\npreset = mw\n", MissingSectionError, None),
    (MINIMAL + "[noise]\ntype = tabulated\nfile = missing.txt\n", MissingFileError, 10),
    (MINIMAL + "[run]\nshots = 0\n", ConfigValueError, 8),
    (MINIMAL + "[run]\nreadout = telepathy\n", ConfigValueError, 9),
    ("x = 1\n" + MINIMAL, ConfigSyntaxError, 1),
    (MINIMAL + "waits = 3 ms\n", ConfigSyntaxError, 8),
])
def test_error_kinds_and_lines(text, exc, line):
    with pytest.raises(exc) as info:
        parse_config(text, base_dir=".")
    assert info.value.line == line
    d = info.value.to_dict()
    assert d["error"] == exc.code and d["line"] == line


def test_quasistatic_needs_exactly_one_width():
    with pytest.raises(ConfigValueError):
        parse_config(with_lines("[noise]", "type = quasistatic", "sigma = 1 Mrad/s", "t2star = 1 us"))
    with pytest.raises(ConfigValueError):
        parse_config(with_lines("[noise]", "type = quasistatic"))


def test_missing_required_key():
    with pytest.raises(ConfigValueError, match="waits"):
        parse_config("[system]\npreset = mw\n[experiment]\ntype = t1\n")


def test_bad_physical_values_surface_at_parse_time():
    with pytest.raises(ConfigValueError):
        parse_config(MINIMAL.replace("b_mag = 1.6 kG", "b_mag = 1.6 kG\ntemperature = 0 K"))


# --- shipped configs and canonical form -------------------------------------

def test_shipped_configs_present():
    names = {p.stem for p in SHIPPED}
    assert names == {"fig1c_ple", "fig1d_boltzmann", "fig2d_pumping", "fig2e_readout", "fig3b_odmr",
                     "fig3c_rabi", "fig3d_ramsey", "fig4_cpmg"}


@pytest.mark.parametrize("path", SHIPPED, ids=[p.stem for p in SHIPPED])
def test_canonical_dump_is_a_fixed_point(path):
    once = dump_canonical(load_config(path))
    twice = dump_canonical(parse_config(once, base_dir=path.parent))
    assert once == twice


def test_golden_canonical_dump():
    got = dump_canonical(load_config(CONFIG_DIR / "fig4_cpmg.cfg"))
    assert got == (GOLDEN / "fig4_cpmg.canonical").read_text()


def test_comments_and_whitespace_do_not_change_canonical_form():
    noisy = "# header\n" + MINIMAL.replace("preset = mw", "  preset   =   mw   # trailing") + "\n\n"
    assert dump_canonical(parse_config(noisy)) == dump_canonical(parse_config(MINIMAL))
