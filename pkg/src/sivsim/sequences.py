"""Pulse-sequence representation and builders for the standard experiments.

A :class:`PulseSequence` is a list of segments plus one sweep axis. The sweep
axis maps each sweep value ``v`` onto one or more segment fields as
``scale * v + offset`` so that, for instance, a CPMG total time moves every
inter-pulse delay at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Union

import numpy as np

from .rng import label_id

LASER_TRANSITIONS = ("down", "up")
LASER_ROLES = ("initialize", "readout", "repump")
# ODMR uses a 15 ms init and 2 ms readout; the coherent-control sequences use
# a ~100 ms init and ~15 ms readout.
ODMR_INIT = 15e-3
ODMR_READOUT = 2e-3
DEFAULT_INIT = 100e-3
DEFAULT_READOUT = 15e-3
DEFAULT_RABI = 10e6


@dataclass(frozen=True)
class MwPulse:
    """Resonant-frame microwave pulse.

    With ``duration == 0`` and ``angle`` set the pulse is an ideal,
    instantaneous rotation by ``angle`` about the ``phase`` axis.
    """

    rabi: float
    detuning: float = 0.0
    phase: float = 0.0
    duration: float = 0.0
    angle: Optional[float] = None

    def __post_init__(self):
        if self.duration < 0 or self.rabi < 0:
            raise ValueError("MwPulse needs duration >= 0 and rabi >= 0")

    @property
    def ideal(self):
        return self.duration == 0 and self.angle is not None


@dataclass(frozen=True)
class LaserPulse:
    transition: str = "down"
    saturation: float = 1.0
    duration: float = DEFAULT_READOUT
    role: str = "readout"

    def __post_init__(self):
        if self.transition not in LASER_TRANSITIONS:
            raise ValueError(f"laser transition must be one of {LASER_TRANSITIONS}")
        if self.role not in LASER_ROLES:
            raise ValueError(f"laser role must be one of {LASER_ROLES}")
        if self.duration < 0 or self.saturation < 0:
            raise ValueError("LaserPulse needs duration >= 0 and saturation >= 0")


@dataclass(frozen=True)
class Wait:
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("Wait duration must be >= 0")


Segment = Union[MwPulse, LaserPulse, Wait]
SEGMENT_TAGS = {MwPulse: "mw", LaserPulse: "laser", Wait: "wait"}


@dataclass(frozen=True)
class SweepTarget:
    segment: int
    attr: str
    scale: float = 1.0
    offset: float = 0.0


@dataclass(frozen=True)
class Sweep:
    name: str
    values: tuple
    targets: tuple = ()
    unit: str = ""


@dataclass(frozen=True)
class PulseSequence:
    kind: str
    segments: tuple
    sweep: Sweep
    shots_per_point: int = 100
    qubit_init: str = "up"
    carrier: Optional[float] = None  # absolute MW frequency (Hz) the detunings refer to
    extra: tuple = ()  # kind-specific (key, value) pairs

    def __post_init__(self):
        if self.shots_per_point < 1:
            raise ValueError("shots_per_point must be >= 1")
        if self.qubit_init not in ("up", "down"):
            raise ValueError("qubit_init must be 'up' or 'down'")
        n_read = sum(isinstance(s, LaserPulse) and s.role == "readout" for s in self.segments)
        if n_read != 1:
            raise ValueError(f"a sequence needs exactly one readout laser pulse, found {n_read}")
        for t in self.sweep.targets:
            if not 0 <= t.segment < len(self.segments):
                raise ValueError(f"sweep target references segment {t.segment}, "
                                 f"sequence has {len(self.segments)}")
            seg = self.segments[t.segment]
            if t.attr not in {f.name for f in fields(seg)}:
                raise ValueError(f"sweep target: {type(seg).__name__} has no field {t.attr!r}")
        for i, v in enumerate(self.sweep.values):
            try:
                self.at(v)
            except ValueError as exc:
                raise ValueError(f"sweep point {i} ({self.sweep.name} = {v!r}): {exc}") from None

    @property
    def options(self):
        return dict(self.extra)

    def at(self, value):
        """Concrete segment list at one sweep value."""
        segs = list(self.segments)
        for t in self.sweep.targets:
            new = t.scale * value + t.offset
            if t.attr == "duration" and new < -1e-15:
                raise ValueError(f"segment {t.segment} would get negative duration {new:.6g} s")
            segs[t.segment] = replace(segs[t.segment], **{t.attr: max(new, 0.0) if t.attr == "duration" else new})
        return segs

    def point_id(self, value):
        """Stream key of a sweep point; depends on the value, not its position."""
        return label_id(f"{self.kind}:{self.sweep.name}={float(value)!r}")

    def with_shots(self, n):
        return replace(self, shots_per_point=int(n))


def _fmt(v):
    if isinstance(v, str):
        return v
    if v is None:
        return "none"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def dump_sequence(seq: PulseSequence) -> str:
    """Canonical text form (stable across runs; floats in shortest round-trip form)."""
    lines = [f"sequence {seq.kind}",
             f"qubit_init {seq.qubit_init}",
             f"shots_per_point {seq.shots_per_point}",
             f"carrier {_fmt(seq.carrier)}"]
    for k, v in seq.extra:
        lines.append(f"option {k} {_fmt(v) if not isinstance(v, tuple) else ' '.join(_fmt(x) for x in v)}")
    for i, s in enumerate(seq.segments):
        attrs = " ".join(f"{f.name}={_fmt(getattr(s, f.name))}" for f in fields(s))
        lines.append(f"segment {i} {SEGMENT_TAGS[type(s)]} {attrs}")
    sw = seq.sweep
    lines.append(f"sweep {sw.name} unit={sw.unit or '-'}")
    for t in sw.targets:
        lines.append(f"  target segment={t.segment} attr={t.attr} scale={_fmt(t.scale)} offset={_fmt(t.offset)}")
    lines.append("  values " + " ".join(_fmt(v) for v in sw.values))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _init_pulse(qubit_init, duration, saturation=1.0):
    # driving the down line pumps into up, and vice versa
    return LaserPulse("down" if qubit_init == "up" else "up", saturation, duration, "initialize")


def _readout_pulse(duration, saturation=1.0):
    return LaserPulse("down", saturation, duration, "readout")


def build_odmr(tau_mw, f_center, f_span, n_points, rabi=None, init=ODMR_INIT,
               readout=ODMR_READOUT, shots=100, qubit_init="up"):
    """Pulsed ODMR: init laser, MW pulse of length ``tau_mw`` at a swept frequency, readout.

    The default drive is a pi pulse on resonance (rabi = 1 / (2 tau_mw)).
    Sweep values are detunings from ``f_center``.
    """
    if n_points < 2:
        raise ValueError("ODMR needs at least 2 frequency points")
    if tau_mw <= 0 or f_span <= 0:
        raise ValueError("ODMR needs tau_mw > 0 and f_span > 0")
    rabi = 0.5 / tau_mw if rabi is None else rabi
    segs = (_init_pulse(qubit_init, init), MwPulse(rabi, 0.0, 0.0, tau_mw), _readout_pulse(readout))
    det = tuple(float(d) for d in np.linspace(-f_span / 2, f_span / 2, n_points))
    sweep = Sweep("detuning", det, (SweepTarget(1, "detuning"),), "Hz")
    return PulseSequence("odmr", segs, sweep, shots, qubit_init, carrier=float(f_center))


def build_rabi(durations, rabi, detuning=0.0, init=DEFAULT_INIT, readout=DEFAULT_READOUT,
               shots=100, qubit_init="up"):
    """Rabi nutation: MW pulse of swept duration between init and readout."""
    segs = (_init_pulse(qubit_init, init), MwPulse(rabi, detuning, 0.0, 0.0), _readout_pulse(readout))
    sweep = Sweep("duration", tuple(float(d) for d in durations), (SweepTarget(1, "duration"),), "s")
    return PulseSequence("rabi", segs, sweep, shots, qubit_init)


def build_ramsey(delays, detuning, rabi=DEFAULT_RABI, init=DEFAULT_INIT, readout=DEFAULT_READOUT,
                 shots=100, qubit_init="up", ideal=False):
    """Ramsey: pi/2 - delay - pi/2 with the drive detuned by ``detuning``.

    Delays are free-evolution times between the end of the first and the
    start of the second pulse; with ``ideal=True`` the pulses are
    instantaneous.
    """
    t2 = 0.0 if ideal else 0.25 / rabi
    half = MwPulse(0.0 if ideal else rabi, detuning, 0.0, t2, np.pi / 2 if ideal else None)
    segs = (_init_pulse(qubit_init, init), half, Wait(0.0), half, _readout_pulse(readout))
    sweep = Sweep("delay", tuple(float(d) for d in delays), (SweepTarget(2, "duration"),), "s")
    return PulseSequence("ramsey", segs, sweep, shots, qubit_init)


def build_cpmg(n_pulses, total_times, rabi=DEFAULT_RABI, init=DEFAULT_INIT, readout=DEFAULT_READOUT,
               shots=100, qubit_init="up", ideal=False):
    """CPMG-N: pi/2_x - [tau/2 - pi_y - tau/2]^N - pi/2_x with tau = T / N.

    ``T`` runs between the centres of the two pi/2 pulses; finite pulse
    durations are deducted from the adjacent delays.
    """
    if n_pulses < 1:
        raise ValueError("CPMG needs n_pulses >= 1")
    t_half = 0.0 if ideal else 0.25 / rabi
    t_pi = 0.0 if ideal else 0.5 / rabi
    r = 0.0 if ideal else rabi
    half = MwPulse(r, 0.0, 0.0, t_half, np.pi / 2 if ideal else None)
    pi_y = MwPulse(r, 0.0, np.pi / 2, t_pi, np.pi if ideal else None)
    segs = [_init_pulse(qubit_init, init), half]
    targets = []
    edge_off = -0.5 * (t_half + t_pi)
    for k in range(n_pulses):
        segs.append(Wait(0.0))
        if k == 0:
            targets.append(SweepTarget(len(segs) - 1, "duration", 0.5 / n_pulses, edge_off))
        else:
            targets.append(SweepTarget(len(segs) - 1, "duration", 1.0 / n_pulses, -t_pi))
        segs.append(pi_y)
    segs.append(Wait(0.0))
    targets.append(SweepTarget(len(segs) - 1, "duration", 0.5 / n_pulses, edge_off))
    segs += [half, _readout_pulse(readout)]
    totals = tuple(float(t) for t in total_times)
    min_total = n_pulses * t_pi + t_half
    for t in totals:
        if t < min_total * (1 - 1e-12):
            raise ValueError(f"total time {t:.6g} s is shorter than the pulses it contains "
                             f"({min_total:.6g} s)")
    sweep = Sweep("total_time", totals, tuple(targets), "s")
    return PulseSequence("cpmg", tuple(segs), sweep, shots, qubit_init, extra=(("n_pulses", int(n_pulses)),))


def build_t1(waits, init=DEFAULT_INIT, readout=DEFAULT_READOUT, shots=100, qubit_init="up"):
    """Relaxation: init, swept dark wait, readout."""
    segs = (_init_pulse(qubit_init, init), Wait(0.0), _readout_pulse(readout))
    sweep = Sweep("wait", tuple(float(w) for w in waits), (SweepTarget(1, "duration"),), "s")
    return PulseSequence("t1", segs, sweep, shots, qubit_init)


def build_pumping(cases, saturation=1.0, shots=2000, transition="down"):
    """Optical pumping under a continuous laser for each ``(alpha, b_mag)`` case.

    The sweep value is the case index; each point records first-passage
    times into the dark spin state.
    """
    cases = tuple((float(a), float(b)) for a, b in cases)
    if not cases:
        raise ValueError("no pumping cases given")
    segs = (LaserPulse(transition, saturation, 0.0, "readout"),)
    sweep = Sweep("case", tuple(float(i) for i in range(len(cases))), (), "")
    extra = (("alpha", tuple(a for a, _ in cases)), ("b_mag", tuple(b for _, b in cases)))
    return PulseSequence("pumping", segs, sweep, shots, "up" if transition == "down" else "down", extra=extra)
