"""Run a pulse sequence against the emitter model, noise models and engines.

Per sweep point and shot the runner draws the noise realisation, evolves
the qubit density matrix through the microwave and wait segments, applies
laser segments as incoherent population maps of the six-level process, and
classifies a readout photon count into a bit. Shot ``k`` of a point with id
``p`` draws everything from the stream ``(seed, p, k)``.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import engine, noise
from .constants import TWO_PI
from .model import (EX_DOWN, EX_UP, LB_DOWN, LB_UP, UB_DOWN, UB_UP, FieldConfig, SivParams,
                    level_diagram, level_graph, rate_set)
from .readout import count_distribution, expected_emissions, level_distribution
from .rng import shot_rng
from .sequences import LaserPulse, MwPulse, PulseSequence, Wait

# qubit index convention of the density-matrix engine: 0 = up, 1 = down
_SPIN_OF_LEVEL = {LB_UP: 0, UB_UP: 0, EX_UP: 0, LB_DOWN: 1, UB_DOWN: 1, EX_DOWN: 1}


@dataclass(frozen=True)
class System:
    params: SivParams
    field: FieldConfig
    temperature: float = 0.1

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")


@dataclass(frozen=True)
class RunOptions:
    """Knobs of the runner that are not part of the physics.

    ``dt`` is the noise-trace step (None: 1/4000 of the coherent duration);
    ``readout`` is ``"counts"`` (photon counts thresholded at
    ``threshold``) or ``"projective"`` (ideal spin measurement);
    ``pulse_error`` is the rms relative rotation-angle error per MW pulse;
    ``phonon_dephasing`` switches the gamma_plus dephasing channel.
    """

    dt: Optional[float] = None
    readout: str = "counts"
    threshold: int = 1
    pulse_error: float = 0.0
    phonon_dephasing: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.readout not in ("counts", "projective"):
            raise ValueError("readout must be 'counts' or 'projective'")
        if self.threshold < 0 or self.pulse_error < 0:
            raise ValueError("threshold and pulse_error must be >= 0")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class DataTable:
    columns: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError("DataTable columns must have equal length")

    def __getitem__(self, key):
        return np.asarray(self.columns[key])

    def __len__(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def to_csv(self) -> str:
        names = list(self.columns)
        rows = [",".join(names)]
        for i in range(len(self)):
            rows.append(",".join(_csv_cell(self.columns[n][i]) for n in names))
        return "\n".join(rows) + "\n"


def _csv_cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class SegmentError(RuntimeError):
    """An engine precondition failed inside a specific segment."""

    def __init__(self, index, segment, cause):
        super().__init__(f"segment {index} ({type(segment).__name__}): {cause}")
        self.index = index
        self.cause = cause


# ---------------------------------------------------------------------------
# Laser segments as population maps
# ---------------------------------------------------------------------------

def laser_transfer(system: System, laser: LaserPulse):
    """2x2 map of qubit populations (up, down) across a laser segment.

    Levels outside the lower branch are folded onto their spin at the end
    of the segment (they decay back within ~tau_ub).
    """
    rates = rate_set(system.params, system.field, system.temperature, laser.saturation, laser.transition)
    q, _ = level_graph(rates)
    out = np.zeros((2, 2))
    for row, start in ((0, LB_UP), (1, LB_DOWN)):
        p0 = np.zeros(6)
        p0[start] = 1.0
        p = level_distribution(p0, q, laser.duration)
        for lvl, spin in _SPIN_OF_LEVEL.items():
            out[row, spin] += p[lvl]
    return out / out.sum(axis=1, keepdims=True)


def readout_distributions(system: System, laser: LaserPulse):
    """Photon-count distributions for |up> and |down> at the start of the readout pulse."""
    params = system.params
    rates = rate_set(params, system.field, system.temperature, laser.saturation, laser.transition)
    q, rad = level_graph(rates)
    p_dn = np.zeros(6)
    p_dn[LB_DOWN] = 1.0
    mean = params.eta_collect * expected_emissions(p_dn, q, rad, laser.duration)
    p_up = np.zeros(6)
    p_up[LB_UP] = 1.0
    mean = max(mean, params.eta_collect * expected_emissions(p_up, q, rad, laser.duration))
    n_max = int(mean + 12 * np.sqrt(mean + 1) + 20)
    d_up, _ = count_distribution(p_up, q, rad, laser.duration, params.eta_collect, n_max)
    d_dn, _ = count_distribution(p_dn, q, rad, laser.duration, params.eta_collect, n_max)
    return d_up / d_up.sum(), d_dn / d_dn.sum()


# ---------------------------------------------------------------------------
# Noise realisations
# ---------------------------------------------------------------------------

class _ShotNoise:
    """Per-shot detuning offsets (rad/s) on a uniform grid, sample-and-hold plus integrals."""

    def __init__(self, models, system, n_shots, duration, dt, rngs):
        self.dt = dt
        self.n = int(np.ceil(duration / dt)) + 2 if duration > 0 else 2
        self.static = np.zeros(n_shots)
        self.trace = None
        sigma_g = noise.quasistatic_sigma(system.params, system.field)
        traced = [m for m in models if isinstance(m, (noise.OU, noise.Tabulated))]
        for m in models:
            if isinstance(m, noise.SingleC13):
                raise ValueError("SingleC13 coupling has no classical trace; use noise.eseem_echo")
        if traced:
            self.trace = np.zeros((n_shots, self.n))
        for k, rng in enumerate(rngs):
            if sigma_g > 0:
                self.static[k] += sigma_g * rng.standard_normal()
            for m in models:
                if isinstance(m, noise.QuasiStatic):
                    self.static[k] += m.sigma * rng.standard_normal()
                elif isinstance(m, noise.OU):
                    self.trace[k] += noise.sample_ou(m, dt, self.n, rng)
                elif isinstance(m, noise.Tabulated):
                    self.trace[k] += noise.sample_tabulated(m, dt, self.n, rng)
        if self.trace is not None:
            self.cum = np.zeros_like(self.trace)
            np.cumsum(0.5 * (self.trace[:, 1:] + self.trace[:, :-1]) * dt, axis=1, out=self.cum[:, 1:])

    def phase(self, t0, t1):
        out = self.static * (t1 - t0)
        if self.trace is not None:
            out = out + noise._interp_uniform(self.cum, self.dt, np.array([t1]))[:, 0] \
                - noise._interp_uniform(self.cum, self.dt, np.array([t0]))[:, 0]
        return out

    def hold(self, t0, duration):
        """(trace, trace_dt) for a pulse starting at ``t0``: one column per hold interval."""
        if self.trace is None or duration == 0:
            return self.static[:, None], max(duration, 1e-300)
        n_int = max(1, int(np.ceil(duration / self.dt - 1e-9)))
        times = t0 + (np.arange(n_int) + 0.5) * duration / n_int
        vals = noise._interp_uniform(self.trace, self.dt, times)
        return vals + self.static[:, None], duration / n_int


# ---------------------------------------------------------------------------
# Point simulation
# ---------------------------------------------------------------------------

def _rotation(rho, angle, phase):
    """Ideal instantaneous rotation; ``angle`` may be batched over shots."""
    angle = np.asarray(angle, dtype=float)
    wx = angle * np.cos(phase)
    wy = angle * np.sin(phase)
    u = engine._su2(wx, wy, np.zeros_like(angle), 1.0)
    return u @ rho @ engine._dag(u)


def _coherent_duration(segs):
    total = 0.0
    for s in segs:
        if isinstance(s, (MwPulse, Wait)):
            total += s.duration
    return total


def simulate_point(seq: PulseSequence, value, system: System, models=(), seed=0,
                   options: RunOptions = RunOptions(), _readout=None):
    """Simulate every shot of one sweep point; returns a result dict."""
    segs = seq.at(value)
    pid = seq.point_id(value)
    n_shots = seq.shots_per_point
    rngs = [shot_rng(seed, pid, k) for k in range(n_shots)]
    diag = level_diagram(system.params, system.field)
    carrier_offset = 0.0 if seq.carrier is None else seq.carrier - diag.f_qubit
    rates = rate_set(system.params, system.field, system.temperature, 0.0)
    gamma_phi = rates.gamma_plus if options.phonon_dephasing else 0.0
    t1_down, t1_up = rates.t1_down, rates.t1_up
    jumps = engine.qubit_jumps(t1_down, t1_up, gamma_phi)

    duration = _coherent_duration(segs)
    dt = options.dt if options.dt is not None else max(duration / 4000, 1e-12)
    try:
        shot_noise = _ShotNoise(models, system, n_shots, duration, dt, rngs)
    except ValueError as exc:
        raise SegmentError(-1, segs[0], exc) from exc

    rho = np.broadcast_to(0.5 * np.eye(2, dtype=complex), (n_shots, 2, 2)).copy()
    t = 0.0
    frame = 0.0
    readout = None
    for i, seg in enumerate(segs):
        try:
            if isinstance(seg, LaserPulse):
                if seg.role == "readout":
                    readout = seg
                    break
                m = laser_transfer(system, seg)
                pops = np.stack([rho[:, 0, 0].real, rho[:, 1, 1].real], axis=1) @ m
                rho = np.zeros_like(rho)
                rho[:, 0, 0], rho[:, 1, 1] = pops[:, 0], pops[:, 1]
            elif isinstance(seg, Wait):
                ph = TWO_PI * (frame + carrier_offset) * seg.duration + shot_noise.phase(t, t + seg.duration)
                rho = engine.free_evolution(rho, ph, seg.duration, t1_down, t1_up, gamma_phi)
                t += seg.duration
            elif isinstance(seg, MwPulse):
                frame = seg.detuning
                err = 1.0
                if options.pulse_error > 0:
                    err = 1.0 + options.pulse_error * np.array([r.standard_normal() for r in rngs])
                if seg.ideal:
                    rho = _rotation(rho, seg.angle * np.broadcast_to(err, (n_shots,)), seg.phase)
                elif seg.duration > 0:
                    trace, tdt = shot_noise.hold(t, seg.duration)
                    rho = engine.apply_mw_pulse(rho, seg.rabi * np.broadcast_to(err, (n_shots,)),
                                                seg.detuning + carrier_offset, seg.phase, seg.duration,
                                                trace, tdt, jumps)
                    t += seg.duration
        except (ValueError, FloatingPointError) as exc:
            raise SegmentError(i, seg, exc) from exc
    p_down = np.clip(rho[:, 1, 1].real, 0.0, 1.0)
    if options.readout == "projective":
        spins = np.array([r.random() for r in rngs]) < p_down
        bits = spins.astype(np.int64)
        counts = bits
    else:
        d_up, d_dn = _readout if _readout is not None else readout_distributions(system, readout)
        cdf_up, cdf_dn = np.cumsum(d_up), np.cumsum(d_dn)
        u = np.array([r.random(2) for r in rngs])
        spins = u[:, 0] < p_down
        counts = np.where(spins, np.searchsorted(cdf_dn, u[:, 1] * cdf_dn[-1], side="right"),
                          np.searchsorted(cdf_up, u[:, 1] * cdf_up[-1], side="right"))
        counts = np.minimum(counts, len(cdf_up) - 1)
        bits = (counts > options.threshold).astype(np.int64)
    mean = bits.mean()
    return {
        "point_id": pid,
        "sweep": float(value),
        "signal": float(mean),
        "error": float(np.sqrt(mean * (1 - mean) / n_shots)),
        "counts": int(counts.sum()),
        "p_down": float(p_down.mean()),
        "n_shots": n_shots,
    }


def _pumping_point(seq: PulseSequence, value, system: System, seed):
    from .model import generator

    idx = int(value)
    opts = seq.options
    fcfg = FieldConfig(opts["b_mag"][idx], opts["alpha"][idx])
    laser = seq.segments[0]
    rates = rate_set(system.params, fcfg, system.temperature, laser.saturation, laser.transition)
    q, rad = level_graph(rates)
    start, target = (LB_DOWN, LB_UP) if laser.transition == "down" else (LB_UP, LB_DOWN)
    pid = seq.point_id(value)
    times = np.empty(seq.shots_per_point)
    for k in range(seq.shots_per_point):
        rec = engine.jump_trajectory(start, q, rad, np.inf, 0.0, rng=shot_rng(seed, pid, k),
                                     stop_levels=(target,))
        times[k] = rec.final_time
    g = generator(q)
    keep = [i for i in range(6) if i != target]
    mfpt = np.linalg.solve(g[np.ix_(keep, keep)], -np.ones(5))[keep.index(start)]
    return {
        "point_id": pid,
        "sweep": float(value),
        "alpha": float(fcfg.alpha),
        "b_mag": float(fcfg.b_mag),
        "signal": float(times.mean()),
        "error": float(times.std(ddof=1) / np.sqrt(times.size)) if times.size > 1 else 0.0,
        "exact": float(mfpt),
        "n_shots": int(times.size),
    }


def _worker(args):
    seq, value, system, models, seed, options, ro = args
    if seq.kind == "pumping":
        return _pumping_point(seq, value, system, seed)
    return simulate_point(seq, value, system, models, seed, options, ro)


def run_experiment(seq: PulseSequence, system: System, models: Sequence = (), seed: int = 0,
                   options: RunOptions = RunOptions()) -> DataTable:
    """Simulate all sweep points; rows follow the sweep order of ``seq``."""
    ro = None
    if seq.kind != "pumping" and options.readout == "counts":
        laser = next(s for s in seq.segments if isinstance(s, LaserPulse) and s.role == "readout")
        ro = readout_distributions(system, laser)
    jobs = [(seq, v, system, tuple(models), seed, options, ro) for v in seq.sweep.values]
    if options.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=options.workers) as ex:
            rows = list(ex.map(_worker, jobs))
    else:
        rows = [_worker(j) for j in jobs]
    columns = {k: [r[k] for r in rows] for k in rows[0]}
    meta = {"kind": seq.kind, "sweep": seq.sweep.name, "unit": seq.sweep.unit, "seed": int(seed),
            "shots_per_point": seq.shots_per_point}
    if seq.carrier is not None:
        meta["carrier"] = float(seq.carrier)
    return DataTable(columns, meta)
