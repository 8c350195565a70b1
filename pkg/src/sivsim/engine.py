"""Numerical engines.

* Density-matrix evolution under a Hamiltonian plus Lindblad jump operators
  (fixed-step RK4 on the dense generator; dimensions are tiny).
* Continuous-time Markov jump trajectories over the six-level optical graph,
  with Bernoulli-thinned photon records.

Qubit convention: basis order ``(up, down)``, so ``sigma_z |up> = +|up>``.
Hamiltonians are given in Hz and converted to angular frequency internally.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import TWO_PI
from .rng import shot_rng

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |down><up|
SIGMA_PLUS = SIGMA_MINUS.T.copy()

KET_UP = np.array([1, 0], dtype=complex)
KET_DOWN = np.array([0, 1], dtype=complex)

MAX_STEP_PHASE = 0.05


def dm(ket) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


RHO_UP = dm(KET_UP)
RHO_DOWN = dm(KET_DOWN)


@dataclass(frozen=True)
class JumpOperator:
    matrix: np.ndarray
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"jump rate must be >= 0, got {self.rate!r}")


def qubit_jumps(t1_down=0.0, t1_up=0.0, gamma_phi=0.0):
    """Relaxation (up->down, down->up) and pure dephasing at coherence decay rate gamma_phi."""
    out = []
    if t1_down > 0:
        out.append(JumpOperator(SIGMA_MINUS, t1_down))
    if t1_up > 0:
        out.append(JumpOperator(SIGMA_PLUS, t1_up))
    if gamma_phi > 0:
        out.append(JumpOperator(SZ, 0.5 * gamma_phi))
    return out


def _dag(a):
    return np.swapaxes(a.conj(), -1, -2)


def lindblad_rhs(rho, h_ang, jumps):
    out = -1j * (h_ang @ rho - rho @ h_ang)
    for j in jumps:
        if j.rate == 0:
            continue
        l = j.matrix
        ld = l.conj().T
        ldl = ld @ l
        out = out + j.rate * (l @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def _check_step(dt, h_ang, jumps):
    hnorm = float(np.max(np.linalg.norm(h_ang, ord=2, axis=(-2, -1)))) if np.size(h_ang) else 0.0
    if dt * hnorm > MAX_STEP_PHASE * (1 + 1e-9):
        raise ValueError(f"step too large: dt*||H|| = {dt * hnorm:.3g} rad exceeds {MAX_STEP_PHASE} "
                         f"(Hamiltonian norm {hnorm:.3g} rad/s)")
    for k, j in enumerate(jumps):
        r = j.rate * np.linalg.norm(j.matrix, ord=2) ** 2
        if dt * r > MAX_STEP_PHASE * (1 + 1e-9):
            raise ValueError(f"step too large: jump operator #{k} with rate {j.rate:.3g} /s gives "
                             f"dt*rate = {dt * r:.3g} > {MAX_STEP_PHASE}")


def max_stable_dt(h_hz, jumps=()):
    """Largest step satisfying the RK4 step-size precondition."""
    h_ang = TWO_PI * np.asarray(h_hz)
    scale = float(np.max(np.linalg.norm(h_ang, ord=2, axis=(-2, -1)))) if np.size(h_ang) else 0.0
    for j in jumps:
        scale = max(scale, j.rate * np.linalg.norm(j.matrix, ord=2) ** 2)
    return np.inf if scale == 0 else MAX_STEP_PHASE / scale


def evolve(rho, h, jumps=(), duration=0.0, dt=None):
    """Integrate the Lindblad equation for ``duration`` seconds with RK4.

    ``rho`` may carry leading batch dimensions; ``h`` (Hz) is either a single
    matrix or batched like ``rho``. The step is shortened so that an integer
    number of steps covers ``duration`` exactly.
    """
    rho = np.array(rho, dtype=complex)
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if duration == 0:
        return rho
    h_ang = TWO_PI * np.asarray(h, dtype=complex)
    if dt is None:
        dt = min(max_stable_dt(h, jumps), duration)
    if dt > duration * (1 + 1e-12):
        raise ValueError(f"dt ({dt!r}) must not exceed duration ({duration!r})")
    _check_step(dt, h_ang, jumps)
    n = max(1, int(np.ceil(duration / dt - 1e-9)))
    step = duration / n
    for _ in range(n):
        k1 = lindblad_rhs(rho, h_ang, jumps)
        k2 = lindblad_rhs(rho + 0.5 * step * k1, h_ang, jumps)
        k3 = lindblad_rhs(rho + 0.5 * step * k2, h_ang, jumps)
        k4 = lindblad_rhs(rho + step * k3, h_ang, jumps)
        rho = rho + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return 0.5 * (rho + _dag(rho))


def expectation(rho, observable):
    """Tr(rho O), real part; batched over leading dimensions of ``rho``."""
    rho = np.asarray(rho)
    observable = np.asarray(observable)
    if rho.shape[-2:] != observable.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape[-2:]} vs observable {observable.shape}")
    return np.real(np.einsum("...ij,ji->...", rho, observable))


def _su2(wx, wy, wz, t):
    """exp(-i t (wx sx + wy sy + wz sz)/2), batched over the field arrays."""
    w = np.sqrt(wx ** 2 + wy ** 2 + wz ** 2)
    half = 0.5 * w * t
    c = np.cos(half)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(w > 0, np.sin(half) / np.where(w > 0, w, 1.0), 0.5 * t)
    u = np.empty(np.shape(w) + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * s * wz
    u[..., 1, 1] = c + 1j * s * wz
    u[..., 0, 1] = -1j * s * (wx - 1j * wy)
    u[..., 1, 0] = -1j * s * (wx + 1j * wy)
    return u


def liouvillian(h_hz, jumps=()):
    """Lindblad superoperator (rad/s) acting on row-major flattened density matrices."""
    h_ang = TWO_PI * np.asarray(h_hz, dtype=complex)
    d = h_ang.shape[-1]
    eye = np.eye(d)
    sup = -1j * (np.kron(h_ang, eye) - np.kron(eye, np.swapaxes(h_ang, -1, -2)))
    for j in jumps:
        if j.rate == 0:
            continue
        l = j.matrix
        ldl = l.conj().T @ l
        sup = sup + j.rate * (np.kron(l, l.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))
    return sup


def propagate_exact(rho, h_hz, jumps, duration):
    """Apply exp(L t) for a constant generator; batched over leading dimensions."""
    from scipy.linalg import expm

    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[-1]
    prop = expm(liouvillian(h_hz, jumps) * duration)
    vec = rho.reshape(rho.shape[:-2] + (d * d,))
    out = np.einsum("...ij,...j->...i", prop, vec).reshape(np.broadcast_shapes(
        prop.shape[:-2], rho.shape[:-2]) + (d, d))
    return 0.5 * (out + _dag(out))


def mw_hamiltonian(rabi, detuning, phase, offset=0.0):
    """Rotating-frame drive Hamiltonian in Hz; ``offset`` is an extra detuning in rad/s."""
    delta = np.asarray(detuning + np.asarray(offset) / TWO_PI, dtype=float)
    rabi = np.asarray(rabi, dtype=float)
    drive = 0.5 * rabi[..., None, None] * (np.cos(phase) * SX + np.sin(phase) * SY)
    return drive + 0.5 * delta[..., None, None] * SZ


def apply_mw_pulse(rho, rabi, detuning, phase, duration, dephasing_trace=None,
                   trace_dt=None, jumps=(), dt=None):
    """Microwave pulse in the rotating frame.

    The drive is (rabi/2)(cos(phase) sx + sin(phase) sy) + (detuning/2) sz
    in Hz. ``dephasing_trace`` adds a sample-and-hold frequency offset in
    rad/s (samples spaced by ``trace_dt``; leading dims batch over shots).
    ``rabi`` may be an array batched like ``rho`` (per-shot amplitude errors).
    Each hold interval is propagated exactly (unitary without jumps,
    Liouvillian exponential with jumps) unless ``dt`` is given, in which case
    the RK4 integrator is used.
    """
    rabi = np.asarray(rabi, dtype=float)
    if np.any(rabi < 0):
        raise ValueError("rabi must be >= 0")
    if duration < 0:
        raise ValueError("duration must be >= 0")
    rho = np.array(rho, dtype=complex)
    if dephasing_trace is None:
        bounds = [(0.0, duration, 0.0)]
    else:
        trace = np.asarray(dephasing_trace, dtype=float)
        if trace_dt is None or trace_dt <= 0:
            raise ValueError("trace_dt must be given and > 0 with a dephasing trace")
        if trace.shape[-1] * trace_dt < duration * (1 - 1e-12):
            raise ValueError(f"dephasing trace covers {trace.shape[-1] * trace_dt:.6g} s, "
                             f"shorter than pulse duration {duration:.6g} s")
        n_int = max(1, int(np.ceil(duration / trace_dt - 1e-9)))
        bounds = [(k * trace_dt, min((k + 1) * trace_dt, duration), trace[..., k]) for k in range(n_int)]
    for t0, t1, off in bounds:
        seg = t1 - t0
        if seg <= 0:
            continue
        if not jumps:
            delta = TWO_PI * detuning + np.asarray(off, dtype=float)
            shape = np.broadcast_shapes(np.shape(delta), rabi.shape)
            wx = np.broadcast_to(TWO_PI * rabi * np.cos(phase), shape)
            wy = np.broadcast_to(TWO_PI * rabi * np.sin(phase), shape)
            u = _su2(wx, wy, np.broadcast_to(delta, shape), seg)
            rho = u @ rho @ _dag(u)
        elif dt is None:
            rho = propagate_exact(rho, mw_hamiltonian(rabi, detuning, phase, off), jumps, seg)
        else:
            h = mw_hamiltonian(rabi, detuning, phase, off)
            rho = evolve(rho, h, jumps, seg, min(dt, seg))
    return rho


def free_evolution(rho, phase, duration, t1_down=0.0, t1_up=0.0, gamma_phi=0.0):
    """Exact solution of a wait: precession by ``phase`` (rad) plus relaxation and dephasing.

    Equivalent to :func:`evolve` with H = (delta/2) sz and :func:`qubit_jumps`
    when ``phase = delta * duration``.
    """
    rho = np.array(rho, dtype=complex)
    g1 = t1_down + t1_up
    if g1 > 0:
        p_eq = t1_up / g1
        decay = np.exp(-g1 * duration)
        p_up = p_eq + (rho[..., 0, 0].real - p_eq) * decay
    else:
        p_up = rho[..., 0, 0].real
    coh = rho[..., 0, 1] * np.exp(-1j * np.asarray(phase)) * np.exp(-(0.5 * g1 + gamma_phi) * duration)
    out = np.empty_like(rho)
    out[..., 0, 0] = p_up
    out[..., 1, 1] = 1.0 - p_up
    out[..., 0, 1] = coh
    out[..., 1, 0] = np.conj(coh)
    return out


# ---------------------------------------------------------------------------
# Jump trajectories
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryRecord:
    """Outcome of one jump trajectory.

    In ``full`` mode every jump and every collected photon is time-stamped.
    In coarse mode only transitions between hub levels are recorded and the
    photons are tallied in ``photon_count`` (``photon_times`` is None).
    """

    jump_times: list = field(default_factory=list)
    level_path: list = field(default_factory=list)
    photon_times: list | None = field(default_factory=list)
    photon_count: int = 0
    final_time: float = 0.0
    final_level: int = 0
    stopped: bool = False


class _Excursion:
    __slots__ = ("end", "prob", "states", "radiative", "mean", "var")

    def __init__(self, end, prob, states, radiative, exits, hub_exit):
        self.end = end
        self.prob = prob
        self.states = tuple(states)  # intermediate states visited
        self.radiative = tuple(radiative)  # per transition, starting with hub exit
        self.mean = 1.0 / hub_exit + sum(1.0 / exits[s] for s in states)
        self.var = 1.0 / hub_exit ** 2 + sum(1.0 / exits[s] ** 2 for s in states)


def _excursions(q, radiative, hub, hubs, exits):
    out = []

    def walk(state, prob, states, rad):
        for nxt in np.flatnonzero(q[state] > 0):
            p = prob * q[state, nxt] / exits[state]
            r = rad + [bool(radiative[state, nxt])]
            if nxt in hubs:
                out.append(_Excursion(int(nxt), p, states, r, exits, exits[hub]))
            else:
                if nxt in states or len(states) > 16:
                    raise ValueError("non-hub levels must form an acyclic graph")
                walk(int(nxt), p, states + [int(nxt)], r)

    walk(hub, 1.0, [], [])
    return out


_M_MIN = 16
_SIGMAS = 12.0


def jump_trajectory(initial_level, q, radiative, duration, eta_collect, rng_seed=0, rng=None,
                    stop_levels=(), hubs=(0, 1), full=False):
    """Simulate one continuous-time Markov jump trajectory.

    Parameters
    ----------
    initial_level : int
        Starting level index.
    q, radiative : ndarray
        Rate matrix ``q[i, j]`` (i -> j, 1/s) and mask of photon-emitting
        transitions (see :func:`sivsim.model.level_graph`).
    duration : float
        Simulated time in s; may be ``inf`` when ``stop_levels`` is given.
    eta_collect : float
        Probability that an emitted photon is recorded.
    rng_seed, rng :
        Seed of the Philox stream, or an explicit generator.
    stop_levels : sequence of int
        Stop at the first arrival in any of these levels.
    hubs : sequence of int
        Levels between which excursions are aggregated (coarse mode). All
        other levels must form an acyclic graph.
    full : bool
        Record every jump and photon time (event-by-event Gillespie).
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if not 0 <= initial_level < n:
        raise ValueError(f"initial level {initial_level!r} outside 0..{n - 1}")
    if not 0 <= eta_collect <= 1:
        raise ValueError("eta_collect must lie in [0, 1]")
    q = q.copy()
    np.fill_diagonal(q, 0.0)
    exits = q.sum(axis=1)
    reach = np.flatnonzero(exits > 0)
    incoming = np.flatnonzero(q.sum(axis=0) > 0)
    if exits[initial_level] == 0 and initial_level not in incoming and q.sum() > 0:
        raise ValueError(f"initial level {initial_level} is unreachable and has no exits")
    if not np.isfinite(duration) and not stop_levels:
        raise ValueError("an infinite duration requires stop_levels")
    rng = rng if rng is not None else shot_rng(rng_seed)
    stop = set(int(s) for s in stop_levels)
    rec = TrajectoryRecord(level_path=[int(initial_level)])
    if full:
        return _gillespie(rec, int(initial_level), q, radiative, exits, duration, eta_collect, rng, stop)
    return _coarse(rec, int(initial_level), q, radiative, exits, duration, eta_collect, rng, stop,
                   tuple(int(h) for h in hubs))


def _gillespie(rec, level, q, radiative, exits, duration, eta, rng, stop):
    t = 0.0
    while True:
        if level in stop and rec.jump_times:
            rec.stopped = True
            break
        if exits[level] == 0:
            break
        t_next = t + rng.exponential(1.0 / exits[level])
        if t_next >= duration:
            break
        nxt = int(rng.choice(q.shape[0], p=q[level] / exits[level]))
        t = t_next
        if radiative[level, nxt] and rng.random() < eta:
            rec.photon_times.append(t)
        rec.jump_times.append(t)
        rec.level_path.append(nxt)
        level = nxt
    rec.photon_count = len(rec.photon_times)
    rec.final_time = t if rec.stopped else duration
    rec.final_level = level
    return rec


def _coarse(rec, level, q, radiative, exits, duration, eta, rng, stop, hubs):
    t = 0.0
    photons = 0
    hubset = set(hubs) | set(stop)

    def walk_exact(start, t, states_to, rad):
        """Advance one excursion event by event; returns (t, finished)."""
        nonlocal photons
        seq = [start] + list(states_to)
        for k, s in enumerate(seq):
            t = t + rng.exponential(1.0 / exits[s])
            if t >= duration:
                return t, False
            if rad[k] and rng.random() < eta:
                photons += 1
        return t, True

    # leave a non-hub start level event by event
    while level not in hubset:
        if exits[level] == 0:
            rec.final_time, rec.final_level = duration, level
            return rec
        t_next = t + rng.exponential(1.0 / exits[level])
        if t_next >= duration:
            rec.final_time, rec.final_level, rec.photon_count, rec.photon_times = duration, level, photons, None
            return rec
        nxt = int(rng.choice(q.shape[0], p=q[level] / exits[level]))
        if radiative[level, nxt] and rng.random() < eta:
            photons += 1
        t = t_next
        level = nxt
        rec.jump_times.append(t)
        rec.level_path.append(level)
        if level in stop:
            rec.stopped = True
            rec.final_time, rec.final_level, rec.photon_count, rec.photon_times = t, level, photons, None
            return rec

    cache = {}
    while t < duration:
        if level in stop and rec.jump_times:
            rec.stopped = True
            break
        if exits[level] == 0:
            t = duration
            break
        if level not in cache:
            exc = _excursions(q, radiative, level, hubset, exits)
            ret = [e for e in exc if e.end == level]
            leave = [e for e in exc if e.end != level]
            p_ret = np.array([e.prob for e in ret])
            p_leave = 1.0 - p_ret.sum() if leave else 0.0
            p_leave = max(p_leave, 0.0) if leave else 0.0
            if ret:
                w = p_ret / p_ret.sum()
                mu = float(np.dot(w, [e.mean for e in ret]))
                var = float(np.dot(w, [e.var + e.mean ** 2 for e in ret]) - mu ** 2)
            else:
                w, mu, var = None, 0.0, 0.0
            pl = np.array([e.prob for e in leave])
            cache[level] = (ret, w, mu, max(var, 0.0), leave, p_leave, pl / pl.sum() if leave else None)
        ret, w, mu, var, leave, p_leave, wl = cache[level]
        if not leave and not np.isfinite(duration):
            raise ValueError(f"stop levels unreachable from level {level}")
        if leave and p_leave > 0:
            remaining = int(rng.geometric(p_leave)) - 1 if p_leave < 1 else 0
        else:
            remaining = -1  # returns forever
        while remaining != 0 and t < duration and ret:
            room = duration - t
            if np.isfinite(room):
                sd = np.sqrt(var)
                x = (-_SIGMAS * sd + np.sqrt(_SIGMAS ** 2 * var + 4 * mu * room)) / (2 * mu)
                m = int(np.floor(x * x))
            else:
                m = 1 << 40
            if remaining > 0:
                m = min(m, remaining)
            if m >= _M_MIN:
                counts = rng.multinomial(m, w)
                visits = {}
                n_rad = 0
                for c, e in zip(counts, ret):
                    if c == 0:
                        continue
                    for s in e.states:
                        visits[s] = visits.get(s, 0) + int(c)
                    n_rad += int(c) * sum(e.radiative)
                dt_block = rng.gamma(m, 1.0 / exits[level])
                for s in sorted(visits):
                    dt_block += rng.gamma(visits[s], 1.0 / exits[s])
                photons += int(rng.binomial(n_rad, eta)) if n_rad else 0
                t += dt_block
                remaining = remaining - m if remaining > 0 else remaining
            else:
                e = ret[int(rng.choice(len(ret), p=w))]
                t, done = walk_exact(level, t, e.states, e.radiative)
                if not done:
                    break
                remaining = remaining - 1 if remaining > 0 else remaining
        if t >= duration or remaining != 0:
            break
        e = leave[int(rng.choice(len(leave), p=wl))]
        t, done = walk_exact(level, t, e.states, e.radiative)
        if not done:
            break
        level = e.end
        rec.jump_times.append(t)
        rec.level_path.append(level)
    rec.stopped = rec.stopped or (level in stop and bool(rec.jump_times) and t < duration)
    rec.final_time = t if rec.stopped else duration
    rec.final_level = level
    rec.photon_count = photons
    rec.photon_times = None
    return rec
