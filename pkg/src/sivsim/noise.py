"""Classical dephasing noise and coherence predictions.

Spectral densities are two-sided in angular frequency,
``<d(t) d(0)> = (1/2pi) int S(w) e^{iwt} dw``, so that the coherence under
a pulse sequence with filter ``F(wT)`` is ``W = exp(-chi)`` with

    chi = (1/pi) int_0^inf S(w) F(wT) / w^2 dw.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Union

import numpy as np
from scipy import signal

from .constants import GAMMA_C13_HZ_PER_G, MU_B_HZ_PER_G, TWO_PI
from .rng import shot_rng


@dataclass(frozen=True)
class OU:
    """Ornstein-Uhlenbeck detuning noise: rms ``sigma`` (rad/s), correlation time ``tau_c`` (s)."""

    sigma: float
    tau_c: float

    def __post_init__(self):
        if not (self.sigma > 0 and self.tau_c > 0):
            raise ValueError("OU noise needs sigma > 0 and tau_c > 0")

    def spectrum(self, omega):
        omega = np.asarray(omega, dtype=float)
        return 2 * self.sigma ** 2 * self.tau_c / (1 + (omega * self.tau_c) ** 2)


@dataclass(frozen=True)
class QuasiStatic:
    """Per-shot constant Gaussian detuning with rms ``sigma`` (rad/s)."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("quasi-static noise needs sigma > 0")


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Spectral density ``s_of_omega`` sampled on a strictly increasing ``omega`` grid.

    Linear interpolation in between; zero above the last grid point.
    """

    omega: np.ndarray
    s_of_omega: np.ndarray
    source: str = ""

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        s = np.asarray(self.s_of_omega, dtype=float)
        if w.ndim != 1 or w.shape != s.shape or w.size < 2:
            raise ValueError("tabulated spectrum needs two equal-length 1-d arrays (>= 2 points)")
        if np.any(np.diff(w) <= 0):
            raise ValueError("tabulated omega must be strictly increasing")
        if np.any(w < 0):
            raise ValueError("tabulated omega must be >= 0")
        if np.any(s < 0):
            raise ValueError("tabulated spectrum must be >= 0")
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "s_of_omega", s)

    def spectrum(self, omega):
        return np.interp(omega, self.omega, self.s_of_omega, left=self.s_of_omega[0], right=0.0)

    def scaled(self, factor):
        return Tabulated(self.omega, self.s_of_omega * factor, self.source)


@dataclass(frozen=True)
class SingleC13:
    """One nearby 13C: hyperfine components (Hz) and field (G)."""

    a_par: float
    a_perp: float
    b_mag: float


NoiseModel = Union[OU, QuasiStatic, Tabulated, SingleC13]


def load_spectrum(path) -> Tabulated:
    """Read a two-column text spectrum: omega [rad/s], S [(rad/s)^2/(rad/s)]; ``#`` starts a comment."""
    path = Path(path)
    rows = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        rows.append((float(parts[0]), float(parts[1])))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows)
    return Tabulated(arr[:, 0], arr[:, 1], str(path))


def save_spectrum(path, model: Tabulated, header=""):
    lines = ["# omega [rad/s]  S(omega) [(rad/s)^2/(rad/s)], two-sided"]
    lines += [f"# {h}" for h in header.splitlines() if h]
    lines += [f"{w:.12g} {s:.12g}" for w, s in zip(model.omega, model.s_of_omega)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, tuple):
        return shot_rng(*seed)
    return shot_rng(seed)


def sample_ou(model: OU, dt, n_steps, seed=0):
    """OU trace (rad/s) with exact AR(1) discretisation and stationary start."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    rng = _as_rng(seed)
    a = np.exp(-dt / model.tau_c)
    b = model.sigma * np.sqrt(-np.expm1(-2 * dt / model.tau_c))
    xi = rng.standard_normal(n_steps)
    x0 = model.sigma * xi[0]
    if n_steps == 1:
        return np.array([x0])
    y, _ = signal.lfilter([b], [1.0, -a], xi[1:], zi=[a * x0])
    return np.concatenate([[x0], y])


def quasistatic_sigma(params, field_cfg):
    """rms angular detuning from g-factor fluctuations: 2pi * delta_g * muB/h * B."""
    return TWO_PI * params.delta_g * MU_B_HZ_PER_G * field_cfg.b_mag


def sample_quasistatic_g(params, field_cfg, seed=0, size=None):
    """Per-shot frequency offset (rad/s) from g-factor fluctuations."""
    sigma = quasistatic_sigma(params, field_cfg)
    rng = _as_rng(seed)
    z = rng.standard_normal(size)
    return sigma * z


@lru_cache(maxsize=32)
def _synthesis_plan(model, dt, n_steps, pad, n_band):
    w_top = model.omega[-1]
    h = max(dt, np.pi / (8 * w_top)) if w_top > 0 else dt
    n_h = int(np.ceil((n_steps - 1) * dt / h)) + 2
    need = max(pad * n_h, int(np.ceil(n_band * TWO_PI / (w_top * h))) if w_top > 0 else 2, 2)
    m = 1 << int(np.ceil(np.log2(need)))
    dw = TWO_PI / (m * h)
    w = np.arange(1, m // 2 + 1) * dw
    amp = np.sqrt(model.spectrum(w) * dw / np.pi)
    # modes above the tabulated band carry no power
    amp = amp[: max(1, int(np.count_nonzero(w <= w_top)))]
    basis = None
    if n_h * amp.size <= 4_000_000:
        ph = np.outer(np.arange(n_h) * h, w[:amp.size])
        basis = (np.cos(ph) * amp, np.sin(ph) * amp)
    return h, n_h, m, amp, basis


def sample_tabulated(model: Tabulated, dt, n_steps, seed=0, pad=4, n_band=1024):
    """Stationary Gaussian trace with the tabulated spectrum (random-phase spectral synthesis).

    Modes sit on the grid ``k * 2 pi / (M h)`` and the sum is evaluated with
    one inverse FFT. The synthesis step ``h`` is ``dt`` or, when ``dt`` is
    much finer than the band needs, ``pi / (8 omega_max)`` followed by linear
    interpolation; ``M`` is a power of two with at least ``n_band`` modes
    inside the tabulated band and ``M >= pad * steps``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    rng = _as_rng(seed)
    h, n_h, m, amp, basis = _synthesis_plan(model, float(dt), int(n_steps), pad, n_band)
    a = rng.standard_normal(amp.size)
    b = rng.standard_normal(amp.size)
    if basis is not None:
        coarse = basis[0] @ a + basis[1] @ b
    else:
        c = np.zeros(m, dtype=complex)
        c[1:amp.size + 1] = amp * (a - 1j * b)
        coarse = (np.fft.ifft(c) * m).real[:n_h]
    if h == dt:
        return coarse[:n_steps]
    return np.interp(np.arange(n_steps) * dt, np.arange(n_h) * h, coarse)


def sample_trace(model, dt, n_steps, seed=0, params=None, field_cfg=None):
    """Detuning trace (rad/s) for any classical model."""
    if isinstance(model, OU):
        return sample_ou(model, dt, n_steps, seed)
    if isinstance(model, QuasiStatic):
        return np.full(n_steps, model.sigma * _as_rng(seed).standard_normal())
    if isinstance(model, Tabulated):
        return sample_tabulated(model, dt, n_steps, seed)
    raise TypeError(f"no classical trace for {type(model).__name__}")


# ---------------------------------------------------------------------------
# Filter functions and analytic coherence
# ---------------------------------------------------------------------------

def switching_fractions(n_pulses):
    """Pi-pulse positions as fractions of the total time (Meiboom-Gill spacing)."""
    return (np.arange(1, n_pulses + 1) - 0.5) / n_pulses


def _filter_sum(z, n_pulses):
    d = switching_fractions(n_pulses)
    signs = (-1.0) ** np.arange(1, n_pulses + 1)
    s = 1 + (-1) ** (n_pulses + 1) * np.exp(1j * z) + 2 * np.sum(
        signs[None, :] * np.exp(1j * np.outer(z, d)), axis=1)
    return 0.5 * np.abs(s) ** 2


def cpmg_filter(n_pulses, total_time, omega):
    """Filter ``F(wT)`` of an ideal CPMG sequence with ``n_pulses`` pi pulses.

    Uses the closed form; where ``cos(wT/2N)`` vanishes (0/0) the value is
    taken from the equivalent finite sum over switching times.
    """
    if int(n_pulses) != n_pulses or n_pulses < 1:
        raise ValueError("n_pulses must be an integer >= 1")
    n = int(n_pulses)
    omega = np.asarray(omega, dtype=float)
    z = np.abs(omega) * total_time
    flat = np.atleast_1d(z).astype(float)
    c = np.cos(flat / (2 * n))
    osc = np.sin(flat / 2) ** 2 if n % 2 == 0 else np.cos(flat / 2) ** 2
    out = np.empty_like(flat)
    near = np.abs(c) < 1e-4
    ok = ~near
    out[ok] = 8 * np.sin(flat[ok] / (4 * n)) ** 4 * osc[ok] / c[ok] ** 2
    if np.any(near):
        out[near] = _filter_sum(flat[near], n)
    return out.reshape(z.shape) if z.shape else float(out[0])


def fid_filter(total_time, omega):
    """Free-induction (Ramsey) filter 2 sin^2(wT/2)."""
    return 2 * np.sin(np.asarray(omega) * total_time / 2) ** 2


def sequence_filter(n_pulses, total_time, omega):
    return fid_filter(total_time, omega) if n_pulses == 0 else cpmg_filter(n_pulses, total_time, omega)


class QuadratureError(RuntimeError):
    pass


_GL_LO = np.polynomial.legendre.leggauss(16)
_GL_HI = np.polynomial.legendre.leggauss(32)


def _gl(f, a, b, rule):
    x, w = rule
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * x[None, :]
    return half * (f(pts.ravel()).reshape(pts.shape) @ w)


def adaptive_quad(f, edges, rtol=1e-8, max_rounds=60):
    """Integrate a vectorised ``f`` over consecutive ``edges`` intervals.

    Each interval is estimated with 16- and 32-point Gauss-Legendre rules;
    an interval is accepted once its difference is negligible against its own
    value or against its length-weighted share of the running total (the
    integrands here are non-negative); the rest are bisected until the
    summed error estimate is below ``rtol`` relative.
    Returns ``(value, error_estimate)``.
    """
    a = np.asarray(edges[:-1], dtype=float)
    b = np.asarray(edges[1:], dtype=float)
    done_val, done_err = 0.0, 0.0
    for _ in range(max_rounds):
        hi = _gl(f, a, b, _GL_HI)
        err = np.abs(hi - _gl(f, a, b, _GL_LO))
        total = done_val + hi.sum()
        scale = max(abs(total), 1e-300)
        share = np.maximum(np.abs(hi), scale * (b - a) / max(edges[-1] - edges[0], 1e-300))
        bad = err > 0.1 * rtol * share
        done_val += hi[~bad].sum()
        done_err += err[~bad].sum()
        if not np.any(bad):
            return done_val, done_err
        mid = 0.5 * (a[bad] + b[bad])
        a, b = np.concatenate([a[bad], mid]), np.concatenate([mid, b[bad]])
    raise QuadratureError(f"adaptive quadrature did not converge ({a.size} unresolved intervals)")


def _u_minus_arctan(u):
    """u - arctan(u) without cancellation for small u."""
    if u > 1e-2:
        return u - np.arctan(u)
    u2 = u * u
    return u * u2 * (1 / 3 - u2 * (1 / 5 - u2 * (1 / 7 - u2 / 9)))


def decoherence_exponent(model, n_pulses, total_time, rtol=1e-6):
    """chi(T) for an OU or tabulated spectrum under CPMG-N (N = 0 is free induction).

    The filter-weighted spectrum is integrated piecewise over intervals one
    filter period wide; an error estimate above ``rtol`` raises
    :class:`QuadratureError`.
    """
    if isinstance(model, QuasiStatic):
        if n_pulses == 0:
            return 0.5 * (model.sigma * total_time) ** 2
        return 0.0
    if not isinstance(model, (OU, Tabulated)):
        raise TypeError(f"coherence_decay needs an OU, QuasiStatic or Tabulated model, got {type(model).__name__}")
    if total_time <= 0:
        return 0.0
    T = float(total_time)

    def integrand(w):
        with np.errstate(invalid="ignore", divide="ignore"):
            v = model.spectrum(w) * sequence_filter(n_pulses, T, w) / w ** 2
        return np.where(w > 0, v, 0.0) / np.pi

    width = 4 * np.pi / T
    peak = (max(n_pulses, 1) + 1) * np.pi / T
    tail, tail_err = 0.0, 0.0
    if isinstance(model, Tabulated):
        w_end = model.omega[-1]
        edges = np.unique(np.concatenate([np.arange(0, w_end, width), [w_end], model.omega[model.omega < w_end]]))
        edges = edges[edges >= 0]
    else:
        # resolve the Lorentzian knee, but never more than a few thousand filter periods
        w_end = max(400 * peak, min(400 / model.tau_c, 4000 * peak))
        edges = np.arange(0, w_end + width, width)
        knee = np.geomspace(1e-3, 1e3, 61) / model.tau_c
        edges = np.union1d(edges, knee[knee < edges[-1]])
        # beyond the last edge the filter oscillates quickly around its mean 2 + 4N
        mean_f = 2.0 + 4.0 * n_pulses
        w0, tc = edges[-1], model.tau_c
        tail = mean_f / np.pi * 2 * model.sigma ** 2 * tc ** 2 * _u_minus_arctan(1 / (w0 * tc))
        tail_err = 0.05 * tail
    total, err = adaptive_quad(integrand, edges, rtol=0.1 * rtol)
    total += tail
    err += tail_err
    if total > 0 and err > rtol * total:
        raise QuadratureError(f"relative quadrature error {err / total:.2e} exceeds {rtol:g}")
    return float(total)


def coherence_decay(model, n_pulses, total_time):
    """Coherence W = exp(-chi) after CPMG-N of total length ``total_time``."""
    return float(np.exp(-decoherence_exponent(model, n_pulses, total_time)))


def ou_free_decay_rate(model: OU):
    """Motional-narrowing limit of the free-induction decay rate, sigma^2 tau_c."""
    return model.sigma ** 2 * model.tau_c


# ---------------------------------------------------------------------------
# Monte Carlo phase accumulation
# ---------------------------------------------------------------------------

def _interp_uniform(cum, dt, times):
    x = np.asarray(times) / dt
    i0 = np.clip(np.floor(x).astype(int), 0, cum.shape[-1] - 2)
    f = x - i0
    return cum[..., i0] * (1 - f) + cum[..., i0 + 1] * f


def toggling_phase(cum, dt, n_pulses, total_times):
    """Accumulated phase given cumulative trace integrals ``cum`` on a grid of step ``dt``.

    ``cum`` has shape (..., steps + 1); the result has shape (..., len(total_times)).
    """
    cum = np.asarray(cum, dtype=float)
    out = np.empty(cum.shape[:-1] + (len(total_times),))
    frac = np.concatenate([[0.0], switching_fractions(n_pulses), [1.0]]) if n_pulses else np.array([0.0, 1.0])
    signs = (-1.0) ** np.arange(frac.size - 1)
    for i, T in enumerate(total_times):
        vals = _interp_uniform(cum, dt, frac * T)
        out[..., i] = np.diff(vals, axis=-1) @ signs
    return out


def mc_coherence(model, n_pulses, total_times, n_shots, seed, dt=None, stream=0, batch=500):
    """Monte Carlo <cos(phi(T))> for ideal CPMG-N (N = 0: free induction).

    Shot ``k`` draws its noise from stream ``(seed, stream, k)``.
    Returns ``(mean, standard_error)`` arrays over ``total_times``.
    """
    total_times = np.asarray(total_times, dtype=float)
    t_max = total_times.max()
    if dt is None:
        dt = t_max / 4000
    n_steps = int(np.ceil(t_max / dt)) + 1
    t_grid = np.arange(n_steps + 1) * dt
    cos_phi = np.empty((n_shots, total_times.size))
    for start in range(0, n_shots, batch):
        stop = min(start + batch, n_shots)
        cum = np.empty((stop - start, n_steps + 1))
        for j, k in enumerate(range(start, stop)):
            rng = shot_rng(seed, stream, k)
            if isinstance(model, QuasiStatic):
                cum[j] = model.sigma * rng.standard_normal() * t_grid
            else:
                x = sample_trace(model, dt, n_steps + 1, rng)
                cum[j, 0] = 0.0
                np.cumsum(0.5 * (x[1:] + x[:-1]) * dt, out=cum[j, 1:])
        cos_phi[start:stop] = np.cos(toggling_phase(cum, dt, n_pulses, total_times))
    return cos_phi.mean(axis=0), cos_phi.std(axis=0, ddof=1) / np.sqrt(n_shots)


# ---------------------------------------------------------------------------
# Single 13C echo modulation
# ---------------------------------------------------------------------------

def nuclear_frequencies(model: SingleC13):
    """(omega_I, omega_alpha, omega_beta) in rad/s."""
    f_i = GAMMA_C13_HZ_PER_G * model.b_mag
    f_a = np.hypot(f_i + 0.5 * model.a_par, 0.5 * model.a_perp)
    f_b = np.hypot(f_i - 0.5 * model.a_par, 0.5 * model.a_perp)
    return TWO_PI * f_i, TWO_PI * f_a, TWO_PI * f_b


def modulation_depth(model: SingleC13):
    w_i, w_a, w_b = nuclear_frequencies(model)
    return float((TWO_PI * model.a_perp * w_i / (w_a * w_b)) ** 2)


def eseem_echo(model: SingleC13, tau):
    """Two-pulse echo amplitude at 2*tau for one 13C (Mims formula)."""
    if not model.b_mag > 0:
        raise ValueError("b_mag must be > 0")
    _, w_a, w_b = nuclear_frequencies(model)
    k = modulation_depth(model)
    tau = np.asarray(tau, dtype=float)
    return 1 - 0.5 * k * (1 - np.cos(w_a * tau)) * (1 - np.cos(w_b * tau))


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def tutorial_spectrum(wc=None, t2_n32=None, n_grid=601):
    """Gaussian low-pass spectrum giving near-linear T2(N) under CPMG.

    Low-frequency noise confined below the CPMG passband is suppressed as
    (wT/N)^4 by the filter, so T2 grows roughly in proportion to N. This is an
    illustration only; it is not a model of any identified physical bath.
    """
    from . import defaults

    wc = defaults.TUTORIAL_WC if wc is None else wc
    t2_n32 = defaults.TUTORIAL_T2_N32 if t2_n32 is None else t2_n32
    w = np.linspace(0.0, 6.0 * wc, n_grid)
    base = Tabulated(w, np.exp(-(w / wc) ** 2), "tutorial")
    return base.scaled(1.0 / decoherence_exponent(base, 32, t2_n32))


def preset(name):
    """Named noise models: ``natural_abundance``, ``slow_ou``, ``tutorial``."""
    from . import defaults

    if name == "natural_abundance":
        return QuasiStatic(np.sqrt(2.0) / defaults.NATURAL_T2STAR)
    if name == "slow_ou":
        return OU(defaults.SLOW_OU_SIGMA, defaults.SLOW_OU_TAU_C)
    if name == "tutorial":
        return tutorial_spectrum()
    raise ValueError(f"unknown noise preset {name!r}")
