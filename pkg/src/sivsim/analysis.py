"""Least-squares fits with uncertainties: decays, oscillations, power laws, Boltzmann ratios."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .constants import H_PLANCK, K_B

ERR_FLOOR = 1e-12


@dataclass
class FitResult:
    params: dict
    sigmas: dict
    residual_rms: float
    converged: bool
    n_iter: int
    message: str = ""
    model: str = ""

    def __getitem__(self, key):
        return self.params[key]

    def to_dict(self):
        def clean(v):
            v = float(v)
            return v if np.isfinite(v) else None

        return {
            "model": self.model,
            "params": {k: clean(v) for k, v in self.params.items()},
            "sigmas": {k: clean(v) for k, v in self.sigmas.items()},
            "residual_rms": clean(self.residual_rms),
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
            "message": self.message,
        }


def _weights(y, yerr):
    if yerr is None:
        return np.ones_like(y), False
    yerr = np.broadcast_to(np.asarray(yerr, dtype=float), y.shape)
    return 1.0 / np.maximum(yerr, ERR_FLOOR), True


def _lsq(fun, p0, names, x, y, yerr, model, bounds=(-np.inf, np.inf)):
    """Weighted Levenberg-Marquardt (trust-region when bounded) with honest failure flags."""
    w, absolute = _weights(y, yerr)
    # work in units of the initial guess so finite-difference steps are relative
    p0 = np.asarray(p0, dtype=float)
    unit = np.where(p0 != 0, np.abs(p0), 1.0)

    def resid(u):
        return (fun(x, *(u * unit)) - y) * w

    method = "lm" if bounds == (-np.inf, np.inf) else "trf"
    if method == "trf":
        bounds = (np.asarray(bounds[0]) / unit, np.asarray(bounds[1]) / unit)
    try:
        res = least_squares(resid, p0 / unit, method=method, bounds=bounds, x_scale="jac",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    except (ValueError, FloatingPointError) as exc:
        nan = {k: np.nan for k in names}
        return FitResult(nan, {k: np.inf for k in names}, np.inf, False, 0, str(exc), model)
    res.x = res.x * unit
    res.jac = res.jac / unit
    params = dict(zip(names, res.x))
    n, k = y.size, len(names)
    rms = float(np.sqrt(np.mean(res.fun ** 2)))
    jac = res.jac
    norms = np.linalg.norm(jac, axis=0)
    if np.all(norms > 0) and np.all(np.isfinite(jac)):
        sv = np.linalg.svd(jac / norms, compute_uv=False)
        rank_ok = sv.size == k and sv[-1] > 1e-8 * sv[0] and np.all(np.isfinite(res.x))
    else:
        rank_ok = False
    converged = bool(res.success and rank_ok)
    message = res.message
    if not rank_ok:
        message = "rank-deficient Jacobian: parameters not identifiable"
        sigmas = {name: np.inf for name in names}
    else:
        jn = jac / norms
        cov = np.linalg.inv(jn.T @ jn) / np.outer(norms, norms)
        if not absolute:
            dof = max(n - k, 1)
            cov = cov * (2 * res.cost) / dof
        sigmas = dict(zip(names, np.sqrt(np.clip(np.diag(cov), 0, None))))
    return FitResult(params, sigmas, rms, converged, int(res.nfev), message, model)


def _one_over_e(x, y):
    y0 = y[0]
    if y0 == 0:
        return 0.5 * (x[-1] - x[0]) + x[0]
    rel = (y - y[-1]) / (y0 - y[-1]) if y0 != y[-1] else y / y0
    below = np.flatnonzero(rel < np.exp(-1))
    if below.size == 0 or below[0] == 0:
        return 2 * x[-1]
    i = below[0]
    x0, x1, r0, r1 = x[i - 1], x[i], rel[i - 1], rel[i]
    return x0 + (np.exp(-1) - r0) * (x1 - x0) / (r1 - r0)


def _check_xy(x, y, n_min):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if x.size < n_min:
        raise ValueError(f"need at least {n_min} points, got {x.size}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    return x, y


def fit_decay(x, y, yerr=None, model="exp", p=None, offset=False):
    """Fit ``A exp(-(x/T)^p) [+ C]``.

    ``model="exp"`` fixes p = 1; ``model="stretched"`` uses the given ``p``
    or fits it when ``p`` is None. Returned params: ``amplitude``, ``t_decay``,
    ``p`` (and ``offset``).
    """
    x, y = _check_xy(x, y, 4)
    if model == "exp":
        p = 1.0
    elif model != "stretched":
        raise ValueError(f"unknown decay model {model!r}")
    free_p = p is None
    c0 = float(y[-1]) if offset else 0.0
    a0 = float(y[0] - c0) or 1.0
    t0 = float(_one_over_e(x, y))
    if t0 <= 0:
        t0 = float(x[-1])
    names = ["amplitude", "t_decay"] + (["p"] if free_p else []) + (["offset"] if offset else [])
    p_fixed = p

    def f(xx, *q):
        a, t = q[0], q[1]
        pp = q[2] if free_p else p_fixed
        c = q[-1] if offset else 0.0
        return a * np.exp(-np.power(np.abs(xx / t), pp)) + c

    guess = [a0, t0] + ([2.0] if free_p else []) + ([c0] if offset else [])
    label = "exp" if model == "exp" else (f"stretched(p={p_fixed:g})" if not free_p else "stretched(p free)")
    res = _lsq(f, guess, names, x, y, yerr, label)
    if not free_p:
        res.params["p"] = float(p_fixed)
        res.sigmas["p"] = 0.0
    span = x[-1] - x[0] if x[-1] > x[0] else abs(x[-1])
    t = res.params.get("t_decay", np.nan)
    if res.converged and (not np.isfinite(t) or abs(t) > 1e3 * max(span, abs(x[-1]))):
        res.converged = False
        res.message = "decay time unbounded by the data (no visible decay)"
    if res.converged and abs(res.params["amplitude"]) < 1e-6 * max(np.max(np.abs(y)), 1e-300):
        res.converged = False
        res.message = "no decaying component (zero amplitude)"
    if res.converged:
        res.params["t_decay"] = abs(t)
    return res


def _periodogram_peak(x, y):
    yc = y - y.mean()
    if np.allclose(yc, 0):
        return 0.0
    span = x[-1] - x[0]
    dx = np.min(np.diff(x))
    f_max = 0.5 / dx
    freqs = np.linspace(0.25 / span, f_max, max(4096, 16 * x.size))
    from scipy.signal import lombscargle

    power = lombscargle(x, yc, 2 * np.pi * freqs, precenter=False)
    return float(freqs[int(np.argmax(power))])


def fit_oscillation(x, y, yerr=None, envelope="exp"):
    """Fit ``A cos(2 pi f x + phase) E(x) + C`` with E = exp(-x/tau), exp(-(x/tau)^2) or 1.

    Returned params: ``amplitude``, ``frequency``, ``phase``, ``t_decay`` (inf
    for ``envelope="none"``), ``offset``.
    """
    x, y = _check_xy(x, y, 5)
    pw = {"exp": 1.0, "gauss": 2.0, "none": None}[envelope]
    f0 = _periodogram_peak(x, y)
    c0 = float(y.mean())
    a0 = float(np.max(np.abs(y - c0)))
    if a0 < 1e-12 or f0 == 0.0:
        names = ["amplitude", "frequency", "phase", "t_decay", "offset"]
        return FitResult({k: np.nan for k in names} | {"amplitude": 0.0, "offset": c0},
                         {k: np.inf for k in names}, 0.0, False, 0,
                         "no oscillation present (zero amplitude)", f"cos*{envelope}")
    # phase from projection at the guessed frequency
    cz = np.sum((y - c0) * np.exp(-2j * np.pi * f0 * x))
    ph0 = float(-np.angle(cz))
    tau0 = 2.0 * (x[-1] - x[0])
    names = ["amplitude", "frequency", "phase"] + ([] if pw is None else ["t_decay"]) + ["offset"]

    def f(xx, *q):
        a, fr, ph = q[0], q[1], q[2]
        env = 1.0 if pw is None else np.exp(-np.power(np.abs(xx / q[3]), pw))
        return a * np.cos(2 * np.pi * fr * xx + ph) * env + q[-1]

    guess = [a0, f0, ph0] + ([] if pw is None else [tau0]) + [c0]
    res = _lsq(f, guess, names, x, y, yerr, f"cos*{envelope}")
    if pw is None:
        res.params["t_decay"] = np.inf
        res.sigmas["t_decay"] = 0.0
    elif res.converged:
        res.params["t_decay"] = abs(res.params["t_decay"])
    if res.converged and res.params["amplitude"] < 0:
        res.params["amplitude"] *= -1
        res.params["phase"] += np.pi
    if res.converged:
        res.params["phase"] = float((res.params["phase"] + np.pi) % (2 * np.pi) - np.pi)
        if abs(res.params["amplitude"]) < 1e-9 * max(1.0, np.max(np.abs(y))):
            res.converged = False
            res.message = "no oscillation present (zero amplitude)"
    return res


def rabi_lineshape(x, amplitude, center, rabi, offset, tau):
    """Transfer probability of a square pulse of length ``tau`` versus detuning ``x`` (Hz)."""
    d = np.asarray(x, dtype=float) - center
    w2 = rabi ** 2 + d ** 2
    return offset + amplitude * rabi ** 2 / w2 * np.sin(np.pi * tau * np.sqrt(w2)) ** 2


def lineshape_fwhm(rabi, tau):
    """Full width at half maximum (Hz) of :func:`rabi_lineshape` about its centre."""
    peak = rabi_lineshape(0.0, 1.0, 0.0, rabi, 0.0, tau)
    d = np.linspace(0.0, 4.0 / tau + 4 * abs(rabi), 200001)
    prof = rabi_lineshape(d, 1.0, 0.0, rabi, 0.0, tau)
    below = np.flatnonzero(prof < 0.5 * peak)
    if below.size == 0:
        return np.inf
    i = below[0]
    d_half = np.interp(0.5 * peak, [prof[i], prof[i - 1]], [d[i], d[i - 1]])
    return float(2 * d_half)


def fit_resonance(x, y, tau, yerr=None, rabi=None):
    """Fit the pulsed-ODMR line :func:`rabi_lineshape` with the pulse length fixed.

    Returned params: ``amplitude``, ``center``, ``rabi``, ``offset`` and the
    derived ``fwhm``.
    """
    x, y = _check_xy(x, y, 5)
    if not tau > 0:
        raise ValueError("tau must be > 0")
    c0 = float(np.median(y))
    dev = y - c0
    i = int(np.argmax(np.abs(dev)))
    a0 = float(dev[i])
    names = ["amplitude", "center", "rabi", "offset"]
    if abs(a0) < 1e-12:
        return FitResult({k: np.nan for k in names} | {"fwhm": np.nan}, {k: np.inf for k in names + ["fwhm"]},
                         0.0, False, 0, "no resonance present (flat line)", "rabi_lineshape")
    r0 = 0.5 / tau if rabi is None else rabi

    def f(xx, a, c, r, off):
        return rabi_lineshape(xx, a, c, r, off, tau)

    res = _lsq(f, [a0, float(x[i]), r0, c0], names, x, y, yerr, "rabi_lineshape")
    if res.converged:
        res.params["rabi"] = abs(res.params["rabi"])
        res.params["fwhm"] = lineshape_fwhm(res.params["rabi"], tau)
    else:
        res.params["fwhm"] = np.nan
    res.sigmas["fwhm"] = np.nan
    return res


def _weighted_line(u, v, sv):
    """Weighted straight-line fit v = c + m u; returns (c, m, cov, chi2)."""
    w = 1.0 / np.maximum(sv, ERR_FLOOR) ** 2
    a = np.column_stack([np.ones_like(u), u])
    aw = a * np.sqrt(w)[:, None]
    vw = v * np.sqrt(w)
    coef, *_ = np.linalg.lstsq(aw, vw, rcond=None)
    cov = np.linalg.inv(aw.T @ aw)
    chi2 = float(np.sum((aw @ coef - vw) ** 2))
    return coef, cov, chi2


def fit_power_law(n_values, t2_values, t2_errs=None):
    """Fit ``T2 = prefactor * N^beta`` as a weighted line in log-log space."""
    n = np.asarray(n_values, dtype=float)
    t = np.asarray(t2_values, dtype=float)
    if n.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(n <= 0) or np.any(t <= 0):
        raise ValueError("power-law fit needs positive N and T2")
    u, v = np.log(n), np.log(t)
    absolute = t2_errs is not None
    sv = np.asarray(t2_errs, dtype=float) / t if absolute else np.ones_like(v)
    coef, cov, chi2 = _weighted_line(u, v, sv)
    if not absolute:
        cov = cov * chi2 / max(n.size - 2, 1)
    resid = (coef[0] + coef[1] * u - v) / np.maximum(sv, ERR_FLOOR)
    pref = float(np.exp(coef[0]))
    return FitResult(
        params={"prefactor": pref, "beta": float(coef[1])},
        sigmas={"prefactor": float(pref * np.sqrt(cov[0, 0])), "beta": float(np.sqrt(cov[1, 1]))},
        residual_rms=float(np.sqrt(np.mean(resid ** 2))),
        converged=True,
        n_iter=1,
        model="power_law",
    )


def fit_boltzmann(temperatures, ratios, errs=None):
    """Fit ``ratio = a exp(-h Delta / k_B T)``; returns ``delta_fit`` (Hz) and ``amplitude``."""
    temps = np.asarray(temperatures, dtype=float)
    r = np.asarray(ratios, dtype=float)
    names = ["delta_fit", "amplitude"]
    if temps.size < 2 or np.unique(temps).size < 2:
        return FitResult({k: np.nan for k in names}, {k: np.inf for k in names}, np.inf, False, 0,
                         "need ratios at two or more distinct temperatures", "boltzmann")
    if np.any(temps <= 0) or np.any(r <= 0):
        raise ValueError("temperatures and ratios must be positive")
    order = np.argsort(temps)
    temps, r = temps[order], r[order]
    e = None if errs is None else np.asarray(errs, dtype=float)[order]
    # linear guess in log space
    sv = np.ones_like(r) if e is None else e / r
    coef, _, _ = _weighted_line(1.0 / temps, np.log(r), sv)
    d0 = -coef[1] * K_B / H_PLANCK
    a0 = float(np.exp(coef[0]))
    scale = H_PLANCK / K_B * 1e9  # parameterise Delta in GHz

    def f(tt, d_ghz, a):
        return a * np.exp(-d_ghz * scale / tt)

    res = _lsq(f, [d0 / 1e9, a0], ["delta_fit", "amplitude"], temps, r, e, "boltzmann")
    if res.converged or np.isfinite(res.params["delta_fit"]):
        res.params["delta_fit"] *= 1e9
        res.sigmas["delta_fit"] *= 1e9
    return res


def binomial_error(p, n):
    """Standard error of a binomial mean estimate."""
    p = np.asarray(p, dtype=float)
    return np.sqrt(np.clip(p * (1 - p), 0, None) / n)
