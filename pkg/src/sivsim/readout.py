"""Single-shot readout: photon-count histograms, thresholds and fidelities."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .engine import jump_trajectory
from .model import LB_DOWN, LB_UP, RateSet, generator, level_graph
from .rng import shot_rng


@dataclass
class CountHistogram:
    bin_edges: np.ndarray  # integer photon counts 0..max
    freq_down: np.ndarray
    freq_up: np.ndarray
    n_shots: int
    window: float

    def mean(self, state):
        f = self.freq_down if state == "down" else self.freq_up
        return float(np.dot(self.bin_edges, f) / f.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["count", "freq_down", "freq_up"])
        for c, d, u in zip(self.bin_edges, self.freq_down, self.freq_up):
            w.writerow([int(c), int(d), int(u)])
        return buf.getvalue()


def simulate_readout_window(init_level, rates: RateSet, window, eta_collect, seed, *keys):
    """Collected photon count of one readout window driving the ``rates`` transition."""
    if not window > 0:
        raise ValueError("window must be > 0")
    q, rad = level_graph(rates)
    rec = jump_trajectory(init_level, q, rad, window, eta_collect, rng=shot_rng(seed, *keys))
    return rec.photon_count


def simulate_counts(init_level, rates: RateSet, window, eta_collect, n_shots, seed, stream=0):
    """Counts of ``n_shots`` independent windows; shot ``k`` uses stream ``(seed, stream, k)``."""
    q, rad = level_graph(rates)
    out = np.empty(n_shots, dtype=np.int64)
    for k in range(n_shots):
        out[k] = jump_trajectory(init_level, q, rad, window, eta_collect,
                                 rng=shot_rng(seed, stream, k)).photon_count
    return out


def build_histograms(counts_down, counts_up, window) -> CountHistogram:
    counts_down = np.asarray(counts_down, dtype=np.int64)
    counts_up = np.asarray(counts_up, dtype=np.int64)
    if counts_down.size == 0 or counts_up.size == 0:
        raise ValueError("empty count record")
    if counts_down.size != counts_up.size:
        raise ValueError("both prepared states need the same number of shots")
    top = int(max(counts_down.max(), counts_up.max()))
    return CountHistogram(
        bin_edges=np.arange(top + 1),
        freq_down=np.bincount(counts_down, minlength=top + 1),
        freq_up=np.bincount(counts_up, minlength=top + 1),
        n_shots=int(counts_down.size),
        window=float(window),
    )


def threshold_fidelity(hist: CountHistogram, threshold: int):
    """(f_down, f_up, f_avg) for the rule n > threshold -> down, n <= threshold -> up."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    bright = hist.bin_edges > threshold
    f_down = hist.freq_down[bright].sum() / hist.freq_down.sum()
    f_up = hist.freq_up[~bright].sum() / hist.freq_up.sum()
    return float(f_down), float(f_up), float(0.5 * (f_down + f_up))


def optimal_threshold(hist: CountHistogram):
    """Threshold maximising the average fidelity; ties go to the smaller threshold."""
    best_t, best_f = 0, -1.0
    for t in range(int(hist.bin_edges[-1]) + 1):
        f = threshold_fidelity(hist, t)[2]
        if f > best_f + 1e-15:
            best_t, best_f = t, f
    return best_t, best_f


def poisson_fidelity(mean_down, mean_up, threshold=1):
    """Analytic fidelities for Poissonian count distributions."""
    from scipy.stats import poisson

    f_down = float(poisson.sf(threshold, mean_down))
    f_up = float(poisson.cdf(threshold, mean_up))
    return f_down, f_up, 0.5 * (f_down + f_up)


# ---------------------------------------------------------------------------
# Exact ensemble quantities of the jump process
# ---------------------------------------------------------------------------

def level_distribution(p0, q, duration):
    """Level occupations after ``duration`` from the master equation."""
    g = generator(np.asarray(q, dtype=float))
    return np.asarray(p0, dtype=float) @ expm(g * duration)


def expected_emissions(p0, q, radiative, duration):
    """Expected number of photon-emitting jumps in ``[0, duration]``."""
    q = np.asarray(q, dtype=float)
    g = generator(q)
    v = (q * radiative).sum(axis=1)
    n = g.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = g
    aug[:n, n] = v
    e = expm(aug * duration)
    return float(np.asarray(p0, dtype=float) @ e[:n, n])


def count_distribution(p0, q, radiative, duration, eta_collect, n_max=60):
    """Exact distribution of collected counts in ``[0, duration]``.

    Solves the count-resolved master equation (counts capped at ``n_max``,
    whose bin absorbs the tail). Returns ``(probabilities, end_levels)`` with
    ``probabilities[n]`` and ``end_levels[n, i]`` the joint probability of n
    counts and ending in level i.
    """
    q = np.asarray(q, dtype=float)
    g = generator(q)
    jump = eta_collect * q * radiative
    g0 = g - jump
    n = g.shape[0]
    big = np.zeros(((n_max + 1) * n, (n_max + 1) * n))
    for k in range(n_max + 1):
        sl = slice(k * n, (k + 1) * n)
        big[sl, sl] = g0 if k < n_max else g
        if k < n_max:
            big[sl, (k + 1) * n:(k + 2) * n] = jump
    start = np.zeros((n_max + 1) * n)
    start[:n] = p0
    joint = (start @ expm(big * duration)).reshape(n_max + 1, n)
    joint = np.clip(joint, 0.0, None)
    return joint.sum(axis=1), joint


def readout_statistics(rates: RateSet, window, eta_collect, threshold=1, n_max=60):
    """Exact readout means and fidelities for |down> and |up> preparations."""
    q, rad = level_graph(rates)
    out = {}
    for name, lvl in (("down", LB_DOWN), ("up", LB_UP)):
        p0 = np.zeros(q.shape[0])
        p0[lvl] = 1.0
        probs, _ = count_distribution(p0, q, rad, window, eta_collect, n_max)
        out[name] = probs
    k = np.arange(n_max + 1)
    f_down = float(out["down"][k > threshold].sum())
    f_up = float(out["up"][k <= threshold].sum())
    return {
        "mean_down": float(np.dot(k, out["down"])),
        "mean_up": float(np.dot(k, out["up"])),
        "f_down": f_down,
        "f_up": f_up,
        "f_avg": 0.5 * (f_down + f_up),
        "p_down": out["down"],
        "p_up": out["up"],
    }


def shelving_duty_loss(rates: RateSet, window):
    """Fraction of the readout window spent shelved in the upper branch (from |down>)."""
    q, _ = level_graph(rates)
    g = generator(q)
    n = g.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = g
    aug[2:4, n] = 1.0  # UB levels
    e = expm(aug * window)
    p0 = np.zeros(n)
    p0[LB_DOWN] = 1.0
    return float(p0 @ e[:n, n] / window)


def no_flip_control(rates: RateSet, window, mean_down, mean_up):
    """Spin-conserving copy of ``rates`` plus the ``eta_collect`` reproducing two mean counts.

    Every spin-flip channel (non-cycling optical decay, T1) is removed, so
    the counts of each prepared state are Poissonian; the collection
    efficiency and off-resonant rate are then solved so the mean counts of
    |down> and |up> equal ``mean_down`` and ``mean_up``.
    Returns ``(rates, eta_collect)``.
    """
    base = replace(rates, cyclicity_down=1.0, cyclicity_up=1.0, t1_up=0.0, t1_down=0.0)
    dark, bright = (LB_UP, LB_DOWN) if rates.transition == "down" else (LB_DOWN, LB_UP)

    def emissions(r, level):
        q, rad = level_graph(replace(base, r_offres=r))
        p0 = np.zeros(q.shape[0])
        p0[level] = 1.0
        return expected_emissions(p0, q, rad, window)

    eta = mean_down / emissions(base.r_offres, bright)
    if mean_up <= 0:
        return replace(base, r_offres=0.0), eta
    r = brentq(lambda x: eta * emissions(x, dark) - mean_up, 0.0, base.r_scatter, xtol=1e-9, rtol=1e-14)
    return replace(base, r_offres=float(r)), eta
