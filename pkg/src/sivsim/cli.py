"""Command-line front end: ``sivsim run|validate|dump-canonical <cfg>``.

``run`` writes ``data.csv``, ``summary.json`` and (unless ``--no-plot``)
``plot.svg`` into the output directory: ``--out`` if given, else the
config's ``[run] out`` (relative paths resolved against the output root),
else ``<root>/<config stem>``. The output root is ``$SIVSIM_OUT`` or
``./sivsim_out``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, calibration, noise
from .analysis import fit_boltzmann, fit_decay, fit_oscillation, fit_power_law, fit_resonance, rabi_lineshape
from .config import ConfigError, ExperimentConfig, dump_canonical, load_config
from .experiment import DataTable, RunOptions, System, run_experiment
from .model import LB_DOWN, LB_UP, level_diagram, phonon_rates, ple_line_ratio, ple_spectrum, rate_set
from .readout import (build_histograms, no_flip_control, optimal_threshold, poisson_fidelity,
                      readout_statistics, shelving_duty_loss, simulate_counts, threshold_fidelity)
from .rng import label_id, shot_rng
from .sequences import build_cpmg, build_odmr, build_pumping, build_rabi, build_ramsey, build_t1

TARGET_MEANS = (6.2, 0.52)  # readout means of the no-flip control


def _clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def fit_errors(signal, n_shots):
    """Binomial errors with a Laplace pseudo-count, so 0/1 means keep a finite weight."""
    k = np.asarray(signal) * n_shots
    p = (k + 1) / (n_shots + 2)
    return np.sqrt(p * (1 - p) / n_shots)


def _seq_kwargs(cfg: ExperimentConfig, shots):
    kw = {"shots": shots, "qubit_init": cfg.exp_value("qubit_init")}
    for k in ("init", "readout"):
        if k in cfg.experiment:
            kw[k] = cfg.experiment[k]
    return kw


# ---------------------------------------------------------------------------
# Experiments: each returns (DataTable, summary dict, plot spec)
# ---------------------------------------------------------------------------

def _coherent(cfg, seed, options, shots):
    system = System(cfg.params(), cfg.field_config(), cfg.temperature)
    models = cfg.noise_models()
    kind = cfg.kind
    e = cfg.experiment
    kw = _seq_kwargs(cfg, shots)
    diag = level_diagram(system.params, system.field)
    summary = {"f_qubit_hz": diag.f_qubit, "delta_gs_ghz": diag.delta_gs / 1e9}
    if kind == "odmr":
        f_center = e.get("f_center", "auto")
        f_center = diag.f_qubit if f_center == "auto" else f_center
        seq = build_odmr(e["tau_mw"], f_center, e["f_span"], e["n_points"], e.get("rabi"), **kw)
    elif kind == "rabi":
        seq = build_rabi(e["durations"], e["rabi"], e.get("detuning", 0.0), **kw)
    elif kind == "ramsey":
        extra = {"rabi": e["rabi"]} if "rabi" in e else {}
        seq = build_ramsey(e["delays"], e["detuning"], ideal=cfg.exp_value("ideal"), **extra, **kw)
    else:
        seq = build_t1(e["waits"], **kw)
    table = run_experiment(seq, system, models, seed, options)
    x, y = table["sweep"], table["signal"]
    err = fit_errors(y, shots)
    curve = None
    if kind == "odmr":
        fit = fit_resonance(x, y, e["tau_mw"], err, rabi=seq.segments[1].rabi)
        summary["f_resonance_hz"] = f_center + fit.params["center"] if fit.converged else None
        summary["linewidth_hz"] = fit.params["fwhm"]
        if fit.converged:
            curve = lambda xx: rabi_lineshape(xx, fit["amplitude"], fit["center"], fit["rabi"], fit["offset"],
                                              e["tau_mw"])
    elif kind in ("rabi", "ramsey"):
        fit = fit_oscillation(x, y, err, envelope="exp" if kind == "rabi" else "gauss")
        key = "rabi_fit_hz" if kind == "rabi" else "fringe_frequency_hz"
        summary[key] = fit.params["frequency"]
        if kind == "ramsey":
            summary["t2star_s"] = fit.params["t_decay"]
        if fit.converged:
            pw = 1.0 if kind == "rabi" else 2.0
            curve = lambda xx: fit["amplitude"] * np.cos(2 * np.pi * fit["frequency"] * xx + fit["phase"]) \
                * np.exp(-np.abs(xx / fit["t_decay"]) ** pw) + fit["offset"]
    else:
        fit = fit_decay(x, y, err, model="exp", offset=True)
        summary["t1_s"] = fit.params["t_decay"]
        if fit.converged:
            curve = lambda xx: fit["amplitude"] * np.exp(-xx / fit["t_decay"]) + fit["offset"]
    summary["fits"] = {kind: fit.to_dict()}
    plot = {"kind": "sweep", "series": [("", x, y, table["error"], curve)],
            "xlabel": f"{seq.sweep.name} [{seq.sweep.unit}]", "ylabel": "P(bright)"}
    return table, summary, plot


def _cpmg(cfg, seed, options, shots):
    system = System(cfg.params(), cfg.field_config(), cfg.temperature)
    models = cfg.noise_models()
    e = cfg.experiment
    kw = _seq_kwargs(cfg, shots)
    if "rabi" in e:
        kw["rabi"] = e["rabi"]
    p_fit = e.get("fit_exponent", "free")
    p_fit = None if p_fit == "free" else p_fit
    scaling = cfg.exp_value("time_scaling")
    base = np.asarray(e["total_times"])
    columns, fits, t2, t2_err, n_ok, series = {}, {}, [], [], [], []
    gaussian = all(isinstance(m, (noise.OU, noise.Tabulated, noise.QuasiStatic)) for m in models)
    for n in e["n_pulses"]:
        times = base * float(n) ** scaling
        seq = build_cpmg(n, times, ideal=cfg.exp_value("ideal"), **kw)
        table = run_experiment(seq, system, models, seed, options)
        x, y = table["sweep"], table["signal"]
        fit = fit_decay(x, y, fit_errors(y, shots), model="stretched", p=p_fit, offset=True)
        fits[f"N={n}"] = fit.to_dict()
        if fit.converged:
            t2.append(fit["t_decay"])
            t2_err.append(fit.sigmas["t_decay"])
            n_ok.append(n)
        cols = {"n_pulses": [int(n)] * len(table), **table.columns}
        if gaussian:
            cols["w_analytic"] = [float(np.prod([noise.coherence_decay(m, n, t) for m in models]))
                                  for t in x]
        for k, v in cols.items():
            columns.setdefault(k, []).extend(v)
        curve = None
        if fit.converged:
            curve = (lambda f: lambda xx: f["amplitude"] * np.exp(-np.abs(xx / f["t_decay"]) ** f["p"])
                     + f["offset"])(fit)
        series.append((f"N={n}", x, y, table["error"], curve))
    summary = {"t2_s": {str(n): v for n, v in zip(n_ok, t2)},
               "t2_err_s": {str(n): v for n, v in zip(n_ok, t2_err)}, "fits": fits}
    if len(n_ok) >= 3:
        pl = fit_power_law(n_ok, t2, t2_err)
        summary["fits"]["power_law"] = pl.to_dict()
        summary["beta"] = pl["beta"]
    table = DataTable(columns, {"kind": "cpmg", "seed": int(seed)})
    plot = {"kind": "sweep", "series": series, "xlabel": "total time [s]", "ylabel": "P(bright)"}
    return table, summary, plot


def _pumping(cfg, seed, options, shots):
    e = cfg.experiment
    params = cfg.params()
    if "alphas" in e:
        cases = list(zip(e["alphas"], e["b_mags"]))
        refs = [None] * len(cases)
    else:
        cal = calibration.pumping_cases()
        cases = [(f.alpha, f.b_mag) for f, _ in cal]
        refs = [tau for _, tau in cal]
    seq = build_pumping(cases, cfg.exp_value("saturation"), shots, cfg.exp_value("transition"))
    system = System(params, cfg.field_config(), cfg.temperature)
    table = run_experiment(seq, system, (), seed, options)
    rows = []
    for i, ref in enumerate(refs):
        rows.append({"alpha_deg": table["alpha"][i], "b_mag_g": table["b_mag"][i],
                     "mean_s": table["signal"][i], "error_s": table["error"][i],
                     "exact_s": table["exact"][i], "reference_s": ref,
                     "ratio_to_reference": None if ref is None else table["signal"][i] / ref})
    summary = {"cases": rows}
    plot = {"kind": "bars", "labels": [f"{a:.3g} deg, {b:.4g} G" for a, b in cases],
            "values": table["signal"], "errors": table["error"], "refs": refs, "ylabel": "pumping time [s]"}
    return table, summary, plot


def _readout_histogram(cfg, seed, options, shots):
    e = cfg.experiment
    params = cfg.params()
    window = cfg.exp_value("window")
    threshold = cfg.run_value("threshold")
    rates = rate_set(params, cfg.field_config(), cfg.temperature, cfg.exp_value("saturation"))
    eta = params.eta_collect
    if not cfg.exp_value("spin_flips"):
        rates, eta = no_flip_control(rates, window, *TARGET_MEANS)
    cd = simulate_counts(LB_DOWN, rates, window, eta, shots, seed, stream=label_id("readout:down"))
    cu = simulate_counts(LB_UP, rates, window, eta, shots, seed, stream=label_id("readout:up"))
    hist = build_histograms(cd, cu, window)
    f_down, f_up, f_avg = threshold_fidelity(hist, threshold)
    best_t, best_f = optimal_threshold(hist)
    exact = readout_statistics(rates, window, eta, threshold, n_max=int(3 * max(cd.max(), 20)))
    summary = {
        "mean_down": float(cd.mean()), "mean_up": float(cu.mean()),
        "f_down": f_down, "f_up": f_up, "f_avg": f_avg, "threshold": threshold,
        "f_avg_error": float(0.5 * np.sqrt(f_down * (1 - f_down) / shots + f_up * (1 - f_up) / shots)),
        "optimal_threshold": best_t, "f_avg_optimal": best_f,
        "exact": {k: exact[k] for k in ("mean_down", "mean_up", "f_down", "f_up", "f_avg")},
        "poisson_oracle_f_avg": poisson_fidelity(cd.mean(), cu.mean(), threshold)[2],
        "duty_cycle_loss": shelving_duty_loss(rates, window),
        "spin_flips": cfg.exp_value("spin_flips"),
    }
    table = DataTable({"count": [int(c) for c in hist.bin_edges], "freq_down": [int(v) for v in hist.freq_down],
                       "freq_up": [int(v) for v in hist.freq_up]}, {"kind": "readout_histogram"})
    plot = {"kind": "hist", "counts": hist.bin_edges, "down": hist.freq_down, "up": hist.freq_up,
            "threshold": threshold}
    return table, summary, plot


def _ple(cfg, seed, options, shots):
    e = cfg.experiment
    params, fcfg = cfg.params(), cfg.field_config()
    dgs = level_diagram(params, fcfg).delta_gs
    linewidth = cfg.exp_value("linewidth")
    temps = np.asarray(e["temperatures"])
    n_spec = cfg.exp_value("spectrum_points")
    rel = cfg.exp_value("rel_noise")
    ratios, errs, exact, pol = [], [], [], []
    for temp in temps:
        r = ple_line_ratio(ple_spectrum(params, fcfg, temp, linewidth, np.array([-dgs, 0.0])), dgs, linewidth)
        exact.append(r)
        z = shot_rng(seed, label_id(f"ple:T={float(temp)!r}")).standard_normal() if rel > 0 else 0.0
        ratios.append(r * (1 + rel * z))
        errs.append(rel * r)
        pol.append(phonon_rates(params, dgs, temp)[2])
    summary = {"delta_gs_ghz": dgs / 1e9,
               "orbital_polarization_0p5K": phonon_rates(params, dgs, 0.5)[2]}
    if temps.size >= 2 and min(ratios) > 0:
        fit = fit_boltzmann(temps, ratios, errs if rel > 0 else None)
        summary["fits"] = {"boltzmann": fit.to_dict()}
        d = fit.params["delta_fit"]
        summary["delta_fit_ghz"] = d / 1e9
        summary["delta_fit_ghz_sigma"] = fit.sigmas["delta_fit"] / 1e9
        summary["delta_fit_rel_error"] = abs(d - dgs) / dgs
    if n_spec > 0:
        det = np.linspace(-1.5 * dgs, 0.5 * dgs, n_spec)
        cols = {"temperature": [], "detuning": [], "intensity": []}
        for temp in temps:
            spec = ple_spectrum(params, fcfg, temp, linewidth, det)
            cols["temperature"] += [float(temp)] * n_spec
            cols["detuning"] += [float(v) for v in spec[:, 0]]
            cols["intensity"] += [float(v) for v in spec[:, 1]]
        table = DataTable(cols, {"kind": "ple"})
        plot = {"kind": "spectra", "temps": temps, "det": det, "cols": cols}
    else:
        table = DataTable({"temperature": [float(t) for t in temps], "ratio": ratios, "error": errs,
                           "exact": exact, "orbital_polarization": pol}, {"kind": "ple"})
        plot = {"kind": "boltzmann", "temps": temps, "ratios": np.asarray(ratios), "errs": np.asarray(errs),
                "exact": np.asarray(exact)}
    return table, summary, plot


RUNNERS = {"odmr": _coherent, "rabi": _coherent, "ramsey": _coherent, "t1": _coherent, "cpmg": _cpmg,
           "pumping": _pumping, "readout_histogram": _readout_histogram, "ple": _ple}


def execute(cfg: ExperimentConfig, seed=None, workers=None):
    """Run a parsed config; returns ``(DataTable, summary, plot spec)``."""
    seed = cfg.run_value("seed") if seed is None else int(seed)
    workers = cfg.run_value("workers") if workers is None else int(workers)
    options = RunOptions(dt=cfg.run.get("dt"), readout=cfg.run_value("readout"),
                         threshold=cfg.run_value("threshold"), pulse_error=cfg.run_value("pulse_error"),
                         phonon_dephasing=cfg.run_value("phonon_dephasing"), workers=workers)
    t0 = time.perf_counter()
    table, summary, plot = RUNNERS[cfg.kind](cfg, seed, options, cfg.run_value("shots"))
    summary.update({"experiment": cfg.kind, "seed": seed, "workers": workers,
                    "wall_time_s": time.perf_counter() - t0, "config": dump_canonical(cfg),
                    "version": __version__})
    return table, _clean(summary), plot


# ---------------------------------------------------------------------------
# Plotting
# ---------------------------------------------------------------------------

def write_plot(plot, path, title=""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "sivsim"
    fig, ax = plt.subplots(figsize=(6, 4))
    kind = plot["kind"]
    if kind == "sweep":
        for label, x, y, err, curve in plot["series"]:
            h = ax.errorbar(x, y, err, fmt="o", ms=3, label=label or None)
            if curve is not None:
                xx = np.linspace(x.min(), x.max(), 400)
                ax.plot(xx, curve(xx), "-", color=h[0].get_color(), lw=1)
        ax.set_xlabel(plot["xlabel"])
        ax.set_ylabel(plot["ylabel"])
        if any(s[0] for s in plot["series"]):
            ax.legend(fontsize=8)
    elif kind == "bars":
        pos = np.arange(len(plot["values"]))
        ax.bar(pos, plot["values"], yerr=plot["errors"], color="C0", label="simulated")
        refs = [np.nan if r is None else r for r in plot["refs"]]
        ax.plot(pos, refs, "k_", ms=20, mew=2, label="reference")
        ax.set_yscale("log")
        ax.set_xticks(pos, plot["labels"], fontsize=7)
        ax.set_ylabel(plot["ylabel"])
        ax.legend(fontsize=8)
    elif kind == "hist":
        c = plot["counts"]
        ax.bar(c - 0.2, plot["down"], 0.4, label="init down")
        ax.bar(c + 0.2, plot["up"], 0.4, label="init up")
        ax.axvline(plot["threshold"] + 0.5, color="k", ls="--", lw=1)
        ax.set_xlabel("photon counts")
        ax.set_ylabel("occurrences")
        ax.legend(fontsize=8)
    elif kind == "boltzmann":
        t = plot["temps"]
        ax.errorbar(1 / t, plot["ratios"], plot["errs"], fmt="o", ms=3, label="simulated")
        ax.plot(1 / t, plot["exact"], "-", lw=1, label="model")
        ax.set_yscale("log")
        ax.set_xlabel("1 / T [1/K]")
        ax.set_ylabel("I_D / I_C")
        ax.legend(fontsize=8)
    elif kind == "spectra":
        cols = plot["cols"]
        n = len(plot["det"])
        for i, temp in enumerate(plot["temps"]):
            sl = slice(i * n, (i + 1) * n)
            ax.plot(np.asarray(cols["detuning"][sl]) / 1e9, cols["intensity"][sl], lw=1, label=f"{temp:g} K")
        ax.set_xlabel("detuning [GHz]")
        ax.set_ylabel("intensity [I_C]")
        ax.legend(fontsize=8)
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def output_dir(cfg: ExperimentConfig, cfg_path: Path, out=None):
    if out is not None:
        return Path(out)
    root = Path(os.environ.get("SIVSIM_OUT") or "sivsim_out")
    if "out" in cfg.run:
        p = Path(cfg.run["out"])
        return p if p.is_absolute() else root / p
    return root / cfg_path.stem


def run_command(cfg_path, seed=None, workers=None, out=None, plot=True):
    cfg_path = Path(cfg_path)
    cfg = load_config(cfg_path)
    table, summary, spec = execute(cfg, seed, workers)
    dest = output_dir(cfg, cfg_path, out)
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "data.csv").write_text(table.to_csv(), encoding="utf-8", newline="")
    with open(dest / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
        fh.write("\n")
    if plot and cfg.run_value("plot"):
        write_plot(spec, dest / "plot.svg", f"{cfg_path.stem} ({cfg.kind}, seed {summary['seed']})")
    return dest, summary


def _error_json(exc):
    if isinstance(exc, ConfigError):
        return exc.to_dict()
    if isinstance(exc, FileNotFoundError):
        return {"error": "missing_file", "line": None, "message": str(exc)}
    return {"error": "runtime", "type": type(exc).__name__, "message": str(exc)}


def build_parser():
    ap = argparse.ArgumentParser(prog="sivsim", description="SiV- spin qubit experiment simulator")
    ap.add_argument("--version", action="version", version=f"sivsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="simulate a config and write data.csv, summary.json, plot.svg")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override [run] seed")
    run.add_argument("--workers", type=int, default=None, help="worker processes (results do not depend on it)")
    run.add_argument("--out", default=None, help="output directory (default: $SIVSIM_OUT/<config stem>)")
    run.add_argument("--no-plot", action="store_true", help="skip plot.svg")
    val = sub.add_parser("validate", help="parse a config and report problems")
    val.add_argument("config")
    dump = sub.add_parser("dump-canonical", help="print the canonical form of a config")
    dump.add_argument("config")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            if args.workers is not None and args.workers < 1:
                raise ValueError("--workers must be >= 1")
            dest, summary = run_command(args.config, args.seed, args.workers, args.out, not args.no_plot)
            print(json.dumps({"status": "ok", "out": str(dest), "experiment": summary["experiment"],
                              "wall_time_s": summary["wall_time_s"]}, sort_keys=True))
        elif args.command == "validate":
            cfg = load_config(args.config)
            print(json.dumps({"status": "ok", "experiment": cfg.kind, "noise_blocks": len(cfg.noise)},
                             sort_keys=True))
        else:
            sys.stdout.write(dump_canonical(load_config(args.config)))
    except Exception as exc:  # every failure becomes a machine-readable record
        print(json.dumps(_error_json(exc), sort_keys=True), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
