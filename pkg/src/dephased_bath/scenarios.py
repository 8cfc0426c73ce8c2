"""Canned figure scenarios: configs, plot-ready datasets and pass/fail checks.

Initial polarizations are not part of the published parameter sets. The
defaults here are a fully polarized system (+1/2) against a fully polarized
bath (-1/2); the reproduction target is the shape of the curves.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from . import analysis
from .config import dump_config, validate_config
from .io import atomic_writer, write_json
from .runner import run_engines

FIGURES = ("fig1a", "fig1b", "fig1c", "fig2a", "fig2b")

FIG1_XI = 1.0
FIG1_ALPHA = 6.0
FIG2_ALPHA = 6.0
FIG2_XI_BATH = 1.0
FIG2_XI_SB = 1.0 / 20.0
FIG2_TAU = 1200.0
Z_SYSTEM = 0.5
Z_BATH = -0.5


def scenario(name: str, n_bath: int, coupling: dict, alpha: float, bath: dict, z_s: float,
             t_max: float, dt_out: float, engines: list) -> dict:
    return validate_config({
        "name": name,
        "model": {"n_bath": n_bath, "h0": 1.0, "coupling": coupling},
        "dephasing": {"alpha": alpha, "system_alpha": 0.0},
        "initial": {"bath": bath, "system": {"z": z_s, "x": 0.0}},
        "time": {"t_max": t_max, "dt_out": dt_out, "integrator": {"method": "rk4"}},
        "engines": engines,
    })


def ata(xi: float) -> dict:
    return {"type": "ata", "params": {"xi": xi}}


def uniform(z: float) -> dict:
    return {"kind": "uniform", "params": {"z": z}}


def fig1_config(alpha: float = FIG1_ALPHA, t_max: float = 8.0, dt_out: float = 0.01,
                bath: dict | None = None, engines=("exact", "markovian", "reduced"),
                name: str = "fig1") -> dict:
    return scenario(name, 3, ata(FIG1_XI), alpha, bath or uniform(Z_BATH), Z_SYSTEM, t_max, dt_out,
                    list(engines))


def fig2_configs(t_max: float, dt_out: float) -> dict:
    nn = {"type": "nn", "params": {"xi_bath": FIG2_XI_BATH, "xi_sb": FIG2_XI_SB}}
    # Same effective system-bath coupling: N xi^2 = xi_SB^2.
    xi_ata = FIG2_XI_SB / math.sqrt(3.0)
    return {
        "nn": scenario("fig2_nn", 3, nn, FIG2_ALPHA, uniform(Z_BATH), Z_SYSTEM, t_max, dt_out,
                       ["exact"]),
        "ata": scenario("fig2_ata", 3, ata(xi_ata), FIG2_ALPHA, uniform(Z_BATH), Z_SYSTEM, t_max,
                        dt_out, ["exact"]),
    }


def _check(name: str, value: float, threshold: float, op: str) -> dict:
    ok = {"<=": value <= threshold, ">=": value >= threshold, ">": value > threshold}[op]
    return {"name": name, "value": float(value), "threshold": float(threshold), "op": op,
            "passed": bool(ok)}


def _conservation_checks(series) -> list:
    return [
        _check("sum_z_drift", float(np.max(np.abs(series.sum_z - series.sum_z[0]))), 1e-8, "<="),
        _check("pair_sum_drift", float(np.max(np.abs(series.pair_sum - series.pair_sum[0]))), 1e-8,
               "<="),
    ]


def _z_inf(cfg) -> float:
    return (3 * Z_BATH + cfg["initial"]["system"]["z"]) / 4.0


def fig1a():
    cfg = fig1_config(name="fig1a")
    res = run_engines(cfg)
    ex, mk, so = (res.series[k] for k in ("exact", "markovian", "reduced"))
    swing = abs(Z_SYSTEM - _z_inf(cfg))
    post = ex.times >= 1.0
    # Alternative preparations sharing one total bath polarization.
    z_alt = -0.3
    alts = {
        "uniform": uniform(z_alt),
        "mixture": {"kind": "mixture", "params": {"p": z_alt + 0.5}},
        "explicit": {"kind": "explicit", "params": {"z": [-0.5, -0.4, 0.0]}},
    }
    alt_cfgs = {k: fig1_config(bath=b, engines=["exact"], name=f"fig1a_{k}") for k, b in alts.items()}
    alt = {k: run_engines(c).series["exact"].z_s for k, c in alt_cfgs.items()}
    inv = max(float(np.max(np.abs(alt[k] - alt["uniform"]))) for k in ("mixture", "explicit"))
    cols = {"t": ex.times, "z_s_exact": ex.z_s, "z_s_markovian": mk.z_s, "z_s_reduced": so.z_s}
    cols.update({f"z_{k}_exact": ex.z[:, k - 1] for k in (1, 2, 3)})
    cols.update({f"z_s_{k}": v for k, v in alt.items()})
    checks = [
        _check("markovian_agreement_rel", float(np.max(np.abs(ex.z_s - mk.z_s)[post])) / swing, 0.05,
               "<="),
        _check("preparation_invariance", inv, 1e-6, "<="),
    ] + _conservation_checks(ex)
    configs = {"fig1a": cfg, **alt_cfgs}
    plot = dict(x="t", y=["z_s_exact", "z_s_markovian", "z_s_uniform", "z_s_mixture",
                          "z_1_exact"], ylabel="polarization")
    return configs, {"fig1a": cols}, checks, plot


def fig1b():
    cfg = fig1_config(alpha=0.0, t_max=20.0, dt_out=0.01, engines=["exact"], name="fig1b")
    ex = run_engines(cfg).series["exact"]
    swing = abs(Z_SYSTEM - _z_inf(cfg))
    rec = analysis.recurrence_metric(ex.times, ex.z_s, _z_inf(cfg))
    cols = {"t": ex.times, "z_s_exact": ex.z_s}
    cols.update({f"z_{k}_exact": ex.z[:, k - 1] for k in (1, 2, 3)})
    checks = [_check("revival_amplitude_rel", rec.revival_amplitude / swing, 0.5, ">=")]
    checks += _conservation_checks(ex)
    return {"fig1b": cfg}, {"fig1b": cols}, checks, dict(x="t", y=["z_s_exact", "z_1_exact"],
                                                         ylabel="polarization")


def fig1c():
    cfg = fig1_config(t_max=0.5, dt_out=0.002, name="fig1c")
    res = run_engines(cfg)
    ex, mk, so = (res.series[k] for k in ("exact", "markovian", "reduced"))
    w = ex.times <= 0.3 + 1e-12
    cols = {"t": ex.times, "z_s_exact": ex.z_s, "z_s_markovian": mk.z_s, "z_s_reduced": so.z_s}
    checks = [
        _check("second_order_max_dev", float(np.max(np.abs(ex.z_s - so.z_s)[w])), 1e-3, "<="),
        _check("markovian_max_dev", float(np.max(np.abs(ex.z_s - mk.z_s)[w])), 1e-2, ">"),
    ] + _conservation_checks(ex)
    return {"fig1c": cfg}, {"fig1c": cols}, checks, dict(
        x="t", y=["z_s_exact", "z_s_markovian", "z_s_reduced"], ylabel="z_s")


def _fig2_long():
    cfgs = fig2_configs(t_max=8000.0, dt_out=1.0)
    return cfgs, {k: run_engines(c).series["exact"] for k, c in cfgs.items()}


def fig2a():
    cfgs, runs = _fig2_long()
    nn, at = runs["nn"], runs["ata"]
    swing = abs(Z_SYSTEM - _z_inf(cfgs["nn"]))
    lo = analysis.transient_end(FIG2_ALPHA)
    tau = {k: 1.0 / analysis.fit_decay(s.times, s.z_s, "exp_to_offset", (lo, s.times[-1])).rate
           for k, s in runs.items()}
    gap = float(np.max(np.abs(nn.z_s - at.z_s)))
    cols = {"t": nn.times, "z_s_nn": nn.z_s, "z_s_ata": at.z_s}
    cols.update({f"z_{k}_nn": nn.z[:, k - 1] for k in (1, 2, 3)})
    checks = [
        _check("tau_nn_vs_ata_rel", abs(tau["nn"] - tau["ata"]) / tau["ata"], 0.10, "<="),
        _check("tau_nn_vs_1200_rel", abs(tau["nn"] - FIG2_TAU) / FIG2_TAU, 0.15, "<="),
        _check("tau_ata_vs_1200_rel", abs(tau["ata"] - FIG2_TAU) / FIG2_TAU, 0.15, "<="),
        _check("nn_ata_gap_rel", gap / swing, 0.01, "<="),
    ] + _conservation_checks(nn) + _conservation_checks(at)
    configs = {f"fig2a_{k}": c for k, c in cfgs.items()}
    return configs, {"fig2a": cols}, checks, dict(
        x="t", y=["z_s_nn", "z_s_ata", "z_1_nn", "z_2_nn", "z_3_nn"], ylabel="polarization")


def fig2b():
    short = fig2_configs(t_max=100.0, dt_out=1.0 / 24.0)
    runs_s = {k: run_engines(c).series["exact"] for k, c in short.items()}
    cfgs_l, runs_l = _fig2_long()
    nn_s = runs_s["nn"]
    sp = analysis.correlation_spread(nn_s, 1.0 / FIG2_ALPHA, 100.0)
    formula = analysis.corr_infinity_uniform(3, Z_BATH, Z_SYSTEM)
    final = analysis.long_time_correlation(runs_l["nn"])
    keep = runs_l["nn"].times > 100.0
    t = np.concatenate([nn_s.times, runs_l["nn"].times[keep]])
    cols = {"t": t}
    for k in (1, 2, 3):
        cols[f"corr_s{k}_nn"] = np.concatenate([nn_s.corr(4, k), runs_l["nn"].corr(4, k)[keep]])
    cols["corr_s1_ata"] = np.concatenate([runs_s["ata"].corr(4, 1), runs_l["ata"].corr(4, 1)[keep]])
    checks = [
        _check("corr_spread_ratio", sp.ratio, 5.0, ">"),
        _check("corr_inf_rel_error", abs(final.mean - formula) / abs(formula), 0.02, "<="),
        _check("corr_inf_spread", final.spread, 1e-3, "<="),
    ]
    configs = {f"fig2b_{k}_short": c for k, c in short.items()}
    configs.update({f"fig2b_{k}_long": c for k, c in cfgs_l.items()})
    return configs, {"fig2b": cols}, checks, dict(
        x="t", y=["corr_s1_nn", "corr_s2_nn", "corr_s3_nn", "corr_s1_ata"], ylabel="corr(s, k)",
        logx=True)


_BUILDERS = {"fig1a": fig1a, "fig1b": fig1b, "fig1c": fig1c, "fig2a": fig2a, "fig2b": fig2b}


def write_columns(path, cols: dict) -> None:
    names = list(cols)
    data = np.column_stack([np.asarray(cols[n], dtype=float) for n in names])
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in data:
            w.writerow([f"{v:.12g}" for v in row])


def reproduce(figure: str, out_dir, figures: bool = True) -> dict:
    """Run one canned figure scenario; returns the sidecar check summary."""
    if figure not in _BUILDERS:
        raise ValueError(f"unknown figure {figure!r}; choose from {FIGURES}")
    out = Path(out_dir)
    configs, datasets, checks, plot = _BUILDERS[figure]()
    files = []
    for name, cfg in configs.items():
        p = out / f"{name}.config.json"
        with atomic_writer(p) as fh:
            fh.write(dump_config(cfg))
        files.append(p.name)
    for name, cols in datasets.items():
        p = out / f"{name}.csv"
        write_columns(p, cols)
        files.append(p.name)
    if figures:
        from .plotting import line_plot

        cols = datasets[figure]
        t = cols[plot["x"]]
        sel = t > 0 if plot.get("logx") else slice(None)
        p = line_plot(out / f"{figure}.png", t[sel], {c: cols[c][sel] for c in plot["y"]},
                      ylabel=plot["ylabel"], title=figure, logx=plot.get("logx", False))
        files.append(p.name)
    summary = {"figure": figure, "passed": all(c["passed"] for c in checks), "checks": checks,
               "files": files}
    write_json(out / f"{figure}.checks.json", summary)
    return summary
