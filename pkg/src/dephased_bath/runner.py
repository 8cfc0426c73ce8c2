"""Run configured engines on one scenario, and sweep scenarios over a parameter."""

from __future__ import annotations

import copy
import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .config import (bath_polarizations, build_evolution_spec, build_initial_state, build_system,
                     validate_config)
from .exceptions import ConfigError, NumericalError
from .io import atomic_writer, write_json
from .lindblad import ObservableSeries, evolve
from .reduced import (ReducedModelParams, coupled_second_order, markovian_x, markovian_z,
                      markovianity_diagnostic, second_order_x, second_order_z)
from .trajectories import TrajectoryEnsemble, ensemble_as_series, run_trajectories

log = logging.getLogger(__name__)


def partial_series(times, n_bath: int, z_s=None, x_s=None, z=None) -> ObservableSeries:
    """Series for models that predict only some observables; the rest are NaN."""
    T = len(times)
    nan = np.full(T, np.nan)
    if z is None:
        z = np.full((T, n_bath + 1), np.nan)
        z[:, -1] = z_s
    return ObservableSeries(np.asarray(times), z, nan if x_s is None else x_s,
                            np.full((T, n_bath + 1, n_bath + 1), np.nan), nan)


def engine_name(e) -> str:
    return e if isinstance(e, str) else next(iter(e))


@dataclass
class SimulationResult:
    series: dict = field(default_factory=dict)
    ensemble: Optional[TrajectoryEnsemble] = None
    report: dict = field(default_factory=dict)
    files: list = field(default_factory=list)


def run_engines(cfg: dict, jobs: int = 1) -> SimulationResult:
    """Evaluate every engine of a validated config (no file output)."""
    sys = build_system(cfg)
    rho0 = build_initial_state(cfg, sys)
    spec = build_evolution_spec(cfg)
    times = spec.times
    zb = bath_polarizations(cfg, sys)
    s0 = cfg["initial"]["system"]
    params = ReducedModelParams.from_system(sys, zb, s0["z"], s0.get("x", 0.0))
    if sys.alpha[-1] > 0:
        log.warning("reduced models ignore dephasing of the system spin")
    res = SimulationResult()
    for e in cfg["engines"]:
        name = engine_name(e)
        if name == "exact":
            res.series[name] = evolve(sys, rho0, spec)
        elif name == "reduced":
            res.series[name] = partial_series(times, sys.n_bath, second_order_z(params, times),
                                              second_order_x(params, times))
        elif name == "markovian":
            if params.alpha <= 0:
                raise ConfigError("the markovian engine needs dephasing.alpha > 0")
            res.series[name] = partial_series(times, sys.n_bath, markovian_z(params, times),
                                              markovian_x(params, times))
        elif name == "coupled":
            z = coupled_second_order(sys, list(zb) + [s0["z"]], times)
            res.series[name] = partial_series(times, sys.n_bath, z=z)
        elif name == "trajectories":
            tcfg = e["trajectories"]
            ens = run_trajectories(sys, rho0, spec, tcfg["n_traj"], tcfg["seed"], jobs=jobs)
            res.ensemble = ens
            res.series[name] = ensemble_as_series(ens)
            log.info("trajectories: %d runs in %.2f s", ens.n_traj, ens.runtime)
    res.report = _report(cfg, sys, params, res)
    return res


def _report(cfg, sys, params, res: SimulationResult) -> dict:
    comparisons = {}
    for a, b in itertools.combinations(res.series, 2):
        d = np.abs(res.series[a].z_s - res.series[b].z_s)
        comparisons[f"{a}|{b}"] = float(np.nanmax(d)) if np.any(np.isfinite(d)) else None
    fits = []
    rec = None
    corr_sim = None
    ref = res.series.get("exact") or next(iter(res.series.values()))
    t_lo = analysis.transient_end(params.alpha)
    if params.alpha > 0:
        try:
            fits.append(analysis.fit_decay(ref.times, ref.z_s, "exp_to_offset",
                                           (t_lo, ref.times[-1])))
        except (ValueError, NumericalError) as exc:
            log.info("no decay fit: %s", exc)
    rec = analysis.recurrence_metric(ref.times, ref.z_s, params.z_inf)
    corr_formula = None
    if "exact" in res.series:
        ex = res.series["exact"]
        try:
            corr_formula = analysis.corr_infinity_general(ex.zz[0], params.z_inf, sys.n_bath)
        except ValueError:
            pass
        c = ex.system_corr()[-1]
        corr_sim = float(np.mean(c)) if np.all(np.isfinite(c)) else None
    diag = markovianity_diagnostic(params)
    return analysis.analysis_report(
        fits, None, corr_formula, corr_sim, rec,
        scenario=cfg.get("name"),
        engines=list(res.series),
        comparisons=comparisons,
        z_inf=params.z_inf,
        markovianity={"ratio": _finite(diag.ratio), "neglected_order": _finite(diag.neglected_order),
                      "decoupled": diag.decoupled},
    )


def _finite(v: float):
    return v if math.isfinite(v) else None


def simulate(cfg: dict, jobs: int = 1, out_dir: Optional[Path] = None) -> SimulationResult:
    """Run a config and write one CSV per engine plus the JSON report."""
    cfg = validate_config(cfg)
    outputs = cfg["outputs"]
    csv_dir = Path(out_dir) if out_dir is not None else Path(outputs["csv_dir"])
    report_path = (csv_dir / "report.json") if out_dir is not None else Path(outputs["report_path"])
    res = run_engines(cfg, jobs=jobs)
    for name, s in res.series.items():
        if name == "trajectories":
            continue
        p = csv_dir / f"{name}.csv"
        s.to_csv(p)
        res.files.append(p)
    if res.ensemble is not None:
        p = csv_dir / "trajectories.csv"
        res.ensemble.to_csv(p)
        # Runtime is logged, not written, so outputs stay byte-identical across reruns.
        res.ensemble.write_summary(csv_dir / "trajectories.json", include_runtime=False)
        res.files += [p, csv_dir / "trajectories.json"]
    write_json(report_path, res.report)
    res.files.append(report_path)
    if outputs.get("figures"):
        from .plotting import plot_engines

        fig = csv_dir / "z_s.png"
        plot_engines(res.series, fig)
        res.files.append(fig)
    return res


# Sweeps ----------------------------------------------------------------------

SWEEP_COLUMNS = ["value", "fitted_rate", "max_model_deviation", "recurrence_amplitude",
                 "corr_infinity"]


INTEGER_FIELDS = {"n_bath", "n_traj", "seed"}


def set_path(cfg: dict, axis: str, value) -> dict:
    """Copy of ``cfg`` with the numeric field at dotted path ``axis`` replaced."""
    out = copy.deepcopy(cfg)
    node = out
    keys = axis.split(".")
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"sweep axis {axis!r} does not resolve in the config")
        node = node[k]
    last = keys[-1]
    if not isinstance(node, dict) or last not in node:
        raise ConfigError(f"sweep axis {axis!r} does not resolve in the config")
    old = node[last]
    if isinstance(old, bool) or not isinstance(old, (int, float)):
        raise ConfigError(f"sweep axis {axis!r} is not a numeric field")
    if last in INTEGER_FIELDS:
        if float(value) != int(value):
            raise ConfigError(f"sweep axis {axis!r} needs integer values, got {value}")
        value = int(value)
    node[last] = value
    return out


def _sweep_point(args):
    cfg, out_dir, jobs = args
    res = simulate(cfg, jobs=jobs, out_dir=out_dir)
    rep = res.report
    rate = rep["fits"][0]["rate"] if rep["fits"] else math.nan
    devs = [v for k, v in rep["comparisons"].items() if k.startswith("exact|") and v is not None]
    if not devs:
        devs = [v for v in rep["comparisons"].values() if v is not None]
    corr = rep["corr_infinity"]["simulated"] if rep["corr_infinity"] else None
    return [rate, max(devs) if devs else math.nan, rep["recurrence"]["revival_amplitude"],
            math.nan if corr is None else corr]


class SweepError(NumericalError):
    pass


def sweep(cfg: dict, axis: str, values: Sequence[float], out_dir: Path, jobs: int = 1) -> list[list]:
    """Simulate once per value and aggregate a summary table sorted by value."""
    cfg = validate_config(cfg)
    values = sorted(values)
    out_dir = Path(out_dir)
    points = []
    for i, v in enumerate(values):
        c = validate_config(set_path(cfg, axis, v))
        points.append((c, out_dir / f"point_{i:03d}", 1))
    rows, failures = [], []
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(_sweep_point, p) for p in points]
            results = []
            for f in futures:
                try:
                    results.append(f.result())
                except Exception as exc:  # noqa: BLE001 - reported in the manifest
                    results.append(exc)
    else:
        results = []
        for p in points:
            try:
                results.append(_sweep_point(p))
            except (NumericalError, ValueError) as exc:
                results.append(exc)
    for v, (c, d, _), r in zip(values, points, results):
        if isinstance(r, Exception):
            failures.append({"value": v, "dir": str(d), "error": str(r)})
        else:
            rows.append([v] + r)
    if failures:
        write_json(out_dir / "sweep_manifest.json",
                   {"axis": axis, "completed": [r[0] for r in rows], "failed": failures})
        raise SweepError(f"{len(failures)} sweep point(s) failed; see sweep_manifest.json")
    with atomic_writer(out_dir / "sweep.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([f"{x:.12g}" for x in r])
    return rows
