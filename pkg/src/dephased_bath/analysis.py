"""Decay fits and the small-bath signatures extracted from simulated series."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .exceptions import NumericalError
from .lindblad import EvolutionSpec, ObservableSeries, evolve
from .register import SpinSystem

log = logging.getLogger(__name__)

FIT_MODELS = ("exp_to_offset", "pure_exp")

# Normalizations for the uniform asymptotic pair correlator: the pair sum runs
# over (N+1)N ordered pairs, the alternative counts only (N-1)N.
CORR_PREFACTORS = {
    "pairs": lambda n_bath: 1.0 / ((n_bath + 1) * n_bath),
    "bath_pairs": lambda n_bath: 1.0 / ((n_bath - 1) * n_bath),
}
DEFAULT_CORR_PREFACTOR = "pairs"


@dataclass(frozen=True)
class DecayFit:
    """``y = offset + amplitude * exp(-rate * t)`` fitted over ``fit_window``."""

    rate: float
    offset: float
    amplitude: float
    rms_residual: float
    fit_window: tuple[float, float]
    model: str = "exp_to_offset"

    def __call__(self, t):
        return self.offset + self.amplitude * np.exp(-self.rate * np.asarray(t, dtype=float))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["fit_window"] = list(self.fit_window)
        return d


def fit_decay(t, y, model: str = "exp_to_offset", window: Optional[Sequence[float]] = None) -> DecayFit:
    """Least-squares exponential fit.

    The rate is located by variable projection (offset and amplitude solved
    linearly for each trial rate) and then polished jointly. ``window`` is an
    inclusive ``(t_lo, t_hi)`` range; ``None`` uses all samples.
    """
    if model not in FIT_MODELS:
        raise ValueError(f"model must be one of {FIT_MODELS}")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = (t[0], t[-1]) if window is None else (float(window[0]), float(window[1]))
    sel = (t >= lo) & (t <= hi) & np.isfinite(y)
    ts, ys = t[sel], y[sel]
    if ts.size < 10:
        raise ValueError(f"need >= 10 samples in the fit window, got {ts.size}")
    if np.ptp(ys) <= 1e-14 * max(1.0, float(np.max(np.abs(ys)))):
        raise NumericalError("cannot fit a decay to constant data")
    t0 = ts[0]
    s = ts - t0
    span = s[-1]
    dmin = float(np.min(np.diff(s)))
    with_offset = model == "exp_to_offset"

    def linear(rate):
        e = np.exp(-rate * s)
        A = np.column_stack([np.ones_like(e), e]) if with_offset else e[:, None]
        coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
        return coef, ys - A @ coef

    def cost(logk):
        return float(np.sum(linear(math.exp(logk))[1] ** 2))

    grid = np.linspace(math.log(1e-3 / span), math.log(50.0 / dmin), 400)
    costs = np.array([cost(g) for g in grid])
    k = int(np.argmin(costs))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if a == b:
        b = a + 1e-6
    res = minimize_scalar(cost, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
    rate0 = math.exp(res.x)
    coef0, _ = linear(rate0)

    if with_offset:
        def resid(p):
            return p[0] + p[1] * np.exp(-p[2] * s) - ys
        p0 = [coef0[0], coef0[1], rate0]
    else:
        def resid(p):
            return p[0] * np.exp(-p[1] * s) - ys
        p0 = [coef0[0], rate0]
    sol = least_squares(resid, p0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000,
                        x_scale="jac")
    if not sol.success or not np.all(np.isfinite(sol.x)):
        raise NumericalError(f"decay fit did not converge: {sol.message}")
    if with_offset:
        offset, amp, rate = sol.x
    else:
        offset, (amp, rate) = 0.0, sol.x
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    # Report the amplitude relative to t = 0 rather than the window start.
    return DecayFit(float(rate), float(offset), float(amp * math.exp(rate * t0)), rms,
                    (float(lo), float(hi)), model)


def transient_end(alpha: float, factor: float = 5.0) -> float:
    """Start of the post-transient fit window, ``factor / alpha``."""
    return factor / alpha if alpha > 0 else 0.0


@dataclass(frozen=True)
class GammaRatio:
    ratio: float
    gamma_z: float
    gamma_x: float
    bound: float
    within_bound: bool
    fit_z: DecayFit
    fit_x: DecayFit

    def as_dict(self) -> dict:
        return {"ratio": self.ratio, "gamma_z": self.gamma_z, "gamma_x": self.gamma_x,
                "bound": self.bound, "within_bound": self.within_bound,
                "fit_z": self.fit_z.as_dict(), "fit_x": self.fit_x.as_dict()}


def enhancement_bound(n_bath: int) -> float:
    return 2.0 * (n_bath + 1) / n_bath


def gamma_ratio(sys: SpinSystem, rho_z: np.ndarray, rho_x: np.ndarray, spec_z: EvolutionSpec,
                spec_x: Optional[EvolutionSpec] = None, transient: Optional[float] = None,
                bound_rtol: float = 0.02) -> GammaRatio:
    """Polarization-to-coherence decay-rate ratio from two exact runs.

    ``rho_z`` should carry a polarization offset and ``rho_x`` a system
    coherence. Both decays are fitted after ``transient`` (default ``5/alpha``).
    A ratio above ``2(N+1)/N * (1 + bound_rtol)`` is logged as a warning and
    flagged in the result.
    """
    spec_x = spec_x or spec_z
    t_lo = transient_end(sys.bath_alpha) if transient is None else transient
    sz = evolve(sys, rho_z, spec_z)
    sx = evolve(sys, rho_x, spec_x)
    fz = fit_decay(sz.times, sz.z_s, "exp_to_offset", (t_lo, sz.times[-1]))
    fx = fit_decay(sx.times, sx.x_s, "pure_exp", (t_lo, sx.times[-1]))
    ratio = fz.rate / fx.rate
    bound = enhancement_bound(sys.n_bath)
    ok = ratio <= bound * (1.0 + bound_rtol)
    if not ok:
        log.warning("decay-rate ratio %.4f exceeds the small-bath bound %.4f", ratio, bound)
    return GammaRatio(ratio, fz.rate, fx.rate, bound, bool(ok), fz, fx)


def corr_infinity_uniform(n_bath: int, z_T: float, z_s0: float) -> float:
    """Asymptotic system-bath correlation for an uncorrelated, uniformly polarized start."""
    if abs(z_T) > 0.5 or abs(z_s0) > 0.5:
        raise ValueError("polarizations must lie in [-1/2, 1/2]")
    z_inf = (n_bath * z_T + z_s0) / (n_bath + 1)
    var = 0.25 - z_inf ** 2
    if var <= 1e-14:
        raise ValueError("asymptotic variance is saturated; correlation undefined")
    return -((z_T - z_s0) ** 2) / (n_bath + 1) ** 2 / var


def corr_infinity_general(pair_correlators, z_inf: float, n_bath: int,
                          prefactor: str = DEFAULT_CORR_PREFACTOR) -> float:
    """Asymptotic correlation from the conserved pair sum.

    ``pair_correlators`` is either the full ``(N+1)x(N+1)`` table of initial
    ``<Z_i Z_j>`` or the already summed value over ordered pairs ``i != j``.
    """
    zz = np.asarray(pair_correlators, dtype=float)
    if zz.ndim == 2:
        if zz.shape != (n_bath + 1, n_bath + 1):
            raise ValueError(f"pair table must be {(n_bath + 1,) * 2}")
        pair_sum = float(zz.sum() - np.trace(zz))
    else:
        pair_sum = float(zz)
    if prefactor == "bath_pairs" and n_bath < 2:
        raise ValueError("the bath_pairs normalization needs n_bath >= 2")
    var = 0.25 - z_inf ** 2
    if var <= 1e-14:
        raise ValueError("asymptotic variance is saturated; correlation undefined")
    return (CORR_PREFACTORS[prefactor](n_bath) * pair_sum - z_inf ** 2) / var


@dataclass(frozen=True)
class LongTimeCorrelation:
    mean: float
    spread: float
    values: tuple[float, ...]


def long_time_correlation(series: ObservableSeries, tail: int = 1) -> LongTimeCorrelation:
    """System-bath correlations averaged over the last ``tail`` samples."""
    c = series.system_corr()[-tail:].mean(axis=0)
    return LongTimeCorrelation(float(np.mean(c)), float(np.ptp(c)), tuple(float(v) for v in c))


@dataclass(frozen=True)
class RecurrenceMetric:
    revival_amplitude: float
    first_revival_time: Optional[float]


def recurrence_metric(t, z_s, z_inf: float) -> RecurrenceMetric:
    """Largest local maximum of ``|z_s - z_inf|`` after its first local minimum."""
    t = np.asarray(t, dtype=float)
    u = np.abs(np.asarray(z_s, dtype=float) - z_inf)
    if u.size < 3:
        return RecurrenceMetric(0.0, None)
    du = np.diff(u)
    minima = np.nonzero((du[:-1] < 0) & (du[1:] >= 0))[0] + 1
    if minima.size == 0:
        return RecurrenceMetric(0.0, None)
    start = minima[0]
    maxima = np.nonzero((du[:-1] > 0) & (du[1:] <= 0))[0] + 1
    maxima = maxima[maxima > start]
    if maxima.size == 0:
        # Still rising at the end of the record.
        tail = u[start:]
        if tail[-1] > tail[0]:
            return RecurrenceMetric(float(tail[-1]), float(t[-1]))
        return RecurrenceMetric(0.0, None)
    k = maxima[np.argmax(u[maxima])]
    return RecurrenceMetric(float(u[k]), float(t[maxima[0]]))


@dataclass(frozen=True)
class EquilibrationTimes:
    times: np.ndarray
    equilibrated: np.ndarray
    final: np.ndarray


def correlation_equilibration_time(series: ObservableSeries, tolerance: float) -> EquilibrationTimes:
    """Per bath spin, the first time after which ``corr(s, k)`` stays within ``tolerance`` of its final value.

    Undefined (NaN) correlations count as settled only while the final value is
    also undefined. Spins that never settle get ``NaN`` and ``equilibrated=False``.
    """
    C = series.system_corr()
    final = C[-1]
    both_nan = np.isnan(C) & np.isnan(final)[None, :]
    dev = np.where(both_nan, 0.0, np.abs(C - final[None, :]))
    dev = np.where(np.isnan(dev), np.inf, dev)
    out = np.full(C.shape[1], np.nan)
    ok = np.zeros(C.shape[1], dtype=bool)
    for k in range(C.shape[1]):
        bad = np.nonzero(dev[:, k] > tolerance)[0]
        idx = 0 if bad.size == 0 else bad[-1] + 1
        if idx < C.shape[0] - 1 or bad.size == 0:
            out[k] = series.times[idx]
            ok[k] = True
    return EquilibrationTimes(out, ok, final)


@dataclass(frozen=True)
class CorrelationSpread:
    corr_spread: float
    z_spread: float
    z_spread_rel: float
    ratio: float


def correlation_spread(series: ObservableSeries, t_lo: float, t_hi: float) -> CorrelationSpread:
    """Non-uniformity of system-bath correlations versus that of bath polarizations.

    Over the window, the largest spread across bath spins of ``corr(s, k)``
    (dimensionless already) is compared with the largest spread of ``z_k``
    relative to the total system polarization swing ``|z_s(0) - z_inf|``.
    """
    sel = (series.times >= t_lo) & (series.times <= t_hi)
    if not np.any(sel):
        raise ValueError("empty window")
    C = series.system_corr()[sel]
    zb = series.z[sel, :-1]
    z_inf = float(series.sum_z[0]) / series.z.shape[1]
    swing = abs(float(series.z_s[0]) - z_inf)
    if swing == 0:
        raise ValueError("no polarization transfer; relative spread undefined")
    cs = float(np.nanmax(np.ptp(C, axis=1)))
    zs = float(np.max(np.ptp(zb, axis=1)))
    rel = zs / swing
    return CorrelationSpread(cs, zs, rel, cs / rel if rel > 0 else math.inf)


def analysis_report(fits: Sequence[DecayFit] = (), gamma: Optional[GammaRatio] = None,
                    corr_formula: Optional[float] = None, corr_simulated: Optional[float] = None,
                    recurrence: Optional[RecurrenceMetric] = None, **extra) -> dict:
    """Assemble the JSON report structure."""
    rep = {
        "fits": [f.as_dict() for f in fits],
        "gamma_ratio": gamma.as_dict() if gamma is not None else None,
        "corr_infinity": None,
        "recurrence": asdict(recurrence) if recurrence is not None else None,
    }
    if corr_formula is not None or corr_simulated is not None:
        delta = (corr_simulated - corr_formula
                 if corr_formula is not None and corr_simulated is not None else None)
        rep["corr_infinity"] = {"formula": corr_formula, "simulated": corr_simulated, "delta": delta}
    rep.update(extra)
    return rep
