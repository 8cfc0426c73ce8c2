"""Exact propagation of the joint density matrix.

The generator is taken in the interaction picture, where the Zeeman term drops
out, leaving

    d rho/dt = -i[V, rho] + sum_k alpha_k (2 Z_k rho Z_k - Z_k^2 rho - rho Z_k^2)

with ``Z_k`` the half-spin sigma_z of site k. In the product basis the
dissipator is elementwise: entry ``(a, b)`` decays at ``sum_k alpha_k (z_k(a) -
z_k(b))^2``, i.e. at ``alpha_k`` for every site whose state differs between the
two basis vectors.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .exceptions import NumericalError
from .register import (SpinSystem, interaction_hamiltonian, site_masks, site_z_values,
                       validate_density_matrix)

log = logging.getLogger(__name__)

# Liouville-space propagators are used up to this many density-matrix entries.
LIOUVILLE_MAX_SIZE = 1024

INTEGRATORS = ("rk4", "adaptive", "expm")


@dataclass(frozen=True)
class EvolutionSpec:
    """Output grid and integrator settings.

    ``dt`` is the RK4 step (``None`` picks ``min(0.02/alpha_max, 0.1/xi_max)``);
    ``rtol``/``atol`` drive the adaptive integrator. The minimum eigenvalue of
    the state is checked every ``check_every`` samples.
    """

    t_max: float
    dt_out: float
    integrator: str = "rk4"
    dt: Optional[float] = None
    rtol: float = 1e-10
    atol: float = 1e-12
    check_every: int = 50

    def __post_init__(self):
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if not (self.t_max > 0 and self.dt_out > 0):
            raise ValueError("t_max and dt_out must be positive")
        if self.dt_out > self.t_max:
            raise ValueError(f"dt_out={self.dt_out} exceeds t_max={self.t_max}")
        if self.dt is not None and not 0 < self.dt <= self.dt_out:
            raise ValueError(f"fixed step dt={self.dt} must lie in (0, dt_out]")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")

    @property
    def times(self) -> np.ndarray:
        n = int(math.floor(self.t_max / self.dt_out + 1e-9))
        return self.dt_out * np.arange(n + 1)


def default_step(sys: SpinSystem) -> float:
    """Fixed RK4 step: the stiff scale is the dephasing rate, the coherent one bounds ||V||."""
    a = max(sys.alpha)
    # Sum of bond strengths bounds the spectral radius of V.
    x = float(np.sum(np.abs(np.triu(sys.coupling.xi, 1))))
    candidates = [c for c in (0.02 / a if a > 0 else None, 0.02 / x if x > 0 else None) if c]
    return min(candidates) if candidates else math.inf


class LindbladGenerator:
    """Time-independent generator for one :class:`SpinSystem`."""

    def __init__(self, sys: SpinSystem):
        self.sys = sys
        self.n = sys.n_spins
        self.d = sys.dim
        self.V = interaction_hamiltonian(sys.coupling)
        self.zvals = site_z_values(self.n)
        alpha = np.asarray(sys.alpha)
        dz = self.zvals[:, :, None] - self.zvals[:, None, :]
        self.decay = np.einsum("k,kab->ab", alpha, dz ** 2)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        if rho.shape != (self.d, self.d):
            raise ValueError(f"state has shape {rho.shape}, expected {(self.d, self.d)}")
        return -1j * (self.V @ rho - rho @ self.V) - self.decay * rho

    def superoperator(self) -> np.ndarray:
        """Dense matrix acting on row-major ``rho.ravel()``."""
        eye = np.eye(self.d)
        L = -1j * (np.kron(self.V, eye) - np.kron(eye, self.V.T))
        L[np.diag_indices_from(L)] -= self.decay.ravel()
        return L


def rhs(sys: SpinSystem, rho: np.ndarray) -> np.ndarray:
    """Time derivative of ``rho`` under the dephased-bath generator."""
    return LindbladGenerator(sys)(np.asarray(rho, dtype=complex))


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    """Sampled observables; spin arrays are 0-based with the system last.

    ``zz[t, i, j]`` is <Z_i Z_j> (diagonal entries equal 1/4). Entries that a
    model does not predict are NaN.
    """

    times: np.ndarray
    z: np.ndarray
    x_s: np.ndarray
    zz: np.ndarray
    trace_err: np.ndarray
    states: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("times", "z", "x_s", "zz", "trace_err", "states"):
            val = getattr(self, name)
            if val is not None:
                val = np.array(val, copy=True)
                val.setflags(write=False)
                object.__setattr__(self, name, val)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n_bath(self) -> int:
        return self.z.shape[1] - 1

    @property
    def z_s(self) -> np.ndarray:
        return self.z[:, -1]

    @property
    def sum_z(self) -> np.ndarray:
        return self.z.sum(axis=1)

    @property
    def pair_sum(self) -> np.ndarray:
        """Sum over ordered pairs i != j of <Z_i Z_j>."""
        return self.zz.sum(axis=(1, 2)) - np.trace(self.zz, axis1=1, axis2=2)

    def corr(self, i: int, j: int) -> np.ndarray:
        return pearson_corr(self, i, j)

    def system_corr(self) -> np.ndarray:
        """``corr(s, k)`` for every bath spin, shape ``(T, N)``."""
        n = self.z.shape[1]
        return np.stack([pearson_corr(self, n, k) for k in range(1, n)], axis=1)

    def to_csv(self, path: Union[str, Path]) -> None:
        write_series_csv(self, path)


def pearson_corr(series: ObservableSeries, i: int, j: int, var_floor: float = 1e-14) -> np.ndarray:
    """Pearson correlation of the sigma_z outcomes of 1-based sites ``i`` and ``j``.

    Where either variance ``1/4 - z^2`` falls below ``var_floor`` the value is
    undefined and returned as NaN.
    """
    n = series.z.shape[1]
    if i == j:
        raise ValueError("correlation needs two distinct sites")
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"sites must lie in 1..{n}")
    zi, zj = series.z[:, i - 1], series.z[:, j - 1]
    vi, vj = 0.25 - zi ** 2, 0.25 - zj ** 2
    cov = series.zz[:, i - 1, j - 1] - zi * zj
    ok = (vi >= var_floor) & (vj >= var_floor)
    out = np.full(zi.shape, np.nan)
    out[ok] = cov[ok] / np.sqrt(vi[ok] * vj[ok])
    return out


class _Observer:
    def __init__(self, gen: LindbladGenerator):
        self.zvals = gen.zvals
        n = gen.n
        m = int(site_masks(n)[-1])
        self.pair_idx = np.arange(gen.d) ^ m

    def __call__(self, rho: np.ndarray):
        p = np.real(np.diagonal(rho))
        z = self.zvals @ p
        zz = (self.zvals * p) @ self.zvals.T
        x = 0.5 * float(np.real(np.sum(rho[np.arange(rho.shape[0]), self.pair_idx])))
        return z, x, zz


def evolve(sys: SpinSystem, rho0: np.ndarray, spec: EvolutionSpec, keep_states: bool = False,
           validate: bool = True) -> ObservableSeries:
    """Integrate the master equation and sample observables every ``spec.dt_out``.

    Raises :class:`NumericalError` when the trace, Hermiticity or positivity of
    a sample drifts beyond 1e-8, 1e-8 and -1e-7 respectively.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    gen = LindbladGenerator(sys)
    if rho0.shape != (gen.d, gen.d):
        raise ValueError(f"initial state has shape {rho0.shape}, expected {(gen.d, gen.d)}")
    if validate:
        validate_density_matrix(rho0)
    times = spec.times
    if spec.integrator == "adaptive":
        states = _evolve_adaptive(gen, rho0, times, spec)
    else:
        states = _evolve_propagator(gen, rho0, times, spec)
    return _collect(gen, times, states, spec, keep_states)


def _rk4_step_matrix(L: np.ndarray, h: float) -> np.ndarray:
    hL = h * L
    eye = np.eye(L.shape[0], dtype=complex)
    # Horner form of 1 + x + x^2/2 + x^3/6 + x^4/24, the exact RK4 update for linear ODEs.
    P = eye + hL / 4.0
    P = eye + hL @ P / 3.0
    P = eye + hL @ P / 2.0
    return eye + hL @ P


def _substeps(gen: LindbladGenerator, spec: EvolutionSpec) -> tuple[int, float]:
    dt = spec.dt if spec.dt is not None else min(default_step(gen.sys), spec.dt_out)
    n_sub = max(1, int(math.ceil(spec.dt_out / dt - 1e-9)))
    return n_sub, spec.dt_out / n_sub


def _evolve_propagator(gen: LindbladGenerator, rho0, times, spec):
    """Yield the state at each output time (RK4 or exact exponential)."""
    d = gen.d
    if spec.integrator == "expm" or d * d <= LIOUVILLE_MAX_SIZE:
        L = gen.superoperator()
        if spec.integrator == "expm":
            U = scipy.linalg.expm(L * spec.dt_out)
        else:
            n_sub, h = _substeps(gen, spec)
            U = np.linalg.matrix_power(_rk4_step_matrix(L, h), n_sub)
        v = rho0.ravel().copy()
        yield v.reshape(d, d)
        for _ in range(len(times) - 1):
            v = U @ v
            yield v.reshape(d, d)
        return
    n_sub, h = _substeps(gen, spec)
    rho = rho0.copy()
    yield rho
    for _ in range(len(times) - 1):
        for _ in range(n_sub):
            k1 = gen(rho)
            k2 = gen(rho + 0.5 * h * k1)
            k3 = gen(rho + 0.5 * h * k2)
            k4 = gen(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        yield rho


def _evolve_adaptive(gen: LindbladGenerator, rho0, times, spec):
    d = gen.d

    def f(_t, y):
        return gen(y.reshape(d, d)).ravel()

    sol = solve_ivp(f, (times[0], times[-1]), rho0.ravel(), method="DOP853", t_eval=times,
                    rtol=spec.rtol, atol=spec.atol)
    if not sol.success:
        raise NumericalError(f"adaptive integration failed: {sol.message}")
    for k in range(sol.y.shape[1]):
        yield sol.y[:, k].reshape(d, d)


def _collect(gen, times, states, spec: EvolutionSpec, keep_states: bool) -> ObservableSeries:
    obs = _Observer(gen)
    T, n = len(times), gen.n
    z = np.empty((T, n))
    zz = np.empty((T, n, n))
    x = np.empty(T)
    terr = np.empty(T)
    kept = [] if keep_states else None
    for k, rho in enumerate(states):
        if k >= T:
            break
        if not np.all(np.isfinite(rho)):
            raise NumericalError(f"non-finite state at t={times[k]}")
        tr = np.trace(rho)
        terr[k] = abs(tr - 1.0)
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        if terr[k] > 1e-8 or herm > 1e-8:
            raise NumericalError(
                f"state drifted at t={times[k]:.6g}: trace error {terr[k]:.3e}, "
                f"Hermiticity error {herm:.3e}; reduce the step size"
            )
        if k % spec.check_every == 0 or k == T - 1:
            lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
            if lam < -1e-7:
                raise NumericalError(f"state lost positivity at t={times[k]:.6g} (eigenvalue {lam:.3e})")
        z[k], x[k], zz[k] = obs(rho)
        if keep_states:
            kept.append(np.array(rho))
    return ObservableSeries(times, z, x, zz, terr, np.array(kept) if keep_states else None)


# CSV ------------------------------------------------------------------------


def series_header(n_bath: int) -> list[str]:
    return (["t", "z_s", "x_s"] + [f"z_{k}" for k in range(1, n_bath + 1)]
            + [f"corr_s{k}" for k in range(1, n_bath + 1)] + ["sum_z", "pair_sum", "trace_err"])


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def series_rows(series: ObservableSeries) -> np.ndarray:
    N = series.n_bath
    cols = [series.times, series.z_s, series.x_s]
    cols += [series.z[:, k] for k in range(N)]
    if np.all(np.isnan(series.zz)):
        cols += [np.full(series.times.shape, np.nan)] * N
    else:
        corr = series.system_corr()
        cols += [corr[:, k] for k in range(N)]
    cols += [series.sum_z, series.pair_sum, series.trace_err]
    return np.column_stack(cols)


def write_series_csv(series: ObservableSeries, path: Union[str, Path]) -> None:
    from .io import atomic_writer

    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(series_header(series.n_bath))
        for row in series_rows(series):
            w.writerow([_fmt(v) for v in row])


def read_series_csv(path: Union[str, Path]) -> dict[str, np.ndarray]:
    """Load a series CSV back as a column dictionary."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r])
    if data.size == 0:
        data = np.empty((0, len(header)))
    return {name: data[:, k] for k, name in enumerate(header)}
