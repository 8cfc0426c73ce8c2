"""Reduced equations of motion for the system spin.

All second-order models share the damped-oscillator form

    u'' = -omega^2 u - alpha u',     u = z_s - z_inf,

whose closed-form solution is evaluated directly. Only the coupled per-spin
closure on a general graph is integrated numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .exceptions import NumericalError
from .register import SpinSystem

# Relative discriminant below which the critically damped branch is used.
CRITICAL_RTOL = 1e-12


@dataclass(frozen=True)
class ReducedModelParams:
    n_bath: int
    xi_sb_sq: float
    alpha: float
    z_inf: float
    z_s0: float
    x_s0: float = 0.0
    dz0: float = 0.0

    def __post_init__(self):
        if self.n_bath < 1:
            raise ValueError("n_bath must be >= 1")
        if self.xi_sb_sq < 0 or self.alpha < 0:
            raise ValueError("xi_sb_sq and alpha must be non-negative")
        if abs(self.z_s0) > 0.5 or abs(self.z_inf) > 0.5:
            raise ValueError("polarizations must lie in [-1/2, 1/2]")

    @property
    def omega_sq(self) -> float:
        """Restoring constant of the polarization equation, 2 xi_SB^2 (N+1)/N."""
        return 2.0 * self.xi_sb_sq * (self.n_bath + 1) / self.n_bath

    @classmethod
    def from_system(cls, sys: SpinSystem, z_bath: Sequence[float], z_s0: float,
                    x_s0: float = 0.0) -> "ReducedModelParams":
        return cls(sys.n_bath, sys.coupling.xi_sb_sq, sys.bath_alpha,
                   z_infinity(z_bath, z_s0), z_s0, x_s0)


def z_infinity(z_bath_init: Sequence[float], z_s0: float) -> float:
    """Equal-sharing polarization (sum of all initial z) / (N + 1)."""
    z_bath_init = list(z_bath_init)
    if not z_bath_init:
        raise ValueError("need at least one bath polarization")
    return (math.fsum(z_bath_init) + z_s0) / (len(z_bath_init) + 1)


def markovian_rate_z(p: ReducedModelParams) -> float:
    if p.alpha <= 0:
        raise ValueError("the Markovian limit needs alpha > 0")
    return p.omega_sq / p.alpha


def markovian_rate_x(p: ReducedModelParams) -> float:
    if p.alpha <= 0:
        raise ValueError("the Markovian limit needs alpha > 0")
    return p.xi_sb_sq / p.alpha


def markovian_z(p: ReducedModelParams, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return p.z_inf + (p.z_s0 - p.z_inf) * np.exp(-markovian_rate_z(p) * t)


def markovian_x(p: ReducedModelParams, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return p.x_s0 * np.exp(-markovian_rate_x(p) * t)


def damped_roots(alpha: float, omega_sq: float) -> tuple[complex, complex]:
    """Roots ``(slow, fast)`` of ``lam^2 + alpha lam + omega^2 = 0``."""
    disc = alpha * alpha - 4.0 * omega_sq
    scale = max(alpha * alpha, 4.0 * omega_sq, 1e-300)
    if abs(disc) <= CRITICAL_RTOL * scale:
        return complex(-alpha / 2), complex(-alpha / 2)
    if disc > 0:
        s = math.sqrt(disc)
        fast = -(alpha + s) / 2.0
        # Vieta form avoids cancellation in the slow root at large alpha.
        slow = omega_sq / fast if fast != 0 else 0.0
        return complex(slow), complex(fast)
    b = math.sqrt(-disc) / 2.0
    return complex(-alpha / 2, b), complex(-alpha / 2, -b)


def damped_oscillator(t, alpha: float, omega_sq: float, u0: float, v0: float = 0.0) -> np.ndarray:
    """Solution of ``u'' + alpha u' + omega^2 u = 0`` with ``u(0)=u0``, ``u'(0)=v0``."""
    t = np.asarray(t, dtype=float)
    disc = alpha * alpha - 4.0 * omega_sq
    scale = max(alpha * alpha, 4.0 * omega_sq, 1e-300)
    if abs(disc) <= CRITICAL_RTOL * scale:
        lam = -alpha / 2.0
        return (u0 + (v0 - lam * u0) * t) * np.exp(lam * t)
    if disc > 0:
        slow, fast = (r.real for r in damped_roots(alpha, omega_sq))
        c_slow = (v0 - fast * u0) / (slow - fast)
        c_fast = u0 - c_slow
        return c_slow * np.exp(slow * t) + c_fast * np.exp(fast * t)
    beta = math.sqrt(-disc) / 2.0
    env = np.exp(-alpha * t / 2.0)
    return env * (u0 * np.cos(beta * t) + (v0 + alpha * u0 / 2.0) / beta * np.sin(beta * t))


def second_order_z(p: ReducedModelParams, t) -> np.ndarray:
    """Non-Markovian polarization: ``z'' = omega^2 (z_inf - z) - alpha z'``."""
    return p.z_inf + damped_oscillator(t, p.alpha, p.omega_sq, p.z_s0 - p.z_inf, p.dz0)


def second_order_x(p: ReducedModelParams, t) -> np.ndarray:
    """Coherence: ``x'' = -xi_SB^2 x - alpha x'`` starting at rest."""
    return damped_oscillator(t, p.alpha, p.xi_sb_sq, p.x_s0, 0.0)


def coupled_second_order(sys: SpinSystem, z_init: Sequence[float], t_grid) -> np.ndarray:
    """Per-spin polarizations from the truncated second-order closure on any graph.

    Each bond ``(i, k)`` carries a polarization current ``f_ik`` (with
    ``z_i' = sum_k f_ik``) that relaxes as

        f_ik' = -2 xi_ik^2 (z_i - z_k) - (alpha_i + alpha_k) f_ik,

    because the flip-flop coherence behind it is dephased by both of its
    sites. All currents start at zero. Returns an array of shape
    ``(len(t_grid), N + 1)``.
    """
    z0 = np.asarray(z_init, dtype=float)
    n = sys.n_spins
    if z0.shape != (n,):
        raise ValueError(f"need {n} initial polarizations, got {z0.shape}")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be a non-empty increasing 1-d array")
    bonds = sys.coupling.bonds()
    alpha = np.asarray(sys.alpha)
    m = len(bonds)
    G = np.zeros((n + m, n + m))
    for b, (i, k, xik) in enumerate(bonds):
        G[i, n + b] += 1.0
        G[k, n + b] -= 1.0
        G[n + b, i] = -2.0 * xik ** 2
        G[n + b, k] = 2.0 * xik ** 2
        G[n + b, n + b] = -(alpha[i] + alpha[k])
    y = np.concatenate([z0, np.zeros(m)])
    out = np.empty((t.size, n))
    cache: dict[float, np.ndarray] = {}
    y = scipy.linalg.expm(G * t[0]) @ y if t[0] != 0 else y
    out[0] = y[:n]
    for k in range(1, t.size):
        h = round(float(t[k] - t[k - 1]), 12)
        U = cache.get(h)
        if U is None:
            U = cache[h] = scipy.linalg.expm(G * (t[k] - t[k - 1]))
        y = U @ y
        out[k] = y[:n]
    if not np.all(np.isfinite(out)):
        raise NumericalError("coupled second-order integration produced non-finite values")
    return out


@dataclass(frozen=True)
class MarkovianityDiagnostic:
    ratio: float
    neglected_order: float
    decoupled: bool


def markovianity_diagnostic(p: ReducedModelParams) -> MarkovianityDiagnostic:
    """``alpha / xi_SB`` and the relative size ``(xi_SB/alpha)^2`` of the dropped second derivative."""
    xi_sb = math.sqrt(p.xi_sb_sq)
    if xi_sb == 0:
        return MarkovianityDiagnostic(math.inf, 0.0, True)
    if p.alpha == 0:
        return MarkovianityDiagnostic(0.0, math.inf, False)
    return MarkovianityDiagnostic(p.alpha / xi_sb, (xi_sb / p.alpha) ** 2, False)
