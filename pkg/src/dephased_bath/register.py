"""Spin register: operators, coupling graphs and initial-state preparation.

Conventions
-----------
- Half-spin operators: ``sigma_z = diag(1/2, -1/2)``, ``sigma_x = (sigma_+ + sigma_-)/2``.
  The ladder operators are the unit flip operators ``sigma_+ = |up><down|``.
- Basis index 0 of every site is spin up.
- Tensor ordering is site-1-major: site 1 is the most significant bit of the
  basis index, and the system spin (site N+1) is the least significant bit.
- Sites are numbered 1..N+1 in the public API; arrays are indexed 0..N with the
  system last.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .exceptions import InvalidStateError

MAX_BATH_SPINS = 12

SIGMA_Z = np.diag([0.5, -0.5]).astype(complex)
SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.T.copy()
SIGMA_X = 0.5 * (SIGMA_PLUS + SIGMA_MINUS)

_SINGLE_SITE = {"z": SIGMA_Z, "plus": SIGMA_PLUS, "minus": SIGMA_MINUS, "x": SIGMA_X}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CouplingGraph:
    """Symmetric flip-flop coupling strengths between all N+1 spins."""

    xi: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.ndim != 2 or xi.shape[0] != xi.shape[1] or xi.shape[0] < 2:
            raise ValueError(f"coupling matrix must be square with >= 2 sites, got {xi.shape}")
        if not np.array_equal(xi, xi.T):
            raise ValueError("coupling matrix must be exactly symmetric")
        if np.any(np.diag(xi) != 0.0):
            raise ValueError("coupling matrix must have a zero diagonal")
        object.__setattr__(self, "xi", _frozen(xi))
        if not np.any(xi[-1] != 0.0):
            warnings.warn("system spin is decoupled from the bath", stacklevel=3)

    @property
    def n_spins(self) -> int:
        return self.xi.shape[0]

    @property
    def n_bath(self) -> int:
        return self.n_spins - 1

    @property
    def xi_sb_sq(self) -> float:
        """Effective squared system-bath coupling, the sum of xi_sk^2 over bath spins k."""
        return float(np.sum(self.xi[-1, :-1] ** 2))

    @property
    def system_coupled(self) -> bool:
        return bool(np.any(self.xi[-1] != 0.0))

    def bonds(self) -> list[tuple[int, int, float]]:
        """Nonzero couplings as ``(i, j, xi_ij)`` with 0-based ``i < j``."""
        i, j = np.nonzero(np.triu(self.xi, 1))
        return [(int(a), int(b), float(self.xi[a, b])) for a, b in zip(i, j)]


def coupling_ata(n_bath: int, xi: float) -> CouplingGraph:
    """All-to-all graph: every pair of the N+1 spins coupled with strength ``xi``."""
    _check_n_bath(n_bath)
    n = n_bath + 1
    with warnings.catch_warnings():
        if xi == 0:
            warnings.simplefilter("ignore")
        return CouplingGraph(float(xi) * (np.ones((n, n)) - np.eye(n)))


def coupling_nn(n_bath: int, xi_bath: float, xi_sb: float) -> CouplingGraph:
    """Linear chain 1-2-...-N-(N+1); the last link couples the system."""
    _check_n_bath(n_bath)
    n = n_bath + 1
    xi = np.zeros((n, n))
    for i in range(n_bath - 1):
        xi[i, i + 1] = xi[i + 1, i] = xi_bath
    xi[n_bath - 1, n_bath] = xi[n_bath, n_bath - 1] = xi_sb
    return CouplingGraph(xi)


def coupling_power_law(n_bath: int, xi0: float, delta: float) -> CouplingGraph:
    """Chain with long-range couplings ``xi0 / |i - j|**delta``.

    The physically reachable range is ``0 <= delta <= 3``; other exponents are
    accepted with a warning.
    """
    _check_n_bath(n_bath)
    if not 0.0 <= delta <= 3.0:
        warnings.warn(f"power-law exponent {delta} outside the usual range [0, 3]", stacklevel=2)
    n = n_bath + 1
    idx = np.arange(n)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    xi = np.zeros((n, n))
    off = dist > 0
    xi[off] = xi0 / dist[off] ** delta
    return CouplingGraph(xi)


def coupling_explicit(xi: Sequence[Sequence[float]]) -> CouplingGraph:
    return CouplingGraph(np.asarray(xi, dtype=float))


def _check_n_bath(n_bath: int) -> None:
    if int(n_bath) != n_bath or n_bath < 1:
        raise ValueError(f"n_bath must be a positive integer, got {n_bath!r}")
    if n_bath > MAX_BATH_SPINS:
        raise ValueError(f"n_bath={n_bath} exceeds the dense-matrix cap of {MAX_BATH_SPINS}")


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """N bath spins plus one system spin (the last site).

    ``alpha`` holds one dephasing rate per site, system last. Use
    :meth:`dephased` for the usual case of equal rates on the bath only.
    """

    n_bath: int
    coupling: CouplingGraph
    alpha: tuple[float, ...]
    h0: float = 1.0

    def __post_init__(self):
        _check_n_bath(self.n_bath)
        if self.coupling.n_bath != self.n_bath:
            raise ValueError(
                f"coupling graph has {self.coupling.n_spins} sites, expected {self.n_bath + 1}"
            )
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) != self.n_bath + 1:
            raise ValueError(f"need {self.n_bath + 1} dephasing rates, got {len(alpha)}")
        if any(a < 0 or not math.isfinite(a) for a in alpha):
            raise ValueError(f"dephasing rates must be finite and >= 0, got {alpha}")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def dephased(cls, coupling: CouplingGraph, alpha: float, system_alpha: float = 0.0,
                 h0: float = 1.0) -> "SpinSystem":
        n = coupling.n_bath
        return cls(n, coupling, (alpha,) * n + (system_alpha,), h0)

    @property
    def n_spins(self) -> int:
        return self.n_bath + 1

    @property
    def dim(self) -> int:
        return 2 ** self.n_spins

    @property
    def bath_alpha(self) -> float:
        """Mean bath dephasing rate (the single rate for uniformly dephased baths)."""
        return float(np.mean(self.alpha[:-1]))


def _n_spins(sys_or_n: Union[SpinSystem, int]) -> int:
    return sys_or_n.n_spins if isinstance(sys_or_n, SpinSystem) else int(sys_or_n)


def build_spin_op(sys_or_n: Union[SpinSystem, int], site: int, kind: str) -> np.ndarray:
    """Embed a single-site operator at 1-based ``site`` of an (N+1)-spin register.

    ``kind`` is one of ``"z"``, ``"plus"``, ``"minus"``, ``"x"``. An integer
    first argument is taken as the total number of spins.
    """
    n = _n_spins(sys_or_n)
    if not 1 <= site <= n:
        raise IndexError(f"site {site} out of range 1..{n}")
    try:
        op = _SINGLE_SITE[kind]
    except KeyError:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {sorted(_SINGLE_SITE)}")
    eye = np.eye(2, dtype=complex)
    return reduce(np.kron, [op if k == site - 1 else eye for k in range(n)])


def site_z_values(n_spins: int) -> np.ndarray:
    """Diagonal of every sigma_z, shape ``(n_spins, 2**n_spins)``, entries +-1/2."""
    basis = np.arange(2 ** n_spins)
    shifts = n_spins - 1 - np.arange(n_spins)
    bits = (basis[None, :] >> shifts[:, None]) & 1
    return 0.5 - bits.astype(float)


def site_masks(n_spins: int) -> np.ndarray:
    """Bit mask of each site within a basis index."""
    return 1 << (n_spins - 1 - np.arange(n_spins))


def interaction_hamiltonian(coupling: CouplingGraph) -> np.ndarray:
    """``V = sum_{i<j} xi_ij (s-_i s+_j + s+_i s-_j)`` as a dense real matrix."""
    n = coupling.n_spins
    d = 2 ** n
    masks = site_masks(n)
    basis = np.arange(d)
    V = np.zeros((d, d))
    for i, j, xij in coupling.bonds():
        bi = (basis & masks[i]) != 0
        bj = (basis & masks[j]) != 0
        flip = basis[bi != bj]
        V[flip ^ (masks[i] | masks[j]), flip] += xij
    return V


def total_z_operator(n_spins: int) -> np.ndarray:
    return np.diag(site_z_values(n_spins).sum(axis=0)).astype(complex)


def export_operator_csv(op: np.ndarray, path: Union[str, Path], atol: float = 0.0) -> None:
    """Write the nonzero entries of ``op`` as ``row,col,re,im`` (0-based indices)."""
    rows, cols = np.nonzero(np.abs(op) > atol)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for r, c in zip(rows, cols):
            v = op[r, c]
            w.writerow([int(r), int(c), f"{v.real:.12g}", f"{v.imag:.12g}"])


def thermal_polarization(h0: float, T: float) -> float:
    """Gibbs expectation of sigma_z for ``H = h0 * sigma_z`` at temperature ``T``.

    Equals ``-tanh(h0 / 2T) / 2``; ``T = math.inf`` gives 0.
    """
    if math.isinf(T) and T > 0:
        return 0.0
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    return -0.5 * math.tanh(h0 / (2.0 * T))


# Bath preparations ---------------------------------------------------------


@dataclass(frozen=True)
class Thermal:
    T: float

    def __post_init__(self):
        if not (self.T > 0):
            raise InvalidStateError(f"thermal bath needs T > 0, got {self.T}")


@dataclass(frozen=True)
class UniformPolarization:
    z: float

    def __post_init__(self):
        _check_polarization(self.z)


@dataclass(frozen=True)
class ExplicitPolarizations:
    z: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))
        for v in self.z:
            _check_polarization(v)


@dataclass(frozen=True)
class ClassicalMixture:
    """``(1 - p)|down...down><down...down| + p|up...up><up...up|`` on the bath."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise InvalidStateError(f"mixture weight must lie in [0, 1], got {self.p}")


@dataclass(frozen=True, eq=False)
class ExplicitDensity:
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(np.asarray(self.matrix, dtype=complex)))


BathPreparation = Union[Thermal, UniformPolarization, ExplicitPolarizations, ClassicalMixture,
                        ExplicitDensity]


def _check_polarization(z: float) -> None:
    if not -0.5 <= z <= 0.5:
        raise InvalidStateError(f"polarization must lie in [-1/2, 1/2], got {z}")


def spin_state(z: float, x: float = 0.0) -> np.ndarray:
    """Single-spin density matrix with <sigma_z> = z, <sigma_x> = x and <sigma_y> = 0."""
    if z * z + x * x > 0.25 + 1e-15:
        raise InvalidStateError(f"(z={z}, x={x}) is outside the Bloch ball (z^2 + x^2 <= 1/4)")
    return np.array([[0.5 + z, x], [x, 0.5 - z]], dtype=complex)


def bath_state(sys: SpinSystem, bath: BathPreparation) -> np.ndarray:
    """Density matrix of the N bath spins for a preparation."""
    N = sys.n_bath
    if isinstance(bath, Thermal):
        zs = [thermal_polarization(sys.h0, bath.T)] * N
    elif isinstance(bath, UniformPolarization):
        zs = [bath.z] * N
    elif isinstance(bath, ExplicitPolarizations):
        if len(bath.z) != N:
            raise InvalidStateError(f"need {N} bath polarizations, got {len(bath.z)}")
        zs = list(bath.z)
    elif isinstance(bath, ClassicalMixture):
        rho = np.zeros((2 ** N, 2 ** N), dtype=complex)
        rho[0, 0] = bath.p
        rho[-1, -1] = 1.0 - bath.p
        return rho
    elif isinstance(bath, ExplicitDensity):
        rho = np.array(bath.matrix)
        if rho.shape != (2 ** N, 2 ** N):
            raise InvalidStateError(f"bath density must be {2 ** N}x{2 ** N}, got {rho.shape}")
        validate_density_matrix(rho)
        return rho
    else:
        raise TypeError(f"unknown bath preparation {bath!r}")
    return reduce(np.kron, [spin_state(z) for z in zs])


def prepare_initial_state(sys: SpinSystem, bath: BathPreparation, system_z: float,
                          system_x: float = 0.0) -> np.ndarray:
    """Uncorrelated joint state ``rho_bath (x) rho_system``."""
    _check_polarization(system_z)
    rho = np.kron(bath_state(sys, bath), spin_state(system_z, system_x))
    validate_density_matrix(rho)
    return rho


def validate_density_matrix(rho: np.ndarray, herm_tol: float = 1e-12, trace_tol: float = 1e-12,
                            eig_tol: float = 1e-10) -> None:
    """Raise :class:`InvalidStateError` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got shape {rho.shape}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise InvalidStateError(f"density matrix not Hermitian (error {herm:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise InvalidStateError(f"density matrix trace is {tr}, expected 1")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lam < -eig_tol:
        raise InvalidStateError(f"density matrix has negative eigenvalue {lam:.3e}")
