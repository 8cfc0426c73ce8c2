"""Dephasing unraveled as random projective sigma_z measurements.

Every dephased site k is measured at the events of an independent Poisson
process of rate ``mu_k = alpha_k``. A measurement destroys that site's mean
coherence, so Poisson averaging gives coherence decay ``exp(-mu t)``, the same
as the Lindblad channel with ``A = sqrt(alpha) sigma_z``. Between events the
state evolves unitarily under V.

Each trajectory draws from its own stream, seeded from
``SeedSequence(master_seed, spawn_key=(index,))``. The ensemble is therefore
independent of how trajectories are batched or parallelized.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .exceptions import NumericalError
from .io import atomic_writer, write_json
from .lindblad import EvolutionSpec, ObservableSeries
from .register import SpinSystem, interaction_hamiltonian, site_masks, site_z_values

NORM_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    """Ensemble means and standard errors (sample std / sqrt(n_traj)) on the output grid."""

    n_traj: int
    master_seed: int
    times: np.ndarray
    mean: dict
    stderr: dict
    zz_mean: Optional[np.ndarray] = field(default=None, repr=False)
    runtime: float = field(default=0.0, compare=False)

    @property
    def observables(self) -> list[str]:
        return list(self.mean)

    def to_csv(self, path: Union[str, Path]) -> None:
        names = self.observables
        header = ["t"] + [f"{o}_{s}" for o in names for s in ("mean", "stderr")]
        with atomic_writer(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [t]
                for o in names:
                    row += [self.mean[o][k], self.stderr[o][k]]
                w.writerow([f"{v:.12g}" for v in row])

    def summary(self) -> dict:
        return {"n_traj": self.n_traj, "seed": self.master_seed, "observables": self.observables,
                "n_samples": int(self.times.size)}

    def write_summary(self, path: Union[str, Path], include_runtime: bool = True) -> None:
        s = self.summary()
        if include_runtime:
            s["runtime_s"] = round(self.runtime, 3)
        write_json(path, s)


def _trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


def _initial_vectors(state: np.ndarray, d: int):
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        if state.shape != (d,):
            raise ValueError(f"state vector must have length {d}")
        nrm = np.linalg.norm(state)
        if abs(nrm - 1) > NORM_TOL:
            raise ValueError(f"state vector is not normalized (norm {nrm})")
        return np.array([1.0]), state[None, :]
    if state.shape != (d, d):
        raise ValueError(f"density matrix must be {d}x{d}")
    w, U = np.linalg.eigh(0.5 * (state + state.conj().T))
    w = np.clip(w, 0.0, None)
    keep = w > 1e-14
    w = w[keep] / w[keep].sum()
    return w, U[:, keep].T


def _sample_events(rng: np.random.Generator, rates: np.ndarray, t_max: float):
    total = rates.sum()
    if total == 0:
        return np.empty(0), np.empty(0, dtype=int), np.empty(0)
    count = rng.poisson(total * t_max)
    times = np.sort(rng.uniform(0.0, t_max, count))
    sites = rng.choice(rates.size, size=count, p=rates / total)
    outcomes = rng.uniform(size=count)
    return times, sites, outcomes


def _simulate_batch(sys: SpinSystem, state: np.ndarray, times: np.ndarray, indices: range,
                    master_seed: int) -> dict:
    """Run trajectories ``indices``; returns per-trajectory observables."""
    n, d = sys.n_spins, sys.dim
    V = interaction_hamiltonian(sys.coupling)
    E, W = np.linalg.eigh(V)
    Wh = W.conj().T
    zvals = site_z_values(n)
    up = zvals > 0
    rates = np.asarray(sys.alpha)
    sys_mask = int(site_masks(n)[-1])
    flip = np.arange(d) ^ sys_mask

    weights, vecs = _initial_vectors(state, d)
    B = len(indices)
    psi0 = np.empty((B, d), dtype=complex)
    ev_t, ev_site, ev_u = [], [], []
    for b, idx in enumerate(indices):
        rng = _trajectory_rng(master_seed, idx)
        pick = 0 if weights.size == 1 else rng.choice(weights.size, p=weights)
        psi0[b] = vecs[pick]
        t_e, s_e, u_e = _sample_events(rng, rates, float(times[-1]))
        ev_t.append(t_e)
        ev_site.append(s_e)
        ev_u.append(u_e)
    K = max((len(e) for e in ev_t), default=0)
    t_ev = np.full((B, K + 1), np.inf)
    s_ev = np.zeros((B, K + 1), dtype=int)
    u_ev = np.zeros((B, K + 1))
    for b in range(B):
        k = len(ev_t[b])
        t_ev[b, :k], s_ev[b, :k], u_ev[b, :k] = ev_t[b], ev_site[b], ev_u[b]

    phi = psi0 @ Wh.T  # amplitudes in the eigenbasis of V
    tcur = np.full(B, float(times[0]))
    ptr = np.zeros(B, dtype=int)
    rows = np.arange(B)
    T = times.size
    out_z = np.empty((B, T, n))
    out_x = np.empty((B, T))
    out_zz = np.empty((B, T, n, n))

    def record(k, psi):
        p = np.abs(psi) ** 2
        out_z[:, k] = p @ zvals.T
        out_zz[:, k] = np.einsum("bd,id,jd->bij", p, zvals, zvals)
        out_x[:, k] = 0.5 * np.real(np.sum(psi * psi[:, flip].conj(), axis=1))

    for k, t_out in enumerate(times):
        while True:
            nxt = t_ev[rows, ptr]
            act = np.nonzero(nxt <= t_out)[0]
            if act.size == 0:
                break
            dt = nxt[act] - tcur[act]
            ph = phi[act] * np.exp(-1j * np.outer(dt, E))
            psi = ph @ W.T
            site = s_ev[act, ptr[act]]
            mask_up = up[site]
            p_up = np.sum(np.abs(psi) ** 2 * mask_up, axis=1)
            keep = np.where((u_ev[act, ptr[act]] < p_up)[:, None], mask_up, ~mask_up)
            psi = psi * keep
            nrm = np.linalg.norm(psi, axis=1)
            if np.any(nrm == 0):
                raise NumericalError("projection produced a zero state")
            psi /= nrm[:, None]
            phi[act] = psi @ Wh.T
            tcur[act] = nxt[act]
            ptr[act] += 1
        ph = phi * np.exp(-1j * np.outer(t_out - tcur, E))
        phi = ph
        tcur[:] = t_out
        psi = phi @ W.T
        nrm = np.linalg.norm(psi, axis=1)
        if np.max(np.abs(nrm - 1.0)) > NORM_TOL:
            raise NumericalError(f"trajectory norm drifted by {np.max(np.abs(nrm - 1.0)):.3e}")
        record(k, psi)
    return {"z": out_z, "x_s": out_x, "zz": out_zz}


# Fixed batch size keeps batched BLAS results independent of the worker count.
BATCH = 512


def _chunks(n_traj: int) -> list[range]:
    return [range(a, min(n_traj, a + BATCH)) for a in range(0, n_traj, BATCH)]


def run_trajectories(sys: SpinSystem, state: np.ndarray, spec: EvolutionSpec, n_traj: int,
                     master_seed: int, jobs: int = 1) -> TrajectoryEnsemble:
    """Monte-Carlo ensemble on ``spec.times``.

    ``state`` is a normalized state vector or a density matrix; mixed states are
    sampled from their eigendecomposition, one draw per trajectory.
    """
    if n_traj < 2:
        raise ValueError("need at least 2 trajectories for standard errors")
    times = spec.times
    start = time.perf_counter()
    chunks = _chunks(n_traj)
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_simulate_batch, [sys] * len(chunks), [state] * len(chunks),
                                [times] * len(chunks), chunks, [master_seed] * len(chunks)))
    else:
        parts = [_simulate_batch(sys, state, times, c, master_seed) for c in chunks]
    z = np.concatenate([p["z"] for p in parts])
    x = np.concatenate([p["x_s"] for p in parts])
    zz = np.concatenate([p["zz"] for p in parts])
    n = sys.n_spins
    iu = ~np.eye(n, dtype=bool)
    samples = {f"z_{k + 1}": z[:, :, k] for k in range(n - 1)}
    samples["z_s"] = z[:, :, -1]
    samples["x_s"] = x
    samples["sum_z"] = z.sum(axis=2)
    samples["pair_sum"] = zz[:, :, iu].sum(axis=2)
    mean = {k: v.mean(axis=0) for k, v in samples.items()}
    stderr = {k: v.std(axis=0, ddof=1) / np.sqrt(n_traj) for k, v in samples.items()}
    return TrajectoryEnsemble(n_traj, master_seed, times, mean, stderr, zz_mean=zz.mean(axis=0),
                              runtime=time.perf_counter() - start)


def ensemble_as_series(ens: TrajectoryEnsemble) -> ObservableSeries:
    """Ensemble means packed as an :class:`ObservableSeries` (trace error is zero)."""
    n_bath = sum(1 for k in ens.mean if k.startswith("z_") and k != "z_s")
    z = np.column_stack([ens.mean[f"z_{k}"] for k in range(1, n_bath + 1)] + [ens.mean["z_s"]])
    zz = ens.zz_mean
    if zz is None:
        zz = np.full((ens.times.size, n_bath + 1, n_bath + 1), np.nan)
    return ObservableSeries(ens.times, z, ens.mean["x_s"], zz, np.zeros(ens.times.size))


def convergence_report(ens: TrajectoryEnsemble, reference: ObservableSeries,
                       observables: Optional[list[str]] = None) -> dict:
    """Compare ensemble means with a reference series, in units of standard error.

    For each observable: the maximum ``|mean - reference| / stderr`` and the
    fraction of samples within 1, 2 and 3 standard errors. Differences at or
    below 1e-12 score zero, so conserved observables (whose standard error is
    pure round-off) do not blow up the score.
    """
    if ens.times.shape != reference.times.shape or not np.allclose(ens.times, reference.times,
                                                                   rtol=0, atol=1e-12):
        raise ValueError("ensemble and reference time grids differ")
    ref = {"z_s": reference.z_s, "x_s": reference.x_s, "sum_z": reference.sum_z,
           "pair_sum": reference.pair_sum}
    for k in range(reference.n_bath):
        ref[f"z_{k + 1}"] = reference.z[:, k]
    names = observables or [o for o in ens.observables if o in ref]
    report = {}
    for o in names:
        diff = np.abs(ens.mean[o] - ref[o])
        se = ens.stderr[o]
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where(diff <= 1e-12, 0.0, np.where(se > 0, diff / se, np.inf))
        report[o] = {
            "max_score": float(np.max(score)),
            "within": {str(k): float(np.mean(score <= k)) for k in (1, 2, 3)},
        }
    return report
