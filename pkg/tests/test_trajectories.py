import numpy as np
import pytest

from dephased_bath import (EvolutionSpec, SpinSystem, UniformPolarization, convergence_report,
                           coupling_ata, coupling_explicit, evolve, fit_decay,
                           prepare_initial_state, run_trajectories)
from dephased_bath.trajectories import ensemble_as_series


@pytest.fixture
def small():
    sys = SpinSystem.dephased(coupling_ata(2, 1.0), 6.0)
    rho0 = prepare_initial_state(sys, UniformPolarization(-0.5), 0.5)
    return sys, rho0, EvolutionSpec(2.0, 0.05)


def test_same_seed_is_bit_identical(small):
    sys, rho0, spec = small
    a = run_trajectories(sys, rho0, spec, 300, 11)
    b = run_trajectories(sys, rho0, spec, 300, 11)
    c = run_trajectories(sys, rho0, spec, 300, 12)
    for o in a.observables:
        assert np.array_equal(a.mean[o], b.mean[o])
        assert np.array_equal(a.stderr[o], b.stderr[o])
    assert not np.array_equal(a.mean["z_s"], c.mean["z_s"])


def test_parallel_matches_serial(small):
    sys, rho0, spec = small
    a = run_trajectories(sys, rho0, spec, 1100, 5, jobs=1)
    b = run_trajectories(sys, rho0, spec, 1100, 5, jobs=3)
    for o in a.observables:
        assert np.array_equal(a.mean[o], b.mean[o])


def test_uncoupled_trajectories_frozen():
    with pytest.warns(UserWarning):
        sys = SpinSystem.dephased(coupling_explicit(np.zeros((3, 3))), 5.0)
    rho0 = prepare_initial_state(sys, UniformPolarization(-0.2), 0.3)
    ens = run_trajectories(sys, rho0, EvolutionSpec(1.0, 0.1), 200, 0)
    for o in ("z_1", "z_2", "z_s"):
        assert np.allclose(ens.mean[o], ens.mean[o][0], atol=1e-12)


def test_measurement_rate_sets_coherence_decay():
    alpha = 2.0
    with pytest.warns(UserWarning):
        sys = SpinSystem(1, coupling_explicit(np.zeros((2, 2))), (0.0, alpha))
    # Coherence on the (decoupled) system spin, measured at rate alpha.
    rho0 = prepare_initial_state(sys, UniformPolarization(0.0), 0.0, 0.5)
    spec = EvolutionSpec(2.0, 0.05)
    ens = run_trajectories(sys, rho0, spec, 20000, 3)
    fit = fit_decay(ens.times, ens.mean["x_s"], "pure_exp")
    assert fit.rate == pytest.approx(alpha, rel=0.03)
    exact = evolve(sys, rho0, spec)
    assert np.allclose(exact.x_s, 0.5 * np.exp(-alpha * exact.times), atol=1e-10)


def test_agrees_with_lindblad(small):
    sys, rho0, spec = small
    ens = run_trajectories(sys, rho0, spec, 4000, 21)
    rep = convergence_report(ens, evolve(sys, rho0, spec))
    assert rep["z_s"]["within"]["3"] >= 0.97
    assert rep["sum_z"]["max_score"] == 0.0
    assert rep["pair_sum"]["max_score"] == 0.0


def test_unbiased_at_start(small):
    sys, rho0, spec = small
    mixed = prepare_initial_state(sys, UniformPolarization(-0.2), 0.1)
    ens = run_trajectories(sys, mixed, spec, 4000, 8)
    exact = evolve(sys, mixed, spec)
    assert abs(ens.mean["z_1"][0] - exact.z[0, 0]) <= 3 * ens.stderr["z_1"][0]
    drift = np.abs(ens.mean["sum_z"] - exact.sum_z[0])
    assert np.all(drift <= 3 * ens.stderr["sum_z"] + 1e-12)


def test_self_report_is_zero(small):
    sys, rho0, spec = small
    ens = run_trajectories(sys, rho0, spec, 200, 1)
    rep = convergence_report(ens, ensemble_as_series(ens))
    assert all(r["max_score"] == 0.0 for r in rep.values())


def test_stderr_shrinks_with_more_runs(small):
    sys, rho0, spec = small
    a = run_trajectories(sys, rho0, spec, 2000, 4)
    b = run_trajectories(sys, rho0, spec, 4000, 4)
    sel = a.times > 0.2
    ratio = np.median(a.stderr["z_s"][sel] / b.stderr["z_s"][sel])
    assert ratio == pytest.approx(np.sqrt(2), rel=0.10)


def test_errors(small):
    sys, rho0, spec = small
    with pytest.raises(ValueError):
        run_trajectories(sys, rho0, spec, 1, 0)
    ens = run_trajectories(sys, rho0, spec, 10, 0)
    with pytest.raises(ValueError):
        convergence_report(ens, evolve(sys, rho0, EvolutionSpec(1.0, 0.05)))


def test_pure_state_input(small):
    sys, _, spec = small
    psi = np.zeros(8, complex)
    psi[0b001] = 1.0
    ens = run_trajectories(sys, psi, spec, 50, 2)
    assert ens.mean["z_s"][0] == pytest.approx(-0.5)


def test_csv_and_summary(tmp_path, small):
    sys, rho0, spec = small
    ens = run_trajectories(sys, rho0, spec, 20, 9)
    ens.to_csv(tmp_path / "e.csv")
    header = (tmp_path / "e.csv").read_text().splitlines()[0].split(",")
    assert header[:3] == ["t", "z_1_mean", "z_1_stderr"]
    ens.write_summary(tmp_path / "e.json")
    s = (tmp_path / "e.json").read_text()
    assert '"seed": 9' in s and "runtime_s" in s
