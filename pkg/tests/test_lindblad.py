import numpy as np
import pytest
import scipy.linalg as sl

from conftest import embed
from dephased_bath import (SIGMA_Z, ClassicalMixture, EvolutionSpec, ExplicitPolarizations,
                           InvalidStateError, LindbladGenerator, NumericalError, SpinSystem,
                           Thermal, UniformPolarization, coupling_ata, coupling_explicit,
                           coupling_nn, evolve, interaction_hamiltonian, pearson_corr,
                           prepare_initial_state, read_series_csv, rhs, thermal_polarization)
from dephased_bath.lindblad import ObservableSeries, default_step, series_header


def random_state(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def reference_rhs(sys, rho):
    """Textbook Lindblad form with A_k = sqrt(alpha_k) sigma_z^k."""
    n = sys.n_spins
    v = interaction_hamiltonian(sys.coupling)
    out = -1j * (v @ rho - rho @ v)
    for k, a in enumerate(sys.alpha):
        A = np.sqrt(a) * embed(SIGMA_Z, k + 1, n)
        out += 2 * A @ rho @ A - A @ A @ rho - rho @ A @ A
    return out


def reference_superoperator(sys):
    d = sys.dim
    eye = np.eye(d)
    v = interaction_hamiltonian(sys.coupling)
    # Column-stacking convention, independent of the engine's row-major layout.
    L = -1j * (np.kron(eye, v) - np.kron(v.T, eye))
    for k, a in enumerate(sys.alpha):
        A = np.sqrt(a) * embed(SIGMA_Z, k + 1, sys.n_spins)
        AA = A @ A
        L += 2 * np.kron(A.T, A) - np.kron(eye, AA) - np.kron(AA.T, eye)
    return L


def test_rhs_matches_operator_formula():
    rng = np.random.default_rng(1)
    xi = rng.normal(size=(4, 4))
    xi = xi + xi.T
    np.fill_diagonal(xi, 0)
    sys = SpinSystem(3, coupling_explicit(xi), (0.7, 1.3, 2.0, 0.4))
    rho = random_state(rng, 16)
    d = rhs(sys, rho)
    assert np.allclose(d, reference_rhs(sys, rho), atol=1e-13)
    assert abs(np.trace(d)) <= 1e-12
    assert np.allclose(d, d.conj().T, atol=1e-13)


def test_superoperator_matches_rhs():
    rng = np.random.default_rng(2)
    sys = SpinSystem.dephased(coupling_nn(2, 1.0, 0.3), 2.0, system_alpha=0.5)
    rho = random_state(rng, 8)
    gen = LindbladGenerator(sys)
    assert np.allclose((gen.superoperator() @ rho.ravel()).reshape(8, 8), gen(rho))


def test_diagonal_state_is_stationary_without_coupling():
    with pytest.warns(UserWarning):
        sys = SpinSystem.dephased(coupling_explicit(np.zeros((3, 3))), 3.0)
    rho = np.diag(np.random.default_rng(0).dirichlet(np.ones(8))).astype(complex)
    assert np.allclose(rhs(sys, rho), 0)


def test_single_spin_coherence_decays_at_alpha():
    alpha = 2.5
    with pytest.warns(UserWarning):
        sys = SpinSystem(1, coupling_explicit(np.zeros((2, 2))), (alpha, 0.0))
    rho = np.zeros((4, 4), complex)
    # Coherence of the dephased spin alone: |0 0><1 0|.
    rho[0, 2] = 1.0
    assert rhs(sys, rho)[0, 2] == pytest.approx(-alpha)
    # Two-spin coherence |01><10| with only the first spin dephased.
    rho = np.zeros((4, 4), complex)
    rho[1, 2] = 1.0
    assert rhs(sys, rho)[1, 2] == pytest.approx(-alpha)


def test_system_coherence_decay_in_evolution():
    alpha = 1.5
    with pytest.warns(UserWarning):
        sys = SpinSystem(1, coupling_explicit(np.zeros((2, 2))), (0.0, alpha))
    rho0 = prepare_initial_state(sys, UniformPolarization(0.1), 0.0, 0.4)
    s = evolve(sys, rho0, EvolutionSpec(2.0, 0.05))
    assert np.allclose(s.x_s, 0.4 * np.exp(-alpha * s.times), atol=1e-10)


def test_thermal_fixed_point(fig1_system):
    z = thermal_polarization(1.0, 1.0)
    rho0 = prepare_initial_state(fig1_system, Thermal(1.0), z)
    s = evolve(fig1_system, rho0, EvolutionSpec(5.0, 0.1))
    assert np.max(np.abs(s.z_s - z)) <= 1e-10


def test_uncoupled_observables_constant():
    with pytest.warns(UserWarning):
        sys = SpinSystem.dephased(coupling_explicit(np.zeros((3, 3))), 4.0)
    rho0 = prepare_initial_state(sys, ExplicitPolarizations((0.2, -0.4)), 0.3, 0.2)
    s = evolve(sys, rho0, EvolutionSpec(1.0, 0.1, dt=0.01))
    assert np.allclose(s.z, s.z[0])
    assert np.allclose(s.x_s, 0.2)


def test_free_evolution_revives():
    sys = SpinSystem.dephased(coupling_ata(3, 1.0), 0.0)
    rho0 = prepare_initial_state(sys, UniformPolarization(-0.5), 0.5)
    s = evolve(sys, rho0, EvolutionSpec(10.0, 0.05))
    assert np.min(s.z_s) < 0 and np.max(s.z_s[s.times > 2]) > 0.4


def test_conservation(fig1_system, fig1_state):
    s = evolve(fig1_system, fig1_state, EvolutionSpec(8.0, 0.01))
    assert np.max(np.abs(s.sum_z - s.sum_z[0])) <= 1e-8
    assert np.max(np.abs(s.pair_sum - s.pair_sum[0])) <= 1e-8
    assert np.max(s.trace_err) <= 1e-8
    assert np.all(np.abs(s.z) <= 0.5 + 1e-9)


@pytest.mark.parametrize("alpha", [0.0, 6.0])
def test_step_halving_converges(alpha):
    sys = SpinSystem.dephased(coupling_ata(3, 1.0), alpha)
    rho0 = prepare_initial_state(sys, UniformPolarization(-0.5), 0.5)
    h = default_step(sys)
    a = evolve(sys, rho0, EvolutionSpec(20.0, 0.1, dt=h))
    b = evolve(sys, rho0, EvolutionSpec(20.0, 0.1, dt=h / 2))
    for name in ("z", "x_s", "zz"):
        assert np.max(np.abs(getattr(a, name) - getattr(b, name))) <= 1e-6


def test_integrators_agree_with_reference():
    sys = SpinSystem.dephased(coupling_nn(2, 1.0, 0.7), 2.0, system_alpha=0.3)
    rho0 = prepare_initial_state(sys, ExplicitPolarizations((-0.3, 0.1)), 0.4, 0.2)
    L = reference_superoperator(sys)
    ts = np.arange(0, 3.0 + 1e-9, 0.25)
    zs_op = embed(SIGMA_Z, 3, 3)
    ref = np.array([np.trace(zs_op @ (sl.expm(L * t) @ rho0.reshape(-1, order="F"))
                             .reshape(8, 8, order="F")).real for t in ts])
    for method in ("rk4", "adaptive", "expm"):
        s = evolve(sys, rho0, EvolutionSpec(3.0, 0.25, method))
        assert np.max(np.abs(s.z_s - ref)) <= 1e-7, method


def test_ata_mixture_matches_reference(fig1_system):
    rho0 = prepare_initial_state(fig1_system, ClassicalMixture(0.2), 0.5)
    s = evolve(fig1_system, rho0, EvolutionSpec(4.0, 0.5))
    L = reference_superoperator(fig1_system)
    zs_op = embed(SIGMA_Z, 4, 4)
    ref = [np.trace(zs_op @ (sl.expm(L * t) @ rho0.reshape(-1, order="F"))
                    .reshape(16, 16, order="F")).real for t in s.times]
    assert np.max(np.abs(s.z_s - ref)) <= 1e-8


def test_bath_permutation_symmetry_under_ata(fig1_system):
    spec = EvolutionSpec(3.0, 0.05)
    runs = [evolve(fig1_system, prepare_initial_state(fig1_system, ExplicitPolarizations(z), 0.5),
                   spec).z_s for z in [(-0.5, -0.4, 0.0), (0.0, -0.5, -0.4)]]
    assert np.max(np.abs(runs[0] - runs[1])) <= 1e-12


def test_deterministic(fig1_system, fig1_state):
    spec = EvolutionSpec(1.0, 0.1)
    a, b = evolve(fig1_system, fig1_state, spec), evolve(fig1_system, fig1_state, spec)
    assert np.array_equal(a.zz, b.zz)


def test_invalid_inputs(fig1_system, fig1_state):
    with pytest.raises(InvalidStateError):
        evolve(fig1_system, 2 * fig1_state, EvolutionSpec(1.0, 0.1))
    with pytest.raises(ValueError):
        evolve(fig1_system, fig1_state[:8, :8], EvolutionSpec(1.0, 0.1))
    with pytest.raises(ValueError):
        EvolutionSpec(1.0, 2.0)
    with pytest.raises(ValueError):
        EvolutionSpec(1.0, 0.1, dt=0.2)
    with pytest.raises(ValueError):
        EvolutionSpec(1.0, 0.1, "adaptive", rtol=0)


def test_unstable_step_is_reported(fig1_system, fig1_state):
    with pytest.raises(NumericalError):
        evolve(fig1_system, fig1_state, EvolutionSpec(5.0, 0.5, dt=0.5))


def test_pearson_corr():
    # Classical mixture of |00> and |11> with equal weights.
    t = np.array([0.0])
    z = np.array([[0.0, 0.0]])
    zz = np.array([[[0.25, 0.25], [0.25, 0.25]]])
    s = ObservableSeries(t, z, np.zeros(1), zz, np.zeros(1))
    assert pearson_corr(s, 1, 2)[0] == pytest.approx(1.0)
    sat = ObservableSeries(t, np.array([[0.5, 0.0]]), np.zeros(1), zz, np.zeros(1))
    assert np.isnan(pearson_corr(sat, 1, 2)[0])
    with pytest.raises(ValueError):
        pearson_corr(s, 1, 1)


def test_product_state_uncorrelated_then_negative(fig1_system, fig1_state):
    s = evolve(fig1_system, prepare_initial_state(fig1_system, UniformPolarization(-0.25), 0.25),
               EvolutionSpec(8.0, 0.1))
    c = s.system_corr()
    assert np.allclose(c[0], 0, atol=1e-14)
    assert np.all(c[-1] < 0)
    assert np.all(np.abs(c[np.isfinite(c)]) <= 1 + 1e-9)


def test_series_csv_round_trip(tmp_path, fig1_system, fig1_state):
    s = evolve(fig1_system, fig1_state, EvolutionSpec(0.5, 0.1))
    p = tmp_path / "s.csv"
    s.to_csv(p)
    header = p.read_text().splitlines()[0].split(",")
    assert header == series_header(3)
    assert header == ["t", "z_s", "x_s", "z_1", "z_2", "z_3", "corr_s1", "corr_s2", "corr_s3",
                      "sum_z", "pair_sum", "trace_err"]
    data = read_series_csv(p)
    assert np.allclose(data["z_s"], s.z_s, rtol=1e-11, atol=1e-12)
    assert np.allclose(data["t"], s.times)
