import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import embed
from dephased_bath import (SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Z, ClassicalMixture,
                           ExplicitDensity, ExplicitPolarizations, InvalidStateError, SpinSystem,
                           Thermal, UniformPolarization, bath_state, build_spin_op, coupling_ata,
                           coupling_explicit, coupling_nn, coupling_power_law,
                           interaction_hamiltonian, prepare_initial_state, spin_state,
                           thermal_polarization, validate_density_matrix)
from dephased_bath.register import export_operator_csv, site_z_values, total_z_operator


def test_site_one_z_in_two_spin_basis():
    op = build_spin_op(2, 1, "z")
    assert np.allclose(op, np.diag([0.5, 0.5, -0.5, -0.5]))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("kind,single", [("z", SIGMA_Z), ("plus", SIGMA_PLUS),
                                         ("minus", SIGMA_MINUS), ("x", SIGMA_X)])
def test_embedding_matches_kron(n, kind, single):
    for site in range(1, n + 1):
        assert np.allclose(build_spin_op(n, site, kind), embed(single, site, n))


def test_x_is_hermitian_with_half_eigenvalues():
    x = build_spin_op(3, 2, "x")
    assert np.allclose(x, x.conj().T)
    ev = np.linalg.eigvalsh(x)
    assert np.allclose(np.unique(np.round(ev, 12)), [-0.5, 0.5])
    assert np.allclose(x, 0.5 * (build_spin_op(3, 2, "plus") + build_spin_op(3, 2, "minus")))


def test_sandwich_identity():
    z, p, m = (build_spin_op(2, 2, k) for k in ("z", "plus", "minus"))
    assert np.allclose(z @ p @ z, -0.25 * p)
    assert np.allclose(z @ m @ z, -0.25 * m)


def test_site_out_of_range():
    with pytest.raises(IndexError):
        build_spin_op(2, 3, "z")
    with pytest.raises(IndexError):
        build_spin_op(2, 0, "z")
    with pytest.raises(ValueError):
        build_spin_op(2, 1, "y")


def test_site_z_values_match_diagonals():
    zv = site_z_values(3)
    for k in range(3):
        assert np.allclose(zv[k], np.diag(build_spin_op(3, k + 1, "z")).real)


def test_ata_graph():
    g = coupling_ata(3, 1.0)
    assert np.allclose(g.xi, np.ones((4, 4)) - np.eye(4))
    assert g.xi_sb_sq == pytest.approx(3.0)
    assert coupling_ata(2, 0.5).xi_sb_sq == pytest.approx(0.5)


def test_decoupled_system_is_flagged():
    g = coupling_ata(1, 0.0)
    assert not g.system_coupled
    assert np.all(g.xi == 0)
    with pytest.warns(UserWarning):
        coupling_nn(2, 1.0, 0.0)


def test_nn_graph():
    g = coupling_nn(3, 1.0, 1 / 20)
    expect = np.zeros((4, 4))
    for i, v in [(0, 1.0), (1, 1.0), (2, 1 / 20)]:
        expect[i, i + 1] = expect[i + 1, i] = v
    assert np.allclose(g.xi, expect)
    assert g.xi_sb_sq == pytest.approx(1 / 400)
    g1 = coupling_nn(1, 7.0, 2.0)
    assert np.allclose(g1.xi, [[0, 2.0], [2.0, 0]])
    assert len(coupling_nn(2, 1.0, 1.0).bonds()) == 2


def test_power_law_graph():
    assert np.allclose(coupling_power_law(3, 2.0, 0.0).xi, coupling_ata(3, 2.0).xi)
    g3 = coupling_power_law(3, 1.0, 3.0)
    assert g3.xi[0, 2] == pytest.approx(1 / 8)
    g1 = coupling_power_law(4, 1.0, 1.0)
    assert g1.xi[0, 4] == pytest.approx(1 / 4)
    with pytest.warns(UserWarning):
        coupling_power_law(2, 1.0, 4.0)


def test_explicit_graph_validation():
    with pytest.raises(ValueError):
        coupling_explicit([[0, 1], [2, 0]])
    with pytest.raises(ValueError):
        coupling_explicit([[1, 1], [1, 0]])


def test_thermal_polarization_limits():
    assert thermal_polarization(1.0, math.inf) == 0.0
    assert thermal_polarization(1.0, 1e-4) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        thermal_polarization(1.0, 0.0)


def test_thermal_polarization_gibbs_oracle():
    h = 1.0 * SIGMA_Z.real
    w = np.exp(-np.diag(h) / 1.0)
    rho = np.diag(w / w.sum())
    expect = np.trace(rho @ SIGMA_Z.real)
    assert thermal_polarization(1.0, 1.0) == pytest.approx(expect, abs=1e-14)
    assert thermal_polarization(1.0, 1.0) == pytest.approx(-0.23105, abs=1e-5)


def test_infinite_temperature_state():
    sys = SpinSystem.dephased(coupling_ata(2, 1.0), 1.0)
    rho = prepare_initial_state(sys, Thermal(math.inf), 0.5)
    up = np.diag([1.0, 0.0])
    assert np.allclose(rho, np.kron(np.eye(4) / 4, up))


def test_mixture_matches_uniform_total_polarization():
    sys = SpinSystem.dephased(coupling_ata(3, 1.0), 1.0)
    tz = total_z_operator(4)
    p = 0.3
    a = prepare_initial_state(sys, ClassicalMixture(p), 0.1)
    b = prepare_initial_state(sys, UniformPolarization(p - 0.5), 0.1)
    assert np.trace(tz @ a).real == pytest.approx(np.trace(tz @ b).real, abs=1e-14)
    rb = bath_state(sys, ClassicalMixture(p))
    assert rb[0, 0] == pytest.approx(p) and rb[-1, -1] == pytest.approx(1 - p)


def test_uniform_bath_reduced_state():
    sys = SpinSystem.dephased(coupling_ata(2, 1.0), 1.0)
    rb = bath_state(sys, UniformPolarization(-0.4)).reshape(2, 2, 2, 2)
    for axes in [(1, 3), (0, 2)]:
        red = np.trace(rb, axis1=axes[0], axis2=axes[1])
        assert np.allclose(red, np.diag([0.1, 0.9]))


def test_invalid_states():
    with pytest.raises(InvalidStateError):
        spin_state(0.4, 0.4)
    with pytest.raises(ValueError):
        ClassicalMixture(1.5)
    with pytest.raises(ValueError):
        UniformPolarization(0.6)
    sys = SpinSystem.dephased(coupling_ata(2, 1.0), 1.0)
    with pytest.raises(ValueError):
        bath_state(sys, ExplicitPolarizations((0.1,)))
    with pytest.raises(InvalidStateError):
        bath_state(sys, ExplicitDensity(np.diag([1.5, -0.5, 0, 0]).astype(complex)))


def test_operator_csv(tmp_path):
    p = tmp_path / "op.csv"
    export_operator_csv(build_spin_op(1, 1, "plus"), p)
    lines = p.read_text().splitlines()
    assert lines[0] == "row,col,re,im"
    assert any(l.startswith("0,1,1") for l in lines[1:])


def random_graph(rng, n):
    a = rng.normal(size=(n, n))
    a = a + a.T
    np.fill_diagonal(a, 0.0)
    return coupling_explicit(a)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_interaction_commutes_with_h0_and_total_z(n_bath, seed):
    g = random_graph(np.random.default_rng(seed), n_bath + 1)
    v = interaction_hamiltonian(g)
    tz = total_z_operator(n_bath + 1)
    h0 = 1.7 * tz
    assert np.linalg.norm(h0 @ v - v @ h0) <= 1e-12
    assert np.linalg.norm(tz @ v - v @ tz) <= 1e-12
    assert np.allclose(v, v.conj().T)


def test_interaction_matches_operator_formula():
    g = random_graph(np.random.default_rng(3), 4)
    n = 4
    ref = np.zeros((16, 16), complex)
    for i, j, x in g.bonds():
        ref += x * (embed(SIGMA_MINUS, i + 1, n) @ embed(SIGMA_PLUS, j + 1, n)
                    + embed(SIGMA_PLUS, i + 1, n) @ embed(SIGMA_MINUS, j + 1, n))
    assert np.allclose(interaction_hamiltonian(g), ref, atol=1e-14)


def test_random_preparations_are_valid():
    rng = np.random.default_rng(0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(100):
            n = int(rng.integers(1, 4))
            sys = SpinSystem.dephased(coupling_ata(n, 1.0), 1.0)
            kind = rng.integers(4)
            if kind == 0:
                bath = Thermal(float(rng.uniform(0.05, 5.0)))
            elif kind == 1:
                bath = UniformPolarization(float(rng.uniform(-0.5, 0.5)))
            elif kind == 2:
                bath = ExplicitPolarizations(tuple(rng.uniform(-0.5, 0.5, n)))
            else:
                bath = ClassicalMixture(float(rng.uniform()))
            r = float(rng.uniform(0, 0.5))
            phi = float(rng.uniform(0, 2 * np.pi))
            rho = prepare_initial_state(sys, bath, r * np.cos(phi), r * np.sin(phi))
            validate_density_matrix(rho)
