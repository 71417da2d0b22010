from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from pepsgadget.double_semion import build_ds_model
from pepsgadget.gadget import (
    ResolventConfig,
    apply_g,
    build_gadget,
    excitation_patterns,
    g_weight,
    ground_projector,
    harmonic,
    random_region_state,
    tilde_g_closed_form,
    verify_resolvent_equivalence,
)
from pepsgadget.lattice import HoneycombSpec, ring_graph
from pepsgadget.operators import SparseState, eig_low
from pepsgadget.peps import assemble_peps_state, identity_model, random_model


@pytest.fixture(scope="module")
def trivial():
    return build_gadget(identity_model(ring_graph(4)))


@pytest.fixture(scope="module")
def rand():
    return build_gadget(random_model(ring_graph(4), d=2, D=2, seed=5))


@pytest.fixture(scope="module")
def ds_torus():
    return build_ds_model(HoneycombSpec(1, 1)).gadget


def test_trivial_h0_vanishes(trivial):
    assert np.abs(trivial.H0.to_dense()).max() < 1e-14
    assert np.trace(ground_projector(trivial).to_dense()).real == pytest.approx(2**8)


def test_h0_spectrum_is_integer(rand):
    vals = np.linalg.eigvalsh(rand.H0.to_dense())
    np.testing.assert_allclose(vals, np.round(vals), atol=1e-12)
    assert set(np.round(vals).astype(int)) <= set(range(rand.num_sites + 1))


def test_h0_commutes_with_site_projectors(rand):
    h0 = rand.H0.to_dense()
    for p in rand.site_projectors:
        pd = p.to_dense()
        assert np.abs(h0 @ pd - pd @ h0).max() < 1e-13


def test_ground_projector_properties(rand):
    p0 = ground_projector(rand).to_dense()
    np.testing.assert_allclose(p0 @ p0, p0, atol=1e-12)
    assert np.trace(p0).real == pytest.approx(rand.model.d**rand.num_sites)
    assert np.abs(rand.H0.to_dense() @ p0).max() < 1e-12
    psi = assemble_peps_state(rand.model).to_dense()
    np.testing.assert_allclose(p0 @ psi, psi, atol=1e-12)


def test_full_hamiltonian_is_h0_plus_eps_v(rand):
    h = rand.full_hamiltonian(0.3).to_dense()
    np.testing.assert_allclose(h, rand.H0.to_dense() + 0.3 * rand.V.to_dense(), atol=1e-14)


def test_ds_h0_ground_degeneracy(ds_torus):
    dec = eig_low(ds_torus.H0, 20)
    zero = np.abs(dec.eigenvalues) < 1e-9
    assert zero.sum() == 16
    assert dec.eigenvalues[16] == pytest.approx(1.0)


def test_ds_full_hamiltonian_ground_below_zero(ds_torus):
    dec = eig_low(ds_torus.full_hamiltonian(0.01), 20)
    assert dec.eigenvalues[0] < 0
    assert dec.gap > 0


@pytest.mark.parametrize("n, value", [(1, Fraction(1)), (2, Fraction(3, 2)), (3, Fraction(11, 6))])
def test_harmonic(n, value):
    assert harmonic(n) == value


def test_default_delta_tilde():
    assert ResolventConfig.default(6).delta_tilde == pytest.approx(2 * float(harmonic(6)) + 1)


@pytest.mark.parametrize(
    "q, k, expected",
    [(0, 0, 1.0), (0, 2, 0.0), (1, 2, 0.5), (2, 2, 0.25), (1, 0, 3.0), (-1, 0, 3.0), (-2, 0, 9.0), (-1, 1, 0.0)],
)
def test_g_weight(q, k, expected):
    assert g_weight(q, k, 3.0) == pytest.approx(expected)


def _two_excitation_state(g):
    rng = np.random.default_rng(0)
    psi = random_region_state(g, [0, 1], rng)
    return excitation_patterns(g, psi)[2]


def test_apply_g_cases(rand):
    cfg = ResolventConfig(4.0)
    rng = np.random.default_rng(1)
    psi = random_region_state(rand, [0, 1, 2], rng)
    p0 = ground_projector(rand)
    np.testing.assert_allclose(apply_g(0, cfg, psi, rand).to_dense(), p0.apply(psi).to_dense(), atol=1e-12)
    two = _two_excitation_state(rand)
    np.testing.assert_allclose(apply_g(1, cfg, two, rand).to_dense(), 0.5 * two.to_dense(), atol=1e-12)
    np.testing.assert_allclose(apply_g(-1, cfg, psi, rand).to_dense(), 4.0 * p0.apply(psi).to_dense(), atol=1e-12)


def test_apply_g_matches_spectral_definition(rand):
    cfg = ResolventConfig(2.5)
    h0 = rand.H0.to_dense()
    vals, vecs = np.linalg.eigh(h0)
    k = np.round(vals).astype(int)
    rng = np.random.default_rng(2)
    v = rng.normal(size=h0.shape[0]) + 1j * rng.normal(size=h0.shape[0])
    psi = SparseState.from_dense(rand.register, v)
    for q in (-2, -1, 0, 1, 2, 3):
        weights = np.array([g_weight(q, int(x), cfg.delta_tilde) for x in k])
        ref = vecs @ (weights * (vecs.conj().T @ v))
        np.testing.assert_allclose(apply_g(q, cfg, psi, rand).to_dense(), ref, atol=1e-10)


@pytest.mark.parametrize("q", [0, -1, -2])
def test_apply_g_absorbs_p0_for_nonpositive_q(rand, q):
    cfg = ResolventConfig(3.0)
    psi = random_region_state(rand, [0, 1], np.random.default_rng(4))
    a = apply_g(q, cfg, apply_g(0, cfg, psi, rand), rand)
    b = apply_g(q, cfg, psi, rand)
    np.testing.assert_allclose(a.to_dense(), b.to_dense(), atol=1e-13)


def test_closed_form_coefficients(rand):
    one = tilde_g_closed_form([0], 2.0, rand)
    assert one.terms[0][0] == 1
    two = tilde_g_closed_form([0, 1], 4.0, rand)
    coeffs = {len(sites): c for c, sites in two.terms}
    assert two.terms[0][0] == Fraction(4) - Fraction(3, 2)
    n = rand.num_sites
    assert coeffs[n - 1] == Fraction(1, 2)
    assert coeffs[n - 2] == Fraction(1, 2)


def test_closed_form_operator_matches_spectral_on_region_states(rand):
    dt = 3.0
    closed = tilde_g_closed_form([1, 2], dt, rand).to_operator().to_dense()
    rng = np.random.default_rng(6)
    cfg = ResolventConfig(dt)
    for _ in range(5):
        psi = random_region_state(rand, [1, 2], rng)
        np.testing.assert_allclose(closed @ psi.to_dense(), apply_g(1, cfg, psi, rand).to_dense(), atol=1e-10)


@pytest.mark.parametrize("size", [1, 2, 3, 4])
@pytest.mark.parametrize("dt", [0.0, 2.0, 7.5])
def test_resolvent_equivalence_random(rand, size, dt):
    report = verify_resolvent_equivalence(list(range(size)), dt, rand, trials=20)
    assert report.passed(1e-10)


def test_resolvent_equivalence_trivial(trivial):
    report = verify_resolvent_equivalence([0, 1], 5.0, trivial, trials=20)
    assert report.max_residual < 1e-12


def test_resolvent_equivalence_ds(ds_torus):
    report = verify_resolvent_equivalence([0, 1], 5.9, ds_torus, trials=10)
    assert report.passed(1e-10)
