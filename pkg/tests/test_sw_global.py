from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp

from pepsgadget.gadget import build_gadget, ground_projector
from pepsgadget.lattice import chain_graph, ring_graph
from pepsgadget.peps import ResourceError, random_model
from pepsgadget.report import loglog_slope
from pepsgadget.sw_global import (
    CoefficientTable,
    WordSeries,
    all_ones_coefficient,
    bernoulli,
    compute_generators,
    effective_hamiltonian_global,
    effective_terms_from_histories,
    gamma_decomposition,
    gamma_terms_from_histories,
    generator_residuals,
    history_series,
    low_spectrum,
    offdiagonal_norm_global,
    restricted_effective,
    restricted_terms,
    self_energy_expansion,
    self_energy_terms,
    superop_L,
    verify_delta_tilde_independence,
    verify_linked_cluster,
)

EPSILONS = (0.04, 0.02, 0.01)


@pytest.fixture(scope="module")
def gadget():
    return build_gadget(random_model(ring_graph(4), d=2, D=2, seed=3))


@pytest.fixture(scope="module")
def dense_series(gadget):
    return compute_generators(gadget, 3)


@pytest.fixture(scope="module")
def table(gadget):
    return history_series(gadget, 4)


@pytest.mark.parametrize("n, value", [(0, Fraction(1)), (1, Fraction(-1, 2)), (2, Fraction(1, 6)), (3, Fraction(0)), (4, Fraction(-1, 30))])
def test_bernoulli(n, value):
    assert bernoulli(n) == value


def test_superop_l_of_p0_vanishes(gadget):
    out = superop_L(ground_projector(gadget), gadget)
    assert np.abs(out.to_dense()).max() < 1e-12


def test_superop_l_of_hermitian_is_anti_hermitian(gadget):
    out = superop_L(gadget.V, gadget).to_dense()
    assert np.abs(out + out.conj().T).max() < 1e-12
    assert np.linalg.norm(out, 2) <= np.linalg.norm(gadget.V.to_dense(), 2) + 1e-12


def test_first_generator_is_l_of_v(gadget, dense_series):
    fr = dense_series.frame
    ref = superop_L(gadget.V, gadget).to_dense()
    np.testing.assert_allclose(fr.to_computational(dense_series.generators[0]), ref, atol=1e-12)


def test_generators_anti_hermitian_and_off_diagonal(dense_series):
    res = generator_residuals(dense_series)
    assert res["anti_hermitian"] < 1e-12
    assert res["block_diagonal"] < 1e-12


def test_terms_hermitian(dense_series):
    for t in dense_series.terms.values():
        d = t.toarray()
        assert np.abs(d - d.conj().T).max() < 1e-12


def test_order_one_is_projected_perturbation(gadget, dense_series):
    fr = dense_series.frame
    ref = fr.code_block(fr.V)
    np.testing.assert_allclose(effective_hamiltonian_global(dense_series, 0.1, upto=1).toarray(), 0.1 * ref, atol=1e-14)
    assert effective_hamiltonian_global(dense_series, 0.1, upto=0).nnz == 0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_offdiagonal_slope(gadget, n):
    series = compute_generators(gadget, n)
    vals = [offdiagonal_norm_global(series, e) for e in EPSILONS]
    slope, _ = loglog_slope(EPSILONS, vals)
    assert slope >= n + 0.8


def test_history_terms_match_dense_recursion(dense_series, table):
    hist = effective_terms_from_histories(table, 3)
    for j in range(1, 4):
        np.testing.assert_allclose(hist[j].toarray(), dense_series.terms[j].toarray(), atol=1e-12)


def test_word_algebra_matches_dense_fourth_order(gadget, table):
    dense = compute_generators(gadget, 4)
    hist = effective_terms_from_histories(table, 4)
    np.testing.assert_allclose(hist[4].toarray(), dense.terms[4].toarray(), atol=1e-12)


def test_effective_spectrum_tracks_exact_low_spectrum(gadget, dense_series):
    code_dim = dense_series.code_dim
    devs = []
    for eps in EPSILONS:
        exact = np.linalg.eigvalsh(gadget.full_hamiltonian(eps).to_dense())[:code_dim]
        approx = np.linalg.eigvalsh(effective_hamiltonian_global(dense_series, eps).toarray())
        devs.append(np.abs(exact - approx).max())
    slope, _ = loglog_slope(EPSILONS, devs)
    assert slope >= 3.8


@pytest.mark.parametrize("j", [1, 2, 3])
def test_gamma_reconstruction(table, j):
    ref = effective_terms_from_histories(table, j)[j].toarray()
    for dt in (2.0, 5.0):
        np.testing.assert_allclose(gamma_terms_from_histories(table, j, dt).toarray(), ref, atol=1e-10)


def test_gamma_orders_sum_to_j():
    for j in range(2, 6):
        assert all(sum(abs(x) for x in q) == j - 1 for q in gamma_decomposition(j))


def test_all_ones_coefficients_sign():
    assert all_ones_coefficient(1) == 1
    assert all_ones_coefficient(2) == -1


def test_delta_tilde_independence(gadget, table):
    rep = verify_delta_tilde_independence(gadget, 3, [2.0, 5.0, 10.0], 0.1, table)
    assert rep.full_max_diff < 1e-9
    assert rep.restricted_max_diff > 1e-6
    assert rep.passed()


def test_delta_tilde_independence_order_one(gadget, table):
    rep = verify_delta_tilde_independence(gadget, 1, [2.0, 5.0], 0.1, table)
    assert rep.full_max_diff < 1e-12
    assert rep.restricted_max_diff < 1e-12


def test_delta_tilde_needs_two_values(gadget, table):
    with pytest.raises(ValueError):
        verify_delta_tilde_independence(gadget, 2, [2.0, 2.0], 0.1, table)


def test_restricted_order_one_negative_semidefinite(gadget, table):
    t = restricted_terms(table, 1, 5.0)[1].toarray()
    assert np.linalg.eigvalsh(t).max() < 1e-12


def test_restricted_ground_energy_monotone(gadget, table):
    energies = [0.0]
    for n in (1, 2, 3, 4):
        h = restricted_effective(gadget, n, 5.9, 0.1, table).toarray()
        energies.append(np.linalg.eigvalsh(h)[0])
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_self_energy_order_one(table, dense_series):
    h = self_energy_expansion(None, 1, 0.2, table).toarray()
    np.testing.assert_allclose(h, 0.2 * dense_series.terms[1].toarray(), atol=1e-14)
    assert set(self_energy_terms(table, 3)) == {1, 2, 3}


def test_linked_cluster(gadget):
    series = compute_generators(build_gadget(random_model(chain_graph(4), d=2, D=2, seed=2)), 3)
    rep = verify_linked_cluster(series, build_gadget(random_model(chain_graph(4), d=2, D=2, seed=2)))
    assert rep.passed()
    assert rep.largest_support[1] <= 2


def test_order_limit(gadget):
    with pytest.raises(ResourceError):
        compute_generators(gadget, 9)


def test_manifest_lists_orders(dense_series):
    import json

    doc = json.loads(dense_series.manifest())
    assert [r["order"] for r in doc["terms"]] == [1, 2, 3]


def test_coefficient_table():
    c = CoefficientTable()
    assert float(c.b(1)) == pytest.approx(0.5)
    assert WordSeries(c).S(1)


def test_low_spectrum_gap():
    h = sp.csr_array(np.diag([0.0, 0.0, 1.0, 3.0]))
    s = low_spectrum(h, 1e-9)
    assert s.ground_basis.shape[1] == 2
    assert s.gap == pytest.approx(1.0)
