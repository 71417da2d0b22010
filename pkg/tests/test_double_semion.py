from __future__ import annotations

import itertools

import numpy as np
import pytest

from pepsgadget.double_semion import (
    CODE_INDEX,
    CODE_LABELS,
    DsTensor,
    build_corrupted_model,
    build_ds_model,
    build_toric_model,
    consistency_symmetry,
    ds_effective_orders,
    ds_fidelity_sweep,
    ds_standard_hamiltonian,
    order_zero_term,
    plaquette_flip_candidate,
    plaquette_operator,
    quasi_injectivity_report,
    symmetry_probe,
    vertex_map,
    vertex_operator,
    virtual_index,
)
from pepsgadget.lattice import HoneycombSpec
from pepsgadget.operators import spectral_norm
from pepsgadget.sw_global import self_energy_terms

TORUS = HoneycombSpec(1, 1)


@pytest.fixture(scope="module")
def torus():
    return build_ds_model(TORUS)


@pytest.mark.parametrize("triple", list(itertools.product((0, 1), repeat=3)))
def test_tensor_weight_rule(triple):
    expected = {0: 1, 1: 1j, 2: -1j, 3: 1}[sum(triple)]
    assert DsTensor.semion()[triple] == expected


def test_vertex_map_isometry_and_rows():
    m = vertex_map(DsTensor.semion())
    np.testing.assert_allclose(m @ m.conj().T, np.eye(4), atol=1e-12)
    assert all(np.count_nonzero(row) == 2 for row in m)


def _ket(bits: str) -> int:
    return int(bits.replace(";", ""), 2)


def test_code_state_000():
    row = vertex_map(DsTensor.semion())[CODE_INDEX[(0, 0, 0)]]
    ref = np.zeros(64, dtype=complex)
    ref[_ket("00;00;00")] = ref[_ket("11;11;11")] = 1 / np.sqrt(2)
    np.testing.assert_allclose(row, ref)


def test_code_state_110():
    row = vertex_map(DsTensor.semion())[CODE_INDEX[(1, 1, 0)]]
    ref = np.zeros(64, dtype=complex)
    ref[_ket("10;01;11")] = 1j / np.sqrt(2)
    ref[_ket("01;10;00")] = -1j / np.sqrt(2)
    # code states are rays: compare up to one global phase
    phase = np.vdot(ref, row)
    assert abs(phase) == pytest.approx(1.0)
    np.testing.assert_allclose(row, phase * ref, atol=1e-14)


def test_forbidden_label_not_in_image():
    m = vertex_map(DsTensor.semion())
    p = m.conj().T @ m
    for a, b, g in itertools.product((0, 1), repeat=3):
        assert ((a + b) % 2, (b + g) % 2, (g + a) % 2) in CODE_LABELS
    forbidden = np.zeros(64)
    forbidden[_ket("10;00;00")] = 1
    assert np.abs(p @ forbidden).max() < 1e-14
    assert (1, 0, 0) not in CODE_INDEX


def test_virtual_index_ordering():
    assert virtual_index(1, 0, 0) == _ket("10;00;01")


def test_site_maps_share_isometry(torus):
    for pm in torus.model.maps:
        np.testing.assert_allclose(pm.matrix @ pm.matrix.conj().T, np.eye(4), atol=1e-12)
    assert torus.model.d == 4 and torus.model.D == 2


def test_standard_hamiltonian_vertex_terms(torus):
    hc = torus.honeycomb
    for s in range(hc.graph.num_sites):
        v = vertex_operator(hc, s)
        assert v[0, 0] == 1.0
        assert v.shape == (8, 8)
    h = ds_standard_hamiltonian(TORUS).toarray()
    np.testing.assert_allclose(h, h.conj().T, atol=1e-12)


def test_standard_hamiltonian_ground_space():
    ev = np.linalg.eigvalsh(ds_standard_hamiltonian(TORUS).toarray())
    assert ev[0] == pytest.approx(-1.0)
    assert int(np.sum(ev - ev[0] < 1e-9)) == 4


def test_standard_hamiltonian_needs_torus():
    with pytest.raises(NotImplementedError):
        ds_standard_hamiltonian(HoneycombSpec(1, 1, "open-patch"))


def test_plaquette_operator_unitary(torus):
    b = plaquette_operator(torus.honeycomb).toarray()
    np.testing.assert_allclose(b @ b.conj().T, np.eye(8), atol=1e-12)


def test_order_zero_is_minus_p0(torus):
    t0 = order_zero_term(torus.model).toarray()
    np.testing.assert_allclose(t0, -np.eye(16), atol=1e-10)


def test_order_one_proportional_to_p0(torus):
    t1 = self_energy_terms(torus.history_table(1), 1)[1].toarray()
    np.testing.assert_allclose(t1, t1[0, 0] * np.eye(16), atol=1e-12)
    assert t1[0, 0].real < 0


def test_consistency_projectors(torus):
    for h, c in torus.consistency_projectors().items():
        d = c.to_dense()
        np.testing.assert_allclose(d @ d, d, atol=1e-14)
        assert np.trace(d).real == 8


def test_consistent_subspace_matches_vertex_rule(torus):
    edge_cfg, code_cfg = torus.consistent_configs()
    assert edge_cfg.size == 4
    assert all(torus.is_consistent(int(c)) for c in code_cfg)


def test_orders_report_names(torus):
    rep = ds_effective_orders(torus, n=6)
    names = [c.name for c in rep.checks]
    assert names[:3] == ["order0 equals -P0", "order1 proportional to P0", "order2 in span of P0 and C"]
    assert rep.check("order0 equals -P0").passed
    assert rep.check("order1 proportional to P0").passed


def test_quasi_injectivity_report(torus):
    assert quasi_injectivity_report(torus).passed
    assert not quasi_injectivity_report(build_corrupted_model(TORUS)).passed


def test_fidelity_sweep(torus):
    rep = ds_fidelity_sweep(torus, [0.04, 0.02, 0.01])
    assert rep.passed, rep.summary()
    fids = [r["fidelity"] for r in rep.data["sweep"]]
    assert fids == sorted(fids)


def test_site_projector_commutes_with_h0_not_v(torus):
    g = torus.gadget
    p = g.site_projectors[0].to_csr()
    h0 = g.H0.to_csr()
    v = g.V.to_csr()
    assert spectral_norm(p @ h0 - h0 @ p) < 1e-12
    assert spectral_norm(p @ v - v @ p) > 1e-3


def test_symmetry_probe_classification(torus):
    h = torus.honeycomb.internal_edges[0]
    exact = symmetry_probe(torus, consistency_symmetry(torus, h), 0.05)
    assert exact.data["classification"] == "exact"
    flip = symmetry_probe(torus, plaquette_flip_candidate(torus), 0.05)
    assert flip.data["classification"] == "approximate"
    assert flip.data["relative"] > 1e-6


def test_toric_tensor_and_qi():
    tm = build_toric_model(TORUS)
    assert tm.kind == "toric-code"
    assert all(v == 1 for v in DsTensor.toric().values.values())
    assert quasi_injectivity_report(tm).passed
