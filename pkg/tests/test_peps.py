from __future__ import annotations

import numpy as np
import pytest

from pepsgadget.double_semion import build_corrupted_model, build_ds_model
from pepsgadget.lattice import HoneycombSpec, Region, enumerate_connected_regions, ring_graph
from pepsgadget.operators import QuditRegister, SparseState, apply_sparse, subspace_distance
from pepsgadget.peps import (
    NullStateError,
    PepsModel,
    ProjectionMap,
    UpsilonSpec,
    assemble_peps_state,
    build_upsilon,
    canonical_parent_hamiltonian,
    default_upsilon_specs,
    dump_maps_json,
    entangled_edge_projector,
    identity_model,
    load_maps_json,
    parent_from_upsilons,
    peps_code_vector,
    random_model,
    upsilon_code_matrix,
    verify_quasi_injectivity,
)


@pytest.fixture(scope="module")
def ring() -> PepsModel:
    return identity_model(ring_graph(4))


@pytest.fixture(scope="module")
def ds_torus():
    return build_ds_model(HoneycombSpec(1, 1))


def test_edge_projector_is_normalized_rank_one():
    m = entangled_edge_projector(QuditRegister.qubits(2), (0, 1), 2).to_dense()
    np.testing.assert_allclose(np.linalg.eigvalsh(m), [0, 0, 0, 1], atol=1e-12)
    assert np.trace(m).real == pytest.approx(1.0)
    np.testing.assert_allclose(m @ m, m, atol=1e-12)
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert phi @ m @ phi == pytest.approx(1.0)


@pytest.mark.parametrize("D", [2, 3])
def test_edge_projector_idempotent(D):
    m = entangled_edge_projector(QuditRegister((D, D, 2)), (0, 1), D).to_dense()
    np.testing.assert_allclose(m @ m, m, atol=1e-12)


def test_projection_map_rejects_non_isometry():
    with pytest.raises(ValueError):
        ProjectionMap(0, np.array([[1.0, 1.0]]))


def test_projection_map_projector(ds_torus):
    for pm in ds_torus.model.maps:
        np.testing.assert_allclose(pm.matrix @ pm.matrix.conj().T, np.eye(pm.d), atol=1e-10)
        p = pm.projector
        np.testing.assert_allclose(p @ p, p, atol=1e-10)
        np.testing.assert_allclose(p, p.conj().T, atol=1e-10)


def test_model_validation():
    graph = ring_graph(3)
    with pytest.raises(ValueError):
        PepsModel(graph, {s: np.eye(4) for s in graph.sites}, D=1)
    with pytest.raises(ValueError):
        PepsModel(graph, {s: np.eye(8) for s in graph.sites}, D=2)
    with pytest.raises(ValueError):
        PepsModel(graph, {0: np.eye(4)}, D=2)


def test_identity_model_gives_bell_product(ring):
    psi = assemble_peps_state(ring)
    reg = ring.register
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert psi.norm() == pytest.approx(1.0)
    for e in range(ring.graph.num_edges):
        m = ring.edge_projector(e)
        assert apply_sparse(m, psi).vdot(psi).real == pytest.approx(1.0)
    assert len(psi) == 2**4
    assert reg.num_qudits == 8
    assert phi @ phi == pytest.approx(1.0)


def test_ds_state_absorbs_site_projectors(ds_torus):
    model = ds_torus.model
    psi = assemble_peps_state(model)
    for i in range(model.num_sites):
        out = apply_sparse(model.site_projector(i), psi)
        assert (out - psi).norm() < 1e-10


def test_ds_edge_expectations_positive(ds_torus):
    model = ds_torus.model
    psi = assemble_peps_state(model)
    dense = psi.to_dense()
    for e in range(model.graph.num_edges):
        m = model.edge_projector(e).to_csr()
        assert np.vdot(dense, m @ dense).real > 0


def test_corrupted_model_can_null_the_state():
    bad = build_corrupted_model(HoneycombSpec(1, 1))
    with pytest.raises(NullStateError):
        peps_code_vector(bad.model)


def test_canonical_parent_frustration_free(ring):
    regions = enumerate_connected_regions(ring.graph, 1)
    h = canonical_parent_hamiltonian(ring, regions)
    psi = assemble_peps_state(ring)
    out = apply_sparse(h, psi)
    assert (out + len(regions) * psi).norm() < 1e-10
    assert h.is_hermitian()
    assert np.linalg.eigvalsh(h.to_dense()).max() < 1e-10


def test_canonical_parent_single_region_spectrum(ring):
    h = canonical_parent_hamiltonian(ring, [Region.of_edges(ring.graph, [0, 1])])
    vals = np.linalg.eigvalsh(h.to_dense())
    assert np.all(np.isclose(vals, 0, atol=1e-10) | np.isclose(vals, -1, atol=1e-10))


def test_canonical_parent_rejects_large_region(ds_torus):
    from pepsgadget.peps import ResourceError

    graph = ds_torus.model.graph
    ring6 = identity_model(ring_graph(8))
    with pytest.raises(ResourceError):
        canonical_parent_hamiltonian(ring6, [Region.of_sites(range(8))])
    assert graph.num_edges == 6


def test_upsilon_single_edge_trivial_maps(ring):
    spec = UpsilonSpec((frozenset(),), (frozenset({0}),))
    ups = build_upsilon(ring, spec)
    np.testing.assert_allclose(ups.to_dense(), ring.edge_projector(0).to_dense(), atol=1e-12)
    assert np.linalg.eigvalsh(ups.to_dense()).max() == pytest.approx(1.0)


def test_upsilon_pure_site_product_is_projector(ds_torus):
    spec = UpsilonSpec((frozenset({0, 1}),), (frozenset(),))
    mat, _ = upsilon_code_matrix(ds_torus.model, spec)
    vals = np.linalg.eigvalsh(mat)
    assert np.all(np.isclose(vals, 0, atol=1e-12) | np.isclose(vals, 1, atol=1e-12))


def _image(mat: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    return vecs[:, np.abs(vals) > tol * max(1.0, np.abs(vals).max())]


def _pulled_back_support(model: PepsModel, region: Region) -> np.ndarray:
    (h_can,) = [canonical_parent_hamiltonian(model, [region])]
    iso = np.ones((1, 1), dtype=complex)
    for pm in model.maps:
        iso = np.kron(iso, pm.matrix)
    return iso @ (-h_can.to_dense()) @ iso.conj().T


def test_upsilon_image_matches_support_projector_trivial(ring):
    region = Region.of_edges(ring.graph, [1])
    spec = UpsilonSpec((frozenset(),), (region.edges,))
    ups = build_upsilon(ring, spec).to_dense()
    pulled = _pulled_back_support(ring, Region.of_sites(region.sites))
    assert subspace_distance(_image(ups), _image(pulled)) < 1e-9


def test_upsilon_image_matches_support_projector_ds(ds_torus):
    model = ds_torus.model
    edges = frozenset(range(model.graph.num_edges))
    ups, sites = upsilon_code_matrix(model, UpsilonSpec((frozenset(),), (edges,)))
    assert sites == (0, 1)
    psi = peps_code_vector(model).to_dense()
    support = psi[:, None] / np.linalg.norm(psi)
    assert subspace_distance(_image(ups), support) < 1e-9


def test_upsilon_hermitian(ds_torus):
    for spec in default_upsilon_specs(ds_torus.model, max_edges=2)[:12]:
        mat, _ = upsilon_code_matrix(ds_torus.model, spec)
        np.testing.assert_allclose(mat, mat.conj().T, atol=1e-12)


def test_upsilon_spec_validation():
    with pytest.raises(ValueError):
        UpsilonSpec((frozenset(),), ())
    spec = UpsilonSpec((frozenset({0}), frozenset()), (frozenset({1}), frozenset({2})))
    assert spec.edges == frozenset({1, 2})


def test_quasi_injectivity_trivial(ring):
    report = verify_quasi_injectivity(ring, default_upsilon_specs(ring, max_edges=2))
    assert report.passed
    assert report.max_residual < 1e-12


def test_quasi_injectivity_ds_two_edges(ds_torus):
    report = verify_quasi_injectivity(ds_torus.model, default_upsilon_specs(ds_torus.model, max_edges=2))
    assert report.passed
    assert report.max_residual < 1e-9


def test_quasi_injectivity_corrupted_fails():
    bad = build_corrupted_model(HoneycombSpec(1, 1))
    report = verify_quasi_injectivity(bad.model, default_upsilon_specs(bad.model, max_edges=2))
    assert not report.passed
    assert report.failures()


def test_quasi_injectivity_basis_independent(ds_torus):
    model = ds_torus.model
    rng = np.random.default_rng(3)
    dim = model.code_register.total_dim
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    u, _ = np.linalg.qr(z)
    psi = peps_code_vector(model).to_dense()
    for spec in default_upsilon_specs(model, max_edges=2)[:8]:
        mat, sites = upsilon_code_matrix(model, spec)
        assert sites == (0, 1)
        rot = u @ mat @ u.conj().T
        vals, vecs = np.linalg.eigh(rot)
        phi = u @ psi
        assert np.linalg.norm(rot @ phi - vals[-1] * phi) < 1e-9


def test_parent_from_upsilons_ground_energy(ring):
    spec = UpsilonSpec((frozenset(),), (frozenset({0}),))
    h = parent_from_upsilons(ring, [spec], [1.0])
    assert np.linalg.eigvalsh(h.to_dense())[0] == pytest.approx(-1.0)


def test_parent_from_upsilons_scaling_invariance(ring):
    specs = default_upsilon_specs(ring, max_edges=1)
    a = np.linalg.eigh(parent_from_upsilons(ring, specs, [1.0] * len(specs)).to_dense())
    b = np.linalg.eigh(parent_from_upsilons(ring, specs, [10.0] * len(specs)).to_dense())
    ga = a[1][:, np.isclose(a[0], a[0][0], atol=1e-9)]
    gb = b[1][:, np.isclose(b[0], b[0][0], atol=1e-9)]
    assert subspace_distance(ga, gb) < 1e-9
    psi = assemble_peps_state(ring).to_dense()
    assert np.linalg.norm(ga @ (ga.conj().T @ psi) - psi) < 1e-9


def test_parent_from_upsilons_rejects_nonpositive(ring):
    spec = UpsilonSpec((frozenset(),), (frozenset({0}),))
    with pytest.raises(ValueError):
        parent_from_upsilons(ring, [spec], [0.0])


def test_parent_ds_gapped_above_encoded_space(ds_torus):
    from pepsgadget.peps import parent_code_matrix

    model = ds_torus.model
    specs = default_upsilon_specs(model, max_edges=2)
    h = parent_code_matrix(model, specs, [1.0] * len(specs)).to_dense()
    vals, vecs = np.linalg.eigh(h)
    ground = vecs[:, np.isclose(vals, vals[0], atol=1e-9)]
    psi = peps_code_vector(model).to_dense()
    assert np.linalg.norm(ground @ (ground.conj().T @ psi) - psi) < 1e-9
    assert vals[ground.shape[1]] - vals[0] > 1e-3


def test_maps_json_roundtrip():
    model = random_model(ring_graph(3), seed=4)
    maps = {s: pm.matrix for s, pm in zip(model.graph.sites, model.maps)}
    back = load_maps_json(dump_maps_json(maps))
    for s in model.graph.sites:
        np.testing.assert_allclose(back[s], maps[s])


def test_state_on_ring_is_code_product(ring):
    psi = assemble_peps_state(ring)
    assert isinstance(psi, SparseState)
    assert ring.is_identity_model()
