from __future__ import annotations

from itertools import combinations

import pytest

from pepsgadget.lattice import (
    DIRECTIONS,
    HoneycombSpec,
    PepsGraph,
    Region,
    _edges_connected,
    build_honeycomb,
    chain_graph,
    enumerate_connected_regions,
    graph_from_pairs,
    ring_graph,
)


@pytest.fixture
def triangle() -> PepsGraph:
    return graph_from_pairs([0, 1, 2], [(0, 1), (1, 2), (2, 0)])


@pytest.mark.parametrize(
    "rows, cols, boundary, vertices, honeycomb_edges, peps_edges, plaquettes, legs",
    [
        (1, 1, "torus", 2, 3, 6, 1, 0),
        (2, 2, "torus", 8, 12, 24, 4, 0),
        (1, 2, "torus", 4, 6, 12, 2, 0),
        (1, 1, "open-patch", 6, 6, 12, 1, 6),
    ],
)
def test_honeycomb_counts(rows, cols, boundary, vertices, honeycomb_edges, peps_edges, plaquettes, legs):
    hc = build_honeycomb(HoneycombSpec(rows, cols, boundary))
    assert hc.graph.num_sites == vertices
    assert len(hc.internal_edges) == honeycomb_edges
    assert hc.graph.num_edges == peps_edges
    assert len(hc.plaquettes) == plaquettes
    assert len(hc.leg_edges) == legs
    assert all(len(p.interior_peps_edges) == 6 for p in hc.plaquettes)
    assert all(e.direction in DIRECTIONS for e in hc.edges)


def test_minimal_torus_degrees_and_overlap():
    hc = build_honeycomb(HoneycombSpec(1, 1))
    assert all(hc.graph.degree(s) == 6 for s in hc.graph.sites)
    assert hc.graph.max_degree == 6
    (p,) = hc.plaquettes
    assert p.self_overlapping
    assert len(set(p.interior_peps_edges)) == 6
    assert not build_honeycomb(HoneycombSpec(2, 2)).plaquettes[0].self_overlapping


def test_edge_map_pairs_cover_every_peps_edge():
    hc = build_honeycomb(HoneycombSpec(2, 2))
    pairs = [e for pair in hc.edge_map.values() for e in pair]
    assert sorted(pairs) == list(range(hc.graph.num_edges))


def test_site_ordering_is_lexicographic():
    hc = build_honeycomb(HoneycombSpec(2, 2))
    assert list(hc.graph.sites) == sorted(hc.graph.sites)


@pytest.mark.parametrize("rows, cols", [(0, 1), (1, 0)])
def test_invalid_spec(rows, cols):
    with pytest.raises(ValueError):
        HoneycombSpec(rows, cols, "open-patch")


def test_invalid_boundary():
    with pytest.raises(ValueError):
        HoneycombSpec(1, 1, "cylinder")


@pytest.mark.parametrize("max_edges, expected", [(0, 0), (1, 3), (2, 6), (3, 7)])
def test_triangle_regions(triangle, max_edges, expected):
    regions = enumerate_connected_regions(triangle, max_edges)
    assert len(regions) == expected
    assert len({r.edges for r in regions}) == expected


def _brute_force(graph: PepsGraph, max_edges: int) -> set:
    out = set()
    for k in range(1, max_edges + 1):
        for combo in combinations(range(graph.num_edges), k):
            if _connected_reference(graph, combo):
                out.add(frozenset(combo))
    return out


def _connected_reference(graph, edges) -> bool:
    comp = [set(graph.edge_sites(e)) for e in edges]
    merged = True
    while merged and len(comp) > 1:
        merged = False
        for i, j in combinations(range(len(comp)), 2):
            if comp[i] & comp[j]:
                comp[i] |= comp.pop(j)
                merged = True
                break
    return len(comp) == 1


@pytest.mark.parametrize("graph", [chain_graph(5), ring_graph(5), build_honeycomb(HoneycombSpec(1, 1)).graph])
@pytest.mark.parametrize("max_edges", [1, 2, 3])
def test_regions_match_brute_force(graph, max_edges):
    regions = enumerate_connected_regions(graph, max_edges)
    assert {r.edges for r in regions} == _brute_force(graph, max_edges)
    assert all(r.connected for r in regions)
    keys = [(r.num_edges, r.sorted_edges()) for r in regions]
    assert keys == sorted(keys)
    assert regions == enumerate_connected_regions(graph, max_edges)


def test_region_consistency(triangle):
    r = Region.of_edges(triangle, [0, 1])
    assert r.size == 3 and r.num_edges == 2 and r.connected
    assert not _edges_connected(chain_graph(4), frozenset({0, 2}))
    assert Region.of_sites([1, 2]).kind == "sites"


def test_negative_max_edges(triangle):
    with pytest.raises(ValueError):
        enumerate_connected_regions(triangle, -1)


def test_graph_validation():
    with pytest.raises(ValueError):
        graph_from_pairs([0, 1], [(0, 2)])
    with pytest.raises(ValueError):
        graph_from_pairs([0, 1], [(0, 0)])


def test_graph_json_roundtrip():
    graph = build_honeycomb(HoneycombSpec(1, 1, "open-patch")).graph
    back = PepsGraph.from_json(graph.to_json())
    assert back.sites == graph.sites
    assert back.edges == graph.edges
    assert back.legs == graph.legs
    assert back.num_qudits == graph.num_qudits
