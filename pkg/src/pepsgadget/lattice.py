"""PEPS graphs, honeycomb lattices and connected edge regions."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

Site = Hashable

DIRECTIONS = ("northeast", "northwest", "vertical")
# honeycomb edge direction -> label index (i, j, k)
LABEL_OF_DIRECTION = {"northeast": 0, "northwest": 1, "vertical": 2}
# virtual slot -> corner letter index (alpha=0, beta=1, gamma=2)
SLOT_CORNER = (0, 1, 1, 2, 2, 0)


@dataclass(frozen=True)
class PepsGraph:
    """Sites, PEPS edges and the virtual-qudit slots they occupy.

    Each site owns ``degree + legs`` virtual qudits.  An edge occupies one
    slot at each endpoint; ``legs`` are dangling slots on open boundaries.
    """

    sites: tuple
    edges: tuple
    edge_slots: tuple = ()
    legs: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        index = {s: i for i, s in enumerate(self.sites)}
        if len(index) != len(self.sites):
            raise ValueError("duplicate site identifiers")
        for a, b in self.edges:
            if a not in index or b not in index:
                raise ValueError(f"edge ({a!r}, {b!r}) references a missing site")
            if a == b:
                raise ValueError(f"self-loop at site {a!r}")
        object.__setattr__(self, "_index", index)
        if not self.legs:
            object.__setattr__(self, "legs", tuple(() for _ in self.sites))
        if not self.edge_slots:
            counters = [0] * len(self.sites)
            slots = []
            for a, b in self.edges:
                ia, ib = index[a], index[b]
                slots.append((counters[ia], counters[ib]))
                counters[ia] += 1
                counters[ib] += 1
            object.__setattr__(self, "edge_slots", tuple(slots))
        if len(self.edge_slots) != len(self.edges):
            raise ValueError("edge_slots must match edges")
        if len(self.legs) != len(self.sites):
            raise ValueError("legs must list dangling slots for every site")
        used = [set() for _ in self.sites]
        for (a, b), (sa, sb) in zip(self.edges, self.edge_slots):
            for s, slot in ((a, sa), (b, sb)):
                if slot in used[index[s]]:
                    raise ValueError(f"slot {slot} of site {s!r} used twice")
                used[index[s]].add(slot)
        for i, legs in enumerate(self.legs):
            for slot in legs:
                if slot in used[i]:
                    raise ValueError(f"leg slot {slot} of site {self.sites[i]!r} also on an edge")
                used[i].add(slot)
        for i, u in enumerate(used):
            if u and u != set(range(len(u))):
                raise ValueError(f"slots of site {self.sites[i]!r} are not contiguous")
        offsets, total = [], 0
        for u in used:
            offsets.append(total)
            total += len(u)
        object.__setattr__(self, "_nslots", tuple(len(u) for u in used))
        object.__setattr__(self, "_offsets", tuple(offsets))
        object.__setattr__(self, "_total", total)

    # ------------------------------------------------------------------ queries
    @property
    def num_sites(self) -> int:
        return len(self.sites)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_qudits(self) -> int:
        return self._total

    def site_index(self, s: Site) -> int:
        return self._index[s]

    def degree(self, s: Site) -> int:
        return sum((a == s) + (b == s) for a, b in self.edges)

    @property
    def degrees(self) -> dict:
        return {s: self.degree(s) for s in self.sites}

    @property
    def max_degree(self) -> int:
        return max(self.degrees.values(), default=0)

    def num_slots(self, s: Site) -> int:
        return self._nslots[self._index[s]]

    def site_qudits(self, s: Site) -> tuple[int, ...]:
        i = self._index[s]
        return tuple(range(self._offsets[i], self._offsets[i] + self._nslots[i]))

    def edge_qudits(self, e: int) -> tuple[int, int]:
        (a, b), (sa, sb) = self.edges[e], self.edge_slots[e]
        return self._offsets[self._index[a]] + sa, self._offsets[self._index[b]] + sb

    def leg_qudits(self) -> tuple[int, ...]:
        out = []
        for i, legs in enumerate(self.legs):
            out.extend(self._offsets[i] + slot for slot in legs)
        return tuple(sorted(out))

    def site_of_qudit(self) -> tuple[int, ...]:
        return tuple(i for i, n in enumerate(self._nslots) for _ in range(n))

    def incident_edges(self, s: Site) -> list[int]:
        return [e for e, (a, b) in enumerate(self.edges) if s in (a, b)]

    def edge_sites(self, e: int) -> tuple[int, int]:
        a, b = self.edges[e]
        return self._index[a], self._index[b]

    def neighbors(self, s: Site) -> set:
        return {b if a == s else a for a, b in self.edges if s in (a, b)}

    # ------------------------------------------------------------------ I/O
    def to_json(self) -> str:
        doc = {
            "sites": [_jsonable(s) for s in self.sites],
            "edges": [[_jsonable(a), _jsonable(b)] for a, b in self.edges],
            "meta": {
                **self.meta,
                "edge_slots": [list(x) for x in self.edge_slots],
                "legs": [list(x) for x in self.legs],
            },
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PepsGraph":
        doc = json.loads(text)
        sites = tuple(_hashable(s) for s in doc["sites"])
        edges = tuple((_hashable(a), _hashable(b)) for a, b in doc["edges"])
        meta = dict(doc.get("meta", {}))
        slots = tuple(tuple(x) for x in meta.pop("edge_slots", ()))
        legs = tuple(tuple(x) for x in meta.pop("legs", ()))
        return cls(sites, edges, slots, legs, meta)


def _jsonable(s):
    return list(s) if isinstance(s, tuple) else s


def _hashable(s):
    return tuple(s) if isinstance(s, list) else s


@dataclass(frozen=True)
class Region:
    """A set of sites and/or edges; ``kind`` is ``"sites"`` or ``"edges"``."""

    sites: frozenset
    edges: frozenset = frozenset()
    kind: str = "edges"
    connected: bool = False

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @classmethod
    def of_sites(cls, sites: Iterable[int]) -> "Region":
        return cls(frozenset(sites), frozenset(), "sites")

    @classmethod
    def of_edges(cls, graph: PepsGraph, edges: Iterable[int]) -> "Region":
        edges = frozenset(edges)
        sites = frozenset(i for e in edges for i in graph.edge_sites(e))
        return cls(sites, edges, "edges", _edges_connected(graph, edges))

    def sorted_edges(self) -> tuple[int, ...]:
        return tuple(sorted(self.edges))


def _edges_connected(graph: PepsGraph, edges: frozenset) -> bool:
    if not edges:
        return False
    edges = list(edges)
    seen = {edges[0]}
    queue = deque([edges[0]])
    while queue:
        e = queue.popleft()
        se = set(graph.edge_sites(e))
        for f in edges:
            if f not in seen and se & set(graph.edge_sites(f)):
                seen.add(f)
                queue.append(f)
    return len(seen) == len(edges)


def enumerate_connected_regions(graph: PepsGraph, max_edges: int) -> list[Region]:
    """All connected edge regions with at most ``max_edges`` edges.

    Regions are grown edge by edge from every seed and deduplicated on their
    edge sets; output is sorted by (size, edge tuple).
    """
    if max_edges < 0:
        raise ValueError("max_edges must be non-negative")
    if max_edges == 0 or graph.num_edges == 0:
        return []
    incident = [set() for _ in graph.sites]
    for e in range(graph.num_edges):
        for i in graph.edge_sites(e):
            incident[i].add(e)
    found: set[frozenset] = set()
    frontier = {frozenset([e]) for e in range(graph.num_edges)}
    found |= frontier
    for _ in range(max_edges - 1):
        nxt = set()
        for reg in frontier:
            sites = {i for e in reg for i in graph.edge_sites(e)}
            for i in sites:
                for f in incident[i]:
                    if f not in reg:
                        new = reg | {f}
                        if new not in found:
                            nxt.add(new)
        found |= nxt
        frontier = nxt
    regions = [Region.of_edges(graph, r) for r in found]
    regions.sort(key=lambda r: (r.num_edges, r.sorted_edges()))
    return regions


# ---------------------------------------------------------------- honeycomb
@dataclass(frozen=True)
class HoneycombSpec:
    """Brick-wall honeycomb: cell (r, c) holds an up vertex A and a down vertex B."""

    rows: int
    cols: int
    boundary: str = "torus"

    def __post_init__(self):
        if self.boundary not in ("torus", "open-patch"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")

    @staticmethod
    def orientation(sublattice: str) -> str:
        return "up" if sublattice == "A" else "down"


@dataclass(frozen=True)
class HoneycombEdge:
    """One honeycomb edge; ``sites`` has one entry for a dangling leg."""

    key: tuple  # (row, col, label) owned by the A vertex
    direction: str
    sites: tuple
    peps_edges: tuple

    @property
    def label(self) -> int:
        return LABEL_OF_DIRECTION[self.direction]


@dataclass(frozen=True)
class Plaquette:
    cell: tuple
    vertices: tuple  # site indices in cyclic order
    boundary: tuple  # honeycomb edge indices (may repeat on tiny tori)
    legs: tuple  # honeycomb edge indices incident to the plaquette but not bounding it
    interior_peps_edges: tuple

    @property
    def self_overlapping(self) -> bool:
        return len(set(self.vertices)) < 6 or len(set(self.boundary)) < 6


@dataclass(frozen=True)
class Honeycomb:
    spec: HoneycombSpec
    graph: PepsGraph
    edges: tuple  # HoneycombEdge, internal edges first then legs
    plaquettes: tuple

    @property
    def edge_map(self) -> dict:
        """Honeycomb edge index -> pair of PEPS edge indices (internal edges only)."""
        return {h: e.peps_edges for h, e in enumerate(self.edges) if len(e.sites) == 2}

    @property
    def internal_edges(self) -> list[int]:
        return [h for h, e in enumerate(self.edges) if len(e.sites) == 2]

    @property
    def leg_edges(self) -> list[int]:
        return [h for h, e in enumerate(self.edges) if len(e.sites) == 1]

    def site_label_edges(self, site: int) -> tuple:
        """Honeycomb edge carrying labels (i, j, k) of ``site``."""
        out = [None, None, None]
        for h, e in enumerate(self.edges):
            if site in e.sites:
                out[e.label] = h
        return tuple(out)

    def __iter__(self):
        return iter((self.graph, self.edge_map, self.plaquettes))


def _vertex_edges(r: int, c: int, sub: str) -> dict:
    """Honeycomb edge keys incident to a vertex, keyed by label (i, j, k)."""
    if sub == "A":
        return {0: (r, c, 0), 1: (r, c, 1), 2: (r, c, 2)}
    return {0: (r + 1, c, 0), 1: (r + 1, c - 1, 1), 2: (r, c, 2)}


def _edge_endpoints(key: tuple) -> tuple:
    r, c, t = key
    a = (r, c, "A")
    b = {0: (r - 1, c, "B"), 1: (r - 1, c + 1, "B"), 2: (r, c, "B")}[t]
    return a, b


def _corner_plaquettes(r: int, c: int, sub: str) -> tuple:
    """Plaquette cells at corners (alpha, beta, gamma) of a vertex."""
    if sub == "A":
        return (r, c - 1), (r - 1, c), (r, c)
    return (r, c), (r + 1, c - 1), (r, c - 1)


def _plaquette_vertices(r: int, c: int) -> tuple:
    return (
        (r, c, "A"),
        (r, c, "B"),
        (r + 1, c, "A"),
        (r, c + 1, "B"),
        (r, c + 1, "A"),
        (r - 1, c + 1, "B"),
    )


def _plaquette_boundary(r: int, c: int) -> tuple:
    return ((r, c, 2), (r + 1, c, 0), (r + 1, c, 1), (r, c + 1, 2), (r, c + 1, 0), (r, c, 1))


def build_honeycomb(spec: HoneycombSpec) -> Honeycomb:
    """Doubled PEPS graph of a honeycomb torus or open patch.

    Every honeycomb edge of label t carries two PEPS edges pairing slot 2t of
    the A end with slot 2t+1 of the B end and vice versa, so that both virtual
    qubits of a PEPS edge sit at corners of the same plaquette.
    """
    R, C = spec.rows, spec.cols
    torus = spec.boundary == "torus"

    def wrap(v):
        r, c, s = v
        return (r % R, c % C, s) if torus else v

    def wrap_key(k):
        r, c, t = k
        return (r % R, c % C, t) if torus else k

    def wrap_cell(p):
        return (p[0] % R, p[1] % C) if torus else p

    if torus:
        verts = {(r, c, s) for r in range(R) for c in range(C) for s in "AB"}
        cells = [(r, c) for r in range(R) for c in range(C)]
    else:
        cells = [(r, c) for r in range(R) for c in range(C)]
        verts = {v for (r, c) in cells for v in _plaquette_vertices(r, c)}
    sites = tuple(sorted(verts))
    sindex = {s: i for i, s in enumerate(sites)}

    # honeycomb edges
    keys: dict = {}
    for v in sites:
        for t, key in _vertex_edges(*v).items():
            key = wrap_key(key)
            a, b = (wrap(x) for x in _edge_endpoints(key))
            present = tuple(x for x in (a, b) if x in verts)
            keys.setdefault(key, present)
    internal = sorted(k for k, p in keys.items() if len(p) == 2)
    dangling = sorted(k for k, p in keys.items() if len(p) == 1)

    edges, slots, hedges = [], [], []
    for key in internal:
        a, b = (wrap(x) for x in _edge_endpoints(key))
        t = key[2]
        pe = []
        for sa, sb in ((2 * t, 2 * t + 1), (2 * t + 1, 2 * t)):
            pe.append(len(edges))
            edges.append((a, b))
            slots.append((sa, sb))
        hedges.append(HoneycombEdge(key, DIRECTIONS[t], (sindex[a], sindex[b]), tuple(pe)))
    legs = [[] for _ in sites]
    for key in dangling:
        t = key[2]
        (v,) = keys[key]
        legs[sindex[v]].extend([2 * t, 2 * t + 1])
        hedges.append(HoneycombEdge(key, DIRECTIONS[t], (sindex[v],), ()))
    graph = PepsGraph(
        sites,
        tuple(edges),
        tuple(slots),
        tuple(tuple(sorted(x)) for x in legs),
        {"lattice": "honeycomb", "rows": R, "cols": C, "boundary": spec.boundary},
    )
    hindex = {e.key: h for h, e in enumerate(hedges)}

    # interior PEPS edges: both slots at corners of the same plaquette
    corner_of = {}
    for e, ((a, b), (sa, sb)) in enumerate(zip(edges, slots)):
        pa = wrap_cell(_corner_plaquettes(*a)[SLOT_CORNER[sa]])
        pb = wrap_cell(_corner_plaquettes(*b)[SLOT_CORNER[sb]])
        if pa != pb:
            raise AssertionError("slot pairing is not corner consistent")
        corner_of[e] = pa
    plaquettes = []
    for cell in cells:
        verts_p = tuple(sindex[wrap(v)] for v in _plaquette_vertices(*cell))
        bnd = tuple(hindex[wrap_key(k)] for k in _plaquette_boundary(*cell))
        bset = set(bnd)
        legs_p = []
        for v in _plaquette_vertices(*cell):
            for key in _vertex_edges(*v).values():
                h = hindex.get(wrap_key(key))
                if h is not None and h not in bset and h not in legs_p:
                    legs_p.append(h)
        interior = tuple(e for e in range(len(edges)) if corner_of[e] == cell)
        plaquettes.append(Plaquette(cell, verts_p, bnd, tuple(legs_p), interior))
    return Honeycomb(spec, graph, tuple(hedges), tuple(plaquettes))


def ring_graph(n: int) -> PepsGraph:
    """Closed chain of ``n >= 3`` sites, two virtual qudits per site."""
    if n < 3:
        raise ValueError("a ring needs at least 3 sites")
    sites = tuple(range(n))
    edges = tuple((i, (i + 1) % n) for i in range(n))
    slots = tuple((1, 0) for _ in range(n))
    return PepsGraph(sites, edges, slots, meta={"lattice": "ring", "n": n})


def chain_graph(n: int) -> PepsGraph:
    """Open chain; end sites carry one virtual qudit, bulk sites two."""
    if n < 2:
        raise ValueError("a chain needs at least 2 sites")
    sites = tuple(range(n))
    edges = tuple((i, i + 1) for i in range(n - 1))
    slots = tuple((0 if i == 0 else 1, 0) for i in range(n - 1))
    return PepsGraph(sites, edges, slots, meta={"lattice": "chain", "n": n})


def graph_from_pairs(sites: Sequence, pairs: Sequence) -> PepsGraph:
    return PepsGraph(tuple(sites), tuple(tuple(p) for p in pairs))
