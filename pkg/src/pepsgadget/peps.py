"""PEPS projection maps, encoded states, parent Hamiltonians and Upsilon operators."""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .lattice import PepsGraph, Region, enumerate_connected_regions
from .operators import (
    QuditRegister,
    SparseOperator,
    SparseState,
    block_eigh,
    coalesce,
    kron_embed,
)


class NullStateError(ValueError):
    """The projection maps annihilate the entangled-pair product."""


class ResourceError(RuntimeError):
    """A requested computation exceeds the configured size budget."""


# ----------------------------------------------------------------- maps
@dataclass(frozen=True, eq=False)
class ProjectionMap:
    """Isometry from a site's virtual space (columns) to its code space (rows)."""

    site: object
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] > m.shape[1]:
            raise ValueError("projection map must be a d x D^deg matrix with d <= D^deg")
        gram = m @ m.conj().T
        err = np.abs(gram - np.eye(m.shape[0])).max()
        if err > 1e-10:
            raise ValueError(f"projection map at site {self.site!r} is not an isometry (error {err:.2e})")
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @property
    def virtual_dim(self) -> int:
        return self.matrix.shape[1]

    @cached_property
    def projector(self) -> np.ndarray:
        """P_s = map^dagger map."""
        return self.matrix.conj().T @ self.matrix

    @cached_property
    def frame(self) -> np.ndarray:
        """Unitary whose first d rows are the map; the rest span its complement.

        The complement is built inside the support of the map columns plus
        computational basis vectors outside it, which keeps the frame sparse.
        """
        m = self.matrix
        dim = m.shape[1]
        support = np.flatnonzero(np.abs(m).max(axis=0) > 1e-14)
        sub = m[:, support]
        _, s, vh = np.linalg.svd(sub)
        null = vh[self.d :]
        rows = [m]
        if null.size:
            block = np.zeros((null.shape[0], dim), dtype=complex)
            block[:, support] = null
            rows.append(block)
        outside = np.setdiff1d(np.arange(dim), support)
        if outside.size:
            block = np.zeros((outside.size, dim), dtype=complex)
            block[np.arange(outside.size), outside] = 1.0
            rows.append(block)
        u = np.vstack(rows)
        u[np.abs(u) < 1e-15] = 0.0
        err = np.abs(u @ u.conj().T - np.eye(dim)).max()
        if err > 1e-10:
            raise RuntimeError("frame construction failed to produce a unitary")
        return u


def load_maps_json(text: str) -> dict:
    """Parse ``{site: [[[re, im], ...], ...]}`` (row-major complex matrices)."""
    data = json.loads(text)
    out = {}
    for key, rows in data.items():
        arr = np.asarray(rows, dtype=float)
        site = int(key) if isinstance(key, str) and key.lstrip("-").isdigit() else key
        out[site] = arr[..., 0] + 1j * arr[..., 1]
    return out


def dump_maps_json(maps: Mapping) -> str:
    payload = {}
    for site, m in maps.items():
        mat = m.matrix if isinstance(m, ProjectionMap) else np.asarray(m)
        payload[str(site)] = [[[float(z.real), float(z.imag)] for z in row] for row in mat]
    return json.dumps(payload, sort_keys=True)


# ----------------------------------------------------------------- model
class PepsModel:
    """A PEPS on ``graph``: per-site isometries, bond dimension D, code dimension d."""

    def __init__(self, graph: PepsGraph, maps: Mapping, D: int, r_star: int = 6, name: str = "custom"):
        if D < 2:
            raise ValueError("bond dimension D must be >= 2")
        self.graph = graph
        self.D = int(D)
        self.r_star = int(r_star)
        self.name = name
        self.maps = []
        for s in graph.sites:
            if s not in maps:
                raise ValueError(f"no projection map for site {s!r}")
            m = maps[s]
            pm = m if isinstance(m, ProjectionMap) else ProjectionMap(s, m)
            expected = self.D ** graph.num_slots(s)
            if pm.virtual_dim != expected:
                raise ValueError(
                    f"map at site {s!r} has virtual dimension {pm.virtual_dim}, expected {expected}"
                )
            self.maps.append(pm)
        dims = {pm.d for pm in self.maps}
        if len(dims) != 1:
            raise ValueError("all sites must share one code dimension")
        self.d = dims.pop()
        if self.d < 2:
            raise ValueError("code dimension d must be >= 2")

    # -- registers
    @cached_property
    def register(self) -> QuditRegister:
        """Virtual qudits, site-major."""
        return QuditRegister((self.D,) * self.graph.num_qudits)

    @cached_property
    def site_register(self) -> QuditRegister:
        """One qudit of dimension D^slots per site; indices coincide with ``register``."""
        return QuditRegister(tuple(pm.virtual_dim for pm in self.maps))

    @cached_property
    def code_register(self) -> QuditRegister:
        return QuditRegister((self.d,) * self.graph.num_sites)

    @property
    def num_sites(self) -> int:
        return self.graph.num_sites

    def site_qudits(self, i: int) -> tuple:
        return self.graph.site_qudits(self.graph.sites[i])

    # -- local operators
    def site_projector(self, i: int) -> SparseOperator:
        return kron_embed(self.maps[i].projector, self.site_qudits(i), self.register)

    def edge_projector(self, e: int) -> SparseOperator:
        return entangled_edge_projector(self.register, self.graph.edge_qudits(e), self.D)

    def with_maps(self, maps: Mapping, name: str | None = None) -> "PepsModel":
        return PepsModel(self.graph, maps, self.D, self.r_star, name or self.name)

    # -- code basis helpers
    def code_product_state(self, labels: Sequence[int]) -> SparseState:
        """Lift of a code basis configuration to the virtual register."""
        cfg = np.array([self.code_register.index(labels)], dtype=np.int64)
        c, a = lift_code(self, cfg, np.ones(1, dtype=complex))
        return SparseState.from_arrays(self.register, c, a)

    def is_identity_model(self) -> bool:
        return all(pm.d == pm.virtual_dim and np.allclose(pm.matrix, np.eye(pm.d)) for pm in self.maps)

    def __repr__(self) -> str:
        return f"PepsModel({self.name!r}, sites={self.num_sites}, D={self.D}, d={self.d})"


# ----------------------------------------------------------------- site-map kernels
def apply_site_maps(
    configs: np.ndarray,
    amps: np.ndarray,
    in_dims: Sequence[int],
    out_dims: Sequence[int],
    mats: Sequence[np.ndarray | None],
    tol: float = 0.0,
):
    """Apply ``mats[i]`` (out_dims[i] x in_dims[i]) to site digit i; ``None`` keeps the digit."""
    in_dims = list(in_dims)
    out_dims = list(out_dims)
    n = len(in_dims)
    cur = list(in_dims)
    for i in range(n):
        m = mats[i]
        if m is None:
            continue
        stride_in = int(np.prod(cur[i + 1 :], dtype=np.int64))
        digit = (configs // stride_in) % cur[i]
        high = configs // (stride_in * cur[i])
        low = configs % stride_in
        csc = sp.csc_array(np.asarray(m))
        start = csc.indptr[digit]
        cnt = csc.indptr[digit + 1] - start
        rep = np.repeat(np.arange(configs.size), cnt)
        pos = np.arange(int(cnt.sum())) - np.repeat(np.cumsum(cnt) - cnt, cnt) + np.repeat(start, cnt)
        rows = csc.indices[pos].astype(np.int64)
        vals = csc.data[pos]
        cur[i] = out_dims[i]
        configs = (high[rep] * cur[i] + rows) * stride_in + low[rep]
        amps = amps[rep] * (vals if amps.ndim == 1 else vals[:, None])
        configs, amps = coalesce(configs, amps, tol)
    return configs, amps


def lift_code(model: PepsModel, configs: np.ndarray, amps: np.ndarray, sites: Sequence[int] | None = None):
    """Apply map^dagger on ``sites`` (all by default) to code-digit configurations."""
    sites = range(model.num_sites) if sites is None else sites
    sset = set(sites)
    in_dims = [pm.d if i in sset else pm.virtual_dim for i, pm in enumerate(model.maps)]
    out_dims = [pm.virtual_dim for pm in model.maps]
    mats = [pm.matrix.conj().T if i in sset else None for i, pm in enumerate(model.maps)]
    return apply_site_maps(configs, amps, in_dims, out_dims, mats)


def project_code(model: PepsModel, configs: np.ndarray, amps: np.ndarray, sites: Sequence[int] | None = None):
    """Apply the maps on ``sites`` (all by default), turning virtual digits into code digits."""
    sites = range(model.num_sites) if sites is None else sites
    sset = set(sites)
    in_dims = [pm.virtual_dim for pm in model.maps]
    out_dims = [pm.d if i in sset else pm.virtual_dim for i, pm in enumerate(model.maps)]
    mats = [pm.matrix if i in sset else None for i, pm in enumerate(model.maps)]
    return apply_site_maps(configs, amps, in_dims, out_dims, mats)


# ----------------------------------------------------------------- operations
def entangled_edge_projector(register: QuditRegister, qudits: tuple, D: int) -> SparseOperator:
    """M_e = |Phi_D><Phi_D| with the normalized maximally entangled state on ``qudits``."""
    a, b = qudits
    phi = np.zeros(D * D)
    phi[np.arange(D) * D + np.arange(D)] = 1 / np.sqrt(D)
    return kron_embed(np.outer(phi, phi), (a, b), register)


def bell_product(model: PepsModel, boundary: Mapping[int, int] | None = None):
    """Configurations and amplitudes of the normalized entangled-pair product.

    Leg qudits are fixed to ``boundary`` values (default 0).
    """
    g = model.graph
    reg = model.register
    boundary = dict(boundary or {})
    base = 0
    for q in g.leg_qudits():
        base += boundary.get(q, 0) * reg.strides[q]
    configs = np.array([base], dtype=np.int64)
    D = model.D
    for e in range(g.num_edges):
        qa, qb = g.edge_qudits(e)
        step = np.arange(D, dtype=np.int64) * (reg.strides[qa] + reg.strides[qb])
        configs = (configs[:, None] + step[None, :]).ravel()
    amps = np.full(configs.size, D ** (-g.num_edges / 2), dtype=complex)
    return configs, amps


def peps_code_vector(model: PepsModel, boundary: Mapping[int, int] | None = None) -> SparseState:
    """Normalized coefficients of the PEPS in the code basis (map applied to the pair product)."""
    c, a = bell_product(model, boundary)
    c, a = project_code(model, c, a)
    state = SparseState.from_arrays(model.code_register, c, a).prune(1e-14)
    if state.norm() < 1e-12:
        raise NullStateError("projection maps annihilate the entangled-pair product")
    return state.normalized()


def peps_code_space(model: PepsModel, max_boundaries: int = 2**14, tol: float = 1e-10) -> sp.csr_array:
    """Orthonormal basis (columns, code basis) of the PEPS vectors over all leg boundary values."""
    legs = model.graph.leg_qudits()
    count = model.D ** len(legs)
    if count > max_boundaries:
        raise ResourceError(f"{count} boundary conditions exceed the limit {max_boundaries}")
    rows, cols, vals = [], [], []
    k = 0
    for values in itertools.product(range(model.D), repeat=len(legs)):
        try:
            v = peps_code_vector(model, dict(zip(legs, values)))
        except NullStateError:
            continue
        rows.append(v.configs)
        cols.append(np.full(v.configs.size, k))
        vals.append(v.amps)
        k += 1
    if k == 0:
        raise NullStateError("no boundary condition yields a nonzero PEPS")
    n = model.code_register.total_dim
    w = sp.csr_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, k))
    gram = sp.csr_array(w @ w.conj().T)
    vals_, vecs = block_eigh(gram)
    keep = np.flatnonzero(vals_ > tol * max(float(vals_.max()), 1.0))
    basis = sp.csc_array(vecs)[:, keep]
    basis.data[np.abs(basis.data) < 1e-15] = 0
    basis.eliminate_zeros()
    return sp.csr_array(basis)


def assemble_peps_state(model: PepsModel, boundary: Mapping[int, int] | None = None) -> SparseState:
    """Normalized prod_s P_s prod_e |Phi_e> on the virtual register."""
    code = peps_code_vector(model, boundary)
    c, a = lift_code(model, code.configs, code.amps)
    return SparseState.from_arrays(model.register, c, a).prune(1e-15).normalized()


def reduced_density(state: SparseState, qudits: Sequence[int]) -> np.ndarray:
    reg = state.register
    qudits = tuple(sorted(qudits))
    dim = reg.sub_dim(qudits)
    if dim > 2**14:
        raise ResourceError(f"region dimension {dim} exceeds the dense limit")
    row = reg.local_index(state.configs, qudits)
    rest = state.configs - reg.contribution_table(qudits)[row]
    _, col = np.unique(rest, return_inverse=True)
    psi = sp.csr_array((state.amps, (row, col)), shape=(dim, int(col.max()) + 1 if col.size else 1))
    rho = (psi @ psi.conj().T).toarray()
    return rho


def support_projector(rho: np.ndarray, rank_tol: float = 1e-10):
    vals, vecs = np.linalg.eigh(rho)
    top = max(vals.max(), 0.0)
    keep = vals > rank_tol * top
    ambiguous = bool(np.any((vals > rank_tol * top / 10) & (vals < rank_tol * top * 10)))
    v = vecs[:, keep]
    return v @ v.conj().T, ambiguous


def canonical_parent_hamiltonian(
    model: PepsModel,
    regions: Iterable[Region],
    rank_tol: float = 1e-10,
    state: SparseState | None = None,
) -> SparseOperator:
    """-sum_R (projector onto the support of the PEPS reduced state on R)."""
    psi = assemble_peps_state(model) if state is None else state
    total = SparseOperator.zero(model.register)
    for region in regions:
        qudits = tuple(q for i in sorted(region.sites) for q in model.site_qudits(i))
        rho = reduced_density(psi, qudits)
        proj, ambiguous = support_projector(rho, rank_tol)
        if ambiguous:
            warnings.warn(f"support rank of region {sorted(region.sites)} is ambiguous at tolerance {rank_tol}")
        total = total - kron_embed(proj, qudits, model.register)
    return total


# ----------------------------------------------------------------- Upsilon
@dataclass(frozen=True)
class UpsilonSpec:
    """Interleaved product prod_i (P_{site_regions[i]} prod_{e in edge_regions[i]} M_e)."""

    site_regions: tuple
    edge_regions: tuple
    graph: PepsGraph = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        sr = tuple(frozenset(r.sites) if isinstance(r, Region) else frozenset(r) for r in self.site_regions)
        er = tuple(frozenset(r.edges) if isinstance(r, Region) else frozenset(r) for r in self.edge_regions)
        if len(sr) != len(er):
            raise ValueError("site_regions and edge_regions must have equal length")
        object.__setattr__(self, "site_regions", sr)
        object.__setattr__(self, "edge_regions", er)

    @property
    def edges(self) -> frozenset:
        return frozenset().union(*self.edge_regions)

    def union_sites(self, graph: PepsGraph) -> frozenset:
        sites = set().union(*self.site_regions)
        for e in self.edges:
            sites.update(graph.edge_sites(e))
        return frozenset(sites)

    def union(self, graph: PepsGraph) -> Region:
        return Region(self.union_sites(graph), self.edges, "edges")

    def label(self) -> str:
        parts = [f"P{sorted(s)}M{sorted(e)}" for s, e in zip(self.site_regions, self.edge_regions)]
        return "*".join(parts)


def _apply_chain(model: PepsModel, spec: UpsilonSpec, configs: np.ndarray, amps: np.ndarray):
    """Apply prod_i (P_{R_P_i} prod_e M_e) to batched columns, rightmost factor first."""
    ops = []
    for sites, edges in zip(spec.site_regions, spec.edge_regions):
        ops.extend(("P", s) for s in sorted(sites))
        ops.extend(("M", e) for e in sorted(edges))
    reg = model.site_register
    for kind, x in reversed(ops):
        if kind == "P":
            m = sp.csc_array(model.maps[x].projector)
            support = (x,)
        else:
            m, support = _edge_site_matrix(model, x)
        configs, amps = _apply_batched(reg, support, m, configs, amps)
    return configs, amps


def _edge_site_matrix(model: PepsModel, e: int):
    """M_e as a sparse matrix on the (sorted) pair of sites it connects, in site digits."""
    i, j = sorted(model.graph.edge_sites(e))
    qa, qb = model.graph.edge_qudits(e)
    qudits = model.site_qudits(i) + model.site_qudits(j)
    sub = QuditRegister((model.D,) * len(qudits))
    local = entangled_edge_projector(sub, (qudits.index(qa), qudits.index(qb)), model.D)
    return sp.csc_array(local.on_support(range(len(qudits)))), (i, j)


def _apply_batched(reg: QuditRegister, support, csc, keys, amps):
    """Apply a local matrix to keys ``col * total + config``."""
    from .operators import _apply_local

    total = reg.total_dim
    col = keys // total
    new, vals, rep = _apply_local(reg, support, csc, keys % total, amps)
    return coalesce(col[rep] * total + new, vals, 1e-15)


def upsilon_code_matrix(model: PepsModel, spec: UpsilonSpec) -> tuple[np.ndarray, tuple]:
    """Upsilon restricted to the code space of its union sites (d^k x d^k) and those sites.

    Spectator sites carry virtual digit 0 throughout; no factor touches them.
    """
    sites = tuple(sorted(spec.union_sites(model.graph)))
    sset = set(sites)
    k = len(sites)
    d = model.d
    if d**k > 4096:
        raise ResourceError("union region too large for a dense code-space matrix")
    ncol = d**k
    code_dims = [d if i in sset else pm.virtual_dim for i, pm in enumerate(model.maps)]
    virt_dims = [pm.virtual_dim for pm in model.maps]
    strides = np.cumprod([1] + code_dims[::-1])[:-1][::-1].astype(np.int64)
    cols = np.arange(ncol, dtype=np.int64)
    cfg = np.zeros(ncol, dtype=np.int64)
    rem = cols.copy()
    for i in reversed(sites):
        cfg += (rem % d) * strides[i]
        rem //= d
    keys = cols * int(np.prod(code_dims, dtype=np.int64)) + cfg
    lift = [pm.matrix.conj().T if i in sset else None for i, pm in enumerate(model.maps)]
    keys, amps = apply_site_maps(keys, np.ones(ncol, dtype=complex), code_dims, virt_dims, lift)
    keys, amps = _apply_chain(model, spec, keys, amps)
    proj = [pm.matrix if i in sset else None for i, pm in enumerate(model.maps)]
    keys, amps = apply_site_maps(keys, amps, virt_dims, code_dims, proj)
    total = int(np.prod(code_dims, dtype=np.int64))
    col = keys // total
    cfg = keys % total
    row = np.zeros(cfg.size, dtype=np.int64)
    for i in sites:
        row = row * d + (cfg // strides[i]) % d
    out = np.zeros((ncol, ncol), dtype=complex)
    np.add.at(out, (row, col), amps)
    return 0.5 * (out + out.conj().T), sites


def build_upsilon(model: PepsModel, spec: UpsilonSpec) -> SparseOperator:
    """Upsilon as an operator on the virtual register (union sites' qudits)."""
    mat, sites = upsilon_code_matrix(model, spec)
    iso = np.ones((1, 1), dtype=complex)
    for i in sites:
        iso = np.kron(iso, model.maps[i].matrix)
    if iso.shape[1] > 2**14:
        raise ResourceError("union region too large for a virtual-space operator")
    local = iso.conj().T @ mat @ iso
    qudits = tuple(q for i in sites for q in model.site_qudits(i))
    return kron_embed(local, qudits, model.register)


def default_upsilon_specs(model: PepsModel, max_edges: int | None = None, max_interleaved: int = 3) -> list:
    """({0}, {R}) for connected R with <= max_edges edges, plus two-factor interleavings."""
    g = model.graph
    max_edges = model.r_star if max_edges is None else max_edges
    specs = [UpsilonSpec((frozenset(),), (r.edges,)) for r in enumerate_connected_regions(g, max_edges)]
    limit = min(max_interleaved, max_edges)
    for r in enumerate_connected_regions(g, limit):
        edges = sorted(r.edges)
        if len(edges) < 2:
            continue
        for size_a in range(1, len(edges)):
            for a in itertools.combinations(edges, size_a):
                b = tuple(e for e in edges if e not in a)
                sa = {x for e in a for x in g.edge_sites(e)}
                sb = {x for e in b for x in g.edge_sites(e)}
                for s in sorted(sa & sb):
                    specs.append(UpsilonSpec((frozenset(), frozenset({s})), (frozenset(a), frozenset(b))))
    return specs


@dataclass
class QuasiInjectivityReport:
    entries: list

    @property
    def passed(self) -> bool:
        return all(e["pass"] for e in self.entries)

    @property
    def max_residual(self) -> float:
        return max((e["residual"] for e in self.entries), default=0.0)

    def failures(self) -> list:
        return [e for e in self.entries if not e["pass"]]

    def to_json(self) -> list:
        return [{k: v for k, v in e.items()} for e in self.entries]


def verify_quasi_injectivity(
    model: PepsModel,
    specs: Sequence[UpsilonSpec] | None = None,
    tol: float = 1e-9,
    boundary: Mapping[int, int] | None = None,
) -> QuasiInjectivityReport:
    """Check that the PEPS is a top eigenvector of every Upsilon."""
    specs = default_upsilon_specs(model) if specs is None else specs
    try:
        psi = peps_code_vector(model, boundary)
    except NullStateError as exc:
        # no state to stabilize: every spec fails
        return QuasiInjectivityReport(
            [{"spec": spec.label(), "eta": float("nan"), "residual": float("inf"), "pass": False, "note": str(exc)} for spec in specs]
        )
    entries = []
    for spec in specs:
        mat, sites = upsilon_code_matrix(model, spec)
        vals = np.linalg.eigvalsh(mat)
        eta = float(vals[-1])
        op = kron_embed(mat, sites, model.code_register) if sites else None
        out = op.apply(psi) if op is not None else psi
        resid = (out - eta * psi).norm()
        entries.append(
            {
                "spec": spec.label(),
                "eta": eta,
                "residual": float(resid),
                "pass": bool(resid < tol),
            }
        )
    return QuasiInjectivityReport(entries)


def parent_from_upsilons(model: PepsModel, specs: Sequence[UpsilonSpec], coeffs: Sequence[float]) -> SparseOperator:
    """H_par = -sum_i c_i Upsilon_i (virtual register)."""
    if len(coeffs) != len(specs):
        raise ValueError("one coefficient per spec is required")
    if any(c <= 0 for c in coeffs):
        raise ValueError("coefficients must be positive")
    total = SparseOperator.zero(model.register)
    for spec, c in zip(specs, coeffs):
        total = total - c * build_upsilon(model, spec)
    return total


def parent_code_matrix(model: PepsModel, specs: Sequence[UpsilonSpec], coeffs: Sequence[float]) -> SparseOperator:
    """H_par restricted to the code space, as an operator on the code register."""
    if any(c <= 0 for c in coeffs):
        raise ValueError("coefficients must be positive")
    total = SparseOperator.zero(model.code_register)
    for spec, c in zip(specs, coeffs):
        mat, sites = upsilon_code_matrix(model, spec)
        total = total - c * kron_embed(mat, sites, model.code_register)
    return total


# ----------------------------------------------------------------- generic models
def identity_model(graph: PepsGraph, D: int = 2, r_star: int = 2) -> PepsModel:
    maps = {s: np.eye(D ** graph.num_slots(s)) for s in graph.sites}
    return PepsModel(graph, maps, D, r_star, name="trivial")


def random_isometry(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    z = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return q.T.conj()[:d].conj()


def random_model(graph: PepsGraph, d: int = 2, D: int = 2, seed: int = 0, r_star: int = 2) -> PepsModel:
    """Random isometric maps; sites whose virtual dimension equals d get a random unitary."""
    rng = np.random.default_rng(seed)
    maps = {s: random_isometry(rng, d, D ** graph.num_slots(s)) for s in graph.sites}
    return PepsModel(graph, maps, D, r_star, name="random")
