"""Double-semion (and Z2 toric-code) PEPS on the doubled honeycomb lattice."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .gadget import GadgetHamiltonian, HistoryTable, build_gadget
from .lattice import Honeycomb, HoneycombSpec, build_honeycomb
from .operators import SparseOperator, eig_low, group_clusters, kron_embed, spectral_norm
from .peps import (
    PepsModel,
    default_upsilon_specs,
    lift_code,
    peps_code_space,
    project_code,
    verify_quasi_injectivity,
)
from .report import Report

# allowed code labels (i, j, k) in code-basis order
CODE_LABELS = ((0, 0, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1))
CODE_INDEX = {lab: n for n, lab in enumerate(CODE_LABELS)}


class ConstructionError(RuntimeError):
    """Self-test failure while building a model."""


# ----------------------------------------------------------------- tensor
@dataclass(frozen=True)
class DsTensor:
    """Vertex weights T[alpha, beta, gamma]."""

    values: dict = field(default_factory=dict)

    @classmethod
    def semion(cls) -> "DsTensor":
        phase = {0: 1, 1: 1j, 2: -1j, 3: 1}
        return cls({t: phase[sum(t)] for t in itertools.product((0, 1), repeat=3)})

    @classmethod
    def toric(cls) -> "DsTensor":
        return cls({t: 1 for t in itertools.product((0, 1), repeat=3)})

    def corrupted(self, triple=(0, 0, 0), factor: complex = -1) -> "DsTensor":
        vals = dict(self.values)
        vals[triple] = vals[triple] * factor
        return DsTensor(vals)

    def __getitem__(self, triple) -> complex:
        return self.values[tuple(triple)]


def virtual_index(alpha: int, beta: int, gamma: int) -> int:
    """Index of |alpha beta; beta gamma; gamma alpha> on slots 0..5 (slot 0 most significant)."""
    bits = (alpha, beta, beta, gamma, gamma, alpha)
    return int("".join(map(str, bits)), 2)


def vertex_map(tensor: DsTensor) -> np.ndarray:
    """Normalized 4 x 64 projection map."""
    m = np.zeros((4, 64), dtype=complex)
    for a, b, g in itertools.product((0, 1), repeat=3):
        label = ((a + b) % 2, (b + g) % 2, (g + a) % 2)
        m[CODE_INDEX[label], virtual_index(a, b, g)] += tensor[(a, b, g)]
    return m / np.sqrt(2)


# ----------------------------------------------------------------- model
@dataclass
class DsModel:
    honeycomb: Honeycomb
    model: PepsModel
    tensor: DsTensor
    kind: str = "double-semion"
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def graph(self):
        return self.honeycomb.graph

    @property
    def num_edge_qubits(self) -> int:
        return len(self.honeycomb.edges)

    # -- honeycomb-qubit encoding
    def site_labels(self, code_config: int) -> list:
        digits = self.model.code_register.digits(np.array([code_config]), range(self.model.num_sites))[0]
        return [CODE_LABELS[x] for x in digits]

    def edge_labels(self, code_config: int):
        """Per honeycomb edge, the tuple of labels assigned by its endpoint sites."""
        labels = self.site_labels(code_config)
        out = []
        for e in self.honeycomb.edges:
            out.append(tuple(labels[s][e.label] for s in e.sites))
        return out

    def is_consistent(self, code_config: int) -> bool:
        return all(len(set(x)) == 1 for x in self.edge_labels(code_config))

    def encode_edge_config(self, bits: Sequence[int]) -> int | None:
        """Code configuration whose site labels match honeycomb-edge qubit values, if allowed."""
        digits = []
        for s in range(self.model.num_sites):
            lab = tuple(bits[h] for h in self.honeycomb.site_label_edges(s))
            if lab not in CODE_INDEX:
                return None
            digits.append(CODE_INDEX[lab])
        return self.model.code_register.index(digits)

    def consistent_configs(self) -> tuple[np.ndarray, np.ndarray]:
        """(edge-qubit configuration, code configuration) pairs satisfying every vertex constraint."""
        nq = self.num_edge_qubits
        edge_cfg, code_cfg = [], []
        for x in range(2**nq):
            bits = [(x >> (nq - 1 - h)) & 1 for h in range(nq)]
            c = self.encode_edge_config(bits)
            if c is not None:
                edge_cfg.append(x)
                code_cfg.append(c)
        return np.array(edge_cfg, dtype=np.int64), np.array(code_cfg, dtype=np.int64)

    def encoding_isometry(self) -> sp.csr_array:
        """Sparse isometry from honeycomb-qubit space (vertex-allowed part) into the code space."""
        e, c = self.consistent_configs()
        return sp.csr_array(
            (np.ones(e.size, dtype=complex), (c, e)),
            shape=(self.model.code_register.total_dim, 2**self.num_edge_qubits),
        )

    @cached_property
    def gadget(self) -> GadgetHamiltonian:
        return build_gadget(self.model)

    def history_table(self, n: int = 6) -> HistoryTable:
        """Excitation-history table to ``n`` perturbation steps, cached per order."""
        for m, tab in self._tables.items():
            if m >= n:
                return tab
        blocks = self.leg_sectors() if self.honeycomb.leg_edges else None
        tab = self.gadget.frame.histories(n, blocks=blocks)
        self._tables[n] = tab
        return tab

    @cached_property
    def peps_space(self) -> sp.csr_array:
        """Orthonormal code-basis columns spanning the encoded PEPS over all leg values."""
        return peps_code_space(self.model)

    def leg_sectors(self) -> list:
        """Code configurations grouped by their leg labels (conserved by the gadget Hamiltonian)."""
        reg = self.model.code_register
        configs = np.arange(reg.total_dim, dtype=np.int64)
        digits = reg.digits(configs, range(self.model.num_sites))
        table = np.array(CODE_LABELS)
        key = np.zeros(configs.size, dtype=np.int64)
        for h in self.honeycomb.leg_edges:
            e = self.honeycomb.edges[h]
            key = 2 * key + table[digits[:, e.sites[0]], e.label]
        order = np.argsort(key, kind="stable")
        bounds = np.flatnonzero(np.diff(key[order])) + 1
        return np.split(configs[order], bounds)

    # -- consistency projectors (code register)
    def consistency_projector(self, h: int) -> SparseOperator:
        """C for honeycomb edge h: both endpoint labels along the edge direction agree."""
        e = self.honeycomb.edges[h]
        if len(e.sites) != 2:
            raise ValueError("legs have a single endpoint")
        s, t = e.sites
        mat = np.zeros((16, 16))
        for a, b in itertools.product(range(4), repeat=2):
            if CODE_LABELS[a][e.label] == CODE_LABELS[b][e.label]:
                mat[4 * a + b, 4 * a + b] = 1.0
        return kron_embed(mat, (s, t), self.model.code_register)

    def consistency_projectors(self) -> dict:
        return {h: self.consistency_projector(h) for h in self.honeycomb.internal_edges}

    def consistent_subspace_projector(self) -> sp.csr_array:
        """P_C in the code basis."""
        _, c = self.consistent_configs()
        n = self.model.code_register.total_dim
        return sp.csr_array((np.ones(c.size), (c, c)), shape=(n, n))


def build_ds_model(spec: HoneycombSpec, tensor: DsTensor | None = None, r_star: int = 6) -> DsModel:
    """Double-semion PEPS on the doubled honeycomb graph; isometry is self-tested."""
    hc = build_honeycomb(spec)
    tensor = DsTensor.semion() if tensor is None else tensor
    m = vertex_map(tensor)
    if np.abs(m @ m.conj().T - np.eye(4)).max() > 1e-12:
        raise ConstructionError("vertex map is not an isometry")
    maps = {s: m for s in hc.graph.sites}
    kind = "toric-code" if all(v == 1 for v in tensor.values.values()) else "double-semion"
    model = PepsModel(hc.graph, maps, D=2, r_star=r_star, name=kind)
    return DsModel(hc, model, tensor, kind)


def build_toric_model(spec: HoneycombSpec, r_star: int = 6) -> DsModel:
    """Z2 quantum double (toric code) as the string-net with unit vertex weights."""
    return build_ds_model(spec, DsTensor.toric(), r_star)


def build_corrupted_model(spec: HoneycombSpec, site: int = 0, triple=(0, 0, 0), factor: complex = -1, r_star: int = 6) -> DsModel:
    """Double semion with one vertex weight altered at a single site."""
    dsm = build_ds_model(spec, r_star=r_star)
    bad = vertex_map(DsTensor.semion().corrupted(triple, factor))
    maps = {s: (bad if i == site else vertex_map(dsm.tensor)) for i, s in enumerate(dsm.graph.sites)}
    model = dsm.model.with_maps(maps, name="double-semion-corrupted")
    return DsModel(dsm.honeycomb, model, dsm.tensor, "double-semion-corrupted")


# ----------------------------------------------------------------- honeycomb-qubit operators
def _bit(x: np.ndarray, h: int, nq: int) -> np.ndarray:
    return (x >> (nq - 1 - h)) & 1


def _flip_mask(edges: Sequence[int], nq: int) -> int:
    mask = 0
    for h in edges:
        mask ^= 1 << (nq - 1 - h)
    return mask


def vertex_operator(hc: Honeycomb, site: int) -> sp.csr_array:
    """prod sigma^z over the honeycomb edges at ``site``."""
    nq = len(hc.edges)
    x = np.arange(2**nq, dtype=np.int64)
    par = np.zeros(x.size, dtype=np.int64)
    for h in hc.site_label_edges(site):
        par ^= _bit(x, h, nq)
    return sp.diags_array(1.0 - 2.0 * par).tocsr()


def plaquette_operator(hc: Honeycomb, p: int = 0) -> sp.csr_array:
    """(prod sigma^x on the boundary)(prod i^{(1 - sigma^z)/2} on the legs)."""
    nq = len(hc.edges)
    plaq = hc.plaquettes[p]
    x = np.arange(2**nq, dtype=np.int64)
    n = np.zeros(x.size, dtype=np.int64)
    for h in plaq.legs:
        n += _bit(x, h, nq)
    phase = (1j) ** (n % 4)
    y = x ^ _flip_mask(plaq.boundary, nq)
    return sp.csr_array((phase, (y, x)), shape=(x.size, x.size))


def vertex_allowed_projector(hc: Honeycomb) -> sp.csr_array:
    nq = len(hc.edges)
    keep = np.ones(2**nq, dtype=bool)
    x = np.arange(2**nq, dtype=np.int64)
    for s in range(hc.graph.num_sites):
        par = np.zeros(x.size, dtype=np.int64)
        for h in hc.site_label_edges(s):
            par ^= _bit(x, h, nq)
        keep &= par == 0
    return sp.diags_array(keep.astype(float)).tocsr()


def restricted_plaquette(hc: Honeycomb, p: int = 0) -> sp.csr_array:
    pv = vertex_allowed_projector(hc)
    return sp.csr_array(pv @ plaquette_operator(hc, p) @ pv)


def ds_standard_hamiltonian(spec: HoneycombSpec, tol: float = 1e-12) -> sp.csr_array:
    """-sum_v prod sigma^z + sum_p B_p on one qubit per honeycomb edge (closed surfaces only)."""
    if spec.boundary != "torus":
        raise NotImplementedError("the standard Hamiltonian needs a closed surface")
    hc = build_honeycomb(spec)
    nq = len(hc.edges)
    h = sp.csr_array((2**nq, 2**nq), dtype=complex)
    for s in range(hc.graph.num_sites):
        h = h - vertex_operator(hc, s)
    for p in range(len(hc.plaquettes)):
        b = restricted_plaquette(hc, p)
        d = b - b.conj().T
        if d.nnz and np.abs(d.data).max() > tol:
            raise ValueError("vertex-restricted plaquette term is not Hermitian")
        h = h + b
    return sp.csr_array(h)


def plaquette_flip_map(dsm: DsModel, p: int = 0) -> np.ndarray:
    """Code-configuration permutation flipping the labels on the plaquette boundary."""
    hc = dsm.honeycomb
    odd = {h for h in hc.plaquettes[p].boundary if hc.plaquettes[p].boundary.count(h) % 2}
    reg = dsm.model.code_register
    configs = np.arange(reg.total_dim, dtype=np.int64)
    digits = reg.digits(configs, range(dsm.model.num_sites))
    table = np.array(CODE_LABELS)
    out = np.zeros_like(digits)
    for s in range(dsm.model.num_sites):
        labels = table[digits[:, s]].copy()
        for h in hc.site_label_edges(s):
            if h in odd:
                labels[:, hc.edges[h].label] ^= 1
        out[:, s] = [CODE_INDEX[tuple(r)] for r in labels]
    return np.array([reg.index(r) for r in out], dtype=np.int64)


# ----------------------------------------------------------------- effective orders
def code_isometry(model: PepsModel) -> sp.csc_array:
    """Virtual-register columns of the code basis states (register x code)."""
    n = model.code_register.total_dim
    rows, cols, vals = [], [], []
    for c in range(n):
        r, a = lift_code(model, np.array([c], dtype=np.int64), np.ones(1, dtype=complex))
        rows.append(r)
        cols.append(np.full(r.size, c))
        vals.append(a)
    return sp.csc_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(model.register.total_dim, n),
    )


def _offdiag(m) -> sp.csr_array:
    m = sp.csr_array(m)
    out = sp.csr_array(m - sp.diags_array(m.diagonal()))
    out.eliminate_zeros()
    return out


def _max_abs(m) -> float:
    m = sp.csr_array(m)
    return float(np.abs(m.data).max()) if m.nnz else 0.0


def order_zero_term(model: PepsModel) -> sp.csr_array:
    """P0 (-sum_s P_s) P0 / N in the code basis, evaluated through the virtual register."""
    n = model.code_register.total_dim
    rows, cols, vals = [], [], []
    for c in range(n):
        r, a = lift_code(model, np.array([c], dtype=np.int64), np.ones(1, dtype=complex))
        for s in range(model.num_sites):
            r1, a1 = project_code(model, r, a, sites=[s])
            r1, a1 = lift_code(model, r1, a1, sites=[s])
            r2, a2 = project_code(model, r1, a1)
            rows.append(r2)
            cols.append(np.full(r2.size, c))
            vals.append(-a2)
    m = sp.csr_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return sp.csr_array(m / model.num_sites)


def consistency_diagonals(dsm: DsModel) -> np.ndarray:
    """Column h: diagonal of C for internal edge h (code basis)."""
    return np.column_stack([dsm.consistency_projector(h).to_csr().diagonal().real for h in dsm.honeycomb.internal_edges])


def ds_effective_orders(dsm: DsModel, n: int = 6, tol: float = 1e-10, table: HistoryTable | None = None) -> Report:
    """Structure of the self-energy expansion orders 0..n in the code basis."""
    from .sw_global import self_energy_terms

    rep = Report(f"effective-orders[{dsm.kind}]")
    table = table or dsm.history_table(n)
    terms = self_energy_terms(table, n)
    dim = table.dim
    eye = sp.eye_array(dim, format="csr")

    t0 = order_zero_term(dsm.model)
    rep.add("order0 equals -P0", _max_abs(t0 + eye), tol)

    t1 = terms[1]
    c1 = float(np.mean(t1.diagonal().real))
    rep.add("order1 proportional to P0", _max_abs(t1 - c1 * eye), tol, detail=f"coefficient={c1:.12g}")

    cd = consistency_diagonals(dsm)
    design = np.column_stack([np.ones(dim), cd])
    t2 = terms[2]
    d2 = t2.diagonal().real
    coef = np.linalg.lstsq(design, d2, rcond=None)[0]
    fit = float(np.abs(design @ coef - d2).max())
    rep.add("order2 in span of P0 and C", max(fit, _max_abs(_offdiag(t2))), tol, detail=f"C coefficients={np.round(coef[1:], 12).tolist()}")

    _, pattern = np.unique(cd, axis=0, return_inverse=True)
    pattern = np.asarray(pattern).ravel()
    for j in range(3, min(n, 5) + 1):
        tj = terms[j]
        dj = tj.diagonal().real
        spread = max(float(np.ptp(dj[pattern == k])) for k in np.unique(pattern))
        rep.add(f"order{j} no new connected terms", max(spread, _max_abs(_offdiag(tj))), tol)

    data = {"order1_coefficient": c1, "order2_coefficients": coef.tolist(), "order2_fit_residual": fit}
    if n >= 6:
        off6 = _offdiag(terms[6])
        flips = [plaquette_flip_map(dsm, p) for p in range(len(dsm.honeycomb.plaquettes))]
        coo = off6.tocoo()
        on_flip = np.zeros(coo.nnz, dtype=bool)
        for f in flips:
            on_flip |= f[coo.col] == coo.row
        flip_w = float(np.abs(coo.data[on_flip]).max()) if on_flip.any() else 0.0
        stray = float(np.abs(coo.data[~on_flip]).max()) if (~on_flip).any() else 0.0
        rep.add("order6 plaquette term present", flip_w, 1e-8, ">")
        rep.add("order6 off-diagonal only on plaquette flips", stray, tol)
        data["order6_flip_weight"] = flip_w
    rep.data = data
    return rep


def ds_plaquette_check(dsm: DsModel, table: HistoryTable | None = None, tol: float = 1e-8, comm_tol: float = 1e-10) -> Report:
    """Order-6 off-diagonal term on consistent configurations versus the string-net plaquette."""
    from .sw_global import effective_terms_from_histories, gap_threshold, low_spectrum, self_energy_terms

    rep = Report(f"plaquette-check[{dsm.kind}]")
    table = table or dsm.history_table(6)
    h6 = self_energy_terms(table, 6)[6]
    pc = dsm.consistent_subspace_projector()
    enc = dsm.encoding_isometry()
    x = sp.csr_array(enc.conj().T @ _offdiag(pc @ h6 @ pc) @ enc)
    ref = sp.csr_array(sum(restricted_plaquette(dsm.honeycomb, p) for p in range(len(dsm.honeycomb.plaquettes))))
    ref_off = _offdiag(ref)
    xd = x.toarray()
    rd = ref_off.toarray()
    k = np.unravel_index(np.argmax(np.abs(xd)), xd.shape)
    scale = complex(xd[k] / rd[k]) if rd[k] != 0 else complex("nan")
    dev = float(np.abs(xd - scale * rd).max()) if np.isfinite(scale) else float("nan")
    rep.add("plaquette scale positive", scale.real if abs(scale.imag) <= tol * max(abs(scale), 1.0) else float("nan"), 0.0, ">", f"scale={scale:.12g}")
    rep.add("plaquette deviation", dev, tol)
    worst = 0.0
    off6 = _offdiag(h6)
    for h in dsm.honeycomb.internal_edges:
        c = dsm.consistency_projector(h).to_csr()
        worst = max(worst, _max_abs(off6 @ c - c @ off6))
    rep.add("plaquette commutes with consistency terms", worst, comm_tol)
    rep.data = {"scale": scale, "max_entry": float(np.abs(xd).max())}
    if dsm.honeycomb.spec.boundary == "torus":
        std = ds_standard_hamiltonian(dsm.honeycomb.spec).toarray()
        ev = np.linalg.eigvalsh(std)
        std_dim = int(np.sum(ev - ev[0] < 1e-9))
        eps = 0.02
        terms = effective_terms_from_histories(table, 6)
        heff = sum((eps**j) * terms[j] for j in range(1, 7))
        spec = low_spectrum(heff, gap_threshold(_max_abs(heff), eps, 6))
        eff_dim = int(spec.ground_basis.shape[1])
        rep.add("ground dimension matches string-net model", eff_dim, std_dim, "==")
        rep.data.update({"standard_ground_dim": std_dim, "effective_ground_dim": eff_dim, "standard_ground_energy": float(ev[0])})
    return rep


# ----------------------------------------------------------------- full-Hamiltonian probes
def encoded_peps_basis(dsm: DsModel) -> np.ndarray:
    """Orthonormal virtual-register columns spanning the encoded PEPS space."""
    return (code_isometry(dsm.model) @ dsm.peps_space).toarray()


def ds_fidelity_sweep(dsm: DsModel, epsilons: Sequence[float], n_star: int = 6, extra: int = 6) -> Report:
    """Overlap of the lowest cluster of H(eps) with the encoded PEPS space."""
    from .sw_global import gap_threshold

    rep = Report(f"fidelity-sweep[{dsm.kind}]")
    g = dsm.gadget
    basis = encoded_peps_basis(dsm)
    k = min(basis.shape[1] + extra, g.register.total_dim - 2)
    rows, dims = [], []
    for eps in sorted(epsilons, reverse=True):
        h = g.full_hamiltonian(eps).to_csr()
        dec = eig_low(h, k)
        tau = gap_threshold(float(np.abs(dec.eigenvalues).max()), eps, n_star)
        levels = group_clusters(dec.eigenvalues, tau)
        ground = dec.eigenvectors[:, levels[0]]
        fid = float(np.linalg.norm(basis.conj().T @ ground) ** 2 / ground.shape[1])
        gap = float(dec.eigenvalues[levels[1][0]] - dec.eigenvalues[levels[0][-1]]) if len(levels) > 1 else float("nan")
        rows.append({"epsilon": float(eps), "fidelity": fid, "ground_dim": len(levels[0]), "gap": gap, "ground_energy": float(dec.eigenvalues[0])})
        dims.append(len(levels[0]))
    fids = [r["fidelity"] for r in rows]
    rep.add("fidelity at smallest epsilon", fids[-1], 0.999, ">=", f"eps={rows[-1]['epsilon']}")
    drops = [fids[i] - fids[i + 1] for i in range(len(fids) - 1)]
    rep.add("fidelity monotone as epsilon decreases", max(drops, default=0.0), 1e-12, "<=")
    rep.flag("no ground-dimension change along sweep", len(set(dims)) == 1, f"dims={dims}")
    rep.data = {"sweep": rows, "peps_dim": int(basis.shape[1])}
    return rep


def consistency_symmetry(dsm: DsModel, h: int) -> SparseOperator:
    """prod sigma^z over the four virtual qubits carrying honeycomb edge h's label at both ends."""
    e = dsm.honeycomb.edges[h]
    z = np.diag([1.0, -1.0])
    qubits = []
    for pe in e.peps_edges:
        qubits.extend(dsm.graph.edge_qudits(pe))
    op = z
    for _ in qubits[1:]:
        op = np.kron(op, z)
    return kron_embed(op, tuple(qubits), dsm.model.register)


def plaquette_flip_candidate(dsm: DsModel, p: int = 0) -> SparseOperator:
    """Lift of the code-basis plaquette flip onto the virtual register (zero off the code space)."""
    flip = plaquette_flip_map(dsm, p)
    n = flip.size
    f = sp.csr_array((np.ones(n), (flip, np.arange(n))), shape=(n, n))
    w = code_isometry(dsm.model)
    reg = dsm.model.register
    return SparseOperator(reg, range(reg.num_qudits), sp.csr_array(w @ f @ w.conj().T))


def symmetry_probe(dsm: DsModel, candidate: SparseOperator, epsilon: float, exact_tol: float = 1e-10, table: HistoryTable | None = None) -> Report:
    """Commutator norms of a virtual-register operator with H(eps) and with H_eff^<6>."""
    from .sw_global import effective_terms_from_histories

    rep = Report(f"symmetry-probe[{dsm.kind}]")
    g = dsm.gadget
    a = candidate.to_csr()
    h = g.full_hamiltonian(epsilon).to_csr()
    full = spectral_norm(sp.csr_array(a @ h - h @ a))
    w = code_isometry(dsm.model)
    ac = sp.csr_array(w.conj().T @ a @ w)
    table = table or dsm.history_table(6)
    terms = effective_terms_from_histories(table, 6)
    heff = sum((epsilon**j) * terms[j] for j in range(1, 7))
    eff = spectral_norm(sp.csr_array(ac @ heff - heff @ ac))
    hnorm = spectral_norm(h)
    h0 = g.H0.to_csr()
    c0 = spectral_norm(sp.csr_array(a @ h0 - h0 @ a))
    rep.add("commutator with H", full, exact_tol, "<", "exact" if full < exact_tol else "approximate")
    rep.add("commutator with effective H", eff, exact_tol, "<")
    rep.data = {"commutator_full": full, "commutator_effective": eff, "commutator_h0": c0, "h_norm": hnorm, "relative": full / hnorm, "classification": "exact" if full < exact_tol else "approximate"}
    return rep


# ----------------------------------------------------------------- pipelines
def quasi_injectivity_report(dsm: DsModel, max_edges: int = 2, tol: float = 1e-9) -> Report:
    specs = default_upsilon_specs(dsm.model, max_edges=max_edges)
    qi = verify_quasi_injectivity(dsm.model, specs, tol=tol)
    rep = Report(f"quasi-injectivity[{dsm.kind}]")
    entries = qi.entries
    worst = max((float(e["residual"]) for e in entries), default=float("nan"))
    rep.add("all specs pass", sum(1 for e in entries if not e["pass"]), 0, "==", f"{len(entries)} specs")
    rep.data = {"num_specs": len(entries), "max_residual": worst, "failed": [str(e["spec"]) for e in entries if not e["pass"]]}
    return rep


def toric_code_crosscheck(
    spec: HoneycombSpec = HoneycombSpec(1, 1, "torus"),
    order_spec: HoneycombSpec | None = HoneycombSpec(1, 1, "open-patch"),
    epsilons: Sequence[float] = (0.08, 0.04, 0.02, 0.01),
) -> Report:
    """Quasi-injectivity, order structure and fidelity for the Z2 quantum double."""
    rep = Report("toric-code")
    tm = build_toric_model(spec)
    rep.extend(quasi_injectivity_report(tm), "qi.")
    rep.extend(ds_effective_orders(build_toric_model(order_spec or spec)), "orders.")
    rep.extend(ds_fidelity_sweep(tm, epsilons), "fidelity.")
    return rep
