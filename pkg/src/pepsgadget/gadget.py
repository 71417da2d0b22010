"""Code-gadget Hamiltonian H = sum_s Q_s - eps sum_e M_e and its resolvent machinery."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import comb
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .operators import QuditRegister, SparseOperator, SparseState, _apply_local, coalesce
from .peps import PepsModel, ResourceError, _edge_site_matrix

FULL_REGISTER_LIMIT = 2**16


def harmonic(n: int) -> Fraction:
    return sum((Fraction(1, j) for j in range(1, n + 1)), Fraction(0))


# ----------------------------------------------------------------- Hamiltonian
class GadgetHamiltonian:
    """H0 = sum_s (1 - P_s), V = -sum_e M_e on the virtual register."""

    delta0 = 1.0

    def __init__(self, model: PepsModel, epsilon: float = 0.0):
        self.model = model
        self.epsilon = float(epsilon)

    @property
    def num_sites(self) -> int:
        return self.model.num_sites

    @property
    def register(self) -> QuditRegister:
        return self.model.register

    def _check_size(self):
        if self.register.total_dim > FULL_REGISTER_LIMIT:
            raise ResourceError("register too large for full-register operators; use the frame engine")

    @cached_property
    def site_projectors(self) -> list:
        return [self.model.site_projector(i) for i in range(self.num_sites)]

    @cached_property
    def edge_projectors(self) -> list:
        return [self.model.edge_projector(e) for e in range(self.model.graph.num_edges)]

    @cached_property
    def H0(self) -> SparseOperator:
        self._check_size()
        total = SparseOperator.zero(self.register)
        for p in self.site_projectors:
            total = total + (SparseOperator.identity(self.register) - p)
        return total

    @cached_property
    def V(self) -> SparseOperator:
        self._check_size()
        total = SparseOperator.zero(self.register)
        for m in self.edge_projectors:
            total = total - m
        return total

    def full_hamiltonian(self, epsilon: float | None = None) -> SparseOperator:
        eps = self.epsilon if epsilon is None else epsilon
        return self.H0 + eps * self.V

    @cached_property
    def frame(self) -> "FrameEngine":
        return FrameEngine(self.model)


def build_gadget(model: PepsModel, epsilon: float = 0.0) -> GadgetHamiltonian:
    return GadgetHamiltonian(model, epsilon)


def ground_projector(g: GadgetHamiltonian) -> SparseOperator:
    """P0 = prod_s P_s."""
    g._check_size()
    total = SparseOperator.identity(g.register)
    for p in g.site_projectors:
        total = total @ p
    return total


# ----------------------------------------------------------------- resolvents
@dataclass(frozen=True)
class ResolventConfig:
    delta_tilde: float
    representation: str = "excitation-patterns"

    @classmethod
    def default(cls, r_star: int = 6) -> "ResolventConfig":
        return cls(float(2 * harmonic(r_star) + 1))


def g_weight(q: int, k: int, delta_tilde: float) -> float:
    """Eigenvalue of g_q on the H0 = k eigenspace."""
    if k == 0:
        return 1.0 if q == 0 else delta_tilde ** abs(q)
    return float(k) ** (-q) if q >= 1 else 0.0


def excitation_patterns(g: GadgetHamiltonian, state: SparseState, sites: Iterable[int] | None = None, tol: float = 1e-14) -> dict:
    """Split ``state`` by number of excited sites using prod_s (P_s + Q_s).

    Returns {k: component with exactly k excitations among ``sites``}.
    """
    sites = range(g.num_sites) if sites is None else sites
    branches = {0: state}
    for s in sites:
        proj = g.site_projectors[s]
        new: dict = {}
        for k, psi in branches.items():
            p = proj.apply(psi).prune(tol)
            q = (psi - p).prune(tol)
            for kk, part in ((k, p), (k + 1, q)):
                if len(part) == 0:
                    continue
                new[kk] = new[kk] + part if kk in new else part
        branches = new
    return branches


def apply_g(q: int, config: ResolventConfig, state: SparseState, g: GadgetHamiltonian) -> SparseState:
    """g_0 = P0; g_q = dt^q P0 + Q0/H0^q (q >= 1); g_q = dt^|q| P0 (q <= -1)."""
    out = SparseState.zero(state.register)
    for k, part in sorted(excitation_patterns(g, state).items()):
        w = g_weight(q, k, config.delta_tilde)
        if w != 0.0:
            out = out + w * part
    return out


@dataclass
class ClosedFormResolvent:
    """sum_i coeff_i * prod_{s in sites_i} P_s, an exact expansion of g~(R) on R-local states."""

    terms: list  # (coefficient, frozenset of sites)
    gadget: GadgetHamiltonian

    def apply(self, state: SparseState) -> SparseState:
        out = SparseState.zero(state.register)
        for coeff, sites in self.terms:
            psi = state
            for s in sorted(sites):
                psi = self.gadget.site_projectors[s].apply(psi)
            out = out + float(coeff) * psi
        return out

    def to_operator(self) -> SparseOperator:
        total = SparseOperator.zero(self.gadget.register)
        for coeff, sites in self.terms:
            op = SparseOperator.identity(self.gadget.register)
            for s in sorted(sites):
                op = op @ self.gadget.site_projectors[s]
            total = total + float(coeff) * op
        return total


def tilde_g_closed_form(region, delta_tilde: float, g: GadgetHamiltonian) -> ClosedFormResolvent:
    """(dt - h_|R|) P0 + sum_j (j C(|R|, j))^-1 sum_{R' in R, |R'| = |R| - j} P_R' P_{rest}."""
    R = sorted(region.sites if hasattr(region, "sites") else region)
    if len(R) > 12:
        raise ResourceError("closed form limited to regions of at most 12 sites")
    rest = frozenset(range(g.num_sites)) - frozenset(R)
    n = len(R)
    terms = [(Fraction(delta_tilde).limit_denominator(10**12) - harmonic(n), frozenset(range(g.num_sites)))]
    for j in range(1, n + 1):
        c = Fraction(1, j * comb(n, j))
        for sub in itertools.combinations(R, n - j):
            terms.append((c, frozenset(sub) | rest))
    return ClosedFormResolvent(terms, g)


def random_region_state(g: GadgetHamiltonian, region: Sequence[int], rng: np.random.Generator, products: int = 3, width: int = 6) -> SparseState:
    """Random state excited only on ``region``; other sites in random code states."""
    model = g.model
    dims = [pm.virtual_dim for pm in model.maps]
    rset = set(region)
    total = SparseState.zero(model.register)
    for _ in range(products):
        configs = np.zeros(1, dtype=np.int64)
        amps = np.ones(1, dtype=complex)
        for s, pm in enumerate(model.maps):
            if s in rset:
                idx = rng.choice(dims[s], size=min(width, dims[s]), replace=False)
                vec = np.zeros(dims[s], dtype=complex)
                vec[idx] = rng.normal(size=idx.size) + 1j * rng.normal(size=idx.size)
                code = rng.normal(size=pm.d) + 1j * rng.normal(size=pm.d)
                vec = vec + pm.matrix.conj().T @ code
            else:
                code = rng.normal(size=pm.d) + 1j * rng.normal(size=pm.d)
                vec = pm.matrix.conj().T @ code
            nz = np.flatnonzero(np.abs(vec) > 1e-14)
            configs = (configs[:, None] * dims[s] + nz[None, :]).ravel()
            amps = (amps[:, None] * vec[nz][None, :]).ravel()
        total = total + SparseState.from_arrays(model.register, configs, amps)
    return total.normalized()


@dataclass
class ResolventReport:
    region: tuple
    delta_tilde: float
    residuals: list

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)

    def passed(self, tol: float = 1e-10) -> bool:
        return self.max_residual < tol


def verify_resolvent_equivalence(region, delta_tilde: float, g: GadgetHamiltonian, trials: int = 100, seed: int = 0) -> ResolventReport:
    """Compare the closed form with the excitation-pattern g~ on random R-local states."""
    R = tuple(sorted(region.sites if hasattr(region, "sites") else region))
    rng = np.random.default_rng(seed)
    closed = tilde_g_closed_form(R, delta_tilde, g)
    cfg = ResolventConfig(delta_tilde)
    res = []
    for _ in range(trials):
        psi = random_region_state(g, R, rng)
        a = closed.apply(psi)
        b = apply_g(1, cfg, psi, g)
        res.append((a - b).norm())
    return ResolventReport(R, delta_tilde, res)


# ----------------------------------------------------------------- rotated frame
class FrameEngine:
    """Per-site frames [code states; complement] in which H0 and every P_s are diagonal.

    Frame digit x at site s is a code state iff x < d, so H0 counts digits >= d.
    Perturbation strings P0 V .. V P0 are evaluated by batched sparse propagation.
    """

    def __init__(self, model: PepsModel):
        self.model = model
        self.d = model.d
        self.register = model.site_register
        self.code_register = model.code_register
        self.frames = [sp.csr_array(pm.frame) for pm in model.maps]
        ops = []
        for e in range(model.graph.num_edges):
            m, (i, j) = _edge_site_matrix(model, e)
            u = sp.kron(self.frames[i], self.frames[j], format="csr")
            mt = (u @ sp.csr_array(m) @ u.conj().T).tocsc()
            mt.data[np.abs(mt.data) < 1e-15] = 0
            mt.eliminate_zeros()
            ops.append(((i, j), mt))
        self.edge_ops = ops
        self._strides = np.array(self.register.strides, dtype=np.int64)
        self._code_strides = np.array(self.code_register.strides, dtype=np.int64)

    # -- basis conversions
    def excitations(self, configs: np.ndarray) -> np.ndarray:
        n = np.zeros(configs.size, dtype=np.int64)
        for s, d in enumerate(self.register.local_dims):
            n += ((configs // self._strides[s]) % d) >= self.d
        return n

    def code_to_frame(self, code: np.ndarray) -> np.ndarray:
        out = np.zeros(code.size, dtype=np.int64)
        for s in range(len(self._strides)):
            out += ((code // self._code_strides[s]) % self.d) * self._strides[s]
        return out

    def frame_to_code(self, configs: np.ndarray) -> np.ndarray:
        out = np.zeros(configs.size, dtype=np.int64)
        for s, d in enumerate(self.register.local_dims):
            out += ((configs // self._strides[s]) % d) * self._code_strides[s]
        return out

    # -- propagation
    def apply_V(self, keys: np.ndarray, amps: np.ndarray, tol: float = 1e-15):
        """-sum_e M_e on batched keys ``col * total + config``."""
        total = self.register.total_dim
        col = keys // total
        cfg = keys % total
        out_k, out_a = [], []
        for support, mat in self.edge_ops:
            new, vals, rep = _apply_local(self.register, support, mat, cfg, amps)
            out_k.append(col[rep] * total + new)
            out_a.append(-vals)
        return coalesce(np.concatenate(out_k), np.concatenate(out_a), tol)

    def histories(self, n_max: int, columns: Sequence[int] | None = None, chunk: int = 256, blocks=None) -> "HistoryTable":
        """G(h) = P0 V Pi_{n_1} V ... Pi_{n_{m-1}} V P0 for every history up to n_max V's.

        Results are code-basis sparse matrices restricted to the requested
        columns; without ``columns`` the split evaluation is used.
        """
        if columns is None:
            return self.histories_split(n_max, blocks)
        total = self.register.total_dim
        ncode = self.code_register.total_dim
        if (ncode + 1) * total >= 2**62:
            raise ResourceError("register too large for batched propagation keys")
        columns = np.arange(ncode, dtype=np.int64) if columns is None else np.asarray(columns, dtype=np.int64)
        acc: dict = {}
        for start in range(0, columns.size, chunk):
            cols = columns[start : start + chunk]
            keys = cols * total + self.code_to_frame(cols)
            amps = np.ones(cols.size, dtype=complex)
            self._descend(keys, amps, (), n_max, acc)
        table = {}
        for h, parts in acc.items():
            keys = np.concatenate([p[0] for p in parts])
            amps = np.concatenate([p[1] for p in parts])
            col = keys // total
            row = self.frame_to_code(keys % total)
            table[h] = sp.csr_array((amps, (row, col)), shape=(ncode, ncode))
        return HistoryTable(table, n_max, ncode)

    def branches(self, depth: int, columns: np.ndarray, chunk: int = 512) -> dict:
        """B_h = Pi_{n_r} V ... Pi_{n_1} V P0 for all histories h of length r <= depth.

        Returned as {h: (frame configs, code columns, amplitudes)}.
        """
        total = self.register.total_dim
        acc: dict = {}

        def walk(keys, amps, hist):
            keys, amps = self.apply_V(keys, amps)
            if keys.size == 0:
                return
            n = self.excitations(keys % total)
            for value in np.unique(n):
                mask = n == value
                h = hist + (int(value),)
                acc.setdefault(h, []).append((keys[mask], amps[mask]))
                if len(h) < depth:
                    walk(keys[mask], amps[mask], h)

        for start in range(0, columns.size, chunk):
            cols = columns[start : start + chunk]
            walk(cols * total + self.code_to_frame(cols), np.ones(cols.size, dtype=complex), ())
        out = {}
        for h in list(acc):
            parts = acc.pop(h)
            keys = np.concatenate([p[0] for p in parts])
            amps = np.concatenate([p[1] for p in parts])
            del parts
            out[h] = (keys % total, (keys // total).astype(np.int32), amps)
        return out

    def histories_split(self, n_max: int, blocks: Sequence[np.ndarray] | None = None) -> "HistoryTable":
        """Same table as ``histories`` for all code columns, via G(h) = B_left^dagger B_right.

        Only ceil(n_max / 2) propagation steps are needed; the remaining ones
        are replaced by sparse inner products over the excited register.
        ``blocks`` optionally partitions the code basis into V-invariant sets,
        which are then processed one at a time.
        """
        ncode = self.code_register.total_dim
        if blocks is None:
            blocks = [np.arange(ncode, dtype=np.int64)]
        parts: dict = {}
        for block in blocks:
            block = np.asarray(block, dtype=np.int64)
            for hist, g in self._split_block(n_max, block).items():
                r, c = g.nonzero()
                if not (np.isin(r, block).all()):
                    raise ValueError("column blocks are not invariant under the perturbation")
                parts.setdefault(hist, []).append((r, c, g[r, c]))
        table = {}
        for hist, items in parts.items():
            r = np.concatenate([x[0] for x in items])
            c = np.concatenate([x[1] for x in items])
            v = np.concatenate([x[2] for x in items])
            table[hist] = sp.csr_array((v, (r, c)), shape=(ncode, ncode))
        return HistoryTable(table, n_max, ncode)

    def _split_block(self, n_max: int, columns: np.ndarray) -> dict:
        ncode = self.code_register.total_dim
        br = self.branches(max((n_max + 1) // 2, 1), columns)
        table = {}
        if (0,) in br:
            cfg, col, amp = br[(0,)]
            table[()] = sp.csr_array((amp, (self.frame_to_code(cfg), col)), shape=(ncode, ncode))
        # one row universe per split level keeps every B_h indexable without rebuilds
        mats: dict = {}
        for level in sorted({h[-1] for h in br}):
            hs = [h for h in br if h[-1] == level]
            universe = np.unique(np.concatenate([br[h][0] for h in hs]))
            for h in hs:
                cfg, col, amp = br.pop(h)
                rows = np.searchsorted(universe, cfg)
                mats[h] = sp.csc_array((amp, (rows, col)), shape=(universe.size, ncode))
        for m in range(2, n_max + 1):
            k = (m + 1) // 2
            left = m - k
            for hr in [h for h in mats if len(h) == k]:
                right = mats[hr]
                for hl in [h for h in mats if len(h) == left and h[-1] == hr[-1]]:
                    g = sp.csr_array(mats[hl].conj().T @ right)
                    if g.nnz:
                        hist = hr + tuple(reversed(hl[:-1]))
                        table[hist] = table[hist] + g if hist in table else g
        return table

    def _descend(self, keys, amps, hist, n_max, acc):
        keys, amps = self.apply_V(keys, amps)
        if keys.size == 0:
            return
        depth = len(hist) + 1
        n = self.excitations(keys % self.register.total_dim)
        remaining = n_max - depth
        for value in np.unique(n):
            if value > 2 * remaining and value > 0:
                continue
            mask = n == value
            if value == 0:
                acc.setdefault(hist, []).append((keys[mask], amps[mask]))
            if remaining > 0:
                self._descend(keys[mask], amps[mask], hist + (int(value),), n_max, acc)

    # -- dense frame operators for small registers
    @cached_property
    def dense(self) -> "DenseFrame":
        total = self.register.total_dim
        if total > 2**13:
            raise ResourceError("dense frame limited to 2^13 dimensions")
        v = np.zeros((total, total), dtype=complex)
        configs = np.arange(total, dtype=np.int64)
        for support, mat in self.edge_ops:
            new, vals, rep = _apply_local(self.register, support, mat, configs, np.ones(total, dtype=complex))
            np.add.at(v, (new, configs[rep]), -vals)
        n = self.excitations(configs)
        u = sp.csr_array(np.ones((1, 1)))
        for f in self.frames:
            u = sp.kron(u, f, format="csr")
        return DenseFrame(n.astype(float), v, u.toarray(), self.frame_to_code(configs), n == 0)


@dataclass
class DenseFrame:
    """H0 = diag(h0) and V (dense) in the frame basis; ``unitary`` maps computational to frame."""

    h0: np.ndarray
    V: np.ndarray
    unitary: np.ndarray
    code_index: np.ndarray
    ground: np.ndarray

    @property
    def dim(self) -> int:
        return self.h0.size

    def to_computational(self, x: np.ndarray) -> np.ndarray:
        return self.unitary.conj().T @ x @ self.unitary

    def code_block(self, x: np.ndarray) -> np.ndarray:
        """Restriction to P0, ordered by code-basis index."""
        idx = np.flatnonzero(self.ground)
        order = np.argsort(self.code_index[idx])
        idx = idx[order]
        return x[np.ix_(idx, idx)]


@dataclass
class HistoryTable:
    """Code-basis matrices G(h) keyed by excitation history h = (n_1, ..., n_{m-1})."""

    table: dict
    n_max: int
    dim: int

    def order(self, m: int) -> dict:
        return {h: g for h, g in self.table.items() if len(h) == m - 1}

    def combine(self, m: int, weight) -> sp.csr_array:
        """sum_h weight(h) G(h) over histories with m V's."""
        out = sp.csr_array((self.dim, self.dim), dtype=complex)
        for h, g in sorted(self.order(m).items()):
            w = weight(h)
            if w != 0:
                out = out + complex(w) * g
        return out
