"""Global Schrieffer-Wolff expansion.

Operator strings are handled symbolically as words b_0 V b_1 V ... V b_m whose
blocks are P (ground projector, encoded -1) or Q^k = Q0 / H0^k (encoded k >= 0).
Every effective term is then a weighted sum of history matrices from the frame
engine, so the same propagation serves the global, restricted and
self-energy expansions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .gadget import GadgetHamiltonian, HistoryTable, g_weight
from .operators import SparseOperator, block_eigh, local_decompose, subspace_distance
from .peps import ResourceError
from .report import Report

P_BLOCK = -1
MAX_ORDER = 8


# ----------------------------------------------------------------- coefficients
@lru_cache(maxsize=None)
def bernoulli(n: int) -> Fraction:
    """Bernoulli numbers with B_1 = -1/2."""
    b = [Fraction(1)]
    for m in range(1, n + 1):
        b.append(-sum(comb(m + 1, k) * b[k] for k in range(m)) / (m + 1))
    return b[n]


@dataclass(frozen=True)
class CoefficientTable:
    max_order: int = MAX_ORDER

    def a(self, i: int) -> Fraction:
        """a_i = 2^i B_i / i!."""
        return Fraction(2**i) * bernoulli(i) / factorial(i)

    def b(self, odd: int) -> Fraction:
        """b_{2i-1} = 2 (2^{2i} - 1) B_{2i} / (2i)!."""
        if odd % 2 != 1:
            raise ValueError("b is indexed by odd integers")
        i = (odd + 1) // 2
        return Fraction(2 * (2 ** (2 * i) - 1)) * bernoulli(2 * i) / factorial(2 * i)


# ----------------------------------------------------------------- word algebra
Word = tuple
Poly = dict


def _join(x: int, y: int) -> int | None:
    if x == P_BLOCK and y == P_BLOCK:
        return P_BLOCK
    if x == P_BLOCK or y == P_BLOCK:
        return None
    return x + y


def mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for wa, ca in a.items():
        for wb, cb in b.items():
            j = _join(wa[-1], wb[0])
            if j is None:
                continue
            w = wa[:-1] + (j,) + wb[1:]
            out[w] = out.get(w, 0) + ca * cb
    return {w: c for w, c in out.items() if c != 0}


def add(*polys: Poly, scale: Sequence | None = None) -> Poly:
    out: Poly = {}
    scale = scale or [1] * len(polys)
    for p, s in zip(polys, scale):
        for w, c in p.items():
            out[w] = out.get(w, 0) + s * c
    return {w: c for w, c in out.items() if c != 0}


def commutator(a: Poly, b: Poly) -> Poly:
    return add(mul(a, b), mul(b, a), scale=[1, -1])


P_WORD: Poly = {(P_BLOCK,): Fraction(1)}
R_WORD: Poly = {(1,): Fraction(1)}
V_WORD: Poly = {(P_BLOCK, P_BLOCK): Fraction(1), (P_BLOCK, 0): Fraction(1), (0, P_BLOCK): Fraction(1), (0, 0): Fraction(1)}
VD_WORD: Poly = {(P_BLOCK, P_BLOCK): Fraction(1), (0, 0): Fraction(1)}
VOD_WORD: Poly = {(P_BLOCK, 0): Fraction(1), (0, P_BLOCK): Fraction(1)}


def superop_L_word(x: Poly) -> Poly:
    """L(X) = (Q0/H0) X P0 - P0 X (Q0/H0)."""
    return add(mul(mul(R_WORD, x), P_WORD), mul(mul(P_WORD, x), R_WORD), scale=[1, -1])


class WordSeries:
    """Symbolic S_j, W^{(k)}_m and V^{(j)} of the global recursion."""

    def __init__(self, coeffs: CoefficientTable | None = None):
        self.coeffs = coeffs or CoefficientTable()
        self._S: dict = {}
        self._W: dict = {}

    def S(self, j: int) -> Poly:
        if j in self._S:
            return self._S[j]
        if j == 1:
            out = superop_L_word(V_WORD)
        else:
            out = superop_L_word(commutator(self.S(j - 1), VD_WORD))
            for i in range(1, (j - 1) // 2 + 1):
                out = add(out, superop_L_word(self.W(j - 1, 2 * i)), scale=[1, self.coeffs.a(2 * i)])
        self._S[j] = out
        return out

    def W(self, k: int, m: int) -> Poly:
        """Sum over compositions j_1 + ... + j_m = k of [S_j1, [..., [S_jm, V_od]]]."""
        key = (k, m)
        if key in self._W:
            return self._W[key]
        if m == 0:
            out = dict(VOD_WORD) if k == 0 else {}
        else:
            out = {}
            for j1 in range(1, k - m + 2):
                inner = self.W(k - j1, m - 1)
                if inner:
                    out = add(out, commutator(self.S(j1), inner))
        self._W[key] = out
        return out

    def V(self, j: int) -> Poly:
        """V^{(j)}; V^{(0)} = V."""
        if j == 0:
            return dict(V_WORD)
        out = {}
        for i in range(1, (j + 1) // 2 + 1):
            out = add(out, self.W(j, 2 * i - 1), scale=[1, self.coeffs.b(2 * i - 1)])
        return out

    def effective(self, j: int) -> Poly:
        """Order-j effective term P0 V^{(j-1)} P0 as words starting and ending with P."""
        return mul(mul(P_WORD, self.V(j - 1)), P_WORD)


@lru_cache(maxsize=None)
def effective_words(j: int) -> tuple:
    return tuple(sorted(WordSeries().effective(j).items()))


def block_weight(block: int, n: int) -> float:
    if block == P_BLOCK:
        return 1.0 if n == 0 else 0.0
    return float(n) ** (-block) if n >= 1 else 0.0


def word_history_weight(words, hist: Sequence[int]) -> float:
    total = 0.0
    for w, c in words:
        prod = float(c)
        for b, n in zip(w[1:-1], hist):
            prod *= block_weight(b, n)
            if prod == 0.0:
                break
        total += prod
    return total


def gamma_decomposition(j: int) -> dict:
    """Coefficients of Gamma(q_1..q_{j-1}) in the order-j effective term.

    Interior blocks map as P -> g_0 and Q^k -> g_k - g_{-k}.
    """
    out: dict = {}
    for w, c in effective_words(j):
        options = []
        for b in w[1:-1]:
            if b == P_BLOCK:
                options.append([((0,), 1)])
            elif b == 0:
                raise ValueError("bare Q0 block has no Gamma representation")
            else:
                options.append([((b,), 1), ((-b,), -1)])
        acc = [((), Fraction(c))]
        for opt in options:
            acc = [(q + qq, cc * s) for q, cc in acc for qq, s in opt]
        for q, cc in acc:
            out[q] = out.get(q, 0) + cc
    return {q: c for q, c in out.items() if c != 0}


def gamma_weight(q: Sequence[int], hist: Sequence[int], delta_tilde: float) -> float:
    w = 1.0
    for qi, n in zip(q, hist):
        w *= g_weight(qi, n, delta_tilde)
        if w == 0.0:
            break
    return w


# ----------------------------------------------------------------- series
@dataclass
class SwGlobalSeries:
    """Order-indexed P0-restricted terms (code basis) plus optional generators."""

    order: int
    terms: dict  # j -> csr code-basis matrix of P0 V^{(j-1)} P0
    code_dim: int
    delta_tilde: float | None = None
    generators: list | None = None  # S_j in the frame basis (dense)
    frame: object = None
    histories: HistoryTable | None = None
    meta: dict = field(default_factory=dict)

    def term(self, j: int) -> sp.csr_array:
        return self.terms[j]

    def manifest(self) -> str:
        """JSON manifest: per order, label, Hilbert-Schmidt norm and nonzero count."""
        rows = []
        for j in sorted(self.terms):
            t = self.terms[j]
            rows.append(
                {
                    "order": j,
                    "label": f"P0 V^({j - 1}) P0",
                    "hs_norm": float(np.sqrt(np.sum(np.abs(t.data) ** 2))) if t.nnz else 0.0,
                    "nnz": int(t.nnz),
                }
            )
        return json.dumps({"order": self.order, "terms": rows}, sort_keys=True)


def history_series(g: GadgetHamiltonian, n: int, columns=None, chunk: int = 256) -> HistoryTable:
    return g.frame.histories(n, columns, chunk)


def effective_terms_from_histories(table: HistoryTable, n: int) -> dict:
    terms = {}
    for j in range(1, n + 1):
        words = effective_words(j)
        terms[j] = table.combine(j, lambda h, words=words: word_history_weight(words, h))
    return terms


def compute_generators(g: GadgetHamiltonian, n: int, coeffs: CoefficientTable | None = None, dense: bool | None = None) -> SwGlobalSeries:
    """Global SW series to order n.

    Small registers use the dense recursion (generators available); larger
    ones use history propagation (effective terms only).
    """
    if n < 0 or n > MAX_ORDER:
        raise ResourceError(f"order {n} outside the supported range 0..{MAX_ORDER}")
    coeffs = coeffs or CoefficientTable()
    total = g.model.site_register.total_dim
    dense = total <= 2**10 if dense is None else dense
    if dense:
        return _dense_series(g, n, coeffs)
    table = history_series(g, max(n, 1))
    terms = effective_terms_from_histories(table, n)
    return SwGlobalSeries(n, terms, table.dim, histories=table)


def superop_L_dense(x: np.ndarray, h0: np.ndarray) -> np.ndarray:
    """L(X) in a basis where H0 = diag(h0)."""
    ground = h0 == 0
    inv = np.where(ground, 0.0, 1.0 / np.where(ground, 1.0, h0))
    gmask = ground.astype(float)
    return inv[:, None] * x * gmask[None, :] - gmask[:, None] * x * inv[None, :]


def superop_L(x: SparseOperator, g: GadgetHamiltonian) -> SparseOperator:
    """L(X) = (Q0/H0) X P0 - P0 X (Q0/H0) for operators on small registers."""
    fr = g.frame.dense
    xf = fr.unitary @ x.to_dense() @ fr.unitary.conj().T
    y = superop_L_dense(xf, fr.h0)
    return SparseOperator.from_dense(g.register, fr.to_computational(y))


def _dense_series(g: GadgetHamiltonian, n: int, coeffs: CoefficientTable) -> SwGlobalSeries:
    fr = g.frame.dense
    h0 = fr.h0
    v = fr.V
    ground = h0 == 0
    dmask = np.equal.outer(ground, ground)
    vd = np.where(dmask, v, 0)
    vod = v - vd
    S: dict = {}
    W: dict = {}

    def comm(a, b):
        return a @ b - b @ a

    def Wf(k, m):
        if (k, m) in W:
            return W[(k, m)]
        if m == 0:
            r = vod if k == 0 else np.zeros_like(v)
        else:
            r = np.zeros_like(v)
            for j1 in range(1, k - m + 2):
                if j1 in S:
                    r = r + comm(S[j1], Wf(k - j1, m - 1))
        W[(k, m)] = r
        return r

    if n >= 1:
        S[1] = superop_L_dense(v, h0)
    for j in range(2, n + 1):
        sj = superop_L_dense(comm(S[j - 1], vd), h0)
        for i in range(1, (j - 1) // 2 + 1):
            sj = sj + float(coeffs.a(2 * i)) * superop_L_dense(Wf(j - 1, 2 * i), h0)
        S[j] = sj
    terms = {}
    for j in range(1, n + 1):
        if j == 1:
            vj = v
        else:
            vj = np.zeros_like(v)
            for i in range(1, j // 2 + 1):
                vj = vj + float(coeffs.b(2 * i - 1)) * Wf(j - 1, 2 * i - 1)
        terms[j] = sp.csr_array(fr.code_block(vj))
    code_dim = int(ground.sum())
    return SwGlobalSeries(n, terms, code_dim, generators=[S[j] for j in range(1, n + 1)], frame=fr)


def effective_hamiltonian_global(series: SwGlobalSeries, epsilon: float, upto: int | None = None) -> sp.csr_array:
    """sum_{j<=n} eps^j P0 V^{(j-1)} P0 in the code basis (P0 H0 P0 = 0)."""
    n = series.order if upto is None else upto
    out = sp.csr_array((series.code_dim, series.code_dim), dtype=complex)
    for j in range(1, n + 1):
        out = out + (epsilon**j) * series.terms[j]
    return out


def generator_total(series: SwGlobalSeries, epsilon: float) -> np.ndarray:
    if series.generators is None:
        raise ValueError("generators are only available from the dense recursion")
    return sum((epsilon ** (j + 1)) * s for j, s in enumerate(series.generators))


def offdiagonal_norm_global(series: SwGlobalSeries, epsilon: float) -> float:
    """|| P0 e^S H e^-S Q0 || with S = sum_j eps^j S_j (frame basis, dense)."""
    fr = series.frame
    s = generator_total(series, epsilon)
    h = np.diag(fr.h0).astype(complex) + epsilon * fr.V
    u = sla.expm(s)
    rot = u @ h @ u.conj().T
    ground = fr.ground
    block = rot[np.ix_(ground, ~ground)]
    return float(np.linalg.norm(block, 2)) if block.size else 0.0


def generator_residuals(series: SwGlobalSeries) -> dict:
    """Max anti-Hermiticity and block-diagonal residuals over the generators."""
    ground = series.frame.ground
    dmask = np.equal.outer(ground, ground)
    anti = max(float(np.abs(s + s.conj().T).max()) for s in series.generators)
    diag = max(float(np.abs(np.where(dmask, s, 0)).max()) for s in series.generators)
    return {"anti_hermitian": anti, "block_diagonal": diag}


# ----------------------------------------------------------------- Gamma forms
def gamma_terms_from_histories(table: HistoryTable, j: int, delta_tilde: float) -> sp.csr_array:
    """Order-j effective term rebuilt as sum_q c_q Gamma(q) with g_q at the given delta."""
    decomposition = gamma_decomposition(j)

    def weight(h):
        return sum(float(c) * gamma_weight(q, h, delta_tilde) for q, c in decomposition.items())

    return table.combine(j, weight)


def effective_via_gamma(table: HistoryTable, n: int, delta_tilde: float, epsilon: float) -> sp.csr_array:
    out = sp.csr_array((table.dim, table.dim), dtype=complex)
    for j in range(1, n + 1):
        out = out + (epsilon**j) * gamma_terms_from_histories(table, j, delta_tilde)
    return out


def all_ones_coefficient(j: int) -> Fraction:
    return gamma_decomposition(j).get((1,) * (j - 1), Fraction(0))


def restricted_terms(table: HistoryTable, n: int, delta_tilde: float) -> dict:
    """Per order j, c_j Gamma(1,...,1) built with g~ = dt P0 + Q0/H0."""
    out = {}
    for j in range(1, n + 1):
        c = float(all_ones_coefficient(j))
        out[j] = table.combine(j, lambda h, c=c: c * gamma_weight((1,) * len(h), h, delta_tilde))
    return out


def restricted_effective(g: GadgetHamiltonian, n: int, delta_tilde: float, epsilon: float, table: HistoryTable | None = None) -> sp.csr_array:
    table = table or history_series(g, max(n, 1))
    terms = restricted_terms(table, n, delta_tilde)
    out = sp.csr_array((table.dim, table.dim), dtype=complex)
    for j in range(1, n + 1):
        out = out + (epsilon**j) * terms[j]
    return out


def self_energy_terms(table: HistoryTable, n: int) -> dict:
    """P0 V (-Q0/H0 V)^{j-1} P0 per order j."""
    def weight(h):
        w = 1.0
        for x in h:
            if x == 0:
                return 0.0
            w *= -1.0 / x
        return w

    return {j: table.combine(j, weight) for j in range(1, n + 1)}


def self_energy_expansion(g: GadgetHamiltonian, n: int, epsilon: float, table: HistoryTable | None = None) -> sp.csr_array:
    table = table or history_series(g, max(n, 1))
    terms = self_energy_terms(table, n)
    out = sp.csr_array((table.dim, table.dim), dtype=complex)
    for j in range(1, n + 1):
        out = out + (epsilon**j) * terms[j]
    return out


@dataclass
class DeltaTildeReport:
    deltas: list
    full_max_diff: float
    restricted_max_diff: float

    def passed(self, full_tol: float = 1e-9, split_tol: float = 1e-6) -> bool:
        return self.full_max_diff < full_tol and self.restricted_max_diff > split_tol


def _max_abs(x) -> float:
    x = sp.csr_array(x)
    return float(np.abs(x.data).max()) if x.nnz else 0.0


def verify_delta_tilde_independence(g: GadgetHamiltonian, n: int, deltas: Sequence[float], epsilon: float, table: HistoryTable | None = None) -> DeltaTildeReport:
    if len(set(deltas)) < 2:
        raise ValueError("at least two distinct delta values are required")
    table = table or history_series(g, max(n, 1))
    full = [effective_via_gamma(table, n, dt, epsilon) for dt in deltas]
    restr = [restricted_effective(g, n, dt, epsilon, table) for dt in deltas]
    fdiff = max(_max_abs(full[0] - f) for f in full[1:])
    rdiff = min(_max_abs(restr[0] - r) for r in restr[1:]) if n >= 2 else max(_max_abs(restr[0] - r) for r in restr[1:])
    return DeltaTildeReport(list(deltas), fdiff, rdiff)


# ----------------------------------------------------------------- linked cluster
@dataclass
class LinkedClusterReport:
    largest_support: dict  # order -> max number of sites in a component
    disconnected_norm: dict  # order -> largest norm of a component outside allowed regions

    def passed(self, tol: float = 1e-11) -> bool:
        return all(v < tol for v in self.disconnected_norm.values())


def verify_linked_cluster(series: SwGlobalSeries, g: GadgetHamiltonian, n: int | None = None, tol: float = 1e-13) -> LinkedClusterReport:
    """Site-region decomposition of each order in the code basis.

    A component is allowed at order j iff its sites are covered by a connected
    edge region with at most j edges.
    """
    from .lattice import enumerate_connected_regions

    n = series.order if n is None else n
    reg = g.model.code_register
    graph = g.model.graph
    regions = enumerate_connected_regions(graph, n)
    largest, bad = {}, {}
    for j in range(1, n + 1):
        allowed = [r.sites for r in regions if r.num_edges <= j]
        op = SparseOperator(reg, tuple(range(reg.num_qudits)), series.terms[j])
        comps = local_decompose(op)
        big, worst = 0, 0.0
        for key, comp in comps.items():
            nrm = float(np.sqrt(np.sum(np.abs(comp.local.data) ** 2))) if comp.local.nnz else 0.0
            if nrm < tol:
                continue
            big = max(big, len(key))
            if key and not any(key <= a for a in allowed):
                worst = max(worst, comp.norm())
        largest[j] = big
        bad[j] = worst
    return LinkedClusterReport(largest, bad)


# ----------------------------------------------------------------- spectra
def cluster_levels(vals: np.ndarray, threshold: float) -> list:
    out, cur = [], [0]
    for i in range(1, vals.size):
        if vals[i] - vals[i - 1] < threshold:
            cur.append(i)
        else:
            out.append(cur)
            cur = [i]
    out.append(cur)
    return out


def gap_threshold(h_scale: float, epsilon: float, n_star: int) -> float:
    """Distinctness threshold: below the order-n_star scale, above rounding."""
    return max(1e-6 * epsilon**n_star, 100 * np.finfo(float).eps * h_scale)


@dataclass
class SpectrumSummary:
    eigenvalues: np.ndarray
    ground_basis: sp.csc_array
    gap: float
    threshold: float


def low_spectrum(h, threshold: float) -> SpectrumSummary:
    """Ground space and gap of a Hermitian code-basis matrix (block eigensolver)."""
    h = sp.csr_array(h)
    shift = float(np.mean(h.diagonal().real)) if h.shape[0] else 0.0
    vals, vecs = block_eigh(h - shift * sp.eye_array(h.shape[0], format="csr"))
    levels = cluster_levels(vals, threshold)
    gap = float(vals[levels[1][0]] - vals[levels[0][-1]]) if len(levels) > 1 else float("nan")
    return SpectrumSummary(vals + shift, sp.csc_array(vecs)[:, levels[0]], gap, threshold)


def verify_parent_property(
    table: HistoryTable,
    n_star: int,
    epsilons: Sequence[float],
    reference,
    epsilon_space: float | None = None,
    delta_tilde: float | None = None,
    dist_tol: float = 1e-8,
    slope_tol: float = 0.15,
) -> "Report":
    """Parent-property checks for H_eff^<n_star> on the code space.

    (a) ground space equals span(reference) at ``epsilon_space``;
    (b) log-log slope of the gap over ``epsilons`` is n_star within ``slope_tol``;
    (c) each restricted order-j term is minimized by the reference space.
    """
    from .report import loglog_slope

    rep = Report("parent-property")
    terms = effective_terms_from_histories(table, n_star)
    eps_a = max(epsilons) if epsilon_space is None else epsilon_space

    def heff(eps):
        return sum((eps**j) * terms[j] for j in range(1, n_star + 1))

    h = heff(eps_a)
    spec = low_spectrum(h, gap_threshold(_max_abs(h), eps_a, n_star))
    dist = subspace_distance(spec.ground_basis, reference)
    rep.add("ground space equals reference", dist, dist_tol, "<", f"eps={eps_a}, dim={spec.ground_basis.shape[1]}")
    gaps, dists = [], []
    for eps in epsilons:
        h = heff(eps)
        s = low_spectrum(h, gap_threshold(_max_abs(h), eps, n_star))
        gaps.append(s.gap)
        dists.append(subspace_distance(s.ground_basis, reference))
    slope, r2 = loglog_slope(epsilons, gaps)
    rep.add("gap slope deviation", abs(slope - n_star), slope_tol, "<=", f"slope={slope:.6g}")
    dt = float(delta_tilde) if delta_tilde is not None else None
    if dt is not None:
        ref = reference.toarray() if sp.issparse(reference) else np.asarray(reference)
        worst = 0.0
        for j, t in restricted_terms(table, n_star, dt).items():
            vals, _ = block_eigh(t)
            lam = float(vals[0])
            resid = np.linalg.norm(t @ ref - lam * ref, 2) / max(_max_abs(t), 1e-300)
            worst = max(worst, float(resid))
        rep.add("restricted terms frustration-free", worst, 1e-8, "<", f"delta_tilde={dt}")
    rep.data = {
        "epsilons": list(epsilons),
        "gaps": gaps,
        "slope": slope,
        "r_squared": r2,
        "distances": dists,
        "epsilon_space": eps_a,
        "ground_dim": int(spec.ground_basis.shape[1]),
        "reference_dim": int(reference.shape[1]),
    }
    return rep
