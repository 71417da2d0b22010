"""Local Schrieffer-Wolff expansion built from region decompositions.

Everything is evaluated in the dense per-site frame where H0 and every P_s
are diagonal, so regional resolvents Q_R/H_R become elementwise masks.
Region decompositions are taken in the computational basis (generalized
Pauli components grouped by site).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .gadget import GadgetHamiltonian
from .operators import SparseOperator, kron_embed, local_decompose, spectral_norm
from .peps import ResourceError
from .report import Report, dumps, loglog_slope

LOCAL_DENSE_LIMIT = 2**12


@dataclass
class RegionMasks:
    """Frame-diagonal data of P_R and Q_R/H_R."""

    ground: np.ndarray  # P_R diagonal (0/1)
    inverse: np.ndarray  # Q_R/H_R diagonal


@dataclass
class SwLocalSeries:
    order: int
    generators: dict  # q -> T_q (frame basis, dense)
    vloc: dict  # j -> V^(j)_loc (frame basis, dense)
    components: dict  # j -> {region: V^(j)_{R,loc} in frame basis}
    blocks: dict  # j -> sum_R (P_R V^(j-1)_R P_R + Q_R V^(j-1)_R Q_R)
    g: GadgetHamiltonian = field(repr=False)
    frame: object = field(repr=False)

    @property
    def num_sites(self) -> int:
        return self.g.num_sites

    def computational(self, x: np.ndarray) -> np.ndarray:
        return self.frame.to_computational(x)

    def generator_total(self, epsilon: float) -> np.ndarray:
        out = np.zeros_like(self.frame.V)
        for q, t in self.generators.items():
            out = out + (epsilon**q) * t
        return out


def _site_digits(g: GadgetHamiltonian) -> np.ndarray:
    reg = g.model.site_register
    configs = np.arange(reg.total_dim, dtype=np.int64)
    return reg.digits(configs, range(g.num_sites))


def _region_masks(excited: np.ndarray, region) -> RegionMasks:
    count = excited[:, sorted(region)].sum(axis=1) if region else np.zeros(excited.shape[0], dtype=int)
    ground = (count == 0).astype(float)
    inverse = np.where(count > 0, 1.0 / np.maximum(count, 1), 0.0)
    return RegionMasks(ground, inverse)


def _decompose(x_frame: np.ndarray, frame, g: GadgetHamiltonian, tol: float = 0.0, embed: bool = True) -> dict:
    """Region components of a frame-basis operator.

    With ``embed`` the components are returned as full frame-basis matrices;
    otherwise as computational-basis SparseOperators on their support.
    """
    comp = frame.to_computational(x_frame)
    reg = g.model.site_register
    op = SparseOperator(reg, tuple(range(reg.num_qudits)), sp.csr_array(comp))
    parts = local_decompose(op)
    out = {}
    for key, part in parts.items():
        if tol and (part.local.nnz == 0 or np.abs(part.local.data).max() <= tol):
            continue
        if not embed:
            out[key] = part
            continue
        u = sp.csr_array(np.ones((1, 1)))
        for s in part.support:
            u = sp.kron(u, g.frame.frames[s], format="csr")
        local = u @ part.local @ u.conj().T
        out[key] = kron_embed(local, part.support, reg).to_csr().toarray() if part.support else complex(part.local.toarray()[0, 0]) * np.eye(reg.total_dim)
    return out


def _nested(ts: dict, x: np.ndarray, total: int, n: int, h0: np.ndarray | None) -> np.ndarray:
    """sum_q 1/q! sum_{j_1+..+j_q=total, 1<=j_i<=n} [T_j1,[..,[T_jq, X]]] (q >= 2 when X = H0)."""

    def comm(a, b):
        return a @ b - b @ a

    # level[q][k]: sum over compositions of k into q parts
    if h0 is not None:
        level = {k: ts[k] * (h0[None, :] - h0[:, None]) for k in ts}  # [T_k, H0]
        min_q = 2
    else:
        level = {k: comm(ts[k], x) for k in ts}
        min_q = 1
    out = np.zeros_like(x if h0 is None else next(iter(ts.values())))
    fact = 1.0
    q = 1
    while level:
        if q >= min_q and total in level:
            out = out + level[total] / fact
        nxt = {}
        for k, m in level.items():
            for i in ts:
                if k + i <= total:
                    nxt[k + i] = nxt.get(k + i, 0) + comm(ts[i], m)
        level = nxt
        q += 1
        fact *= q
    return out


def compute_local_series(g: GadgetHamiltonian, n: int, j_max: int | None = None, drop: float = 1e-15) -> SwLocalSeries:
    """T_1..T_n and V^(0)..V^(J) with J = max(n, j_max - 1)."""
    if n < 1:
        raise ValueError("order n must be >= 1")
    total = g.model.site_register.total_dim
    if total > LOCAL_DENSE_LIMIT:
        raise ResourceError(f"local series limited to {LOCAL_DENSE_LIMIT} dimensions (got {total})")
    frame = g.frame.dense
    h0 = frame.h0
    # frame digit >= d marks an excited site
    frame_excited = _site_digits(g) >= g.model.d
    cache: dict = {}

    def masks(region):
        if region not in cache:
            cache[region] = _region_masks(frame_excited, region)
        return cache[region]

    last = max(n, (j_max or n + 1) - 1)
    vloc = {0: frame.V}
    generators, components, blocks = {}, {}, {}
    for j in range(1, last + 1):
        if j <= n:
            comps = _decompose(vloc[j - 1], frame, g, drop)
            components[j - 1] = comps
            t = np.zeros_like(frame.V)
            b = np.zeros_like(frame.V)
            for region, vr in comps.items():
                mk = masks(region)
                a = mk.inverse[:, None] * vr * mk.ground[None, :]
                t = t + a - a.conj().T
                qg = 1.0 - mk.ground
                b = b + vr * np.outer(mk.ground, mk.ground) + vr * np.outer(qg, qg)
            generators[j] = t
            blocks[j] = b
        ts = {q: generators[q] for q in generators if q <= min(j, n)}
        vloc[j] = _nested(ts, None, j + 1, n, h0) + _nested(ts, frame.V, j, n, None)
    return SwLocalSeries(n, generators, vloc, components, blocks, g, frame)


def local_hamiltonian(series: SwLocalSeries, epsilon: float) -> np.ndarray:
    """H_loc^<n> in the frame basis."""
    out = np.diag(series.frame.h0).astype(complex)
    for j in range(1, series.order + 1):
        out = out + (epsilon**j) * series.blocks[j]
    return out


def garbage_operator(series: SwLocalSeries, epsilon: float, j_max: int) -> np.ndarray:
    """sum_{j=n+1}^{j_max} eps^j V^(j-1)_loc (frame basis)."""
    if j_max <= series.order:
        raise ValueError("j_max must exceed the order")
    missing = [j for j in range(series.order + 1, j_max + 1) if (j - 1) not in series.vloc]
    if missing:
        raise ValueError(f"series lacks V^(j-1) for j in {missing}; recompute with j_max={j_max}")
    out = np.zeros_like(series.frame.V)
    for j in range(series.order + 1, j_max + 1):
        out = out + (epsilon**j) * series.vloc[j - 1]
    return out


def rotated_hamiltonian(series: SwLocalSeries, epsilon: float) -> np.ndarray:
    """e^T H e^{-T} in the frame basis."""
    fr = series.frame
    h = np.diag(fr.h0).astype(complex) + epsilon * fr.V
    u = sla.expm(series.generator_total(epsilon))
    return u @ h @ u.conj().T


def effective_hamiltonian_local(series: SwLocalSeries, epsilon: float, plus: bool = False) -> np.ndarray:
    """P0 H_loc^<n> P0 in the code basis; ``plus`` gives P0 e^T H e^{-T} P0 (garbage included)."""
    h = rotated_hamiltonian(series, epsilon) if plus else local_hamiltonian(series, epsilon)
    return series.frame.code_block(h)


def truncation_residual(series: SwLocalSeries, epsilon: float, j_max: int) -> float:
    """|| e^T H e^{-T} - H_loc - sum_{j=n+1}^{j_max} eps^j V^(j-1) ||."""
    r = rotated_hamiltonian(series, epsilon) - local_hamiltonian(series, epsilon) - garbage_operator(series, epsilon, j_max)
    return float(np.linalg.norm(r, 2))


def offdiagonal_residual(series: SwLocalSeries, epsilon: float) -> float:
    """|| P0 e^T H e^{-T} Q0 + Q0 e^T H e^{-T} P0 ||."""
    if epsilon == 0:
        return 0.0
    r = rotated_hamiltonian(series, epsilon)
    ground = series.frame.ground
    mask = np.logical_xor(ground[:, None], ground[None, :])
    return float(np.linalg.norm(np.where(mask, r, 0), 2))


@dataclass
class GarbageReport:
    order: int
    j_max: int
    epsilons: list
    norms: list
    max_norms: list
    residuals: list
    slope: float
    r_squared: float
    residual_slope: float
    c_fit: float
    alpha: float
    beta: float
    strength: dict

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "j_max": self.j_max,
            "epsilons": self.epsilons,
            "norms": self.norms,
            "max_norms": self.max_norms,
            "offdiag_residuals": self.residuals,
            "slope": self.slope,
            "r_squared": self.r_squared,
            "residual_slope": self.residual_slope,
            "c": self.c_fit,
            "alpha": self.alpha,
            "beta": self.beta,
            "strength": {str(k): v for k, v in self.strength.items()},
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def strength_norms(series: SwLocalSeries) -> dict:
    """||V^(j)_loc||_max = max_s || sum_{R containing s} V^(j)_R || per available j."""
    out = {}
    for j in sorted(series.vloc):
        comps = series.components.get(j)
        if comps is None:
            comps = _decompose(series.vloc[j], series.frame, series.g, 1e-15)
        best = 0.0
        for s in range(series.num_sites):
            tot = sum((m for key, m in comps.items() if s in key), np.zeros_like(series.frame.V))
            best = max(best, float(np.linalg.norm(tot, 2)))
        out[j] = best
    return out


def garbage_norm(series: SwLocalSeries, epsilons: Sequence[float], j_max: int) -> GarbageReport:
    norms, maxn, resid = [], [], []
    n_sites = series.num_sites
    for eps in epsilons:
        gop = garbage_operator(series, eps, j_max)
        norms.append(float(np.linalg.norm(gop, 2)))
        maxn.append(float(np.abs(gop).max()))
        resid.append(offdiagonal_residual(series, eps))
    slope, r2 = loglog_slope(epsilons, norms)
    rslope, _ = loglog_slope(epsilons, resid)
    c = max(nm / (n_sites * e ** (series.order + 1)) for nm, e in zip(norms, epsilons))
    strength = strength_norms(series)
    js = [j for j in sorted(strength) if strength[j] > 0]
    alpha = beta = float("nan")
    if len(js) >= 2:
        a, b = np.polyfit(js, np.log([strength[j] for j in js]), 1)
        alpha = float(np.exp(b))
        beta = float(series.order**2 / np.exp(a))
    return GarbageReport(series.order, j_max, list(map(float, epsilons)), norms, maxn, resid, slope, r2, rslope, c, alpha, beta, strength)


# ----------------------------------------------------------------- locality
def locality_profile(series: SwLocalSeries) -> dict:
    """Per operator, the largest component norm on regions beyond the expected size."""
    out = {}
    ops = [(f"T_{q}", t, q + 1) for q, t in series.generators.items()]
    ops += [(f"V_{j}", v, j + 2) for j, v in series.vloc.items() if j > 0]
    for name, x, size in ops:
        comps = _decompose(x, series.frame, series.g, embed=False)
        worst, biggest = 0.0, 0
        for key, part in comps.items():
            biggest = max(biggest, len(key))
            if len(key) > size:
                worst = max(worst, spectral_norm(part.local))
        out[name] = {"limit": size, "excess_norm": worst, "largest_region": biggest}
    return out


def verify_locality(series: SwLocalSeries, tol: float = 1e-11, q_max: int = 4) -> Report:
    rep = Report("local-sw-locality")
    prof = locality_profile(series)
    n_sites = series.num_sites
    for name, info in prof.items():
        k = int(name.split("_")[1])
        if k > q_max:
            continue
        vacuous = info["limit"] >= n_sites
        rep.add(f"{name} is {info['limit']}-local", info["excess_norm"], tol, "<", "vacuous on this lattice" if vacuous else "")
    rep.data = prof
    return rep


def anti_hermiticity(series: SwLocalSeries) -> float:
    return max((float(np.abs(t + t.conj().T).max()) for t in series.generators.values()), default=0.0)


# ----------------------------------------------------------------- global vs local
def compare_spectra(first, second, epsilons: Sequence[float], order: int, title: str = "global-local") -> Report:
    """Sorted-spectrum deviation of two eps-dependent Hermitian matrices.

    ``first`` and ``second`` map eps to a dense matrix.  Passes when the
    deviation slope is at least order + 0.8, or when every deviation sits at
    the rounding floor (exact agreement).
    """
    rep = Report(title)
    devs, scales = [], []
    for eps in epsilons:
        a = first(eps)
        b = second(eps)
        ea = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
        eb = np.linalg.eigvalsh(0.5 * (b + b.conj().T))
        devs.append(float(np.abs(ea - eb).max()))
        scales.append(float(max(np.abs(ea).max(), np.abs(eb).max(), 1e-300)))
    floor = 100 * np.finfo(float).eps * max(scales)
    if max(devs) <= floor:
        # agreement at the rounding floor satisfies any eps^(n+1) bound
        slope, r2 = loglog_slope(epsilons, devs) if min(devs) > 0 else (float("nan"), float("nan"))
        rep.add("spectral deviation at rounding floor", max(devs), floor, "<=", "exact agreement")
    else:
        slope, r2 = loglog_slope(epsilons, devs)
        rep.add("spectral deviation slope", slope, order + 0.8, ">=")
    rep.data = {"epsilons": list(map(float, epsilons)), "deviations": devs, "slope": slope, "r_squared": r2, "order": order, "floor": floor}
    return rep


def global_effective_dense(global_terms: dict, order: int, epsilon: float) -> np.ndarray:
    return sum((epsilon**j) * sp.csr_array(global_terms[j]).toarray() for j in range(1, order + 1))


def compare_global_local(global_terms: dict, series: SwLocalSeries, epsilons: Sequence[float]) -> Report:
    """Sorted spectra of the order-n global and local effective Hamiltonians on P0."""
    n = series.order
    return compare_spectra(
        lambda e: global_effective_dense(global_terms, n, e),
        lambda e: effective_hamiltonian_local(series, e),
        epsilons,
        n,
    )
