"""Sparse complex operators and states on qudit registers.

Basis ordering: configuration index = sum_k c_k * prod_{j>k} d_j, i.e. the
first qudit is the most significant digit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 2**14


class ShapeError(ValueError):
    """Dimension or register mismatch."""


class DegenerateInputError(ValueError):
    """Linearly dependent input states."""


class ConvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap."""


# ----------------------------------------------------------------- register
@dataclass(frozen=True)
class QuditRegister:
    local_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.local_dims)
        if any(d < 1 for d in dims):
            raise ShapeError("local dimensions must be positive")
        object.__setattr__(self, "local_dims", dims)

    @classmethod
    def qubits(cls, n: int) -> "QuditRegister":
        return cls((2,) * n)

    @property
    def num_qudits(self) -> int:
        return len(self.local_dims)

    @cached_property
    def total_dim(self) -> int:
        return int(np.prod(self.local_dims, dtype=object))

    @cached_property
    def strides(self) -> tuple:
        out, acc = [], 1
        for d in reversed(self.local_dims):
            out.append(acc)
            acc *= d
        return tuple(reversed(out))

    def sub_dim(self, qudits: Sequence[int]) -> int:
        return int(np.prod([self.local_dims[q] for q in qudits], dtype=np.int64))

    def digits(self, configs: np.ndarray, qudits: Sequence[int]) -> np.ndarray:
        configs = np.asarray(configs, dtype=np.int64)
        out = np.empty((configs.size, len(qudits)), dtype=np.int64)
        for j, q in enumerate(qudits):
            out[:, j] = (configs // self.strides[q]) % self.local_dims[q]
        return out

    def index(self, digits: Sequence[int]) -> int:
        if len(digits) != self.num_qudits:
            raise ShapeError("digit vector length does not match register")
        return int(sum(int(c) * s for c, s in zip(digits, self.strides)))

    def local_index(self, configs: np.ndarray, qudits: Sequence[int]) -> np.ndarray:
        """Index of the sub-configuration on ``qudits`` (first listed most significant)."""
        configs = np.asarray(configs, dtype=np.int64)
        out = np.zeros(configs.size, dtype=np.int64)
        for q in qudits:
            out = out * self.local_dims[q] + (configs // self.strides[q]) % self.local_dims[q]
        return out

    def contribution_table(self, qudits: Sequence[int]) -> np.ndarray:
        """Global index offset of every local configuration on ``qudits``."""
        dims = [self.local_dims[q] for q in qudits]
        table = np.zeros(1, dtype=np.int64)
        for q, d in zip(qudits, dims):
            table = (table[:, None] + np.arange(d, dtype=np.int64)[None, :] * self.strides[q]).ravel()
        return table


def coalesce(keys: np.ndarray, amps: np.ndarray, tol: float = 0.0):
    """Sum amplitudes of equal keys; drop entries with max |amp| <= tol."""
    if keys.size == 0:
        return keys.astype(np.int64), amps
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    amps = amps[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(keys)) + 1))
    keys = keys[starts]
    amps = np.add.reduceat(amps, starts, axis=0)
    mag = np.abs(amps) if amps.ndim == 1 else np.abs(amps).max(axis=1)
    keep = mag > tol
    return keys[keep], amps[keep]


# ----------------------------------------------------------------- states
@dataclass(frozen=True)
class SparseState:
    """Vector stored as sorted unique configuration indices and amplitudes."""

    register: QuditRegister
    configs: np.ndarray
    amps: np.ndarray

    @classmethod
    def from_arrays(cls, register, configs, amps, tol: float = 0.0) -> "SparseState":
        c, a = coalesce(np.asarray(configs, dtype=np.int64), np.asarray(amps, dtype=complex), tol)
        return cls(register, c, a)

    @classmethod
    def from_dict(cls, register: QuditRegister, amplitudes: Mapping[int, complex]) -> "SparseState":
        keys = np.fromiter(amplitudes.keys(), dtype=np.int64, count=len(amplitudes))
        vals = np.fromiter(amplitudes.values(), dtype=complex, count=len(amplitudes))
        return cls.from_arrays(register, keys, vals)

    @classmethod
    def from_dense(cls, register: QuditRegister, vec: np.ndarray, tol: float = 0.0) -> "SparseState":
        vec = np.asarray(vec, dtype=complex).ravel()
        if vec.size != register.total_dim:
            raise ShapeError("dense vector size does not match register")
        idx = np.flatnonzero(np.abs(vec) > tol)
        return cls(register, idx.astype(np.int64), vec[idx])

    @classmethod
    def basis(cls, register: QuditRegister, config: int) -> "SparseState":
        return cls(register, np.array([config], dtype=np.int64), np.array([1.0 + 0j]))

    @classmethod
    def zero(cls, register: QuditRegister) -> "SparseState":
        return cls(register, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex))

    def __len__(self) -> int:
        return int(self.configs.size)

    def as_dict(self) -> dict:
        return {int(c): complex(a) for c, a in zip(self.configs, self.amps)}

    def to_dense(self) -> np.ndarray:
        if self.register.total_dim > DENSE_LIMIT * 64:
            raise MemoryError("register too large for a dense vector")
        out = np.zeros(self.register.total_dim, dtype=complex)
        out[self.configs] = self.amps
        return out

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "SparseState":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero state")
        return SparseState(self.register, self.configs, self.amps / n)

    def vdot(self, other: "SparseState") -> complex:
        _check_register(self.register, other.register)
        _, i, j = np.intersect1d(self.configs, other.configs, assume_unique=True, return_indices=True)
        return complex(np.vdot(self.amps[i], other.amps[j]))

    def __add__(self, other: "SparseState") -> "SparseState":
        _check_register(self.register, other.register)
        return SparseState.from_arrays(
            self.register,
            np.concatenate([self.configs, other.configs]),
            np.concatenate([self.amps, other.amps]),
        )

    def __sub__(self, other: "SparseState") -> "SparseState":
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> "SparseState":
        return SparseState(self.register, self.configs, self.amps * scalar)

    __rmul__ = __mul__

    def prune(self, tol: float = 1e-15) -> "SparseState":
        keep = np.abs(self.amps) > tol
        return SparseState(self.register, self.configs[keep], self.amps[keep])


def _check_register(a: QuditRegister, b: QuditRegister):
    if a != b:
        raise ShapeError("register mismatch")


# ----------------------------------------------------------------- operators
def _permute_factors(mat: sp.sparray, dims: Sequence[int], perm: Sequence[int]) -> sp.csr_array:
    """Reorder tensor factors: new factor j is old factor perm[j]."""
    dims = list(dims)
    if list(perm) == list(range(len(dims))):
        return sp.csr_array(mat)
    coo = sp.coo_array(mat)
    old_strides = np.cumprod([1] + dims[::-1])[:-1][::-1]
    new_dims = [dims[p] for p in perm]
    new_strides = np.cumprod([1] + new_dims[::-1])[:-1][::-1]

    def remap(idx):
        out = np.zeros_like(idx, dtype=np.int64)
        for j, p in enumerate(perm):
            out += ((idx // old_strides[p]) % dims[p]) * new_strides[j]
        return out

    n = int(np.prod(dims))
    return sp.csr_array((coo.data, (remap(coo.row), remap(coo.col))), shape=(n, n))


def _expand(local: sp.sparray, register: QuditRegister, support: tuple, new_support: tuple) -> sp.csr_array:
    """Embed an operator on ``support`` into the (sorted) superset ``new_support``."""
    if support == new_support:
        return sp.csr_array(local)
    extra = tuple(q for q in new_support if q not in support)
    dextra = register.sub_dim(extra)
    mat = sp.kron(local, sp.identity(dextra, dtype=complex, format="csr"), format="csr")
    order = support + extra
    perm = [order.index(q) for q in new_support]
    return _permute_factors(mat, [register.local_dims[q] for q in order], perm)


class SparseOperator:
    """Operator stored as a sparse matrix on its support, identity elsewhere."""

    __slots__ = ("register", "support", "local", "_hermitian")

    def __init__(self, register: QuditRegister, support: Iterable[int], local, hermitian: bool | None = None):
        support = tuple(int(q) for q in support)
        if list(support) != sorted(set(support)):
            raise ShapeError("support must be sorted and unique")
        dim = register.sub_dim(support)
        local = sp.csr_array(local, dtype=complex)
        if local.shape != (dim, dim):
            raise ShapeError(f"local operator shape {local.shape} does not match support dimension {dim}")
        self.register = register
        self.support = support
        self.local = local
        self._hermitian = hermitian

    # -- constructors
    @classmethod
    def identity(cls, register: QuditRegister) -> "SparseOperator":
        return cls(register, (), sp.identity(1, dtype=complex, format="csr"), True)

    @classmethod
    def zero(cls, register: QuditRegister) -> "SparseOperator":
        return cls(register, (), sp.csr_array((1, 1), dtype=complex), True)

    @classmethod
    def from_dense(cls, register: QuditRegister, mat: np.ndarray) -> "SparseOperator":
        return cls(register, tuple(range(register.num_qudits)), sp.csr_array(np.asarray(mat, dtype=complex)))

    # -- structure
    @property
    def hermitian(self) -> bool:
        if self._hermitian is None:
            self._hermitian = self.is_hermitian()
        return self._hermitian

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self.local - self.local.conj().T
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= tol

    def on_support(self, support: Iterable[int]) -> sp.csr_array:
        support = tuple(sorted(set(support)))
        if not set(self.support) <= set(support):
            raise ShapeError("requested support does not contain the operator support")
        return _expand(self.local, self.register, self.support, support)

    def to_csr(self) -> sp.csr_array:
        if self.register.total_dim > 2**24:
            raise MemoryError("register too large for a full sparse matrix")
        return self.on_support(range(self.register.num_qudits))

    def to_dense(self) -> np.ndarray:
        if self.register.total_dim > DENSE_LIMIT:
            raise MemoryError("dense matrices are limited to 2^14 dimensions")
        return self.to_csr().toarray()

    def trim_support(self, tol: float = 1e-13) -> "SparseOperator":
        """Drop support qudits on which the operator acts as the identity."""
        support = list(self.support)
        local = self.local
        for q in list(support):
            dims = [self.register.local_dims[x] for x in support]
            k = support.index(q)
            reduced = _partial_trace(local, dims, k) / dims[k]
            rest = tuple(x for x in support if x != q)
            back = _expand(reduced, self.register, rest, tuple(support))
            diff = back - local
            if diff.nnz == 0 or np.abs(diff.data).max() <= tol:
                support, local = list(rest), reduced
        return SparseOperator(self.register, support, local, self._hermitian)

    # -- algebra
    def _binary(self, other: "SparseOperator"):
        _check_register(self.register, other.register)
        sup = tuple(sorted(set(self.support) | set(other.support)))
        return sup, self.on_support(sup), other.on_support(sup)

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        sup, a, b = self._binary(other)
        return SparseOperator(self.register, sup, a + b)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        sup, a, b = self._binary(other)
        return SparseOperator(self.register, sup, a - b)

    def __neg__(self) -> "SparseOperator":
        return SparseOperator(self.register, self.support, -self.local, self._hermitian)

    def __mul__(self, scalar) -> "SparseOperator":
        herm = self._hermitian if np.isreal(scalar) else None
        return SparseOperator(self.register, self.support, self.local * scalar, herm)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, SparseState):
            return self.apply(other)
        sup, a, b = self._binary(other)
        return SparseOperator(self.register, sup, a @ b)

    def adjoint(self) -> "SparseOperator":
        return SparseOperator(self.register, self.support, self.local.conj().T, self._hermitian)

    @property
    def H(self) -> "SparseOperator":
        return self.adjoint()

    def commutator(self, other: "SparseOperator") -> "SparseOperator":
        return self @ other - other @ self

    # -- numerics
    def norm(self, tol: float = 1e-10, maxiter: int = 10_000) -> float:
        """Operator (spectral) norm; equals the norm of the local matrix."""
        return spectral_norm(self.local, tol=tol, maxiter=maxiter)

    def apply(self, state: SparseState) -> SparseState:
        return apply_sparse(self, state)

    def entries(self) -> dict:
        """Nonzero entries keyed by (row configuration, column configuration)."""
        coo = sp.coo_array(self.to_csr())
        return {(int(r), int(c)): complex(v) for r, c, v in zip(coo.row, coo.col, coo.data) if v != 0}

    def to_coo_text(self) -> str:
        """Coordinate text export: ``row col re im`` sorted by (row, col)."""
        coo = sp.coo_array(self.to_csr())
        order = np.lexsort((coo.col, coo.row))
        lines = []
        for k in order:
            v = coo.data[k]
            if v == 0:
                continue
            lines.append(f"{coo.row[k]} {coo.col[k]} {v.real:.17g} {v.imag:.17g}")
        return "\n".join(lines) + ("\n" if lines else "")

    def __repr__(self) -> str:
        return f"SparseOperator(support={self.support}, nnz={self.local.nnz})"


def _partial_trace(local: sp.sparray, dims: Sequence[int], k: int) -> sp.csr_array:
    coo = sp.coo_array(local)
    dims = list(dims)
    strides = np.cumprod([1] + dims[::-1])[:-1][::-1]
    dr = (coo.row // strides[k]) % dims[k]
    dc = (coo.col // strides[k]) % dims[k]
    keep = dr == dc
    rest = [d for i, d in enumerate(dims) if i != k]
    rest_strides = np.cumprod([1] + rest[::-1])[:-1][::-1] if rest else np.array([], dtype=np.int64)

    def drop(idx):
        out = np.zeros_like(idx)
        j = 0
        for i, d in enumerate(dims):
            if i == k:
                continue
            out += ((idx // strides[i]) % d) * rest_strides[j]
            j += 1
        return out

    n = int(np.prod(rest)) if rest else 1
    return sp.csr_array((coo.data[keep], (drop(coo.row[keep]), drop(coo.col[keep]))), shape=(n, n))


def spectral_norm(mat, tol: float = 1e-10, maxiter: int = 10_000) -> float:
    """Largest singular value: dense SVD for small matrices, Lanczos on A^H A otherwise."""
    if sp.issparse(mat):
        if mat.shape[0] <= 2048:
            mat = mat.toarray()
        else:
            if mat.nnz == 0:
                return 0.0
            a = sp.csr_array(mat)
            op = spla.LinearOperator(a.shape, matvec=lambda v: a.conj().T @ (a @ v), dtype=complex)
            try:
                val = spla.eigsh(op, k=1, which="LA", tol=tol, maxiter=maxiter, return_eigenvectors=False)
            except spla.ArpackNoConvergence as exc:
                raise ConvergenceError(str(exc)) from exc
            return float(np.sqrt(max(val[0].real, 0.0)))
    mat = np.asarray(mat)
    if mat.size == 0:
        return 0.0
    return float(np.linalg.norm(mat, 2))


def kron_embed(local_op, support: Sequence[int], register: QuditRegister) -> SparseOperator:
    """Operator acting as ``local_op`` on ``support`` (in the listed order)."""
    support = tuple(int(q) for q in support)
    if len(set(support)) != len(support):
        raise ShapeError("support qudits must be distinct")
    if any(q < 0 or q >= register.num_qudits for q in support):
        raise ShapeError("support qudit outside the register")
    local = sp.csr_array(local_op, dtype=complex)
    dim = register.sub_dim(support)
    if local.shape != (dim, dim):
        raise ShapeError(f"operator shape {local.shape} does not match support dimension {dim}")
    order = sorted(range(len(support)), key=lambda i: support[i])
    local = _permute_factors(local, [register.local_dims[q] for q in support], order)
    op = SparseOperator(register, tuple(sorted(support)), local)
    return op.trim_support()


def apply_sparse(op: SparseOperator, state: SparseState, tol: float = 0.0) -> SparseState:
    """Exact sparse matrix-vector product."""
    _check_register(op.register, state.register)
    if len(state) == 0 or op.local.nnz == 0:
        return SparseState.zero(state.register)
    configs, amps, _ = _apply_local(op.register, op.support, op.local.tocsc(), state.configs, state.amps)
    return SparseState.from_arrays(state.register, configs, amps, tol)


def _apply_local(register, support, csc, configs, amps):
    """Unmerged action of a local CSC matrix; ``amps`` may be 1-D or 2-D.

    Returns new configurations, amplitudes and the source index of each entry.
    """
    cidx = register.local_index(configs, support)
    table = register.contribution_table(support)
    start = csc.indptr[cidx]
    cnt = csc.indptr[cidx + 1] - start
    total = int(cnt.sum())
    rep = np.repeat(np.arange(configs.size), cnt)
    pos = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt) + np.repeat(start, cnt)
    rows = csc.indices[pos]
    vals = csc.data[pos]
    new = configs[rep] - table[cidx[rep]] + table[rows]
    if amps.ndim == 1:
        return new, amps[rep] * vals, rep
    return new, amps[rep] * vals[:, None], rep


def projector_onto(states: Sequence[SparseState], tol: float = 1e-10) -> SparseOperator:
    """Orthogonal projector onto the span of linearly independent states."""
    if not states:
        raise DegenerateInputError("no states given")
    register = states[0].register
    for s in states:
        _check_register(register, s.register)
    configs = np.unique(np.concatenate([s.configs for s in states]))
    mat = np.zeros((configs.size, len(states)), dtype=complex)
    for j, s in enumerate(states):
        mat[np.searchsorted(configs, s.configs), j] = s.amps
    basis = np.zeros((configs.size, 0), dtype=complex)
    for j in range(len(states)):
        v = mat[:, j].copy()
        n0 = np.linalg.norm(v)
        if n0 <= tol:
            raise DegenerateInputError(f"state {j} is (numerically) zero")
        for _ in range(2):
            v -= basis @ (basis.conj().T @ v)
        if np.linalg.norm(v) <= tol * n0:
            raise DegenerateInputError(f"state {j} lies in the span of the preceding states")
        basis = np.column_stack([basis, v / np.linalg.norm(v)])
    proj = basis @ basis.conj().T
    rows, cols = np.nonzero(np.abs(proj) > 1e-15)
    full = sp.csr_array(
        (proj[rows, cols], (configs[rows], configs[cols])),
        shape=(register.total_dim, register.total_dim),
    )
    return SparseOperator(register, tuple(range(register.num_qudits)), full, True).trim_support()


# ----------------------------------------------------------------- spectra
@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    clusters: list = field(default_factory=list)

    def cluster_values(self) -> np.ndarray:
        return np.array([self.eigenvalues[c].mean() for c in self.clusters])

    def projector(self, cluster: int = 0) -> np.ndarray:
        vecs = self.eigenvectors[:, self.clusters[cluster]]
        return vecs @ vecs.conj().T

    def ground_projector(self) -> np.ndarray:
        return self.projector(0)

    @property
    def gap(self) -> float:
        vals = self.cluster_values()
        return float(vals[1] - vals[0]) if vals.size > 1 else float("nan")


def group_clusters(values: np.ndarray, threshold: float) -> list:
    clusters, current = [], [0] if values.size else []
    for i in range(1, values.size):
        if values[i] - values[i - 1] < threshold:
            current.append(i)
        else:
            clusters.append(current)
            current = [i]
    if current:
        clusters.append(current)
    return clusters


def eig_low(op, k: int, tol: float = 1e-10, maxiter: int | None = None) -> SpectralDecomposition:
    """Lowest ``k`` eigenpairs of a Hermitian operator."""
    mat = op.to_csr() if isinstance(op, SparseOperator) else op
    n = mat.shape[0]
    if k > n or k < 1:
        raise ValueError("k must satisfy 1 <= k <= dim")
    herm = op.is_hermitian(max(tol, 1e-12)) if isinstance(op, SparseOperator) else _is_herm(mat, max(tol, 1e-12))
    if not herm:
        raise ValueError("eig_low requires a Hermitian operator")
    if n <= 2048 or k >= n - 1:
        dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
        vals, vecs = sla.eigh(dense, subset_by_index=(0, k - 1))
    else:
        a = sp.csr_array(mat)
        try:
            vals, vecs = spla.eigsh(a, k=k, which="SA", tol=tol * 1e-2, maxiter=maxiter or 100 * n)
        except spla.ArpackNoConvergence as exc:
            best = np.inf
            if exc.eigenvalues.size:
                r = a @ exc.eigenvectors - exc.eigenvectors * exc.eigenvalues
                best = float(np.linalg.norm(r, axis=0).max())
            raise ConvergenceError(f"eigensolver did not converge; best residual {best:.3e}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    resid = np.linalg.norm(mat @ vecs - vecs * vals, axis=0)
    if resid.size and resid.max() > max(tol, 1e-8) * max(1.0, np.abs(vals).max()):
        raise ConvergenceError(f"eigensolver residual {resid.max():.3e} exceeds tolerance")
    return SpectralDecomposition(vals, vecs, resid, group_clusters(vals, 10 * tol))


def _is_herm(mat, tol):
    if sp.issparse(mat):
        d = mat - mat.conj().T
        return d.nnz == 0 or np.abs(d.data).max() <= tol
    return np.allclose(mat, np.conj(mat).T, atol=tol, rtol=0)


# ----------------------------------------------------------------- Pauli basis
def pauli_basis(d: int) -> np.ndarray:
    """Clock/shift basis X^a Z^b / sqrt(d), indexed a*d + b; element 0 is I/sqrt(d)."""
    w = np.exp(2j * np.pi / d)
    shift = np.roll(np.eye(d), 1, axis=0)
    clock = np.diag(w ** np.arange(d))
    out = np.empty((d * d, d, d), dtype=complex)
    for a in range(d):
        xa = np.linalg.matrix_power(shift, a)
        for b in range(d):
            out[a * d + b] = xa @ np.linalg.matrix_power(clock, b) / np.sqrt(d)
    return out


def _transform(tensor: np.ndarray, dims: Sequence[int], inverse: bool = False) -> np.ndarray:
    """Map between matrix units and Pauli coefficients along every factor."""
    for k, d in enumerate(dims):
        basis = pauli_basis(d).reshape(d * d, d * d)
        g = basis.T if inverse else basis.conj()
        tensor = np.moveaxis(np.tensordot(g, tensor, axes=([1], [k])), 0, k)
    return tensor


def local_decompose(op: SparseOperator, groups: Mapping[int, object] | None = None) -> dict:
    """Split ``op`` into Hilbert-Schmidt-orthogonal components by exact support.

    Components come from the generalized Pauli basis.  Keys are frozensets of
    qudit indices, or of group labels when ``groups`` maps qudits to sites.
    The identity component is keyed by the empty set.
    """
    reg = op.register
    sup = op.support
    dims = [reg.local_dims[q] for q in sup]
    n = len(sup)
    if reg.sub_dim(sup) > 2**13:
        raise MemoryError("support too large for a dense Pauli decomposition")
    mat = op.local.toarray()
    tens = mat.reshape(dims + dims)
    perm = [x for k in range(n) for x in (k, n + k)]
    tens = tens.transpose(perm).reshape([d * d for d in dims])
    coef = _transform(tens, dims)
    label = [(groups[q] if groups is not None else q) for q in sup]
    labels = sorted(set(label), key=lambda x: (str(type(x)), x))
    members = {g: [k for k in range(n) if label[k] == g] for g in labels}
    # which groups are non-identity for every coefficient index
    nonid = {g: np.zeros(coef.shape, dtype=bool) for g in labels}
    for g, ks in members.items():
        for k in ks:
            shape = [1] * n
            shape[k] = dims[k] ** 2
            nonid[g] = nonid[g] | (np.arange(dims[k] ** 2).reshape(shape) != 0)
    out = {}
    floor = 1e-14 * float(np.abs(coef).max()) if coef.size else 0.0
    active = [g for g in labels if nonid[g].any()]
    from itertools import combinations

    for r in range(len(active) + 1):
        for region in combinations(active, r):
            mask = np.ones(coef.shape, dtype=bool)
            for g in labels:
                mask &= nonid[g] if g in region else ~nonid[g]
            if not mask.any():
                continue
            part = np.where(mask, coef, 0)
            if not np.any(np.abs(part) > floor):
                continue
            qk = sorted(k for g in region for k in members[g])
            index = tuple(slice(None) if k in qk else 0 for k in range(n))
            sub = part[index]
            scale = np.prod([1 / np.sqrt(dims[k]) for k in range(n) if k not in qk]) if n else 1.0
            sdims = [dims[k] for k in qk]
            m = _transform(sub, sdims, inverse=True) * scale
            m = m.reshape([x for d in sdims for x in (d, d)]) if qk else m.reshape(1, 1)
            if qk:
                m = m.transpose([2 * i for i in range(len(qk))] + [2 * i + 1 for i in range(len(qk))])
                dd = int(np.prod(sdims))
                m = m.reshape(dd, dd)
            key = frozenset(region)
            out[key] = SparseOperator(reg, tuple(sup[k] for k in qk), sp.csr_array(m))
    return out


def max_strength_norm(components: Mapping[frozenset, SparseOperator]) -> float:
    """max_s || sum_{R containing s} X_R ||."""
    if not components:
        return 0.0
    sites = set().union(*components.keys())
    best = 0.0
    for s in sites:
        terms = [op for key, op in components.items() if s in key]
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        best = max(best, total.norm())
    return best


def block_eigh(mat):
    """Eigen-decomposition of a Hermitian sparse matrix through its connected blocks.

    Blocks of equal size are diagonalized together; eigenvectors come back as a
    sparse matrix with eigenvalues in ascending order.
    """
    from scipy.sparse.csgraph import connected_components

    m = sp.coo_array(mat)
    n = m.shape[0]
    pattern = sp.csr_array((np.ones(m.nnz), (m.row, m.col)), shape=m.shape)
    ncomp, labels = connected_components(pattern + pattern.T, directed=False)
    order = np.argsort(labels, kind="stable")
    sizes = np.bincount(labels, minlength=ncomp)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    local = np.empty(n, dtype=np.int64)
    local[order] = np.arange(n) - starts[labels[order]]
    vals = np.empty(n)
    rows, cols, data = [], [], []
    pos = 0
    for size in np.unique(sizes):
        comps = np.flatnonzero(sizes == size)
        slot = np.full(ncomp, -1, dtype=np.int64)
        slot[comps] = np.arange(comps.size)
        blocks = np.zeros((comps.size, size, size), dtype=complex)
        sel = slot[labels[m.row]] >= 0
        np.add.at(blocks, (slot[labels[m.row[sel]]], local[m.row[sel]], local[m.col[sel]]), m.data[sel])
        w, u = np.linalg.eigh(0.5 * (blocks + blocks.conj().transpose(0, 2, 1)))
        members = order[(starts[comps][:, None] + np.arange(size)[None, :])]
        k = comps.size * size
        vals[pos : pos + k] = w.ravel()
        b, i, j = np.nonzero(u)
        rows.append(members[b, i])
        cols.append(pos + b * size + j)
        data.append(u[b, i, j])
        pos += k
    vec = sp.csc_array((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    srt = np.argsort(vals, kind="stable")
    return vals[srt], sp.csc_array(vec[:, srt])


def subspace_distance(a, b) -> float:
    """||Pi_a - Pi_b|| for orthonormal column bases; 1 when the dimensions differ."""
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    b = b.toarray() if sp.issparse(b) else np.asarray(b)
    if a.shape[1] != b.shape[1]:
        return 1.0
    if a.shape[1] == 0:
        return 0.0
    resid = a - b @ (b.conj().T @ a)
    return float(min(np.linalg.norm(resid, 2), 1.0))
