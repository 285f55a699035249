"""Out-of-sample extension of a submatrix eigendecomposition to the full kernel.

A selector describes which entries of the kernel K form the submatrix K^s
(all other entries zero).  The leading eigenpairs of K^s are computed and
then extended toward those of K by treating K - K^s as a perturbation; the
difference is never materialized, matvecs hit K and K^s separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import perturbation as pert
from .matrixcore import (
    EigenPairs,
    SparseSymmetric,
    SymmetricDense,
    dimension,
    matvec,
    nnz,
    read_mask,
    spectral_norm,
    sym_eig_full,
    sym_eig_partial,
    trace,
)


@dataclass(frozen=True)
class Selector:
    """Declarative description of which entries of K form K^s.

    Kinds: 'topleft' (leading l x l block), 'band' (|i - j| <= p, diagonal
    always included), 'sparse' (largest-magnitude entries covering fraction q
    of the stored nonzeros), 'blocks' (block-diagonal partition), 'mask'
    (explicit symmetric index set, stored as upper-triangle pairs).
    """

    kind: str
    size: int = 0                      # topleft: l
    bandwidth: int = 0                 # band: p
    fraction: float = 0.0              # sparse: q
    block_sizes: tuple = ()            # blocks
    mask_rows: np.ndarray | None = None
    mask_cols: np.ndarray | None = None

    @classmethod
    def top_left(cls, l: int) -> "Selector":
        if l < 1:
            raise ValueError("topleft selector needs l >= 1")
        return cls("topleft", size=int(l))

    @classmethod
    def band(cls, p: int) -> "Selector":
        if p < 0:
            raise ValueError("band selector needs p >= 0")
        return cls("band", bandwidth=int(p))

    @classmethod
    def sparse_top_q(cls, q: float) -> "Selector":
        if not 0.0 < q <= 1.0:
            raise ValueError("sparse selector needs q in (0, 1]")
        return cls("sparse", fraction=float(q))

    @classmethod
    def block_diag(cls, sizes) -> "Selector":
        sizes = tuple(int(s) for s in sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError("block sizes must be positive")
        return cls("blocks", block_sizes=sizes)

    @classmethod
    def custom_mask(cls, rows, cols) -> "Selector":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise ValueError("mask rows/cols must be equally sized 1-D arrays")
        if rows.size == 0:
            raise ValueError("mask must select at least one entry")
        if rows.min() < 0 or cols.min() < 0:
            raise ValueError("mask indices must be nonnegative")
        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        base = int(hi.max()) + 1
        key = np.unique(lo * base + hi)
        return cls("mask", mask_rows=key // base, mask_cols=key % base)

    @classmethod
    def full_mask(cls, n: int) -> "Selector":
        iu = np.triu_indices(n)
        return cls("mask", mask_rows=iu[0], mask_cols=iu[1])

    @classmethod
    def parse(cls, text: str) -> "Selector":
        """Grammar: topleft:<l> | band:<p> | sparse:<q> | blocks:<s1,s2,...> | mask:<file>."""
        head, sep, arg = text.partition(":")
        if not sep:
            raise ValueError(f"cannot parse selector {text!r}")
        if head == "topleft":
            return cls.top_left(int(arg))
        if head == "band":
            return cls.band(int(arg))
        if head == "sparse":
            return cls.sparse_top_q(float(arg))
        if head == "blocks":
            return cls.block_diag(int(s) for s in arg.split(","))
        if head == "mask":
            _, rows, cols = read_mask(arg)
            return cls.custom_mask(rows, cols)
        raise ValueError(f"unknown selector kind {head!r}")


@dataclass(frozen=True)
class ExtensionConfig:
    """How many pairs to extend, at which order, and with which mu policy."""

    m: int
    order: int = 1
    mu: pert.MuPolicy = field(default_factory=pert.MuPolicy.zero)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("need m >= 1")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")


@dataclass(frozen=True)
class ExtensionResult:
    """Extended eigenpairs plus the computable part of their error bounds.

    ``vectors`` are unnormalized, exactly as the update formula produces
    them.  ``bound_terms`` carries one value per extended pair (the entry for
    the last pair is infinite: its gap factor degenerates).
    """

    values: np.ndarray
    vectors: np.ndarray
    bound_terms: np.ndarray
    selector_nnz: int
    source_pairs: EigenPairs


class KernelDifference:
    """Implicit E = K - K^s; matvecs evaluate both operands separately."""

    __slots__ = ("K", "Ks")

    def __init__(self, K, Ks):
        if dimension(K) != dimension(Ks):
            raise ValueError("dimension mismatch between K and K^s")
        self.K = K
        self.Ks = Ks

    @property
    def n(self) -> int:
        return dimension(self.K)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return matvec(self.K, x) - matvec(self.Ks, x)

    def to_dense(self) -> SymmetricDense:
        # only the small-dimension norm path densifies the difference
        from .matrixcore import _to_dense_array

        return SymmetricDense(_to_dense_array(self.K) - _to_dense_array(self.Ks),
                              symmetrize=True)


def _stored_triplets(K):
    """Upper-triangle (rows, cols, vals) of the stored nonzeros of K."""
    if isinstance(K, SparseSymmetric):
        return K.rows, K.cols, K.vals
    a = K.a if isinstance(K, SymmetricDense) else np.asarray(K)
    r, c = np.nonzero(np.triu(a))
    return r, c, a[r, c]


def select_submatrix(K, sel: Selector) -> SparseSymmetric:
    """Materialize K^s: K restricted to the selected index set, zero elsewhere."""
    n = dimension(K)
    rows, cols, vals = _stored_triplets(K)
    if sel.kind == "topleft":
        if sel.size > n:
            raise ValueError(f"topleft size {sel.size} exceeds dimension {n}")
        keep = cols < sel.size
    elif sel.kind == "band":
        if sel.bandwidth > n - 1:
            raise ValueError(f"bandwidth {sel.bandwidth} exceeds {n - 1}")
        keep = (cols - rows) <= sel.bandwidth
    elif sel.kind == "sparse":
        weight = np.where(rows == cols, 1, 2)
        target = np.ceil(sel.fraction * weight.sum())
        order = np.argsort(-np.abs(vals), kind="stable")
        cum = np.cumsum(weight[order])
        count = int(np.searchsorted(cum, target) + 1)
        keep = np.zeros(vals.size, dtype=bool)
        keep[order[:count]] = True
    elif sel.kind == "blocks":
        if sum(sel.block_sizes) != n:
            raise ValueError(f"block sizes sum to {sum(sel.block_sizes)}, expected {n}")
        bounds = np.cumsum((0,) + sel.block_sizes)
        block_of = np.searchsorted(bounds, np.arange(n), side="right") - 1
        keep = block_of[rows] == block_of[cols]
    elif sel.kind == "mask":
        if int(sel.mask_cols.max()) >= n:
            raise ValueError("mask index out of range")
        keep = np.isin(rows * n + cols, sel.mask_rows * n + sel.mask_cols)
    else:
        raise ValueError(f"unknown selector kind {sel.kind!r}")
    return SparseSymmetric(n, rows[keep], cols[keep], vals[keep])


def extend_with_submatrix(K, Ks: SparseSymmetric, cfg: ExtensionConfig) -> ExtensionResult:
    """Extend the leading eigenpairs of an already-selected K^s to those of K."""
    pairs = sym_eig_partial(Ks, cfg.m)
    diff = KernelDifference(K, Ks)
    problem = pert.PerturbationProblem(base=Ks, known=pairs, perturbation=diff,
                                       trace_base=trace(Ks))
    mu_val = cfg.mu.resolve(problem)
    if cfg.order == 1:
        vectors = pert.truncated_first_order(problem, mu_val)
    else:
        vectors = pert.truncated_second_order(problem, mu_val)
    values = pert.classical_eigval_update(problem)

    spectrum = sym_eig_full(Ks).values
    norm_diff = spectral_norm(diff)
    if cfg.order == 1:
        bounds = pert.first_order_bounds(pairs.values, spectrum[cfg.m:], mu_val, norm_diff)
    else:
        bounds = pert.second_order_bounds(pairs.values, spectrum[cfg.m:], mu_val, norm_diff)
    return ExtensionResult(values=values, vectors=vectors, bound_terms=bounds,
                           selector_nnz=Ks.nnz, source_pairs=pairs)


def pert_extend(K, sel: Selector, cfg: ExtensionConfig,
                validate_psd: bool = False) -> ExtensionResult:
    """Select K^s from K and extend its leading eigenpairs to those of K.

    With ``validate_psd`` the kernel's smallest eigenvalue is checked against
    -1e-8 * ||K|| (a full decomposition; off by default on cost grounds).
    """
    if validate_psd:
        spectrum = sym_eig_full(K).values
        if spectrum[-1] < -1e-8 * max(abs(spectrum[0]), abs(spectrum[-1])):
            raise ValueError(f"kernel is not PSD within tolerance (min eigenvalue {spectrum[-1]:.3e})")
    return extend_with_submatrix(K, select_submatrix(K, sel), cfg)


def pert_extend_values(source_pairs: EigenPairs, K, Ks) -> np.ndarray:
    """Eigenvalue updates alone: lambda_i^s + u_i^s^T (K - K^s) u_i^s."""
    U = source_pairs.vectors
    EU = matvec(KernelDifference(K, Ks), U)
    return source_pairs.values + np.einsum("ij,ij->j", U, EU)


def extension_error_bound(values_s: np.ndarray, tail_values, mu: float,
                          norm_diff: float, order: int = 1) -> np.ndarray:
    """Computable bound terms for extended pairs, given the K^s tail spectrum
    (or its precomputed |.-mu| sum) and ||K - K^s||_2."""
    if order == 1:
        return pert.first_order_bounds(values_s, tail_values, mu, norm_diff)
    return pert.second_order_bounds(values_s, tail_values, mu, norm_diff)


def kernel_approx(result: ExtensionResult) -> SymmetricDense:
    """Rank-m kernel approximation sum_i lambda_i u_i u_i^T from extended pairs."""
    W = result.vectors
    return SymmetricDense((W * result.values[None, :]) @ W.T, symmetrize=True)


def _kahan_weighted_sum(mats, weights) -> np.ndarray:
    total = np.zeros_like(mats[0])
    comp = np.zeros_like(mats[0])
    for w, mat in zip(weights, mats):
        y = w * mat - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def block_extend(K, block_sizes, cfg: ExtensionConfig, weights=None) -> SymmetricDense:
    """Per-block extension of a block-diagonal selection, combined by weighted mean.

    Each diagonal block (zero-padded to full size) is extended independently
    and turned into a rank-m kernel approximation; the result is the weighted
    sum of the per-block approximations.  Uniform weights by default.
    """
    n = dimension(K)
    block_sizes = tuple(int(s) for s in block_sizes)
    if sum(block_sizes) != n:
        raise ValueError(f"block sizes sum to {sum(block_sizes)}, expected {n}")
    q = len(block_sizes)
    if weights is None:
        weights = np.full(q, 1.0 / q)
    weights = np.asarray(weights, dtype=float)
    if weights.size != q or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to one")

    rows, cols, vals = _stored_triplets(K)
    bounds = np.cumsum((0,) + block_sizes)
    block_of = np.searchsorted(bounds, np.arange(n), side="right") - 1
    approxes = []
    for j in range(q):
        inside = (block_of[rows] == j) & (block_of[cols] == j)
        Ks_j = SparseSymmetric(n, rows[inside], cols[inside], vals[inside])
        res = extend_with_submatrix(K, Ks_j, cfg)
        approxes.append(kernel_approx(res).a)
    return SymmetricDense(_kahan_weighted_sum(approxes, weights), symmetrize=True)


def nnz_fraction(Ks, K) -> float:
    """Stored-nonzero budget of K^s relative to K (symmetric pairs counted twice)."""
    return nnz(Ks) / nnz(K)
