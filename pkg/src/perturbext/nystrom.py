"""The Nystrom family: classical, generalized, spectrum-shifted, ensemble.

Column sampling is the caller's job: the functions here always take the
first columns as the sample.  To sample randomly, apply a seeded symmetric
permutation to the kernel first (``permute_symmetric``), which keeps every
equivalence check deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import perturbation as pert
from .extension import ExtensionConfig, Selector, pert_extend
from .kernels import rng_for
from .matrixcore import (
    SparseSymmetric,
    SymmetricDense,
    _to_dense_array,
    canonical_signs,
    dimension,
    spectral_norm,
    sym_eig_full,
)


class SingularSampleError(ValueError):
    """A sampled submatrix eigenvalue is too close to zero to divide by."""


@dataclass(frozen=True)
class EnsembleSpec:
    """q independent members; weights default to uniform, subsets are drawn
    from the member seeds (sampling l columns each, without replacement)."""

    q: int
    weights: tuple = ()
    subset_seeds: tuple = ()

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("ensemble needs q >= 1")
        if self.weights:
            w = np.asarray(self.weights, dtype=float)
            if w.size != self.q or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weights must be q nonnegative values summing to one")
        if self.subset_seeds and len(self.subset_seeds) != self.q:
            raise ValueError("need one subset seed per member")


@dataclass(frozen=True)
class NystromConfig:
    """Pairs extended (k), block size (l >= k), optional shift and ensemble."""

    k: int
    l: int | None = None
    shift: float | None = None
    ensemble: EnsembleSpec | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("need k >= 1")
        if self.l is not None and self.l < self.k:
            raise ValueError("need k <= l")
        if self.shift is not None and self.shift < 0:
            raise ValueError("shift must be nonnegative")
        if self.shift is not None and self.l not in (None, self.k):
            raise ValueError("the shifted variant samples exactly k columns")


def apply_config(K, cfg: NystromConfig):
    """Run the configured variant on K.

    Returns (values, vectors) for the plain/generalized/shifted variants and
    a SymmetricDense kernel approximation for the ensemble variant.
    """
    n = dimension(K)
    if cfg.ensemble is not None:
        spec = cfg.ensemble
        l = cfg.l if cfg.l is not None else cfg.k
        seeds = spec.subset_seeds or tuple(range(spec.q))
        subsets = [np.sort(rng_for(s).choice(n, size=l, replace=False)) for s in seeds]
        weights = spec.weights if spec.weights else None
        return ensemble_nystrom(K, cfg.k, subsets, weights)
    if cfg.shift is not None:
        return shifted_nystrom(K, cfg.k, cfg.shift)
    if cfg.l is not None and cfg.l != cfg.k:
        return generalized_nystrom(K, cfg.k, cfg.l)
    return nystrom_extend(K, cfg.k)


def permute_symmetric(K, perm):
    """Symmetric reordering K[perm][:, perm], preserving the input type."""
    perm = np.asarray(perm, dtype=np.int64)
    n = dimension(K)
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("perm must be a permutation of range(n)")
    a = _to_dense_array(K)[np.ix_(perm, perm)]
    out = SymmetricDense(a, symmetrize=True)
    if isinstance(K, SparseSymmetric):
        return SparseSymmetric.from_dense(out)
    return out


def _top_block_pairs(K, k: int, l: int, shift: float = 0.0):
    """Leading k eigenpairs of the l x l top-left block (minus shift), plus C."""
    n = dimension(K)
    if not 1 <= k <= l <= n:
        raise ValueError(f"need 1 <= k <= l <= n, got k={k}, l={l}, n={n}")
    a = _to_dense_array(K)
    block = np.array(a[:l, :l])
    C = np.array(a[:, :l])
    if shift:
        block[np.diag_indices(l)] -= shift
        C[np.diag_indices(l)] -= shift
    w, v = np.linalg.eigh((block + block.T) / 2.0)
    order = np.argsort(-w, kind="stable")[:k]
    lam = w[order]
    U = canonical_signs(v[:, order])
    scale = spectral_norm(K)
    if np.min(np.abs(lam)) < 1e-12 * scale:
        raise SingularSampleError(
            f"sampled block eigenvalue {lam[np.argmin(np.abs(lam))]:.3e} below 1e-12 * ||K||")
    return lam, U, C


def nystrom_extend(K, k: int):
    """Classical extension from the first k columns.

    Returns (values, vectors) with values (n/k) * lambda_i' and vectors
    sqrt(k/n) * C u_i' / lambda_i', for the k leading pairs of the k x k
    top-left block.
    """
    n = dimension(K)
    lam, U, C = _top_block_pairs(K, k, k)
    vectors = np.sqrt(k / n) * (C @ U) / lam[None, :]
    return (n / k) * lam, vectors


def generalized_nystrom(K, k: int, l: int):
    """Extend the k leading pairs of the l x l top-left block (k <= l <= n).

    l = k reduces to the classical method; l = n reproduces the exact
    leading pairs.  The scale factors use the block size l.
    """
    n = dimension(K)
    lam, U, C = _top_block_pairs(K, k, l)
    vectors = np.sqrt(l / n) * (C @ U) / lam[None, :]
    return (n / l) * lam, vectors


def shift_mu_mean(K, k: int) -> float:
    """Mean of the n - k smallest eigenvalues of K (via the trace identity)."""
    n = dimension(K)
    if k >= n:
        raise ValueError("need k < n")
    full = sym_eig_full(K)
    return float((np.sum(full.values) - np.sum(full.values[:k])) / (n - k))


def shifted_nystrom(K, k: int, mu: float | None = None):
    """Classical extension applied to K - mu I, eigenvalues shifted back by mu.

    mu defaults to the mean of the n - k smallest eigenvalues of K.  With
    mu = 0 this is exactly ``nystrom_extend``.
    """
    n = dimension(K)
    if mu is None:
        mu = shift_mu_mean(K, k)
    lam, U, C = _top_block_pairs(K, k, k, shift=float(mu))
    vectors = np.sqrt(k / n) * (C @ U) / lam[None, :]
    return (n / k) * lam + mu, vectors


def nystrom_kernel_approx(values: np.ndarray, vectors: np.ndarray) -> SymmetricDense:
    """Rank-k kernel approximation sum_i lambda_i u_i u_i^T."""
    return SymmetricDense((vectors * values[None, :]) @ vectors.T, symmetrize=True)


def ensemble_nystrom(K, k: int, subsets, weights=None) -> SymmetricDense:
    """Weighted mean of independent Nystrom kernel approximations.

    Each subset is a list of column indices (length >= k); the member
    approximation extends the k leading pairs of that subset's block
    (generalized method when the subset is larger than k).  The weighted
    combination uses compensated summation so it is order-independent.
    """
    n = dimension(K)
    subsets = [np.asarray(s, dtype=np.int64) for s in subsets]
    if not subsets:
        raise ValueError("need at least one subset")
    if weights is None:
        weights = np.full(len(subsets), 1.0 / len(subsets))
    weights = np.asarray(weights, dtype=float)
    if weights.size != len(subsets) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be nonnegative and sum to one")
    members = []
    for subset in subsets:
        if np.unique(subset).size != subset.size:
            raise ValueError("subset indices must be distinct")
        rest = np.setdiff1d(np.arange(n), subset)
        perm = np.concatenate([subset, rest])
        vals, vecs = generalized_nystrom(permute_symmetric(K, perm), k, subset.size)
        approx = (vecs * vals[None, :]) @ vecs.T
        inv = np.empty(n, dtype=np.int64)
        inv[perm] = np.arange(n)
        members.append(approx[np.ix_(inv, inv)])
    total = np.zeros((n, n))
    comp = np.zeros((n, n))
    for w, mat in zip(weights, members):
        y = w * mat - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return SymmetricDense(total, symmetrize=True)


# ---------------------------------------------------------------------------
# equivalence checks between the sampling view and the perturbation view


def _sign_align(target: np.ndarray, reference: np.ndarray) -> np.ndarray:
    flips = np.sign(np.einsum("ij,ij->j", target, reference))
    flips[flips == 0] = 1.0
    return target * flips[None, :]


def check_topleft_equivalence(K, m: int, tolerance: float = 1e-10) -> dict:
    """Classical extension vs. perturbation extension of the top-left block.

    The two must agree up to fixed scale factors: nystrom vectors equal
    sqrt(m/n) times the extension vectors and nystrom values equal (n/m)
    times the extension values.  Reports max deviations after sign alignment
    (values relative to ||K||).
    """
    n = dimension(K)
    nys_vals, nys_vecs = nystrom_extend(K, m)
    res = pert_extend(K, Selector.top_left(m), ExtensionConfig(m=m, order=1, mu=pert.MuPolicy.zero()))
    ref_vecs = np.sqrt(m / n) * res.vectors
    nys_vecs = _sign_align(nys_vecs, ref_vecs)
    vec_dev = float(np.max(np.abs(nys_vecs - ref_vecs)))
    val_dev = float(np.max(np.abs(nys_vals - (n / m) * res.values)) / spectral_norm(K))
    return {
        "max_vector_deviation": vec_dev,
        "max_value_deviation": val_dev,
        "passed": vec_dev <= tolerance and val_dev <= tolerance,
    }


def check_shifted_equivalence(K, k: int, mu: float, tolerance: float = 1e-10) -> dict:
    """Shifted extension vs. perturbation extension with the same mu.

    Vectors agree up to sqrt(k/n); values satisfy
    shifted = (n/k) * (extended - mu) + mu.
    """
    n = dimension(K)
    sh_vals, sh_vecs = shifted_nystrom(K, k, mu)
    res = pert_extend(K, Selector.top_left(k),
                      ExtensionConfig(m=k, order=1, mu=pert.MuPolicy.explicit(mu)))
    ref_vecs = np.sqrt(k / n) * res.vectors
    sh_vecs = _sign_align(sh_vecs, ref_vecs)
    vec_dev = float(np.max(np.abs(sh_vecs - ref_vecs)))
    expected_vals = (n / k) * (res.values - mu) + mu
    val_dev = float(np.max(np.abs(sh_vals - expected_vals)) / spectral_norm(K))
    return {
        "max_vector_deviation": vec_dev,
        "max_value_deviation": val_dev,
        "passed": vec_dev <= tolerance and val_dev <= tolerance,
    }
