"""Eigenpair updates under a symmetric perturbation, with computable bounds.

Given the m leading eigenpairs (t_i, v_i) of a symmetric A' and a symmetric
perturbation E, the truncated update formulas approximate the leading
eigenpairs of A' + E.  The influence of the unknown trailing eigenvalues of
A' is collapsed into a single scalar mu; the first-order formula needs only
E-products with the known eigenvectors, the second-order formula additionally
applies A' to the residuals.

All formulas require the known eigenvalues to be strictly separated and
mu to stay away from every known eigenvalue; both guards use GAP_TOL.
Approximated eigenvectors are returned exactly as the formulas produce them,
without normalization (subspace angles are scale-invariant anyway).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrixcore import EigengapError, EigenPairs, GAP_TOL, dimension, matvec, trace


class MuCollisionError(ValueError):
    """mu coincides with a known eigenvalue, making a denominator vanish."""


@dataclass(frozen=True)
class MuPolicy:
    """How to pick the scalar standing in for the unknown tail eigenvalues.

    'zero' suits (near) low-rank matrices, 'mean' uses the mean of the
    unknown eigenvalues derived from the trace, 'explicit' is caller-chosen.
    """

    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "mean", "explicit"):
            raise ValueError(f"unknown mu policy {self.kind!r}")
        if self.kind == "explicit" and not np.isfinite(self.value):
            raise ValueError("explicit mu must be finite")

    @classmethod
    def zero(cls) -> "MuPolicy":
        return cls("zero")

    @classmethod
    def mean(cls) -> "MuPolicy":
        return cls("mean")

    @classmethod
    def explicit(cls, value: float) -> "MuPolicy":
        return cls("explicit", float(value))

    @classmethod
    def parse(cls, text: str) -> "MuPolicy":
        """Parse 'zero', 'mean', or a float literal."""
        if text == "zero":
            return cls.zero()
        if text == "mean":
            return cls.mean()
        try:
            return cls.explicit(float(text))
        except ValueError as exc:
            raise ValueError(f"cannot parse mu policy {text!r}") from exc

    def resolve(self, problem: "PerturbationProblem") -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "explicit":
            return self.value
        return mu_mean(problem.trace_base, problem.known.values, problem.n)


@dataclass
class PerturbationProblem:
    """A' (base), its m known leading eigenpairs, and the perturbation E.

    ``base`` and ``perturbation`` may be any operator accepted by
    matrixcore.matvec; ``trace_base`` is computed from the base when it is a
    stored matrix and must be supplied for implicit operators.
    """

    base: object
    known: EigenPairs
    perturbation: object
    trace_base: float | None = None

    def __post_init__(self):
        n = dimension(self.base)
        if dimension(self.perturbation) != n or self.known.n != n:
            raise ValueError("base, perturbation and eigenpairs must share dimension")
        gaps = -np.diff(self.known.values)
        if self.known.m > 1 and gaps.min() < GAP_TOL:
            raise EigengapError(f"known eigenvalue gap {gaps.min():.3e} below {GAP_TOL}")
        if self.trace_base is None:
            self.trace_base = trace(self.base)

    @property
    def n(self) -> int:
        return self.known.n

    @property
    def m(self) -> int:
        return self.known.m


def _coupling(problem: PerturbationProblem):
    """EV, G = V^T E V and the residual block R with R[:, i] = (I - VV^T) E v_i."""
    V = problem.known.vectors
    EV = matvec(problem.perturbation, V)
    G = V.T @ EV
    R = EV - V @ G
    return EV, G, R


def _gap_coefficients(values: np.ndarray, G: np.ndarray) -> np.ndarray:
    """C[k, i] = (E v_i, v_k) / (t_i - t_k) for k != i, zero on the diagonal."""
    m = values.size
    denom = values[None, :] - values[:, None]
    off = ~np.eye(m, dtype=bool)
    if m > 1 and np.min(np.abs(denom[off])) < GAP_TOL:
        raise EigengapError("repeated eigenvalues: gap denominator below tolerance")
    C = np.zeros_like(G)
    C[off] = G[off] / denom[off]
    return C


def _checked_mu(values: np.ndarray, mu: float) -> float:
    if np.min(np.abs(values - mu)) < GAP_TOL:
        raise MuCollisionError(f"mu={mu} collides with a known eigenvalue")
    return mu


def _resolve_mu(problem: PerturbationProblem, mu) -> float:
    if isinstance(mu, MuPolicy):
        mu = mu.resolve(problem)
    return _checked_mu(problem.known.values, float(mu))


def classical_eigvec_update(problem: PerturbationProblem) -> np.ndarray:
    """First-order eigenvector update using the complete eigenbasis (m = n).

    Returns the n approximated eigenvectors as columns, unnormalized:
    w_i = v_i + sum_{k != i} (E v_i, v_k) / (t_i - t_k) v_k.
    """
    if problem.m != problem.n:
        raise ValueError("classical update needs all n eigenpairs; use the truncated forms otherwise")
    V = problem.known.vectors
    _, G, _ = _coupling(problem)
    C = _gap_coefficients(problem.known.values, G)
    return V + V @ C


def classical_eigval_update(problem: PerturbationProblem) -> np.ndarray:
    """Second-order accurate eigenvalue update: t_i + v_i^T E v_i."""
    V = problem.known.vectors
    EV = matvec(problem.perturbation, V)
    return problem.known.values + np.einsum("ij,ij->j", V, EV)


def residual_r(known: EigenPairs, E, i: int) -> np.ndarray:
    """Residual r_i = (I - V V^T) E v_i for the 0-based index i.

    This is the component of E v_i outside the known subspace; it is
    orthogonal to every known eigenvector up to roundoff.
    """
    if not 0 <= i < known.m:
        raise IndexError(f"index {i} out of range for m={known.m}")
    V = known.vectors
    Ev = matvec(E, V[:, i])
    return Ev - V @ (V.T @ Ev)


def truncated_first_order(problem: PerturbationProblem, mu) -> np.ndarray:
    """First-order truncated eigenvector update.

    w_i = v_i + sum_{k <= m, k != i} (E v_i, v_k)/(t_i - t_k) v_k
              + r_i / (t_i - mu),
    returned as an n x m column block.  ``mu`` is a MuPolicy or a float.
    """
    mu_val = _resolve_mu(problem, mu)
    V = problem.known.vectors
    t = problem.known.values
    _, G, R = _coupling(problem)
    C = _gap_coefficients(t, G)
    return V + V @ C + R / (t - mu_val)[None, :]


def truncated_second_order(problem: PerturbationProblem, mu) -> np.ndarray:
    """Second-order truncated eigenvector update.

    Adds (A' - mu I) r_i / (t_i - mu)^2 to the first-order formula, which
    requires applying the base operator to the residuals.
    """
    mu_val = _resolve_mu(problem, mu)
    V = problem.known.vectors
    t = problem.known.values
    _, G, R = _coupling(problem)
    C = _gap_coefficients(t, G)
    W1 = V + V @ C + R / (t - mu_val)[None, :]
    inv_sq = 1.0 / (t - mu_val) ** 2
    return W1 + (matvec(problem.base, R) - mu_val * R) * inv_sq[None, :]


# ---------------------------------------------------------------------------
# error bounds


def tail_abs_sum(tail_values: np.ndarray, mu: float) -> float:
    """sum_k |t_k - mu| over the explicitly known tail."""
    return float(np.sum(np.abs(np.asarray(tail_values, dtype=float) - mu)))


def tail_sq_sum(tail_values: np.ndarray, mu: float) -> float:
    """sum_k (t_k - mu)^2 over the explicitly known tail."""
    d = np.asarray(tail_values, dtype=float) - mu
    return float(np.dot(d, d))


def tail_abs_sum_psd_from_trace(trace_base: float, known_values: np.ndarray) -> float:
    """For mu = 0 and a PSD base: sum |t_k| = trace(A') - sum of known values."""
    return float(trace_base - np.sum(known_values))


def tail_sq_sum_from_traces(trace_base_sq: float, known_values: np.ndarray) -> float:
    """For mu = 0: sum t_k^2 = trace(A'^2) - sum of squared known values."""
    return float(trace_base_sq - np.sum(np.square(known_values)))


def error_bound_first(tail, gap: float, t_i: float, mu: float, norm_e: float) -> float:
    """Computable first term of the first-order error bound for one index:

        (sum_{k > m} |t_k - mu|) / (|t_i - t_m| * |t_i - mu|) * ||E||_2.

    ``tail`` is either the array of trailing eigenvalues or the precomputed
    sum of |t_k - mu|.  The true error carries an additional O(||E||^2)
    remainder that is not returned (its constant is instance-dependent).
    """
    total = tail_abs_sum(tail, mu) if np.ndim(tail) else float(tail)
    if abs(gap) < GAP_TOL:
        raise EigengapError("zero gap |t_i - t_m| in bound denominator")
    if abs(t_i - mu) < GAP_TOL:
        raise MuCollisionError("t_i = mu in bound denominator")
    return total / (abs(gap) * abs(t_i - mu)) * norm_e


def error_bound_second(tail, gap: float, t_i: float, mu: float, norm_e: float) -> float:
    """Computable first term of the second-order bound:

        (sum_{k > m} (t_k - mu)^2) / (|t_i - t_m| * (t_i - mu)^2) * ||E||_2,

    with the same O(||E||^2) caveat as the first-order bound.
    """
    total = tail_sq_sum(tail, mu) if np.ndim(tail) else float(tail)
    if abs(gap) < GAP_TOL:
        raise EigengapError("zero gap |t_i - t_m| in bound denominator")
    if abs(t_i - mu) < GAP_TOL:
        raise MuCollisionError("t_i = mu in bound denominator")
    return total / (abs(gap) * (t_i - mu) ** 2) * norm_e


def _bound_vector(values: np.ndarray, total: float, mu: float, norm_e: float,
                  power: int) -> np.ndarray:
    t_m = values[-1]
    out = np.empty(values.size)
    for i, t_i in enumerate(values):
        gap = abs(t_i - t_m)
        if gap < GAP_TOL:
            # the gap factor degenerates for the last retained pair; the
            # bound is vacuous (infinite) there rather than an error
            out[i] = np.inf
        else:
            out[i] = total / (gap * abs(t_i - mu) ** power) * norm_e
    return out


def first_order_bounds(values: np.ndarray, tail_values, mu: float, norm_e: float) -> np.ndarray:
    """First-order bound terms for every retained index (inf where i = m)."""
    total = tail_abs_sum(tail_values, mu) if np.ndim(tail_values) else float(tail_values)
    return _bound_vector(np.asarray(values, dtype=float), total, mu, norm_e, power=1)


def second_order_bounds(values: np.ndarray, tail_values, mu: float, norm_e: float) -> np.ndarray:
    """Second-order bound terms for every retained index (inf where i = m)."""
    total = tail_sq_sum(tail_values, mu) if np.ndim(tail_values) else float(tail_values)
    return _bound_vector(np.asarray(values, dtype=float), total, mu, norm_e, power=2)


# ---------------------------------------------------------------------------
# mu selection helpers


def mu_mean(trace_base: float, known_values: np.ndarray, n: int) -> float:
    """Mean of the unknown eigenvalues: (trace(A') - sum known) / (n - m)."""
    m = len(known_values)
    if m >= n:
        raise ValueError("mu_mean needs m < n")
    return float((trace_base - np.sum(known_values)) / (n - m))


def is_lowrank_plus_shift(A, m: int, tolerance: float = 1e-10):
    """Return delta if A equals (rank-m part) + delta * I within tolerance.

    Checks whether the n - m trailing eigenvalues agree to ``tolerance``;
    returns their mean if so, None otherwise.  Diagnostic only: computes the
    full spectrum.
    """
    from .matrixcore import sym_eig_full

    full = sym_eig_full(A)
    if m >= full.n:
        raise ValueError("need m < n trailing values to inspect")
    tail = full.values[m:]
    if tail.max() - tail.min() <= tolerance:
        return float(tail.mean())
    return None
