"""Dataset ingestion, kernel construction, sparsification and instance generators.

All generators are driven by the counter-based Philox generator so that a
(master seed, trial index) pair always reproduces the same matrix, no matter
in which order trials run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrixcore import SparseSymmetric, SymmetricDense


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator keyed by (seed, *stream); the per-trial RNG used everywhere."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=(int(seed), *map(int, stream)))))


@dataclass(frozen=True)
class Dataset:
    """n samples by d features; standardization state carried along."""

    samples: np.ndarray
    standardized: bool = False
    constant_columns: tuple = ()

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian(gamma), Polynomial(degree) with the +1 offset, or plain Linear."""

    kind: str
    gamma: float = 1.0
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("gaussian", "polynomial", "linear"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gaussian kernel needs gamma > 0")
        if self.kind == "polynomial" and self.degree < 1:
            raise ValueError("polynomial kernel needs degree >= 1")

    @classmethod
    def gaussian(cls, gamma: float) -> "KernelSpec":
        return cls("gaussian", gamma=gamma)

    @classmethod
    def polynomial(cls, degree: int) -> "KernelSpec":
        return cls("polynomial", degree=degree)

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse 'gaussian:<gamma>', 'poly:<degree>' or 'linear'."""
        head, _, arg = text.partition(":")
        if head == "gaussian":
            return cls.gaussian(float(arg))
        if head == "poly":
            return cls.polynomial(int(arg))
        if head == "linear" and not arg:
            return cls.linear()
        raise ValueError(f"cannot parse kernel spec {text!r}")


def load_dataset(path, has_header: bool = False) -> Dataset:
    """Comma-separated numeric file -> Dataset; errors carry row/column info."""
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if has_header and lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ValueError(f"{path}: line {lineno}: expected {width} fields, found {len(fields)}")
            parsed = []
            for col, f in enumerate(fields):
                try:
                    parsed.append(float(f))
                except ValueError as exc:
                    raise ValueError(f"{path}: line {lineno}, column {col + 1}: non-numeric field {f!r}") from exc
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    return Dataset(np.array(rows))


def standardize(ds: Dataset) -> Dataset:
    """Center each column and scale to unit population standard deviation.

    Constant columns cannot be scaled; they are mapped to all-zero and
    reported through ``constant_columns``.
    """
    x = ds.samples
    if x.shape[0] < 2:
        raise ValueError("standardization needs at least two samples")
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population denominator: unit variance holds exactly
    constant = std == 0.0
    safe_std = np.where(constant, 1.0, std)
    out = (x - mean) / safe_std
    out[:, constant] = 0.0
    return Dataset(out, standardized=True, constant_columns=tuple(np.nonzero(constant)[0]))


def build_kernel(ds: Dataset, spec: KernelSpec) -> SymmetricDense:
    """Gram matrix of the dataset under the given kernel."""
    x = ds.samples
    if spec.kind == "gaussian":
        sq = np.einsum("ij,ij->i", x, x)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.clip(d2, 0.0, None, out=d2)
        np.fill_diagonal(d2, 0.0)
        K = np.exp(-spec.gamma * d2)
        return SymmetricDense(K, symmetrize=True)
    with np.errstate(over="ignore"):
        gram = x @ x.T
        if spec.kind == "linear":
            K = gram
        else:
            K = (1.0 + gram) ** spec.degree
    bad = ~np.isfinite(K)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise OverflowError(f"{spec.kind} kernel overflow at sample pair ({i}, {j})")
    return SymmetricDense(K, symmetrize=True)


def sparsify(K: SymmetricDense, keep_fraction: float) -> SparseSymmetric:
    """Keep the ceil(keep_fraction * count) largest-magnitude upper-triangle
    entries (mirrored); ties broken by (row, col)."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    n = K.n
    iu = np.triu_indices(n)
    vals = K.a[iu]
    count = int(np.ceil(keep_fraction * vals.size))
    order = np.argsort(-np.abs(vals), kind="stable")[:count]
    return SparseSymmetric(n, iu[0][order], iu[1][order], vals[order])


# ---------------------------------------------------------------------------
# synthetic instance generators


def gen_band_matrix(n: int, decay: float = 0.1, cutoff: float = 1e-10, seed: int = 0) -> SparseSymmetric:
    """Random band-concentrated matrix: entry (i, j) is X ** (|i - j| / decay)
    with X ~ Uniform(0, 1) drawn once per symmetric pair, and entries below
    ``cutoff`` dropped.

    The exponent is positive by design: off-diagonal magnitudes decay, and a
    negative exponent would grow without bound away from the diagonal.  The
    diagonal is exactly one (X ** 0).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    rng = rng_for(seed)
    iu = np.triu_indices(n, k=1)
    x = rng.uniform(size=iu[0].size)
    expo = (iu[1] - iu[0]).astype(float) / decay
    with np.errstate(under="ignore"):
        vals = x ** expo
    keep = vals >= cutoff
    rows = np.concatenate([np.arange(n), iu[0][keep]])
    cols = np.concatenate([np.arange(n), iu[1][keep]])
    vals = np.concatenate([np.ones(n), vals[keep]])
    return SparseSymmetric(n, rows, cols, vals)


def gen_unit_random_symmetric(n: int, seed: int = 0) -> SymmetricDense:
    """Symmetrized i.i.d. normal matrix rescaled to unit spectral norm."""
    rng = rng_for(seed)
    a = rng.standard_normal((n, n))
    a = (a + a.T) / 2.0
    norm = float(np.max(np.abs(np.linalg.eigvalsh(a))))
    return SymmetricDense(a / norm, symmetrize=True)


def _random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs[None, :]


def gen_rank_m_spectrum(n: int, m: int, leading_range=(1.0, 2.0), tail_value: float = 0.0,
                        seed: int = 0) -> SymmetricDense:
    """Q diag(leading, tail_value, ..., tail_value) Q^T with random orthogonal Q
    and m sorted leading values drawn uniformly from ``leading_range``.

    The same seed reproduces the same Q and leading values for every
    ``tail_value``, so sweeps over the tail share their leading structure.
    """
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    rng = rng_for(seed)
    leading = np.sort(rng.uniform(leading_range[0], leading_range[1], size=m))[::-1]
    q = _random_orthogonal(n, rng)
    vals = np.concatenate([leading, np.full(n - m, float(tail_value))])
    return SymmetricDense((q * vals[None, :]) @ q.T, symmetrize=True)


def gen_slow_decay(n: int, seed: int = 0, coherence: float = 0.1) -> SymmetricDense:
    """Slowly decaying spectrum (eigenvalues 1/i) with near-coordinate eigenvectors.

    The orthogonal factor is the QR of I + coherence * G, keeping eigenvectors
    localized: column sampling then actually observes the spectrum, which is
    the regime sampling-based extensions are meant for.  Haar-random
    eigenvectors would make any column sample carry no spectral information.
    """
    rng = rng_for(seed)
    g = np.eye(n) + coherence * rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs[None, :]
    vals = 1.0 / np.arange(1, n + 1)
    return SymmetricDense((q * vals[None, :]) @ q.T, symmetrize=True)


def gen_wishart_psd(n: int, seed: int = 0, shift: float = 0.5) -> SymmetricDense:
    """Well-conditioned random PSD matrix G G^T / n + shift * I."""
    rng = rng_for(seed)
    g = rng.standard_normal((n, n))
    return SymmetricDense(g @ g.T / n + shift * np.eye(n), symmetrize=True)


def gen_psd_separated_block(n: int, m: int, seed: int = 0, shift: float = 0.5,
                            block_range=(1.0, 2.2)) -> SymmetricDense:
    """Random PSD matrix whose leading m x m block has evenly spaced eigenvalues.

    Equivalence checks between two independently computed decompositions are
    exact algebra, but their numerical agreement degrades like roundoff over
    the block's internal eigengaps; a Wishart block occasionally has gaps of
    1e-4 and less, which drowns a 1e-10 comparison in decomposition noise.
    Here the block spectrum is pinned to linspace over ``block_range`` (the
    eigenbasis, the coupling to the remaining rows and the tail all stay
    random), so deviations measure the algebra rather than the conditioning.
    """
    if not 1 <= m < n:
        raise ValueError("need 1 <= m < n")
    rng = rng_for(seed)
    d = n
    g = rng.standard_normal((n, d))
    s = np.linspace(block_range[1], block_range[0], m)  # descending
    qm = _random_orthogonal(m, rng)
    v = np.linalg.qr(rng.standard_normal((d, m)))[0]
    g[:m] = (qm * np.sqrt(d * (s - shift))[None, :]) @ v.T
    return SymmetricDense(g @ g.T / d + shift * np.eye(n), symmetrize=True)


def gen_clustered_dataset(n: int = 1000, dim: int = 81, seed: int = 0,
                          tight_clusters: int = 5, loose_clusters: int = 5,
                          tight_share: float = 0.35, tight_spread: float = 0.056,
                          loose_spread: float = 0.26) -> Dataset:
    """Gaussian-mixture point cloud with a few tight and a few loose clusters.

    Tight clusters are smaller but produce the largest kernel entries, so
    after sparsification they own the leading eigenvectors; the rows are
    shuffled so the first rows of the kernel are a random cross-section.
    """
    rng = rng_for(seed)
    total = tight_clusters + loose_clusters
    tight_size = int(round(n * tight_share / tight_clusters))
    sizes = [tight_size] * tight_clusters
    remaining = n - tight_size * tight_clusters
    base = remaining // loose_clusters
    sizes += [base + (1 if i < remaining - base * loose_clusters else 0) for i in range(loose_clusters)]
    spreads = [tight_spread] * tight_clusters + [loose_spread] * loose_clusters
    centers = rng.standard_normal((total, dim))
    parts = [centers[c] + spreads[c] * rng.standard_normal((sizes[c], dim)) for c in range(total)]
    pts = np.vstack(parts)
    return Dataset(pts[rng.permutation(n)])
