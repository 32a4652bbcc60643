"""Kernel feature maps and low-rank Gram factors.

Everything downstream (dependence estimators, the eigensolver, the trainer)
consumes Gram matrices only through explicit factors: an n x D random-feature
matrix for RBF kernels and an n x c one-hot matrix for categorical labels.
The dense n x n Gram matrix is never materialized outside small-n test
oracles, which keeps peak memory at O(n * max(d, D)).

All kernel math is in float64; 32-bit inputs are widened on entry.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist

from .audit import register
from .errors import ConfigError, DegenerateInputError, ShapeError, ValidationError

BANDWIDTH_MODES = ("explicit", "median_heuristic")

# Default subsample cap for the median heuristic.
MEDIAN_SUBSAMPLE = 2000


def as_float64_matrix(x, name: str = "input") -> np.ndarray:
    """Widen to a float64 2-D array, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains NaN or Inf entries")
    return arr


@dataclass(frozen=True)
class KernelConfig:
    """Recipe for an RBF random-feature map.

    bandwidth is the RBF length-scale sigma; with bandwidth_mode
    "median_heuristic" it may be None and is resolved against the data the
    factor is first built from. Identical (config, input) pairs produce
    bit-identical feature draws.
    """

    bandwidth: float | None
    rff_dim: int
    seed: int
    bandwidth_mode: str = "explicit"

    def __post_init__(self):
        if self.bandwidth_mode not in BANDWIDTH_MODES:
            raise ConfigError(
                f"bandwidth_mode must be one of {BANDWIDTH_MODES}, "
                f"got {self.bandwidth_mode!r}"
            )
        if self.bandwidth_mode == "explicit":
            if self.bandwidth is None or not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
                raise ConfigError(f"explicit bandwidth must be positive, got {self.bandwidth}")
        if int(self.rff_dim) < 1:
            raise ConfigError(f"rff_dim must be >= 1, got {self.rff_dim}")
        if int(self.seed) < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True)
class RffFactor:
    """Explicit low-rank factor of an RBF Gram matrix.

    matrix has one row per sample; matrix @ matrix.T approximates the exact
    Gram matrix, with unit diagonal up to sampling error. config is fully
    resolved (explicit bandwidth) and input_dim records the raw dimensionality
    so the same map can be applied to new points.
    """

    matrix: np.ndarray
    config: KernelConfig
    input_dim: int = -1

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LabelFactor:
    """Exact factor of a categorical label Gram matrix.

    matrix is the n x c one-hot indicator; matrix @ matrix.T is the 0/1
    same-class Gram matrix. Full column rank iff every class occurs.
    """

    matrix: np.ndarray
    num_classes: int

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LabelVector:
    """Length-n categorical labels with values in {0, ..., num_classes - 1}."""

    values: np.ndarray
    num_classes: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ShapeError(f"label values must be 1-D, got shape {values.shape}")
        if self.num_classes < 1:
            raise ValidationError(f"num_classes must be >= 1, got {self.num_classes}")
        if values.size and (values.min() < 0 or values.max() >= self.num_classes):
            raise ValidationError(
                f"label values must lie in [0, {self.num_classes}), "
                f"got range [{values.min()}, {values.max()}]"
            )

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def from_values(cls, values, num_classes: int | None = None) -> "LabelVector":
        values = np.asarray(values, dtype=np.int64)
        if num_classes is None:
            if values.size == 0:
                raise ValidationError("cannot infer num_classes from an empty label vector")
            num_classes = int(values.max()) + 1
        return cls(values=values, num_classes=num_classes)


def median_bandwidth(x, subsample: int = MEDIAN_SUBSAMPLE, seed: int = 0) -> float:
    """Median of pairwise Euclidean distances over a seeded row subsample.

    Deterministic for a fixed seed; when subsample >= n all rows are used.
    Raises DegenerateInputError when the median distance is zero (fewer than
    two distinct rows in the subsample).
    """
    x = as_float64_matrix(x, "median_bandwidth input")
    n = x.shape[0]
    if n < 2:
        raise DegenerateInputError("median_bandwidth needs at least 2 rows")
    if subsample < 2:
        raise ConfigError(f"subsample must be >= 2, got {subsample}")
    if n > subsample:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(n, size=subsample, replace=False))
        x = x[idx]
    med = float(np.median(pdist(x)))
    if med <= 0.0:
        raise DegenerateInputError(
            "median pairwise distance is zero; input has fewer than 2 distinct rows"
        )
    return med


def resolve_bandwidth(cfg: KernelConfig, x) -> KernelConfig:
    """Return a config with an explicit bandwidth, running the median heuristic if needed."""
    if cfg.bandwidth_mode == "explicit":
        return cfg
    sigma = median_bandwidth(x, subsample=MEDIAN_SUBSAMPLE, seed=cfg.seed)
    return replace(cfg, bandwidth=sigma, bandwidth_mode="explicit")


def rff_weights(cfg: KernelConfig, input_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded frequency/phase draw for the cosine feature map.

    Frequencies are Gaussian with covariance sigma^-2 I, phases uniform on
    [0, 2*pi). The draw depends only on (seed, rff_dim, input_dim, bandwidth),
    so the same config replays bit-identically across runs.
    """
    if cfg.bandwidth_mode != "explicit":
        raise ConfigError("bandwidth must be resolved before drawing RFF weights")
    rng = np.random.default_rng(cfg.seed)
    freqs = rng.standard_normal((cfg.rff_dim, input_dim)) / cfg.bandwidth
    phases = rng.uniform(0.0, 2.0 * np.pi, size=cfg.rff_dim)
    return freqs, phases


def rff_features(x, cfg: KernelConfig) -> np.ndarray:
    """Apply the cosine feature map r(x) = sqrt(2/D) * cos(W x + b) row-wise."""
    x = as_float64_matrix(x, "rff input")
    freqs, phases = rff_weights(cfg, x.shape[1])
    projected = x @ freqs.T
    projected += phases
    np.cos(projected, out=projected)
    projected *= np.sqrt(2.0 / cfg.rff_dim)
    return register(projected)


def rff_factor(x, cfg: KernelConfig) -> RffFactor:
    """Build the n x D random-feature factor of the RBF Gram matrix of x.

    Resolves the bandwidth (median heuristic) against x when the config asks
    for it; the returned factor carries the resolved config.
    """
    x = as_float64_matrix(x, "rff input")
    resolved = resolve_bandwidth(cfg, x)
    return RffFactor(
        matrix=rff_features(x, resolved), config=resolved, input_dim=x.shape[1]
    )


def label_factor(labels: LabelVector) -> LabelFactor:
    """One-hot indicator factor of the categorical label Gram matrix."""
    if len(labels) == 0:
        raise ValidationError("cannot build a label factor from an empty label vector")
    onehot = np.zeros((len(labels), labels.num_classes), dtype=np.float64)
    onehot[np.arange(len(labels)), labels.values] = 1.0
    return LabelFactor(matrix=onehot, num_classes=labels.num_classes)


def center(m) -> np.ndarray:
    """Subtract per-column means: H @ m computed via the rank-one update form.

    The n x n centering matrix is never materialized; memory stays O(n * k).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"center expects a 2-D matrix, got shape {m.shape}")
    if m.shape[0] == 0:
        raise ShapeError("center expects at least one row")
    return register(m - m.mean(axis=0, keepdims=True))


def exact_rbf_gram(x, bandwidth: float) -> np.ndarray:
    """Dense RBF Gram matrix. Small-n test oracle only: O(n^2) memory."""
    x = as_float64_matrix(x, "gram input")
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / (2.0 * bandwidth**2))
