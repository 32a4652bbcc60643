"""Empirical statistical-dependence estimators.

All estimators reduce to a squared Frobenius norm of a centered cross-product
between low-rank factors, evaluated in an order that keeps peak memory at
O(n * max(r, D, c)): the n x r representation is formed first, centered, and
only then multiplied against the other factor.
"""

import numpy as np

from .audit import register
from .errors import ShapeError
from .kernels import KernelConfig, LabelFactor, RffFactor, center, rff_factor


def dep_features(z, other) -> float:
    """Dependence between an explicit representation and another factor.

    Computes (1/n^2) * ||center(z)^T other||_F^2, the squared-covariance sum
    over the columns of both matrices.
    """
    z = np.asarray(z, dtype=np.float64)
    other = np.asarray(other, dtype=np.float64)
    if z.ndim != 2 or other.ndim != 2:
        raise ShapeError("dep_features expects 2-D matrices")
    if z.shape[0] != other.shape[0]:
        raise ShapeError(
            f"row counts differ: {z.shape[0]} vs {other.shape[0]}"
        )
    n = z.shape[0]
    cross = register(center(z).T @ other)
    return float(np.sum(cross * cross) / float(n) ** 2)


def dep_vs_labels(weights, lx: RffFactor, lf: LabelFactor) -> float:
    """Dependence of the encoded representation on a categorical attribute.

    weights is the r x D encoder matrix applied to the feature factor lx; the
    result is the squared Frobenius norm of the centered cross-product with
    the one-hot label factor, normalized by n^2.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] != lx.matrix.shape[1]:
        raise ShapeError(
            f"weights shape {weights.shape} does not match feature dim "
            f"{lx.matrix.shape[1]}"
        )
    z = register(lx.matrix @ weights.T)
    return dep_features(z, lf.matrix)


def dep_cross(weights_i, lx_i: RffFactor, weights_t, lx_t: RffFactor) -> float:
    """Cross-modal dependence between two encoded representations.

    Equals (1/n^2) * ||Z_i^T H Z_t||_F^2 with Z = L @ weights^T on each side;
    the two sides must be built over the same n samples.
    """
    weights_i = np.asarray(weights_i, dtype=np.float64)
    weights_t = np.asarray(weights_t, dtype=np.float64)
    if lx_i.n != lx_t.n:
        raise ShapeError(f"sample counts differ: {lx_i.n} vs {lx_t.n}")
    if weights_i.shape[1] != lx_i.matrix.shape[1]:
        raise ShapeError("image-side weights do not match feature dim")
    if weights_t.shape[1] != lx_t.matrix.shape[1]:
        raise ShapeError("text-side weights do not match feature dim")
    z_i = register(lx_i.matrix @ weights_i.T)
    z_t = register(lx_t.matrix @ weights_t.T)
    return dep_features(z_i, z_t)


def hsic_factors(la, lb) -> float:
    """Biased HSIC estimate (1/n^2) * Tr[K_a H K_b H] from explicit factors."""
    la = np.asarray(la, dtype=np.float64)
    lb = np.asarray(lb, dtype=np.float64)
    if la.shape[0] != lb.shape[0]:
        raise ShapeError(f"row counts differ: {la.shape[0]} vs {lb.shape[0]}")
    # Tr[K_a H K_b H] = ||L_a^T H L_b||_F^2; centering one side supplies both
    # H's because H is an idempotent projection.
    return dep_features(la, lb)


def hsic(a, b, cfg_a: KernelConfig, cfg_b: KernelConfig) -> float:
    """Biased HSIC diagnostic between two raw feature sets via RFF factors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("hsic expects 2-D matrices")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"sample counts differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 4:
        raise ShapeError("hsic needs at least 4 samples")
    la = rff_factor(a, cfg_a).matrix
    lb = rff_factor(b, cfg_b).matrix
    return hsic_factors(la, lb)
