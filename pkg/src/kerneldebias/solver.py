"""Closed-form encoder solver.

Each encoder update maximizes

    (1/n^2) ( ||Z^T H L_Y||_F^2 - tau ||Z^T H L_S||_F^2 + tau_z ||Z^T H Z_O||_F^2 )

over representations Z = L_X @ weights^T whose components are unit-variance,
mutually uncorrelated and norm-regularized. The maximum is attained in closed
form by the top eigenvectors of a symmetric-definite generalized eigenproblem
assembled from D x c cross-products, so no n x n matrix is ever built and the
cost is O(n D max(c, r) + D^3).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .audit import register
from .dependence import dep_cross, dep_features, dep_vs_labels
from .errors import ConfigError, NumericalError, ShapeError
from .kernels import (
    KernelConfig,
    LabelFactor,
    RffFactor,
    as_float64_matrix,
    center,
    rff_features,
)

DEFAULT_GAMMA = 1e-4


@dataclass(frozen=True)
class SolveSpec:
    """Scalars of one encoder subproblem.

    tau weighs the sensitive-attribute penalty, tau_z the alignment reward
    against the fixed other-side representation z_other (omitted when None).
    gamma > 0 regularizes the disentanglement constraint and makes the
    constraint matrix strictly positive definite.
    """

    tau: float
    tau_z: float = 0.0
    gamma: float = DEFAULT_GAMMA
    r: int = 1
    z_other: np.ndarray | None = None

    def __post_init__(self):
        if self.tau < 0 or not np.isfinite(self.tau):
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.tau_z < 0 or not np.isfinite(self.tau_z):
            raise ConfigError(f"tau_z must be >= 0, got {self.tau_z}")
        if self.gamma <= 0 or not np.isfinite(self.gamma):
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if int(self.r) < 1:
            raise ConfigError(f"r must be >= 1, got {self.r}")


@dataclass(frozen=True)
class Encoder:
    """Learned kernel-space map.

    weights (r x D) acts on the random-feature embedding of a point; kernel
    is the fully resolved feature-map recipe and input_dim the expected raw
    dimensionality, so the encoder can be applied to new points and guarded
    against mismatched data.
    """

    weights: np.ndarray
    kernel: KernelConfig
    input_dim: int
    gamma: float

    @property
    def r(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class EigenSolution:
    """Spectrum of one encoder subproblem.

    eigenvalues is the full descending spectrum; eigenvectors holds the top-r
    columns (constraint-orthonormal, sign-fixed). objective is the attained
    subproblem value, equal to the sum of the r largest eigenvalues.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    objective: float


def constraint_matrix(feature_matrix: np.ndarray, gamma: float) -> np.ndarray:
    """(1/n) L^T H L + gamma I via the rank-one update form (no n x D copy)."""
    n = feature_matrix.shape[0]
    gram = register(feature_matrix.T @ feature_matrix)
    mu = feature_matrix.mean(axis=0)
    c = (gram - n * np.outer(mu, mu)) / n
    c[np.diag_indices_from(c)] += gamma
    return c


def _objective_matrix(feature_matrix, ly, ls, spec: SolveSpec) -> np.ndarray:
    """Assemble the D x D numerator from centered D x c cross-products."""
    n, dim = feature_matrix.shape
    out = np.zeros((dim, dim))
    terms = [(1.0, ly.matrix), (-spec.tau, ls.matrix)]
    if spec.z_other is not None:
        z_other = as_float64_matrix(spec.z_other, "z_other")
        if z_other.shape[0] != n:
            raise ShapeError(
                f"z_other has {z_other.shape[0]} rows, expected {n}"
            )
        terms.append((spec.tau_z, z_other))
    for coef, mat in terms:
        if coef == 0.0:
            continue
        if mat.shape[0] != n:
            raise ShapeError(f"factor has {mat.shape[0]} rows, expected {n}")
        p = register(feature_matrix.T @ center(mat))
        out += coef * (p @ p.T)
    # Folding 1/n^2 into the matrix makes the eigenvalue sum equal the
    # attained objective value directly.
    out /= float(n) ** 2
    return out


def solve_weights_from_parts(
    objective_mat: np.ndarray, constraint_mat: np.ndarray, r: int
) -> EigenSolution:
    """Solve objective_mat u = lambda constraint_mat u for the top-r pairs.

    The constraint matrix is strictly positive definite (gamma > 0), so the
    generalized problem is reduced via its Cholesky factor by LAPACK. Returned
    eigenvectors satisfy u^T C u = 1, are sorted by descending eigenvalue and
    sign-fixed so the first non-negligible component is positive.
    """
    dim = objective_mat.shape[0]
    if r > dim:
        raise ConfigError(f"r={r} exceeds the feature dimension {dim}")
    try:
        eigvals, eigvecs = scipy.linalg.eigh(
            objective_mat, constraint_mat, lower=True, check_finite=False
        )
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        cond = float(np.linalg.cond(constraint_mat))
        raise NumericalError(
            f"generalized eigensolver failed: {exc}; "
            f"constraint matrix condition number {cond:.3e}"
        ) from exc
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals = eigvals[order]
    top = eigvecs[:, order[:r]].copy()
    for j in range(top.shape[1]):
        col = top[:, j]
        nonzero = np.flatnonzero(np.abs(col) > 1e-12 * max(1.0, np.abs(col).max()))
        if nonzero.size and col[nonzero[0]] < 0:
            top[:, j] = -col
    objective = float(eigvals[:r].sum())
    return EigenSolution(eigenvalues=eigvals, eigenvectors=top, objective=objective)


def solve_encoder(
    lx: RffFactor, ly: LabelFactor, ls: LabelFactor, spec: SolveSpec
) -> tuple[Encoder, EigenSolution]:
    """Closed-form optimal encoder for one side, holding the other fixed.

    Returns the encoder whose rows are the top-r generalized eigenvectors
    (the minimum-norm optimum expressed directly on the feature map) together
    with the eigensolution; the reported objective equals the attained value
    of the subproblem.
    """
    n = lx.n
    if ly.n != n or ls.n != n:
        raise ShapeError(
            f"row counts differ: features {n}, target labels {ly.n}, "
            f"sensitive labels {ls.n}"
        )
    if spec.r > lx.matrix.shape[1]:
        raise ConfigError(
            f"r={spec.r} exceeds the feature dimension {lx.matrix.shape[1]}"
        )
    objective_mat = _objective_matrix(lx.matrix, ly, ls, spec)
    constraint_mat = constraint_matrix(lx.matrix, spec.gamma)
    solution = solve_weights_from_parts(objective_mat, constraint_mat, spec.r)
    encoder = Encoder(
        weights=np.ascontiguousarray(solution.eigenvectors.T),
        kernel=lx.config,
        input_dim=lx.input_dim,
        gamma=spec.gamma,
    )
    return encoder, solution


def apply_encoder(encoder: Encoder, x) -> np.ndarray:
    """Encode raw points: row i of the result is weights @ r(x_i)."""
    x = as_float64_matrix(x, "encoder input")
    if encoder.input_dim >= 0 and x.shape[1] != encoder.input_dim:
        raise ShapeError(
            f"encoder expects inputs of dimension {encoder.input_dim}, "
            f"got {x.shape[1]}"
        )
    feats = rff_features(x, encoder.kernel)
    return register(feats @ encoder.weights.T)


def constraint_residual(encoder: Encoder, lx: RffFactor) -> float:
    """Frobenius distance of the encoder from the disentanglement constraint.

    Measures || W ((1/n) L^T H L + gamma I) W^T - I_r ||_F on the training
    factor; every solved encoder satisfies this to tight tolerance.
    """
    c = constraint_matrix(lx.matrix, encoder.gamma)
    w = encoder.weights
    return float(np.linalg.norm(w @ c @ w.T - np.eye(w.shape[0])))


def objective_value(
    enc_i: Encoder,
    enc_t: Encoder,
    lx_i: RffFactor,
    lx_t: RffFactor,
    ly: LabelFactor,
    ls: LabelFactor,
    tau_i: float,
    tau_t: float,
    tau_z: float,
) -> float:
    """Five-term joint objective, composed from the dependence estimators.

    Both factors must be built over the same n samples (the text side in
    expanded per-sample form). Used for monitoring and tests.
    """
    n = lx_i.n
    if lx_t.n != n or ly.n != n or ls.n != n:
        raise ShapeError("all factors must share the same sample count")
    value = dep_vs_labels(enc_i.weights, lx_i, ly)
    value -= tau_i * dep_vs_labels(enc_i.weights, lx_i, ls)
    value += dep_vs_labels(enc_t.weights, lx_t, ly)
    value -= tau_t * dep_vs_labels(enc_t.weights, lx_t, ls)
    value += tau_z * dep_cross(enc_i.weights, lx_i, enc_t.weights, lx_t)
    return float(value)


def objective_from_representations(
    z_i: np.ndarray,
    z_t: np.ndarray,
    ly: LabelFactor,
    ls: LabelFactor,
    tau_i: float,
    tau_t: float,
    tau_z: float,
) -> dict:
    """Joint objective and its five terms from already-encoded representations."""
    terms = {
        "dep_zi_y": dep_features(z_i, ly.matrix),
        "dep_zi_s": dep_features(z_i, ls.matrix),
        "dep_zt_y": dep_features(z_t, ly.matrix),
        "dep_zt_s": dep_features(z_t, ls.matrix),
        "dep_cross": dep_features(z_i, z_t),
    }
    terms["objective"] = (
        terms["dep_zi_y"]
        - tau_i * terms["dep_zi_s"]
        + terms["dep_zt_y"]
        - tau_t * terms["dep_zt_s"]
        + tau_z * terms["dep_cross"]
    )
    return terms
