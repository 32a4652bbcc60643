"""Alternating closed-form training of the image and text encoders.

Without ground-truth labels, target and sensitive attributes are initialized
from zero-shot cosine predictions; the target pseudo-labels are refined after
every alternating update while the sensitive pseudo-labels stay frozen for the
whole run (later representations are progressively scrubbed of the sensitive
attribute, so re-predicting it would only degrade the estimate).

The text side is trained over the per-sample expansion of the class-prompt
features (row i is the prompt embedding of sample i's current pseudo-label).
All expanded-side solver inputs collapse to c x k group aggregates, so the
expansion is never materialized as an n x D matrix.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .audit import register
from .dependence import dep_features
from .errors import ConfigError, DegenerateInputError, ShapeError
from .kernels import (
    KernelConfig,
    LabelVector,
    as_float64_matrix,
    label_factor,
    rff_factor,
)
from .solver import (
    DEFAULT_GAMMA,
    Encoder,
    SolveSpec,
    apply_encoder,
    objective_from_representations,
    solve_encoder,
    solve_weights_from_parts,
)


@dataclass(frozen=True)
class TrainConfig:
    """All scalars the training algorithm leaves to the experimenter.

    r defaults to (number of target classes - 1) when None. bandwidth None
    selects the median heuristic per side; a float pins both sides explicitly.
    """

    tau_i: float = 0.7
    tau_t: float = 0.7
    tau_z: float = 0.7
    gamma: float = DEFAULT_GAMMA
    r: int | None = None
    rff_dim: int = 1000
    iters: int = 10
    seed: int = 0
    supervised_y: bool = False
    supervised_s: bool = False
    balance_presample: bool = False
    bandwidth: float | None = None

    def __post_init__(self):
        if self.tau_i < 0 or self.tau_t < 0 or self.tau_z < 0:
            raise ConfigError("tau_i, tau_t and tau_z must be >= 0")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.iters < 0:
            raise ConfigError(f"iters must be >= 0, got {self.iters}")
        if self.r is not None and self.r < 1:
            raise ConfigError(f"r must be >= 1, got {self.r}")
        if self.rff_dim < 1:
            raise ConfigError(f"rff_dim must be >= 1, got {self.rff_dim}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True)
class TrainData:
    """Ingested dataset: frozen-encoder embeddings plus optional labels.

    x_text holds one row per target class, x_text_sensitive one row per
    sensitive class (optional when ground-truth sensitive labels are used).
    """

    x_img: np.ndarray
    x_text: np.ndarray
    x_text_sensitive: np.ndarray | None = None
    y: LabelVector | None = None
    s: LabelVector | None = None


@dataclass(frozen=True)
class IterationRecord:
    """Per-iteration monitoring: objective, dependence terms, agreement.

    agreement is the fraction of pseudo-labels unchanged by this iteration's
    refinement (1.0 at initialization and throughout supervised runs). The
    fingerprints are content hashes of the label vectors actually consumed,
    so immutability of the sensitive labels is auditable after the fact.
    """

    iteration: int
    objective: float
    dep_zi_y: float
    dep_zi_s: float
    dep_zt_y: float | None
    dep_zt_s: float | None
    dep_cross: float | None
    agreement: float
    pseudo_y_fingerprint: str
    sensitive_fingerprint: str

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "objective": self.objective,
            "dep_zi_y": self.dep_zi_y,
            "dep_zi_s": self.dep_zi_s,
            "dep_zt_y": self.dep_zt_y,
            "dep_zt_s": self.dep_zt_s,
            "dep_cross": self.dep_cross,
            "agreement": self.agreement,
            "pseudo_y_fingerprint": self.pseudo_y_fingerprint,
            "sensitive_fingerprint": self.sensitive_fingerprint,
        }


@dataclass(frozen=True)
class TrainedModel:
    """Both learned encoders plus everything needed to predict and audit.

    encoder_txt and class_text_reps are None when iters=0 (the loop never
    ran, so only the initialization image encoder exists). pseudo_y_* and
    sensitive_labels align with the rows actually trained on (after the
    optional balancing subsample recorded in train_indices).
    """

    encoder_img: Encoder
    encoder_txt: Encoder | None
    class_text_reps: np.ndarray | None
    history: tuple
    num_classes: int
    pseudo_y_initial: np.ndarray
    pseudo_y_final: np.ndarray
    sensitive_labels: np.ndarray
    train_indices: np.ndarray | None = None


def _fingerprint(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values).tobytes()).hexdigest()[:16]


def zero_shot_predict(z_img, z_txt) -> LabelVector:
    """Per-row argmax of cosine similarity against one row per class.

    Ties break toward the lowest class index. Rows (or class vectors) with
    zero norm contribute -inf similarity; it is an error for every image row
    to have zero norm.
    """
    z_img = np.asarray(z_img, dtype=np.float64)
    z_txt = np.asarray(z_txt, dtype=np.float64)
    if z_img.ndim != 2 or z_txt.ndim != 2:
        raise ShapeError("zero_shot_predict expects 2-D inputs")
    if z_img.shape[1] != z_txt.shape[1]:
        raise ShapeError(
            f"image and class-vector dimensions differ: "
            f"{z_img.shape[1]} vs {z_txt.shape[1]}"
        )
    img_norms = np.linalg.norm(z_img, axis=1)
    txt_norms = np.linalg.norm(z_txt, axis=1)
    if not np.any(img_norms > 0):
        raise DegenerateInputError("every image row has zero norm")
    safe_img = np.where(img_norms > 0, img_norms, 1.0)
    safe_txt = np.where(txt_norms > 0, txt_norms, 1.0)
    sims = (z_img / safe_img[:, None]) @ (z_txt / safe_txt[:, None]).T
    sims[img_norms == 0, :] = -np.inf
    sims[:, txt_norms == 0] = -np.inf
    preds = np.argmax(sims, axis=1)
    return LabelVector(values=preds, num_classes=z_txt.shape[0])


def balanced_presample(yhat: LabelVector, seed: int = 0) -> np.ndarray:
    """Seeded row subset in which every predicted class has the minimum count.

    Returns sorted indices; raises if any predicted class is empty.
    """
    counts = np.bincount(yhat.values, minlength=yhat.num_classes)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise DegenerateInputError(
            f"predicted class {int(empty[0])} is empty; cannot balance"
        )
    keep = int(counts.min())
    rng = np.random.default_rng(seed)
    chosen = [
        rng.choice(np.flatnonzero(yhat.values == k), size=keep, replace=False)
        for k in range(yhat.num_classes)
    ]
    return np.sort(np.concatenate(chosen))


def _expanded_constraint(lc: np.ndarray, y_onehot: np.ndarray, gamma: float) -> np.ndarray:
    """Constraint matrix of the per-sample expansion of a c-row factor.

    With L_exp = y_onehot @ lc, computes (1/n) L_exp^T H L_exp + gamma I via
    the c x c middle matrix diag(counts) - counts counts^T / n.
    """
    n = y_onehot.shape[0]
    counts = y_onehot.sum(axis=0)
    middle = np.diag(counts) - np.outer(counts, counts) / n
    c = lc.T @ middle @ lc
    c /= n
    c[np.diag_indices_from(c)] += gamma
    return c


def _expanded_cross(lc: np.ndarray, y_onehot: np.ndarray, m: np.ndarray) -> np.ndarray:
    """L_exp^T H m for the expanded factor, via c x k group aggregates."""
    n = y_onehot.shape[0]
    counts = y_onehot.sum(axis=0)
    group_sums = register(y_onehot.T @ m)
    colsum = m.sum(axis=0)
    return lc.T @ (group_sums - np.outer(counts, colsum) / n)


def _orient_text_encoder(
    encoder_txt: Encoder, class_reps: np.ndarray, z_img: np.ndarray, yhat: LabelVector
) -> tuple[Encoder, np.ndarray]:
    """Resolve the per-component sign freedom of the text encoder.

    Every objective term is a squared norm, so negating any text-encoder row
    is an exact symmetry of the solve but changes cosine predictions. Among
    the symmetric optima, pick the one whose components correlate positively
    with the image-side components over the training samples; that keeps the
    class-index meaning of the refined pseudo-labels anchored.
    """
    expanded = class_reps[yhat.values]
    z_centered = z_img - z_img.mean(axis=0, keepdims=True)
    flips = np.where(np.einsum("ij,ij->j", z_centered, expanded) < 0, -1.0, 1.0)
    if np.all(flips > 0):
        return encoder_txt, class_reps
    oriented = Encoder(
        weights=encoder_txt.weights * flips[:, None],
        kernel=encoder_txt.kernel,
        input_dim=encoder_txt.input_dim,
        gamma=encoder_txt.gamma,
    )
    return oriented, class_reps * flips[None, :]


def _solve_expanded_text(
    lc_factor,
    y_onehot: np.ndarray,
    ly_mat: np.ndarray,
    ls_mat: np.ndarray,
    z_other: np.ndarray,
    tau: float,
    tau_z: float,
    gamma: float,
    r: int,
    input_dim: int,
):
    """Closed-form text-side solve over the expanded per-sample prompt factor."""
    n = y_onehot.shape[0]
    lc = lc_factor.matrix
    dim = lc.shape[1]
    objective_mat = np.zeros((dim, dim))
    for coef, m in ((1.0, ly_mat), (-tau, ls_mat), (tau_z, z_other)):
        if coef == 0.0:
            continue
        p = _expanded_cross(lc, y_onehot, m)
        objective_mat += coef * (p @ p.T)
    objective_mat /= float(n) ** 2
    constraint_mat = _expanded_constraint(lc, y_onehot, gamma)
    solution = solve_weights_from_parts(objective_mat, constraint_mat, r)
    encoder = Encoder(
        weights=np.ascontiguousarray(solution.eigenvectors.T),
        kernel=lc_factor.config,
        input_dim=input_dim,
        gamma=gamma,
    )
    return encoder, solution


def train(data: TrainData, cfg: TrainConfig) -> TrainedModel:
    """Alternating closed-form training, with or without ground-truth labels.

    Implements: pseudo-label initialization by zero-shot cosine prediction
    (skipped per attribute when supervised), an initialization solve of the
    image encoder without the alignment term, then iters rounds of
    text-solve / image-solve / pseudo-label refinement. The sensitive labels
    are never re-predicted after initialization. In pseudo-label mode the
    loop exits early once the refined labels stop changing.
    """
    x_img = as_float64_matrix(data.x_img, "image embeddings")
    x_text = as_float64_matrix(data.x_text, "class-text embeddings")
    n, dim = x_img.shape
    num_classes = x_text.shape[0]
    if num_classes < 2:
        raise ConfigError("need at least 2 class-text rows to train")
    if x_text.shape[1] != dim:
        raise ShapeError(
            f"class-text dimension {x_text.shape[1]} != image dimension {dim}"
        )

    # --- pseudo/true label initialization -------------------------------
    if cfg.supervised_y:
        if data.y is None:
            raise ConfigError("supervised_y=True but no ground-truth y provided")
        if data.y.num_classes != num_classes:
            raise ConfigError(
                f"y has {data.y.num_classes} classes but x_text has "
                f"{num_classes} rows"
            )
        if len(data.y) != n:
            raise ShapeError(f"y has {len(data.y)} entries, expected {n}")
        yhat = data.y
    else:
        yhat = zero_shot_predict(x_img, x_text)

    if cfg.supervised_s:
        if data.s is None:
            raise ConfigError("supervised_s=True but no ground-truth s provided")
        if len(data.s) != n:
            raise ShapeError(f"s has {len(data.s)} entries, expected {n}")
        shat = data.s
    else:
        if data.x_text_sensitive is None:
            raise ConfigError(
                "no sensitive attribute source: provide sensitive-prompt "
                "embeddings or ground-truth s with supervised_s=True"
            )
        x_ts = as_float64_matrix(data.x_text_sensitive, "sensitive-text embeddings")
        if x_ts.shape[1] != dim:
            raise ShapeError(
                f"sensitive-text dimension {x_ts.shape[1]} != image dimension {dim}"
            )
        shat = zero_shot_predict(x_img, x_ts)

    seed_img, seed_txt, seed_presample = (
        int(s) for s in np.random.SeedSequence(cfg.seed).generate_state(3, dtype=np.uint64)
    )

    train_indices = None
    if cfg.balance_presample:
        train_indices = balanced_presample(yhat, seed=seed_presample)
        x_img = x_img[train_indices]
        yhat = LabelVector(values=yhat.values[train_indices], num_classes=yhat.num_classes)
        shat = LabelVector(values=shat.values[train_indices], num_classes=shat.num_classes)
        n = x_img.shape[0]

    r = cfg.r if cfg.r is not None else max(1, num_classes - 1)

    mode = "explicit" if cfg.bandwidth is not None else "median_heuristic"
    lx_img = rff_factor(
        x_img,
        KernelConfig(cfg.bandwidth, cfg.rff_dim, seed_img, bandwidth_mode=mode),
    )
    lc_txt = rff_factor(
        x_text,
        KernelConfig(cfg.bandwidth, cfg.rff_dim, seed_txt, bandwidth_mode=mode),
    )

    ls = label_factor(shat)
    sensitive_values = shat.values.copy()
    sensitive_fp = _fingerprint(sensitive_values)
    pseudo_y_initial = yhat.values.copy()

    # --- initialization solve: image side, alignment term absent --------
    ly = label_factor(yhat)
    spec_init = SolveSpec(tau=cfg.tau_i, tau_z=0.0, gamma=cfg.gamma, r=r, z_other=None)
    encoder_img, eig = solve_encoder(lx_img, ly, ls, spec_init)
    z_img = register(lx_img.matrix @ encoder_img.weights.T)

    history = [
        IterationRecord(
            iteration=0,
            objective=eig.objective,
            dep_zi_y=dep_features(z_img, ly.matrix),
            dep_zi_s=dep_features(z_img, ls.matrix),
            dep_zt_y=None,
            dep_zt_s=None,
            dep_cross=None,
            agreement=1.0,
            pseudo_y_fingerprint=_fingerprint(yhat.values),
            sensitive_fingerprint=sensitive_fp,
        )
    ]

    encoder_txt = None
    class_text_reps = None

    for i in range(cfg.iters):
        y_onehot = ly.matrix
        encoder_txt, _ = _solve_expanded_text(
            lc_txt,
            y_onehot,
            ly_mat=ly.matrix,
            ls_mat=ls.matrix,
            z_other=z_img,
            tau=cfg.tau_t,
            tau_z=cfg.tau_z,
            gamma=cfg.gamma,
            r=r,
            input_dim=dim,
        )
        class_text_reps = lc_txt.matrix @ encoder_txt.weights.T
        z_txt_expanded = register(class_text_reps[yhat.values])

        spec_img = SolveSpec(
            tau=cfg.tau_i, tau_z=cfg.tau_z, gamma=cfg.gamma, r=r, z_other=z_txt_expanded
        )
        encoder_img, _ = solve_encoder(lx_img, ly, ls, spec_img)
        z_img = register(lx_img.matrix @ encoder_img.weights.T)

        encoder_txt, class_text_reps = _orient_text_encoder(
            encoder_txt, class_text_reps, z_img, yhat
        )
        z_txt_expanded = register(class_text_reps[yhat.values])

        if cfg.supervised_y:
            yhat_next = yhat
        else:
            yhat_next = zero_shot_predict(z_img, class_text_reps)
        agreement = float(np.mean(yhat_next.values == yhat.values))

        terms = objective_from_representations(
            z_img, z_txt_expanded, ly, ls, cfg.tau_i, cfg.tau_t, cfg.tau_z
        )
        history.append(
            IterationRecord(
                iteration=i + 1,
                objective=terms["objective"],
                dep_zi_y=terms["dep_zi_y"],
                dep_zi_s=terms["dep_zi_s"],
                dep_zt_y=terms["dep_zt_y"],
                dep_zt_s=terms["dep_zt_s"],
                dep_cross=terms["dep_cross"],
                agreement=agreement,
                pseudo_y_fingerprint=_fingerprint(yhat_next.values),
                sensitive_fingerprint=sensitive_fp,
            )
        )

        converged = not cfg.supervised_y and agreement == 1.0
        yhat = yhat_next
        ly = label_factor(yhat)
        if converged:
            break

    return TrainedModel(
        encoder_img=encoder_img,
        encoder_txt=encoder_txt,
        class_text_reps=class_text_reps,
        history=tuple(history),
        num_classes=num_classes,
        pseudo_y_initial=pseudo_y_initial,
        pseudo_y_final=yhat.values.copy(),
        sensitive_labels=sensitive_values,
        train_indices=train_indices,
    )


def predict(model: TrainedModel, x) -> LabelVector:
    """Zero-shot prediction with the debiased encoders."""
    if model.encoder_txt is None or model.class_text_reps is None:
        raise ConfigError(
            "model was trained with iters=0 and has no text encoder; "
            "cosine prediction is undefined"
        )
    z = apply_encoder(model.encoder_img, x)
    return zero_shot_predict(z, model.class_text_reps)
