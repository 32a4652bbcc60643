"""Fairness and group-robustness metrics for hard-label predictions."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError
from .kernels import LabelVector


@dataclass(frozen=True)
class MetricsReport:
    """Evaluation summary with a stable JSON shape.

    gap always equals avg - wg; wg is the minimum accuracy over nonempty
    (target, sensitive) cells. max_skew maps a ranking attribute name to its
    top-k log-imbalance. dep_* fields are representation diagnostics filled
    in by the evaluation pipeline when available.
    """

    eod: float | None
    avg_acc: float
    wg_acc: float
    gap: float
    group_accs: dict
    max_skew: dict = field(default_factory=dict)
    dep_zy: float | None = None
    dep_zs: float | None = None
    dep_zy_probe: float | None = None
    dep_zs_probe: float | None = None

    def to_dict(self) -> dict:
        return {
            "eod": self.eod,
            "avg": self.avg_acc,
            "wg": self.wg_acc,
            "gap": self.gap,
            "groups": [
                {"y": y, "s": s, "count": count, "accuracy": acc}
                for (y, s), (count, acc) in sorted(self.group_accs.items())
            ],
            "max_skew": dict(self.max_skew),
            "dep_zy": self.dep_zy,
            "dep_zs": self.dep_zs,
            "dep_zy_probe": self.dep_zy_probe,
            "dep_zs_probe": self.dep_zs_probe,
        }


def _aligned_values(yhat, y, s=None):
    yhat = yhat.values if isinstance(yhat, LabelVector) else np.asarray(yhat)
    y = y.values if isinstance(y, LabelVector) else np.asarray(y)
    if yhat.shape != y.shape:
        raise ShapeError(f"length mismatch: yhat {yhat.shape} vs y {y.shape}")
    if s is None:
        return yhat, y
    s = s.values if isinstance(s, LabelVector) else np.asarray(s)
    if s.shape != y.shape:
        raise ShapeError(f"length mismatch: s {s.shape} vs y {y.shape}")
    return yhat, y, s


def eod(yhat, y, s, positive_class: int = 1) -> float:
    """Equal Opportunity Difference: absolute TPR gap across sensitive groups.

    |P(yhat=1 | y=1, s=1) - P(yhat=1 | y=1, s=0)| with "1" meaning
    positive_class for the target attribute. Both conditioning cells must be
    nonempty; target and sensitive attributes must be binary.
    """
    yhat, y, s = _aligned_values(yhat, y, s)
    for name, vals in (("y", y), ("s", s)):
        uniq = np.unique(vals)
        if uniq.size > 2 or not np.isin(uniq, (0, 1)).all():
            raise ValidationError(f"eod requires binary {name} labels in {{0, 1}}")
    rates = {}
    for group in (1, 0):
        cell = (y == positive_class) & (s == group)
        if not cell.any():
            raise ValidationError(
                f"conditioning cell (y={positive_class}, s={group}) is empty"
            )
        rates[group] = float(np.mean(yhat[cell] == positive_class))
    return abs(rates[1] - rates[0])


def group_accuracies(yhat, y, s) -> MetricsReport:
    """Per-(target, sensitive)-cell accuracy plus worst-group/average/gap.

    avg is the sample-weighted overall accuracy; wg the minimum over nonempty
    cells; gap their difference.
    """
    yhat, y, s = _aligned_values(yhat, y, s)
    if y.size == 0:
        raise ValidationError("cannot compute group accuracies on empty labels")
    groups = {}
    for yv in np.unique(y):
        for sv in np.unique(s):
            cell = (y == yv) & (s == sv)
            count = int(cell.sum())
            if count == 0:
                continue
            acc = float(np.mean(yhat[cell] == y[cell]))
            groups[(int(yv), int(sv))] = (count, acc)
    avg = float(np.mean(yhat == y))
    wg = min(acc for _, acc in groups.values())
    return MetricsReport(
        eod=None, avg_acc=avg, wg_acc=wg, gap=avg - wg, group_accs=groups
    )


def max_skew_at_k(scores, s, k: int) -> float:
    """Maximum log-imbalance of sensitive classes among the top-k ranked samples.

    Samples are ranked by score descending with ties broken by original index.
    Each class's top-k share is compared against the uniform desired share
    1/c; classes absent from the top-k are smoothed to a share of 1/(2k) so
    the skew stays finite.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    s_vals = s.values if isinstance(s, LabelVector) else np.asarray(s)
    num_classes = (
        s.num_classes if isinstance(s, LabelVector) else int(np.max(s_vals)) + 1
    )
    if scores.shape[0] != s_vals.shape[0]:
        raise ShapeError(
            f"scores ({scores.shape[0]}) and labels ({s_vals.shape[0]}) differ"
        )
    n = scores.shape[0]
    if k <= 0 or k > n:
        raise ConfigError(f"k must be in [1, {n}], got {k}")
    present = np.unique(s_vals)
    if present.size < num_classes:
        raise ValidationError(
            "every sensitive class must be present in the full sample"
        )
    order = np.argsort(-scores, kind="stable")[:k]
    counts = np.bincount(s_vals[order], minlength=num_classes)
    desired = 1.0 / num_classes
    shares = np.where(counts > 0, counts / k, 1.0 / (2.0 * k))
    return float(np.max(np.log(shares / desired)))
