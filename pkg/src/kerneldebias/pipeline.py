"""End-to-end helpers tying ingestion, training and evaluation together."""

import time
from dataclasses import dataclass

import numpy as np

from .dataio import LoadedDataset, load_dataset, load_manifest
from .dependence import dep_features
from .errors import ValidationError
from .kernels import label_factor, rff_features
from .metrics import MetricsReport, eod, group_accuracies, max_skew_at_k
from .solver import apply_encoder
from .trainer import TrainConfig, TrainedModel, predict, train, zero_shot_predict


@dataclass(frozen=True)
class TrainRun:
    model: TrainedModel
    dataset: LoadedDataset
    seconds: float


def train_from_manifest(manifest_path, cfg: TrainConfig) -> TrainRun:
    """Load, validate and train from a dataset manifest, timing the train call."""
    dataset = load_dataset(load_manifest(manifest_path))
    start = time.perf_counter()
    model = train(dataset.data, cfg)
    seconds = time.perf_counter() - start
    return TrainRun(model=model, dataset=dataset, seconds=seconds)


def _cosine_scores(z_img: np.ndarray, z_txt: np.ndarray) -> np.ndarray:
    img_norms = np.linalg.norm(z_img, axis=1, keepdims=True)
    txt_norms = np.linalg.norm(z_txt, axis=1, keepdims=True)
    img = np.divide(z_img, img_norms, out=np.zeros_like(z_img), where=img_norms > 0)
    txt = np.divide(z_txt, txt_norms, out=np.zeros_like(z_txt), where=txt_norms > 0)
    return img @ txt.T


def _is_binary(vec) -> bool:
    uniq = np.unique(vec.values)
    return uniq.size <= 2 and bool(np.isin(uniq, (0, 1)).all())


def _build_report(
    preds,
    scores: np.ndarray,
    dataset: LoadedDataset,
    skew_k: int | None,
    positive_class: int,
) -> MetricsReport:
    y, s = dataset.y, dataset.s
    base = group_accuracies(preds, y, s)
    eod_value = None
    if _is_binary(y) and _is_binary(s):
        try:
            eod_value = eod(preds, y, s, positive_class=positive_class)
        except ValidationError:
            eod_value = None
    n = len(y)
    k = min(1000, n) if skew_k is None else skew_k
    max_skew = {
        f"class_{j}": max_skew_at_k(scores[:, j], s, k) for j in range(scores.shape[1])
    }
    return MetricsReport(
        eod=eod_value,
        avg_acc=base.avg_acc,
        wg_acc=base.wg_acc,
        gap=base.gap,
        group_accs=base.group_accs,
        max_skew=max_skew,
    )


def evaluate_model(
    model: TrainedModel,
    dataset: LoadedDataset,
    skew_k: int | None = None,
    positive_class: int = 1,
) -> MetricsReport:
    """Full fairness/robustness report for a trained model on a labeled split.

    Alongside the prediction metrics, reports dependence diagnostics of the
    debiased representation on the ground-truth target and sensitive labels,
    plus the same diagnostics for the raw random-feature embedding (the
    untrained probe the debiased numbers should be judged against).
    """
    if dataset.y is None or dataset.s is None:
        raise ValidationError("evaluation needs a label table with y and s columns")
    x = dataset.data.x_img
    preds = predict(model, x)
    z = apply_encoder(model.encoder_img, x)
    scores = _cosine_scores(z, model.class_text_reps)
    report = _build_report(preds, scores, dataset, skew_k, positive_class)

    ly = label_factor(dataset.y)
    ls = label_factor(dataset.s)
    raw_features = rff_features(x, model.encoder_img.kernel)
    return MetricsReport(
        eod=report.eod,
        avg_acc=report.avg_acc,
        wg_acc=report.wg_acc,
        gap=report.gap,
        group_accs=report.group_accs,
        max_skew=report.max_skew,
        dep_zy=dep_features(z, ly.matrix),
        dep_zs=dep_features(z, ls.matrix),
        dep_zy_probe=dep_features(raw_features, ly.matrix),
        dep_zs_probe=dep_features(raw_features, ls.matrix),
    )


def evaluate_zero_shot(
    dataset: LoadedDataset,
    skew_k: int | None = None,
    positive_class: int = 1,
) -> MetricsReport:
    """Report for plain zero-shot prediction on the raw frozen embeddings."""
    if dataset.y is None or dataset.s is None:
        raise ValidationError("evaluation needs a label table with y and s columns")
    x = dataset.data.x_img
    preds = zero_shot_predict(x, dataset.data.x_text)
    scores = _cosine_scores(x, dataset.data.x_text)
    return _build_report(preds, scores, dataset, skew_k, positive_class)
