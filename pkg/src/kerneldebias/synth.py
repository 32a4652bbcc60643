"""Seeded synthetic datasets with controllable target/sensitive geometry.

Samples live on two latent axes rotated into d dimensions: the target
attribute separates class means along axis 0 by signal_gap, the sensitive
attribute separates group means along axis 1 by bias_gap, and isotropic
Gaussian noise is added everywhere. Because the two axes are orthogonal,
the dependence of any representation on the sensitive attribute is monotone
in bias_gap, which makes the generator a controllable dial for tests.

Class-prompt embeddings are prototypes along the target axis; prompt_bias
adds a sensitive-axis component to them (each class prototype leans toward
the sensitive group it predominantly co-occurs with). That contamination is
what makes plain zero-shot prediction group-biased: with prototypes exactly
on the target axis, cosine prediction reduces to a sign test whose accuracy
is identical across groups, and no spurious gap can appear at all.

The rotation and the prototypes depend only on (seed, d), while the sampled
points also depend on (n, strength, mode), so differently-sized or
differently-skewed splits drawn from the same seed share one embedding
geometry.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio
from .errors import ConfigError
from .kernels import LabelVector

CORRELATION_MODES = ("spurious", "intrinsic")

# Stream tags keeping geometry and sampling draws independent.
_GEOMETRY_TAG = 0x67656F6D
_SAMPLE_TAG = 0x73616D70

# Default prompt contamination per mode: spurious-correlation fixtures model
# biased prompts; intrinsic fixtures keep prototypes on the target axis.
_DEFAULT_PROMPT_BIAS = {"spurious": 0.5, "intrinsic": 0.0}


@dataclass(frozen=True)
class SynthSpec:
    """Generator knobs.

    spurious_strength is the fraction of samples whose sensitive group aligns
    with their target class. prompt_bias scales the sensitive-axis component
    of the class prototypes relative to their target-axis component (None
    picks the per-mode default).
    """

    n: int
    d: int
    correlation_mode: str = "spurious"
    spurious_strength: float = 0.95
    signal_gap: float = 4.0
    bias_gap: float = 12.0
    noise_sigma: float = 1.0
    seed: int = 0
    prompt_bias: float | None = None

    def __post_init__(self):
        if self.correlation_mode not in CORRELATION_MODES:
            raise ConfigError(
                f"correlation_mode must be one of {CORRELATION_MODES}, "
                f"got {self.correlation_mode!r}"
            )
        if not 0.0 <= self.spurious_strength <= 1.0:
            raise ConfigError(
                f"spurious_strength must be in [0, 1], got {self.spurious_strength}"
            )
        if self.signal_gap <= 0 or self.bias_gap <= 0:
            raise ConfigError("signal_gap and bias_gap must be positive")
        if self.noise_sigma <= 0:
            raise ConfigError(f"noise_sigma must be positive, got {self.noise_sigma}")
        if self.n < 4:
            raise ConfigError(f"n must be >= 4, got {self.n}")
        if self.d < 2:
            raise ConfigError(f"d must be >= 2, got {self.d}")

    @property
    def resolved_prompt_bias(self) -> float:
        if self.prompt_bias is not None:
            return self.prompt_bias
        return _DEFAULT_PROMPT_BIAS[self.correlation_mode]


@dataclass(frozen=True)
class SynthDataset:
    x_img: np.ndarray
    x_text: np.ndarray
    x_text_sensitive: np.ndarray
    y: LabelVector
    s: LabelVector
    spec: SynthSpec


def _rotation(seed: int, d: int) -> np.ndarray:
    """Seeded random orthonormal map, sign-fixed for determinism."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, _GEOMETRY_TAG, d]))
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def generate(spec: SynthSpec) -> SynthDataset:
    """Draw one dataset: image embeddings, prompt embeddings, ground truth.

    Balanced binary target classes; sensitive groups align with the class on
    a spurious_strength fraction of samples. Deterministic per spec.
    """
    rotation = _rotation(spec.seed, spec.d)
    rng = np.random.default_rng(
        np.random.SeedSequence(
            [
                spec.seed,
                _SAMPLE_TAG,
                spec.n,
                int(round(spec.spurious_strength * 1_000_000_000)),
                CORRELATION_MODES.index(spec.correlation_mode),
            ]
        )
    )
    y = np.tile([0, 1], spec.n // 2 + 1)[: spec.n]
    y = rng.permutation(y)
    aligned = rng.random(spec.n) < spec.spurious_strength
    s = np.where(aligned, y, 1 - y)

    x = rng.normal(0.0, spec.noise_sigma, size=(spec.n, spec.d))
    x[:, 0] += (spec.signal_gap / 2.0) * (2.0 * y - 1.0)
    x[:, 1] += (spec.bias_gap / 2.0) * (2.0 * s - 1.0)
    x_img = x @ rotation.T

    pb = spec.resolved_prompt_bias
    half = spec.signal_gap / 2.0
    prototypes = np.zeros((2, spec.d))
    for cls in (0, 1):
        sign = 2.0 * cls - 1.0
        prototypes[cls, 0] = sign * half
        prototypes[cls, 1] = sign * half * pb
    x_text = prototypes @ rotation.T

    sens_prototypes = np.zeros((2, spec.d))
    sens_prototypes[0, 1] = -spec.bias_gap / 2.0
    sens_prototypes[1, 1] = spec.bias_gap / 2.0
    x_text_sensitive = sens_prototypes @ rotation.T

    return SynthDataset(
        x_img=x_img,
        x_text=x_text,
        x_text_sensitive=x_text_sensitive,
        y=LabelVector(values=y.astype(np.int64), num_classes=2),
        s=LabelVector(values=s.astype(np.int64), num_classes=2),
        spec=spec,
    )


def target_axis_accuracy(ds: SynthDataset) -> float:
    """Accuracy of the construction-oracle probe along the target axis."""
    rotation = _rotation(ds.spec.seed, ds.spec.d)
    coords = ds.x_img @ rotation[:, 0]
    preds = (coords > 0).astype(np.int64)
    return float(np.mean(preds == ds.y.values))


def emit_dataset(ds: SynthDataset, out_dir, split: str = "train") -> Path:
    """Write the dataset in the NPY + CSV + manifest layout data-io expects."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_embeddings(out / "x_img.npy", ds.x_img, dtype="float64")
    dataio.save_embeddings(out / "x_text.npy", ds.x_text, dtype="float64")
    dataio.save_embeddings(out / "x_text_sensitive.npy", ds.x_text_sensitive, dtype="float64")
    with open(out / "labels.csv", "w", newline="") as fh:
        fh.write("y,s\n")
        for yv, sv in zip(ds.y.values, ds.s.values):
            fh.write(f"{yv},{sv}\n")
    manifest = dataio.DatasetManifest(
        split=split,
        n=ds.spec.n,
        dim=ds.spec.d,
        image_embeddings="x_img.npy",
        class_text_embeddings="x_text.npy",
        sensitive_text_embeddings="x_text_sensitive.npy",
        labels_path="labels.csv",
        y_column="y",
        s_column="s",
        normalized=False,
        base_dir=out,
    )
    manifest_path = out / "manifest.json"
    dataio.save_manifest(manifest, manifest_path)
    return manifest_path
