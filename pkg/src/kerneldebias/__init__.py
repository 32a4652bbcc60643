"""Kernel-space debiasing of frozen image/text embeddings.

Learns closed-form kernel encoders that strip a sensitive attribute from
paired image/text embedding sets while preserving the target attribute and
cross-modal alignment, and evaluates fairness and group robustness of the
resulting zero-shot predictions.
"""

from .audit import allocation_audit
from .dataio import (
    DatasetManifest,
    EmbeddingMatrix,
    LoadedDataset,
    load_dataset,
    load_embeddings,
    load_labels,
    load_manifest,
    load_model,
    save_embeddings,
    save_manifest,
    save_model,
)
from .dependence import dep_cross, dep_features, dep_vs_labels, hsic, hsic_factors
from .errors import (
    AllocationAuditError,
    ConfigError,
    DegenerateInputError,
    FormatError,
    KernelDebiasError,
    NumericalError,
    ShapeError,
    UpgradeError,
    ValidationError,
)
from .kernels import (
    KernelConfig,
    LabelFactor,
    LabelVector,
    RffFactor,
    center,
    label_factor,
    median_bandwidth,
    rff_factor,
    rff_features,
)
from .metrics import MetricsReport, eod, group_accuracies, max_skew_at_k
from .pipeline import TrainRun, evaluate_model, evaluate_zero_shot, train_from_manifest
from .solver import (
    Encoder,
    EigenSolution,
    SolveSpec,
    apply_encoder,
    constraint_residual,
    objective_value,
    solve_encoder,
)
from .synth import SynthDataset, SynthSpec, emit_dataset, generate
from .trainer import (
    TrainConfig,
    TrainData,
    TrainedModel,
    balanced_presample,
    predict,
    train,
    zero_shot_predict,
)

__version__ = "0.1.0"
