"""Ingestion and persistence.

Interchange formats, chosen so any language can produce or consume them:

* embeddings: NPY v1.0, C-order, little-endian float32/float64, 2-D;
* labels: RFC-4180-style CSV with a header row;
* dataset manifest and reports: JSON;
* trained models: "KDBS" container (magic + u32 version + JSON header +
  raw little-endian float64 array payloads).

Loading never casts lossily except the documented float32 -> float64
widening.
"""

import ast
import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError, UpgradeError, ValidationError
from .kernels import KernelConfig, LabelVector
from .solver import Encoder
from .trainer import TrainData, TrainedModel

NPY_MAGIC = b"\x93NUMPY"
NPY_DTYPES = {"<f4": np.float32, "<f8": np.float64}

MODEL_MAGIC = b"KDBS"
MODEL_VERSION = 1


@dataclass(frozen=True)
class EmbeddingMatrix:
    """n x d float64 matrix of frozen-encoder features.

    normalized records whether rows were L2-normalized on load.
    """

    matrix: np.ndarray
    normalized: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def load_embeddings(path, expect_dim: int | None = None, normalize: bool = False) -> EmbeddingMatrix:
    """Load an NPY v1.0 embedding file, widening to float64.

    Enforces the exact interchange subset: magic, version 1.0, C-order,
    little-endian float32/float64, 2-D shape. Rows are optionally
    L2-normalized (zero rows are left untouched).
    """
    raw = Path(path).read_bytes()
    if len(raw) < 10:
        raise FormatError(f"{path}: file too short for an NPY header", offset=len(raw))
    if raw[:6] != NPY_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:6]!r}", offset=0)
    if raw[6:8] != b"\x01\x00":
        raise FormatError(
            f"{path}: unsupported NPY version {raw[6]}.{raw[7]} (need 1.0)", offset=6
        )
    (header_len,) = struct.unpack_from("<H", raw, 8)
    header_end = 10 + header_len
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated NPY header", offset=len(raw))
    try:
        header = ast.literal_eval(raw[10:header_end].decode("latin1"))
        if not isinstance(header, dict):
            raise ValueError("header is not a dict")
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"{path}: unparseable NPY header: {exc}", offset=10) from exc
    descr = header.get("descr")
    if descr not in NPY_DTYPES:
        raise FormatError(
            f"{path}: dtype {descr!r} not allowed (need <f4 or <f8)", offset=10
        )
    if header.get("fortran_order"):
        raise FormatError(f"{path}: Fortran-order arrays not allowed", offset=10)
    shape = header.get("shape")
    if not (isinstance(shape, tuple) and all(isinstance(v, int) for v in shape)):
        raise FormatError(f"{path}: malformed shape {shape!r}", offset=10)
    if len(shape) != 2:
        raise FormatError(
            f"{path}: embeddings must be 2-D, got rank {len(shape)}", offset=10
        )
    dtype = np.dtype(NPY_DTYPES[descr])
    expected_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = raw[header_end:]
    if len(payload) != expected_bytes:
        raise FormatError(
            f"{path}: payload has {len(payload)} bytes, expected {expected_bytes}",
            offset=header_end,
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).astype(np.float64)
    if not np.isfinite(arr).all():
        raise ValidationError(f"{path}: embeddings contain NaN or Inf")
    if expect_dim is not None and shape[1] != expect_dim:
        raise ShapeError(f"{path}: expected dimension {expect_dim}, got {shape[1]}")
    if normalize:
        norms = np.linalg.norm(arr, axis=1, keepdims=True)
        arr = np.divide(arr, norms, out=arr.copy(), where=norms > 0)
    return EmbeddingMatrix(matrix=arr, normalized=normalize)


def save_embeddings(path, matrix, dtype: str = "float32") -> None:
    """Write an NPY v1.0 embedding file (C-order, little-endian)."""
    arr = np.ascontiguousarray(np.asarray(matrix), dtype=np.dtype(dtype))
    if arr.ndim != 2:
        raise ShapeError(f"embeddings must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, arr, version=(1, 0))


def load_labels(path, column: str, classes: list | None = None) -> LabelVector:
    """Load one categorical column from a headered CSV.

    Integer-valued columns are used as class indices directly; string
    categories are mapped in order of first appearance unless an explicit
    class list pins the mapping.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty label file") from None
        if column not in header:
            raise ValidationError(
                f"{path}: column {column!r} not in header {header}"
            )
        col = header.index(column)
        raw = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: line {line_no} has {len(row)} fields, "
                    f"expected {len(header)}"
                )
            raw.append(row[col])
    if not raw:
        raise ValidationError(f"{path}: no label rows")
    try:
        values = np.array([int(v) for v in raw], dtype=np.int64)
        if values.min() < 0:
            raise ValidationError(f"{path}: negative label values")
        num_classes = int(values.max()) + 1
        if classes is not None:
            num_classes = max(num_classes, len(classes))
        return LabelVector(values=values, num_classes=num_classes)
    except ValueError:
        pass
    if classes is not None:
        mapping = {name: idx for idx, name in enumerate(classes)}
        unknown = sorted(set(raw) - set(mapping))
        if unknown:
            raise ValidationError(f"{path}: labels {unknown} not in class list")
    else:
        mapping = {}
        for v in raw:
            if v not in mapping:
                mapping[v] = len(mapping)
    values = np.array([mapping[v] for v in raw], dtype=np.int64)
    return LabelVector(values=values, num_classes=len(mapping))


@dataclass(frozen=True)
class DatasetManifest:
    """Declares where a split's artifacts live and what shapes to expect."""

    split: str
    n: int
    dim: int
    image_embeddings: str
    class_text_embeddings: str
    sensitive_text_embeddings: str | None = None
    labels_path: str | None = None
    y_column: str = "y"
    s_column: str = "s"
    normalized: bool = False
    base_dir: Path = field(default=Path("."), compare=False)

    def resolve(self, rel: str) -> Path:
        return (Path(self.base_dir) / rel).expanduser()

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "n": self.n,
            "d": self.dim,
            "normalized": self.normalized,
            "files": {
                "image_embeddings": self.image_embeddings,
                "class_text_embeddings": self.class_text_embeddings,
                "sensitive_text_embeddings": self.sensitive_text_embeddings,
            },
            "labels": (
                {"path": self.labels_path, "y_column": self.y_column, "s_column": self.s_column}
                if self.labels_path
                else None
            ),
        }


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid manifest JSON: {exc}") from exc
    try:
        files = doc["files"]
        labels = doc.get("labels") or {}
        return DatasetManifest(
            split=doc["split"],
            n=int(doc["n"]),
            dim=int(doc["d"]),
            image_embeddings=files["image_embeddings"],
            class_text_embeddings=files["class_text_embeddings"],
            sensitive_text_embeddings=files.get("sensitive_text_embeddings"),
            labels_path=labels.get("path"),
            y_column=labels.get("y_column", "y"),
            s_column=labels.get("s_column", "s"),
            normalized=bool(doc.get("normalized", False)),
            base_dir=path.parent,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: manifest missing field: {exc}") from exc


@dataclass(frozen=True)
class LoadedDataset:
    """Everything a manifest references, validated and loaded."""

    data: TrainData
    y: LabelVector | None
    s: LabelVector | None
    manifest: DatasetManifest


def load_dataset(manifest: DatasetManifest) -> LoadedDataset:
    """Load and cross-validate every artifact a manifest declares.

    Validation is total: every inconsistency is collected and reported in one
    error before any training starts.
    """
    problems = []
    x_img = x_txt = x_ts = None
    y = s = None

    def check(rel, expect_rows=None, what=""):
        p = manifest.resolve(rel)
        if not p.exists():
            problems.append(f"{what}: file {p} does not exist")
            return None
        try:
            emb = load_embeddings(p, expect_dim=manifest.dim, normalize=manifest.normalized)
        except (FormatError, ValidationError, ShapeError) as exc:
            problems.append(f"{what}: {exc}")
            return None
        if expect_rows is not None and emb.n != expect_rows:
            problems.append(f"{what}: has {emb.n} rows, manifest declares {expect_rows}")
        return emb

    x_img = check(manifest.image_embeddings, manifest.n, "image embeddings")
    x_txt = check(manifest.class_text_embeddings, None, "class-text embeddings")
    if manifest.sensitive_text_embeddings:
        x_ts = check(manifest.sensitive_text_embeddings, None, "sensitive-text embeddings")

    if manifest.labels_path:
        labels_file = manifest.resolve(manifest.labels_path)
        if not labels_file.exists():
            problems.append(f"labels: file {labels_file} does not exist")
        else:
            for col, slot in ((manifest.y_column, "y"), (manifest.s_column, "s")):
                try:
                    vec = load_labels(labels_file, col)
                    if len(vec) != manifest.n:
                        problems.append(
                            f"labels: column {col!r} has {len(vec)} rows, "
                            f"manifest declares {manifest.n}"
                        )
                    elif slot == "y":
                        y = vec
                    else:
                        s = vec
                except ValidationError as exc:
                    problems.append(str(exc))

    if problems:
        raise ValidationError(
            "manifest validation failed:\n  - " + "\n  - ".join(problems)
        )
    data = TrainData(
        x_img=x_img.matrix,
        x_text=x_txt.matrix,
        x_text_sensitive=None if x_ts is None else x_ts.matrix,
        y=y,
        s=s,
    )
    return LoadedDataset(data=data, y=y, s=s, manifest=manifest)


def _kernel_to_dict(cfg: KernelConfig) -> dict:
    return {
        "bandwidth": cfg.bandwidth,
        "rff_dim": cfg.rff_dim,
        "seed": cfg.seed,
        "bandwidth_mode": cfg.bandwidth_mode,
    }


def _encoder_header(enc: Encoder) -> dict:
    return {
        "kernel": _kernel_to_dict(enc.kernel),
        "input_dim": enc.input_dim,
        "gamma": enc.gamma,
        "r": enc.r,
    }


def save_model(model: TrainedModel, path) -> None:
    """Persist a trained model to the versioned "KDBS" container.

    Only what is needed to apply the model is stored (encoder weights, kernel
    recipes, class-text representations); run artifacts such as the training
    history live in the run record, not the container.
    """
    arrays = [("weights_img", model.encoder_img.weights)]
    header = {
        "container_version": MODEL_VERSION,
        "num_classes": model.num_classes,
        "encoder_img": _encoder_header(model.encoder_img),
        "encoder_txt": None,
        "arrays": [],
    }
    if model.encoder_txt is not None:
        header["encoder_txt"] = _encoder_header(model.encoder_txt)
        arrays.append(("weights_txt", model.encoder_txt.weights))
        arrays.append(("class_text_reps", model.class_text_reps))
    header["arrays"] = [
        {"name": name, "shape": list(arr.shape), "dtype": "<f8"} for name, arr in arrays
    ]
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _kernel_from_dict(doc: dict) -> KernelConfig:
    return KernelConfig(
        bandwidth=doc["bandwidth"],
        rff_dim=int(doc["rff_dim"]),
        seed=int(doc["seed"]),
        bandwidth_mode=doc["bandwidth_mode"],
    )


def load_model(path) -> TrainedModel:
    """Reload a "KDBS" container; outputs reproduce the saved model bitwise."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: file too short for a model header", offset=len(raw))
    if raw[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad model magic {raw[:4]!r}", offset=0)
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != MODEL_VERSION:
        raise UpgradeError(
            f"{path}: container version {version} not supported "
            f"(this build reads version {MODEL_VERSION})",
            offset=4,
        )
    (header_len,) = struct.unpack_from("<I", raw, 8)
    if len(raw) < 12 + header_len:
        raise FormatError(f"{path}: truncated model header", offset=len(raw))
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: unparseable model header: {exc}", offset=12) from exc
    offset = 12 + header_len
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(
                f"{path}: array {spec['name']!r} truncated", offset=offset
            )
        arrays[spec["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes

    def build_encoder(doc: dict, weights: np.ndarray) -> Encoder:
        return Encoder(
            weights=weights,
            kernel=_kernel_from_dict(doc["kernel"]),
            input_dim=int(doc["input_dim"]),
            gamma=float(doc["gamma"]),
        )

    encoder_img = build_encoder(header["encoder_img"], arrays["weights_img"])
    encoder_txt = None
    class_text_reps = None
    if header.get("encoder_txt") is not None:
        encoder_txt = build_encoder(header["encoder_txt"], arrays["weights_txt"])
        class_text_reps = arrays["class_text_reps"]
    n_rows = 0
    return TrainedModel(
        encoder_img=encoder_img,
        encoder_txt=encoder_txt,
        class_text_reps=class_text_reps,
        history=(),
        num_classes=int(header["num_classes"]),
        pseudo_y_initial=np.empty(n_rows, dtype=np.int64),
        pseudo_y_final=np.empty(n_rows, dtype=np.int64),
        sensitive_labels=np.empty(n_rows, dtype=np.int64),
        train_indices=None,
    )
