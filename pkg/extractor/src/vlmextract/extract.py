"""Encode image folders and prompt lists with a frozen CLIP-style checkpoint.

Output is the debiasing pipeline's interchange layout: float32 NPY v1.0
embedding files plus a JSON manifest declaring shapes and the normalization
flag. Row order of the image matrix equals the input listing order of the
images that decoded successfully; that order is the only join key against any
label table, so skipped images are reported in a sidecar log and excluded
from the declared row count.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

DEFAULT_TEMPLATE = "This is a photo of a {} person"


@dataclass(frozen=True)
class PromptSet:
    """One prompt per target class, optionally one per sensitive class."""

    target_prompts: tuple
    sensitive_prompts: tuple = ()
    template: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "target_prompts", tuple(self.target_prompts))
        object.__setattr__(self, "sensitive_prompts", tuple(self.sensitive_prompts))
        if not self.target_prompts:
            raise ValueError("PromptSet needs at least one target prompt")

    @classmethod
    def from_attributes(cls, target_attributes, sensitive_attributes=(),
                        template: str = DEFAULT_TEMPLATE) -> "PromptSet":
        return cls(
            target_prompts=tuple(template.format(a) for a in target_attributes),
            sensitive_prompts=tuple(template.format(a) for a in sensitive_attributes),
            template=template,
        )


@dataclass(frozen=True)
class ExtractResult:
    out_dir: Path
    manifest_path: Path
    n: int
    dim: int
    skipped: tuple = field(default_factory=tuple)


def list_images(source) -> list[Path]:
    """Image paths from a directory (sorted by name) or a CSV of paths.

    A CSV may have a header whose first column is named "path"; otherwise
    every first field is taken as a path in file order.
    """
    source = Path(source)
    if source.is_dir():
        exts = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}
        return sorted(p for p in source.iterdir() if p.suffix.lower() in exts)
    paths = []
    with open(source, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if i == 0 and row[0].strip().lower() == "path":
                continue
            paths.append(Path(row[0]))
    return paths


def _load_backend(model_id: str, device: str):
    from transformers import AutoProcessor, CLIPModel

    model = CLIPModel.from_pretrained(model_id).to(device).eval()
    processor = AutoProcessor.from_pretrained(model_id)
    return model, processor


def _to_features(output) -> torch.Tensor:
    # transformers < 5 returns the projected tensor directly; >= 5 returns the
    # model output with the projection in pooler_output
    if torch.is_tensor(output):
        return output
    return output.pooler_output


def _normalize(feats: torch.Tensor) -> np.ndarray:
    feats = feats / feats.norm(dim=-1, keepdim=True).clamp_min(1e-12)
    return feats.cpu().numpy().astype(np.float32)


def _write_npy(path: Path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, np.ascontiguousarray(arr), version=(1, 0))


def extract(
    images,
    prompts: PromptSet,
    model_id: str,
    out_dir,
    batch_size: int = 16,
    device: str = "cpu",
    split: str = "extracted",
) -> ExtractResult:
    """Encode images and prompts, writing NPY files, manifest and skip log.

    Images that cannot be decoded are skipped and recorded in skipped.json;
    the manifest's row count reflects kept rows only. Deterministic for a
    fixed checkpoint (the model runs in eval mode with no sampling).
    """
    paths = [Path(p) for p in images] if not isinstance(images, (str, Path)) else list_images(images)
    if not paths:
        raise ValueError("no input images found")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model, processor = _load_backend(model_id, device)

    kept_chunks = []
    skipped = []
    pending = []

    def flush():
        if not pending:
            return
        batch = processor(images=pending, return_tensors="pt").to(device)
        with torch.no_grad():
            feats = _to_features(model.get_image_features(**batch))
        kept_chunks.append(_normalize(feats))
        pending.clear()

    for path in paths:
        try:
            with Image.open(path) as img:
                pending.append(img.convert("RGB"))
        except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
            skipped.append({"path": str(path), "error": str(exc)})
            continue
        if len(pending) >= batch_size:
            flush()
    flush()

    if not kept_chunks:
        raise ValueError("every input image failed to decode")
    x_img = np.concatenate(kept_chunks, axis=0)
    dim = x_img.shape[1]

    def encode_text(texts):
        batch = processor(text=list(texts), return_tensors="pt", padding=True).to(device)
        with torch.no_grad():
            feats = _to_features(model.get_text_features(**batch))
        return _normalize(feats)

    x_text = encode_text(prompts.target_prompts)
    _write_npy(out_dir / "x_img.npy", x_img)
    _write_npy(out_dir / "x_text.npy", x_text)
    files = {
        "image_embeddings": "x_img.npy",
        "class_text_embeddings": "x_text.npy",
        "sensitive_text_embeddings": None,
    }
    if prompts.sensitive_prompts:
        _write_npy(out_dir / "x_text_sensitive.npy", encode_text(prompts.sensitive_prompts))
        files["sensitive_text_embeddings"] = "x_text_sensitive.npy"

    manifest = {
        "split": split,
        "n": int(x_img.shape[0]),
        "d": int(dim),
        "normalized": True,
        "files": files,
        "labels": None,
        "model_id": str(model_id),
        "prompts": {
            "target": list(prompts.target_prompts),
            "sensitive": list(prompts.sensitive_prompts),
            "template": prompts.template,
        },
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    (out_dir / "skipped.json").write_text(json.dumps(skipped, indent=2) + "\n")

    return ExtractResult(
        out_dir=out_dir,
        manifest_path=manifest_path,
        n=int(x_img.shape[0]),
        dim=int(dim),
        skipped=tuple(entry["path"] for entry in skipped),
    )
