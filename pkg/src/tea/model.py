"""The composite segmentation model and its checkpoint container.

Bundles the transformer backbone, the temporal prototype bank, and the
reconstruction decoder under one parameter namespace, and defines the
versioned npz checkpoint holding student (and optionally teacher) parameters
next to the serialized configuration.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .backbone import Backbone, BackboneConfig, SpatialOutput, TemporalOutput
from .errors import DataFormatError
from .prototype import PrototypeBank, num_slots_for_span, similarity_map
from .reconstruction import ReconDecoder, ReconDecoderConfig, reconstruct

CHECKPOINT_FORMAT = 1


@dataclass
class ModelConfig:
    """Backbone geometry plus prototype and reconstruction settings."""

    backbone: BackboneConfig
    prototype_slot_span: int = 5
    recon_hidden: tuple[int, ...] = (64,)
    use_prototypes: bool = True

    def to_json(self) -> str:
        payload = dataclasses.asdict(self.backbone)
        payload["prototype_slot_span"] = self.prototype_slot_span
        payload["recon_hidden"] = list(self.recon_hidden)
        payload["use_prototypes"] = self.use_prototypes
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        payload = json.loads(text)
        slot_span = payload.pop("prototype_slot_span")
        hidden = tuple(payload.pop("recon_hidden"))
        use_prototypes = payload.pop("use_prototypes")
        return cls(backbone=BackboneConfig(**payload),
                   prototype_slot_span=slot_span, recon_hidden=hidden,
                   use_prototypes=use_prototypes)


@dataclass
class ModelOutputs:
    logits: Tensor                      # (B, K, H, W)
    temporal: TemporalOutput
    spatial: SpatialOutput
    similarity: Tensor | None = None    # (B, N, K)
    reconstruction: Tensor | None = None  # (B, T, C, H, W)


class TeaModel(nn.Module):
    """Backbone + prototype confidence + reconstruction head."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        b = config.backbone
        self.config = config
        self.backbone = Backbone(b, rng, dtype=dtype)
        self.prototypes = PrototypeBank(
            num_classes=b.num_classes,
            num_slots=num_slots_for_span(b.max_day_offset, config.prototype_slot_span),
            dim=b.embed_dim,
            slot_span=config.prototype_slot_span,
            rng=rng, dtype=dtype)
        self.recon = ReconDecoder(
            ReconDecoderConfig(patch_height=b.patch_height, patch_width=b.patch_width,
                               num_channels=b.num_channels, embed_dim=b.embed_dim,
                               hidden_widths=config.recon_hidden),
            rng, dtype=dtype)
        self.dtype = dtype

    def forward(self, batch: dict[str, np.ndarray],
                use_prototypes: bool | None = None,
                with_reconstruction: bool = False,
                with_similarity: bool | None = None) -> ModelOutputs:
        """Run the full pipeline on a collated batch.

        `use_prototypes` controls confidence injection into the segmentation
        head (defaults to the model config); similarity is also exposed on its
        own for the alignment loss.
        """
        if use_prototypes is None:
            use_prototypes = self.config.use_prototypes
        if with_similarity is None:
            with_similarity = use_prototypes
        grid = self.backbone.tokenize(batch["values"])
        temporal = self.backbone.temporal_encode(
            grid, batch["day_offsets"], batch["valid_mask"])
        spatial = self.backbone.spatial_encode(temporal.class_tokens)
        similarity = None
        confidence = None
        if with_similarity or use_prototypes:
            similarity = self._similarity(temporal.sequence_tokens, batch)
            if use_prototypes:
                confidence = similarity * self.prototypes.scale
        logits = self.backbone.segment(spatial.dense_tokens, confidence)
        reconstruction = None
        if with_reconstruction:
            reconstruction = reconstruct(temporal.sequence_tokens, self.recon,
                                         self.backbone.config.patches_high,
                                         self.backbone.config.patches_wide)
        return ModelOutputs(logits=logits, temporal=temporal, spatial=spatial,
                            similarity=similarity, reconstruction=reconstruction)

    def _similarity(self, sequence_tokens, batch: dict[str, np.ndarray]):
        """Prototype confidence; a sample whose crop kept no valid frames gets
        a zero (neutral) confidence row instead of an undefined average."""
        valid_any = np.asarray(batch["valid_mask"]).any(axis=1)
        if valid_any.all():
            return similarity_map(sequence_tokens, batch["day_offsets"],
                                  batch["valid_mask"], self.prototypes)
        safe_mask = np.asarray(batch["valid_mask"]).copy()
        safe_mask[~valid_any, 0] = True
        raw = similarity_map(sequence_tokens, batch["day_offsets"], safe_mask,
                             self.prototypes)
        keep = valid_any.astype(raw.dtype).reshape(-1, 1, 1)
        return raw * Tensor(keep)

    def predict(self, batch: dict[str, np.ndarray],
                use_prototypes: bool | None = None) -> np.ndarray:
        """Argmax segmentation masks (B, H, W), no graph recorded."""
        with ad.no_grad():
            outputs = self.forward(batch, use_prototypes=use_prototypes,
                                   with_reconstruction=False)
        return outputs.logits.data.argmax(axis=1)

    def astype(self, dtype) -> "TeaModel":
        """Cast every parameter in place (e.g. float64 for numerical checks)."""
        for p in self.named_parameters().values():
            p.data = p.data.astype(dtype)
        self.dtype = dtype
        self.backbone.dtype = dtype
        return self


def clone_model(model: TeaModel) -> TeaModel:
    """Structural copy with identical parameter values."""
    twin = TeaModel(model.config, seed=0, dtype=model.dtype)
    for name, p in twin.named_parameters().items():
        p.data = model.named_parameters()[name].data.copy()
    return twin


def config_hash(config_json: str) -> str:
    return hashlib.sha256(config_json.encode()).hexdigest()[:16]


def save_checkpoint(path: Path, model: TeaModel,
                    teacher: TeaModel | None = None,
                    metadata: dict | None = None) -> Path:
    """Versioned npz container of named parameter arrays plus configuration."""
    path = Path(path)
    arrays: dict[str, np.ndarray] = {
        "__format__": np.array(CHECKPOINT_FORMAT, dtype=np.int64),
        "__config__": np.array(model.config.to_json()),
    }
    meta = dict(metadata or {})
    meta.setdefault("config_hash", config_hash(model.config.to_json()))
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    for name, p in model.named_parameters().items():
        arrays[f"student/{name}"] = p.data
    if teacher is not None:
        for name, p in teacher.named_parameters().items():
            arrays[f"teacher/{name}"] = p.data
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: Path, dtype=np.float32,
                    ) -> tuple[TeaModel, TeaModel | None, dict]:
    """Rebuild (student, teacher-or-None, metadata) from a checkpoint file."""
    path = Path(path)
    with np.load(path, allow_pickle=False) as archive:
        if "__format__" not in archive or int(archive["__format__"]) != CHECKPOINT_FORMAT:
            raise DataFormatError(f"{path}: unsupported checkpoint format")
        config = ModelConfig.from_json(str(archive["__config__"]))
        metadata = json.loads(str(archive["__meta__"]))
        model = TeaModel(config, seed=0, dtype=dtype)
        _load_params(archive, "student/", model, path)
        teacher = None
        if any(key.startswith("teacher/") for key in archive.files):
            teacher = TeaModel(config, seed=0, dtype=dtype)
            _load_params(archive, "teacher/", teacher, path)
    return model, teacher, metadata


def _load_params(archive, prefix: str, model: TeaModel, path: Path) -> None:
    params = model.named_parameters()
    for name, p in params.items():
        key = prefix + name
        if key not in archive:
            raise DataFormatError(f"{path}: missing parameter {key}")
        stored = archive[key]
        if stored.shape != p.data.shape:
            raise DataFormatError(
                f"{path}: parameter {key} has shape {stored.shape}, expected "
                f"{p.data.shape}")
        p.data = stored.astype(model.dtype)
