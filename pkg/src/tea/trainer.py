"""Training orchestration.

One step: students see a random temporal crop, the teacher sees the full
sequence with gradients suppressed, the weighted loss (segmentation CE,
temporal/spatial feature transfer, prototype alignment, reconstruction,
soft labels) is optimized on the student, and the teacher follows by EMA.
Validation runs the graduated prefix-crop schedule and selects on LDIoU.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .backbone import BackboneConfig
from .config import RunConfig, render_run_config
from .cropping import crop_frames, prefix_crop, random_crop, sliding_windows
from .data import DatasetManifest, SitsSample, load_dataset, make_batch
from .distillation import (DecaySchedule, TeacherState, decay_at, ema_update,
                           prototype_align_loss, soft_label_loss,
                           spatial_distill_loss, temporal_distill_loss)
from .errors import ConfigurationError
from .metrics import ConfusionMatrix, EvalReport, miou
from .model import (ModelConfig, TeaModel, clone_model, config_hash,
                    load_checkpoint, save_checkpoint)
from .optim import AdamW
from .reconstruction import reconstruction_loss


@dataclass
class TrainState:
    """Mutable per-run state; the optimizer's update set never includes the teacher."""

    model: TeaModel
    teacher: TeacherState
    optimizer: AdamW
    step: int
    best_ldiou: float
    crop_rng: np.random.Generator


def learning_rate_at(step: int, warmup_steps: int, total_steps: int,
                     peak: float, floor: float, start: float = 1e-8) -> float:
    """Linear warmup from `start` to `peak`, then cosine decay to `floor`."""
    if step < 0:
        raise ConfigurationError("negative step")
    if warmup_steps > 0 and step <= warmup_steps:
        t = step / warmup_steps
        return (1.0 - t) * start + t * peak
    if total_steps <= warmup_steps or step >= total_steps:
        return floor if step >= total_steps else peak
    u = (step - warmup_steps) / (total_steps - warmup_steps)
    return floor + (peak - floor) * 0.5 * (1.0 + math.cos(math.pi * u))


def cross_entropy_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Pixelwise softmax cross-entropy against integer labels."""
    B, K, H, W = logits.shape
    log_probs = ad.log_softmax(logits, axis=1)
    flat = log_probs.transpose((0, 2, 3, 1)).reshape((B * H * W, K))
    picked = ad.select_columns(flat, np.asarray(labels).reshape(-1))
    return -picked.mean()


def build_model(config: RunConfig, manifest: DatasetManifest,
                sample: SitsSample, dtype=np.float32) -> TeaModel:
    """Instantiate the model whose geometry matches the corpus."""
    H, W = sample.image_shape
    backbone = BackboneConfig(
        image_height=H, image_width=W,
        patch_height=config.patch_size, patch_width=config.patch_size,
        num_channels=manifest.num_channels, num_classes=manifest.num_classes,
        embed_dim=config.embed_dim, temporal_depth=config.temporal_depth,
        spatial_depth=config.spatial_depth, heads=config.heads,
        mlp_ratio=config.mlp_ratio, max_day_offset=manifest.max_day_offset)
    slot_span = config.prototype_slot_span or manifest.revisit_days
    model_config = ModelConfig(backbone=backbone, prototype_slot_span=slot_span,
                               recon_hidden=tuple(config.recon_hidden),
                               use_prototypes=config.use_prototypes)
    return TeaModel(model_config, seed=config.seed, dtype=dtype)


def _crop_for_training(sample: SitsSample, rng: np.random.Generator,
                       config: RunConfig) -> SitsSample:
    # Redraw (bounded) if the window landed on dropped frames only.
    for _ in range(20):
        crop, _ = random_crop(sample, rng, min_ratio=config.crop_min_ratio,
                              random_start=config.crop_random_start)
        if crop.valid_mask.any():
            return crop
    return sample


def train_step(samples: list[SitsSample], state: TrainState, config: RunConfig,
               lr: float, schedule: DecaySchedule) -> dict[str, float]:
    """One optimization step; returns every loss component for the log."""
    if not samples:
        raise ConfigurationError("empty batch")
    model = state.model
    need_teacher = any(w > 0 for w in (config.lambda_t, config.lambda_s,
                                       config.lambda_proto, config.lambda_soft))
    crops = [_crop_for_training(s, state.crop_rng, config) for s in samples]
    student_batch = make_batch(crops)
    student = model.forward(
        student_batch,
        use_prototypes=config.use_prototypes,
        with_reconstruction=config.lambda_rec > 0,
        with_similarity=config.use_prototypes or config.lambda_proto > 0)

    components: dict[str, Tensor] = {}
    if config.lambda_ce > 0:
        components["ce"] = cross_entropy_loss(student.logits, student_batch["labels"])
    if config.lambda_rec > 0:
        components["reconstruction"] = reconstruction_loss(
            student_batch["values"], student.reconstruction,
            student_batch["valid_mask"])
    if need_teacher:
        full_batch = make_batch(samples)
        with ad.no_grad():
            teacher_out = state.teacher.model.forward(
                full_batch,
                use_prototypes=config.use_prototypes,
                with_reconstruction=False,
                with_similarity=config.lambda_proto > 0 or config.use_prototypes)
        if config.lambda_t > 0:
            components["temporal"] = temporal_distill_loss(
                student.temporal.class_tokens.mean(axis=1),
                teacher_out.temporal.class_tokens.data.mean(axis=1))
        if config.lambda_s > 0:
            components["spatial"] = spatial_distill_loss(
                student.spatial.full_tokens, teacher_out.spatial.full_tokens.data)
        if config.lambda_proto > 0:
            components["prototype"] = prototype_align_loss(
                student.similarity, teacher_out.similarity.data)
        if config.lambda_soft > 0:
            components["soft"] = soft_label_loss(
                student.logits, teacher_out.logits.data, config.temperature)

    weights = {"ce": config.lambda_ce, "temporal": config.lambda_t,
               "spatial": config.lambda_s, "prototype": config.lambda_proto,
               "reconstruction": config.lambda_rec, "soft": config.lambda_soft}
    total: Tensor | None = None
    for name, tensor in components.items():
        term = tensor * weights[name]
        total = term if total is None else total + term
    if total is None:
        raise ConfigurationError("all loss weights are zero; nothing to optimize")

    record = {name: float(t.data) for name, t in components.items()}
    for name in weights:
        record.setdefault(name, 0.0)
    record["total"] = float(total.data)
    for name in ("ce", "temporal", "spatial", "prototype", "reconstruction",
                 "soft", "total"):
        if not np.isfinite(record[name]):
            raise RuntimeError(
                f"non-finite loss component {name!r} at step {state.step}: "
                f"{record[name]}")

    model.zero_grad()
    total.backward()
    state.optimizer.step(lr)
    decay = decay_at(state.step, schedule)
    ema_update(state.teacher.parameters, model.named_parameters(), decay)
    state.step += 1
    state.teacher.step = state.step
    record["step"] = state.step - 1
    record["lr"] = lr
    record["decay"] = decay
    return record


def _batches(items: list, size: int):
    for i in range(0, len(items), size):
        yield items[i:i + size]


def validate(model: TeaModel, samples: list[SitsSample], ratios,
             num_classes: int, batch_size: int = 16) -> EvalReport:
    """Prefix-crop evaluation at each ratio with one pooled confusion matrix."""
    if len(ratios) == 0:
        raise ConfigurationError("no evaluation ratios")
    scores = []
    for ratio in ratios:
        cm = ConfusionMatrix.empty(num_classes)
        crops = [prefix_crop(s, float(ratio)) for s in samples]
        for chunk in _batches(crops, batch_size):
            batch = make_batch(chunk)
            cm.update(batch["labels"], model.predict(batch))
        scores.append(miou(cm))
    return EvalReport.from_scores([float(r) for r in ratios], scores)


def sweep(model: TeaModel, samples: list[SitsSample], lengths, step_ratio: float,
          num_classes: int, batch_size: int = 16) -> dict[tuple[float, float], float]:
    """mIoU for every (start, length) sliding window over the common length."""
    total = samples[0].num_frames
    grid: dict[tuple[float, float], float] = {}
    for length in lengths:
        for k, window in enumerate(sliding_windows(total, float(length), step_ratio)):
            cm = ConfusionMatrix.empty(num_classes)
            crops = [crop_frames(s, window) for s in samples]
            for chunk in _batches(crops, batch_size):
                batch = make_batch(chunk)
                cm.update(batch["labels"], model.predict(batch))
            grid[(round(k * step_ratio, 6), float(length))] = miou(cm)
    return grid


def fit(config: RunConfig) -> Path:
    """Train per the config; returns the best-LDIoU checkpoint path."""
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.ini").write_text(render_run_config(config))

    manifest = DatasetManifest.load(Path(config.data_dir))
    splits = load_dataset(manifest)
    if not splits["train"]:
        raise ConfigurationError("training split is empty")

    model = build_model(config, manifest, splits["train"][0])
    teacher = TeacherState(clone_model(model))
    optimizer = AdamW(model.named_parameters(), betas=(config.beta1, config.beta2),
                      weight_decay=config.weight_decay)
    cfg_hash = config_hash(model.config.to_json())

    n_train = len(splits["train"])
    steps_per_epoch = math.ceil(n_train / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    warmup_steps = config.lr_warmup_epochs * steps_per_epoch
    best_path = out_dir / "best.npz"

    if total_steps == 0:
        save_checkpoint(best_path, model, teacher.model,
                        metadata={"step": 0, "ldiou": None, "config_hash": cfg_hash})
        (out_dir / "train_log.jsonl").write_text("")
        return best_path

    schedule = DecaySchedule(total_steps=total_steps,
                             warmup_fraction=config.ema_warmup_fraction,
                             warmup_start=config.ema_warmup_start,
                             warmup_end=config.ema_warmup_end,
                             final=config.ema_final)
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    state = TrainState(model=model, teacher=teacher, optimizer=optimizer, step=0,
                       best_ldiou=-math.inf,
                       crop_rng=np.random.default_rng(seeds[0]))
    shuffle_rng = np.random.default_rng(seeds[1])

    with open(out_dir / "train_log.jsonl", "w") as log, \
            open(out_dir / "validations.jsonl", "w") as val_log:
        for _ in range(config.epochs):
            order = shuffle_rng.permutation(n_train)
            for chunk in _batches(list(order), config.batch_size):
                batch_samples = [splits["train"][i] for i in chunk]
                lr = learning_rate_at(state.step, warmup_steps, total_steps,
                                      config.lr_peak, config.lr_floor,
                                      config.lr_start)
                record = train_step(batch_samples, state, config, lr, schedule)
                log.write(json.dumps(record, sort_keys=True) + "\n")
                if (state.step % config.validation_interval == 0
                        or state.step == total_steps):
                    report = validate(model, splits["val"], config.eval_ratios,
                                      manifest.num_classes, config.batch_size)
                    val_log.write(json.dumps(
                        {"step": state.step, "ldiou": report.ldiou,
                         "mmiou": report.mmiou}, sort_keys=True) + "\n")
                    if report.ldiou > state.best_ldiou:
                        state.best_ldiou = report.ldiou
                        save_checkpoint(best_path, model, teacher.model,
                                        metadata={"step": state.step,
                                                  "ldiou": report.ldiou,
                                                  "config_hash": cfg_hash})
                        report.save(out_dir / "best_val_report.json")
    return best_path


def evaluate_checkpoint(checkpoint: Path, data_dir: Path, ratios,
                        split: str = "test", batch_size: int = 16,
                        sweep_lengths=(), sweep_step: float = 0.1) -> EvalReport:
    """Load a checkpoint and produce its EvalReport on a corpus split."""
    model, _, _ = load_checkpoint(checkpoint)
    manifest = DatasetManifest.load(Path(data_dir))
    samples = load_dataset(manifest)[split]
    if not samples:
        raise ConfigurationError(f"split {split!r} is empty")
    report = validate(model, samples, ratios, manifest.num_classes, batch_size)
    if len(sweep_lengths) > 0:
        report.sweep = sweep(model, samples, sweep_lengths, sweep_step,
                             manifest.num_classes, batch_size)
    return report
