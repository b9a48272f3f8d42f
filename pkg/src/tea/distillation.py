"""Teacher lifecycle and the feature / prototype / soft-label transfer losses.

The teacher shares the student's parameter schema, never receives gradients,
and moves toward the student by exponential moving average with a scheduled
decay: a linear warmup from 0.1 to 0.9 over the first 15% of steps, then an
exponential approach to 0.999.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .errors import ConfigurationError, ValidationError

# The exponential tail lands this far below `final` at the last step; half the
# spec tolerance, so "within 1e-4 of final" holds with margin.
_TAIL_GAP = 5e-5


@dataclass
class DecaySchedule:
    total_steps: int
    warmup_fraction: float = 0.15
    warmup_start: float = 0.1
    warmup_end: float = 0.9
    final: float = 0.999

    def __post_init__(self):
        if not 0.0 < self.warmup_start <= self.warmup_end < self.final < 1.0:
            raise ValidationError(
                "decay schedule must satisfy 0 < start <= end < final < 1")
        if self.total_steps < 1:
            raise ValidationError("total_steps must be positive")


def decay_at(step: int, schedule: DecaySchedule) -> float:
    """EMA decay for a step index in [0, total_steps]."""
    if not 0 <= step <= schedule.total_steps:
        raise ValidationError(
            f"step {step} outside [0, {schedule.total_steps}]")
    warm_steps = schedule.warmup_fraction * schedule.total_steps
    if step <= warm_steps:
        t = step / warm_steps if warm_steps > 0 else 1.0
        return (1.0 - t) * schedule.warmup_start + t * schedule.warmup_end
    gap = schedule.final - schedule.warmup_end
    rate = math.log(gap / _TAIL_GAP) / (schedule.total_steps - warm_steps)
    return schedule.final - gap * math.exp(-rate * (step - warm_steps))


class TeacherState:
    """EMA twin of the student plus its schedule position.

    Wraps a structural clone of the student model; every parameter is flagged
    requires_grad=False, so no forward through the teacher records a graph.
    """

    def __init__(self, model, step: int = 0):
        self.model = model
        self.step = step
        for p in model.named_parameters().values():
            p.requires_grad = False

    @property
    def parameters(self) -> dict[str, ad.Parameter]:
        return self.model.named_parameters()


def ema_update(teacher: dict[str, Tensor], student: dict[str, Tensor],
               decay: float) -> None:
    """In-place teacher <- teacher * decay + (1 - decay) * student."""
    if not 0.0 <= decay <= 1.0:
        raise ValidationError(f"decay {decay} outside [0, 1]")
    if teacher.keys() != student.keys():
        missing = set(teacher) ^ set(student)
        raise ConfigurationError(f"teacher/student schema mismatch: {sorted(missing)}")
    for name, p_t in teacher.items():
        p_s = student[name]
        if p_t.data.shape != p_s.data.shape:
            raise ConfigurationError(f"parameter {name}: shape mismatch")
        p_t.data = p_t.data * decay + (1.0 - decay) * p_s.data


def _mse(student: Tensor, teacher: np.ndarray) -> Tensor:
    student = as_tensor(student)
    target = np.asarray(teacher.data if isinstance(teacher, Tensor) else teacher,
                        dtype=student.dtype)
    if student.shape != target.shape:
        raise ConfigurationError(
            f"feature shape mismatch: student {student.shape} vs teacher "
            f"{target.shape}")
    diff = student - Tensor(target)
    return (diff * diff).mean()


def temporal_distill_loss(student_features: Tensor, teacher_features) -> Tensor:
    """Mean squared gap between (B, K, d) temporal features, teacher constant."""
    return _mse(student_features, teacher_features)


def spatial_distill_loss(student_features: Tensor, teacher_features) -> Tensor:
    """Mean squared gap between (B, K, N+1, d) spatial features (class-token
    slot included), i.e. per-sample normalization (N+1)*K*d averaged over the
    batch."""
    return _mse(student_features, teacher_features)


def prototype_align_loss(student_sim: Tensor, teacher_sim) -> Tensor:
    """Mean squared gap between (B, N, K) similarity maps."""
    return _mse(student_sim, teacher_sim)


def soft_label_loss(student_logits: Tensor, teacher_logits,
                    temperature: float = 1.0) -> Tensor:
    """Pixelwise cross-entropy of student against the teacher distribution.

    Both logit stacks are (B, K, H, W); softmax runs over the class axis at
    the given temperature; the result is averaged over pixels.
    """
    if temperature <= 0:
        raise ValidationError("temperature must be positive")
    student_logits = as_tensor(student_logits)
    teacher = np.asarray(teacher_logits.data if isinstance(teacher_logits, Tensor)
                         else teacher_logits, dtype=student_logits.dtype)
    if student_logits.shape != teacher.shape:
        raise ConfigurationError("logit shape mismatch between student and teacher")
    t = teacher / temperature
    t = t - t.max(axis=1, keepdims=True)
    e = np.exp(t)
    p_teacher = e / e.sum(axis=1, keepdims=True)
    log_p_student = ad.log_softmax(student_logits * (1.0 / temperature), axis=1)
    pixels = student_logits.size // student_logits.shape[1]
    return (log_p_student * Tensor(-p_teacher)).sum() * (1.0 / pixels)
