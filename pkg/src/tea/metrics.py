"""Segmentation metrics: pooled confusion matrices, mIoU, mmIoU, and the
length-decayed weighted mIoU that emphasizes short-sequence performance.

The length-decayed score weights each evaluation length by the normalized
reciprocal of the sequence length: w_j = (1/tau_j) / sum_k(1/tau_k). Weights
are scale-free in tau, so ratios and frame counts give identical results.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError


@dataclass
class ConfusionMatrix:
    """K x K counts; rows are ground truth, columns are predictions."""

    counts: np.ndarray

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def update(self, ground_truth: np.ndarray, prediction: np.ndarray) -> None:
        gt = np.asarray(ground_truth).ravel()
        pred = np.asarray(prediction).ravel()
        if gt.shape != pred.shape:
            raise ValidationError("ground truth and prediction sizes differ")
        K = self.num_classes
        if gt.min() < 0 or gt.max() >= K or pred.min() < 0 or pred.max() >= K:
            raise ValidationError(f"labels outside [0, {K - 1}]")
        self.counts += np.bincount(gt * K + pred, minlength=K * K).reshape(K, K)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        """Entrywise sum, for reducing per-worker matrices."""
        return ConfusionMatrix(self.counts + other.counts)


def miou(cm: ConfusionMatrix) -> float:
    """Mean IoU over classes with nonzero union (absent classes are skipped)."""
    if cm.total == 0:
        raise ValidationError("mIoU undefined on an empty confusion matrix")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    union = counts.sum(axis=0) + counts.sum(axis=1) - tp
    present = union > 0
    return float((tp[present] / union[present]).mean())


def ldiou(per_ratio_miou, lengths) -> float:
    """Weighted mIoU with weights the normalized reciprocals of lengths."""
    scores = np.asarray(per_ratio_miou, dtype=np.float64)
    taus = np.asarray(lengths, dtype=np.float64)
    if scores.shape != taus.shape:
        raise ValidationError("one length per mIoU value required")
    if np.any(taus <= 0):
        raise ValidationError("sequence lengths must be positive")
    weights = (1.0 / taus) / np.sum(1.0 / taus)
    return float(weights @ scores)


def mmiou(per_ratio_miou) -> float:
    """Arithmetic mean of the per-ratio mIoU values."""
    scores = np.asarray(per_ratio_miou, dtype=np.float64)
    if scores.size == 0:
        raise ValidationError("mmIoU of an empty list")
    return float(scores.mean())


@dataclass
class EvalReport:
    """Per-ratio mIoU plus the aggregate scores and the optional sweep grid."""

    ratios: list[float]
    per_ratio_miou: list[float]
    mmiou: float
    ldiou: float
    sweep: dict[tuple[float, float], float] = field(default_factory=dict)

    @classmethod
    def from_scores(cls, ratios, scores,
                    sweep: dict[tuple[float, float], float] | None = None,
                    ) -> "EvalReport":
        if len(ratios) != len(scores):
            raise ValidationError("one mIoU per ratio required")
        return cls(ratios=[float(r) for r in ratios],
                   per_ratio_miou=[float(s) for s in scores],
                   mmiou=mmiou(scores), ldiou=ldiou(scores, ratios),
                   sweep=dict(sweep) if sweep else {})

    # -- serialization --------------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "ratios": self.ratios,
            "per_ratio_miou": self.per_ratio_miou,
            "mmiou": self.mmiou,
            "ldiou": self.ldiou,
            "sweep": [[start, length, score]
                      for (start, length), score in sorted(self.sweep.items())],
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        sweep = {(float(s), float(l)): float(v) for s, l, v in payload.get("sweep", [])}
        return cls(ratios=payload["ratios"],
                   per_ratio_miou=payload["per_ratio_miou"],
                   mmiou=payload["mmiou"], ldiou=payload["ldiou"], sweep=sweep)

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: Path) -> "EvalReport":
        return cls.from_json(Path(path).read_text())

    def to_csv(self, path: Path) -> None:
        """One row per ratio, one row per sweep cell."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "start_ratio", "length_ratio", "miou"])
            for ratio, score in zip(self.ratios, self.per_ratio_miou):
                writer.writerow(["ratio", 0.0, ratio, f"{score:.6f}"])
            for (start, length), score in sorted(self.sweep.items()):
                writer.writerow(["sweep", start, length, f"{score:.6f}"])

    def render_table(self) -> str:
        """Text table in the per-ratio row layout of the evaluation protocol."""
        header = ["ratio"] + [f"{r:.0%}" for r in self.ratios] + ["mmIoU", "LDIoU"]
        row = (["mIoU"] + [f"{100 * s:.2f}" for s in self.per_ratio_miou]
               + [f"{100 * self.mmiou:.2f}", f"{100 * self.ldiou:.2f}"])
        widths = [max(len(a), len(b)) for a, b in zip(header, row)]
        lines = [
            "  ".join(h.rjust(w) for h, w in zip(header, widths)),
            "  ".join(v.rjust(w) for v, w in zip(row, widths)),
        ]
        if self.sweep:
            lines.append("")
            lines.append("sweep (start, length) -> mIoU")
            for (start, length), score in sorted(self.sweep.items()):
                lines.append(f"  start {start:>5.0%}  length {length:>5.0%}  "
                             f"mIoU {100 * score:.2f}")
        return "\n".join(lines)
