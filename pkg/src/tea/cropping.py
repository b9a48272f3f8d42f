"""Temporal subsequence extraction.

Training uses random windows (random ratio, optionally random start);
evaluation uses deterministic prefix crops at graduated ratios; the
robustness sweep slides fixed-length windows along the sequence. Crops keep
the original day offsets of retained frames, so absolute growth-stage
position survives cropping.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .data import SitsSample
from .errors import ValidationError


@dataclass(frozen=True)
class CropWindow:
    """A contiguous frame window [start_index, start_index + length)."""

    start_index: int
    length: int
    ratio: float


@dataclass(frozen=True)
class RatioSchedule:
    """Graduated evaluation ratios, default the ten levels 0.1 .. 1.0."""

    ratios: tuple[float, ...] = tuple(np.round(np.arange(1, 11) * 0.1, 2))

    def __post_init__(self):
        r = np.asarray(self.ratios)
        if r.size == 0 or np.any(r <= 0) or np.any(r > 1) or np.any(np.diff(r) <= 0):
            raise ValidationError("ratios must be strictly increasing within (0, 1]")


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def window_length(ratio: float, total: int) -> int:
    """Frames kept for a ratio: round-half-up of ratio*T, at least 1."""
    return max(1, round_half_up(ratio * total))


def crop_frames(sample: SitsSample, window: CropWindow) -> SitsSample:
    """Slice the frame axis; labels and retained frame contents are untouched."""
    stop = window.start_index + window.length
    if window.start_index < 0 or stop > sample.num_frames or window.length < 1:
        raise ValidationError(
            f"window [{window.start_index}, {stop}) outside sequence of length "
            f"{sample.num_frames}")
    return dataclasses.replace(
        sample,
        values=sample.values[window.start_index:stop],
        day_offsets=sample.day_offsets[window.start_index:stop],
        valid_mask=sample.valid_mask[window.start_index:stop],
    )


def random_crop(sample: SitsSample, rng: np.random.Generator,
                min_ratio: float = 0.1,
                random_start: bool = True) -> tuple[SitsSample, CropWindow]:
    """Random-ratio window at a random (or zero) start.

    The ratio is uniform on [min_ratio, 1]; the start is uniform over all
    positions keeping the window inside the sequence. With random_start off
    this is the ratio-only mode (window anchored at the first frame).
    """
    if not 0.0 < min_ratio <= 1.0:
        raise ValidationError(f"min_ratio {min_ratio} outside (0, 1]")
    T = sample.num_frames
    ratio = float(rng.uniform(min_ratio, 1.0)) if min_ratio < 1.0 else 1.0
    length = window_length(ratio, T)
    start = int(rng.integers(0, T - length + 1)) if random_start else 0
    window = CropWindow(start_index=start, length=length, ratio=ratio)
    return crop_frames(sample, window), window


def prefix_crop(sample: SitsSample, ratio: float) -> SitsSample:
    """Keep the earliest round-half-up(ratio*T) frames; deterministic."""
    if not 0.0 < ratio <= 1.0:
        raise ValidationError(f"ratio {ratio} outside (0, 1]")
    length = window_length(ratio, sample.num_frames)
    return crop_frames(sample, CropWindow(0, length, ratio))


def sliding_windows(total: int, length_ratio: float,
                    step_ratio: float) -> list[CropWindow]:
    """Windows of one length stepped along the sequence.

    Starts sit at 0, step, 2*step, ... (in ratio space) while the window still
    fits; e.g. an 80% length with a 10% step yields starts at 0%, 10%, 20%.
    """
    if not 0.0 < length_ratio <= 1.0:
        raise ValidationError(f"length ratio {length_ratio} outside (0, 1]")
    if step_ratio <= 0:
        raise ValidationError("step ratio must be positive")
    length = window_length(length_ratio, total)
    windows = []
    k = 0
    while True:
        start = round_half_up(k * step_ratio * total)
        if start + length > total:
            break
        windows.append(CropWindow(start_index=start, length=length, ratio=length_ratio))
        k += 1
    return windows
