"""Satellite image time-series samples: temporal encoding, padding, and disk I/O.

A corpus directory holds one manifest (`manifest.txt`, key = value lines) and,
per sample, three streamable files:

* ``<id>.values.bin`` — raw little-endian float32, flattened in T,C,H,W order;
* ``<id>.meta.json``  — sidecar record with the array shape, per-frame
  acquisition dates (ISO), per-frame validity flags, and the labels file name;
* ``<id>.labels.bin`` — raw little-endian uint16 class map, row-major H*W.

Values on disk are unnormalized; ``load_dataset`` standardizes valid frames
with the per-channel statistics stored in the manifest.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ValidationError

FORMAT_VERSION = 1


@dataclass
class SitsSample:
    """One image time series with per-frame acquisition metadata.

    values have shape (T, C, H, W); day_offsets count whole days since the
    corpus start date; frames with valid_mask False are exact zeros.
    """

    values: np.ndarray
    day_offsets: np.ndarray
    valid_mask: np.ndarray
    labels: np.ndarray
    sample_id: str

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.values.shape[2], self.values.shape[3]

    def validate(self, num_classes: int | None = None) -> None:
        T = self.num_frames
        if self.day_offsets.shape != (T,) or self.valid_mask.shape != (T,):
            raise ValidationError(f"{self.sample_id}: frame metadata length mismatch")
        if self.labels.shape != self.image_shape:
            raise ValidationError(f"{self.sample_id}: label map shape mismatch")
        valid_offsets = self.day_offsets[self.valid_mask]
        if valid_offsets.size > 1 and not np.all(np.diff(valid_offsets) > 0):
            raise ValidationError(
                f"{self.sample_id}: day offsets of valid frames must strictly increase")
        if np.any(self.values[~self.valid_mask] != 0):
            raise ValidationError(f"{self.sample_id}: invalid frames must be exact zeros")
        if self.labels.min() < 0:
            raise ValidationError(f"{self.sample_id}: negative label")
        if num_classes is not None and self.labels.max() >= num_classes:
            raise ValidationError(
                f"{self.sample_id}: label {int(self.labels.max())} outside "
                f"[0, {num_classes - 1}]")


@dataclass
class DatasetManifest:
    """Corpus-level configuration and statistics, stored as key = value text."""

    root: Path
    num_classes: int
    padded_length: int
    start_date: dt.date
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    num_channels: int = 4
    seed: int = 0
    revisit_days: int = 5
    truncate_length: int | None = None
    max_day_offset: int = 400
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    n_samples: int = 0

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ValidationError("manifest needs at least 2 classes")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ValidationError("split ratios must sum to 1")

    def save(self, path: Path | None = None) -> Path:
        path = Path(path) if path is not None else Path(self.root) / "manifest.txt"
        lines = [
            f"format_version = {FORMAT_VERSION}",
            f"num_classes = {self.num_classes}",
            f"padded_length = {self.padded_length}",
            f"start_date = {self.start_date.isoformat()}",
            f"split_ratios = {','.join(repr(r) for r in self.split_ratios)}",
            f"num_channels = {self.num_channels}",
            f"seed = {self.seed}",
            f"revisit_days = {self.revisit_days}",
            f"truncate_length = {'none' if self.truncate_length is None else self.truncate_length}",
            f"max_day_offset = {self.max_day_offset}",
            f"n_samples = {self.n_samples}",
        ]
        if self.norm_mean is not None:
            lines.append(f"norm_mean = {','.join(repr(float(v)) for v in self.norm_mean)}")
            lines.append(f"norm_std = {','.join(repr(float(v)) for v in self.norm_std)}")
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, path: Path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.txt"
        fields: dict[str, str] = {}
        for raw in path.read_text().splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}: malformed manifest line {line!r}")
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        try:
            ratios = tuple(float(v) for v in fields["split_ratios"].split(","))
            truncate = fields.get("truncate_length", "none")
            manifest = cls(
                root=path.parent,
                num_classes=int(fields["num_classes"]),
                padded_length=int(fields["padded_length"]),
                start_date=dt.date.fromisoformat(fields["start_date"]),
                split_ratios=ratios,  # type: ignore[arg-type]
                num_channels=int(fields["num_channels"]),
                seed=int(fields["seed"]),
                revisit_days=int(fields["revisit_days"]),
                truncate_length=None if truncate == "none" else int(truncate),
                max_day_offset=int(fields.get("max_day_offset", 400)),
                n_samples=int(fields.get("n_samples", 0)),
            )
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"{path}: {exc}") from exc
        if "norm_mean" in fields:
            manifest.norm_mean = np.array([float(v) for v in fields["norm_mean"].split(",")])
            manifest.norm_std = np.array([float(v) for v in fields["norm_std"].split(",")])
        manifest.validate()
        return manifest


def encode_temporal_position(date: dt.date, start_date: dt.date) -> int:
    """Whole days elapsed since the corpus start date (0 for the start itself)."""
    if date < start_date:
        raise ValidationError(f"acquisition date {date} precedes start date {start_date}")
    return (date - start_date).days


def zero_pad(sample: SitsSample, target_length: int, revisit_days: int = 5) -> SitsSample:
    """Append all-zero frames up to target_length.

    Appended frames carry valid_mask False and day offsets extrapolated on the
    nominal revisit grid, so positional lookups stay in range.
    """
    T = sample.num_frames
    if T > target_length:
        raise ValidationError(
            f"{sample.sample_id}: length {T} exceeds pad target {target_length}")
    if T == target_length:
        return sample
    extra = target_length - T
    pad_values = np.zeros((extra,) + sample.values.shape[1:], dtype=sample.values.dtype)
    last = int(sample.day_offsets[-1])
    pad_offsets = last + revisit_days * np.arange(1, extra + 1, dtype=sample.day_offsets.dtype)
    return SitsSample(
        values=np.concatenate([sample.values, pad_values], axis=0),
        day_offsets=np.concatenate([sample.day_offsets, pad_offsets]),
        valid_mask=np.concatenate([sample.valid_mask, np.zeros(extra, dtype=bool)]),
        labels=sample.labels,
        sample_id=sample.sample_id,
    )


def truncate_frames(sample: SitsSample, length: int) -> SitsSample:
    """Keep the first `length` frames (Germany-style preprocessing)."""
    if length >= sample.num_frames:
        return sample
    return dataclasses.replace(
        sample,
        values=sample.values[:length],
        day_offsets=sample.day_offsets[:length],
        valid_mask=sample.valid_mask[:length],
    )


# -- per-sample disk format ---------------------------------------------------------


def save_sample(root: Path, sample: SitsSample, start_date: dt.date) -> None:
    """Write the three-file record for one sample (values, sidecar, labels)."""
    root = Path(root)
    sid = sample.sample_id
    values = np.ascontiguousarray(sample.values, dtype="<f4")
    values.tofile(root / f"{sid}.values.bin")
    labels = np.ascontiguousarray(sample.labels, dtype="<u2")
    labels.tofile(root / f"{sid}.labels.bin")
    dates = [(start_date + dt.timedelta(days=int(d))).isoformat()
             for d in sample.day_offsets]
    meta = {
        "format_version": FORMAT_VERSION,
        "sample_id": sid,
        "shape": [int(v) for v in sample.values.shape],
        "dates": dates,
        "valid_mask": [bool(v) for v in sample.valid_mask],
        "labels_file": f"{sid}.labels.bin",
        "values_file": f"{sid}.values.bin",
    }
    (root / f"{sid}.meta.json").write_text(
        json.dumps(meta, sort_keys=True, separators=(",", ":")))


def load_sample(meta_path: Path, start_date: dt.date) -> SitsSample:
    """Read one sample record back; raises DataFormatError naming the file."""
    meta_path = Path(meta_path)
    try:
        meta = json.loads(meta_path.read_text())
        shape = tuple(meta["shape"])
        values = np.fromfile(meta_path.parent / meta["values_file"], dtype="<f4")
        labels = np.fromfile(meta_path.parent / meta["labels_file"], dtype="<u2")
        dates = [dt.date.fromisoformat(d) for d in meta["dates"]]
        valid_mask = np.asarray(meta["valid_mask"], dtype=bool)
        sample_id = meta["sample_id"]
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{meta_path}: {exc}") from exc
    if values.size != int(np.prod(shape)):
        raise DataFormatError(
            f"{meta_path}: values file holds {values.size} floats, expected "
            f"{int(np.prod(shape))}")
    if labels.size != shape[2] * shape[3]:
        raise DataFormatError(f"{meta_path}: labels file size mismatch")
    offsets = np.array([encode_temporal_position(d, start_date) for d in dates],
                       dtype=np.int64)
    return SitsSample(
        values=values.reshape(shape).astype(np.float32),
        day_offsets=offsets,
        valid_mask=valid_mask,
        labels=labels.reshape(shape[2], shape[3]).astype(np.int64),
        sample_id=sample_id,
    )


# -- corpus loading ----------------------------------------------------------------


def split_assignment(n: int, ratios: tuple[float, float, float],
                     seed: int) -> dict[str, np.ndarray]:
    """Deterministic index split; e.g. 10 samples at 3:1:1 give 6/2/2."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    return {
        "train": perm[:n_train],
        "val": perm[n_train:n_train + n_val],
        "test": perm[n_train + n_val:],
    }


def normalize_sample(sample: SitsSample, mean: np.ndarray, std: np.ndarray) -> SitsSample:
    """Per-channel standardization of valid frames; padded frames stay zero."""
    values = sample.values.copy()
    mean = mean.reshape(1, -1, 1, 1).astype(values.dtype)
    std = std.reshape(1, -1, 1, 1).astype(values.dtype)
    values[sample.valid_mask] = (values[sample.valid_mask] - mean) / std
    return dataclasses.replace(sample, values=values)


def load_dataset(manifest: DatasetManifest,
                 normalize: bool = True) -> dict[str, list[SitsSample]]:
    """Load, temporally encode, pad, validate, and split a corpus.

    Returns ordered sample lists for the train/val/test splits; the split
    assignment is a pure function of the manifest seed.
    """
    manifest.validate()
    root = Path(manifest.root)
    if not root.is_dir():
        raise DataFormatError(f"corpus root {root} does not exist")
    meta_paths = sorted(root.glob("*.meta.json"))
    samples: list[SitsSample] = []
    for meta_path in meta_paths:
        sample = load_sample(meta_path, manifest.start_date)
        sample = zero_pad(sample, manifest.padded_length, manifest.revisit_days)
        if manifest.truncate_length is not None:
            sample = truncate_frames(sample, manifest.truncate_length)
        if normalize and manifest.norm_mean is not None:
            sample = normalize_sample(sample, manifest.norm_mean, manifest.norm_std)
        sample.validate(manifest.num_classes)
        samples.append(sample)
    assignment = split_assignment(len(samples), manifest.split_ratios, manifest.seed)
    return {name: [samples[i] for i in idx] for name, idx in assignment.items()}


def make_batch(samples: list[SitsSample]) -> dict[str, np.ndarray]:
    """Stack samples, padding to the longest sequence in the batch.

    Batch-padded frames get valid_mask False (excluded from attention) and a
    repeated final day offset, so padded and true-length forwards agree.
    """
    B = len(samples)
    T = max(s.num_frames for s in samples)
    _, C, H, W = samples[0].values.shape
    values = np.zeros((B, T, C, H, W), dtype=np.float32)
    offsets = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T), dtype=bool)
    labels = np.zeros((B, H, W), dtype=np.int64)
    for i, s in enumerate(samples):
        t = s.num_frames
        values[i, :t] = s.values
        offsets[i, :t] = s.day_offsets
        offsets[i, t:] = s.day_offsets[-1]
        mask[i, :t] = s.valid_mask
        labels[i] = s.labels
    return {"values": values, "day_offsets": offsets, "valid_mask": mask,
            "labels": labels}
