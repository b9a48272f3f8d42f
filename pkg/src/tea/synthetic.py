"""Deterministic synthetic SITS corpus with double-logistic crop phenology.

Each sample is a seeded planar partition (nearest-seed parcels) of an H x W
scene; every parcel carries one class whose per-frame spectra follow the
class's double-logistic curve plus pixel noise. Classes with late onsets are
intentionally near-indistinguishable from bare soil in early frames, so short
temporal prefixes are genuinely harder than full sequences.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetManifest, SitsSample, save_sample, split_assignment
from .errors import ConfigurationError, ValidationError


@dataclass
class PhenologyClassSpec:
    """Double-logistic spectral curve parameters for one class."""

    name: str
    onset_day: float
    senescence_day: float
    growth_rate: float
    decay_rate: float
    peak_amplitudes: np.ndarray  # per channel
    base_amplitudes: np.ndarray  # per channel
    noise_std: float = 0.05
    frame_dropout: float = 0.0

    def validate(self) -> None:
        if not self.onset_day < self.senescence_day:
            raise ValidationError(f"{self.name}: onset must precede senescence")
        if not (np.isfinite(self.peak_amplitudes).all()
                and np.isfinite(self.base_amplitudes).all()):
            raise ValidationError(f"{self.name}: non-finite amplitudes")
        for p, what in ((self.frame_dropout, "frame_dropout"),):
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{self.name}: {what} outside [0, 1]")
        if self.noise_std < 0:
            raise ValidationError(f"{self.name}: negative noise std")


def class_curve(spec: PhenologyClassSpec, days: np.ndarray) -> np.ndarray:
    """Noise-free spectra for the given acquisition days, shape (T, C)."""
    t = np.asarray(days, dtype=np.float64)[:, None]
    rise = 1.0 / (1.0 + np.exp(-spec.growth_rate * (t - spec.onset_day)))
    fall = 1.0 / (1.0 + np.exp(spec.decay_rate * (t - spec.senescence_day)))
    bump = rise + fall - 1.0
    return (spec.base_amplitudes[None, :]
            + spec.peak_amplitudes[None, :] * bump).astype(np.float32)


def default_class_specs(num_classes: int, num_channels: int,
                        noise_std: float = 0.05,
                        frame_dropout: float = 0.05) -> list[PhenologyClassSpec]:
    """Desk-scale class set: background, one early crop, late crops that share
    early-season spectra and separate only once their growth bumps appear."""
    if num_classes < 2:
        raise ConfigurationError("need at least 2 classes")
    channels = np.arange(num_channels)
    base = np.full(num_channels, 0.10, dtype=np.float64)
    specs = [PhenologyClassSpec(
        name="background",
        onset_day=20.0, senescence_day=105.0,
        growth_rate=0.05, decay_rate=0.05,
        peak_amplitudes=np.full(num_channels, 0.04),
        base_amplitudes=base.copy(),
        noise_std=noise_std, frame_dropout=frame_dropout,
    )]
    if num_classes >= 2:
        phase = 2.0 * np.pi * 1.0 / num_classes
        specs.append(PhenologyClassSpec(
            name="early_crop",
            onset_day=15.0, senescence_day=58.0,
            growth_rate=0.22, decay_rate=0.20,
            peak_amplitudes=0.55 + 0.30 * np.cos(2 * np.pi * channels / num_channels + phase),
            base_amplitudes=base.copy(),
            noise_std=noise_std, frame_dropout=frame_dropout,
        ))
    for k in range(2, num_classes):
        phase = 2.0 * np.pi * k / num_classes
        specs.append(PhenologyClassSpec(
            name=f"late_crop_{k - 1}",
            onset_day=50.0 + 6.0 * (k - 2),
            senescence_day=92.0 + 7.0 * (k - 2),
            growth_rate=0.20, decay_rate=0.18,
            peak_amplitudes=0.55 + 0.30 * np.cos(2 * np.pi * channels / num_channels + phase),
            base_amplitudes=base.copy(),
            noise_std=noise_std, frame_dropout=frame_dropout,
        ))
    return specs


@dataclass
class CorpusGeometry:
    """Scene and acquisition-grid geometry for the generator."""

    height: int = 16
    width: int = 16
    n_frames: int = 24
    n_channels: int = 4
    patch_size: int = 2
    revisit_days: int = 5
    date_jitter: int = 1
    parcels_min: int = 6
    parcels_max: int = 10


def _apportion(priors: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Largest-remainder apportionment of n parcels over class priors.

    Ties are broken by a seeded jitter; a fixed tie-break would silently
    overweight low class indices corpus-wide.
    """
    quota = priors * n
    counts = np.floor(quota).astype(int)
    rem = n - counts.sum()
    if rem > 0:
        frac = quota - counts + rng.uniform(0, 1e-6, size=len(priors))
        order = np.argsort(-frac, kind="stable")
        counts[order[:rem]] += 1
    return counts


def _parcel_partition(rng: np.random.Generator, height: int, width: int,
                      n_parcels: int) -> np.ndarray:
    """Nearest-seed planar partition: (H, W) map of parcel indices."""
    seeds = rng.uniform(0, (height, width), size=(n_parcels, 2))
    yy, xx = np.mgrid[0:height, 0:width]
    d2 = ((yy[None] - seeds[:, 0, None, None]) ** 2
          + (xx[None] - seeds[:, 1, None, None]) ** 2)
    return d2.argmin(axis=0)


def _acquisition_offsets(rng: np.random.Generator, geometry: CorpusGeometry) -> np.ndarray:
    base = np.arange(geometry.n_frames, dtype=np.int64) * geometry.revisit_days
    if geometry.date_jitter > 0:
        base = base + rng.integers(-geometry.date_jitter, geometry.date_jitter + 1,
                                   size=geometry.n_frames)
    base[0] = max(base[0], 0)
    for t in range(1, geometry.n_frames):
        base[t] = max(base[t], base[t - 1] + 1)
    return base


def generate_sample(rng: np.random.Generator, specs: list[PhenologyClassSpec],
                    geometry: CorpusGeometry, priors: np.ndarray,
                    sample_id: str) -> SitsSample:
    """Draw one parcel scene and synthesize its spectra."""
    n_parcels = int(rng.integers(geometry.parcels_min, geometry.parcels_max + 1))
    parcel_map = _parcel_partition(rng, geometry.height, geometry.width, n_parcels)
    counts = _apportion(priors, n_parcels, rng)
    parcel_classes = np.repeat(np.arange(len(specs)), counts)
    rng.shuffle(parcel_classes)
    labels = parcel_classes[parcel_map]

    offsets = _acquisition_offsets(rng, geometry)
    curves = np.stack([class_curve(spec, offsets) for spec in specs])  # (K, T, C)
    values = curves[labels].transpose(2, 3, 0, 1)  # (T, C, H, W)

    std_map = np.array([s.noise_std for s in specs], dtype=np.float32)[labels]
    noise = rng.standard_normal(values.shape).astype(np.float32) * std_map[None, None]
    values = (values + noise).astype(np.float32)

    dropout = float(np.dot(priors, [s.frame_dropout for s in specs]))
    dropped = rng.random(geometry.n_frames) < dropout
    if dropped.all():
        dropped[0] = False
    values[dropped] = 0.0

    return SitsSample(values=values, day_offsets=offsets,
                      valid_mask=~dropped, labels=labels.astype(np.int64),
                      sample_id=sample_id)


def generate_synthetic_dataset(
    specs: list[PhenologyClassSpec],
    geometry: CorpusGeometry,
    n_samples: int,
    seed: int,
    out_dir: Path,
    priors: np.ndarray | None = None,
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    start_date: dt.date = dt.date(2018, 9, 1),
    return_samples: bool = False,
):
    """Write a fully reproducible corpus; returns its manifest.

    The whole corpus is a pure function of (specs, geometry, n_samples, seed):
    running twice with the same arguments produces byte-identical files.
    """
    if len(specs) < 2:
        raise ConfigurationError("need at least 2 class specs")
    for spec in specs:
        spec.validate()
    if geometry.height % geometry.patch_size or geometry.width % geometry.patch_size:
        raise ConfigurationError(
            f"scene {geometry.height}x{geometry.width} not divisible by patch "
            f"size {geometry.patch_size}")
    priors = (np.full(len(specs), 1.0 / len(specs)) if priors is None
              else np.asarray(priors, dtype=np.float64))
    if priors.shape != (len(specs),) or abs(priors.sum() - 1.0) > 1e-9:
        raise ConfigurationError("priors must be one probability per class, summing to 1")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    width = len(str(max(n_samples - 1, 1)))
    samples = []
    for i in range(n_samples):
        sample = generate_sample(rng, specs, geometry, priors,
                                 sample_id=f"sample_{i:0{width}d}")
        save_sample(out_dir, sample, start_date)
        samples.append(sample)

    manifest = DatasetManifest(
        root=out_dir,
        num_classes=len(specs),
        padded_length=geometry.n_frames,
        start_date=start_date,
        split_ratios=split_ratios,
        num_channels=geometry.n_channels,
        seed=seed,
        revisit_days=geometry.revisit_days,
        max_day_offset=geometry.n_frames * geometry.revisit_days
        + geometry.date_jitter + 1,
        n_samples=n_samples,
    )
    train_idx = split_assignment(n_samples, split_ratios, seed)["train"]
    stack = np.concatenate(
        [samples[i].values[samples[i].valid_mask] for i in train_idx], axis=0)
    manifest.norm_mean = stack.mean(axis=(0, 2, 3)).astype(np.float64)
    manifest.norm_std = np.maximum(stack.std(axis=(0, 2, 3)), 1e-6).astype(np.float64)
    manifest.save()
    if return_samples:
        return manifest, samples
    return manifest
