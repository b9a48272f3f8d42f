"""Run and generator configuration: INI-style files plus environment overrides.

Every RunConfig field is addressable from the config file as `[section] key`
and from the environment as TEA_<SECTION>_<KEY> (environment wins). Ratio
lists accept either comma syntax ("0.1,0.2,0.4") or the graduated range
shorthand "0.1..1.0" (step 0.1).
"""

from __future__ import annotations

import configparser
import dataclasses
import datetime as dt
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .synthetic import CorpusGeometry, PhenologyClassSpec, default_class_specs


@dataclass
class RunConfig:
    """Everything a training run needs; defaults are the desk-scale setup."""

    # [data] / [run]
    data_dir: str = "data/desk"
    out_dir: str = "runs/tea"
    seed: int = 0
    # [model]
    embed_dim: int = 32
    patch_size: int = 2
    temporal_depth: int = 2
    spatial_depth: int = 2
    heads: int = 4
    mlp_ratio: int = 2
    use_prototypes: bool = True
    prototype_slot_span: int = 0  # 0 = one slot per nominal revisit step
    recon_hidden: tuple[int, ...] = (64,)
    # [schedule]
    epochs: int = 40
    batch_size: int = 8
    validation_interval: int = 500
    # [lr]
    lr_warmup_epochs: int = 10
    lr_peak: float = 1e-3
    lr_floor: float = 1e-6
    lr_start: float = 1e-8
    # [optimizer]
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    # [loss]
    lambda_ce: float = 1.0
    lambda_t: float = 1.0
    lambda_s: float = 1.0
    lambda_proto: float = 1.0
    lambda_rec: float = 1.0
    lambda_soft: float = 1.0
    temperature: float = 1.0
    # [ema]
    ema_warmup_fraction: float = 0.15
    ema_warmup_start: float = 0.1
    ema_warmup_end: float = 0.9
    ema_final: float = 0.999
    # [crop]
    crop_min_ratio: float = 0.1
    crop_random_start: bool = True
    # [eval]
    eval_ratios: tuple[float, ...] = tuple(np.round(np.arange(1, 11) * 0.1, 2))
    sweep_lengths: tuple[float, ...] = ()
    sweep_step: float = 0.1

    def validate(self) -> None:
        weights = (self.lambda_ce, self.lambda_t, self.lambda_s,
                   self.lambda_proto, self.lambda_rec, self.lambda_soft)
        if any(w < 0 for w in weights):
            raise ConfigurationError("loss weights must be non-negative")
        if self.lr_peak <= self.lr_floor:
            raise ConfigurationError("peak learning rate must exceed the floor")
        if not 0.0 < self.crop_min_ratio <= 1.0:
            raise ConfigurationError("crop min_ratio must lie in (0, 1]")


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


def parse_ratios(text: str) -> tuple[float, ...]:
    """Comma list or `a..b` shorthand for the graduated 10% grid."""
    text = text.strip()
    if not text:
        return ()
    if ".." in text:
        lo_text, hi_text = text.split("..", 1)
        lo, hi = float(lo_text), float(hi_text)
        steps = int(round((hi - lo) / 0.1)) + 1
        return tuple(round(lo + 0.1 * i, 2) for i in range(steps))
    return tuple(float(v) for v in text.split(","))


def parse_ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


_render_ratios = ",".join
# (section, key, dataclass field, parser, renderer)
_SCHEMA = [
    ("data", "dir", "data_dir", str, str),
    ("run", "out_dir", "out_dir", str, str),
    ("run", "seed", "seed", int, str),
    ("model", "embed_dim", "embed_dim", int, str),
    ("model", "patch_size", "patch_size", int, str),
    ("model", "temporal_depth", "temporal_depth", int, str),
    ("model", "spatial_depth", "spatial_depth", int, str),
    ("model", "heads", "heads", int, str),
    ("model", "mlp_ratio", "mlp_ratio", int, str),
    ("model", "use_prototypes", "use_prototypes", parse_bool, lambda v: str(v).lower()),
    ("model", "prototype_slot_span", "prototype_slot_span", int, str),
    ("model", "recon_hidden", "recon_hidden", parse_ints,
     lambda v: ",".join(str(x) for x in v)),
    ("schedule", "epochs", "epochs", int, str),
    ("schedule", "batch_size", "batch_size", int, str),
    ("schedule", "validation_interval", "validation_interval", int, str),
    ("lr", "warmup_epochs", "lr_warmup_epochs", int, str),
    ("lr", "peak", "lr_peak", float, repr),
    ("lr", "floor", "lr_floor", float, repr),
    ("lr", "start", "lr_start", float, repr),
    ("optimizer", "beta1", "beta1", float, repr),
    ("optimizer", "beta2", "beta2", float, repr),
    ("optimizer", "weight_decay", "weight_decay", float, repr),
    ("loss", "lambda_ce", "lambda_ce", float, repr),
    ("loss", "lambda_t", "lambda_t", float, repr),
    ("loss", "lambda_s", "lambda_s", float, repr),
    ("loss", "lambda_proto", "lambda_proto", float, repr),
    ("loss", "lambda_rec", "lambda_rec", float, repr),
    ("loss", "lambda_soft", "lambda_soft", float, repr),
    ("loss", "temperature", "temperature", float, repr),
    ("ema", "warmup_fraction", "ema_warmup_fraction", float, repr),
    ("ema", "warmup_start", "ema_warmup_start", float, repr),
    ("ema", "warmup_end", "ema_warmup_end", float, repr),
    ("ema", "final", "ema_final", float, repr),
    ("crop", "min_ratio", "crop_min_ratio", float, repr),
    ("crop", "random_start", "crop_random_start", parse_bool, lambda v: str(v).lower()),
    ("eval", "ratios", "eval_ratios", parse_ratios,
     lambda v: ",".join(repr(float(x)) for x in v)),
    ("eval", "sweep_lengths", "sweep_lengths", parse_ratios,
     lambda v: ",".join(repr(float(x)) for x in v)),
    ("eval", "sweep_step", "sweep_step", float, repr),
]


def _read_ini(path: Path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"config file {path} not found")
    return parser


def load_run_config(path: Path | None = None,
                    env: dict[str, str] | None = None) -> RunConfig:
    """Build a RunConfig from an INI file plus TEA_<SECTION>_<KEY> overrides."""
    env = os.environ if env is None else env
    values: dict[str, object] = {}
    parser = _read_ini(Path(path)) if path is not None else None
    known = {(s, k) for s, k, _, _, _ in _SCHEMA}
    if parser is not None:
        for section in parser.sections():
            for key in parser[section]:
                if (section, key) not in known:
                    raise ConfigurationError(
                        f"unknown config entry [{section}] {key}")
    for section, key, fieldname, parse, _ in _SCHEMA:
        raw = None
        if parser is not None and parser.has_option(section, key):
            raw = parser.get(section, key)
        override = env.get(f"TEA_{section.upper()}_{key.upper()}")
        if override is not None:
            raw = override
        if raw is not None:
            try:
                values[fieldname] = parse(raw)
            except (ValueError, ConfigurationError) as exc:
                raise ConfigurationError(
                    f"bad value for [{section}] {key}: {raw!r} ({exc})") from exc
    config = RunConfig(**values)
    config.validate()
    return config


def render_run_config(config: RunConfig) -> str:
    """INI text with every field explicit (written next to each run's outputs)."""
    sections: dict[str, list[str]] = {}
    for section, key, fieldname, _, render in _SCHEMA:
        sections.setdefault(section, []).append(
            f"{key} = {render(getattr(config, fieldname))}")
    chunks = []
    for section, lines in sections.items():
        chunks.append(f"[{section}]")
        chunks.extend(lines)
        chunks.append("")
    return "\n".join(chunks)


# -- generator configuration --------------------------------------------------------


@dataclass
class GeneratorConfig:
    geometry: CorpusGeometry
    specs: list[PhenologyClassSpec]
    n_samples: int
    priors: np.ndarray | None
    split_ratios: tuple[float, float, float]
    start_date: dt.date


def load_generator_config(path: Path) -> GeneratorConfig:
    """Corpus recipe: a [corpus] section plus optional [class.<k>] overrides."""
    parser = _read_ini(Path(path))
    if "corpus" not in parser:
        raise ConfigurationError(f"{path}: missing [corpus] section")
    corpus = parser["corpus"]
    geometry = CorpusGeometry(
        height=corpus.getint("height", 16),
        width=corpus.getint("width", 16),
        n_frames=corpus.getint("frames", 24),
        n_channels=corpus.getint("channels", 4),
        patch_size=corpus.getint("patch_size", 2),
        revisit_days=corpus.getint("revisit_days", 5),
        date_jitter=corpus.getint("date_jitter", 1),
        parcels_min=corpus.getint("parcels_min", 6),
        parcels_max=corpus.getint("parcels_max", 10),
    )
    num_classes = corpus.getint("num_classes", 4)
    specs = default_class_specs(
        num_classes, geometry.n_channels,
        noise_std=corpus.getfloat("noise_std", 0.05),
        frame_dropout=corpus.getfloat("frame_dropout", 0.05))
    for section in parser.sections():
        if not section.startswith("class."):
            continue
        index = int(section.split(".", 1)[1])
        if not 0 <= index < num_classes:
            raise ConfigurationError(f"{path}: class index {index} out of range")
        spec = specs[index]
        cls = parser[section]
        spec.name = cls.get("name", spec.name)
        spec.onset_day = cls.getfloat("onset_day", spec.onset_day)
        spec.senescence_day = cls.getfloat("senescence_day", spec.senescence_day)
        spec.growth_rate = cls.getfloat("growth_rate", spec.growth_rate)
        spec.decay_rate = cls.getfloat("decay_rate", spec.decay_rate)
        if cls.get("peak_amplitudes"):
            spec.peak_amplitudes = np.array(
                [float(v) for v in cls.get("peak_amplitudes").split(",")])
        if cls.get("base_amplitudes"):
            spec.base_amplitudes = np.array(
                [float(v) for v in cls.get("base_amplitudes").split(",")])
        spec.noise_std = cls.getfloat("noise_std", spec.noise_std)
        spec.frame_dropout = cls.getfloat("frame_dropout", spec.frame_dropout)
        spec.validate()
    priors = None
    if corpus.get("priors"):
        priors = np.array([float(v) for v in corpus.get("priors").split(",")])
    split = tuple(float(v) for v in corpus.get("split_ratios", "0.6,0.2,0.2").split(","))
    start = dt.date.fromisoformat(corpus.get("start_date", "2018-09-01"))
    return GeneratorConfig(geometry=geometry, specs=specs,
                           n_samples=corpus.getint("n_samples", 200),
                           priors=priors, split_ratios=split, start_date=start)
