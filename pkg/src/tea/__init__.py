"""Temporal-adaptive semantic segmentation for satellite image time series.

A pure numpy/scipy stack: a factorized temporal/spatial transformer with its
own reverse-mode autodiff engine, teacher-student training on random temporal
crops, prototype-based class confidence, a reconstruction auxiliary task, and
a length-decayed evaluation protocol for variable-length sequences.
"""

__version__ = "0.1.0"

from .autodiff import Parameter, Tensor, no_grad
from .backbone import Backbone, BackboneConfig, SpatialOutput, TemporalOutput
from .config import GeneratorConfig, RunConfig, load_generator_config, load_run_config
from .cropping import (CropWindow, RatioSchedule, crop_frames, prefix_crop,
                       random_crop, sliding_windows)
from .data import (DatasetManifest, SitsSample, encode_temporal_position,
                   load_dataset, load_sample, make_batch, save_sample, zero_pad)
from .distillation import (DecaySchedule, TeacherState, decay_at, ema_update,
                           prototype_align_loss, soft_label_loss,
                           spatial_distill_loss, temporal_distill_loss)
from .errors import ConfigurationError, DataFormatError, ValidationError
from .metrics import ConfusionMatrix, EvalReport, ldiou, miou, mmiou
from .model import (ModelConfig, TeaModel, clone_model, load_checkpoint,
                    save_checkpoint)
from .optim import AdamW
from .prototype import PrototypeBank, apply_confidence, similarity_map
from .reconstruction import (ReconDecoder, ReconDecoderConfig, reconstruct,
                             reconstruction_loss)
from .synthetic import (CorpusGeometry, PhenologyClassSpec, class_curve,
                        default_class_specs, generate_synthetic_dataset)
from .trainer import (TrainState, build_model, cross_entropy_loss,
                      evaluate_checkpoint, fit, learning_rate_at, sweep,
                      train_step, validate)
