import numpy as np
import pytest

from tea.config import (RunConfig, load_generator_config, load_run_config,
                        parse_ratios, render_run_config)
from tea.errors import ConfigurationError

RUN_INI = """
[data]
dir = corpora/demo

[run]
seed = 11
out_dir = runs/demo

[model]
embed_dim = 16
use_prototypes = false

[schedule]
epochs = 3

[loss]
lambda_soft = 0.5

[eval]
ratios = 0.2,0.6,1.0
"""


class TestParseRatios:
    def test_range_shorthand(self):
        ratios = parse_ratios("0.1..1.0")
        assert len(ratios) == 10
        assert ratios[0] == pytest.approx(0.1)
        assert ratios[-1] == pytest.approx(1.0)

    def test_comma_list(self):
        assert parse_ratios("0.1,0.2,0.4,0.8") == (0.1, 0.2, 0.4, 0.8)

    def test_empty(self):
        assert parse_ratios("") == ()


class TestRunConfig:
    def test_file_values_override_defaults(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(RUN_INI)
        config = load_run_config(path, env={})
        assert config.data_dir == "corpora/demo"
        assert config.seed == 11
        assert config.embed_dim == 16
        assert config.use_prototypes is False
        assert config.epochs == 3
        assert config.lambda_soft == 0.5
        assert config.eval_ratios == (0.2, 0.6, 1.0)
        assert config.lambda_ce == 1.0  # untouched default

    def test_environment_wins_over_file(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(RUN_INI)
        env = {"TEA_SCHEDULE_EPOCHS": "9", "TEA_LOSS_LAMBDA_CE": "2.5",
               "TEA_MODEL_USE_PROTOTYPES": "true"}
        config = load_run_config(path, env=env)
        assert config.epochs == 9
        assert config.lambda_ce == 2.5
        assert config.use_prototypes is True

    def test_env_only_without_file(self):
        config = load_run_config(None, env={"TEA_RUN_SEED": "123"})
        assert config.seed == 123

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[schedule]\nepochz = 3\n")
        with pytest.raises(ConfigurationError, match="epochz"):
            load_run_config(path, env={})

    def test_bad_value_names_key(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[schedule]\nepochs = soon\n")
        with pytest.raises(ConfigurationError, match="epochs"):
            load_run_config(path, env={})

    def test_render_round_trips(self, tmp_path):
        config = RunConfig(seed=5, lambda_rec=0.25, eval_ratios=(0.5, 1.0),
                           crop_random_start=False, recon_hidden=(32, 16))
        path = tmp_path / "rendered.ini"
        path.write_text(render_run_config(config))
        loaded = load_run_config(path, env={})
        assert loaded == config

    def test_validation_rejects_negative_weights(self):
        with pytest.raises(ConfigurationError):
            RunConfig(lambda_ce=-1.0).validate()


GEN_INI = """
[corpus]
n_samples = 12
height = 8
width = 8
frames = 10
channels = 3
num_classes = 3
noise_std = 0.02
frame_dropout = 0.0
priors = 0.5,0.25,0.25

[class.1]
name = winter_wheat
onset_day = 12
peak_amplitudes = 0.9,0.8,0.7
"""


class TestGeneratorConfig:
    def test_corpus_and_class_overrides(self, tmp_path):
        path = tmp_path / "gen.ini"
        path.write_text(GEN_INI)
        recipe = load_generator_config(path)
        assert recipe.n_samples == 12
        assert recipe.geometry.height == 8 and recipe.geometry.n_frames == 10
        assert len(recipe.specs) == 3
        assert recipe.specs[1].name == "winter_wheat"
        assert recipe.specs[1].onset_day == 12
        np.testing.assert_allclose(recipe.specs[1].peak_amplitudes, [0.9, 0.8, 0.7])
        np.testing.assert_allclose(recipe.priors, [0.5, 0.25, 0.25])

    def test_missing_corpus_section_rejected(self, tmp_path):
        path = tmp_path / "gen.ini"
        path.write_text("[classes]\n")
        with pytest.raises(ConfigurationError):
            load_generator_config(path)

    def test_out_of_range_class_section_rejected(self, tmp_path):
        path = tmp_path / "gen.ini"
        path.write_text("[corpus]\nnum_classes = 2\n\n[class.5]\nonset_day = 3\n")
        with pytest.raises(ConfigurationError):
            load_generator_config(path)
