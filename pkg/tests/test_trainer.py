import json
import math

import numpy as np
import pytest

from tea import autodiff as ad
from tea.config import RunConfig
from tea.data import load_dataset, make_batch
from tea.distillation import DecaySchedule, TeacherState
from tea.errors import ConfigurationError
from tea.metrics import miou
from tea.model import clone_model, load_checkpoint
from tea.optim import AdamW
from tea.trainer import (TrainState, build_model, cross_entropy_loss,
                         evaluate_checkpoint, fit, learning_rate_at, sweep,
                         train_step, validate)

RATIOS = tuple(np.round(np.arange(1, 11) * 0.1, 2))


def make_state(config, manifest, splits, seed=0):
    model = build_model(config, manifest, splits["train"][0])
    teacher = TeacherState(clone_model(model))
    optimizer = AdamW(model.named_parameters(), betas=(config.beta1, config.beta2),
                      weight_decay=config.weight_decay)
    return TrainState(model=model, teacher=teacher, optimizer=optimizer, step=0,
                      best_ldiou=-math.inf, crop_rng=np.random.default_rng(seed))


@pytest.fixture()
def small_setup(small_corpus):
    splits = load_dataset(small_corpus)
    config = RunConfig(data_dir=str(small_corpus.root))
    return config, small_corpus, splits


class TestLearningRate:
    def test_warmup_endpoints_exact(self):
        assert learning_rate_at(0, 100, 1000, 1e-3, 1e-6) == 1e-8
        assert learning_rate_at(100, 100, 1000, 1e-3, 1e-6) == 1e-3

    def test_final_step_is_floor(self):
        assert learning_rate_at(1000, 100, 1000, 1e-3, 1e-6) == 1e-6

    def test_cosine_midpoint(self):
        mid = learning_rate_at(550, 100, 1000, 1e-3, 1e-6)
        assert mid == pytest.approx(1e-6 + (1e-3 - 1e-6) / 2, rel=1e-9)

    def test_shape_up_then_down(self):
        values = [learning_rate_at(s, 50, 300, 1e-3, 1e-6) for s in range(301)]
        peak_at = int(np.argmax(values))
        assert peak_at == 50
        assert all(b >= a for a, b in zip(values[:50], values[1:51]))
        assert all(b <= a for a, b in zip(values[50:-1], values[51:]))


class TestCrossEntropy:
    def test_uniform_logits_give_log_k(self):
        logits = ad.Tensor(np.zeros((1, 4, 2, 2)))
        labels = np.zeros((1, 2, 2), dtype=np.int64)
        assert float(cross_entropy_loss(logits, labels).data) == \
            pytest.approx(math.log(4), abs=1e-7)

    def test_confident_correct_logits_near_zero(self):
        logits = np.full((1, 2, 2, 2), -20.0)
        labels = np.random.default_rng(0).integers(0, 2, (1, 2, 2))
        for h in range(2):
            for w in range(2):
                logits[0, labels[0, h, w], h, w] = 20.0
        assert float(cross_entropy_loss(ad.Tensor(logits), labels).data) < 1e-6


class TestTrainStep:
    def test_logs_all_components_and_weighted_total(self, small_setup):
        config, manifest, splits = small_setup
        state = make_state(config, manifest, splits)
        schedule = DecaySchedule(total_steps=10)
        record = train_step(splits["train"][:4], state, config, 1e-3, schedule)
        for key in ("ce", "temporal", "spatial", "prototype", "reconstruction",
                    "soft", "total", "lr", "decay", "step"):
            assert key in record
        weighted = sum(record[k] for k in ("ce", "temporal", "spatial",
                                           "prototype", "reconstruction", "soft"))
        assert record["total"] == pytest.approx(weighted, rel=1e-6)

    def test_reproducible_across_fresh_states(self, small_setup):
        config, manifest, splits = small_setup
        records = []
        for _ in range(2):
            state = make_state(config, manifest, splits, seed=4)
            schedule = DecaySchedule(total_steps=10)
            run = [train_step(splits["train"][:4], state, config, 1e-3, schedule)
                   for _ in range(3)]
            records.append(run)
        assert records[0] == records[1]

    def test_zero_lr_moves_only_teacher(self, small_setup):
        config, manifest, splits = small_setup
        state = make_state(config, manifest, splits)
        student_before = {k: p.data.copy()
                          for k, p in state.model.named_parameters().items()}
        teacher_before = {k: p.data.copy()
                          for k, p in state.teacher.parameters.items()}
        train_step(splits["train"][:4], state, config, 0.0,
                   DecaySchedule(total_steps=10))
        for name, p in state.model.named_parameters().items():
            np.testing.assert_array_equal(p.data, student_before[name])
        moved = any(not np.array_equal(p.data, teacher_before[k])
                    for k, p in state.teacher.parameters.items())
        assert moved

    def test_teacher_never_in_optimizer(self, small_setup):
        config, manifest, splits = small_setup
        state = make_state(config, manifest, splits)
        optimizer_ids = {id(p) for p in state.optimizer.params.values()}
        teacher_ids = {id(p) for p in state.teacher.parameters.values()}
        assert optimizer_ids.isdisjoint(teacher_ids)

    def test_supervised_ground_state_matches_plain_loop(self, small_setup):
        # every distillation weight zero + full-length crops == a hand-rolled
        # supervised trainer, parameter for parameter
        _, manifest, splits = small_setup
        config = RunConfig(data_dir=str(manifest.root), lambda_t=0.0,
                           lambda_s=0.0, lambda_proto=0.0, lambda_rec=0.0,
                           lambda_soft=0.0, use_prototypes=False,
                           crop_min_ratio=1.0, crop_random_start=False)
        state = make_state(config, manifest, splits)
        batch_samples = splits["train"][:4]
        for _ in range(2):
            train_step(batch_samples, state, config, 1e-3,
                       DecaySchedule(total_steps=10))

        reference = build_model(config, manifest, splits["train"][0])
        ref_opt = AdamW(reference.named_parameters(),
                        betas=(config.beta1, config.beta2),
                        weight_decay=config.weight_decay)
        batch = make_batch(batch_samples)
        for _ in range(2):
            out = reference.forward(batch, use_prototypes=False,
                                    with_reconstruction=False,
                                    with_similarity=False)
            loss = cross_entropy_loss(out.logits, batch["labels"]) * config.lambda_ce
            reference.zero_grad()
            loss.backward()
            ref_opt.step(1e-3)
        for name, p in reference.backbone.named_parameters().items():
            trained = state.model.backbone.named_parameters()[name]
            np.testing.assert_array_equal(trained.data, p.data), name

    def test_nonfinite_loss_names_component(self, small_setup):
        config, manifest, splits = small_setup
        state = make_state(config, manifest, splits)
        state.model.backbone.head.bias.data[:] = np.inf
        with np.errstate(invalid="ignore"), pytest.raises(RuntimeError, match="ce"):
            train_step(splits["train"][:2], state, config, 1e-3,
                       DecaySchedule(total_steps=10))

    def test_all_zero_weights_rejected(self, small_setup):
        _, manifest, splits = small_setup
        config = RunConfig(data_dir=str(manifest.root), lambda_ce=0, lambda_t=0,
                           lambda_s=0, lambda_proto=0, lambda_rec=0, lambda_soft=0)
        state = make_state(config, manifest, splits)
        with pytest.raises(ConfigurationError):
            train_step(splits["train"][:2], state, config, 1e-3,
                       DecaySchedule(total_steps=10))


class TestValidate:
    def test_perfect_oracle_scores_one(self, small_setup):
        config, manifest, splits = small_setup
        model = build_model(config, manifest, splits["train"][0])

        class Oracle:
            def predict(self, batch, use_prototypes=None):
                return batch["labels"]

        report = validate(Oracle(), splits["val"], RATIOS, manifest.num_classes)
        assert report.per_ratio_miou == [1.0] * 10
        assert report.ldiou == pytest.approx(1.0)

    def test_single_full_ratio_equals_full_length_eval(self, small_setup):
        config, manifest, splits = small_setup
        model = build_model(config, manifest, splits["train"][0])
        report = validate(model, splits["val"], (1.0,), manifest.num_classes)
        from tea.metrics import ConfusionMatrix
        cm = ConfusionMatrix.empty(manifest.num_classes)
        batch = make_batch(splits["val"])
        cm.update(batch["labels"], model.predict(batch))
        assert report.per_ratio_miou[0] == pytest.approx(miou(cm), abs=1e-12)

    def test_deterministic(self, small_setup):
        config, manifest, splits = small_setup
        model = build_model(config, manifest, splits["train"][0])
        a = validate(model, splits["val"], RATIOS, manifest.num_classes)
        b = validate(model, splits["val"], RATIOS, manifest.num_classes)
        assert a.per_ratio_miou == b.per_ratio_miou

    def test_empty_ratios_rejected(self, small_setup):
        config, manifest, splits = small_setup
        model = build_model(config, manifest, splits["train"][0])
        with pytest.raises(ConfigurationError):
            validate(model, splits["val"], (), manifest.num_classes)


class TestSweep:
    def test_full_length_cell_matches_full_eval(self, small_setup):
        config, manifest, splits = small_setup
        model = build_model(config, manifest, splits["train"][0])
        grid = sweep(model, splits["val"], (1.0,), 0.1, manifest.num_classes)
        assert list(grid.keys()) == [(0.0, 1.0)]
        full = validate(model, splits["val"], (1.0,), manifest.num_classes)
        assert grid[(0.0, 1.0)] == pytest.approx(full.per_ratio_miou[0], abs=1e-12)

    def test_ten_percent_windows_make_ten_cells(self, small_setup):
        config, manifest, splits = small_setup
        model = build_model(config, manifest, splits["train"][0])
        grid = sweep(model, splits["val"][:4], (0.1,), 0.1, manifest.num_classes)
        assert len(grid) == 10
        starts = sorted(k[0] for k in grid)
        assert starts == [pytest.approx(0.1 * i) for i in range(10)]


class TestFit:
    def test_zero_epochs_returns_init_checkpoint(self, small_corpus, tmp_path):
        config = RunConfig(data_dir=str(small_corpus.root),
                           out_dir=str(tmp_path / "run"), epochs=0)
        best = fit(config)
        model, teacher, meta = load_checkpoint(best)
        assert meta["step"] == 0
        fresh = build_model(config, small_corpus,
                            load_dataset(small_corpus)["train"][0])
        for name, p in fresh.named_parameters().items():
            np.testing.assert_array_equal(model.named_parameters()[name].data,
                                          p.data)

    def test_short_fit_writes_artifacts_and_improves_nothing_silently(
            self, small_corpus, tmp_path):
        config = RunConfig(data_dir=str(small_corpus.root),
                           out_dir=str(tmp_path / "run"), epochs=1,
                           validation_interval=2, batch_size=6)
        best = fit(config)
        out = tmp_path / "run"
        assert (out / "train_log.jsonl").exists()
        assert (out / "config.ini").exists()
        assert (out / "best_val_report.json").exists()
        records = [json.loads(line)
                   for line in (out / "train_log.jsonl").read_text().splitlines()]
        assert len(records) == 2  # ceil(12 train samples / 6)
        assert records[0]["step"] == 0 and records[1]["step"] == 1
        model, teacher, meta = load_checkpoint(best)
        assert teacher is not None
        assert "config_hash" in meta

    def test_checkpoint_round_trip_reproduces_metrics(self, small_corpus, tmp_path):
        config = RunConfig(data_dir=str(small_corpus.root),
                           out_dir=str(tmp_path / "run"), epochs=1,
                           validation_interval=2, batch_size=8)
        best = fit(config)
        splits = load_dataset(small_corpus)
        model_a, _, _ = load_checkpoint(best)
        model_b, _, _ = load_checkpoint(best)
        report_a = validate(model_a, splits["test"], RATIOS, 4)
        report_b = validate(model_b, splits["test"], RATIOS, 4)
        assert report_a.per_ratio_miou == report_b.per_ratio_miou

    def test_evaluate_checkpoint_with_sweep(self, small_corpus, tmp_path):
        config = RunConfig(data_dir=str(small_corpus.root),
                           out_dir=str(tmp_path / "run"), epochs=0)
        best = fit(config)
        report = evaluate_checkpoint(best, small_corpus.root, (0.5, 1.0),
                                     split="test", sweep_lengths=(0.5,),
                                     sweep_step=0.25)
        assert len(report.per_ratio_miou) == 2
        assert len(report.sweep) == 3  # starts 0, 0.25, 0.5
