import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tea.errors import ValidationError
from tea.metrics import ConfusionMatrix, EvalReport, ldiou, miou, mmiou

# Published per-ratio rows used as the exact-arithmetic oracle.
RATIOS = tuple(np.round(np.arange(1, 11) * 0.1, 2))
PASTIS_TEA = (21.5, 26.22, 28.43, 32.70, 37.57, 45.82, 56.45, 65.36, 66.37, 66.77)
PASTIS_BASE = (3.81, 5.60, 6.10, 6.48, 11.20, 20.34, 34.42, 56.46, 62.65, 64.08)
GERMANY_TEA = (2.49, 30.25, 34.64, 46.92, 66.87, 72.20, 84.18, 85.69, 86.24, 86.36)


class TestConfusionMatrix:
    def test_update_counts(self):
        cm = ConfusionMatrix.empty(2)
        cm.update(np.array([0, 0, 1, 1]), np.array([0, 1, 1, 1]))
        np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])
        assert cm.total == 4

    def test_merge_is_entrywise_sum(self):
        a, b = ConfusionMatrix.empty(2), ConfusionMatrix.empty(2)
        a.update([0], [0])
        b.update([1], [0])
        merged = a.merge(b)
        np.testing.assert_array_equal(merged.counts, [[1, 0], [1, 0]])

    def test_sharded_accumulation_matches_pooled(self):
        rng = np.random.default_rng(0)
        gt = rng.integers(0, 3, 300)
        pred = rng.integers(0, 3, 300)
        pooled = ConfusionMatrix.empty(3)
        pooled.update(gt, pred)
        shards = [ConfusionMatrix.empty(3) for _ in range(3)]
        for i, shard in enumerate(shards):
            shard.update(gt[i::3], pred[i::3])
        merged = shards[0].merge(shards[1]).merge(shards[2])
        np.testing.assert_array_equal(merged.counts, pooled.counts)

    def test_rejects_out_of_range(self):
        cm = ConfusionMatrix.empty(2)
        with pytest.raises(ValidationError):
            cm.update([0, 2], [0, 0])


class TestMiou:
    def test_perfect_prediction(self):
        cm = ConfusionMatrix(np.diag([5, 3, 9]))
        assert miou(cm) == 1.0

    def test_hand_confusion_matrix(self):
        # IoU_0 = 2/4, IoU_1 = 4/6 -> mean 0.58333...
        cm = ConfusionMatrix(np.array([[2, 2], [0, 4]]))
        assert miou(cm) == pytest.approx(7 / 12, abs=1e-9)

    def test_absent_class_excluded(self):
        cm = ConfusionMatrix(np.array([[3, 0, 0], [1, 2, 0], [0, 0, 0]]))
        expected = np.mean([3 / 4, 2 / 3])
        assert miou(cm) == pytest.approx(expected, abs=1e-12)

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValidationError):
            miou(ConfusionMatrix.empty(3))

    def test_consistent_relabeling_invariance(self):
        rng = np.random.default_rng(1)
        counts = rng.integers(0, 20, (4, 4))
        perm = rng.permutation(4)
        base = miou(ConfusionMatrix(counts))
        relabeled = miou(ConfusionMatrix(counts[np.ix_(perm, perm)]))
        assert relabeled == pytest.approx(base, abs=1e-12)


class TestLdiou:
    def test_pastis_tea_row(self):
        assert ldiou(PASTIS_TEA, RATIOS) == pytest.approx(33.36, abs=0.01)

    def test_pastis_baseline_row(self):
        assert ldiou(PASTIS_BASE, RATIOS) == pytest.approx(14.08, abs=0.01)

    def test_germany_tea_row(self):
        assert ldiou(GERMANY_TEA, RATIOS) == pytest.approx(36.62, abs=0.01)

    def test_constant_scores_collapse_to_that_value(self):
        assert ldiou([7.5] * 6, [3, 5, 8, 13, 21, 34]) == pytest.approx(7.5)

    def test_frame_counts_equal_ratios(self):
        # tau in frames vs tau as ratios of an 80-frame sequence
        frames = [8 * r * 10 for r in RATIOS]
        assert ldiou(PASTIS_TEA, frames) == pytest.approx(
            ldiou(PASTIS_TEA, RATIOS), abs=1e-12)

    @given(st.lists(st.floats(min_value=0, max_value=100), min_size=1, max_size=12),
           st.data())
    @settings(max_examples=60, deadline=None)
    def test_convex_combination_properties(self, scores, data):
        taus = data.draw(st.lists(
            st.floats(min_value=0.01, max_value=50),
            min_size=len(scores), max_size=len(scores)))
        value = ldiou(scores, taus)
        assert min(scores) - 1e-9 <= value <= max(scores) + 1e-9
        scaled = ldiou(scores, [3.7 * t for t in taus])
        assert scaled == pytest.approx(value, rel=1e-9, abs=1e-9)

    def test_weights_sum_to_one(self):
        # ldiou of all-ones is exactly the weight sum
        assert ldiou([1.0] * 10, RATIOS) == pytest.approx(1.0, abs=1e-12)

    def test_short_heavy_weighting(self):
        # For scores non-decreasing in ratio, ldiou <= mmiou
        assert ldiou(PASTIS_TEA, RATIOS) <= mmiou(PASTIS_TEA)


class TestMmiou:
    def test_pastis_rows(self):
        assert mmiou(PASTIS_TEA) == pytest.approx(44.72, abs=0.01)
        assert mmiou(PASTIS_BASE) == pytest.approx(27.11, abs=0.01)
        assert mmiou(GERMANY_TEA) == pytest.approx(59.58, abs=0.01)

    def test_singleton(self):
        assert mmiou([42.0]) == 42.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            mmiou([])


class TestEvalReport:
    def make_report(self):
        return EvalReport.from_scores(
            RATIOS, [v / 100 for v in PASTIS_TEA],
            sweep={(0.0, 0.2): 0.5, (0.1, 0.2): 0.55})

    def test_from_scores_consistency(self):
        report = self.make_report()
        assert report.mmiou == pytest.approx(0.4472, abs=1e-4)
        assert report.ldiou == pytest.approx(0.3336, abs=1e-4)

    def test_json_round_trip(self):
        report = self.make_report()
        twin = EvalReport.from_json(report.to_json())
        assert twin.per_ratio_miou == report.per_ratio_miou
        assert twin.ldiou == report.ldiou
        assert twin.sweep == report.sweep

    def test_csv_rows(self, tmp_path):
        report = self.make_report()
        path = tmp_path / "report.csv"
        report.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1 + len(RATIOS) + len(report.sweep)
        assert lines[0] == "kind,start_ratio,length_ratio,miou"

    def test_render_table_mentions_aggregates(self):
        text = self.make_report().render_table()
        assert "LDIoU" in text and "mmIoU" in text
        assert "33.36" in text and "44.72" in text

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValidationError):
            EvalReport.from_scores([0.1, 0.2], [0.5])
