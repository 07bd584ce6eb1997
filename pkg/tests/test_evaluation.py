from __future__ import annotations

import numpy as np
import pytest

from collisionseg.evaluation import (
    AUC_THRESHOLDS,
    PerSampleResult,
    baseline_centre,
    compute_auc,
    compute_miou,
    evaluate_records,
    match_masks,
    stratify,
    write_eval_outputs,
)
from collisionseg.manifest import SampleRecord
from collisionseg.masks import BinaryMask, mask_to_rle
from collisionseg.verify import CollisionPrediction
from helpers import random_blob_mask, ref_match_all_optima


def block(h, w, r0, r1, c0, c1):
    g = np.zeros((h, w), dtype=np.uint8)
    g[r0:r1, c0:c1] = 1
    return BinaryMask(g)


class TestMatchMasks:
    def test_permutation_invariance(self):
        a = block(16, 16, 0, 4, 0, 4)
        b = block(16, 16, 8, 12, 8, 12)
        assert match_masks([a, b], [b, a]) == [1.0, 1.0]
        assert match_masks([b, a], [b, a]) == [1.0, 1.0]

    def test_unmatched_gt_scores_zero(self):
        a = block(16, 16, 0, 4, 0, 4)
        b = block(16, 16, 8, 12, 8, 12)
        ious = match_masks([a], [a, b])
        assert sorted(ious) == [0.0, 1.0]
        assert ious[0] == 1.0  # gt order preserved

    def test_surplus_predictions_ignored(self):
        a = block(16, 16, 0, 4, 0, 4)
        junk = block(16, 16, 10, 14, 10, 14)
        ious = match_masks([a, junk], [a])
        assert ious == [1.0]

    def test_empty_prediction_list(self):
        gt = [block(8, 8, 0, 2, 0, 2)]
        assert match_masks([], gt) == [0.0]

    def test_matches_exhaustive_oracle(self, rng):
        for _ in range(80):
            n_pred = int(rng.integers(0, 4))
            n_gt = int(rng.integers(1, 4))
            preds = [BinaryMask(random_blob_mask(rng, 12)) for _ in range(n_pred)]
            gts = [BinaryMask(random_blob_mask(rng, 12)) for _ in range(n_gt)]
            got = match_masks(preds, gts)
            optima = ref_match_all_optima([p.grid for p in preds], [g.grid for g in gts])
            assert any(
                all(abs(g - w) < 1e-9 for g, w in zip(got, want)) for want in optima
            )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            match_masks([block(8, 8, 0, 2, 0, 2)], [block(9, 8, 0, 2, 0, 2)])


class TestMiou:
    def test_all_ones(self):
        assert compute_miou([1.0, 1.0, 1.0]) == 100.0

    def test_half(self):
        assert compute_miou([1.0, 0.0]) == 50.0

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            compute_miou([])


class TestAuc:
    def test_threshold_grid(self):
        assert len(AUC_THRESHOLDS) == 21
        assert AUC_THRESHOLDS[0] == 0.0 and AUC_THRESHOLDS[-1] == 1.0

    def test_all_ones(self):
        assert compute_auc([1.0, 1.0]) == pytest.approx(100.0)

    def test_one_and_zero(self):
        assert compute_auc([1.0, 0.0]) == pytest.approx(52.38, abs=0.01)

    def test_all_zero(self):
        assert compute_auc([0.0, 0.0]) == pytest.approx(100.0 / 21.0, abs=1e-9)

    def test_monotone_in_ious(self, rng):
        for _ in range(25):
            base = rng.uniform(0, 1, 10)
            boost = np.clip(base + rng.uniform(0, 0.3, 10), 0, 1)
            assert compute_auc(boost) >= compute_auc(base) - 1e-12

    def test_closed_form_for_multiples_of_step(self):
        for k in range(21):
            v = k * 0.05
            expected = 100.0 * (k + 1) / 21.0
            assert compute_auc([v, v, v]) == pytest.approx(expected, abs=1e-6)

    def test_empty_is_error(self):
        with pytest.raises(ValueError):
            compute_auc([])


class TestCentreBaseline:
    def test_reference_resolution_side(self):
        pred = baseline_centre(352, 352)
        mask = pred.masks[0]
        rows = np.flatnonzero(mask.grid.any(axis=1))
        cols = np.flatnonzero(mask.grid.any(axis=0))
        side = rows[-1] - rows[0] + 1
        assert side == 111  # round(sqrt(0.1 * 352 * 352))
        assert cols[-1] - cols[0] + 1 == side
        # centred
        assert abs((rows[0] + rows[-1] + 1) / 2 - 176) <= 1

    def test_area_within_one_percent(self):
        mask = baseline_centre(352, 352).masks[0]
        target = 0.1 * 352 * 352
        assert abs(mask.area() - target) / target < 0.01

    def test_deterministic(self):
        a = baseline_centre(64, 64).masks[0]
        b = baseline_centre(64, 64).masks[0]
        assert np.array_equal(a.grid, b.grid)

    def test_clamped_on_narrow_images(self):
        mask = baseline_centre(4, 100).masks[0]
        assert mask.grid.shape == (4, 100)
        assert mask.area() > 0


def make_test_record(idx, masks, duration=1.0, size=16):
    return SampleRecord(
        sample_id=f"s{idx}",
        video_id=f"s{idx}",
        clip_start=0.0,
        clip_end=duration,
        split="test",
        frame_size=(size, size),
        eval_frame_index=0,
        gt_masks=[mask_to_rle(m) for m in masks],
    )


class TestEvaluateRecords:
    def test_oracle_predictor_scores_100(self):
        masks = [block(16, 16, 0, 4, 0, 4), block(16, 16, 8, 12, 8, 12)]
        records = [make_test_record(0, masks), make_test_record(1, masks[:1])]

        def oracle(rec):
            from collisionseg.manifest import decode_gt_masks

            gt = decode_gt_masks(rec)
            return CollisionPrediction(masks=tuple(gt), provenance=tuple("av" for _ in gt))

        result = evaluate_records(records, oracle)
        assert result.miou == 100.0
        assert result.auc == 100.0

    def test_failures_counted(self):
        records = [make_test_record(0, [block(16, 16, 0, 4, 0, 4)])]

        def broken(rec):
            raise RuntimeError("nope")

        with pytest.raises(ValueError):
            evaluate_records(records, broken)

    def test_per_sample_first_mode(self):
        a = block(16, 16, 0, 4, 0, 4)
        b = block(16, 16, 8, 12, 8, 12)
        records = [make_test_record(0, [a, b]), make_test_record(1, [a])]

        def half_oracle(rec):
            return CollisionPrediction(masks=(a,), provenance=("av",))

        pooled = evaluate_records(records, half_oracle, per_sample_first=False)
        averaged = evaluate_records(records, half_oracle, per_sample_first=True)
        assert pooled.miou == pytest.approx(100.0 * (1.0 + 0.0 + 1.0) / 3)
        assert averaged.miou == pytest.approx(100.0 * (0.5 + 1.0) / 2)


class TestStratify:
    def sample(self, sid, ious, duration, n_gt, areas):
        return PerSampleResult(
            sample_id=sid,
            n_pred=len(ious),
            n_gt=n_gt,
            ious=ious,
            duration=duration,
            gt_area_pcts=areas,
        )

    def test_single_stratum_equals_global(self):
        rows = [
            self.sample("a", [1.0], 0.5, 1, [3.0]),
            self.sample("b", [0.5], 0.7, 1, [2.0]),
        ]
        strata = stratify(rows)
        miou, auc, count = strata["duration:<1s"]
        assert miou == pytest.approx(compute_miou([1.0, 0.5]))
        assert auc == pytest.approx(compute_auc([1.0, 0.5]))
        assert count == 2

    def test_counts_sum_to_samples(self):
        rows = [
            self.sample("a", [1.0], 0.5, 1, [3.0]),
            self.sample("b", [0.5, 0.2], 2.0, 2, [2.0, 12.0]),
            self.sample("c", [0.9], 4.0, 1, [0.2]),
            self.sample("d", [0.1], 9.0, 1, [25.0]),
        ]
        strata = stratify(rows)
        duration_total = sum(c for label, (_, _, c) in strata.items() if label.startswith("duration:"))
        ngt_total = sum(c for label, (_, _, c) in strata.items() if label.startswith("n_gt:"))
        size_total = sum(c for label, (_, _, c) in strata.items() if label.startswith("size:"))
        assert duration_total == 4
        assert ngt_total == 4
        assert size_total == 5  # one entry per ground-truth mask

    def test_hand_built_bucket_means(self):
        rows = [
            self.sample("a", [0.8], 0.5, 1, [0.3]),   # duration <1s, size <0.5%
            self.sample("b", [0.4], 0.6, 1, [0.4]),   # duration <1s, size <0.5%
            self.sample("c", [0.6], 3.5, 1, [7.0]),   # duration 3-5s, size 5-10%
            self.sample("d", [1.0], 6.0, 1, [30.0]),  # duration >=5s, size >=20%
        ]
        strata = stratify(rows)
        assert strata["duration:<1s"][0] == pytest.approx(100 * 0.6)
        assert strata["size:<0.5%"][0] == pytest.approx(100 * 0.6)
        assert strata["duration:3-5s"][0] == pytest.approx(60.0)
        assert strata["size:>=20%"][0] == pytest.approx(100.0)
        assert strata["n_gt:1"][2] == 4


class TestOutputs:
    def test_write_outputs(self, tmp_path):
        a = block(16, 16, 0, 4, 0, 4)
        records = [make_test_record(0, [a])]

        def oracle(rec):
            return CollisionPrediction(masks=(a,), provenance=("av",))

        result = evaluate_records(records, oracle)
        write_eval_outputs(result, tmp_path, {"predictor": "oracle"})
        assert (tmp_path / "per_sample.csv").exists()
        assert (tmp_path / "summary.json").exists()
        assert (tmp_path / "strata.csv").exists()
        import json

        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["miou"] == 100.0
        assert summary["predictor"] == "oracle"
