import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acgnet.evaluation import (DEFAULT_IOU_THRESHOLDS, GroundTruthInstance, average_precision,
                               match_proposals, mean_ap, temporal_iou, write_map_csv)
from acgnet.graph import InvalidInputError
from acgnet.head import Proposal

import oracles


def to_objects(props, gts):
    return ([Proposal(c, s, e, sc, v) for v, c, s, e, sc in props],
            [GroundTruthInstance(v, c, s, e) for v, c, s, e in gts])


def _gt(s, e, c=0, v="v"):
    return GroundTruthInstance(v, c, s, e)


def _prop(s, e, score, c=0, v="v"):
    return Proposal(c, s, e, score, v)


class TestIou:
    def test_identical(self):
        assert temporal_iou((3, 7), (3, 7)) == 1.0

    def test_disjoint(self):
        assert temporal_iou((0, 2), (3, 5)) == 0.0

    def test_partial(self):
        assert temporal_iou((0, 9), (5, 14)) == pytest.approx(1 / 3)

    def test_single_segments(self):
        assert temporal_iou((4, 4), (4, 4)) == 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 20), st.integers(0, 8), st.integers(0, 20), st.integers(0, 8))
    def test_matches_set_oracle(self, a0, alen, b0, blen):
        a, b = (a0, a0 + alen), (b0, b0 + blen)
        assert temporal_iou(a, b) == pytest.approx(oracles.iou_loop(a, b), abs=1e-15)
        assert temporal_iou(a, b) == temporal_iou(b, a)


class TestAveragePrecision:
    def test_single_hit(self):
        assert average_precision([_prop(0, 4, 0.9)], [_gt(0, 4)], 0.5) == 1.0

    def test_miss_then_hit(self):
        props = [_prop(20, 24, 0.9), _prop(0, 4, 0.8)]
        assert average_precision(props, [_gt(0, 4)], 0.5) == pytest.approx(0.5)

    def test_two_hits(self):
        props = [_prop(0, 4, 0.9), _prop(10, 14, 0.8)]
        assert average_precision(props, [_gt(0, 4), _gt(10, 14)], 0.5) == 1.0

    def test_duplicate_detection_is_false_positive(self):
        props = [_prop(0, 4, 0.9), _prop(0, 4, 0.8), _prop(10, 13, 0.7)]
        ap = average_precision(props, [_gt(0, 4), _gt(10, 13)], 0.5)
        assert ap == pytest.approx((1 + 2 / 3) / 2)

    def test_other_video_never_matches(self):
        assert average_precision([_prop(0, 4, 0.9, v="a")], [_gt(0, 4, v="b")], 0.1) == 0.0

    def test_picks_highest_iou_gt(self):
        ranked, tp, match = match_proposals([_prop(2, 9, 1.0)], [_gt(0, 5), _gt(3, 9)], 0.3)
        assert match.tolist() == [1]

    def test_score_ties_break_on_start(self):
        ranked, _, _ = match_proposals([_prop(5, 6, 0.5), _prop(1, 2, 0.5)], [_gt(1, 2)], 0.5)
        assert [p.start_seg for p in ranked] == [1, 5]

    def test_no_ground_truth(self):
        with pytest.raises(InvalidInputError):
            average_precision([_prop(0, 1, 0.5)], [], 0.5)

    def test_no_proposals(self):
        assert average_precision([], [_gt(0, 1)], 0.5) == 0.0


class TestMeanAp:
    def test_perfect(self):
        gts = [_gt(0, 4, 0), _gt(10, 12, 1), _gt(3, 8, 0, v="w")]
        props = [_prop(g.start_seg, g.end_seg, 0.9, g.class_id, g.video_id) for g in gts]
        res = mean_ap(props, gts)
        assert all(v == 1.0 for v in res["map"].values())
        assert res["average"] == 1.0
        assert sorted(res["map"]) == list(DEFAULT_IOU_THRESHOLDS)

    def test_empty_proposals(self):
        res = mean_ap([], [_gt(0, 4)])
        assert all(v == 0.0 for v in res["map"].values())

    def test_empty_ground_truth(self):
        with pytest.raises(InvalidInputError):
            mean_ap([_prop(0, 1, 0.5)], [])

    def test_class_without_gt_is_excluded(self):
        res = mean_ap([_prop(0, 4, 0.9), _prop(0, 4, 0.9, c=3)], [_gt(0, 4)], [0.5])
        assert res["per_class"][0.5] == {0: 1.0}
        assert res["map"][0.5] == 1.0

    def test_csv(self, tmp_path):
        res = mean_ap([_prop(0, 4, 0.9)], [_gt(0, 4), _gt(0, 3, 1)], [0.1, 0.5])
        path = tmp_path / "maps.csv"
        write_map_csv(path, res)
        lines = path.read_text().splitlines()
        assert lines[0] == "iou_threshold,class_id,ap"
        assert "0.50,*,0.500000" in lines
        assert lines[-1] == "average,*,0.500000"


def check_against_oracle(rng):
    """Return the number of mismatches over one random case."""
    props, gts = oracles.random_eval_case(rng)
    p_obj, g_obj = to_objects(props, gts)
    ours = mean_ap(p_obj, g_obj)["map"]
    ref = oracles.map_exhaustive(props, gts, DEFAULT_IOU_THRESHOLDS)
    return sum(ours[t] != ref[t] for t in DEFAULT_IOU_THRESHOLDS)


def test_matches_exhaustive_oracle(backend):
    rng = np.random.default_rng(99)
    assert sum(check_against_oracle(rng) for _ in range(50)) == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_map_never_increases_with_iou(seed):
    props, gts = oracles.random_eval_case(np.random.default_rng(seed))
    res = mean_ap(*to_objects(props, gts))
    vals = [res["map"][t] for t in DEFAULT_IOU_THRESHOLDS]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    assert all(0.0 <= v <= 1.0 for v in vals)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_map_invariant_to_monotone_score_transform(seed):
    props, gts = oracles.random_eval_case(np.random.default_rng(seed))
    base = mean_ap(*to_objects(props, gts))
    warped = [(v, c, s, e, np.exp(3 * sc) - 7) for v, c, s, e, sc in props]
    assert mean_ap(*to_objects(warped, gts))["map"] == base["map"]
