import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from acgnet.evaluation import GroundTruthInstance
from acgnet.head import Proposal
from acgnet.io import (Annotation, FormatError, RunConfig, dump_run_config, load_run_config,
                       parse_run_config, read_annotations, read_feature_file, read_proposals,
                       write_annotations, write_feature_file, write_proposals)

f32 = st.floats(allow_nan=False, allow_infinity=False, width=32)


class TestFeatureFile:
    def test_round_trip(self, tmp_path, rng):
        x = rng.standard_normal((7, 5))
        write_feature_file(tmp_path / "a.acgf", x)
        np.testing.assert_array_equal(read_feature_file(tmp_path / "a.acgf"), x.astype(np.float32))

    def test_minimal_file_is_20_bytes(self, tmp_path):
        write_feature_file(tmp_path / "z.acgf", [[0.0]])
        data = (tmp_path / "z.acgf").read_bytes()
        assert len(data) == 20
        assert data[:4] == b"ACGF"
        assert struct.unpack("<III", data[4:16]) == (1, 1, 1)

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / "t.acgf"
        write_feature_file(path, rng.standard_normal((4, 3)))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError, match="length mismatch") as err:
            read_feature_file(path)
        assert err.value.offset == 16 + 4 * 12 - 3

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "t.acgf"
        write_feature_file(path, [[1.0, 2.0]])
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(FormatError, match="length mismatch"):
            read_feature_file(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.acgf"
        write_feature_file(path, [[1.0]])
        path.write_bytes(b"ACGX" + path.read_bytes()[4:])
        with pytest.raises(FormatError, match="magic") as err:
            read_feature_file(path)
        assert err.value.offset == 0

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v.acgf"
        write_feature_file(path, [[1.0]])
        data = bytearray(path.read_bytes())
        data[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="version") as err:
            read_feature_file(path)
        assert err.value.offset == 4

    def test_short_header(self, tmp_path):
        (tmp_path / "s.acgf").write_bytes(b"ACG")
        with pytest.raises(FormatError, match="header"):
            read_feature_file(tmp_path / "s.acgf")

    def test_rejects_non_finite(self, tmp_path):
        with pytest.raises(ValueError):
            write_feature_file(tmp_path / "n.acgf", [[np.nan]])

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float32, st.tuples(st.integers(1, 12), st.integers(1, 8)), elements=f32))
    def test_round_trip_property(self, tmp_path_factory, x):
        path = tmp_path_factory.mktemp("ff") / "x.acgf"
        write_feature_file(path, x)
        assert read_feature_file(path).astype(np.float32).tobytes() == x.tobytes()


annotations = st.lists(
    st.builds(lambda vid, labels, inst, has: (vid, labels, inst if has else None),
              st.text(min_size=1, max_size=8), st.lists(st.integers(0, 9), max_size=3),
              st.lists(st.tuples(st.integers(0, 9), st.integers(0, 50), st.integers(0, 10)),
                       max_size=3),
              st.booleans()),
    max_size=5)


@settings(max_examples=100, deadline=None)
@given(annotations)
def test_annotation_round_trip(tmp_path_factory, recs):
    anns = [Annotation(vid, labels, None if inst is None else
                       [GroundTruthInstance(vid, c, s, s + n) for c, s, n in inst])
            for vid, labels, inst in recs]
    path = tmp_path_factory.mktemp("ann") / "a.jsonl"
    write_annotations(path, anns)
    assert read_annotations(path) == anns


def test_annotation_errors(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"video_id": "a", "labels": [0]}\n{"labels": [1]}\n')
    with pytest.raises(FormatError, match="line 2"):
        read_annotations(path)
    path.write_text('{"video_id": "a", "labels": [0], "instances": [{"class_id": 0, '
                    '"start_seg": 5, "end_seg": 2}]}\n')
    with pytest.raises(FormatError, match="line 1"):
        read_annotations(path)


def test_proposal_round_trip(tmp_path):
    props = [Proposal(1, 2, 5, 0.123456789, "v0"), Proposal(0, 0, 0, -1.5, "v1")]
    write_proposals(tmp_path / "p.jsonl", props)
    assert read_proposals(tmp_path / "p.jsonl") == props


class TestRunConfig:
    def test_defaults(self):
        cfg = parse_run_config("")
        assert cfg == RunConfig()
        assert cfg.graph.z == 10 and cfg.graph.lam == 0.85 and cfg.graph.k is None
        assert cfg.iou_thresholds == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)

    def test_values_and_comments(self):
        cfg = parse_run_config("# comment\nlambda = 0.5\nK = 7  # inline\nfusion = concat\n"
                               "include_avg = false\nseed = 3\nT = 32\ninstance_len = 2-5\n"
                               "iou_thresholds = 0.3,0.5\n")
        assert cfg.graph.lam == 0.5 and cfg.graph.k == 7
        assert cfg.fusion.combine == "concat" and not cfg.fusion.include_avg
        assert cfg.train.seed == cfg.synth.seed == 3
        assert cfg.synth.T == 32 and cfg.synth.instance_len == (2, 5)
        assert cfg.iou_thresholds == (0.3, 0.5)

    def test_unknown_key(self):
        with pytest.raises(FormatError, match="unknown key 'lamda'"):
            parse_run_config("lamda = 0.5\n")

    @pytest.mark.parametrize("text", ["epochs = many", "lambda = 1.5", "noline",
                                      "graph_variant = G4", "fusion = product", "seed = 1.5"])
    def test_bad_values(self, text):
        with pytest.raises(FormatError):
            parse_run_config(text)

    def test_dump_round_trip(self, tmp_path):
        cfg = parse_run_config("lambda = 0.6\nK = 4\nepm_weight = 0.25\nseed = 9\n"
                               "graph_variant = similarity\nclasses_per_video = 1-3\n")
        path = tmp_path / "run.cfg"
        path.write_text(dump_run_config(cfg))
        assert load_run_config(path) == cfg
