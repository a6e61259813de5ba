import json
import struct
from pathlib import Path

import numpy as np
import pytest

from edgeprof import PointCloud, Rng, normalize, synth_cloud
from edgeprof import formats
from edgeprof.errors import (BadMagicError, DegenerateCloudError,
                             FormatVersionError, ShapeError,
                             TruncatedFileError)

DATA = Path(__file__).parent / "data"


class TestPointCloud:
    def test_needs_two_points(self):
        with pytest.raises(ShapeError, match="at least 2"):
            PointCloud(features=np.zeros((1, 3), np.float32))

    def test_rejects_non_finite(self):
        feats = np.zeros((3, 3), np.float32)
        feats[1, 2] = np.inf
        with pytest.raises(ShapeError, match="non-finite"):
            PointCloud(features=feats)


class TestNormalize:
    def test_two_points_on_a_line(self):
        cloud = PointCloud(features=np.array([[0.0], [2.0]], np.float32))
        out = normalize(cloud)
        assert out.features.tolist() == [[-1.0], [1.0]]

    def test_symmetric_cube_corners_unchanged(self):
        corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                            for sz in (-1, 1)], np.float32)
        out = normalize(PointCloud(features=np.ascontiguousarray(corners)))
        assert np.array_equal(out.features, corners)

    def test_random_cloud_centered_and_scaled(self):
        rng = np.random.default_rng(40)
        feats = rng.uniform(3.0, 9.0, (200, 3)).astype(np.float32)
        out = normalize(PointCloud(features=feats))
        assert np.abs(out.features.mean(axis=0)).max() <= 1e-5
        assert float(np.abs(out.features).max()) == 1.0
        assert (np.abs(out.features) <= 1.0).all()

    def test_idempotent_within_tolerance(self):
        rng = np.random.default_rng(41)
        feats = rng.uniform(-50, 20, (64, 3)).astype(np.float32)
        once = normalize(PointCloud(features=feats))
        twice = normalize(once)
        assert np.abs(once.features - twice.features).max() <= 1e-6

    def test_degenerate_cloud(self):
        cloud = PointCloud(features=np.full((5, 3), 2.5, np.float32))
        with pytest.raises(DegenerateCloudError, match="degenerate"):
            normalize(cloud)

    def test_label_preserved(self):
        cloud = PointCloud(features=np.array([[0.0], [4.0]], np.float32), label=11)
        assert normalize(cloud).label == 11


class TestSynthCloud:
    def test_deterministic_per_seed(self):
        a = synth_cloud(64, Rng(5))
        b = synth_cloud(64, Rng(5))
        assert a.features.tobytes() == b.features.tobytes()

    def test_reference_size_and_bounds(self):
        cloud = synth_cloud(1024, Rng(6))
        assert cloud.features.shape == (1024, 3)
        assert float(np.abs(cloud.features).max()) <= 1.0

    def test_general_position(self):
        # Distinct points, and no distance tie at any usual selection
        # boundary: what the permutation-invariance tests rely on.
        cloud = synth_cloud(128, Rng(7))
        from edgeprof import pairwise_sq_distances
        d = pairwise_sq_distances(cloud.features).copy()
        np.fill_diagonal(d, np.inf)
        ordered = np.sort(d, axis=1)
        assert float(ordered[:, 0].min()) > 0.0
        for k in (5, 10, 15, 20, 25, 30):
            assert float((ordered[:, k] - ordered[:, k - 1]).min()) > 0.0


class TestPcfRoundTrip:
    def test_round_trip_bytes(self, tmp_path):
        cloud = synth_cloud(33, Rng(8), label=12)
        path = tmp_path / "c.pcf"
        formats.write_pcf(path, cloud)
        again = formats.read_pcf(path)
        assert again.label == 12
        assert again.features.tobytes() == cloud.features.tobytes()
        formats.write_pcf(tmp_path / "c2.pcf", again)
        assert (tmp_path / "c2.pcf").read_bytes() == path.read_bytes()

    def test_label_none_round_trip(self):
        cloud = synth_cloud(4, Rng(9))
        assert formats.pcf_from_bytes(formats.pcf_to_bytes(cloud)).label is None

    def test_golden_bytes(self):
        # Layout frozen by hand with struct; catches endianness drift.
        expected = (b"PCF1" + struct.pack("<IIi", 2, 2, 7)
                    + struct.pack("<4f", 1.5, -2.0, 0.0, 3.25))
        assert (DATA / "golden.pcf").read_bytes() == expected
        cloud = formats.read_pcf(DATA / "golden.pcf")
        assert cloud.label == 7
        assert cloud.features.tolist() == [[1.5, -2.0], [0.0, 3.25]]
        assert formats.pcf_to_bytes(cloud) == expected

    def test_empty_file_is_truncated_header(self):
        with pytest.raises(TruncatedFileError, match="header"):
            formats.pcf_from_bytes(b"")

    def test_bad_magic(self):
        with pytest.raises(BadMagicError, match="magic"):
            formats.pcf_from_bytes(b"NOPE" + b"\x00" * 16)

    def test_version_mismatch(self):
        with pytest.raises(FormatVersionError, match="version"):
            formats.pcf_from_bytes(b"PCF9" + b"\x00" * 16)

    def test_truncated_payload(self):
        cloud = synth_cloud(8, Rng(10))
        buf = formats.pcf_to_bytes(cloud)
        with pytest.raises(TruncatedFileError, match="payload"):
            formats.pcf_from_bytes(buf[:-5])


class TestEcwRoundTrip:
    def test_round_trip_bytes(self, tmp_path):
        rng = np.random.default_rng(42)
        tensors = {
            "dec1.linear0.weight": rng.uniform(-1, 1, (64, 6)).astype(np.float32),
            "dec1.linear0.bias": rng.uniform(-1, 1, 64).astype(np.float32),
            "head.bn0.gamma": rng.uniform(0.5, 1.5, 8).astype(np.float32),
        }
        path = tmp_path / "w.ecw"
        formats.write_ecw(path, tensors)
        again = formats.read_ecw(path)
        assert set(again) == set(tensors)
        for name in tensors:
            assert again[name].tobytes() == tensors[name].tobytes()
            assert again[name].shape == tensors[name].shape
        formats.write_ecw(tmp_path / "w2.ecw", again)
        assert (tmp_path / "w2.ecw").read_bytes() == path.read_bytes()

    def test_golden_bytes(self):
        expected = (b"ECW1" + struct.pack("<I", 2)
                    + struct.pack("<H", 8) + b"a.weight" + struct.pack("<B", 2)
                    + struct.pack("<II", 1, 2) + struct.pack("<2f", 1.0, 2.0)
                    + struct.pack("<H", 1) + b"b" + struct.pack("<B", 1)
                    + struct.pack("<I", 1) + struct.pack("<f", 3.0))
        assert (DATA / "golden.ecw").read_bytes() == expected
        tensors = formats.read_ecw(DATA / "golden.ecw")
        assert tensors["a.weight"].tolist() == [[1.0, 2.0]]
        assert tensors["b"].tolist() == [3.0]
        assert formats.ecw_to_bytes(tensors) == expected

    def test_write_order_is_canonical(self):
        a = {"x": np.ones(1, np.float32), "a": np.zeros(1, np.float32)}
        b = {"a": np.zeros(1, np.float32), "x": np.ones(1, np.float32)}
        assert formats.ecw_to_bytes(a) == formats.ecw_to_bytes(b)

    def test_errors(self):
        with pytest.raises(TruncatedFileError):
            formats.ecw_from_bytes(b"EC")
        with pytest.raises(BadMagicError):
            formats.ecw_from_bytes(b"XXXX\x00\x00\x00\x00")
        with pytest.raises(FormatVersionError):
            formats.ecw_from_bytes(b"ECW2\x00\x00\x00\x00")
        good = formats.ecw_to_bytes({"t": np.ones((2, 2), np.float32)})
        with pytest.raises(TruncatedFileError, match="payload"):
            formats.ecw_from_bytes(good[:-3])
        with pytest.raises(TruncatedFileError, match="name"):
            formats.ecw_from_bytes(b"ECW1" + struct.pack("<I", 1) + struct.pack("<H", 9) + b"sh")


class TestReportRendering:
    REPORT = {
        "metadata": {"k": 20, "static_tail": 0},
        "layers": [
            {"name": "dec1", "stage": "graph_construction", "mean_ms": 1.5,
             "median_ms": 1.4, "stddev_ms": 0.1, "p25_ms": 1.3, "p75_ms": 1.6,
             "bytes_persistent": 10, "bytes_transient": 20},
        ],
        "end_to_end": {"mean_ms": 2.0},
        "knn_share": 0.75,
    }

    def test_report_json_round_trips(self):
        text = formats.report_json(self.REPORT)
        assert json.loads(text) == self.REPORT
        assert text.endswith("\n")

    def test_report_csv_one_row_per_layer_stage(self):
        lines = formats.report_csv(self.REPORT).strip().splitlines()
        assert lines[0] == "name,stage,mean_ms,median_ms,stddev_ms,bytes_persistent,bytes_transient"
        assert lines[1].startswith("dec1,graph_construction,1.5,1.4,0.1,10,20")
        assert len(lines) == 2

    def test_reports_csv_prefixes_sweep_key(self):
        lines = formats.reports_csv([self.REPORT], "k").strip().splitlines()
        assert lines[0].startswith("k,name,stage")
        assert lines[1].startswith("20,dec1")

    def test_memory_csv(self):
        mem = {"rows": [{"layer": "dec1", "stage": "graph_construction",
                         "bytes_persistent": 1, "bytes_transient": 2, "bytes_peak": 3}]}
        lines = formats.memory_csv(mem).strip().splitlines()
        assert lines == ["layer,stage,bytes_persistent,bytes_transient,bytes_peak",
                         "dec1,graph_construction,1,2,3"]

    def test_infer_csv(self):
        result = {"class_index": 1, "log_probs": [-2.0, -0.5, -3.0]}
        lines = formats.infer_csv(result).strip().splitlines()
        assert lines[0] == "class,log_prob,predicted"
        assert lines[2] == "1,-0.5,1"
