import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmscore.errors import EmptyInput, FormatError, NormalizationError, PairingError, RangeError
from gmscore.ingest import (
    ClassCounts,
    ImageSet,
    LabelVector,
    ProbabilityMatrix,
    read_class_counts,
    read_idx_images,
    read_idx_labels,
    read_labels,
    read_probability_matrix,
    read_sample_manifest,
    write_class_counts,
    write_idx_images,
    write_idx_labels,
    write_probability_matrix,
    write_sample_manifest,
)

from golden import COUNTS


def idx_images_bytes(n, h, w, payload=None, magic=0x803):
    payload = bytes(n * h * w) if payload is None else bytes(payload)
    return struct.pack(">IIII", magic, n, h, w) + payload


class TestIdxImages:
    def test_zero_payload(self, tmp_path):
        p = tmp_path / "zeros.idx3"
        p.write_bytes(idx_images_bytes(2, 28, 28))
        imgs = read_idx_images(p)
        assert imgs.shape == (2, 28, 28)
        assert np.all(imgs.images == 0.0)

    def test_byte_level_oracle(self, tmp_path):
        raw = list(range(0, 256, 8))[:12]  # 3 images of 2x2
        p = tmp_path / "tiny.idx3"
        p.write_bytes(idx_images_bytes(3, 2, 2, raw))
        imgs = read_idx_images(p)
        expected = np.array(raw, dtype=np.float64).reshape(3, 2, 2) / 255.0
        np.testing.assert_array_equal(imgs.images, expected)

    def test_label_magic_rejected(self, tmp_path):
        p = tmp_path / "wrong.idx"
        p.write_bytes(idx_images_bytes(2, 2, 2, magic=0x801))
        with pytest.raises(FormatError):
            read_idx_images(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "short.idx3"
        p.write_bytes(idx_images_bytes(2, 2, 2, payload=bytes(7)))
        with pytest.raises(FormatError):
            read_idx_images(p)

    def test_zero_images(self, tmp_path):
        p = tmp_path / "empty.idx3"
        p.write_bytes(idx_images_bytes(0, 28, 28))
        with pytest.raises(EmptyInput):
            read_idx_images(p)

    def test_round_trip(self, tmp_path, rng):
        pix = rng.integers(0, 256, size=(4, 5, 6)) / 255.0
        write_idx_images(tmp_path / "x.idx3", pix)
        back = read_idx_images(tmp_path / "x.idx3")
        np.testing.assert_allclose(back.images, pix, atol=1e-12)

    def test_arrays_are_read_only(self, tmp_path):
        p = tmp_path / "zeros.idx3"
        p.write_bytes(idx_images_bytes(1, 2, 2))
        imgs = read_idx_images(p)
        with pytest.raises(ValueError):
            imgs.images[0, 0, 0] = 1.0

    def test_pixel_range_validated(self):
        with pytest.raises(RangeError):
            ImageSet(np.full((1, 2, 2), 1.5))


class TestIdxLabels:
    def test_three_labels(self, tmp_path):
        p = tmp_path / "l.idx1"
        p.write_bytes(struct.pack(">II", 0x801, 3) + bytes([0, 9, 5]))
        np.testing.assert_array_equal(read_idx_labels(p).labels, [0, 9, 5])

    def test_label_out_of_range(self, tmp_path):
        p = tmp_path / "l.idx1"
        p.write_bytes(struct.pack(">II", 0x801, 2) + bytes([3, 10]))
        with pytest.raises(RangeError):
            read_idx_labels(p, K=10)

    def test_pairing_checked_by_caller(self):
        with pytest.raises(PairingError):
            LabelVector(np.array([0, 1, 2])).check_pairs(4, "images")

    def test_text_labels(self, tmp_path):
        p = tmp_path / "l.txt"
        p.write_text("label\n1\n2\n3\n")
        np.testing.assert_array_equal(read_labels(p).labels, [1, 2, 3])

    def test_write_read(self, tmp_path):
        write_idx_labels(tmp_path / "l.idx1", [4, 4, 0, 9])
        np.testing.assert_array_equal(read_labels(tmp_path / "l.idx1").labels, [4, 4, 0, 9])


class TestProbabilityMatrix:
    def write_csv(self, path, rows, K=10):
        header = ",".join(f"class_{i}" for i in range(K))
        path.write_text(header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")

    def test_uniform_row(self, tmp_path):
        self.write_csv(tmp_path / "p.csv", [[0.1] * 10])
        pm = read_probability_matrix(tmp_path / "p.csv")
        np.testing.assert_allclose(pm.rows, np.full((1, 10), 0.1))
        assert pm.classifier_id == "p"

    def test_bad_row_sum_reports_row(self, tmp_path):
        rows = [[0.1] * 10, [0.098] * 10]
        self.write_csv(tmp_path / "p.csv", rows)
        with pytest.raises(NormalizationError) as info:
            read_probability_matrix(tmp_path / "p.csv")
        assert info.value.row == 1

    def test_ragged_rows(self, tmp_path):
        (tmp_path / "p.csv").write_text("class_0,class_1\n0.5,0.5\n1.0\n")
        with pytest.raises(FormatError):
            read_probability_matrix(tmp_path / "p.csv")

    def test_negative_entry(self):
        with pytest.raises(RangeError):
            ProbabilityMatrix(np.array([[1.2, -0.2]]))

    def test_round_trip(self, tmp_path, rng):
        rows = rng.dirichlet(np.ones(7), size=20)
        write_probability_matrix(tmp_path / "p.csv", ProbabilityMatrix(rows))
        back = read_probability_matrix(tmp_path / "p.csv")
        np.testing.assert_allclose(back.rows, rows, rtol=0, atol=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(0.0, 1.0), min_size=2, max_size=12).filter(lambda r: sum(r) > 0),
        st.floats(-0.01, 0.01),
    )
    def test_acceptance_matches_row_sum_rule(self, raw, shift):
        row = np.array(raw) / np.sum(raw)
        row[0] = max(0.0, row[0] + shift)
        total = row.sum()
        if abs(total - 1.0) <= 1e-4:
            pm = ProbabilityMatrix(row[None, :])
            assert abs(pm.rows.sum() - 1.0) <= 1e-4
        else:
            with pytest.raises(NormalizationError):
                ProbabilityMatrix(row[None, :])


class TestClassCounts:
    def test_reference_row_total(self, tmp_path):
        (tmp_path / "w.json").write_text(json.dumps({"model_id": "WGAN", "counts": COUNTS["WGAN"]}))
        c = read_class_counts(tmp_path / "w.json")
        assert c.total == 10000
        assert c.model_id == "WGAN"

    def test_uniform_row(self, tmp_path):
        write_class_counts(tmp_path / "c.json", ClassCounts(np.array(COUNTS["CGAN"]), "CGAN"))
        c = read_class_counts(tmp_path / "c.json")
        assert np.all(c.counts == 1000)

    def test_all_zero(self):
        with pytest.raises(EmptyInput):
            ClassCounts(np.zeros(10, dtype=int))

    def test_negative(self):
        with pytest.raises(RangeError):
            ClassCounts(np.array([3, -1]))

    def test_need_two_classes(self):
        with pytest.raises(RangeError):
            ClassCounts(np.array([5]))

    def test_non_integer_in_file(self, tmp_path):
        (tmp_path / "c.json").write_text('{"counts": [1.5, 2]}')
        with pytest.raises(FormatError):
            read_class_counts(tmp_path / "c.json")


class TestSampleManifest:
    def test_relative_paths_and_null_labels(self, tmp_path):
        sub = tmp_path / "set"
        sub.mkdir()
        write_idx_images(sub / "img.idx3", np.zeros((3, 2, 2)))
        write_sample_manifest(sub / "m.json", "G", "img.idx3", None)
        ss = read_sample_manifest(sub / "m.json")
        assert ss.labels is None and len(ss.images) == 3 and ss.model_id == "G"

    def test_label_count_mismatch(self, tmp_path):
        write_idx_images(tmp_path / "img.idx3", np.zeros((3, 2, 2)))
        write_idx_labels(tmp_path / "l.idx1", [0, 1])
        write_sample_manifest(tmp_path / "m.json", "G", "img.idx3", "l.idx1")
        with pytest.raises(PairingError):
            read_sample_manifest(tmp_path / "m.json")
