"""Synthetic data generation, PPM/PGM round trips, dataset loading."""

import numpy as np
import pytest

from spixel.data import gen_synthetic, load_dataset, save_dataset
from spixel.errors import ConfigError, DataError
from spixel.imageio import read_pgm16, read_ppm, write_pgm16, write_ppm


class TestGenSynthetic:
    def test_two_regions_two_classes(self):
        samples = gen_synthetic(1, 64, 2, rng=0)
        labels = samples[0].labels
        assert labels.num_classes == 2
        assert set(np.unique(labels.ids).tolist()) == {0, 1}

    def test_zero_noise_flat_regions(self):
        samples = gen_synthetic(1, 32, 4, rng=1, noise_sigma=0.0)
        img, ids = samples[0].image, samples[0].labels.ids
        for region in range(4):
            block = img[ids == region]
            assert np.unique(block.reshape(-1, 3), axis=0).shape[0] == 1

    def test_seed89_regeneration_bit_identical(self):
        a = gen_synthetic(3, 32, 5, rng=89)
        b = gen_synthetic(3, 32, 5, rng=89)
        for s1, s2 in zip(a, b):
            assert np.array_equal(s1.image, s2.image)
            assert np.array_equal(s1.labels.ids, s2.labels.ids)

    def test_all_regions_present(self):
        for s in gen_synthetic(4, 48, 7, rng=3):
            assert len(np.unique(s.labels.ids)) == 7

    def test_values_in_unit_interval(self):
        s = gen_synthetic(1, 32, 3, rng=5)[0]
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0

    def test_too_few_regions(self):
        with pytest.raises(ConfigError):
            gen_synthetic(1, 32, 1, rng=0)


class TestImageIO:
    def test_ppm_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, (13, 17, 3)).astype(np.uint8)
        path = tmp_path / "a.ppm"
        write_ppm(path, img)
        np.testing.assert_array_equal(read_ppm(path), img)

    def test_ppm_float_conversion(self, tmp_path):
        img = np.array([[[0.0, 0.5, 1.0]]])
        path = tmp_path / "b.ppm"
        write_ppm(path, img)
        np.testing.assert_array_equal(read_ppm(path)[0, 0], [0, 128, 255])

    def test_pgm16_round_trip_big_values(self, tmp_path):
        rng = np.random.default_rng(1)
        ids = rng.integers(0, 40_000, (9, 11)).astype(np.uint16)
        path = tmp_path / "c.labels.pgm"
        write_pgm16(path, ids)
        np.testing.assert_array_equal(read_pgm16(path), ids)

    def test_pgm16_is_big_endian(self, tmp_path):
        path = tmp_path / "d.pgm"
        write_pgm16(path, np.array([[0x0102]], np.uint16))
        raw = path.read_bytes()
        assert raw.endswith(b"\x01\x02")

    def test_header_comments_parsed(self, tmp_path):
        path = tmp_path / "e.ppm"
        path.write_bytes(b"P6\n# a comment\n2 1\n# another\n255\n" + bytes(6))
        img = read_ppm(path)
        assert img.shape == (1, 2, 3)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "f.ppm"
        path.write_bytes(b"P5\n1 1\n255\n\x00")
        with pytest.raises(DataError):
            read_ppm(path)

    def test_truncated_raster(self, tmp_path):
        path = tmp_path / "g.ppm"
        path.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(DataError):
            read_ppm(path)


class TestLoadDataset:
    def test_empty_dir(self, tmp_path):
        assert load_dataset(tmp_path) == []

    def test_round_trip_one_pair(self, tmp_path):
        samples = gen_synthetic(1, 32, 3, rng=7)
        save_dataset(tmp_path, samples)
        loaded = load_dataset(tmp_path)
        assert len(loaded) == 1
        assert loaded[0].identifier == samples[0].identifier
        assert loaded[0].image.shape == (32, 32, 3)
        np.testing.assert_array_equal(loaded[0].labels.ids, samples[0].labels.ids)
        # 8-bit quantization bounds the image error
        assert np.abs(loaded[0].image - samples[0].image).max() <= 0.5 / 255 + 1e-9

    def test_lexicographic_order(self, tmp_path):
        samples = gen_synthetic(3, 16, 2, rng=1)
        samples[0].identifier = "zzz"
        samples[1].identifier = "aaa"
        samples[2].identifier = "mmm"
        save_dataset(tmp_path, samples)
        loaded = load_dataset(tmp_path)
        assert [s.identifier for s in loaded] == ["aaa", "mmm", "zzz"]

    def test_unpaired_image_errors(self, tmp_path):
        write_ppm(tmp_path / "orphan.ppm", np.zeros((4, 4, 3), np.uint8))
        with pytest.raises(DataError) as exc:
            load_dataset(tmp_path)
        assert "orphan" in str(exc.value)

    def test_unpaired_labels_errors(self, tmp_path):
        write_pgm16(tmp_path / "lone.labels.pgm", np.zeros((4, 4), np.uint16))
        with pytest.raises(DataError) as exc:
            load_dataset(tmp_path)
        assert "lone" in str(exc.value)

    def test_dim_mismatch_names_both_files(self, tmp_path):
        write_ppm(tmp_path / "x.ppm", np.zeros((4, 4, 3), np.uint8))
        write_pgm16(tmp_path / "x.labels.pgm", np.zeros((5, 4), np.uint16))
        with pytest.raises(DataError) as exc:
            load_dataset(tmp_path)
        msg = str(exc.value)
        assert "x.ppm" in msg and "x.labels.pgm" in msg
