from __future__ import annotations

import struct

import numpy as np
import pytest

from tagsim.io import (
    read_json,
    read_pgm,
    read_raster,
    write_json,
    write_pgm,
    write_raster,
)


class TestRasterRoundTrip:
    def test_multichannel_float32_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = rng.standard_normal((3, 5, 7)).astype(np.float32).astype(np.float64)
        path = tmp_path / "a.tmri"
        write_raster(path, arr)
        back = read_raster(path)
        assert back.shape == (3, 5, 7)
        assert back.dtype == np.float64
        assert np.array_equal(back, arr)

    def test_single_image_gains_channel_axis(self, tmp_path):
        img = np.arange(12, dtype=np.float64).reshape(3, 4)
        path = tmp_path / "b.tmri"
        write_raster(path, img)
        back = read_raster(path)
        assert back.shape == (1, 3, 4)
        assert np.array_equal(back[0], img)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "c.tmri"
        write_raster(path, np.zeros((2, 3, 4)))
        blob = path.read_bytes()
        magic, version, dtype, channels, width, height = struct.unpack_from(
            "<4sHBBII", blob)
        assert magic == b"TMRI"
        assert version == 1
        assert dtype == 1
        assert channels == 2
        assert width == 4
        assert height == 3
        assert len(blob) == 16 + 4 * 2 * 3 * 4

    def test_values_stored_little_endian_row_major(self, tmp_path):
        path = tmp_path / "d.tmri"
        write_raster(path, np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        blob = path.read_bytes()
        vals = np.frombuffer(blob[16:], dtype="<f4")
        assert np.array_equal(vals, [1.0, 2.0, 3.0, 4.0])

    def test_too_many_channels_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_raster(tmp_path / "e.tmri", np.zeros((256, 2, 2)))

    def test_bad_rank_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_raster(tmp_path / "f.tmri", np.zeros((2, 2, 2, 2)))


class TestRasterCorruption:
    def _write(self, tmp_path):
        path = tmp_path / "x.tmri"
        write_raster(path, np.ones((1, 2, 2)))
        return path

    def test_bad_magic(self, tmp_path):
        path = self._write(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"JUNK"
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="magic"):
            read_raster(path)

    def test_bad_version(self, tmp_path):
        path = self._write(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[4:6] = struct.pack("<H", 9)
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="version"):
            read_raster(path)

    def test_bad_dtype_tag(self, tmp_path):
        path = self._write(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[6] = 7
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="dtype"):
            read_raster(path)

    def test_truncated_payload(self, tmp_path):
        path = self._write(tmp_path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(ValueError, match="bytes"):
            read_raster(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "y.tmri"
        path.write_bytes(b"TMRI\x01")
        with pytest.raises(ValueError, match="truncated"):
            read_raster(path)


class TestPgm:
    def test_round_trip_within_quantization(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.uniform(0.0, 0.3, (9, 11))
        path = tmp_path / "m.pgm"
        write_pgm(path, img)
        back, peak = read_pgm(path)
        assert peak == pytest.approx(img.max())
        assert back.shape == img.shape
        assert np.abs(back - img).max() <= peak / 255.0 / 2 + 1e-12

    def test_sidecar_records_requested_scale(self, tmp_path):
        img = np.full((4, 4), 0.5)
        path = tmp_path / "n.pgm"
        write_pgm(path, img, max_value=2.0)
        sidecar = read_json(tmp_path / "n.pgm.json")
        assert sidecar == {"max": 2.0}
        back, peak = read_pgm(path)
        assert peak == 2.0
        assert np.allclose(back, np.rint(0.25 * 255) / 255 * 2.0)

    def test_binary_header(self, tmp_path):
        path = tmp_path / "p.pgm"
        write_pgm(path, np.zeros((2, 3)))
        assert path.read_bytes().startswith(b"P5\n3 2\n255\n")

    def test_all_zero_image(self, tmp_path):
        path = tmp_path / "q.pgm"
        write_pgm(path, np.zeros((3, 3)))
        back, peak = read_pgm(path)
        assert peak == 0.0
        assert np.all(back == 0.0)

    def test_negative_values_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "r.pgm", np.array([[-0.1, 0.5]]))

    def test_non_image_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "s.pgm", np.zeros((2, 2, 2)))


class TestJson:
    def test_deterministic_layout(self, tmp_path):
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        write_json(p1, {"b": 1, "a": [1, 2]})
        write_json(p2, {"a": [1, 2], "b": 1})
        assert p1.read_bytes() == p2.read_bytes()
        assert p1.read_text().endswith("\n")
        assert read_json(p1) == {"a": [1, 2], "b": 1}
