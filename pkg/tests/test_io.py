import json

import numpy as np
import pytest

from mmreg import io


class TestFieldFiles:
    def test_round_trip_f32_bitwise(self, tmp_path):
        data = np.random.default_rng(0).normal(size=(32, 32)).astype(np.float32)
        head = io.write_field(tmp_path / "img", data, "image", (1.25, 1.25))
        assert head.name == "img.json"
        f = io.read_field(tmp_path / "img")
        np.testing.assert_array_equal(f.data.astype(np.float32), data)
        assert f.kind == "image" and f.spacing == (1.25, 1.25)

    def test_header_layout(self, tmp_path):
        io.write_field(tmp_path / "m", np.zeros((3, 4), np.uint8), "mask")
        header = json.loads((tmp_path / "m.json").read_text())
        assert header == {"dims": [3, 4], "spacing_mm": [1.0, 1.0], "dtype": "u8", "order": "row-major", "kind": "mask"}
        assert (tmp_path / "m.raw").stat().st_size == 12

    def test_deformation_axis_major(self, tmp_path):
        phi = np.random.default_rng(1).normal(size=(3, 4, 5, 6))
        io.write_field(tmp_path / "phi", phi, "deformation")
        header = json.loads((tmp_path / "phi.json").read_text())
        assert header["dims"] == [4, 5, 6]
        raw = np.frombuffer((tmp_path / "phi.raw").read_bytes(), "<f4")
        np.testing.assert_array_equal(raw[:120], phi[0].ravel().astype(np.float32))
        f = io.read_field(tmp_path / "phi.json")
        assert f.data.shape == (3, 4, 5, 6) and f.dims == (4, 5, 6)

    def test_mask_u16(self, tmp_path):
        m = np.array([[0, 300], [2, 1]])
        io.write_field(tmp_path / "m", m, "mask")
        f = io.read_field(tmp_path / "m")
        assert f.data.dtype == np.uint16
        np.testing.assert_array_equal(f.data, m)

    def test_truncated_payload(self, tmp_path):
        io.write_field(tmp_path / "a", np.ones((4, 4)), "image")
        raw = tmp_path / "a.raw"
        raw.write_bytes(raw.read_bytes()[:-5])
        with pytest.raises(io.FieldFileError) as exc:
            io.read_field(tmp_path / "a")
        assert exc.value.code == "size-mismatch"
        assert "expected 64 bytes" in str(exc.value) and "found 59" in str(exc.value)

    @pytest.mark.parametrize(
        "patch,code",
        [
            ({"kind": "volume"}, "unknown-kind"),
            ({"dtype": "f64"}, "unknown-dtype"),
            ({"order": "column-major"}, "malformed-header"),
            ({"spacing_mm": [1.0]}, "malformed-header"),
        ],
    )
    def test_bad_header_fields(self, tmp_path, patch, code):
        io.write_field(tmp_path / "a", np.ones((4, 4)), "image")
        head = tmp_path / "a.json"
        header = json.loads(head.read_text())
        header.update(patch)
        head.write_text(json.dumps(header))
        with pytest.raises(io.FieldFileError) as exc:
            io.read_field(head)
        assert exc.value.code == code

    def test_malformed_json(self, tmp_path):
        (tmp_path / "a.json").write_text("{dims: 3")
        (tmp_path / "a.raw").write_bytes(b"")
        with pytest.raises(io.FieldFileError) as exc:
            io.read_field(tmp_path / "a")
        assert exc.value.code == "malformed-header"

    def test_missing_key(self, tmp_path):
        (tmp_path / "a.json").write_text(json.dumps({"dims": [2, 2], "dtype": "f32"}))
        with pytest.raises(io.FieldFileError, match="malformed"):
            io.read_field(tmp_path / "a")

    def test_write_rejects(self, tmp_path):
        with pytest.raises(io.FieldFileError) as exc:
            io.write_field(tmp_path / "a", np.ones((4, 4)), "volume")
        assert exc.value.code == "unknown-kind"
        with pytest.raises(io.FieldFileError) as exc:
            io.write_field(tmp_path / "a", np.ones((4, 4)), "image", dtype="f16")
        assert exc.value.code == "unknown-dtype"
        with pytest.raises(io.FieldFileError) as exc:
            io.write_field(tmp_path / "a", np.ones((2, 4, 4, 4)), "deformation")
        assert exc.value.code == "bad-shape"


class TestPgm:
    def test_8bit_per_pixel(self, tmp_path):
        raster = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n# made by hand\n4 3\n255\n" + raster.tobytes())
        img = io.read_pgm(path)
        assert img.shape == (3, 4)
        for idx in np.ndindex(3, 4):
            assert img[idx] == raster[idx] / 255.0

    def test_16bit_big_endian(self, tmp_path):
        raster = np.array([[0, 1000], [65535, 4095]], dtype=">u2")
        path = tmp_path / "b.pgm"
        path.write_bytes(b"P5 2 2 65535\n" + raster.tobytes())
        np.testing.assert_array_equal(io.read_pgm(path), raster.astype(float) / 65535)

    def test_round_trip(self, tmp_path):
        img = np.random.default_rng(2).random((5, 7))
        io.write_pgm(tmp_path / "c.pgm", img)
        np.testing.assert_allclose(io.read_pgm(tmp_path / "c.pgm"), np.rint(img * 255) / 255)

    def test_truncated(self, tmp_path):
        path = tmp_path / "d.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(10))
        with pytest.raises(io.FieldFileError) as exc:
            io.read_pgm(path)
        assert exc.value.code == "size-mismatch"

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "e.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
        with pytest.raises(io.FieldFileError, match="binary PGM"):
            io.read_pgm(path)

    def test_load_image_dispatch(self, tmp_path):
        io.write_pgm(tmp_path / "f.pgm", np.zeros((4, 4)))
        img, sp = io.load_image(tmp_path / "f.pgm")
        assert img.shape == (4, 4) and sp == (1.0, 1.0)
        io.write_field(tmp_path / "phi", np.zeros((2, 4, 4)), "deformation")
        with pytest.raises(io.FieldFileError) as exc:
            io.load_image(tmp_path / "phi")
        assert exc.value.code == "wrong-kind"
