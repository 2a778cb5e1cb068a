import struct

import numpy as np
import pytest

from lfdepth import ConfigError, DataError, FormatError, LightField, io
from lfdepth import synth


class TestImages:
    def test_16bit_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.random((6, 7))
        p = tmp_path / "x.png"
        io.write_image(p, img, bit_depth=16)
        back = io.read_image(p)
        assert back.shape == (6, 7)
        assert np.abs(back - img).max() <= 0.5 / 65535 + 1e-9

    def test_8bit_roundtrip(self, tmp_path):
        img = np.linspace(0, 1, 24).reshape(4, 6)
        p = tmp_path / "x.png"
        io.write_image(p, img, bit_depth=8)
        assert np.abs(io.read_image(p) - img).max() <= 0.5 / 255 + 1e-9

    def test_color_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.random((5, 5, 3))
        p = tmp_path / "c.png"
        io.write_image(p, img)
        back = io.read_image(p)
        assert back.shape == (5, 5, 3)
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-9

    def test_mask_roundtrip(self, tmp_path):
        mask = np.zeros((4, 4), dtype=bool)
        mask[1, 2] = True
        p = tmp_path / "m.png"
        io.write_mask(p, mask)
        assert np.array_equal(io.read_mask(p), mask)


class TestPfm:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        d = rng.uniform(-4, 4, (5, 8)).astype(np.float32)
        p = tmp_path / "d.pfm"
        io.write_pfm(d, p)
        assert np.array_equal(io.read_pfm(p), d)

    def test_hand_built_bytes_bottom_up_little_endian(self, tmp_path):
        # rows are stored bottom-up; negative scale flags little-endian
        p = tmp_path / "h.pfm"
        payload = struct.pack("<4f", 3.0, 4.0, 1.0, 2.0)
        p.write_bytes(b"Pf\n2 2\n-1.0\n" + payload)
        assert np.array_equal(io.read_pfm(p),
                              np.array([[1, 2], [3, 4]], dtype=np.float32))

    def test_big_endian_positive_scale(self, tmp_path):
        p = tmp_path / "b.pfm"
        payload = struct.pack(">4f", 3.0, 4.0, 1.0, 2.0)
        p.write_bytes(b"Pf\n2 2\n1.0\n" + payload)
        assert np.array_equal(io.read_pfm(p),
                              np.array([[1, 2], [3, 4]], dtype=np.float32))

    def test_color_pfm_rejected(self, tmp_path):
        p = tmp_path / "c.pfm"
        p.write_bytes(b"PF\n1 1\n-1.0\n" + struct.pack("<3f", 1, 2, 3))
        with pytest.raises(FormatError):
            io.read_pfm(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "t.pfm"
        p.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 10)
        with pytest.raises(FormatError):
            io.read_pfm(p)

    def test_nan_rejected_by_default(self, tmp_path):
        p = tmp_path / "n.pfm"
        io.write_pfm(np.array([[np.nan]], dtype=np.float32), p)
        with pytest.raises(DataError):
            io.read_pfm(p)
        assert np.isnan(io.read_pfm(p, allow_nan=True)[0, 0])


class TestSceneScan:
    def _write_views(self, root, n, name_fn):
        rng = np.random.default_rng(0)
        a = 2 * n + 1
        data = rng.random((a, a, 6, 6))
        for u in range(-n, n + 1):
            for v in range(-n, n + 1):
                io.write_image(root / name_fn(u, v, n), data[u + n, v + n])
        return data

    def test_view_naming_is_v_then_u(self, tmp_path):
        # view_{v}_{u}.png: the first number in the name is v
        data = self._write_views(tmp_path, 1,
                                 lambda u, v, n: f"view_{v}_{u}.png")
        lf, _, _ = io.load_scene(tmp_path)
        assert lf.angular_extent == 1
        assert np.abs(lf.data[2, 1, :, :, 0] - data[2, 1]).max() < 1e-4

    def test_hci_naming_row_major(self, tmp_path):
        # input_Cam{idx}.png, idx = (v+n)*side + (u+n)
        data = self._write_views(
            tmp_path, 1,
            lambda u, v, n: f"input_Cam{(v + n) * 3 + (u + n):03d}.png")
        lf, _, _ = io.load_scene(tmp_path)
        assert np.abs(lf.data[0, 2, :, :, 0] - data[0, 2]).max() < 1e-4

    def test_mixed_naming_rejected(self, tmp_path):
        io.write_image(tmp_path / "view_0_0.png", np.zeros((4, 4)))
        io.write_image(tmp_path / "input_Cam000.png", np.zeros((4, 4)))
        with pytest.raises(FormatError):
            io.scan_scene(tmp_path)

    def test_incomplete_grid_rejected(self, tmp_path):
        for v, u in [(0, 0), (0, 1), (1, 0)]:
            io.write_image(tmp_path / f"view_{v}_{u}.png", np.zeros((4, 4)))
        with pytest.raises(FormatError):
            io.scan_scene(tmp_path)

    def test_full_9x9_benchmark_layout(self, tmp_path):
        # 81 views of 512x512 map to angular extent 4
        img = np.zeros((512, 512))
        for idx in range(81):
            io.write_image(tmp_path / f"input_Cam{idx:03d}.png", img)
        lf, gt, mask = io.load_scene(tmp_path)
        assert lf.angular_extent == 4
        assert (lf.height, lf.width) == (512, 512)
        assert gt is None and mask is None
        (tmp_path / "input_Cam080.png").unlink()
        with pytest.raises(FormatError):
            io.scan_scene(tmp_path)

    def test_scene_roundtrip_with_gt_and_mask(self, tmp_path):
        scene = synth.preset_scene("occluder", 32, 32, seed=7)
        lf, gt, occ = synth.render(scene, 1, 32, 32)
        io.write_scene(tmp_path, lf, gt=gt, mask=occ)
        lf2, gt2, mask2 = io.load_scene(tmp_path)
        assert lf2.data.shape == lf.data.shape
        assert np.abs(lf2.data - lf.data).max() <= 0.5 / 65535 + 1e-9
        assert np.array_equal(gt2.data, gt.data.astype(np.float32))
        assert np.array_equal(mask2, occ)


class TestParamsContainer:
    def test_roundtrip_preserves_order_shapes_values(self, tmp_path):
        rng = np.random.default_rng(3)
        tensors = {
            "a.w": rng.normal(size=(4, 3, 2, 2)).astype(np.float32),
            "a.b": rng.normal(size=(4,)).astype(np.float32),
            "z.first": rng.normal(size=(1,)).astype(np.float32),
        }
        p = tmp_path / "m.lfp"
        io.save_params(p, tensors, config={"stream_width": 4})
        cfg, back = io.load_params(p)
        assert cfg == {"stream_width": 4}
        assert list(back) == list(tensors)  # insertion order kept
        for k in tensors:
            assert np.array_equal(back[k], tensors[k])

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.lfp"
        p.write_bytes(b"NOTPARAMS\n" + b"\x00" * 64)
        with pytest.raises(FormatError):
            io.load_params(p)

    def test_truncated_blob(self, tmp_path):
        rng = np.random.default_rng(4)
        p = tmp_path / "m.lfp"
        io.save_params(p, {"w": rng.normal(size=(8, 8)).astype(np.float32)})
        raw = p.read_bytes()
        p.write_bytes(raw[:-16])
        with pytest.raises(FormatError):
            io.load_params(p)


class TestConfigFile:
    def test_parse_known_keys(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\nstream_width = 16\nlr = 1e-4\n\nseed=7\n")
        cfg = io.read_config(p)
        assert cfg == {"stream_width": 16, "lr": 1e-4, "seed": 7}

    def test_unknown_key_lists_known(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("strem_width = 16\n")
        with pytest.raises(ConfigError, match="stream_width"):
            io.read_config(p)

    def test_write_read_roundtrip(self, tmp_path):
        cfg = {"iters": 5000, "lr": 1e-5, "disparity_range": 4.0}
        p = tmp_path / "c.cfg"
        io.write_config(p, cfg)
        assert io.read_config(p) == cfg
