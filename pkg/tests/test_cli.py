import hashlib
import json

import numpy as np
import pytest

from lfdepth import cli, io

TINY_NET = ["--stream-width", "2", "--merge-width", "8"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def flat_scene_dir(workdir):
    out = workdir / "flat"
    rc = cli.main(["synth", "--preset", "flat0", "--out", str(out),
                   "--size", "32", "--seed", "4"])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def tiny_model(workdir, flat_scene_dir):
    out = workdir / "model.lfp"
    rc = cli.main(["train", "--data", str(flat_scene_dir), "--out", str(out),
                   "--patches", "32", "--iters", "4", "--seed", "0", *TINY_NET])
    assert rc == 0
    return out


class TestSynth:
    def test_scene_directory_layout(self, flat_scene_dir):
        views = sorted(p.name for p in flat_scene_dir.glob("view_*.png"))
        assert len(views) == 49
        assert "view_-3_-3.png" in views and "view_3_3.png" in views
        assert (flat_scene_dir / "gt.pfm").exists()
        assert (flat_scene_dir / "mask.png").exists()
        lf, gt, mask = io.load_scene(flat_scene_dir)
        assert lf.data.shape[:2] == (7, 7)
        assert gt.data.shape == (32, 32)
        assert not mask.any()  # single flat layer: nothing occluded

    def test_manifest_contents(self, flat_scene_dir):
        m = json.loads((flat_scene_dir / "manifest.json").read_text())
        assert m["command"] == "synth"
        assert m["seed"] == 4
        assert m["config"]["preset"] == "flat0"
        assert set(m["timings_s"]) == {"render", "write"}

    def test_occluder_mask_nonempty(self, workdir):
        out = workdir / "occ"
        assert cli.main(["synth", "--preset", "occluder", "--out", str(out),
                         "--size", "48"]) == 0
        _, _, mask = io.load_scene(out)
        assert mask.any()


class TestTrainInferEval:
    def test_train_artifacts(self, tiny_model):
        assert tiny_model.exists()
        curve = (tiny_model.parent / "model.lfp.curve.csv").read_text()
        lines = curve.strip().split("\n")
        assert lines[0] == "iteration,loss"
        assert len(lines) >= 2
        m = json.loads((tiny_model.parent / "model.lfp.manifest.json").read_text())
        assert m["command"] == "train"
        assert m["config"]["iters"] == 4
        assert len(m["inputs"]) == 1

    def test_infer_and_eval(self, workdir, flat_scene_dir, tiny_model):
        pred = workdir / "pred.pfm"
        rc = cli.main(["infer", "--model", str(tiny_model),
                       "--scene", str(flat_scene_dir), "--out", str(pred)])
        assert rc == 0
        assert io.read_pfm(pred).shape == (10, 10)  # 32 - 22
        m = json.loads((workdir / "pred.pfm.manifest.json").read_text())
        assert m["config"]["border"] == 11
        assert m["config"]["mode"] == "crop"

        row = workdir / "row.csv"
        report = workdir / "err.png"
        rc = cli.main(["eval", "--pred", str(pred),
                       "--gt", str(flat_scene_dir / "gt.pfm"),
                       "--mask", str(flat_scene_dir / "mask.png"),
                       "--out", str(row), "--report", str(report)])
        assert rc == 0
        header, values = row.read_text().strip().split("\n")
        assert header == "badpix001,badpix003,badpix007,mse100"
        vals = [float(v) for v in values.split(",")]
        assert all(np.isfinite(v) for v in vals)
        assert report.exists()

    def test_eval_gt_against_itself_is_zero(self, workdir, flat_scene_dir):
        row = workdir / "self.csv"
        rc = cli.main(["eval", "--pred", str(flat_scene_dir / "gt.pfm"),
                       "--gt", str(flat_scene_dir / "gt.pfm"),
                       "--out", str(row)])
        assert rc == 0
        values = row.read_text().strip().split("\n")[1]
        assert [float(v) for v in values.split(",")] == [0.0, 0.0, 0.0, 0.0]

    def test_gradcheck_command(self, capsys):
        rc = cli.main(["gradcheck", "--seed", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "max rel err" in out
        assert "100 configs" in out

    def test_infer_reflect_keeps_size(self, workdir, flat_scene_dir, tiny_model):
        pred = workdir / "pred_reflect.pfm"
        rc = cli.main(["infer", "--model", str(tiny_model),
                       "--scene", str(flat_scene_dir), "--out", str(pred),
                       "--pad", "reflect"])
        assert rc == 0
        assert io.read_pfm(pred).shape == (32, 32)

    def test_infer_ensemble_flag(self, workdir, flat_scene_dir, tiny_model):
        pred = workdir / "pred_ens.pfm"
        rc = cli.main(["infer", "--model", str(tiny_model),
                       "--scene", str(flat_scene_dir), "--out", str(pred),
                       "--ensemble"])
        assert rc == 0
        assert io.read_pfm(pred).shape == (10, 10)  # crop is the default
        m = json.loads((workdir / "pred_ens.pfm.manifest.json").read_text())
        assert m["config"]["ensemble"] is True
        rc = cli.main(["infer", "--model", str(tiny_model),
                       "--scene", str(flat_scene_dir), "--out", str(pred),
                       "--ensemble", "--pad", "reflect"])
        assert rc == 0
        assert io.read_pfm(pred).shape == (32, 32)

    def test_train_seed_reproducibility(self, workdir, flat_scene_dir):
        outs = []
        for tag in ("a", "b"):
            out = workdir / f"model_{tag}.lfp"
            rc = cli.main(["train", "--data", str(flat_scene_dir),
                           "--out", str(out), "--patches", "16", "--iters", "2",
                           "--seed", "7", *TINY_NET])
            assert rc == 0
            outs.append(out)
        assert outs[0].read_bytes() == outs[1].read_bytes()
        ma, mb = (json.loads((workdir / f"model_{t}.lfp.manifest.json").read_text())
                  for t in ("a", "b"))
        assert ma["config"] == mb["config"]
        assert ma["inputs"] == mb["inputs"]

    def test_deterministic_infer_bytes(self, workdir, flat_scene_dir, tiny_model):
        preds = []
        for tag in ("a", "b"):
            pred = workdir / f"det_{tag}.pfm"
            rc = cli.main(["infer", "--model", str(tiny_model),
                           "--scene", str(flat_scene_dir), "--out", str(pred),
                           "--deterministic"])
            assert rc == 0
            preds.append(pred.read_bytes())
        assert preds[0] == preds[1]


class TestAugmentCommand:
    def test_rotate_and_validate(self, workdir):
        src = workdir / "occ_src"
        assert cli.main(["synth", "--preset", "occluder", "--out", str(src),
                         "--size", "48"]) == 0
        dst = workdir / "occ_rot"
        rc = cli.main(["augment", "--in", str(src), "--out", str(dst),
                       "--rotation", "90", "--validate", "--tol", "1e-3"])
        assert rc == 0
        lf, gt, mask = io.load_scene(dst)
        assert lf.data.shape[:2] == (7, 7)
        src_lf, src_gt, src_mask = io.load_scene(src)
        assert mask.sum() == src_mask.sum()  # rotation permutes, not erases

    def test_shift_without_gt_rejected(self, workdir, flat_scene_dir, capsys):
        rc = cli.main(["augment", "--in", str(flat_scene_dir),
                       "--out", str(workdir / "x"), "--shift-u", "1"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestConfigResolution:
    def test_precedence_defaults_file_flags(self, workdir):
        cfg = workdir / "run.cfg"
        cfg.write_text("iters = 9\nstream_width = 6\nmerge_width = 24\n")
        ap = cli.build_parser()
        args = ap.parse_args(["train", "--data", "x", "--out", "y",
                              "--config", str(cfg), "--iters", "7"])
        resolved = cli._resolve_config(args)
        assert resolved["iters"] == 7          # flag beats file
        assert resolved["stream_width"] == 6   # file beats default
        assert resolved["lr"] == 1e-5          # untouched default

    def test_patch_size_pinned(self):
        with pytest.raises(Exception):
            cli._net_config({**cli._CONFIG_DEFAULTS, "patch_size": 25})


class TestExitCodes:
    def test_missing_scene_is_runtime_error(self, workdir, capsys):
        rc = cli.main(["infer", "--model", "nope.lfp",
                       "--scene", str(workdir / "missing"),
                       "--out", str(workdir / "o.pfm")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as e:
            cli.main(["synth", "--preset", "bogus", "--out", "x"])
        assert e.value.code == 2

    def test_unknown_command_is_2(self):
        with pytest.raises(SystemExit) as e:
            cli.main(["frobnicate"])
        assert e.value.code == 2


class TestContentHash:
    def test_file_hash_is_sha256(self, tmp_path):
        p = tmp_path / "blob.bin"
        p.write_bytes(b"\x01\x02\x03")
        assert cli.content_hash(p) == hashlib.sha256(b"\x01\x02\x03").hexdigest()

    def test_directory_hash_tracks_names_and_content(self, tmp_path):
        d = tmp_path / "d"
        d.mkdir()
        (d / "a.txt").write_text("one")
        (d / "b.txt").write_text("two")
        h0 = cli.content_hash(d)
        assert cli.content_hash(d) == h0
        (d / "b.txt").write_text("TWO")
        h1 = cli.content_hash(d)
        assert h1 != h0
        (d / "b.txt").rename(d / "c.txt")
        assert cli.content_hash(d) != h1
