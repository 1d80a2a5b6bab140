import os

import numpy as np
import pytest

from fusenet import cli
from fusenet.data import read_ppm
from fusenet.tensor import Tensor

TINY_ARGS = [
    "--set", "model.stem_channels=4",
    "--set", "model.channels=4,8,8,8",
    "--set", "model.depths=0,0,0,0",
    "--set", "fusion.channels=8",
    "--set", "fusion.num_heads=2",
    "--set", "run.train_scenes=8",
    "--set", "run.val_scenes=4",
]


def run_cli(argv):
    return cli.main(argv)


class TestParsing:
    def test_usage_error_exits_1(self):
        with pytest.raises(SystemExit) as info:
            run_cli(["definitely-not-a-command"])
        assert info.value.code == 1

    def test_missing_required_flag_exits_1(self):
        with pytest.raises(SystemExit) as info:
            run_cli(["eval"])
        assert info.value.code == 1

    def test_unknown_set_key_exits_1(self, capsys):
        code = run_cli(["bench", "--set", "model.bogus=3"])
        assert code == 1
        assert "bogus" in capsys.readouterr().err

    def test_malformed_set_exits_1(self):
        assert run_cli(["bench", "--set", "nonsense"]) == 1

    def test_config_file_applies(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[run]\nepochs = 1\nseed = 9\n[model]\n"
                       "stem_channels = 4\nchannels = 4,8,8,8\n"
                       "depths = 0,0,0,0\n[fusion]\nchannels = 8\n"
                       "num_heads = 2\n")
        import argparse
        args = argparse.Namespace(config=str(cfg), set=None, seed=None,
                                  image_size=None, epochs=None)
        run = cli.build_run_config(args)
        assert run.epochs == 1
        assert run.seed == 9
        assert run.model.stem_channels == 4

    def test_flags_beat_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[run]\nseed = 9\n")
        import argparse
        args = argparse.Namespace(config=str(cfg), set=["run.seed=10"],
                                  seed=11, image_size=None, epochs=None)
        assert cli.build_run_config(args).seed == 11

    def test_missing_config_file_exits_1(self):
        assert run_cli(["bench", "--config", "/nonexistent.cfg"]) == 1


class TestThreads:
    def test_default_is_one(self, monkeypatch):
        monkeypatch.delenv("FUSENET_THREADS", raising=False)
        assert cli.max_threads() == 1

    def test_env_var_respected(self, monkeypatch):
        monkeypatch.setenv("FUSENET_THREADS", "4")
        assert cli.max_threads() == 4

    def test_fan_out_preserves_order(self, monkeypatch):
        monkeypatch.setenv("FUSENET_THREADS", "4")
        assert cli.fan_out(lambda i: i * i, list(range(20))) == \
            [i * i for i in range(20)]


class TestGenData:
    def test_writes_scene_files(self, tmp_path):
        out = str(tmp_path / "ds")
        code = run_cli(["gen-data", "--out", out, "--count", "3",
                        "--seed", "5"])
        assert code == 0
        assert sorted(os.listdir(out)) == [
            "img_00000.ppm", "img_00000.txt", "img_00001.ppm",
            "img_00001.txt", "img_00002.ppm", "img_00002.txt"]

    def test_threaded_output_matches_serial(self, tmp_path, monkeypatch):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        monkeypatch.delenv("FUSENET_THREADS", raising=False)
        run_cli(["gen-data", "--out", a, "--count", "4", "--seed", "5"])
        monkeypatch.setenv("FUSENET_THREADS", "3")
        run_cli(["gen-data", "--out", b, "--count", "4", "--seed", "5"])
        for name in os.listdir(a):
            with open(os.path.join(a, name), "rb") as fa, \
                    open(os.path.join(b, name), "rb") as fb:
                assert fa.read() == fb.read(), name


class TestTrain:
    def test_smoke_run_writes_log(self, tmp_path):
        out = str(tmp_path / "run")
        code = run_cli(["train", "--epochs", "2", "--seed", "1",
                        "--out", out] + TINY_ARGS)
        assert code == 0
        lines = open(os.path.join(out, "train_log.csv")).read().splitlines()
        assert lines[0] == "epoch,lr,loss,loss_obj,loss_cls,loss_box," \
            "val_map50"
        assert len(lines) == 3
        assert os.path.exists(os.path.join(out, "last.ckpt"))

    def test_determinism_byte_identical(self, tmp_path):
        outs = [str(tmp_path / "a"), str(tmp_path / "b")]
        for out in outs:
            assert run_cli(["train", "--epochs", "2", "--seed", "3",
                            "--out", out] + TINY_ARGS) == 0
        for name in ("train_log.csv", "last.ckpt", "best.ckpt"):
            with open(os.path.join(outs[0], name), "rb") as fa, \
                    open(os.path.join(outs[1], name), "rb") as fb:
                assert fa.read() == fb.read(), name

    def test_nan_exits_2(self, tmp_path, capsys):
        code = run_cli(["train", "--epochs", "2", "--seed", "1",
                        "--out", str(tmp_path),
                        "--set", "run.lr0=1e12"] + TINY_ARGS)
        assert code == 2
        assert "non-finite" in capsys.readouterr().err

    def test_resume_matches_uninterrupted(self, tmp_path):
        full, half = str(tmp_path / "full"), str(tmp_path / "half")
        run_cli(["train", "--epochs", "4", "--seed", "2",
                 "--out", full] + TINY_ARGS)
        run_cli(["train", "--epochs", "2", "--seed", "2",
                 "--out", half] + TINY_ARGS)
        run_cli(["train", "--epochs", "4", "--seed", "2", "--out", half,
                 "--resume", os.path.join(half, "last.ckpt")] + TINY_ARGS)
        with open(os.path.join(full, "last.ckpt"), "rb") as fa, \
                open(os.path.join(half, "last.ckpt"), "rb") as fb:
            assert fa.read() == fb.read()


class TestEval:
    @pytest.fixture
    def trained(self, tmp_path):
        out = str(tmp_path / "run")
        run_cli(["train", "--epochs", "1", "--seed", "1",
                 "--out", out] + TINY_ARGS)
        return out

    def test_csv_schema(self, trained, tmp_path):
        code = run_cli(["eval", "--checkpoint",
                        os.path.join(trained, "last.ckpt"), "--seed", "1",
                        "--out", trained] + TINY_ARGS)
        assert code == 0
        lines = open(os.path.join(trained, "eval.csv")).read().splitlines()
        assert lines[0] == "class,AP50,AP50-90"
        assert lines[-1].startswith("mean,")

    def test_digest_mismatch_exits_1(self, trained, capsys):
        code = run_cli(["eval", "--checkpoint",
                        os.path.join(trained, "last.ckpt"),
                        "--seed", "1"])
        assert code == 1
        assert "digest" in capsys.readouterr().err

    def test_empty_dataset_exits_1(self, trained, tmp_path):
        empty = str(tmp_path / "empty")
        os.makedirs(empty)
        code = run_cli(["eval", "--checkpoint",
                        os.path.join(trained, "last.ckpt"), "--seed", "1",
                        "--data", empty] + TINY_ARGS)
        assert code == 1


class TestRender:
    def test_untrained_high_threshold_draws_nothing(self, tmp_path):
        ds = str(tmp_path / "ds")
        run_cli(["gen-data", "--out", ds, "--count", "1", "--seed", "4"])
        src = os.path.join(ds, "img_00000.ppm")
        out = str(tmp_path / "overlay.ppm")
        code = run_cli(["render", "--image", src, "--out", out,
                        "--threshold", "0.99"] + TINY_ARGS)
        assert code == 0
        original = read_ppm(src)
        rendered = read_ppm(out)
        assert rendered.shape == original.shape
        np.testing.assert_array_equal(rendered, original)
        assert open(str(tmp_path / "overlay.txt")).read() == ""

    def test_box_pixels_match_decoded_coords(self, tmp_path):
        ds = str(tmp_path / "ds")
        run_cli(["gen-data", "--out", ds, "--count", "1", "--seed", "4"])
        src = os.path.join(ds, "img_00000.ppm")
        out = str(tmp_path / "overlay.ppm")
        code = run_cli(["render", "--image", src, "--out", out,
                        "--threshold", "0.0001"] + TINY_ARGS)
        assert code == 0
        sidecar = open(str(tmp_path / "overlay.txt")).read().splitlines()
        if not sidecar:
            pytest.skip("untrained model produced no boxes at threshold")
        original = read_ppm(src)
        rendered = read_ppm(out)
        changed = np.argwhere(np.any(rendered != original, axis=0))
        assert len(changed)
        ys, xs = changed[:, 0], changed[:, 1]
        h = w = original.shape[1]
        boxes = [[float(v) for v in line.split()[2:]] for line in sidecar]
        x0 = min(int(round((cx - bw / 2) * w)) for cx, cy, bw, bh in boxes)
        x1 = max(int(round((cx + bw / 2) * w)) for cx, cy, bw, bh in boxes)
        y0 = min(int(round((cy - bh / 2) * h)) for cx, cy, bw, bh in boxes)
        y1 = max(int(round((cy + bh / 2) * h)) for cx, cy, bw, bh in boxes)
        assert xs.min() >= max(0, x0 - 1) and xs.max() <= min(w - 1, x1 + 1)
        assert ys.min() >= max(0, y0 - 1) and ys.max() <= min(h - 1, y1 + 1)

    def test_unreadable_image_exits_1(self, tmp_path):
        code = run_cli(["render", "--image", str(tmp_path / "missing.ppm"),
                        "--out", str(tmp_path / "o.ppm")] + TINY_ARGS)
        assert code == 1


class TestBench:
    def test_reports_costs(self, capsys):
        code = run_cli(["bench"] + TINY_ARGS[:10])
        assert code == 0
        text = capsys.readouterr().out
        assert "params" in text and "flops" in text and "latency" in text
        assert "baseline" in text and "full" in text and "delta" in text


class TestGradcheckCommand:
    def test_corrupted_gradient_is_caught(self, monkeypatch, capsys):
        real_sum = cli.tensor_sum

        def detached_sum(t):
            if isinstance(t, Tensor) and t.data.ndim == 3:
                return real_sum(Tensor(t.data.copy()))
            return real_sum(t)
        monkeypatch.setattr(cli, "tensor_sum", detached_sum)
        code = run_cli(["gradcheck", "--seed", "0"])
        assert code == 2
        assert "failed" in capsys.readouterr().err


class TestAblateQuick:
    def test_quick_sweep_emits_table(self, tmp_path, capsys):
        out = str(tmp_path / "ab")
        code = run_cli([
            "ablate", "--epochs", "1", "--seeds", "1", "--out", out,
            "--set", "run.train_scenes=8", "--set", "run.val_scenes=4",
            "--set", "model.stem_channels=4",
            "--set", "model.channels=8,16,16,16",
            "--set", "model.depths=3,3,3,3",
            "--set", "fusion.channels=16", "--set", "fusion.num_heads=2",
        ])
        assert code == 0
        lines = open(os.path.join(out, "ablation.csv")).read().splitlines()
        assert lines[0] == ("setting,fmsa,fus,fds,params,precision,recall,"
                            "map50,map50_90")
        assert len(lines) == 6
        md = open(os.path.join(out, "ablation.md")).read()
        assert md.count("|") > 20
        params = [int(line.split(",")[4]) for line in lines[1:]]
        for n in params:
            assert abs(n - params[0]) / params[0] <= 0.05
