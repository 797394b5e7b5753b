"""CLI subcommands, exit codes, file outputs, byte-level determinism."""

import numpy as np
import pytest

from spixel.cli import main
from spixel.data import gen_synthetic, load_dataset, save_dataset
from spixel.imageio import read_pgm16, read_ppm, write_ppm

from oracles import bfs_components_oracle

DESK_CFG_TEXT = """
# tiny desk config for CLI tests
s = 4
widths = 6,8
d = 4
compress_mid = 4
k = 3
lr = 1e-3
batch = 2
total_iters = 4
lr_halving_period = 4
stage1_iters = 3
crop = 16
seed = 1
size = 16
regions = 3
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "desk.cfg"
    cfg.write_text(DESK_CFG_TEXT, encoding="utf-8")
    code = main([
        "train", "--config", str(cfg), "--synthetic", "6",
        "--out", str(root / "m.ckpt"), "--seed", "1",
    ])
    assert code == 0
    save_dataset(root / "data", gen_synthetic(3, 16, 3, rng=4))
    img = gen_synthetic(1, 16, 3, rng=9)[0].image
    write_ppm(root / "input.ppm", img)
    return root


class TestTrainCommand:
    def test_outputs_exist(self, workdir):
        assert (workdir / "m.ckpt").exists()
        assert (workdir / "loss.csv").exists()
        lines = (workdir / "loss.csv").read_text().strip().split("\n")
        assert lines[0] == "iter,loss,ce,pos,bpl"
        assert len(lines) == 5

    def test_missing_config_is_user_error(self, tmp_path):
        code = main([
            "train", "--config", str(tmp_path / "absent.cfg"), "--synthetic", "2",
            "--out", str(tmp_path / "x.ckpt"),
        ])
        assert code == 1

    def test_unknown_config_key_is_user_error(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus_key = 3\n", encoding="utf-8")
        code = main([
            "train", "--config", str(cfg), "--synthetic", "2",
            "--out", str(tmp_path / "x.ckpt"),
        ])
        assert code == 1

    def test_rerun_identical_loss_csv(self, workdir, tmp_path):
        cfg = tmp_path / "desk.cfg"
        cfg.write_text(DESK_CFG_TEXT, encoding="utf-8")
        assert main([
            "train", "--config", str(cfg), "--synthetic", "6",
            "--out", str(tmp_path / "m.ckpt"), "--seed", "1",
        ]) == 0
        assert (tmp_path / "loss.csv").read_bytes() == (workdir / "loss.csv").read_bytes()

    def test_unknown_flag_rejected(self, workdir, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--bogus"])
        assert exc.value.code == 1


class TestSegmentCommand:
    def test_outputs_and_oracle_connectivity(self, workdir):
        code = main([
            "segment", "--ckpt", str(workdir / "m.ckpt"),
            "--image", str(workdir / "input.ppm"),
            "--n-superpixels", "16", "--out", str(workdir / "seg"),
        ])
        assert code == 0
        ids = read_pgm16(workdir / "seg.labels.pgm")
        assert ids.shape == (16, 16)
        comp, ncomp = bfs_components_oracle(ids.astype(np.int64))
        assert ncomp == len(np.unique(ids))  # every region 4-connected
        overlay = read_ppm(workdir / "seg.overlay.ppm")
        assert overlay.shape == (16, 16, 3)
        # boundary pixels are painted pure red
        boundary = np.zeros(ids.shape, bool)
        boundary[:-1] |= ids[:-1] != ids[1:]
        boundary[1:] |= ids[1:] != ids[:-1]
        boundary[:, :-1] |= ids[:, :-1] != ids[:, 1:]
        boundary[:, 1:] |= ids[:, 1:] != ids[:, :-1]
        if boundary.any():
            np.testing.assert_array_equal(
                overlay[boundary], np.broadcast_to([255, 0, 0], (boundary.sum(), 3))
            )

    def test_rerun_byte_identical(self, workdir, tmp_path):
        args = [
            "segment", "--ckpt", str(workdir / "m.ckpt"),
            "--image", str(workdir / "input.ppm"), "--n-superpixels", "16",
        ]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a.labels.pgm").read_bytes() == (tmp_path / "b.labels.pgm").read_bytes()
        assert (tmp_path / "a.overlay.ppm").read_bytes() == (tmp_path / "b.overlay.ppm").read_bytes()

    def test_corrupt_checkpoint_is_user_error(self, workdir, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"garbage")
        code = main([
            "segment", "--ckpt", str(bad), "--image", str(workdir / "input.ppm"),
            "--out", str(tmp_path / "x"),
        ])
        assert code == 1


class TestEvalCommand:
    def test_csv_and_svgs(self, workdir):
        out = workdir / "eval"
        code = main([
            "eval", "--ckpt", str(workdir / "m.ckpt"), "--data", str(workdir / "data"),
            "--counts", "16", "--out", str(out),
        ])
        assert code == 0
        lines = (out / "metrics.csv").read_text().strip().split("\n")
        assert lines[0] == "n_superpixels,asa,br,bp,runtime_ms"
        assert len(lines) == 2
        asa_svg = (out / "asa.svg").read_text()
        assert asa_svg.startswith("<svg") and "polyline" in asa_svg
        assert (out / "br_bp.svg").read_text().count("polyline") == 2

    def test_csv_matches_library_calls(self, workdir):
        from spixel.checkpoint import load_checkpoint
        from spixel.cli import segment_pipeline
        from spixel.metrics import asa as asa_fn
        from spixel.metrics import boundary_metrics

        out = workdir / "eval"
        line = (out / "metrics.csv").read_text().strip().split("\n")[1].split(",")
        model = load_checkpoint(workdir / "m.ckpt").build_model()
        dataset = load_dataset(workdir / "data")
        asa_vals, br_vals, bp_vals = [], [], []
        for s in dataset:
            seg = segment_pipeline(model, s.image, 16)
            asa_vals.append(asa_fn(seg, s.labels))
            br, bp = boundary_metrics(seg, s.labels, 2)
            br_vals.append(br)
            bp_vals.append(bp)
        assert float(line[1]) == pytest.approx(np.mean(asa_vals), abs=1e-6)
        assert float(line[2]) == pytest.approx(np.mean(br_vals), abs=1e-6)
        assert float(line[3]) == pytest.approx(np.mean(bp_vals), abs=1e-6)

    def test_rerun_identical_modulo_runtime(self, workdir, tmp_path):
        args = [
            "eval", "--ckpt", str(workdir / "m.ckpt"), "--data", str(workdir / "data"),
            "--counts", "16",
        ]
        assert main(args + ["--out", str(tmp_path / "e1")]) == 0
        assert main(args + ["--out", str(tmp_path / "e2")]) == 0

        def strip_runtime(path):
            return ["," .join(line.split(",")[:4]) for line in path.read_text().splitlines()]

        assert strip_runtime(tmp_path / "e1" / "metrics.csv") == strip_runtime(
            tmp_path / "e2" / "metrics.csv"
        )
        assert (tmp_path / "e1" / "asa.svg").read_bytes() == (tmp_path / "e2" / "asa.svg").read_bytes()
        assert (tmp_path / "e1" / "br_bp.svg").read_bytes() == (tmp_path / "e2" / "br_bp.svg").read_bytes()

    def test_empty_dataset_is_user_error(self, workdir, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main([
            "eval", "--ckpt", str(workdir / "m.ckpt"), "--data", str(empty),
            "--counts", "16", "--out", str(tmp_path / "out"),
        ])
        assert code == 1


class TestProposalsCommand:
    def test_threshold_one_keeps_superpixels(self, workdir, capsys):
        code = main([
            "proposals", "--ckpt", str(workdir / "m.ckpt"),
            "--image", str(workdir / "input.ppm"), "--threshold", "1.0",
            "--out", str(workdir / "prop1"),
        ])
        assert code == 0
        out = capsys.readouterr().out
        values = dict(line.split("=") for line in out.strip().split("\n"))
        assert values["regions"] == values["superpixels"]

    def test_low_threshold_merges(self, workdir, capsys):
        code = main([
            "proposals", "--ckpt", str(workdir / "m.ckpt"),
            "--image", str(workdir / "input.ppm"), "--threshold", "0.05",
            "--out", str(workdir / "prop0"),
        ])
        assert code == 0
        out = capsys.readouterr().out
        values = dict(line.split("=") for line in out.strip().split("\n"))
        assert int(values["regions"]) <= int(values["superpixels"])


class TestGendataCommand:
    def test_round_trip(self, tmp_path, capsys):
        code = main([
            "gendata", "--n", "3", "--size", "16", "--out", str(tmp_path / "d"),
            "--regions", "3", "--seed", "2",
        ])
        assert code == 0
        dataset = load_dataset(tmp_path / "d")
        assert len(dataset) == 3
        for s in dataset:
            assert s.image.shape == (16, 16, 3)


class TestGradcheckCommand:
    def test_single_scope_passes(self, capsys):
        code = main(["gradcheck", "--scope", "leaky_relu"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("leaky_relu ")

    def test_unknown_scope_is_user_error(self):
        assert main(["gradcheck", "--scope", "nonsense"]) == 1
