"""Config parsing/serialization and the command-line surface."""

import os
import subprocess
import sys

import numpy as np
import pytest

from devae.cli import main
from devae.config import RunConfig, parse_kv_text
from devae.data import load_dataset
from devae.errors import ConfigurationError


class TestRunConfig:
    def test_defaults_validate(self):
        cfg = RunConfig().validate()
        assert cfg.betas == (1.0, 40.0)
        assert cfg.batch_size == 64
        assert cfg.iterations == 20_000
        assert cfg.eval_every == 500
        assert cfg.lr == 1e-4

    def test_text_round_trip(self):
        cfg = RunConfig(
            variant="multi-space",
            spaces=3,
            betas=(1.0, 10.0, 40.0),
            arch_widths=(64, 32),
            lr=3e-4,
            shared_noise=True,
            seed=7,
        )
        text = cfg.to_text()
        again = RunConfig.from_text(text)
        assert again.to_text() == text
        assert again.betas == cfg.betas
        assert again.shared_noise is True

    def test_out_dir_excluded_from_serialization(self):
        cfg = RunConfig(out_dir="/somewhere/else")
        assert "out_dir" not in cfg.to_text()

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig.from_text("no_such_key = 1\n")

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigurationError):
            parse_kv_text("this is not a key value line")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig.from_text("iterations = soon\n")

    def test_beta_count_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig(spaces=2, betas=(1.0, 10.0, 40.0)).validate()

    def test_decreasing_betas_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig(spaces=2, betas=(40.0, 1.0)).validate()

    def test_comments_and_blanks_ignored(self):
        cfg = RunConfig.from_text("# comment\n\nseed = 5\nspaces = 1\nbetas = 6\nvariant = beta-vae\n")
        assert cfg.seed == 5 and cfg.betas == (6.0,)


def run_cli(args):
    return main(args)


class TestCli:
    def test_gen_data_writes_loadable_file(self, tmp_path):
        out = str(tmp_path / "toy.sprites")
        code = run_cli(
            ["gen-data", "--spec", "pos_x:4,pos_y:4,scale:2", "--resolution", "16",
             "--seed", "0", "--out", out]
        )
        assert code == 0
        ds = load_dataset(out)
        assert len(ds) == 32

    def test_gen_data_bad_spec_exits_2(self, tmp_path):
        code = run_cli(
            ["gen-data", "--spec", "hue:4", "--seed", "0", "--out", str(tmp_path / "x")]
        )
        assert code == 2

    def test_train_smoke_and_artifacts(self, tmp_path):
        out = str(tmp_path / "run")
        code = run_cli(
            ["train", "--seed", "3", "--out", out,
             "--data-spec", "pos_x:4,pos_y:4,scale:2",
             "--iterations", "40", "--eval-every", "20", "--batch-size", "16",
             "--arch-widths", "32", "--latent-dim", "4",
             "--track-samples", "32", "--eval-samples", "64",
             "--recon-samples", "32", "--fv-votes", "10"]
        )
        assert code == 0
        for name in ("config.txt", "losses.csv", "metrics.csv", "model.ckpt", "report.json"):
            assert os.path.exists(os.path.join(out, name)), name

    def test_train_invalid_variant_exits_2(self, tmp_path):
        code = run_cli(
            ["train", "--seed", "0", "--out", str(tmp_path / "r"), "--variant", "flowvae"]
        )
        assert code == 2

    def test_train_missing_dataset_file_exits_3(self, tmp_path):
        code = run_cli(
            ["train", "--seed", "0", "--out", str(tmp_path / "r"),
             "--dataset", str(tmp_path / "missing.sprites")]
        )
        assert code == 3

    def test_sample_n_zero_succeeds_with_no_output(self, tmp_path, trained_tiny_run):
        out = str(tmp_path / "samples")
        code = run_cli(
            ["sample", "--checkpoint", trained_tiny_run["checkpoint"],
             "--n", "0", "--seed", "1", "--out", out]
        )
        assert code == 0
        assert os.listdir(out) == []

    def test_sample_emits_identical_files_across_runs(self, tmp_path, trained_tiny_run):
        out_a = str(tmp_path / "a")
        out_b = str(tmp_path / "b")
        for out in (out_a, out_b):
            code = run_cli(
                ["sample", "--checkpoint", trained_tiny_run["checkpoint"],
                 "--n", "3", "--seed", "9", "--out", out]
            )
            assert code == 0
        for name in sorted(os.listdir(out_a)):
            a = open(os.path.join(out_a, name), "rb").read()
            b = open(os.path.join(out_b, name), "rb").read()
            assert a == b

    def test_traverse_grid_layout(self, tmp_path, trained_tiny_run):
        out = str(tmp_path / "trav")
        code = run_cli(
            ["traverse", "--checkpoint", trained_tiny_run["checkpoint"],
             "--seed", "2", "--out", out, "--steps", "5", "--top-k", "2", "--seeds", "3"]
        )
        assert code == 0
        files = sorted(os.listdir(out))
        assert len(files) == 3  # one grid per seed image
        with open(os.path.join(out, files[0]), "rb") as fh:
            magic = fh.readline().strip()
            assert magic == b"P5"
            line = fh.readline()
            while line.startswith(b"#"):
                line = fh.readline()
            width, height = map(int, line.split())
        # rows = top_k dims, cols = steps
        assert (width, height) == (5 * 16, 2 * 16)

    def test_eval_writes_report(self, tmp_path, trained_tiny_run):
        out = str(tmp_path / "report.json")
        code = run_cli(
            ["eval", "--checkpoint", trained_tiny_run["checkpoint"],
             "--seed", "4", "--out", out]
        )
        assert code == 0
        from devae.metrics import MetricsReport

        report = MetricsReport.from_json(open(out).read())
        assert len(report.spaces) == 2

    def test_entry_point_runs_as_module(self):
        proc = subprocess.run(
            [sys.executable, "-m", "devae.cli", "--help"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert "gen-data" in proc.stdout


class TestPgm:
    def test_probabilities_map_to_full_range(self):
        from devae.images import probabilities_to_gray

        gray = probabilities_to_gray(np.array([0.0, 0.5, 1.0]))
        assert gray.tolist() == [0, 128, 255]

    def test_tile_layout(self):
        from devae.images import tile

        images = np.arange(2 * 3 * 4 * 4).reshape(2, 3, 4, 4)
        sheet = tile(images)
        assert sheet.shape == (8, 12)
        assert np.array_equal(sheet[0:4, 0:4], images[0, 0])
        assert np.array_equal(sheet[4:8, 8:12], images[1, 2])
