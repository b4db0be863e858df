"""End-to-end command-line pipeline tests on a miniature dataset."""

import csv
import json

import numpy as np
import pytest

from dualrec.cli import ExperimentConfig, load_config, main, save_config, validate_config

SMALL = {
    "n_users": 30,
    "n_items": 12,
    "latent_dim": 4,
    "embed_dim": 4,
    "epochs": 2,
    "ae_epochs": 100,
    "folds": 2,
    "density": 0.4,
    "sigma": 0.05,
    "alphas": "0,0.03",
}


def write_small_config(path, **extra):
    cfg = dict(SMALL)
    cfg.update(extra)
    path.write_text("".join(f"{k}={v}\n" for k, v in cfg.items()), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """Shared synth output the downstream commands reuse."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = write_small_config(root / "config.txt")
    data = root / "data"
    assert main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(data)]) == 0
    return root, cfg, data


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        p = tmp_path / "empty.txt"
        p.write_text("", encoding="utf-8")
        assert load_config(p) == ExperimentConfig()

    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.alpha == 0.03
        assert cfg.embed_dim == 8
        assert cfg.epochs == 100
        assert cfg.folds == 5

    def test_round_trip_is_exact(self, tmp_path):
        cfg = ExperimentConfig(alpha=0.07, epochs=42, alphas="0,0.1", sigma=0.125)
        save_config(cfg, tmp_path / "c.txt")
        assert load_config(tmp_path / "c.txt") == cfg

    def test_unknown_key_rejected_with_location(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("alhpa=0.03\n", encoding="utf-8")
        with pytest.raises(ValueError, match="alhpa"):
            load_config(p)

    def test_type_mismatch_rejected(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("epochs=ten\n", encoding="utf-8")
        with pytest.raises(ValueError, match="epochs"):
            load_config(p)

    def test_alpha_bound_named_in_error(self):
        with pytest.raises(ValueError, match=r"\[0, 0.5\)"):
            validate_config(ExperimentConfig(alpha=0.6))

    def test_invalid_config_exits_nonzero(self, tmp_path, capsys):
        p = tmp_path / "c.txt"
        p.write_text("alpha=0.6\n", encoding="utf-8")
        code = main(["eval", "--config", str(p), "--data", str(tmp_path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "error:" in capsys.readouterr().err


class TestSynth:
    def test_writes_domain_triples_truth_and_config_echo(self, pipeline_dir):
        _, _, data = pipeline_dir
        for name in ("a", "b"):
            for stem in ("interactions", "user_features", "item_features"):
                assert (data / f"{name}_{stem}.csv").exists()
            for stem in ("user_schema", "item_schema"):
                assert (data / f"{name}_{stem}.txt").exists()
        truth = np.load(data / "truth.npz")
        assert truth["q"].shape == (4, 4)
        assert truth["user_latents_a"].shape == (30, 4)
        echo = load_config(data / "config.txt")
        assert echo.seed == 7
        assert echo.n_users == 30

    def test_rerun_is_byte_identical(self, pipeline_dir, tmp_path):
        _, cfg, data = pipeline_dir
        again = tmp_path / "again"
        assert main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(again)]) == 0
        for f in ("a_interactions.csv", "b_interactions.csv", "a_user_features.csv", "config.txt"):
            assert (again / f).read_bytes() == (data / f).read_bytes()

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = write_small_config(tmp_path / "c.txt")
        out = tmp_path / "synth"
        assert main(["synth", "--config", str(cfg), "--seed", "1", "--n-users", "9", "--out", str(out)]) == 0
        assert load_config(out / "config.txt").n_users == 9


class TestTrainEval:
    def test_train_emits_model_and_monotonish_trace(self, pipeline_dir, tmp_path):
        _, cfg, data = pipeline_dir
        out = tmp_path / "train"
        assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(out)]) == 0
        assert (out / "model.npz").exists()
        with open(out / "loss_trace.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3  # pre-training point + 2 epochs
        losses_a = [float(r["loss_a"]) for r in rows]
        assert all(np.isfinite(losses_a))
        assert losses_a[-1] < losses_a[0]

    def test_eval_report_parses_and_is_rerun_stable(self, pipeline_dir, tmp_path):
        _, cfg, data = pipeline_dir
        out1, out2 = tmp_path / "e1", tmp_path / "e2"
        for out in (out1, out2):
            assert main(["eval", "--config", str(cfg), "--data", str(data), "--out", str(out)]) == 0
        with open(out1 / "report.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["domain"] for r in rows} == {"a", "b"}
        assert len(rows) == 4  # 2 domains x 2 folds
        assert all(float(r["rmse"]) >= float(r["mae"]) for r in rows)
        summary = json.loads((out1 / "summary.json").read_text(encoding="utf-8"))
        assert set(summary["domains"]) == {"a", "b"}
        assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()
        assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()

    def test_eval_on_missing_data_dir_exits_nonzero(self, tmp_path, capsys):
        code = main(["eval", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "missing dataset file" in capsys.readouterr().err

    def test_alpha_sweep_covers_requested_grid(self, pipeline_dir, tmp_path):
        _, cfg, data = pipeline_dir
        out = tmp_path / "sweep"
        assert main(["alpha-sweep", "--config", str(cfg), "--data", str(data), "--out", str(out)]) == 0
        with open(out / "sweep.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["alpha"] for r in rows] == ["0.0", "0.0", "0.03", "0.03"]
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["alphas"] == [0.0, 0.03]


class TestNmfLab:
    def test_trace_is_monotone_and_summary_coherent(self, tmp_path):
        out = tmp_path / "nmf"
        assert main(["nmf-lab", "--alpha", "0.1", "--seed", "1", "--iters", "400", "--out", str(out)]) == 0
        with open(out / "nmf_trace.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        losses = np.array([float(r["loss"]) for r in rows])
        assert np.all(np.diff(losses) <= 1e-10)
        summary = json.loads((out / "nmf_summary.json").read_text(encoding="utf-8"))
        assert summary["iterations"] == len(losses) - 1
        assert summary["final_traced_loss"] == losses[-1]
        assert all(summary["conditions_after"].values())

    def test_rerun_is_byte_identical(self, tmp_path):
        outs = [tmp_path / "n1", tmp_path / "n2"]
        for out in outs:
            assert main(["nmf-lab", "--alpha", "0.1", "--seed", "1", "--iters", "200", "--out", str(out)]) == 0
        assert (outs[0] / "nmf_trace.csv").read_bytes() == (outs[1] / "nmf_trace.csv").read_bytes()
        assert (outs[0] / "nmf_summary.json").read_bytes() == (outs[1] / "nmf_summary.json").read_bytes()

    def test_invalid_rank_exits_nonzero(self, tmp_path, capsys):
        code = main(["nmf-lab", "--rank", "99", "--out", str(tmp_path / "o")])
        assert code == 2
        assert "nmf_rank" in capsys.readouterr().err
