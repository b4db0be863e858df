"""Metrics, the cross-validation driver, the transfer-rate sweep, and emission."""

import csv
import json
import math

import numpy as np
import pytest

from dualrec.dualmodel import TrainConfig, prepare_domain, score_batch, train_domain_autoencoders, train_single
from dualrec.evaluate import (
    alpha_sweep,
    mae,
    precision_recall_at_k,
    report_summary,
    rmse,
    run_cv,
    write_report_csv,
    write_summary_json,
    write_sweep_csv,
    write_trace_csv,
)
from dualrec.features import kfold, synth_pair
from dualrec.numeric import make_rng


class TestPointMetrics:
    def test_identical_lists_score_zero(self):
        assert rmse([0.2, 0.9], [0.2, 0.9]) == 0.0
        assert mae([0.2, 0.9], [0.2, 0.9]) == 0.0

    def test_hand_arithmetic(self):
        assert rmse([1.0, 0.0], [0.0, 0.0]) == pytest.approx(math.sqrt(0.5), abs=1e-15)
        assert mae([1.0, 0.0], [0.0, 0.0]) == pytest.approx(0.5, abs=1e-15)

    def test_rmse_matches_naive_loop(self):
        rng = make_rng(1)
        p, t = rng.random(50), rng.random(50)
        total = 0.0
        for pi, ti in zip(p, t):
            total += (pi - ti) ** 2
        assert rmse(p, t) == pytest.approx(math.sqrt(total / 50), rel=1e-12)

    def test_rmse_dominates_mae(self):
        rng = make_rng(2)
        for _ in range(100):
            n = int(rng.integers(1, 30))
            p, t = rng.random(n), rng.random(n)
            assert rmse(p, t) >= mae(p, t) - 1e-15

    def test_permutation_invariance(self):
        rng = make_rng(3)
        p, t = rng.random(20), rng.random(20)
        perm = rng.permutation(20)
        assert rmse(p[perm], t[perm]) == pytest.approx(rmse(p, t), rel=1e-12)
        assert mae(p[perm], t[perm]) == pytest.approx(mae(p, t), rel=1e-12)

    def test_empty_and_mismatched_inputs_rejected(self):
        with pytest.raises(ValueError):
            rmse([], [])
        with pytest.raises(ValueError):
            mae([1.0], [1.0, 2.0])


class TestPrecisionRecallAtK:
    def test_all_relevant_items(self):
        # 7 items, all relevant: precision 1 regardless of ranking, recall 5/7
        pred = [0.9, 0.1, 0.5, 0.3, 0.8, 0.2, 0.6]
        truth = [0.9] * 7
        pr = precision_recall_at_k(["u"] * 7, pred, truth, k=5, tau=0.5)
        assert pr.precision == 1.0
        assert pr.recall == pytest.approx(5 / 7)
        assert pr.recall_defined

    def test_no_relevant_items_flags_undefined_recall(self):
        pr = precision_recall_at_k(["u", "u", "v"], [0.9, 0.3, 0.8], [0.1, 0.2, 0.0], k=5, tau=0.5)
        assert pr.precision == 0.0
        assert not pr.recall_defined
        assert math.isnan(pr.recall)
        assert pr.users_skipped_for_recall == 2

    def test_perfect_ranking_hand_enumeration(self):
        # 6 items, 3 relevant ranked on top, k=5: precision 3/5, recall 1
        pred = [0.9, 0.8, 0.7, 0.3, 0.2, 0.1]
        truth = [1.0, 0.9, 0.8, 0.0, 0.1, 0.2]
        pr = precision_recall_at_k(["u"] * 6, pred, truth, k=5, tau=0.5)
        assert pr.precision == pytest.approx(3 / 5)
        assert pr.recall == 1.0

    def test_user_averaging(self):
        # user u: 1 item, relevant, recommended -> p=1, r=1
        # user v: 2 items, 1 relevant ranked last with k=1 -> p=0, r=0
        ids = ["u", "v", "v"]
        pred = [0.9, 0.9, 0.1]
        truth = [1.0, 0.0, 1.0]
        pr = precision_recall_at_k(ids, pred, truth, k=1, tau=0.5)
        assert pr.precision == pytest.approx(0.5)
        assert pr.recall == pytest.approx(0.5)
        assert pr.users_scored == 2

    def test_fewer_items_than_k_divides_by_m(self):
        pr = precision_recall_at_k(["u", "u"], [0.9, 0.1], [1.0, 1.0], k=5, tau=0.5)
        assert pr.precision == 1.0  # 2 hits / min(5, 2)

    def test_invalid_tau_and_k_rejected(self):
        with pytest.raises(ValueError):
            precision_recall_at_k(["u"], [0.5], [0.5], tau=0.0)
        with pytest.raises(ValueError):
            precision_recall_at_k(["u"], [0.5], [0.5], k=0)


@pytest.fixture(scope="module")
def small_pair():
    return synth_pair(n_users=40, n_items_per_domain=15, latent_dim=4,
                      cross_correlation=0.8, noise=0.05, density=0.4, seed=2)


def small_cfg(**overrides):
    base = dict(alpha=0.03, embed_dim=4, epochs=2, tol=0.0, lr_a=0.1, lr_b=0.1,
                hidden=(8, 4), ae_epochs=120, ae_lr=0.05)
    base.update(overrides)
    return TrainConfig(**base)


class TestRunCv:
    def test_reports_echo_config(self, small_pair):
        ds_a, ds_b, _ = small_pair
        cfg = small_cfg()
        rep_a, rep_b = run_cv(ds_a, ds_b, cfg, k=2, seed=0)
        for rep in (rep_a, rep_b):
            assert rep.config["alpha"] == cfg.alpha
            assert rep.config["embed_dim"] == cfg.embed_dim
            assert rep.config["folds"] == 2
            assert rep.config["seed"] == 0
        assert rep_a.domain == "a" and rep_b.domain == "b"
        assert len(rep_a.per_fold) == 2

    def test_deterministic_per_seed(self, small_pair):
        ds_a, ds_b, _ = small_pair
        r1 = run_cv(ds_a, ds_b, small_cfg(), k=2, seed=3)
        r2 = run_cv(ds_a, ds_b, small_cfg(), k=2, seed=3)
        assert r1 == r2

    def test_fold_metrics_average_to_the_report(self, small_pair):
        ds_a, ds_b, _ = small_pair
        rep_a, _ = run_cv(ds_a, ds_b, small_cfg(), k=2, seed=0)
        assert rep_a.rmse == pytest.approx(np.mean([f.rmse for f in rep_a.per_fold]), rel=1e-12)
        assert rep_a.mae == pytest.approx(np.mean([f.mae for f in rep_a.per_fold]), rel=1e-12)
        for f in rep_a.per_fold:
            assert f.rmse >= f.mae >= 0.0
            assert 0.0 <= f.precision_at_k <= 1.0

    def test_alpha_zero_equals_independent_single_domain_runs(self, small_pair):
        # with no transfer the dual run must reproduce plain per-domain
        # training; mirror the fold protocol with the single-domain trainer
        ds_a, ds_b, _ = small_pair
        cfg = small_cfg(alpha=0.0)
        k, seed = 2, 0
        rep_a, rep_b = run_cv(ds_a, ds_b, cfg, k=k, seed=seed)
        for ds, rep, domain_index in ((ds_a, rep_a, 0), (ds_b, rep_b, 1)):
            ae_u, ae_i = train_domain_autoencoders(ds, cfg, seed)
            split = kfold(ds, k, seed)
            fold_rmses = []
            for fold in range(k):
                tr, te = split.fold_indices(fold)
                arr_tr = prepare_domain(ds, ae_u, ae_i, tr)
                model, _ = train_single(
                    arr_tr, domain_index, embed_dim=cfg.embed_dim, seed=seed * 10_000 + fold,
                    epochs=cfg.epochs, tol=cfg.tol,
                    lr=cfg.lr_a if domain_index == 0 else cfg.lr_b,
                    batch_size=cfg.batch_size, hidden=cfg.hidden,
                )
                arr_te = prepare_domain(ds, ae_u, ae_i, te)
                preds = score_batch(model, arr_te.user_emb, arr_te.item_emb)
                fold_rmses.append(rmse(preds, arr_te.ratings))
            assert rep.rmse == pytest.approx(np.mean(fold_rmses), abs=1e-9)


class TestAlphaSweep:
    def test_zero_point_matches_baseline_run_bitwise(self, small_pair):
        ds_a, ds_b, _ = small_pair
        cfg = small_cfg()
        points = alpha_sweep(ds_a, ds_b, [0.0, 0.03], cfg, k=2, seed=1)
        base_a, base_b = run_cv(ds_a, ds_b, small_cfg(alpha=0.0), k=2, seed=1)
        assert points[0].alpha == 0.0
        assert points[0].report_a == base_a
        assert points[0].report_b == base_b

    def test_points_follow_requested_order(self, small_pair):
        ds_a, ds_b, _ = small_pair
        points = alpha_sweep(ds_a, ds_b, [0.05, 0.0], small_cfg(epochs=1), k=2, seed=0)
        assert [pt.alpha for pt in points] == [0.05, 0.0]

    def test_alphas_outside_range_rejected(self, small_pair):
        ds_a, ds_b, _ = small_pair
        with pytest.raises(ValueError):
            alpha_sweep(ds_a, ds_b, [0.0, 0.5], small_cfg(), k=2, seed=0)


@pytest.fixture(scope="module")
def reports(small_pair):
    ds_a, ds_b, _ = small_pair
    return run_cv(ds_a, ds_b, small_cfg(), k=2, seed=0)


class TestEmission:

    def test_report_csv_round_trips(self, reports, tmp_path):
        write_report_csv(tmp_path / "report.csv", list(reports))
        with open(tmp_path / "report.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4  # 2 domains x 2 folds
        by_key = {(r["domain"], int(r["fold"])): r for r in rows}
        for rep in reports:
            for f in rep.per_fold:
                row = by_key[(rep.domain, f.fold)]
                assert float(row["rmse"]) == f.rmse
                assert float(row["mae"]) == f.mae

    def test_report_csv_is_byte_stable(self, reports, tmp_path):
        write_report_csv(tmp_path / "r1.csv", list(reports))
        write_report_csv(tmp_path / "r2.csv", list(reports))
        assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()

    def test_sweep_csv_layout(self, small_pair, tmp_path):
        ds_a, ds_b, _ = small_pair
        points = alpha_sweep(ds_a, ds_b, [0.0, 0.03], small_cfg(epochs=1), k=2, seed=0)
        write_sweep_csv(tmp_path / "sweep.csv", points)
        with open(tmp_path / "sweep.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4  # 2 alphas x 2 domains
        assert [r["alpha"] for r in rows] == ["0.0", "0.0", "0.03", "0.03"]
        assert float(rows[2]["rmse"]) == points[1].report_a.rmse

    def test_summary_json_round_trips(self, reports, tmp_path):
        summary = report_summary(list(reports))
        write_summary_json(tmp_path / "summary.json", summary)
        with open(tmp_path / "summary.json", encoding="utf-8") as fh:
            back = json.load(fh)
        assert back["domains"]["a"]["rmse"] == reports[0].rmse
        assert back["config"]["alpha"] == reports[0].config["alpha"]

    def test_trace_csv(self, tmp_path):
        write_trace_csv(tmp_path / "t.csv", ["epoch", "loss"], [(0, 0.5), (1, 0.25)])
        with open(tmp_path / "t.csv", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "loss"]
        assert rows[1] == ["0", "0.5"]
        assert rows[2] == ["1", "0.25"]
