"""Acceptance suite: one test per criterion, each reported as a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also repeated in the terminal summary.
"""

import json
import math
import re
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS, friedman1_matrix
from oracles import brute_interactions, central_difference, exhaustive_stump
from gbaffinity.boost import TooFewRowsWarning, TrainConfig, build_bins, fit_tree, load_model, negative_gradient, save_model, train
from gbaffinity.cli import main
from gbaffinity.evaluation import METRICS, MetricsReport, aggregate_runs, mae, pearson_r, rmse, sd_metric
from gbaffinity.featurize import InteractionConfig, featurize_dataset, interaction_features, pool_std, pool_sum
from gbaffinity.molio import AtomRecord, ComplexRecord, gen_synthetic, infer_schema

P = ["C", "N", "O", "S"]
L = ["C", "N", "O", "F", "P", "S", "Cl", "Br", "I"]
GOLDEN = Path(__file__).parent / "golden"


@contextmanager
def criterion(name):
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        line = (False, detail.get("msg") or f"{type(exc).__name__}: {exc}".splitlines()[0])
        ACCEPTANCE_RESULTS.append((name, *line))
        print(f"\n[FAIL] {name}: {line[1]}")
        raise
    else:
        ACCEPTANCE_RESULTS.append((name, True, detail.get("msg", "")))
        print(f"\n[PASS] {name}: {detail.get('msg', '')}")


@pytest.fixture(scope="module")
def small_complexes():
    return gen_synthetic(1000, (20, 200), rng_seed=101)


def test_01_interaction_oracle(small_complexes):
    with criterion("1 interaction oracle equivalence") as d:
        cfg = InteractionConfig()
        t0 = time.perf_counter()
        direct = [interaction_features(cx, cfg) for cx in small_complexes]
        grid = [interaction_features(cx, cfg, use_grid=True) for cx in small_complexes]
        elapsed = time.perf_counter() - t0
        for cx, a, b in zip(small_complexes, direct, grid):
            want = brute_interactions(cx, P, L, 12.0)
            assert a.tolist() == want, cx.id
            assert b.tolist() == want, cx.id
        assert max(len(cx.atoms) for cx in small_complexes) <= 200
        assert elapsed < 10.0
        d["msg"] = f"1000 complexes exact (direct and grid), {elapsed:.2f}s < 10s"


def test_02_boundary():
    with criterion("2 boundary semantics") as d:
        cases = [
            ((12.0, 0.0, 0.0), True, 1), ((12.0, 0.0, 0.0), False, 0),
            ((0.0, 0.0, -12.0), True, 1), ((0.0, 0.0, -12.0), False, 0),
            ((math.nextafter(12.0, 13.0), 0.0, 0.0), True, 0),
            ((math.nextafter(12.0, 0.0), 0.0, 0.0), False, 1),
        ]
        for xyz, inclusive, want in cases:
            cx = ComplexRecord("b", 1.0, [AtomRecord("protein", "O", 0.0, 0.0, 0.0), AtomRecord("ligand", "Cl", *xyz)])
            cfg = InteractionConfig(boundary_inclusive=inclusive)
            for grid in (False, True):
                assert interaction_features(cx, cfg, use_grid=grid).sum() == want, (xyz, inclusive, grid)
        d["msg"] = f"{len(cases)} fixtures x (direct, grid) exact"


def _rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.diag(r))


def test_03_rigid_motion(small_complexes):
    with criterion("3 rigid-motion invariance") as d:
        rng = np.random.default_rng(3)
        schema = infer_schema(small_complexes[:100])
        for cx in small_complexes[:100]:
            R, t = _rotation(rng), rng.uniform(-50, 50, 3)
            moved = ComplexRecord(cx.id, cx.affinity, [
                AtomRecord(a.role, a.element, *map(float, R @ np.array(a.xyz) + t), a.features) for a in cx.atoms
            ])
            assert np.array_equal(interaction_features(cx), interaction_features(moved)), cx.id
            for pool in (pool_sum, pool_std):
                assert np.max(np.abs(pool(cx, schema) - pool(moved, schema)), initial=0.0) <= 1e-12
        d["msg"] = "100 complexes: interaction exact, pooled within 1e-12"


def test_04_layout(small_complexes):
    with criterion("4 feature layout") as d:
        schema = infer_schema(small_complexes)
        assert schema.width == 36
        fm = featurize_dataset(small_complexes[:50], schema=schema)
        names = fm.column_names
        assert len(names) == 108
        assert all(n.startswith("inter.") for n in names[:36])
        assert [n[4:] for n in names[36:72]] == schema.encoded_names()
        assert [n[4:] for n in names[72:]] == schema.encoded_names()
        d["msg"] = "108 columns [36 interaction | 36 sum | 36 std]"


@contextmanager
def _quiet():
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TooFewRowsWarning)
        yield


def test_05_tree_split_oracle():
    with criterion("5 tree-split oracle") as d:
        rng = np.random.default_rng(5)
        n_split = 0
        for _ in range(500):
            n = int(rng.integers(2, 65))
            k = int(rng.integers(1, 5))
            X = rng.integers(0, int(rng.integers(2, 20)), size=(n, k)) * 0.25 + rng.choice([0.0, 0.1])
            g = rng.integers(-8, 9, size=n).astype(float)
            lam = float(rng.choice([0.0, 0.5, 1.0, 3.0]))
            min_child = int(rng.integers(1, 8))
            bm = build_bins(X)
            cfg = TrainConfig(max_depth=1, min_child_samples=min_child, l2_leaf_reg=lam, feature_fraction=1.0)
            with _quiet():
                tree = fit_tree(bm.transform(X), g, cfg, bm)
            want = exhaustive_stump(X.tolist(), g.tolist(), lam, min_child)
            if want is None:
                assert tree.n_leaves == 1
                continue
            n_split += 1
            got = (int(tree.feature[0]), float(tree.threshold[0]), float(tree.value[tree.left[0]]),
                   float(tree.value[tree.right[0]]), float(tree.gain[0]))
            exp = (want["feature"], want["lo"] + (want["hi"] - want["lo"]) / 2, want["left_value"],
                   want["right_value"], want["gain"])
            assert got == exp
        d["msg"] = f"500 datasets exact ({n_split} with a split)"


def test_06_monotonicity():
    with criterion("6 boosting monotonicity") as d:
        fm = friedman1_matrix(n_rows=2000)
        cfg = TrainConfig(l2_leaf_reg=0.0, learning_rate=0.1, bagging_fraction=1.0, bagging_freq=0, feature_fraction=1.0)
        res = train(fm, cfg=cfg)
        mse = [row["train_rmse"] ** 2 for row in res.log]
        bad = [i for i in range(1, len(mse)) if mse[i] > mse[i - 1]]
        assert not bad, bad[:5]
        ratio = res.log[-1]["train_rmse"] / res.log[0]["train_rmse"]
        assert ratio <= 0.5
        d["msg"] = f"{cfg.n_trees} iterations non-increasing, final/initial RMSE {ratio:.4f} <= 0.5"


def test_07_gradient_check():
    with criterion("7 gradient check") as d:
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 50))
            y = rng.normal(0, 3, n)
            f = rng.normal(0, 3, n)
            analytic = negative_gradient(y, f)
            for i in range(n):
                # derivative of the i-th loss term 0.5 (f_i - y_i)^2
                (num,) = central_difference(lambda v, yi=y[i]: 0.5 * (v[0] - yi) ** 2, [f[i]])
                rel = abs(-num - analytic[i]) / abs(analytic[i])
                worst = max(worst, rel)
                assert rel <= 1e-6
        d["msg"] = f"100 vectors, worst relative error {worst:.1e} <= 1e-6"


def _det_run(tmp_path, data, threads):
    out = tmp_path / f"t{threads}"
    base = ["--out", str(out), "--threads", str(threads), "--log-level", "WARNING"]
    train_set, test_set = str(data / "train.jsonl"), str(data / "test.jsonl")
    assert main(["train", "--train", train_set, "--seeds", "0,1", "--n-trees", "30",
                 "--valid-fraction", "0.1", *base]) == 0
    assert main(["evaluate", "--train", train_set, "--test", test_set, "--seeds", "0,1", *base]) == 0
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.suffix in (".json", ".txt"))
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in files}


def test_08_determinism(tmp_path):
    with criterion("8 determinism across threads") as d:
        data = tmp_path / "data"
        assert main(["gen-synth", "--n", "800", "--atoms", "10", "40", "--output", str(data / "train.jsonl"),
                     "--out", str(data), "--log-level", "WARNING"]) == 0
        assert main(["gen-synth", "--n", "100", "--atoms", "10", "40", "--seed", "1",
                     "--output", str(data / "test.jsonl"), "--out", str(data), "--log-level", "WARNING"]) == 0
        runs = {t: _det_run(tmp_path, data, t) for t in (1, 4, 8)}
        keys = set(runs[1])
        assert {"models/model_seed0.json", "models/model_seed1.json", "reports/table.txt", "manifest.json"} <= keys
        for t in (4, 8):
            assert set(runs[t]) == keys
            diff = [k for k in keys if runs[t][k] != runs[1][k]]
            assert not diff, f"{t} threads differ in {diff}"
        d["msg"] = f"{len(keys)} model/report files byte-identical at 1, 4, 8 threads"


def test_09_persistence(tmp_path):
    with criterion("9 model persistence") as d:
        fm = friedman1_matrix(n_rows=1000)
        model = train(fm, cfg=TrainConfig(n_trees=100)).model
        save_model(model, tmp_path / "m.json")
        loaded = load_model(tmp_path / "m.json")
        X = np.random.default_rng(9).random((100, 10)) * 1.2 - 0.1
        assert np.array_equal(loaded.predict(X), model.predict(X))
        d["msg"] = "100 random rows bit-identical after save/load"


def test_10_metric_identities():
    with criterion("10 metric identities") as d:
        rng = np.random.default_rng(10)
        for _ in range(200):
            n = int(rng.integers(3, 400))
            y = rng.normal(6, 2, n)
            p = rng.normal() * y + rng.normal(0, 1.5, n)
            sd = sd_metric(y, p)
            c = rng.uniform(0.05, 20) * rng.choice([-1.0, 1.0])
            assert abs(sd_metric(y, c * p + rng.normal(0, 10)) - sd) <= 1e-9 * max(1.0, sd)
            r = pearson_r(y, p)
            lhs, rhs = (1 - r * r) * y.var(), sd * sd * (n - 1) / n
            assert abs(lhs - rhs) <= 1e-9 * abs(rhs)
        for _ in range(1000):
            n = int(rng.integers(1, 100))
            y, p = rng.normal(size=n), rng.standard_cauchy(n)
            assert rmse(y, p) >= mae(y, p)
        cases = json.loads((GOLDEN / "aggregate.json").read_text())["cases"]
        for case in cases:
            runs = case["runs"]
            reps = [MetricsReport(**{m: runs[m][i] for m in METRICS}, n=1) for i in range(len(runs["rmse"]))]
            agg = aggregate_runs(reps)
            for m in METRICS:
                assert agg.formatted(m) == case["expected"][m]
                assert re.fullmatch(r"\d+\.\d{3} \(\d+\.\d{3}\)", agg.formatted(m))
        d["msg"] = f"affine/identity within 1e-9, rmse >= mae on 1000 pairs, {len(cases)} golden cases"


@pytest.fixture(scope="module")
def full_scale():
    return gen_synthetic(3767, (100, 299), rng_seed=11)


def test_11_performance(full_scale):
    with criterion("11 performance") as d:
        complexes = full_scale
        assert max(len(cx.atoms) for cx in complexes) < 300
        t0 = time.perf_counter()
        fm = featurize_dataset(complexes)
        t_feat = time.perf_counter() - t0
        assert fm.rows.shape == (3767, 108)
        t0 = time.perf_counter()
        res = train(fm, cfg=TrainConfig())
        t_train = time.perf_counter() - t0
        assert res.model.n_trees == 1000
        d["msg"] = f"featurize 3767 complexes {t_feat:.1f}s < 120s, train 3767x108 defaults {t_train:.1f}s < 60s"
        assert t_feat < 120.0, d["msg"]
        assert t_train < 60.0, d["msg"]


def test_12_end_to_end(tmp_path):
    with criterion("12 end-to-end smoke") as d:
        t0 = time.perf_counter()
        out = tmp_path / "run"
        common = ["--out", str(out), "--log-level", "WARNING"]
        train_set, test_set = str(out / "train.jsonl"), str(out / "core.jsonl")
        steps = [
            ["gen-synth", "--n", "500", "--atoms", "30", "120", "--seed", "0", "--output", train_set],
            ["gen-synth", "--n", "100", "--atoms", "30", "120", "--seed", "1", "--output", test_set],
            ["featurize", "--train", train_set, "--test", test_set],
            ["train", "--train", train_set, "--seeds", "1,2,3", "--valid-fraction", "0.1"],
            ["evaluate", "--train", train_set, "--test", test_set, "--seeds", "1,2,3"],
            ["importance", "--seeds", "1"],
        ]
        for step in steps:
            assert main(step + common) == 0, step[0]
        elapsed = time.perf_counter() - t0
        manifest = json.loads((out / "manifest.json").read_text())["artifacts"]
        on_disk = {p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file() and p.name != "manifest.json"}
        assert set(manifest) == on_disk
        for rel, digest in manifest.items():
            assert re.fullmatch(r"[0-9a-f]{64}", digest), rel
        table = (out / "reports" / "table.txt").read_text().splitlines()
        assert table[0].split()[:5] == ["Model", "core", "RMSE", "core", "MAE"]
        assert table[1].startswith("GBDT") and table[2].startswith("LR")
        assert all(re.search(r"\d\.\d{3} \(\d\.\d{3}\)", line) for line in table[1:])
        svgs = sorted(p.name for p in (out / "importance").glob("*.svg"))
        assert svgs == ["importance_interaction.svg", "importance_std.svg", "importance_sum.svg"]
        assert elapsed < 300.0
        d["msg"] = f"6 steps exit 0, {len(manifest)} artifacts hashed, table + 3 SVGs, {elapsed:.1f}s < 300s"
