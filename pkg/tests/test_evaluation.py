import json
import math
import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbaffinity.boost import TrainConfig, train
from gbaffinity.evaluation import (
    METRICS,
    MetricsReport,
    UndefinedMetricError,
    aggregate_runs,
    column_origin,
    evaluate_predictions,
    format_table,
    importance_report,
    mae,
    pearson_r,
    rmse,
    sd_metric,
)
from gbaffinity.featurize import FeatureMatrix, featurize_dataset
from gbaffinity.molio import gen_synthetic

GOLDEN = Path(__file__).parent / "golden"


def load_golden_cases():
    return json.loads((GOLDEN / "aggregate.json").read_text())["cases"]


def aggregate_case(case):
    runs = case["runs"]
    reps = [
        MetricsReport(**{m: runs[m][i] for m in METRICS}, n=10, dataset="core", model="GBDT", seeds=[i])
        for i in range(len(runs["rmse"]))
    ]
    return aggregate_runs(reps)


class TestExamples:
    def test_identical(self):
        assert rmse([1, 2], [1, 2]) == 0.0 and mae([1, 2], [1, 2]) == 0.0

    def test_symmetric_errors(self):
        assert rmse([0, 0], [3, -3]) == 3.0
        assert mae([0, 0], [3, -3]) == 3.0

    def test_three_point(self):
        assert rmse([0, 0, 0], [1, 2, 3]) == pytest.approx(math.sqrt(14 / 3), rel=1e-15)
        assert mae([0, 0, 0], [1, 2, 3]) == 2.0

    def test_pearson(self):
        y = np.arange(10.0)
        assert pearson_r(y, 2 * y + 1) == 1.0
        assert pearson_r(y, -y) == -1.0
        assert pearson_r([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)

    def test_sd(self):
        y = np.array([0.5, 1.5, 4.0, 2.0])
        assert sd_metric(y, 3 * y - 2) == pytest.approx(0.0, abs=1e-12)
        assert sd_metric([0.0, 1.0], [5.0, -3.0]) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("fn", [rmse, mae, pearson_r, sd_metric])
    def test_errors(self, fn):
        with pytest.raises(ValueError):
            fn([], [])
        with pytest.raises(ValueError):
            fn([1.0, 2.0], [1.0])

    @pytest.mark.parametrize("fn", [pearson_r, sd_metric])
    def test_undefined_for_constant(self, fn):
        with pytest.raises(UndefinedMetricError):
            fn([1.0, 2.0, 3.0], [4.0, 4.0, 4.0])


class TestAggregate:
    @pytest.mark.parametrize("case", load_golden_cases(), ids=lambda c: c["name"])
    def test_golden_formatting(self, case):
        agg = aggregate_case(case)
        for m, want in case["expected"].items():
            assert agg.formatted(m) == want
            assert re.fullmatch(r"\d\.\d{3} \(\d\.\d{3}\)", agg.formatted(m))

    def test_golden_table(self):
        cases = {c["name"]: aggregate_case(c) for c in load_golden_cases()}
        table = format_table(
            [("GBDT", {"core": cases["three_runs"], "csar": cases["two_runs"]}), ("LR", {"core": cases["single_run"]})],
            ["core", "csar"],
        )
        assert table == (GOLDEN / "table.txt").read_text()

    def test_identical_runs_zero_std(self):
        rep = evaluate_predictions([1, 2, 3, 4], [1.5, 2, 2.5, 4.5])
        agg = aggregate_runs([rep, rep, rep])
        assert all(agg.std[m] == 0.0 for m in METRICS)
        assert agg.rmse == rep.rmse

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate_runs([])

    def test_to_dict(self):
        rep = evaluate_predictions([1, 2, 3], [1, 2, 4], dataset="core", model="GBDT", seed=3)
        d = rep.to_dict()
        assert d["seeds"] == [3] and set(d["metrics"]) == set(METRICS)
        assert d["metrics"]["rmse"]["formatted"] == rep.formatted("rmse")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metric_invariants(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 300))
    y = rng.normal(size=n)
    p = y * rng.normal() + rng.normal(size=n)
    assert rmse(y, p) >= mae(y, p)
    r = pearson_r(y, p)
    assert -1.0 <= r <= 1.0
    sd = sd_metric(y, p)
    c, d = rng.uniform(0.1, 10) * rng.choice([-1, 1]), rng.normal() * 10
    assert sd_metric(y, c * p + d) == pytest.approx(sd, rel=1e-9, abs=1e-12)
    assert (1 - r * r) * y.var() == pytest.approx(sd * sd * (n - 1) / n, rel=1e-9, abs=1e-15)


def test_rmse_equals_mae_when_errors_equal():
    y = np.arange(5.0)
    assert rmse(y, y + np.array([1, -1, 1, 1, -1])) == mae(y, y + np.array([1, -1, 1, 1, -1])) == 1.0


class TestImportance:
    @pytest.fixture(scope="class")
    @classmethod
    def synthetic_model(cls):
        complexes = gen_synthetic(150, (20, 40), rng_seed=0, target_fn="friedman1")
        fm = featurize_dataset(complexes)
        return fm, train(fm, cfg=TrainConfig(n_trees=20, min_child_samples=5)).model

    def test_single_split_feature(self):
        rng = np.random.default_rng(0)
        names = ["inter.S.F", "inter.C.C", "sum.ligand_charge", "std.protein_bfactor"]
        X = rng.random((200, 4))
        y = np.where(X[:, 0] > 0.5, 3.0, 0.0)
        model = train(FeatureMatrix(names, X, y), cfg=TrainConfig(n_trees=3, feature_fraction=1.0)).model
        rep = importance_report(model)
        assert rep.blocks["interaction"][0] == ("inter.S.F", 1.0, "pair")
        assert all(imp == 0.0 for block in rep.blocks.values() for name, imp, _ in block if name != "inter.S.F")

    def test_untrained_model(self, synthetic_model):
        fm, _ = synthetic_model
        model = train(fm, cfg=TrainConfig(n_trees=0)).model
        rep = importance_report(model)
        assert set(rep.blocks) == {"interaction", "sum", "std"}
        assert all(imp == 0.0 for block in rep.blocks.values() for _, imp, _ in block)

    def test_block_totals_sum_to_one(self, synthetic_model, tmp_path):
        fm, model = synthetic_model
        rep = importance_report(model, fm.column_names)
        assert math.fsum(rep.block_total(b) for b in rep.blocks) == pytest.approx(1.0, abs=1e-12)
        for entries in rep.blocks.values():
            imps = [imp for _, imp, _ in entries]
            assert imps == sorted(imps, reverse=True)
        written = rep.write(tmp_path)
        assert [p.name for p in written] == [
            "importance.csv", "importance_interaction.svg", "importance_sum.svg", "importance_std.svg",
        ]
        assert len((tmp_path / "importance.csv").read_text().splitlines()) == 1 + fm.n_cols
        svg = (tmp_path / "importance_sum.svg").read_text()
        assert svg.startswith("<svg") and "#2ca02c" in svg and "#d62728" in svg

    def test_layout_mismatch(self, synthetic_model):
        _, model = synthetic_model
        with pytest.raises(ValueError):
            importance_report(model, list(model.feature_names)[:-1])

    @pytest.mark.parametrize(
        "name, origin",
        [("inter.C.N", "pair"), ("sum.ligand_charge", "ligand"), ("std.protein_type=CA", "protein"), ("sum.charge", "shared")],
    )
    def test_origin(self, name, origin):
        assert column_origin(name) == origin
