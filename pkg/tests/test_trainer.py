import numpy as np
import pytest

import pclts.trainer as trainer
from pclts.bench import rmse
from pclts.datagen import SyntheticSpec, generate
from pclts.errors import ConfigurationError, PipelineError, StructuralError
from pclts.mlp import Dataset, NetworkParams, NetworkShape, init_params, ols_loss, predict
from pclts.optimizer import OptimizerSpec, OptResult
from pclts.robust_loss import RobustLossConfig
from pclts.trainer import (
    TrainReport,
    TrainSpec,
    detect_outliers,
    train_baseline,
    train_robust,
)


def small_spec(hidden=3, m=1, budget=8000, restarts=4, **kw):
    return TrainSpec(NetworkShape(m, hidden), optimizer=OptimizerSpec(budget=budget, restarts=restarts), **kw)


def same_report(a: TrainReport, b: TrainReport) -> bool:
    da, db = a.to_dict(), b.to_dict()
    da.pop("timings")
    db.pop("timings")
    return da == db


@pytest.fixture(scope="module")
def contaminated():
    g = generate(SyntheticSpec(3, 1, 100, noise=0.1, delta=0.2, seed=11))
    rep = train_robust(g.train, small_spec(hidden=5, budget=20_000))
    return g, rep


class TestSpec:
    @pytest.mark.parametrize("kw", [dict(finetune_steps=-1), dict(finetune_rate=0), dict(finetune_method="adam")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            small_spec(**kw)

    def test_seed_overrides_optimizer_seed(self):
        g = generate(SyntheticSpec(1, 1, 30, seed=1))
        a = TrainSpec(NetworkShape(1, 2), optimizer=OptimizerSpec(budget=500, restarts=2, seed=1), seed=5)
        b = TrainSpec(NetworkShape(1, 2), optimizer=OptimizerSpec(budget=500, restarts=2, seed=99), seed=5)
        assert same_report(train_robust(g.train, a), train_robust(g.train, b))


class TestResidualStub:
    def test_only_gross_row_masked(self, monkeypatch):
        # Step I replaced by the zero network, so the residuals are exactly -y
        shape = NetworkShape(1, 1)
        zero = np.zeros(shape.n_params)
        monkeypatch.setattr(trainer, "minimize", lambda handle, spec, workers=None: OptResult(zero, 0.0, 0, []))
        d = Dataset([[0.0], [0.3], [0.6], [0.9]], [-0.1, -0.2, -5.0, -10000.0])
        rep = train_robust(d, TrainSpec(shape, loss=RobustLossConfig(C=8, B=8, a=0.1)))
        assert rep.outlier_mask.tolist() == [False, False, False, True]
        assert rep.residuals_stage1.tolist() == [0.1, 0.2, 5.0, 10000.0]
        assert rep.scale == pytest.approx(2.6)
        assert rep.objective["ols_final"] <= rep.objective["ols_stage1"]


class TestTrainRobust:
    def test_constant_target_has_no_removals(self):
        d = Dataset(np.linspace(-1, 1, 30), np.full(30, 0.7))
        rep = train_robust(d, small_spec(hidden=2))
        assert rep.n_removed == 0
        assert rep.objective["ols_final"] < 1e-8

    def test_interpolatable_target(self):
        truth = NetworkParams.from_parts([1.5], -0.2, [[2.0]], [0.3])
        x = np.linspace(-1, 1, 25)[:, None]
        d = Dataset(x, predict(truth, x))
        rep = train_robust(d, small_spec(hidden=1, budget=20_000))
        assert rep.n_removed == 0
        assert rep.objective["best_f"] < 1e-6
        assert rep.objective["ols_final"] < 1e-10

    def test_mask_soundness(self, contaminated):
        _, rep = contaminated
        thr = rep.loss.C * rep.scale
        assert np.array_equal(rep.outlier_mask, np.abs(rep.residuals_stage1) > thr)

    def test_majority_retained(self, contaminated):
        g, rep = contaminated
        assert rep.n_removed <= g.train.n // 2

    def test_outliers_found(self, contaminated):
        g, rep = contaminated
        truth = g.train.outlier_truth
        assert rep.outlier_mask[truth].all()
        assert rep.outlier_mask[~truth].mean() <= 0.05

    def test_finetune_improves(self, contaminated):
        g, rep = contaminated
        clean = g.train.subset(~rep.outlier_mask)
        assert rep.objective["ols_final"] <= rep.objective["ols_stage1"]
        assert ols_loss(rep.params, clean) == pytest.approx(rep.objective["ols_final"], rel=1e-12)

    def test_deterministic(self, contaminated):
        g, rep = contaminated
        assert same_report(rep, train_robust(g.train, small_spec(hidden=5, budget=20_000)))

    def test_report_round_trip(self, contaminated, tmp_path):
        _, rep = contaminated
        rep.save(tmp_path / "r.json")
        back = TrainReport.load(tmp_path / "r.json")
        assert back.to_dict() == rep.to_dict()
        assert back.params == rep.params
        assert np.array_equal(back.outlier_mask, rep.outlier_mask)

    def test_report_rejects_other_files(self, tmp_path):
        p = tmp_path / "m.json"
        init_params(NetworkShape(1, 1), 0).save(p)
        with pytest.raises(StructuralError):
            TrainReport.load(p)

    def test_too_few_rows(self):
        with pytest.raises(PipelineError):
            train_robust(Dataset([[0.0]], [1.0]), small_spec())

    def test_dimension_mismatch(self):
        with pytest.raises(StructuralError):
            train_robust(Dataset(np.zeros((5, 2)), np.zeros(5)), small_spec(m=1))

    def test_zero_finetune_keeps_stage1(self):
        d = Dataset(np.linspace(-1, 1, 20), np.sin(np.linspace(-1, 1, 20)))
        rep = train_robust(d, small_spec(finetune_steps=0, budget=2000))
        assert rep.objective["ols_final"] == rep.objective["ols_stage1"]


class TestStandardize:
    def test_fold_back_is_exact(self):
        rng = np.random.default_rng(0)
        p = init_params(NetworkShape(3, 4), 1, scale=2.0)
        x = rng.normal(5, 30, (20, 3))
        mu, sd = trainer._standardizer(x)
        q = trainer._unstandardize(p, mu, sd)
        np.testing.assert_allclose(predict(q, x), predict(p, (x - mu) / sd), rtol=1e-12, atol=1e-12)

    def test_wide_domain(self):
        g = generate(SyntheticSpec(3, 2, 100, noise=0.1, delta=0.2, seed=2))
        rep = train_robust(g.train, small_spec(hidden=5, m=2, budget=10_000, standardize=True))
        assert rep.outlier_mask[g.train.outlier_truth].all()


class TestDetect:
    def test_single_gross_row(self):
        x = np.linspace(-2, 2, 40)
        y = np.abs(x) ** (2 / 3)
        y[17] = 1e4
        mask = detect_outliers(Dataset(x, y), small_spec())
        assert mask.tolist() == [i == 17 for i in range(40)]

    def test_identical_rows(self):
        d = Dataset(np.full((10, 2), 0.4), np.full(10, -1.3))
        assert not detect_outliers(d, small_spec(m=2, budget=2000)).any()

    def test_heavy_contamination(self):
        g = generate(SyntheticSpec(1, 1, 100, noise=0.1, delta=0.4, seed=3))
        mask = detect_outliers(g.train, small_spec(hidden=5, budget=20_000))
        truth = g.train.outlier_truth
        assert mask[truth].all()
        assert mask[~truth].mean() <= 0.05


class TestBaseline:
    def test_single_point(self):
        d = Dataset([[0.5]], [2.0])
        rep = train_baseline(d, NetworkShape(1, 2))
        assert abs(predict(rep.params, d.x)[0] - 2.0) < 1e-6
        assert not rep.outlier_mask.any()

    def test_clean_fit(self):
        g = generate(SyntheticSpec(1, 1, 200, seed=4))
        rep = train_baseline(g.train, NetworkShape(1, 10))
        assert rmse(rep.params, g.test) < 0.1

    def test_breaks_down_on_outliers(self):
        g = generate(SyntheticSpec(1, 1, 200, delta=0.2, seed=4))
        rep = train_baseline(g.train, NetworkShape(1, 10))
        assert rmse(rep.params, g.test) > 100
