import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_differences, forward_loop, residuals_loop, sse_loop
from pclts.errors import ConfigurationError, StructuralError, TrainingError
from pclts.mlp import (
    Dataset,
    NetworkParams,
    NetworkShape,
    fit_ols,
    forward,
    init_params,
    ols_gradient,
    ols_loss,
    predict,
    residuals,
)


def random_instance(rng, m, mh, n, scale=1.0):
    shape = NetworkShape(m, mh)
    params = NetworkParams(shape, rng.normal(0, scale, shape.n_params))
    data = Dataset(rng.normal(0, 1, (n, m)), rng.normal(0, 1, n))
    return params, data


def rel_err(a, b, floor=1e-8):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


class TestShapeAndParams:
    @pytest.mark.parametrize("m,mh,count", [(1, 1, 4), (1, 10, 31), (2, 3, 13), (10, 10, 121)])
    def test_parameter_count(self, m, mh, count):
        assert NetworkShape(m, mh).n_params == count == (m + 1) * mh + mh + 1

    @pytest.mark.parametrize("m,mh", [(0, 1), (1, 0), (-2, 3)])
    def test_invalid_shape(self, m, mh):
        with pytest.raises(ConfigurationError):
            NetworkShape(m, mh)

    def test_wrong_length_rejected(self):
        with pytest.raises(StructuralError):
            NetworkParams(NetworkShape(1, 2), np.zeros(6))

    def test_non_finite_rejected(self):
        theta = np.zeros(NetworkShape(1, 2).n_params)
        theta[0] = np.nan
        with pytest.raises(StructuralError):
            NetworkParams(NetworkShape(1, 2), theta)

    def test_layout_views(self):
        p = NetworkParams.from_parts([1.0, 2.0], 3.0, [[4.0], [5.0]], [6.0, 7.0])
        assert list(p.theta) == [1, 2, 3, 4, 6, 5, 7]
        assert list(p.output_weights) == [1, 2]
        assert p.output_bias == 3
        assert p.input_weights.tolist() == [[4], [5]]
        assert list(p.input_biases) == [6, 7]

    def test_theta_is_immutable(self):
        p = init_params(NetworkShape(2, 3), seed=0)
        with pytest.raises(ValueError):
            p.theta[0] = 1.0

    def test_init_is_seeded_and_bounded(self):
        a = init_params(NetworkShape(3, 4), seed=5)
        b = init_params(NetworkShape(3, 4), seed=5)
        assert a == b
        assert np.all(np.abs(a.theta) <= 0.5)

    def test_model_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        p = NetworkParams(NetworkShape(3, 4), rng.normal(0, 1e3, 21) * rng.random(21) ** 9)
        p.save(tmp_path / "m.json")
        q = NetworkParams.load(tmp_path / "m.json")
        assert q == p
        assert q.theta.tobytes() == p.theta.tobytes()


class TestDataset:
    def test_vector_x_becomes_column(self):
        d = Dataset([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        assert d.x.shape == (3, 1) and d.n == 3 and d.m == 1

    @pytest.mark.parametrize(
        "x,y,truth",
        [
            (np.zeros((3, 1)), np.zeros(2), None),
            (np.zeros((0, 1)), np.zeros(0), None),
            (np.array([[np.inf]]), np.zeros(1), None),
            (np.zeros((2, 1)), np.zeros(2), [True]),
        ],
    )
    def test_invalid(self, x, y, truth):
        with pytest.raises(StructuralError):
            Dataset(x, y, truth)


class TestForward:
    def test_zero_weights_give_zero(self):
        p = NetworkParams(NetworkShape(3, 5), np.zeros(NetworkShape(3, 5).n_params))
        assert forward(p, [1.0, -2.0, 3.0]) == 0.0

    def test_sigmoid_at_zero(self):
        p = NetworkParams.from_parts([2.0], 0.0, [[0.0]], [0.0])
        assert forward(p, [5.0]) == 1.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(11)
        for m, mh in [(1, 1), (2, 3), (5, 10)]:
            p, d = random_instance(rng, m, mh, 10, scale=2.0)
            for x in d.x:
                assert forward(p, x) == pytest.approx(forward_loop(p.theta, x, m, mh), rel=1e-13, abs=1e-13)

    def test_dimension_mismatch(self):
        p = init_params(NetworkShape(2, 3), 0)
        with pytest.raises(StructuralError):
            forward(p, [1.0])
        with pytest.raises(StructuralError):
            residuals(p, Dataset(np.zeros((2, 3)), np.zeros(2)))

    def test_extreme_inputs_stay_finite(self):
        p = NetworkParams.from_parts([1.0, -1.0], 0.5, [[1e4], [-1e4]], [0.0, 0.0])
        assert np.all(np.isfinite(predict(p, [[1e3], [-1e3]])))


class TestResidualsAndLoss:
    def test_zero_net(self):
        p = NetworkParams(NetworkShape(1, 2), np.zeros(7))
        d = Dataset([[0.3], [0.7]], [1.0, -1.0])
        assert residuals(p, d).tolist() == [-1.0, 1.0]
        assert ols_loss(p, d) == 2.0

    def test_interpolating_network(self):
        p = init_params(NetworkShape(2, 3), 4)
        X = np.random.default_rng(4).uniform(-1, 1, (8, 2))
        d = Dataset(X, predict(p, X))
        assert np.all(residuals(p, d) == 0.0)
        assert ols_loss(p, d) == 0.0
        assert np.all(ols_gradient(p, d) == 0.0)

    def test_loop_oracle(self):
        rng = np.random.default_rng(12)
        p, d = random_instance(rng, 3, 4, 15)
        np.testing.assert_allclose(residuals(p, d), residuals_loop(p.theta, d.x, d.y, 3, 4), rtol=1e-12, atol=1e-12)
        assert ols_loss(p, d) == pytest.approx(sse_loop(p.theta, d.x, d.y, 3, 4), rel=1e-12)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(13)
        p, d = random_instance(rng, 2, 5, 30)
        perm = rng.permutation(30)
        assert ols_loss(p, d.subset(perm)) == pytest.approx(ols_loss(p, d), rel=1e-13)


class TestGradient:
    def test_finite_differences(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            m, mh, n = int(rng.choice([1, 2, 5])), int(rng.choice([1, 3, 10])), int(rng.choice([5, 20]))
            p, d = random_instance(rng, m, mh, n)
            fd = central_differences(lambda th: sse_loop(th, d.x, d.y, m, mh), p.theta)
            assert rel_err(ols_gradient(p, d), fd).max() <= 1e-5

    def test_doubled_dataset_doubles_gradient(self):
        rng = np.random.default_rng(15)
        p, d = random_instance(rng, 2, 3, 7)
        twice = Dataset(np.vstack([d.x, d.x]), np.concatenate([d.y, d.y]))
        np.testing.assert_allclose(ols_gradient(p, twice), 2 * ols_gradient(p, d), rtol=1e-12, atol=1e-12)


class TestFitOLS:
    def test_zero_steps_is_identity(self):
        rng = np.random.default_rng(16)
        p, d = random_instance(rng, 1, 3, 10)
        assert fit_ols(p, d, steps=0) is p

    def test_negative_steps(self):
        rng = np.random.default_rng(16)
        p, d = random_instance(rng, 1, 3, 10)
        with pytest.raises(ConfigurationError):
            fit_ols(p, d, steps=-1)

    @pytest.mark.parametrize("method,steps", [("bfgs", 200), ("gd", 2000)])
    def test_constant_target(self, method, steps):
        x = np.linspace(-2, 2, 40)
        d = Dataset(x, np.full(40, 0.5))
        p = fit_ols(init_params(NetworkShape(1, 3), 0), d, steps=steps, method=method, rate=1.0 if method == "bfgs" else 0.1)
        assert ols_loss(p, d) < 1e-4

    @pytest.mark.parametrize("method", ["bfgs", "gd"])
    def test_monotone_accepted_sequence(self, method):
        rng = np.random.default_rng(17)
        p, d = random_instance(rng, 2, 5, 40)
        losses = []
        q = fit_ols(p, d, steps=150, method=method, callback=lambda k, f: losses.append(f))
        assert losses[0] == ols_loss(p, d)
        assert all(b <= a for a, b in zip(losses, losses[1:]))
        assert ols_loss(q, d) <= ols_loss(p, d)
        assert ols_loss(q, d) == pytest.approx(losses[-1], rel=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(18)
        p, d = random_instance(rng, 2, 4, 25)
        assert fit_ols(p, d, steps=50) == fit_ols(p, d, steps=50)

    def test_nonfinite_start_raises(self):
        # weights large enough for the output sum to overflow
        p = NetworkParams.from_parts([1e308, 1e308], 0.0, [[0.0], [0.0]], [50.0, 50.0])
        d = Dataset([[0.0], [1.0]], [0.0, 0.0])
        with pytest.raises(TrainingError) as info:
            fit_ols(p, d, steps=5)
        assert info.value.step == 0

    def test_unknown_method(self):
        rng = np.random.default_rng(19)
        p, d = random_instance(rng, 1, 2, 5)
        with pytest.raises(ConfigurationError):
            fit_ols(p, d, method="lbfgs")


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    m=st.sampled_from([1, 2, 5]),
    mh=st.sampled_from([1, 3, 10]),
)
def test_forward_is_finite_and_deterministic(seed, m, mh):
    rng = np.random.default_rng(seed)
    p, d = random_instance(rng, m, mh, 6, scale=50.0)
    a, b = predict(p, d.x), predict(p, d.x)
    assert np.all(np.isfinite(a))
    assert np.array_equal(a, b)
