import dataclasses
import math

import numpy as np
import pytest

from qfan.backtest import default_levels
from qfan.loss import QuantileLevels
from qfan.metrics import crossover_count
from qfan.network import (HyperParams, SpnnModel, TrainingDivergedError, forward,
                          init_noncrossing, init_random, load_model,
                          objective_and_gradients, predict_fan, save_model, train)


def small_hyper(**kw):
    defaults = dict(iterations=5, hidden_nodes=4, learning_rate=0.1,
                    alpha=0.01, lambda1=0.1, lambda2=0.1, seed=0)
    defaults.update(kw)
    return HyperParams(**defaults)


def random_model(rng, n_x=3, n_h=4, levels=None, hyper=None):
    levels = levels or QuantileLevels((0.1, 0.5, 0.9))
    hyper = hyper or small_hyper(hidden_nodes=n_h)
    return SpnnModel(
        w1=rng.normal(size=(n_h, n_x)), b1=rng.normal(size=n_h),
        w2=rng.normal(size=(len(levels), n_h)), b2=rng.normal(size=len(levels)),
        levels=levels, hyper=hyper)


class TestHyperParams:
    def test_defaults_match_reference_setup(self):
        hp = HyperParams()
        assert hp.iterations == 10000 and hp.hidden_nodes == 20
        assert hp.learning_rate == 0.3 and hp.alpha == 0.01
        assert hp.lambda1 == 0.1 and hp.lambda2 == 0.1

    def test_zero_learning_rate_allowed(self):
        assert HyperParams(learning_rate=0.0).learning_rate == 0.0

    @pytest.mark.parametrize("kw", [dict(iterations=0), dict(hidden_nodes=0),
                                    dict(learning_rate=-0.1), dict(alpha=0.0),
                                    dict(lambda1=-1.0)])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            HyperParams(**kw)


class TestForward:
    def test_zero_map(self):
        levels = QuantileLevels((0.25, 0.75))
        model = SpnnModel(w1=np.zeros((3, 2)), b1=np.zeros(3),
                          w2=np.zeros((2, 3)), b2=np.zeros(2),
                          levels=levels, hyper=small_hyper(hidden_nodes=3))
        np.testing.assert_array_equal(forward(model, [1.0, -2.0]), [0.0, 0.0])

    def test_constant_path(self):
        levels = QuantileLevels((0.5,))
        model = SpnnModel(w1=np.zeros((1, 1)), b1=np.zeros(1),
                          w2=np.array([[1.0]]), b2=np.array([0.3]),
                          levels=levels, hyper=small_hyper(hidden_nodes=1))
        for x in (-5.0, 0.0, 2.0):
            assert forward(model, [x]) == pytest.approx([0.3])

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(0)
        model = random_model(rng)
        x = rng.normal(size=3)
        h = [math.tanh(sum(model.w1[i, j] * x[j] for j in range(3)) + model.b1[i])
             for i in range(4)]
        expected = [sum(model.w2[m, i] * h[i] for i in range(4)) + model.b2[m]
                    for m in range(3)]
        np.testing.assert_allclose(forward(model, x), expected, atol=1e-12)

    def test_length_mismatch(self):
        model = random_model(np.random.default_rng(1))
        with pytest.raises(ValueError, match="shape"):
            forward(model, [1.0, 2.0])


class TestInitNoncrossing:
    def test_tau_proportional_output_weights(self):
        # levels (0.25, 0.75): second output row is exactly 3x the first
        rng = np.random.default_rng(2)
        x = rng.uniform(0.0, 1.0, size=(50, 3))
        levels = QuantileLevels((0.25, 0.75))
        model = init_noncrossing(3, x, small_hyper(), levels)
        np.testing.assert_allclose(model.w2[1], 3.0 * model.w2[0], rtol=1e-9)
        np.testing.assert_array_equal(model.b1, 0.0)
        np.testing.assert_array_equal(model.b2, 0.0)

    def test_outputs_increase_where_scalar_positive(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(0.0, 1.0, size=(100, 4))
        levels = QuantileLevels((0.1, 0.5, 0.9))
        model = init_noncrossing(4, x, small_hyper(), levels)
        for _ in range(50):
            out = forward(model, rng.uniform(0.0, 1.0, size=4))
            s = out[0] / 0.1
            if s > 0:
                assert out[0] < out[1] < out[2]

    def test_proportionality_at_random_inputs(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((200, 12))
        levels = default_levels()
        model = init_noncrossing(12, x, small_hyper(hidden_nodes=20), levels)
        taus = levels.as_array()
        fan = predict_fan(model, rng.standard_normal((1000, 12)))
        ratios = fan.values / taus
        spread = np.max(np.abs(ratios - ratios[:, :1]), axis=1)
        assert np.all(spread <= 1e-9 * np.maximum(np.abs(ratios[:, 0]), 1e-12))

    def test_least_squares_beats_ridge_alternatives(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((60, 5))
        levels = QuantileLevels((0.2, 0.5, 0.8))
        hp = small_hyper(hidden_nodes=6)
        model = init_noncrossing(5, x, hp, levels)
        h = np.tanh(x @ model.w1.T)
        q = np.tile(levels.as_array(), (60, 1))
        base = np.linalg.norm(h @ model.w2.T - q)
        for lam in (1e-6, 1e-3, 1e-1, 1.0):
            ridge = np.linalg.solve(h.T @ h + lam * np.eye(6), h.T @ q)
            assert np.linalg.norm(h @ ridge - q) >= base - 1e-10

    def test_width_mismatch(self):
        with pytest.raises(ValueError, match="n_x"):
            init_noncrossing(3, np.zeros((10, 4)), small_hyper(),
                             QuantileLevels((0.5,)))


class TestGradients:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        levels = QuantileLevels((0.1, 0.5, 0.9))
        hp = small_hyper(alpha=0.01, lambda1=0.1, lambda2=0.1)
        model = random_model(rng, hyper=hp)
        x = rng.normal(size=(10, 3))
        y = rng.normal(size=10)
        _, grads = objective_and_gradients(model, x, y)
        step = 1e-6
        for name, g in zip(("w1", "b1", "w2", "b2"), grads):
            arr = getattr(model, name)
            fd = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                plus = arr.copy(); plus[idx] += step
                minus = arr.copy(); minus[idx] -= step
                up, _ = objective_and_gradients(
                    dataclasses.replace(model, **{name: plus}), x, y)
                dn, _ = objective_and_gradients(
                    dataclasses.replace(model, **{name: minus}), x, y)
                fd[idx] = (up - dn) / (2 * step)
            rel = np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)
            assert rel < 1e-5, f"{name}: rel error {rel}"


class TestTrain:
    def test_zero_learning_rate_is_identity(self):
        rng = np.random.default_rng(7)
        hp = small_hyper(iterations=1, learning_rate=0.0)
        model = random_model(rng, hyper=hp)
        x = rng.normal(size=(6, 3))
        y = rng.normal(size=6)
        trained, losses = train(model, x, y)
        np.testing.assert_array_equal(trained.w1, model.w1)
        np.testing.assert_array_equal(trained.b1, model.b1)
        np.testing.assert_array_equal(trained.w2, model.w2)
        np.testing.assert_array_equal(trained.b2, model.b2)
        assert losses.shape == (1,)

    def test_constant_targets_converge_to_point_mass(self):
        # all tau-quantiles of a point mass at 0.6 equal 0.6; the smooth-loss
        # optimum sits within alpha*ln((1-tau)/tau) < 0.012 of it for
        # alpha = 0.004. The L2 weight is raised so the fitted surface is
        # flat (the bias, which is unpenalized, carries the level).
        rng = np.random.default_rng(8)
        levels = default_levels()
        hp = HyperParams(iterations=3000, hidden_nodes=20, learning_rate=0.3,
                         alpha=0.004, lambda1=20.0, lambda2=20.0, seed=11)
        x = rng.standard_normal((200, 5))
        y = np.full(200, 0.6)
        model = init_noncrossing(5, x, hp, levels)
        trained, losses = train(model, x, y)
        fan = predict_fan(trained, x)
        assert np.max(np.abs(fan.values - 0.6)) < 0.02
        assert losses[-1] < losses[0]

    def test_loss_trace_length(self):
        rng = np.random.default_rng(9)
        hp = small_hyper(iterations=17)
        model = random_model(rng, hyper=hp)
        _, losses = train(model, rng.normal(size=(5, 3)), rng.normal(size=5))
        assert losses.shape == (17,) and np.all(np.isfinite(losses))

    def test_determinism(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((40, 3))
        y = rng.uniform(size=40)
        levels = QuantileLevels((0.2, 0.8))
        hp = small_hyper(iterations=50, seed=123)
        a, _ = train(init_noncrossing(3, x, hp, levels), x, y)
        b, _ = train(init_noncrossing(3, x, hp, levels), x, y)
        assert a.w1.tobytes() == b.w1.tobytes()
        assert a.w2.tobytes() == b.w2.tobytes()
        assert a.b1.tobytes() == b.b1.tobytes()
        assert a.b2.tobytes() == b.b2.tobytes()

    def test_divergence_reports_iteration(self):
        # absurd learning rate inflates the L2 term past the float64 range
        # within a few steps; the error must carry the iteration index
        rng = np.random.default_rng(11)
        hp = small_hyper(iterations=200, learning_rate=1e12)
        model = random_model(rng, hyper=hp)
        x = rng.normal(size=(8, 3)) * 1e6
        y = rng.normal(size=8) * 1e6
        with pytest.raises(TrainingDivergedError, match="iteration"):
            train(model, x, y)

    def test_rejects_nonfinite_targets(self):
        rng = np.random.default_rng(12)
        model = random_model(rng)
        with pytest.raises(ValueError, match="finite"):
            train(model, rng.normal(size=(4, 3)), np.array([1.0, np.nan, 0.0, 2.0]))


class TestPredictFan:
    def test_single_row(self):
        rng = np.random.default_rng(13)
        model = random_model(rng)
        x = rng.normal(size=(1, 3))
        np.testing.assert_allclose(predict_fan(model, x).values[0],
                                   forward(model, x[0]), atol=1e-12)

    def test_zero_weight_model(self):
        levels = QuantileLevels((0.25, 0.75))
        model = SpnnModel(w1=np.zeros((2, 3)), b1=np.zeros(2),
                          w2=np.zeros((2, 2)), b2=np.zeros(2),
                          levels=levels, hyper=small_hyper(hidden_nodes=2))
        fan = predict_fan(model, np.ones((5, 3)))
        np.testing.assert_array_equal(fan.values, np.zeros((5, 2)))

    def test_batch_equals_loop(self):
        rng = np.random.default_rng(14)
        model = random_model(rng)
        x = rng.normal(size=(20, 3))
        fan = predict_fan(model, x)
        for t in range(20):
            np.testing.assert_allclose(fan.values[t], forward(model, x[t]), atol=1e-12)

    def test_width_mismatch(self):
        model = random_model(np.random.default_rng(15))
        with pytest.raises(ValueError, match="width"):
            predict_fan(model, np.zeros((4, 5)))


class TestSerialization:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(16)
        model = random_model(rng)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.w1.tobytes() == model.w1.tobytes()
        assert loaded.b1.tobytes() == model.b1.tobytes()
        assert loaded.w2.tobytes() == model.w2.tobytes()
        assert loaded.b2.tobytes() == model.b2.tobytes()
        assert loaded.levels == model.levels
        assert loaded.hyper == model.hyper
        x = rng.normal(size=(7, 3))
        np.testing.assert_array_equal(predict_fan(loaded, x).values,
                                      predict_fan(model, x).values)

    def test_schema_version_checked(self, tmp_path):
        import json
        rng = np.random.default_rng(17)
        model = random_model(rng)
        doc = model.to_dict()
        doc["schema_version"] = 99
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="schema_version"):
            load_model(path)

    def test_linear_model_round_trip(self, tmp_path):
        from qfan.baselines import LinearQuantileModel
        levels = QuantileLevels((0.25, 0.75))
        model = LinearQuantileModel(weights=np.array([[1.0, 2.0], [3.0, 4.0]]),
                                    bias=np.array([0.1, 0.2]), levels=levels,
                                    hyper=small_hyper())
        path = tmp_path / "linear.json"
        save_model(model, path)
        loaded = load_model(path)
        assert isinstance(loaded, LinearQuantileModel)
        np.testing.assert_array_equal(loaded.weights, model.weights)
        np.testing.assert_array_equal(loaded.bias, model.bias)


class TestCrossoverReduction:
    def test_noncrossing_init_beats_random_after_training(self):
        # heteroskedastic fixture at reduced scale: trained spnn-w must cross
        # strictly less than trained spnn-wo
        from qfan.features import FeatureMatrix, fit_standardizer
        from qfan.synthetic import heteroskedastic_series
        s = heteroskedastic_series(600, seed=5, clip=False)
        t = s.hour_index
        feats = np.column_stack([s.x, np.abs(s.x),
                                 np.sin(2 * np.pi * t / 24.0),
                                 np.cos(2 * np.pi * t / 24.0)])
        fm = FeatureMatrix(values=feats[:400],
                           column_names=("x", "absx", "sin_hour", "cos_hour"))
        std = fit_standardizer(fm)
        x_tr = std.transform(feats[:400])
        x_te = std.transform(feats[400:])
        y_tr = s.power[:400]
        levels = default_levels()
        hp = HyperParams(iterations=800, hidden_nodes=20, seed=5)
        m_w, _ = train(init_noncrossing(4, x_tr, hp, levels), x_tr, y_tr)
        m_wo, _ = train(init_random(4, hp, levels), x_tr, y_tr)
        c_w = crossover_count(predict_fan(m_w, x_te))
        c_wo = crossover_count(predict_fan(m_wo, x_te))
        assert c_w < c_wo
