"""Network engine: forward contracts, exact gradients, Adam, serialization."""

import numpy as np
import pytest

from decorrlab.nn import (
    AdamState,
    adam_step,
    backward,
    cross_entropy,
    fit_classifier,
    forward,
    load_model,
    mlp,
    predict_proba,
    save_model,
    softmax,
)
from decorrlab.numerics import RngState


def _uniform_batch(seed, n, d, scale=1.0):
    return scale * (np.asarray(RngState(seed).uniform(n * d)).reshape(n, d) * 2 - 1)


def finite_difference_check(model, x, y, h=1e-5, training=True):
    """Worst relative error between backprop and central differences."""

    def loss_value():
        logits, _ = forward(model, x, training=training)
        loss, _ = cross_entropy(logits, y)
        return loss

    logits, cache = forward(model, x, training=training)
    _, dlogits = cross_entropy(logits, y)
    grads, _ = backward(model, cache, dlogits)
    worst = 0.0
    for p, g in zip(model.parameters(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = loss_value()
            flat[idx] = orig - h
            down = loss_value()
            flat[idx] = orig
            fd = (up - down) / (2 * h)
            denom = max(abs(fd), abs(gflat[idx]), 1e-6)
            worst = max(worst, abs(fd - gflat[idx]) / denom)
    return worst


class TestForward:
    def test_identity_network_passes_through(self):
        model = mlp((3, 3), RngState(0), head="linear")
        model.layers[0].weights[:] = np.eye(3)
        model.layers[0].bias[:] = 0.0
        x = _uniform_batch(1, 5, 3)
        out, _ = forward(model, x)
        np.testing.assert_allclose(out, x, atol=1e-15)

    def test_zero_weights_give_uniform_softmax(self):
        model = mlp((4, 3), RngState(0), head="softmax")
        model.layers[0].weights[:] = 0.0
        probs = predict_proba(model, _uniform_batch(2, 6, 4))
        np.testing.assert_allclose(probs, 1.0 / 3.0, atol=1e-15)

    def test_deterministic(self):
        a = mlp((5, 8, 2), RngState(77))
        b = mlp((5, 8, 2), RngState(77))
        x = _uniform_batch(3, 10, 5)
        out_a, _ = forward(a, x)
        out_b, _ = forward(b, x)
        assert out_a.tobytes() == out_b.tobytes()

    def test_dimension_mismatch(self):
        model = mlp((5, 2), RngState(0))
        with pytest.raises(ValueError):
            forward(model, _uniform_batch(0, 4, 3))

    def test_softmax_rows_sum_to_one(self):
        model = mlp((6, 9, 4), RngState(5))
        probs = predict_proba(model, _uniform_batch(4, 50, 6, scale=3.0))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_leaky_slope_only_on_negatives(self):
        model = mlp((2, 2, 2), RngState(0), activation="leaky_relu", head="linear")
        layer = model.layers[0]
        layer.weights[:] = np.eye(2)
        layer.bias[:] = 0.0
        out, cache = forward(model, np.array([[3.0, -3.0]]))
        hidden = cache["layers"][0]["post"]
        np.testing.assert_allclose(hidden, [[3.0, -0.6]])


class TestBackward:
    @pytest.mark.parametrize("activation", ["leaky_relu", "relu", "tanh", "sigmoid", "identity"])
    @pytest.mark.parametrize("batch_norm", [False, True])
    def test_gradients_match_finite_differences(self, activation, batch_norm):
        model = mlp((5, 7, 6, 3), RngState(3), activation=activation, batch_norm=batch_norm)
        x = _uniform_batch(13, 11, 5)
        y = RngState(14).integers(0, 3, 11)
        assert finite_difference_check(model, x, y) < 1e-4

    def test_batch_norm_eval_mode_gradients(self):
        model = mlp((4, 6, 2), RngState(8), batch_norm=True)
        # give the running stats some structure first
        forward(model, _uniform_batch(20, 64, 4), training=True)
        x = _uniform_batch(21, 9, 4)
        y = RngState(22).integers(0, 2, 9)
        assert finite_difference_check(model, x, y, training=False) < 1e-4

    def test_zero_output_gradient_gives_zero_grads(self):
        model = mlp((3, 4, 2), RngState(1))
        out, cache = forward(model, _uniform_batch(2, 5, 3))
        grads, dx = backward(model, cache, np.zeros_like(out))
        assert all(np.all(g == 0) for g in grads)
        assert np.all(dx == 0)

    def test_constant_column_ties_weight_and_bias_grads(self):
        model = mlp((3, 4, 2), RngState(6))
        x = _uniform_batch(7, 20, 3)
        x[:, 1] = 2.5  # constant input column
        y = RngState(8).integers(0, 2, 20)
        logits, cache = forward(model, x)
        _, dlogits = cross_entropy(logits, y)
        grads, _ = backward(model, cache, dlogits)
        w_grad, b_grad = grads[0], grads[1]
        np.testing.assert_allclose(w_grad[1], 2.5 * b_grad, atol=1e-12)

    def test_stale_cache_rejected(self):
        model = mlp((3, 4, 2), RngState(1))
        _, cache = forward(model, _uniform_batch(2, 5, 3))
        with pytest.raises(ValueError):
            backward(model, cache, np.zeros((4, 2)))


class TestCrossEntropy:
    def test_perfect_one_hot_is_free(self):
        logits = np.array([[50.0, -50.0], [-50.0, 50.0]])
        loss, _ = cross_entropy(logits, np.array([0, 1]))
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_uniform_prediction_costs_log_k(self):
        loss, _ = cross_entropy(np.zeros((7, 5)), np.zeros(7, dtype=int))
        assert loss == pytest.approx(np.log(5), abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        logits = _uniform_batch(30, 6, 4, scale=2.0)
        y = RngState(31).integers(0, 4, 6)
        _, grad = cross_entropy(logits, y)
        h = 1e-6
        for i in range(6):
            for j in range(4):
                up = logits.copy()
                up[i, j] += h
                down = logits.copy()
                down[i, j] -= h
                fd = (cross_entropy(up, y)[0] - cross_entropy(down, y)[0]) / (2 * h)
                assert abs(fd - grad[i, j]) / max(abs(fd), abs(grad[i, j]), 1e-8) < 1e-6

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            cross_entropy(np.zeros((0, 2)), np.zeros(0, dtype=int))

    def test_out_of_range_labels_rejected(self):
        with pytest.raises(ValueError):
            cross_entropy(np.zeros((2, 2)), np.array([0, 2]))


class TestAdam:
    def test_zero_gradient_is_fixed_point(self):
        model = mlp((3, 4, 2), RngState(2))
        params = model.parameters()
        before = [p.copy() for p in params]
        state = AdamState(params, lr=0.1)
        adam_step(params, [np.zeros_like(p) for p in params], state)
        for b, p in zip(before, params):
            assert np.array_equal(b, p)

    def test_scalar_quadratic_converges(self):
        w = np.array([3.0])
        state = AdamState([w], lr=0.1)
        for _ in range(500):
            adam_step([w], [2.0 * w], state)
        assert abs(w[0]) < 1e-3

    def test_identical_runs_identical_trajectories(self):
        def run():
            model = mlp((4, 6, 2), RngState(10))
            state = AdamState(model.parameters(), lr=0.01)
            x = _uniform_batch(11, 32, 4)
            y = RngState(12).integers(0, 2, 32)
            for _ in range(20):
                logits, cache = forward(model, x, training=True)
                _, dlogits = cross_entropy(logits, y)
                grads, _ = backward(model, cache, dlogits)
                adam_step(model.parameters(), grads, state)
            return np.concatenate([p.reshape(-1) for p in model.parameters()])

        assert run().tobytes() == run().tobytes()

    def test_non_finite_gradient_rejected(self):
        w = np.array([1.0])
        state = AdamState([w], lr=0.1)
        with pytest.raises(FloatingPointError):
            adam_step([w], [np.array([np.nan])], state)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        model = mlp((5, 8, 3), RngState(9), activation="tanh", batch_norm=True)
        forward(model, _uniform_batch(15, 40, 5), training=True)  # move running stats
        path = tmp_path / "model.npz"
        save_model(model, path)
        loaded = load_model(path)
        x = _uniform_batch(16, 7, 5)
        out_a, _ = forward(model, x, training=False)
        out_b, _ = forward(loaded, x, training=False)
        assert out_a.tobytes() == out_b.tobytes()
        for a, b in zip(model.parameters(), loaded.parameters()):
            assert a.tobytes() == b.tobytes()

    def test_version_mismatch_rejected(self, tmp_path):
        model = mlp((2, 2), RngState(0))
        path = tmp_path / "model.npz"
        save_model(model, path)
        import json

        import decorrlab.nn as nn_mod

        data = dict(np.load(path))
        meta = json.loads(bytes(data["meta"]).decode())
        meta["version"] = 999
        data["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **data)
        with pytest.raises(ValueError):
            nn_mod.load_model(path)


class TestFitClassifier:
    def test_learns_a_linear_boundary(self):
        rng = RngState(123)
        x = np.asarray(rng.child("x").uniform(800 * 2)).reshape(800, 2) * 4 - 2
        y = (x[:, 0] + x[:, 1] > 0).astype(int)
        model = fit_classifier(x, y, (8,), rng.child("fit"), epochs=40)
        logits, _ = forward(model, x)
        assert (logits.argmax(axis=1) == y).mean() > 0.97
