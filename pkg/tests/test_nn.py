import math

import numpy as np
import pytest

from dpbudget import nn
from dpbudget.errors import DomainError, ParseError


def fd_gradient(model, x, label, step=1e-5):
    """Central-finite-difference gradient of the loss for one example."""
    grads = []
    for arr in [p for w, b in zip(model.weights, model.biases) for p in (w, b)]:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            up = nn.cross_entropy(nn.forward(model, x), np.array([label]))[0]
            arr[idx] = orig - step
            down = nn.cross_entropy(nn.forward(model, x), np.array([label]))[0]
            arr[idx] = orig
            g[idx] = (up - down) / (2 * step)
            it.iternext()
        grads.append(g)
    return grads


class TestForward:
    def test_zero_model_uniform_softmax(self):
        model = nn.MlpModel(
            [np.zeros((4, 8)), np.zeros((8, 2))],
            [np.zeros(8), np.zeros(2)],
        )
        x = np.array([0.3, -0.2, 0.9, 0.1])
        logits = nn.forward(model, x)
        assert np.allclose(logits, 0.0)
        loss = nn.cross_entropy(logits, np.array([1]))[0]
        assert loss == pytest.approx(math.log(2), rel=1e-12)

    def test_identity_layer(self):
        model = nn.MlpModel([np.eye(3)], [np.zeros(3)])
        x = np.array([1.5, -2.0, 0.25])
        assert np.allclose(nn.forward(model, x), x)

    def test_matches_independent_forward(self):
        model = nn.MlpModel.init([5, 7, 3], seed=11)
        rng = np.random.default_rng(3)
        x = rng.normal(size=5)
        # hand-rolled pass
        h = np.maximum(x @ model.weights[0] + model.biases[0], 0.0)
        logits = h @ model.weights[1] + model.biases[1]
        assert np.allclose(nn.forward(model, x), logits, atol=1e-12)
        # batch path agrees with the single path
        batch = rng.normal(size=(6, 5))
        stacked = np.stack([nn.forward(model, row) for row in batch])
        assert np.allclose(nn.forward(model, batch), stacked, atol=1e-12)

    def test_dimension_mismatch(self):
        model = nn.MlpModel.init([5, 3], seed=0)
        with pytest.raises(DomainError):
            nn.forward(model, np.zeros(4))

    def test_softmax_normalizes(self):
        model = nn.MlpModel.init([4, 6, 3], seed=5)
        logits = nn.forward(model, np.random.default_rng(1).normal(size=(10, 4)))
        p = nn.softmax(logits)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(nn.cross_entropy(logits, np.zeros(10, dtype=int)) >= 0.0)


class TestPerExampleGradients:
    @pytest.mark.parametrize("sizes", [(9, 10, 20, 10, 2), (2, 8, 2)])
    def test_finite_difference_oracle(self, sizes):
        model = nn.MlpModel.init(sizes, seed=42)
        rng = np.random.default_rng(7)
        x = rng.normal(size=(3, sizes[0]))
        y = rng.integers(0, sizes[-1], size=3)
        grads = nn.per_example_gradients(model, x, y)
        for i in range(3):
            exact = [g[i] for g in grads]
            approx = fd_gradient(model, x[i], int(y[i]))
            for a, b in zip(exact, approx):
                denom = np.maximum(np.abs(b), 1e-6)
                assert np.max(np.abs(a - b) / denom) < 1e-4

    def test_duplicated_example_identical(self):
        model = nn.MlpModel.init([4, 6, 3], seed=1)
        x = np.array([[0.1, 0.2, 0.3, 0.4]] * 2)
        y = np.array([2, 2])
        grads = nn.per_example_gradients(model, x, y)
        for g in grads:
            assert np.array_equal(g[0], g[1])

    def test_mean_matches_batch_gradient(self):
        model = nn.MlpModel.init([9, 10, 20, 10, 2], seed=3)
        rng = np.random.default_rng(11)
        x = rng.normal(size=(32, 9))
        y = rng.integers(0, 2, size=32)
        mean = nn.mean_gradients(nn.per_example_gradients(model, x, y))
        # whole-batch gradient via finite differences on the mean loss
        step = 1e-6
        for p_idx, arr in enumerate([p for w, b in zip(model.weights, model.biases) for p in (w, b)]):
            flat_idx = np.unravel_index(rng.integers(0, arr.size), arr.shape)
            orig = arr[flat_idx]
            arr[flat_idx] = orig + step
            up = nn.cross_entropy(nn.forward(model, x), y).mean()
            arr[flat_idx] = orig - step
            down = nn.cross_entropy(nn.forward(model, x), y).mean()
            arr[flat_idx] = orig
            fd = (up - down) / (2 * step)
            assert mean[p_idx][flat_idx] == pytest.approx(fd, abs=2e-9)

    def test_empty_batch_rejected(self):
        model = nn.MlpModel.init([4, 2], seed=0)
        with pytest.raises(DomainError):
            nn.per_example_gradients(model, np.empty((0, 4)), np.empty(0, dtype=int))

    def test_flatten_round_trip(self):
        model = nn.MlpModel.init([5, 7, 3], seed=2)
        rng = np.random.default_rng(9)
        x = rng.normal(size=(4, 5))
        y = rng.integers(0, 3, size=4)
        grads = nn.per_example_gradients(model, x, y)
        flat = nn.flatten_per_example(grads)
        assert flat.shape == (4, model.n_params)
        rebuilt = nn.unflatten_gradient(model, flat[2])
        for a, b in zip(rebuilt, [g[2] for g in grads]):
            assert np.array_equal(a, b)


class TestSgdStep:
    def test_zero_eta_no_change(self):
        model = nn.MlpModel.init([3, 2], seed=0)
        before = [w.copy() for w in model.weights]
        grads = [np.ones_like(model.weights[0]), np.ones_like(model.biases[0])]
        nn.sgd_step(model, grads, 0.0)
        assert np.array_equal(model.weights[0], before[0])

    def test_zero_gradient_no_change(self):
        model = nn.MlpModel.init([3, 2], seed=0)
        before = [w.copy() for w in model.weights]
        nn.sgd_step(model, [np.zeros((3, 2)), np.zeros(2)], 0.5)
        assert np.array_equal(model.weights[0], before[0])

    def test_two_half_steps_equal_one(self):
        a = nn.MlpModel.init([3, 2], seed=4)
        b = a.copy()
        grads = [np.full((3, 2), 0.25), np.full(2, -0.5)]
        nn.sgd_step(a, grads, 0.2)
        nn.sgd_step(b, grads, 0.1)
        nn.sgd_step(b, grads, 0.1)
        assert np.allclose(a.weights[0], b.weights[0], atol=1e-15)
        assert np.allclose(a.biases[0], b.biases[0], atol=1e-15)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = nn.MlpModel.init([9, 10, 20, 10, 2], seed=8)
        path = str(tmp_path / "model.ckpt")
        nn.save_checkpoint(model, path)
        back = nn.load_checkpoint(path)
        assert back.layer_sizes == model.layer_sizes
        for a, b in zip(back.weights, model.weights):
            assert np.array_equal(a, b)
        for a, b in zip(back.biases, model.biases):
            assert np.array_equal(a, b)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint\n")
        with pytest.raises(ParseError):
            nn.load_checkpoint(str(path))


class TestInit:
    def test_seed_reproducible(self):
        a = nn.MlpModel.init([6, 5, 2], seed=77)
        b = nn.MlpModel.init([6, 5, 2], seed=77)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_glorot_range(self):
        model = nn.MlpModel.init([100, 50], seed=0)
        limit = math.sqrt(6.0 / 150.0)
        assert np.all(np.abs(model.weights[0]) <= limit)
        assert np.all(model.biases[0] == 0.0)

    def test_chain_validation(self):
        with pytest.raises(DomainError):
            nn.MlpModel([np.zeros((3, 4)), np.zeros((5, 2))], [np.zeros(4), np.zeros(2)])
