import numpy as np
import pytest

from conftest import central_difference, random_model
from edbl.exceptions import DomainError, ShapeError
from edbl.losses import ce_per_sample
from edbl.model import SGD, Model, sgd_step
from edbl.numeric import softmax


def test_zero_weights_give_zero_logits(rng):
    model = Model(4, [5], rng=rng)
    model.expand_head(3, rng)
    for p in model.parameters():
        p[...] = 0.0
    np.testing.assert_array_equal(model.logits(rng.normal(size=(6, 4))), np.zeros((6, 3)))


def test_hand_computed_forward():
    model = Model(2, [2])
    model.hidden[0] = (np.array([[1.0, -1.0], [2.0, 0.5]]), np.array([0.0, 1.0]))
    model.expand_head(2, 0)
    model.head.weights[...] = [[1.0, 0.0], [1.0, -2.0]]
    x = np.array([[1.0, 1.0]])
    # hidden pre-activation: [1+2, -1+0.5+1] = [3, 0.5]; relu keeps both
    trace = model.forward(x)
    np.testing.assert_allclose(trace.h, [[3.0, 0.5]])
    np.testing.assert_allclose(trace.logits, [[3.0, 2.0]])


def test_trace_shapes(rng):
    model = random_model(rng)
    trace = model.forward(rng.normal(size=(9, 5)))
    assert trace.h.shape == (9, model.feature_dim)
    assert trace.logits.shape == (9, 5)


def test_forward_shape_error(rng):
    with pytest.raises(ShapeError):
        random_model(rng).forward(np.ones((2, 4)))


def test_forward_is_pure(rng):
    model = random_model(rng)
    x = rng.normal(size=(4, 5))
    a, b = model.forward(x), model.forward(x)
    np.testing.assert_array_equal(a.logits, b.logits)
    np.testing.assert_array_equal(a.h, b.h)


def test_zero_upstream_gives_zero_gradients(rng):
    model = random_model(rng)
    trace = model.forward(rng.normal(size=(3, 5)))
    grads = model.backward(trace, np.zeros_like(trace.logits))
    assert all(not np.any(g) for g in grads.arrays())


def test_backward_shape_error(rng):
    model = random_model(rng)
    trace = model.forward(rng.normal(size=(3, 5)))
    with pytest.raises(ShapeError):
        model.backward(trace, np.zeros((3, 4)))


def _rel_err(a, b, floor=1e-7):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


@pytest.mark.parametrize("seed", range(20))
def test_backprop_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    depth = rng.integers(0, 3)
    hidden = tuple(int(w) for w in rng.integers(2, 6, size=depth))
    model = random_model(rng, input_dim=int(rng.integers(2, 5)), hidden=hidden,
                         old=int(rng.integers(1, 3)), new=int(rng.integers(1, 3)))
    x = rng.normal(size=(4, model.input_dim))
    weights = rng.normal(size=(4, model.class_count))

    def loss():
        logits = model.forward(x).logits
        return float((weights * np.tanh(logits)).sum())

    trace = model.forward(x)
    upstream = weights * (1 - np.tanh(trace.logits) ** 2)
    grads = model.backward(trace, upstream).arrays()
    for param, grad in zip(model.parameters(), grads):
        numeric = central_difference(loss, param)
        assert _rel_err(grad, numeric) < 1e-4


def test_head_gradient_is_outer_product_for_ce(rng):
    model = random_model(rng)
    x = rng.normal(size=(1, 5))
    y = np.eye(5)[[3]]
    trace = model.forward(x)
    _, d = ce_per_sample(trace.logits, y)
    head = model.backward(trace, d).head
    np.testing.assert_allclose(head, np.outer(softmax(trace.logits)[0] - y[0], trace.h[0]), atol=1e-14)


class TestExpandHead:
    def test_rejects_zero(self, rng):
        with pytest.raises(DomainError):
            random_model(rng).expand_head(0, rng)

    def test_preserves_old_rows(self, rng):
        model = Model(4, [6], rng=rng).expand_head(5, rng)
        before = model.head.weights.copy()
        model.expand_head(3, rng)
        assert model.class_count == 8
        assert model.old_class_count == 5
        np.testing.assert_array_equal(model.head.weights[:5], before)

    def test_old_logits_unchanged(self, rng):
        model = Model(4, [6], rng=rng).expand_head(5, rng)
        x = rng.normal(size=(7, 4))
        before = model.logits(x)
        model.expand_head(2, rng)
        np.testing.assert_array_equal(model.logits(x)[:, :5], before)

    def test_deterministic(self):
        a = Model(4, [6], rng=1).expand_head(3, 2)
        b = Model(4, [6], rng=1).expand_head(3, 2)
        np.testing.assert_array_equal(a.head.weights, b.head.weights)

    def test_new_row_scale(self):
        model = Model(3, [400], rng=0).expand_head(50, 1)
        assert model.head.weights.std() == pytest.approx(1 / np.sqrt(400), rel=0.05)


class TestFreeze:
    def test_snapshot_is_isolated(self, rng):
        model = random_model(rng)
        x = rng.normal(size=(3, 5))
        frozen = model.freeze()
        np.testing.assert_array_equal(frozen.logits(x), model.logits(x))
        before = frozen.logits(x)
        model.head.weights += 1.0
        model.hidden[0][0][...] = 0.0
        np.testing.assert_array_equal(frozen.logits(x), before)

    def test_class_count_after_expand(self, rng):
        model = random_model(rng, old=2, new=2)
        frozen = model.freeze()
        model.expand_head(3, rng)
        assert frozen.class_count == 4 == model.old_class_count

    def test_parameters_read_only(self, rng):
        frozen = random_model(rng).freeze()
        with pytest.raises(ValueError):
            frozen._model.head.weights[0, 0] = 1.0


class TestSGD:
    def _setup(self):
        model = Model(1, [], rng=0).expand_head(1, 0)
        model.head.weights[...] = 0.0
        trace = model.forward(np.array([[1.0]]))
        return model, trace

    def test_plain_step(self):
        model, trace = self._setup()
        grads = model.backward(trace, np.array([[2.0]]))
        sgd_step(model, grads, lr=0.5)
        assert model.head.weights[0, 0] == pytest.approx(-1.0)

    def test_momentum_recurrence(self):
        model, trace = self._setup()
        grads = model.backward(trace, np.array([[1.0]]))
        opt = SGD(momentum=0.9, weight_decay=0.0)
        opt.step(model, grads, 0.1)
        opt.step(model, grads, 0.1)
        # v1 = g, v2 = 0.9 g + g: total displacement lr * 2.9 g
        assert model.head.weights[0, 0] == pytest.approx(-0.1 * 2.9)

    def test_weight_decay(self):
        model, trace = self._setup()
        model.head.weights[...] = 2.0
        grads = model.backward(trace, np.array([[0.0]]))
        SGD(momentum=0.0, weight_decay=0.1).step(model, grads, 1.0)
        assert model.head.weights[0, 0] == pytest.approx(2.0 - 0.2)

    def test_quadratic_bowl_decreases(self):
        model = Model(1, [], rng=0).expand_head(1, 0)
        model.head.weights[...] = 5.0
        x = np.array([[1.0]])
        opt = SGD(momentum=0.0, weight_decay=0.0)
        values = []
        for _ in range(30):
            trace = model.forward(x)
            values.append(0.5 * trace.logits[0, 0] ** 2)
            opt.step(model, model.backward(trace, trace.logits), 0.1)
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_rejects_nonpositive_lr(self):
        model, trace = self._setup()
        with pytest.raises(DomainError):
            sgd_step(model, model.backward(trace, np.array([[1.0]])), lr=0.0)


def test_checkpoint_round_trip_is_bit_exact(tmp_path, rng):
    model = random_model(rng)
    path = tmp_path / "m.bin"
    model.save(path)
    loaded = Model.load(path)
    assert loaded.old_class_count == model.old_class_count
    assert loaded.hidden_dims == model.hidden_dims
    for a, b in zip(model.parameters(), loaded.parameters()):
        assert a.tobytes() == b.tobytes()
    raw = path.read_bytes()
    assert raw[:8] == b"EDBLCKPT"
    assert int.from_bytes(raw[8:12], "little") == 1
