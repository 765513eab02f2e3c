import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialectid.embeddings import SentenceMatrix
from dialectid.neural import (
    Adam,
    NeuralError,
    Tensor,
    TrainedClassifier,
    adam_update,
    conv1d,
    dropout,
    lstm_step,
    make_config,
    max_over_time,
    predict_classifier,
    softmax_cross_entropy,
    train_classifier,
)
from dialectid.neural.models import Batch, Network

import gradcheck


def test_conv_zero_kernels():
    out = conv1d(np.ones((5, 2)), np.zeros((6, 4)), np.zeros(4))
    assert out.shape == (3, 4) and not out.data.any()


def test_conv_hand_value():
    x = np.array([[1.0, 1.0], [2.0, 0.0], [1.0, 1.0]])  # sums to 6
    out = conv1d(x, np.ones((6, 1)), np.zeros(1))
    assert out.data.tolist() == [[6.0]]
    assert conv1d(x, -np.ones((6, 1)), np.zeros(1)).data.tolist() == [[0.0]]


def test_conv_output_height():
    assert conv1d(np.zeros((10, 3)), np.zeros((12, 2)), np.zeros(2)).shape == (7, 2)
    with pytest.raises(ValueError):
        conv1d(np.zeros((2, 3)), np.zeros((9, 2)), np.zeros(2))


def test_max_over_time():
    assert max_over_time(np.array([[1.0, 2.0]])).data.tolist() == [1.0, 2.0]
    assert max_over_time(np.array([[1.0], [5.0], [3.0]])).data.tolist() == [5.0]


@settings(max_examples=30)
@given(st.lists(st.lists(st.floats(-10, 10), min_size=3, max_size=3), min_size=1, max_size=8),
       st.randoms(use_true_random=False))
def test_max_over_time_permutation(rows, rnd):
    perm = rows[:]
    rnd.shuffle(perm)
    assert np.array_equal(max_over_time(np.array(rows)).data, max_over_time(np.array(perm)).data)


def zero_lstm(d=3, H=4):
    return {"Wx": Tensor(np.zeros((d, 4 * H))), "Wh": Tensor(np.zeros((H, 4 * H))),
            "b": Tensor(np.zeros(4 * H))}


def test_lstm_all_zero():
    h, c = lstm_step(np.zeros(3), np.zeros(4), np.zeros(4), zero_lstm())
    assert not h.data.any() and not c.data.any()


def test_lstm_saturated_gates_keep_cell():
    p = zero_lstm()
    b = np.zeros(16)
    b[0:4], b[4:8] = -50.0, 50.0  # input gate closed, forget gate open
    p["b"] = Tensor(b)
    c_prev = np.array([0.3, -0.7, 1.5, 0.0])
    _, c = lstm_step(np.ones(3), np.ones(4), c_prev, p)
    assert np.allclose(c.data, c_prev, atol=1e-6)


@settings(max_examples=30)
@given(st.integers(0, 2 ** 31))
def test_lstm_output_bounded(seed):
    rng = np.random.default_rng(seed)
    p = {k: Tensor(rng.normal(scale=5, size=v.shape)) for k, v in zero_lstm().items()}
    h, _ = lstm_step(rng.normal(size=3), rng.normal(size=4), rng.normal(scale=10, size=4), p)
    assert np.all(np.abs(h.data) <= 1.0)


def test_dropout_modes():
    x = np.arange(10.0)
    rng = np.random.default_rng(0)
    assert np.array_equal(dropout(x, 0.0, True, rng).data, x)
    assert np.array_equal(dropout(x, 0.5, False, rng).data, x)
    y = dropout(np.ones(100_000), 0.5, True, np.random.default_rng(1)).data
    assert abs((y > 0).mean() - 0.5) < 0.01
    assert set(np.unique(y)) <= {0.0, 2.0}


def test_softmax_uniform():
    loss, p = softmax_cross_entropy(Tensor(np.zeros(4)), 2)
    assert np.allclose(p, 0.25) and float(loss.data) == pytest.approx(math.log(4), abs=1e-4)


@settings(max_examples=30)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.floats(-1e3, 1e3))
def test_softmax_shift_invariance(z, c):
    z = np.array(z)
    _, p1 = softmax_cross_entropy(Tensor(z), 0)
    _, p2 = softmax_cross_entropy(Tensor(z + c), 0)
    assert np.allclose(p1, p2, atol=1e-9)


def test_softmax_large_logit():
    loss, p = softmax_cross_entropy(Tensor(np.array([1000.0, 0.0, 0.0])), 0)
    assert p[0] == pytest.approx(1.0) and np.isfinite(float(loss.data))


def test_backward_basics():
    x = Tensor(np.array(3.0), requires_grad=True)
    (x * x).backward()
    assert float(x.grad) == 6.0
    w = Tensor(np.ones(3), requires_grad=True)
    (w * 0.0 + 2.0).sum().backward()
    assert not w.grad.any()


def test_adam_steps():
    p = {"w": np.array([1.0, -2.0])}
    new, state = adam_update(p, {"w": np.zeros(2)})
    assert np.array_equal(new["w"], p["w"])
    new, _ = adam_update(p, {"w": np.array([0.3, -5.0])}, lr=1e-3)
    assert np.allclose(new["w"] - p["w"], [-1e-3, 1e-3], rtol=1e-4)
    a1, s1 = adam_update(p, {"w": np.array([1.0, 1.0])})
    a2, s2 = adam_update(p, {"w": np.array([1.0, 1.0])})
    assert np.array_equal(a1["w"], a2["w"])


def test_adam_class_matches_functional():
    t = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam({"w": t}, lr=0.01)
    ref, state = {"w": t.data.copy()}, None
    for g in ([0.5, -1.0], [0.1, 0.2], [-0.3, 0.0]):
        t.grad = np.array(g)
        opt.step()
        ref, state = adam_update(ref, {"w": np.array(g)}, state, lr=0.01)
    assert np.allclose(t.data, ref["w"])


@pytest.mark.parametrize("name", list(gradcheck.CASES))
def test_gradients(name):
    assert gradcheck.run_case(name, instances=20, seed=1) < gradcheck.TOLERANCE


@pytest.mark.parametrize("arch", ["LSTM", "CLSTM", "CNN"])
def test_padding_does_not_change_logits(arch):
    rng = np.random.default_rng(0)
    d = 3
    net = Network(arch, make_config(arch, **gradcheck.SMALL[arch]), d, 2, None, rng)
    lengths = np.array([6, 4])
    fixed = rng.normal(size=(2, 6, d))
    fixed[1, 4:] = 0
    short = Batch(np.full((2, 6), -1), fixed, lengths)
    padded = np.concatenate([fixed, np.zeros((2, 5, d))], axis=1)
    long = Batch(np.full((2, 11), -1), padded, lengths)
    assert np.allclose(net.logits(short).data, net.logits(long).data, atol=1e-12)


def matrices(n_per_class=40, d=6, seed=0):
    """Two classes separated by the sign of the first embedding coordinate."""
    rng = np.random.default_rng(seed)
    out = []
    for label, sign in (("AA", 1.0), ("BB", -1.0)):
        for i in range(n_per_class):
            n = int(rng.integers(3, 9))
            v = rng.normal(scale=0.3, size=(n, d))
            v[:, 0] += sign
            out.append(SentenceMatrix(v, 12, label, [f"{label.lower()}{j}" for j in range(n)]))
    return out


FAST = {"CNN": dict(filters_per_size=8), "LSTM": dict(hidden_size=8),
        "CLSTM": dict(filters=8, hidden_size=8)}


@pytest.mark.parametrize("arch", ["CNN", "LSTM", "CLSTM"])
def test_trivial_two_class_fit(arch):
    data = matrices()
    model = train_classifier(arch, data, make_config(arch, seed=1, **FAST[arch]))
    acc = np.mean([p == m.label for p, m in zip(model.predict(data), data)])
    assert acc >= 0.99
    assert 1 <= model.best_epoch <= 25


def test_training_is_deterministic():
    data = matrices(20)
    cfg = make_config("CNN", seed=3, epochs=3, **FAST["CNN"])
    a, b = train_classifier("CNN", data, cfg), train_classifier("CNN", data, cfg)
    for k in a.network.params:
        assert np.array_equal(a.network.params[k].data, b.network.params[k].data)


def test_early_stopping():
    rng = np.random.default_rng(0)
    noise = [SentenceMatrix(rng.normal(size=(5, 4)), 8, lab, []) for lab in ["AA", "BB"] * 40]
    cfg = make_config("LSTM", seed=0, learning_rate=0.05, patience=2, hidden_size=16, dropout=0.0)
    model = train_classifier("LSTM", noise, cfg)
    assert len(model.log_rows) < 25
    assert model.best_epoch == len(model.log_rows) - 2


def test_predict_classifier_probabilities(tmp_path):
    data = matrices(40)
    cfg = make_config("LSTM", seed=2, learning_rate=0.01, **FAST["LSTM"])
    model = train_classifier("LSTM", data, cfg)
    label, p = predict_classifier(model, data[0])
    assert label == "AA" and p[0] > 0.9
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.array_equal(p, predict_classifier(model, data[0])[1])
    model.save(tmp_path / "m.nn")
    back = TrainedClassifier.load(tmp_path / "m.nn")
    assert np.array_equal(back.predict_proba(data), model.predict_proba(data))


def test_errors():
    data = matrices(5)
    with pytest.raises(NeuralError):
        train_classifier("GRU", data)
    with pytest.raises(NeuralError):
        train_classifier("CNN", [m for m in data if m.label == "AA"])
    model = train_classifier("LSTM", data, make_config("LSTM", epochs=1, **FAST["LSTM"]))
    with pytest.raises(NeuralError, match="dimension"):
        model.predict([SentenceMatrix(np.zeros((3, 2)), 5, "AA")])
