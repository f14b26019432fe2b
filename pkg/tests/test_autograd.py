import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negtag import autograd as ag
from negtag.autograd import Tape, Tensor
from negtag.errors import ConfigError, DataError, DivergenceError, UsageError


def leaf(a, name="x"):
    return Tensor(np.array(a, dtype=np.float64), requires_grad=True, name=name)


def grad_of(build, *leaves):
    for t in leaves:
        t.grad = None
    with Tape() as tape:
        loss = build()
    tape.backward(loss)
    return [t.grad for t in leaves]


def fd_check(build, x: Tensor, eps=1e-6):
    """Max relative error between tape and central-difference gradients of x."""
    (g,) = grad_of(build, x)

    def f():
        return float(build().data)

    worst = 0.0
    for idx in np.ndindex(x.shape):
        num = ag.numerical_grad(f, x.data, idx, eps)
        if abs(num) < 1e-9 and abs(g[idx]) < 1e-9:
            continue
        worst = max(worst, ag.relative_error(num, g[idx]))
    return worst


# --- scalar LSTM oracle, written without numpy vector ops -------------------------------


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_lstm(Wx, Wh, b, x, h, c):
    H = len(h)
    z = []
    for r in range(4 * H):
        acc = b[r]
        for j in range(len(x)):
            acc += Wx[r][j] * x[j]
        for j in range(H):
            acc += Wh[r][j] * h[j]
        z.append(acc)
    h_new, c_new = [], []
    for k in range(H):
        i = _sig(z[k])
        f = _sig(z[H + k])
        g = math.tanh(z[2 * H + k])
        o = _sig(z[3 * H + k])
        ck = f * c[k] + i * g
        c_new.append(ck)
        h_new.append(o * math.tanh(ck))
    return h_new, c_new


def cell(D, H, rng, scale=1.0):
    return ag.LstmCellParams(
        leaf(rng.normal(size=(4 * H, D)) * scale, "Wx"),
        leaf(rng.normal(size=(4 * H, H)) * scale, "Wh"),
        leaf(rng.normal(size=4 * H) * scale, "b"),
    )


class TestLstmStep:
    def test_all_zero(self):
        p = ag.LstmCellParams(leaf(np.zeros((8, 3))), leaf(np.zeros((8, 2))), leaf(np.zeros(8)))
        h, c = ag.lstm_step(p, leaf(np.zeros(3)), leaf(np.zeros(2)), leaf(np.zeros(2)))
        assert np.all(h.data == 0) and np.all(c.data == 0)

    def test_closed_form_unit(self):
        big = 40.0
        p = ag.LstmCellParams(leaf(np.zeros((4, 1))), leaf(np.zeros((4, 1))), leaf([0.0, 0.0, big, big]))
        h, c = ag.lstm_step(p, leaf([0.0]), leaf([0.0]), leaf([0.0]))
        assert c.data[0] == pytest.approx(0.5, abs=1e-12)
        assert h.data[0] == pytest.approx(math.tanh(0.5), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scalar_oracle(self, seed):
        rng = np.random.default_rng(seed)
        p = cell(2, 3, rng)
        x, h0, c0 = rng.normal(size=2), rng.normal(size=3), rng.normal(size=3)
        h, c = ag.lstm_step(p, leaf(x), leaf(h0), leaf(c0))
        hr, cr = scalar_lstm(p.input_weights.data.tolist(), p.recurrent_weights.data.tolist(),
                             p.bias.data.tolist(), x.tolist(), h0.tolist(), c0.tolist())
        np.testing.assert_allclose(h.data, hr, atol=1e-12, rtol=0)
        np.testing.assert_allclose(c.data, cr, atol=1e-12, rtol=0)

    def test_shape_mismatch(self):
        p = cell(2, 3, np.random.default_rng(0))
        with pytest.raises(ConfigError):
            ag.lstm_step(p, leaf(np.zeros(4)), leaf(np.zeros(3)), leaf(np.zeros(3)))

    def test_mask_carries_state(self):
        rng = np.random.default_rng(1)
        p = cell(2, 3, rng)
        x, h0, c0 = leaf(rng.normal(size=(2, 2))), leaf(rng.normal(size=(2, 3))), leaf(rng.normal(size=(2, 3)))
        h, c = ag.lstm_step(p, x, h0, c0, mask=np.array([1.0, 0.0]))
        np.testing.assert_array_equal(h.data[1], h0.data[1])
        np.testing.assert_array_equal(c.data[1], c0.data[1])

    @pytest.mark.parametrize("seed", range(3))
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        p = cell(3, 2, rng, 0.7)
        x, h0, c0 = leaf(rng.normal(size=(2, 3))), leaf(rng.normal(size=(2, 2))), leaf(rng.normal(size=(2, 2)))
        mask = np.array([1.0, 0.0])
        w1, w2 = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))

        def build():
            h, c = ag.lstm_step(p, x, h0, c0, mask)
            h2, c2 = ag.lstm_step(p, x, h, c)
            return ag.add(ag.sum(ag.mul(h2, Tensor(w1))), ag.sum(ag.mul(c2, Tensor(w2))))

        for t in (x, h0, c0, *p.tensors()):
            assert fd_check(build, t) < 1e-6


class TestLstmSequence:
    @pytest.mark.parametrize("reverse", [False, True])
    def test_matches_stepwise(self, reverse):
        rng = np.random.default_rng(3)
        p = cell(3, 4, rng, 0.5)
        xs = rng.normal(size=(5, 2, 3))
        mask = np.array([[1, 1], [1, 1], [1, 1], [1, 0], [1, 0]], dtype=float)
        H = ag.lstm_sequence(p, Tensor(xs), mask, reverse=reverse)
        h, c = Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 4)))
        order = range(4, -1, -1) if reverse else range(5)
        for t in order:
            h, c = ag.lstm_step(p, Tensor(xs[t]), h, c, mask[t])
            np.testing.assert_allclose(H.data[t], h.data, atol=1e-13)

    @pytest.mark.parametrize("reverse", [False, True])
    def test_gradients(self, reverse):
        rng = np.random.default_rng(4)
        p = cell(2, 3, rng, 0.6)
        xs = leaf(rng.normal(size=(4, 2, 2)), "xs")
        mask = np.array([[1, 1], [1, 1], [1, 0], [1, 0]], dtype=float)
        w = Tensor(rng.normal(size=(4, 2, 3)))

        def build():
            return ag.sum(ag.mul(ag.lstm_sequence(p, xs, mask, reverse=reverse), w))

        for t in (xs, *p.tensors()):
            assert fd_check(build, t) < 1e-6


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(ag.softmax(leaf([0.0, 0.0, 0.0])).data, [1 / 3] * 3)

    def test_ratio(self):
        c = 3.7
        np.testing.assert_allclose(ag.softmax(leaf([c, c + math.log(2)])).data, [1 / 3, 2 / 3], atol=1e-12)

    def test_no_overflow(self):
        p = ag.softmax(leaf([1000.0, 0.0])).data
        assert np.all(np.isfinite(p))
        assert p[0] == pytest.approx(1.0) and p[1] == pytest.approx(0.0, abs=1e-300)

    def test_empty(self):
        with pytest.raises(ConfigError):
            ag.softmax(leaf(np.zeros(0)))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
    @settings(max_examples=60, deadline=None)
    def test_rows_positive_and_normalised(self, logits):
        p = ag.softmax(leaf(logits)).data
        assert abs(p.sum() - 1.0) < 1e-6
        assert np.all(p > 0)


class TestCrossEntropy:
    def test_one_hot_zero(self):
        assert float(ag.cross_entropy(leaf([0.0, 1.0, 0.0]), 1).data) == 0.0

    def test_uniform(self):
        assert float(ag.cross_entropy(leaf([0.25] * 4), 2).data) == pytest.approx(math.log(4))

    def test_out_of_range(self):
        with pytest.raises(DataError):
            ag.cross_entropy(leaf([0.5, 0.5]), 2)
        with pytest.raises(DataError):
            ag.cross_entropy(leaf([0.5, 0.5]), -1)

    @pytest.mark.parametrize("seed", range(5))
    def test_logit_gradient_closed_form(self, seed):
        rng = np.random.default_rng(seed)
        z = leaf(rng.normal(size=5) * 2)
        gold = int(rng.integers(5))
        (g,) = grad_of(lambda: ag.cross_entropy(ag.softmax(z), gold), z)
        e = np.exp(z.data - z.data.max())
        expected = e / e.sum()
        expected[gold] -= 1.0
        np.testing.assert_allclose(g, expected, atol=1e-12)
        assert fd_check(lambda: ag.cross_entropy(ag.softmax(z), gold), z) < 1e-6

    def test_batched_weights(self):
        rng = np.random.default_rng(0)
        z = leaf(rng.normal(size=(3, 2, 4)))
        gold = rng.integers(4, size=(3, 2))
        w = np.array([[1.0, 1.0], [1.0, 0.0], [0.5, 0.0]])
        p = ag.softmax(z).data
        manual = -sum(w[i, j] * math.log(p[i, j, gold[i, j]]) for i in range(3) for j in range(2))
        assert float(ag.cross_entropy(ag.softmax(z), gold, w).data) == pytest.approx(manual, rel=1e-12)
        assert fd_check(lambda: ag.cross_entropy(ag.softmax(z), gold, w), z) < 1e-6


class TestDropout:
    def test_rate_zero_identity(self):
        x = leaf(np.arange(5.0))
        assert ag.dropout(x, 0.0, True, np.random.default_rng(0)) is x

    def test_infer_identity(self):
        x = leaf(np.arange(5.0))
        y = ag.dropout(x, 0.7, False, np.random.default_rng(0))
        assert y is x

    def test_law_of_large_numbers(self):
        y = ag.dropout(leaf(np.ones(100_000)), 0.5, True, np.random.default_rng(0))
        assert abs(y.data.mean() - 1.0) < 0.02
        assert set(np.unique(y.data)) <= {0.0, 2.0}

    @pytest.mark.parametrize("rate", [1.0, 1.5, -0.1])
    def test_bad_rate(self, rate):
        with pytest.raises(ConfigError):
            ag.dropout(leaf([1.0]), rate, True, np.random.default_rng(0))


class TestBackward:
    def test_sum_gives_ones(self):
        x = leaf(np.random.default_rng(0).normal(size=(2, 3, 4)))
        (g,) = grad_of(lambda: ag.sum(x), x)
        np.testing.assert_array_equal(g, np.ones((2, 3, 4)))

    def test_dot_self(self):
        x = leaf([1.0, -2.0, 3.0])
        (g,) = grad_of(lambda: ag.dot(x, x), x)
        np.testing.assert_allclose(g, 2 * x.data)

    def test_non_scalar_rejected(self):
        x = leaf([1.0, 2.0])
        with Tape() as tape:
            y = ag.mul(x, x)
        with pytest.raises(UsageError):
            tape.backward(y)

    def test_reuse_accumulates(self):
        x = leaf([0.3, -0.7])

        def build():
            a = ag.tanh(x)
            return ag.add(ag.sum(ag.mul(a, x)), ag.sum(ag.exp(x)))

        assert fd_check(build, x) < 1e-7

    def test_tape_order_is_topological(self):
        x = leaf([1.0])
        with Tape() as tape:
            y = ag.tanh(x)
            z = ag.mul(y, y)
            ag.sum(z)
        assert [n.op for n in tape.nodes] == ["tanh", "mul", "sum"]
        produced = set()
        for node in tape.nodes:
            for t in node.inputs:
                assert t is x or id(t) in produced
            produced.update(id(t) for t in node.outputs)

    @pytest.mark.parametrize(
        "op, b_shape",
        [
            (lambda a, b: ag.sum(ag.mul(ag.sigmoid(a), b)), (2, 2)),
            (lambda a, b: ag.sum(ag.log(ag.add(ag.exp(a), ag.mul(b, b)))), (2, 2)),
            (lambda a, b: ag.sum(ag.sub(ag.tanh(a), b)), (2, 2)),
            (lambda a, b: ag.sum(ag.tanh(ag.matmul(a, b))), (2, 3)),
            (lambda a, b: ag.sum(ag.mul(ag.take(ag.concat([a, b], axis=0), 3), ag.take(b, 0))), (2, 2)),
        ],
    )
    def test_op_gradients(self, op, b_shape):
        rng = np.random.default_rng(11)
        a = leaf(rng.normal(size=(2, 2)), "a")
        b = leaf(rng.normal(size=b_shape), "b")
        assert fd_check(lambda: op(a, b), a) < 1e-6
        assert fd_check(lambda: op(a, b), b) < 1e-6

    def test_broadcast_add(self):
        a = leaf(np.random.default_rng(0).normal(size=(3, 2)), "a")
        b = leaf([0.5, -1.0], "b")
        (ga, gb) = grad_of(lambda: ag.sum(ag.mul(ag.add(a, b), ag.add(a, b))), a, b)
        np.testing.assert_allclose(gb, (2 * (a.data + b.data)).sum(axis=0))

    def test_affine_and_embed(self):
        rng = np.random.default_rng(2)
        W = leaf(rng.normal(size=(3, 4)), "W")
        bias = leaf(rng.normal(size=3), "b")
        table = leaf(rng.normal(size=(5, 4)), "E")
        ids = np.array([[0, 2], [2, 4]])
        build = lambda: ag.sum(ag.tanh(ag.affine(ag.embed(table, ids), W, bias)))  # noqa: E731
        for t in (W, bias, table):
            assert fd_check(build, t) < 1e-6

    def test_detach_blocks(self):
        x = leaf([1.0, 2.0])
        (g,) = grad_of(lambda: ag.add(ag.sum(ag.detach(x)), ag.sum(ag.mul(x, Tensor([0.0, 0.0])))), x)
        np.testing.assert_array_equal(g, [0.0, 0.0])


class TestAdam:
    def test_zero_gradient_no_change(self):
        p = {"w": leaf([1.0, -2.0], "w")}
        p["w"].grad = np.zeros(2)
        st_ = ag.AdamState()
        ag.adam_step(st_, p)
        np.testing.assert_array_equal(p["w"].data, [1.0, -2.0])
        assert st_.step_count == 1

    def test_first_step_closed_form(self):
        p = {"t": leaf([1.0], "t")}
        p["t"].grad = np.array([1.0])
        ag.adam_step(ag.AdamState(), p)
        assert p["t"].data[0] == pytest.approx(1 - 0.001 * (1 / (1 + 1e-8)), abs=1e-15)

    def test_quadratic_descent(self):
        # with lr 1e-3 each step moves at most ~1e-3, so 100 steps cannot pass 0.9
        theta = leaf([1.0], "theta")
        state = ag.AdamState(lr=0.01)
        trace = []
        for _ in range(100):
            (g,) = grad_of(lambda: ag.dot(theta, theta), theta)
            ag.adam_step(state, {"theta": theta})
            trace.append(abs(theta.data[0]))
        assert trace[-1] < 0.9
        assert all(b <= a for a, b in zip(trace, trace[1:]))
        assert state.step_count == 100

    def test_nan_names_parameter(self):
        p = {"enc.W": leaf([1.0], "enc.W")}
        p["enc.W"].grad = np.array([np.nan])
        with pytest.raises(DivergenceError, match="enc.W"):
            ag.adam_step(ag.AdamState(), p)

    def test_moment_shapes(self):
        p = {"a": leaf(np.zeros((2, 3)), "a"), "b": leaf(np.zeros(4), "b")}
        for t in p.values():
            t.grad = np.ones(t.shape)
        s = ag.AdamState()
        ag.adam_step(s, p)
        assert s.first_moment["a"].shape == (2, 3) and s.second_moment["b"].shape == (4,)


class TestInit:
    def test_glorot_bounds(self):
        w = ag.glorot(np.random.default_rng(0), (40, 60), np.float64)
        assert np.abs(w).max() <= math.sqrt(6 / 100)

    def test_forget_bias(self):
        p = ag.init_lstm(np.random.default_rng(0), "l", 3, 4, np.float64)
        b = p["l.b"].data
        np.testing.assert_array_equal(b[4:8], 1.0)
        np.testing.assert_array_equal(np.delete(b, range(4, 8)), 0.0)

    def test_clip(self):
        p = {"a": leaf([0.0, 0.0], "a")}
        p["a"].grad = np.array([3.0, 4.0])
        assert ag.clip_grad_norm(p, 1.0) == pytest.approx(5.0)
        assert ag.global_grad_norm(p) == pytest.approx(1.0)
