import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gradient_suite import CASES, TOLERANCE, worst_errors
from vired.tensorcore import (
    AdamWState, AttentionWeights, ConfigError, LrSchedule, NonFiniteError, ShapeError, Tensor,
    adamw_step, lr_at, mha, no_grad, ops, stream,
)

finite = st.floats(-20, 20, allow_nan=False, width=32)


def t(x, grad=False):
    return Tensor(np.asarray(x, dtype=np.float32), requires_grad=grad)


class TestMatmul:
    def test_identity(self):
        out = ops.matmul(t(np.eye(2)), t([[1, 2], [3, 4]]))
        np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])

    def test_hand_expansion(self):
        # 1*5+2*7, 1*6+2*8, 3*5+4*7, 3*6+4*8
        out = ops.matmul(t([[1, 2], [3, 4]]), t([[5, 6], [7, 8]]))
        np.testing.assert_array_equal(out.data, [[19, 22], [43, 50]])

    def test_zero_annihilates(self):
        out = ops.matmul(t(np.zeros((2, 3))), t(np.random.default_rng(0).normal(size=(3, 4))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ops.matmul(t(np.zeros((2, 3))), t(np.zeros((2, 3))))

    def test_backward_formulas(self):
        rng = np.random.default_rng(1)
        a, b = t(rng.normal(size=(3, 4)), True), t(rng.normal(size=(4, 2)), True)
        g = rng.normal(size=(3, 2)).astype(np.float32)
        ops.matmul(a, b).backward(g)
        np.testing.assert_allclose(a.grad, g @ b.data.T, rtol=1e-6)
        np.testing.assert_allclose(b.grad, a.data.T @ g, rtol=1e-6)


class TestConv2d:
    def test_unit_kernel_is_identity(self):
        x = np.arange(16, dtype=np.float32).reshape(1, 4, 4)
        out = ops.conv2d(t(x), t(np.ones((1, 1, 1, 1))))
        np.testing.assert_array_equal(out.data, x)

    def test_output_shape(self):
        # floor((5 + 2 - 3) / 2) + 1 = 3
        out = ops.conv2d(t(np.zeros((1, 5, 5))), t(np.zeros((2, 1, 3, 3))), stride=2, padding=1)
        assert out.shape == (2, 3, 3)

    def test_sum_oracle(self):
        out = ops.conv2d(t(np.ones((1, 3, 3))), t(np.ones((1, 1, 3, 3))))
        np.testing.assert_array_equal(out.data, [[[9.0]]])

    def test_kernel_larger_than_padded_input(self):
        with pytest.raises(ShapeError):
            ops.conv2d(t(np.zeros((1, 2, 2))), t(np.zeros((1, 1, 5, 5))), padding=1)

    def test_against_direct_loops(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 6, 5)).astype(np.float32)
        k = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        out = ops.conv2d(t(x), t(k), stride=2, padding=1).data
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        ref = np.zeros((3, 3, 3))
        for o in range(3):
            for i in range(3):
                for j in range(3):
                    ref[o, i, j] = (xp[:, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * k[o]).sum()
        np.testing.assert_allclose(out, ref, atol=1e-5)


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_array_equal(ops.softmax(t([0.0, 0.0])).data, [0.5, 0.5])

    def test_direct_oracle(self):
        x = [1.0, 2.0, 3.0]
        z = sum(math.exp(v) for v in x)
        expected = [math.exp(v) / z for v in x]
        got = ops.softmax(t(x)).data
        np.testing.assert_allclose(got, expected, atol=1e-6)
        np.testing.assert_allclose(got, [0.0900, 0.2447, 0.6652], atol=1e-4)

    @given(arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 7)), elements=finite),
           st.floats(-50, 50, width=32))
    def test_rows_and_shift(self, x, c):
        p = ops.softmax(t(x), axis=-1).data
        assert (p >= 0).all()
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)
        np.testing.assert_allclose(ops.softmax(t(x + c), axis=-1).data, p, atol=1e-5)

    def test_large_logits_stay_finite(self):
        p = ops.softmax(t([1000.0, 1001.0])).data
        assert np.isfinite(p).all()


class TestLayerNorm:
    def test_constant_row_is_zero(self):
        out = ops.layer_norm(t([[3.0, 3.0, 3.0]]), t(np.ones(3)), t(np.zeros(3)))
        np.testing.assert_array_equal(out.data, np.zeros((1, 3)))

    def test_two_values(self):
        # mean 2, population std 1
        out = ops.layer_norm(t([1.0, 3.0]), t(np.ones(2)), t(np.zeros(2)))
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-5)

    def test_affine_collapse(self):
        b = np.array([0.5, -1.0, 2.0], dtype=np.float32)
        out = ops.layer_norm(t(np.random.default_rng(3).normal(size=(4, 3))), t(np.zeros(3)), t(b))
        np.testing.assert_array_equal(out.data, np.broadcast_to(b, (4, 3)))


def _identity_weights(d):
    eye, zero = np.eye(d), np.zeros(d)
    return AttentionWeights(*(t(a) for a in (eye, zero, eye, zero, eye, zero, eye, zero)))


class TestMha:
    def test_single_key_passes_value_through(self):
        rng = np.random.default_rng(4)
        q, k, v = (t(rng.normal(size=(1, 4))) for _ in range(3))
        out = mha(q, k, v, _identity_weights(4), n_heads=2)
        np.testing.assert_allclose(out.data, v.data, rtol=1e-6)

    def test_key_permutation_invariance(self):
        rng = np.random.default_rng(5)
        d = 8
        w = AttentionWeights(*(t(rng.normal(scale=0.4, size=(d, d) if i % 2 == 0 else d)) for i in range(8)))
        q, k, v = t(rng.normal(size=(3, d))), t(rng.normal(size=(6, d))), t(rng.normal(size=(6, d)))
        perm = rng.permutation(6)
        a = mha(q, k, v, w, 4).data
        b = mha(q, t(k.data[perm]), t(v.data[perm]), w, 4).data
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_two_token_scalar_oracle(self):
        # one head, D=2, hand-set projections; recompute everything with floats
        wq = [[1.0, 0.5], [0.0, 1.0]]
        wk = [[0.5, 0.0], [1.0, -1.0]]
        wv = [[2.0, 0.0], [0.0, 1.0]]
        wo = [[1.0, 1.0], [0.0, 1.0]]
        zero = [0.0, 0.0]
        q_in = [[1.0, 2.0], [-1.0, 0.5]]
        kv_in = [[0.5, -1.0], [2.0, 1.0]]

        def vecmat(x, m):
            return [sum(x[i] * m[i][j] for i in range(2)) for j in range(2)]

        expected = []
        for qrow in q_in:
            q = vecmat(qrow, wq)
            logits = [sum(a * b for a, b in zip(q, vecmat(krow, wk))) / math.sqrt(2) for krow in kv_in]
            z = sum(math.exp(s) for s in logits)
            attn = [math.exp(s) / z for s in logits]
            mixed = [sum(attn[n] * vecmat(kv_in[n], wv)[j] for n in range(2)) for j in range(2)]
            expected.append(vecmat(mixed, wo))

        w = AttentionWeights(t(wq), t(zero), t(wk), t(zero), t(wv), t(zero), t(wo), t(zero))
        out = mha(t(q_in), t(kv_in), t(kv_in), w, n_heads=1)
        np.testing.assert_allclose(out.data, expected, rtol=1e-5)

    def test_heads_must_divide_dim(self):
        with pytest.raises(ConfigError):
            mha(t(np.zeros((1, 6))), t(np.zeros((1, 6))), t(np.zeros((1, 6))), _identity_weights(6), n_heads=4)

    def test_key_mask_excludes_padding(self):
        rng = np.random.default_rng(6)
        w = _identity_weights(4)
        q, k, v = t(rng.normal(size=(2, 4))), t(rng.normal(size=(3, 4))), t(rng.normal(size=(3, 4)))
        masked = mha(q, k, v, w, 2, key_mask=np.array([True, True, False])).data
        trimmed = mha(q, t(k.data[:2]), t(v.data[:2]), w, 2).data
        np.testing.assert_allclose(masked, trimmed, atol=1e-6)


class TestPointwise:
    def test_relu(self):
        np.testing.assert_array_equal(ops.relu(t([-1.0, 0.0, 2.0])).data, [0, 0, 2])

    def test_dropout_eval_identity(self):
        x = t(np.random.default_rng(7).normal(size=(5, 5)))
        assert ops.dropout(x, 0.3, training=False).data.tobytes() == x.data.tobytes()

    def test_dropout_fraction_and_scale(self):
        x = t(np.ones(20000))
        out = ops.dropout(x, 0.1, training=True, rng=stream(0, "dropout")).data
        assert abs((out == 0).mean() - 0.1) <= 0.02
        np.testing.assert_allclose(out[out != 0], 1 / 0.9, rtol=1e-6)

    def test_dropout_rejects_bad_p(self):
        with pytest.raises(ValueError):
            ops.dropout(t([1.0]), 1.0, training=True, rng=stream(0))

    def test_cross_entropy_uniform(self):
        loss = ops.cross_entropy(t([[0.0, 0.0]]), [0])
        assert loss.item() == pytest.approx(math.log(2), abs=1e-6)

    def test_cross_entropy_matches_mean_nll(self):
        rng = np.random.default_rng(8)
        logits = rng.normal(size=(6, 4))
        y = rng.integers(0, 4, size=6)
        logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        expected = -logp[np.arange(6), y].mean()
        assert ops.cross_entropy(t(logits), y).item() == pytest.approx(expected, rel=1e-5)

    def test_weighted_cross_entropy_normalises_by_weight(self):
        logits = np.array([[0.0, 2.0], [1.0, -1.0], [0.5, 0.5]])
        y = np.array([1, 0, 1])
        w = np.array([1.0, 3.0])
        logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        nll = -logp[np.arange(3), y]
        expected = (w[y] * nll).sum() / w[y].sum()
        assert ops.cross_entropy(t(logits), y, class_weights=w).item() == pytest.approx(expected, rel=1e-5)

    @pytest.mark.parametrize("bad", [-1, 2])
    def test_cross_entropy_target_range(self, bad):
        with pytest.raises(IndexError):
            ops.cross_entropy(t([[0.0, 0.0]]), [bad])

    def test_embedding_out_of_range(self):
        with pytest.raises(IndexError):
            ops.embedding(t(np.zeros((3, 2))), [3])


class TestBackward:
    def test_sum_gives_ones(self):
        x = t([1.0, -2.0, 3.0], True)
        ops.sum(x).backward()
        np.testing.assert_array_equal(x.grad, [1, 1, 1])

    def test_square(self):
        x = t([1.0, 2.0, 3.0], True)
        ops.sum(x * x).backward()
        np.testing.assert_array_equal(x.grad, [2, 4, 6])

    def test_accumulates_across_uses(self):
        x = t([1.0, 2.0], True)
        y = x * 3.0 + x
        ops.sum(y).backward()
        np.testing.assert_array_equal(x.grad, [4, 4])

    def test_non_scalar_needs_seed(self):
        with pytest.raises(ValueError):
            (t([1.0, 2.0], True) * 2.0).backward()

    def test_no_grad_records_nothing(self):
        x = t([1.0], True)
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad

    def test_non_finite_forward_raises(self):
        with pytest.raises(NonFiniteError):
            ops.div(t([1.0]), t([0.0]))


@pytest.mark.parametrize("name", sorted(CASES))
def test_gradients_match_finite_differences(name):
    assert max(worst_errors(name, n_shapes=20, seed=11)) < TOLERANCE


class TestAdamW:
    def test_first_step_hand_computed(self):
        # m_hat = 1, v_hat = 1, so the step is lr * 1 / (1 + eps)
        p = t([1.0], True)
        p.grad = np.ones(1, dtype=np.float32)
        state = AdamWState(weight_decay=0.0)
        adamw_step({"p": p}, state, lr=0.1)
        assert p.data[0] == pytest.approx(0.9, abs=1e-4)
        assert state.step == 1

    def test_defaults(self):
        s = AdamWState()
        assert (s.beta1, s.beta2, s.eps, s.weight_decay) == (0.9, 0.999, 1e-8, 1e-3)

    def test_decoupled_decay(self):
        p = t([2.0], True)
        p.grad = np.zeros(1, dtype=np.float32)
        adamw_step({"p": p}, AdamWState(weight_decay=0.1), lr=0.5)
        assert p.data[0] == pytest.approx(2.0 - 0.5 * 0.1 * 2.0, rel=1e-6)

    @given(arrays(np.float32, 5, elements=finite))
    def test_zero_grad_no_decay_is_noop(self, theta):
        p = t(theta, True)
        p.grad = np.zeros(5, dtype=np.float32)
        adamw_step({"p": p}, AdamWState(weight_decay=0.0), lr=0.1)
        assert p.data.tobytes() == theta.tobytes()

    @given(arrays(np.float32, 5, elements=finite), arrays(np.float32, 5, elements=finite))
    def test_zero_lr_is_noop(self, theta, g):
        p = t(theta, True)
        p.grad = g
        adamw_step({"p": p}, AdamWState(), lr=0.0)
        np.testing.assert_array_equal(p.data, theta)

    def test_skips_parameters_without_grad(self):
        a, b = t([1.0], True), t([1.0], True)
        a.grad = np.ones(1, dtype=np.float32)
        adamw_step({"a": a, "b": b}, AdamWState(), lr=0.1)
        assert b.data[0] == 1.0 and a.data[0] != 1.0

    def test_shape_mismatch(self):
        p = t([1.0, 2.0], True)
        with pytest.raises(ValueError):
            adamw_step({"p": p}, AdamWState(), lr=0.1, grads={"p": np.ones(3, dtype=np.float32)})

    def test_step_counter_increments(self):
        p = t([1.0], True)
        state = AdamWState()
        for i in range(3):
            p.grad = np.ones(1, dtype=np.float32)
            adamw_step({"p": p}, state, 0.01)
            assert state.step == i + 1
        assert state.m["p"].shape == p.shape == state.v["p"].shape


class TestLrSchedule:
    def test_endpoints(self):
        s = LrSchedule(total_steps=100)
        assert lr_at(s, 0) == 0.0
        assert lr_at(s, 20) == pytest.approx(1e-4)
        assert lr_at(s, 100) == pytest.approx(1e-5)

    def test_out_of_range(self):
        s = LrSchedule(total_steps=10)
        for bad in (-1, 11):
            with pytest.raises(ValueError):
                lr_at(s, bad)

    @given(st.integers(5, 5000))
    def test_piecewise_linear_and_continuous(self, total):
        s = LrSchedule(total_steps=total)
        lrs = np.array([lr_at(s, i) for i in range(total + 1)])
        w = s.warmup_end
        # largest single-step change is the warmup slope; no jump at the boundary
        steps = np.abs(np.diff(lrs))
        assert steps.max() <= s.base_lr / w + 1e-15
        wi = int(np.floor(w))
        assert abs(lrs[wi] - lrs[min(wi + 1, total)]) <= max(s.base_lr / w, (s.base_lr - s.final_lr) / (total - w))
        assert (lrs >= 0).all() and lrs.max() <= s.base_lr + 1e-15


def test_determinism_of_forward_backward_and_optimizer():
    def trajectory():
        rng = stream(3, "weights")
        w = t(rng.normal(size=(4, 3)), True)
        x = t(stream(3, "inputs").normal(size=(5, 4)))
        state = AdamWState()
        out = []
        for step in range(3):
            w.grad = None
            y = ops.dropout(ops.relu(ops.matmul(x, w)), 0.1, True, stream(3, "drop", step))
            loss = ops.cross_entropy(y, [0, 1, 2, 0, 1])
            loss.backward()
            out += [loss.data.tobytes(), w.grad.tobytes()]
            adamw_step({"w": w}, state, 0.01)
            out.append(w.data.tobytes())
        return out

    assert trajectory() == trajectory()
