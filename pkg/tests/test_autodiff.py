"""Unit tests for the reverse-mode autodiff core."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tablegen import autodiff as ad


def finite_diff(f, params, h=1e-5):
    """Central-difference gradients of a scalar function, one coordinate at a time."""
    grads = {}
    for p in params:
        g = np.zeros_like(p.data)
        for idx in np.ndindex(p.data.shape):
            saved = p.data[idx]
            p.data[idx] = saved + h
            fp = f().item()
            p.data[idx] = saved - h
            fm = f().item()
            p.data[idx] = saved
            g[idx] = (fp - fm) / (2 * h)
        grads[p.name] = g
    return grads


class TestForwardValues:
    def test_softmax_uniform_logits(self):
        out = ad.softmax(ad.constant([0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_tanh_and_sigmoid_at_zero(self):
        assert ad.tanh(ad.constant(np.zeros(3))).data.tolist() == [0.0, 0.0, 0.0]
        np.testing.assert_allclose(ad.sigmoid(ad.constant(np.zeros(3))).data, 0.5)

    def test_matmul_hand_case(self):
        # [[1,2],[3,4]] @ [[1],[1]] = [[3],[7]] by hand.
        out = ad.matmul(ad.constant([[1.0, 2.0], [3.0, 4.0]]), ad.constant([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_matmul_shape_error_names_shapes(self):
        with pytest.raises(ad.ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
            ad.matmul(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((2, 3))))

    def test_add_row_broadcast(self):
        out = ad.add(ad.constant(np.ones((2, 3))), ad.constant([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out.data, [[2, 3, 4], [2, 3, 4]])

    def test_dropout_identity_at_zero_rate(self):
        x = ad.constant([1.0, 2.0])
        assert ad.dropout(x, 0.0, np.random.default_rng(0)) is x

    def test_dropout_inverted_scaling(self):
        rng = np.random.default_rng(1)
        x = ad.constant(np.ones(10_000))
        out = ad.dropout(x, 0.3, rng)
        kept = out.data[out.data > 0]
        np.testing.assert_allclose(kept, 1.0 / 0.7)
        assert abs(kept.size / 10_000 - 0.7) < 0.02


class TestBackward:
    def test_sum_gives_ones(self):
        w = ad.Parameter("w", np.arange(6.0).reshape(2, 3))
        with ad.Tape() as tape:
            tape.backward(ad.sum_all(w.tensor))
        np.testing.assert_array_equal(w.grad, np.ones((2, 3)))

    def test_sigmoid_grad_at_zero(self):
        w = ad.Parameter("w", np.zeros(()))
        with ad.Tape() as tape:
            tape.backward(ad.sigmoid(w.tensor))
        np.testing.assert_allclose(w.grad, 0.25)

    def test_non_scalar_loss_rejected(self):
        w = ad.Parameter("w", np.zeros(3))
        with ad.Tape() as tape:
            y = ad.tanh(w.tensor)
            with pytest.raises(ad.ContractError):
                tape.backward(y)

    def test_unreachable_parameter_gets_no_grad(self):
        w = ad.Parameter("w", np.ones(2))
        u = ad.Parameter("u", np.ones(2))
        with ad.Tape() as tape:
            tape.backward(ad.sum_all(w.tensor))
        assert u.grad is None

    def test_mlp_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        w1 = ad.Parameter("w1", rng.uniform(-0.5, 0.5, (4, 5)))
        b1 = ad.Parameter("b1", rng.uniform(-0.5, 0.5, 5))
        w2 = ad.Parameter("w2", rng.uniform(-0.5, 0.5, (5, 3)))
        w3 = ad.Parameter("w3", rng.uniform(-0.5, 0.5, 3))
        x = ad.constant(rng.uniform(-1, 1, 4))

        def f():
            h1 = ad.relu(ad.add(ad.matmul(x, w1.tensor), b1.tensor))
            h2 = ad.tanh(ad.matmul(h1, w2.tensor))
            return ad.log(ad.sigmoid(ad.dot(h2, w3.tensor)))

        params = [w1, b1, w2, w3]
        with ad.Tape() as tape:
            tape.backward(f())
        fd = finite_diff(f, params)
        for p in params:
            np.testing.assert_allclose(p.grad, fd[p.name], rtol=1e-6, atol=1e-8)

    def test_backward_is_linear(self):
        # grad of a*f + b*g equals a*grad(f) + b*grad(g) coordinate-wise.
        rng = np.random.default_rng(3)
        data = rng.uniform(-1, 1, 4)

        def grads_of(fn):
            w = ad.Parameter("w", data.copy())
            with ad.Tape() as tape:
                tape.backward(fn(w.tensor))
            return w.grad.copy()

        f = lambda t: ad.sum_all(ad.tanh(t))
        g = lambda t: ad.dot(t, ad.constant(np.arange(4.0)))
        combined = grads_of(lambda t: ad.add(ad.mul(f(t), 2.0), ad.mul(g(t), -3.0)))
        np.testing.assert_allclose(combined, 2.0 * grads_of(f) - 3.0 * grads_of(g),
                                   rtol=1e-12, atol=1e-12)

    def test_repeated_use_accumulates(self):
        w = ad.Parameter("w", np.full((), 3.0))
        with ad.Tape() as tape:
            y = ad.mul(w.tensor, w.tensor)  # w^2, dw = 2w
            tape.backward(y)
        np.testing.assert_allclose(w.grad, 6.0)

    def test_take_rows_accumulates_duplicate_indices(self):
        e = ad.Parameter("e", np.ones((4, 2)))
        with ad.Tape() as tape:
            rows = ad.take_rows(e.tensor, [1, 1, 2])
            tape.backward(ad.sum_all(rows))
        np.testing.assert_array_equal(e.grad, [[0, 0], [2, 2], [1, 1], [0, 0]])

    def test_bitwise_deterministic_gradients(self):
        def run():
            rng = np.random.default_rng(11)
            w = ad.Parameter("w", rng.uniform(-0.1, 0.1, (6, 6)))
            x = ad.constant(rng.uniform(-1, 1, 6))
            with ad.Tape() as tape:
                h = ad.dropout(ad.tanh(ad.matmul(x, w.tensor)), 0.3,
                               np.random.default_rng(5))
                tape.backward(ad.sum_all(ad.softmax(h)))
            return w.grad.copy()

        a, b = run(), run()
        assert np.array_equal(a, b)


class TestSoftmaxProperties:
    @given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=12))
    @settings(max_examples=200, deadline=None)
    def test_normalized_and_nonnegative(self, xs):
        out = ad.softmax(ad.constant(xs)).data
        assert np.all(out >= 0)
        assert abs(out.sum() - 1.0) < 1e-9

    def test_masked_row_softmax_excludes_diagonal(self):
        s = ad.constant(np.zeros((3, 3)))
        out = ad.masked_row_softmax(s).data
        np.testing.assert_array_equal(np.diag(out), 0.0)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(out[0, 1:], 0.5)

    def test_masked_row_softmax_gradient(self):
        w = ad.Parameter("w", np.random.default_rng(2).uniform(-1, 1, (4, 4)))

        def f():
            a = ad.masked_row_softmax(w.tensor)
            return ad.sum_all(ad.mul(a, ad.constant(np.arange(16.0).reshape(4, 4))))

        with ad.Tape() as tape:
            tape.backward(f())
        fd = finite_diff(f, [w])
        np.testing.assert_allclose(w.grad, fd["w"], rtol=1e-6, atol=1e-9)

    def test_matmul_sorted_matches_matmul(self):
        rng = np.random.default_rng(4)
        a, v = rng.uniform(-1, 1, (3, 5)), rng.uniform(-1, 1, (5, 2))
        np.testing.assert_allclose(ad.matmul_sorted(ad.constant(a), ad.constant(v)).data,
                                   a @ v, rtol=1e-12, atol=1e-12)


class TestGradCheck:
    def test_linear_map_is_exact(self):
        rng = np.random.default_rng(0)
        w = ad.Parameter("w", rng.uniform(-1, 1, 8))
        x = ad.constant(rng.uniform(-1, 1, 8))
        report = ad.grad_check(lambda: ad.dot(w.tensor, x), [w], tol=1e-10)
        assert report.passed
        assert report.max_rel_error < 1e-10

    def test_corrupted_backward_rule_is_named(self):
        # A deliberately wrong gradient (factor 2) must be caught and the
        # offending parameter named in the report.
        w = ad.Parameter("bad_w", np.full(3, 0.3))

        def wrong_square(t):
            out_data = t.data * t.data

            def bw(g):
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += 4.0 * t.data * g  # should be 2x

            return ad._emit("wrong_square", out_data, (t,), bw)

        report = ad.grad_check(lambda: ad.sum_all(wrong_square(w.tensor)), [w], tol=1e-4)
        assert not report.passed
        assert report.worst_param == "bad_w"

    def test_samples_when_above_sweep_limit(self):
        w = ad.Parameter("w", np.random.default_rng(1).uniform(-1, 1, 64))
        report = ad.grad_check(lambda: ad.sum_all(ad.tanh(w.tensor)), [w],
                               tol=1e-6, full_sweep_limit=10, sample_size=16)
        assert report.n_checked == 16
        assert report.passed


class TestParameterIO:
    def test_round_trip(self):
        rng = np.random.default_rng(9)
        p1 = ad.Parameter("a", rng.uniform(-1, 1, (2, 3)))
        p2 = ad.Parameter("b", rng.uniform(-1, 1, 4))
        p1.accumulator += 0.5
        blob = ad.parameters_to_dict([p1, p2])

        q1 = ad.Parameter("a", np.zeros((2, 3)))
        q2 = ad.Parameter("b", np.zeros(4))
        ad.parameters_from_dict(blob, [q1, q2])
        np.testing.assert_array_equal(q1.data, p1.data)
        np.testing.assert_array_equal(q1.accumulator, p1.accumulator)
        np.testing.assert_array_equal(q2.data, p2.data)

    def test_shape_mismatch_rejected(self):
        blob = ad.parameters_to_dict([ad.Parameter("a", np.zeros(3))])
        with pytest.raises(ad.ShapeError):
            ad.parameters_from_dict(blob, [ad.Parameter("a", np.zeros(4))])

    def test_missing_parameter_rejected(self):
        blob = ad.parameters_to_dict([ad.Parameter("a", np.zeros(3))])
        with pytest.raises(ad.ContractError):
            ad.parameters_from_dict(blob, [ad.Parameter("zz", np.zeros(3))])


class TestDebugChecks:
    def test_nonfinite_raises_when_enabled(self):
        ad.set_debug_checks(True)
        try:
            with pytest.raises(ad.NumericsError):
                ad.log(ad.constant([0.0]))
        finally:
            ad.set_debug_checks(False)
