"""Dense linear algebra and backprop kernel tests.

Analytic gradients are checked against central finite differences; matrix
products against a naive triple-loop oracle computed here, independently of
numpy's BLAS path.
"""

import numpy as np
import pytest

from dualrec.numeric import (
    DenseLayer,
    dense_layer,
    grad_check,
    layer_backward,
    layer_forward,
    make_rng,
    matmul,
    sgd_step,
    sigmoid,
)


def triple_loop_matmul(a, b):
    # independent oracle: no vectorized ops, just the definition
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity_leaves_matrix_unchanged(self):
        a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]])
        np.testing.assert_array_equal(matmul(np.eye(3), a), a)

    def test_hand_checked_2x2_times_column(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[0.0], [1.0]])
        np.testing.assert_array_equal(matmul(a, b), np.array([[2.0], [4.0]]))

    def test_random_product_matches_triple_loop_oracle(self):
        rng = make_rng(42)
        a = rng.normal(size=(5, 4))
        b = rng.normal(size=(4, 3))
        got = matmul(a, b)
        want = triple_loop_matmul(a, b)
        assert np.max(np.abs(got - want)) <= 1e-12

    def test_associativity(self):
        rng = make_rng(7)
        a = rng.normal(size=(4, 5))
        b = rng.normal(size=(5, 6))
        c = rng.normal(size=(6, 3))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) <= 1e-9

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestSigmoid:
    def test_zero_maps_to_half(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5

    def test_extreme_inputs_stay_finite_and_bounded(self):
        y = sigmoid(np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(y))
        assert 0.0 <= y[0] < 1e-12
        assert 1.0 - 1e-12 < y[1] <= 1.0

    def test_symmetry(self):
        z = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(sigmoid(z) + sigmoid(-z), 1.0, atol=1e-15)


class TestLayerForward:
    def test_identity_activation_identity_weights(self):
        layer = DenseLayer(np.eye(3), np.zeros(3), "identity")
        x = np.array([1.5, -2.0, 0.25])
        y, _ = layer_forward(layer, x)
        np.testing.assert_array_equal(y, x)

    def test_sigmoid_zero_weights_gives_half(self):
        layer = DenseLayer(np.zeros((4, 3)), np.zeros(4), "sigmoid")
        y, _ = layer_forward(layer, np.array([9.0, -9.0, 2.0]))
        np.testing.assert_array_equal(y, np.full(4, 0.5))

    @pytest.mark.parametrize("activation", ["identity", "sigmoid", "relu"])
    def test_random_layer_matches_direct_formula(self, activation):
        rng = make_rng(3, 1)
        layer = dense_layer(rng, 5, 4, activation)
        layer.bias = rng.normal(size=4)  # nonzero bias to exercise that path
        x = rng.normal(size=5)
        y, _ = layer_forward(layer, x)
        z = layer.weights @ x + layer.bias
        if activation == "identity":
            want = z
        elif activation == "sigmoid":
            want = 1.0 / (1.0 + np.exp(-z))
        else:
            want = np.maximum(z, 0.0)
        np.testing.assert_allclose(y, want, atol=1e-12)

    def test_batch_agrees_with_per_row_calls(self):
        rng = make_rng(11)
        layer = dense_layer(rng, 3, 2, "sigmoid")
        xb = rng.normal(size=(6, 3))
        yb, _ = layer_forward(layer, xb)
        for i in range(6):
            yi, _ = layer_forward(layer, xb[i])
            # batched and single-row matmuls may take different BLAS kernels
            np.testing.assert_allclose(yb[i], yi, atol=1e-12)

    def test_wrong_width_rejected(self):
        layer = DenseLayer(np.eye(3), np.zeros(3), "identity")
        with pytest.raises(ValueError):
            layer_forward(layer, np.ones(4))


class TestLayerBackward:
    def test_identity_unit_dy_picks_weight_row(self):
        rng = make_rng(5)
        layer = dense_layer(rng, 4, 3, "identity")
        x = rng.normal(size=4)
        _, cache = layer_forward(layer, x)
        dy = np.array([1.0, 0.0, 0.0])
        dx, _, _ = layer_backward(layer, cache, dy)
        np.testing.assert_array_equal(dx, layer.weights[0])

    def test_zero_dy_gives_zero_gradients(self):
        rng = make_rng(6)
        layer = dense_layer(rng, 4, 3, "sigmoid")
        _, cache = layer_forward(layer, rng.normal(size=4))
        dx, dW, db = layer_backward(layer, cache, np.zeros(3))
        assert not dx.any() and not dW.any() and not db.any()

    @pytest.mark.parametrize("activation", ["identity", "sigmoid", "relu"])
    def test_gradients_match_central_differences(self, activation):
        rng = make_rng(8, 2)
        n_in, n_out = 4, 3
        w0 = rng.normal(size=(n_out, n_in))
        b0 = rng.normal(size=n_out)
        x0 = rng.normal(size=n_in) + 0.05  # keep relu away from its kink
        c = rng.normal(size=n_out)  # fixed projection makes the loss scalar

        def loss_and_grad(params):
            w, b, x = params
            layer = DenseLayer(w, b, activation)
            y, cache = layer_forward(layer, x)
            dx, dW, db = layer_backward(layer, cache, c)
            return float(c @ y), [dW, db, dx]

        assert grad_check(loss_and_grad, [w0, b0, x0]) <= 1e-4

    def test_batch_gradients_sum_over_rows(self):
        rng = make_rng(9)
        layer = dense_layer(rng, 3, 2, "identity")
        xb = rng.normal(size=(4, 3))
        _, cache = layer_forward(layer, xb)
        dyb = rng.normal(size=(4, 2))
        _, dW, db = layer_backward(layer, cache, dyb)
        dW_sum = np.zeros_like(dW)
        db_sum = np.zeros_like(db)
        for i in range(4):
            _, cache_i = layer_forward(layer, xb[i])
            _, dW_i, db_i = layer_backward(layer, cache_i, dyb[i])
            dW_sum += dW_i
            db_sum += db_i
        np.testing.assert_allclose(dW, dW_sum, atol=1e-12)
        np.testing.assert_allclose(db, db_sum, atol=1e-12)


class TestSgdStep:
    def test_zero_lr_is_identity(self):
        p = np.array([1.0, -2.0])
        out = sgd_step(p, np.array([5.0, 5.0]), 0.0)
        np.testing.assert_array_equal(out, p)

    def test_hand_arithmetic(self):
        out = sgd_step(np.array([1.0]), np.array([2.0]), 0.1)
        np.testing.assert_allclose(out, [0.8])

    def test_one_step_on_square_loss_decreases(self):
        # f(p) = p^2, f'(p) = 2p; from p=1 with lr=0.1 the step lands on 0.8
        p = np.array([1.0])
        new = sgd_step(p, 2.0 * p, 0.1)
        np.testing.assert_allclose(new, [0.8])
        assert new[0] ** 2 < p[0] ** 2

    def test_inputs_not_mutated_and_lists_supported(self):
        p1 = np.array([1.0, 2.0])
        p2 = np.array([[3.0]])
        out = sgd_step([p1, p2], [np.ones(2), np.ones((1, 1))], 0.5)
        np.testing.assert_array_equal(p1, [1.0, 2.0])
        np.testing.assert_array_equal(out[0], [0.5, 1.5])
        np.testing.assert_array_equal(out[1], [[2.5]])

    def test_non_finite_gradient_raises(self):
        with pytest.raises(FloatingPointError):
            sgd_step(np.array([1.0]), np.array([np.nan]), 0.1)

    def test_negative_lr_rejected(self):
        with pytest.raises(ValueError):
            sgd_step(np.array([1.0]), np.array([1.0]), -0.1)


class TestGradCheck:
    def test_linear_loss_is_exact(self):
        c = np.array([2.0, -3.0, 0.5])

        def lin(params):
            (p,) = params
            return float(c @ p), [c.copy()]

        assert grad_check(lin, [np.array([1.0, 2.0, 3.0])]) <= 1e-8

    def test_sigmoid_mlp_within_tolerance(self):
        rng = make_rng(13)
        w1 = rng.normal(size=(4, 3)) * 0.5
        b1 = rng.normal(size=4) * 0.1
        w2 = rng.normal(size=(1, 4)) * 0.5
        b2 = rng.normal(size=1) * 0.1
        x = rng.normal(size=3)

        def mlp(params):
            w1_, b1_, w2_, b2_ = params
            l1 = DenseLayer(w1_, b1_, "sigmoid")
            l2 = DenseLayer(w2_, b2_, "sigmoid")
            h, c1 = layer_forward(l1, x)
            y, c2 = layer_forward(l2, h)
            loss = float(y[0] ** 2)
            dh, dW2, db2 = layer_backward(l2, c2, np.array([2.0 * y[0]]))
            _, dW1, db1 = layer_backward(l1, c1, dh)
            return loss, [dW1, db1, dW2, db2]

        assert grad_check(mlp, [w1, b1, w2, b2]) <= 1e-4

    def test_corrupted_gradient_is_caught(self):
        c = np.array([2.0, -3.0, 0.5])

        def bad(params):
            (p,) = params
            g = c.copy()
            g[1] += 0.1  # deliberate corruption the checker must flag
            return float(c @ p), [g]

        assert grad_check(bad, [np.array([1.0, 2.0, 3.0])]) > 1e-2


class TestRngStreams:
    def test_same_seed_same_draws(self):
        a = make_rng(1234, 7).normal(size=5)
        b = make_rng(1234, 7).normal(size=5)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent(self):
        a = make_rng(1234, 7).normal(size=5)
        b = make_rng(1234, 8).normal(size=5)
        assert np.max(np.abs(a - b)) > 1e-3
