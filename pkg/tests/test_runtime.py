import numpy as np
import pytest

from blocknas import runtime as rt
from conftest import assert_grads_close, fd_grad


def scalar_loss(t):
    return rt.sum_all(t)


class TestMatmul:
    def test_identity_weights(self):
        y = rt.matmul(rt.Tensor([[1.0, 2.0]]), rt.Tensor([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_array_equal(y.data, [[1.0, 2.0]])

    def test_unit_row_selects_weight_row(self):
        y = rt.matmul(rt.Tensor([[1.0, 0.0]]),
                      rt.Tensor([[2.0, 3.0], [4.0, 5.0]]),
                      rt.Tensor([1.0, 1.0]))
        np.testing.assert_array_equal(y.data, [[3.0, 4.0]])

    def test_shape_mismatch(self):
        with pytest.raises(rt.DimensionError):
            rt.matmul(rt.Tensor(np.ones((2, 3))), rt.Tensor(np.ones((4, 2))))

    def test_gradient_vs_finite_difference(self, rng):
        a = rt.Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
        w = rt.Tensor(rng.uniform(-1, 1, (3, 5)), requires_grad=True)
        b = rt.Tensor(rng.uniform(-1, 1, 5), requires_grad=True)
        rt.backward(scalar_loss(rt.matmul(a, w, b)))

        def f():
            return float((a.data @ w.data + b.data).sum())

        assert_grads_close(a.grad, fd_grad(f, a.data), rtol=1e-5)
        assert_grads_close(w.grad, fd_grad(f, w.data), rtol=1e-5)
        assert_grads_close(b.grad, fd_grad(f, b.data), rtol=1e-5)


class TestBmm:
    def test_identity(self):
        eye = np.eye(2)[None]
        y = rt.bmm(rt.Tensor(eye), rt.Tensor(eye))
        np.testing.assert_array_equal(y.data, eye)

    def test_matches_per_slice_matmul(self, rng):
        a = rng.normal(size=(2, 3, 4))
        b = rng.normal(size=(2, 4, 5))
        y = rt.bmm(rt.Tensor(a), rt.Tensor(b))
        for k in range(2):
            np.testing.assert_allclose(y.data[k], a[k] @ b[k], rtol=0, atol=0)

    def test_gradient_vs_finite_difference(self, rng):
        a = rt.Tensor(rng.uniform(-1, 1, (2, 3, 4)), requires_grad=True)
        b = rt.Tensor(rng.uniform(-1, 1, (2, 4, 5)), requires_grad=True)
        rt.backward(scalar_loss(rt.bmm(a, b)))

        def f():
            return float((a.data @ b.data).sum())

        assert_grads_close(a.grad, fd_grad(f, a.data), rtol=1e-5)
        assert_grads_close(b.grad, fd_grad(f, b.data), rtol=1e-5)


class TestLayerNormAct:
    def test_zero_variance_row_normalizes_to_zeros(self):
        y = rt.layer_norm_act(rt.Tensor([[1.0, 1.0, 1.0]]),
                              rt.Tensor(np.ones(3)), rt.Tensor(np.zeros(3)))
        np.testing.assert_array_equal(y.data, [[0.0, 0.0, 0.0]])

    def test_symmetric_input(self):
        y = rt.layer_norm_act(rt.Tensor([[-1.0, 1.0]]),
                              rt.Tensor(np.ones(2)), rt.Tensor(np.zeros(2)))
        np.testing.assert_allclose(y.data, [[-1.0, 1.0]], atol=1e-4)

    def test_empty_axis_rejected(self):
        with pytest.raises(rt.DimensionError):
            rt.layer_norm_act(rt.Tensor(np.ones((2, 0))),
                              rt.Tensor(np.ones(0)), rt.Tensor(np.zeros(0)))

    @pytest.mark.parametrize("act", ["identity", "relu", "sigmoid"])
    def test_gradient_vs_finite_difference(self, rng, act):
        x = rt.Tensor(rng.uniform(-1, 1, (3, 5)), requires_grad=True)
        g = rt.Tensor(rng.uniform(0.5, 1.5, 5), requires_grad=True)
        b = rt.Tensor(rng.uniform(-0.5, 0.5, 5), requires_grad=True)
        rt.backward(scalar_loss(rt.layer_norm_act(x, g, b, act)))

        def f():
            mu = x.data.mean(-1, keepdims=True)
            var = ((x.data - mu) ** 2).mean(-1, keepdims=True)
            y0 = g.data * (x.data - mu) / np.sqrt(var + 1e-5) + b.data
            if act == "relu":
                y0 = np.maximum(y0, 0)
            elif act == "sigmoid":
                y0 = 1 / (1 + np.exp(-y0))
            return float(y0.sum())

        assert_grads_close(x.grad, fd_grad(f, x.data), rtol=1e-4, atol=1e-6)
        assert_grads_close(g.grad, fd_grad(f, g.data), rtol=1e-4, atol=1e-6)
        assert_grads_close(b.grad, fd_grad(f, b.data), rtol=1e-4, atol=1e-6)

    def test_masked_matches_sliced(self, rng):
        x = rng.uniform(-1, 1, (4, 6))
        mask = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
        g, b = np.ones(6), np.zeros(6)
        masked = rt.layer_norm_act(rt.Tensor(x), rt.Tensor(g), rt.Tensor(b),
                                   "relu", mask=mask)
        sliced = rt.layer_norm_act(rt.Tensor(x[:, :3]), rt.Tensor(g[:3]),
                                   rt.Tensor(b[:3]), "relu")
        np.testing.assert_array_equal(masked.data[:, :3], sliced.data)
        np.testing.assert_array_equal(masked.data[:, 3:], 0.0)

    def test_masked_gradient_vs_finite_difference(self, rng):
        mask = np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0])
        x = rt.Tensor(rng.uniform(-1, 1, (3, 6)), requires_grad=True)
        g = rt.Tensor(rng.uniform(0.5, 1.5, 6), requires_grad=True)
        b = rt.Tensor(rng.uniform(-0.5, 0.5, 6), requires_grad=True)
        rt.backward(scalar_loss(rt.layer_norm_act(x, g, b, "identity", mask=mask)))

        def f():
            n = mask.sum()
            mu = (x.data * mask).sum(-1, keepdims=True) / n
            var = (((x.data - mu) ** 2) * mask).sum(-1, keepdims=True) / n
            y0 = g.data * (x.data - mu) / np.sqrt(var + 1e-5) + b.data
            return float((y0 * mask).sum())

        assert_grads_close(x.grad, fd_grad(f, x.data), rtol=1e-4, atol=1e-6)
        assert_grads_close(g.grad, fd_grad(f, g.data), rtol=1e-4, atol=1e-6)


class TestZeroPadSum:
    def test_basic(self):
        y = rt.zero_pad_sum([rt.Tensor([[1.0, 2.0]]), rt.Tensor([[3.0]])])
        np.testing.assert_array_equal(y.data, [[4.0, 2.0]])

    def test_single_input_identity(self):
        x = rt.Tensor([[5.0, 6.0]])
        np.testing.assert_array_equal(rt.zero_pad_sum([x]).data, x.data)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            rt.zero_pad_sum([])

    def test_matches_manual_pad_then_add(self, rng):
        xs = [rng.normal(size=(3, w)) for w in (2, 5, 3)]
        y = rt.zero_pad_sum([rt.Tensor(x) for x in xs])
        manual = np.zeros((3, 5))
        for x in xs:
            manual[:, :x.shape[1]] += x
        np.testing.assert_array_equal(y.data, manual)


class TestBinaryCrossEntropy:
    def test_logit_zero_label_one(self):
        loss = rt.binary_cross_entropy(rt.Tensor([[0.0]]), np.array([1.0]))
        assert loss.item() == pytest.approx(np.log(2), abs=1e-12)

    def test_saturation_no_overflow(self):
        loss = rt.binary_cross_entropy(rt.Tensor([[20.0]]), np.array([1.0]))
        assert 0 <= loss.item() < 1e-8

    def test_nonbinary_label_rejected(self):
        with pytest.raises(ValueError):
            rt.binary_cross_entropy(rt.Tensor([[0.0]]), np.array([0.5]))

    def test_gradient_closed_form(self, rng):
        z = rt.Tensor(rng.uniform(-3, 3, (8, 1)), requires_grad=True)
        y = (rng.random(8) < 0.5).astype(float)
        rt.backward(rt.binary_cross_entropy(z, y))
        sig = 1 / (1 + np.exp(-z.data.ravel()))
        np.testing.assert_allclose(z.grad.ravel(), (sig - y) / 8, atol=1e-6)

    def test_finite_for_extreme_logits(self):
        for z in (-50.0, 50.0):
            loss = rt.binary_cross_entropy(rt.Tensor([[z]]), np.array([1.0]))
            assert np.isfinite(loss.item())


class TestBackward:
    def test_sum_gives_ones(self):
        w = rt.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        rt.backward(rt.sum_all(w))
        np.testing.assert_array_equal(w.grad, np.ones((2, 3)))

    def test_unused_parameter_gets_no_gradient(self):
        used = rt.Tensor(np.ones(3), requires_grad=True)
        unused = rt.Tensor(np.ones(3), requires_grad=True)
        rt.backward(rt.sum_all(rt.mul(used, used)))
        assert unused.grad is None
        np.testing.assert_allclose(used.grad, 2 * np.ones(3))

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(rt.DimensionError):
            rt.backward(rt.Tensor(np.ones(2)))

    def test_shared_subgraph_accumulates(self):
        x = rt.Tensor(np.array(2.0), requires_grad=True)
        y = rt.add(rt.mul(x, x), rt.mul(x, x))
        rt.backward(y)
        assert x.grad == pytest.approx(8.0)


class TestElementwiseGradients:
    """Finite-difference checks for the remaining differentiable ops."""

    @pytest.mark.parametrize("op,ref", [
        (rt.relu, lambda x: np.maximum(x, 0)),
        (rt.sigmoid, lambda x: 1 / (1 + np.exp(-x))),
        (rt.exp, np.exp),
        (rt.absolute, np.abs),
    ])
    def test_unary(self, rng, op, ref):
        x = rt.Tensor(rng.uniform(-1, 1, (3, 4)) + 0.1, requires_grad=True)
        rt.backward(scalar_loss(op(x)))
        assert_grads_close(x.grad, fd_grad(lambda: float(ref(x.data).sum()),
                                           x.data), rtol=1e-4, atol=1e-6)

    def test_sqrt(self, rng):
        x = rt.Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
        rt.backward(scalar_loss(rt.sqrt(x)))
        assert_grads_close(x.grad, fd_grad(lambda: float(np.sqrt(x.data).sum()),
                                           x.data), rtol=1e-4, atol=1e-6)

    @pytest.mark.parametrize("op,ref", [
        (rt.add, lambda a, b: a + b),
        (rt.sub, lambda a, b: a - b),
        (rt.mul, lambda a, b: a * b),
        (rt.div, lambda a, b: a / b),
    ])
    def test_binary_broadcasting(self, rng, op, ref):
        a = rt.Tensor(rng.uniform(0.5, 1.5, (3, 4)), requires_grad=True)
        b = rt.Tensor(rng.uniform(0.5, 1.5, (4,)), requires_grad=True)
        rt.backward(scalar_loss(op(a, b)))

        def f():
            return float(ref(a.data, b.data).sum())

        assert_grads_close(a.grad, fd_grad(f, a.data), rtol=1e-4, atol=1e-6)
        assert_grads_close(b.grad, fd_grad(f, b.data), rtol=1e-4, atol=1e-6)

    def test_embed_project(self, rng):
        w = rt.Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
        x = rt.Tensor(rng.uniform(-1, 1, (2, 4, 5)), requires_grad=True)
        rt.backward(scalar_loss(rt.embed_project(w, x)))

        def f():
            return float(np.einsum("mn,bnd->bmd", w.data, x.data).sum())

        assert_grads_close(w.grad, fd_grad(f, w.data), rtol=1e-4, atol=1e-6)
        assert_grads_close(x.grad, fd_grad(f, x.data), rtol=1e-4, atol=1e-6)

    def test_softmax_vec(self, rng):
        z = rt.Tensor(rng.uniform(-1, 1, 5), requires_grad=True)
        s = rt.softmax_vec(z)
        assert s.data.sum() == pytest.approx(1.0, abs=1e-12)
        c = rng.normal(size=5)
        rt.backward(rt.sum_all(rt.mul(s, rt.Tensor(c))))

        def f():
            e = np.exp(z.data - z.data.max())
            return float((e / e.sum() * c).sum())

        assert_grads_close(z.grad, fd_grad(f, z.data), rtol=1e-4, atol=1e-7)

    def test_padded_accumulate(self, rng):
        a = rt.Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = rt.Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        y = rt.padded_accumulate([a, b], [np.array([0, 2, 4]), np.array([1, 2])], 5)
        manual = np.zeros((2, 5))
        manual[:, [0, 2, 4]] += a.data
        manual[:, [1, 2]] += b.data
        np.testing.assert_array_equal(y.data, manual)
        rt.backward(scalar_loss(y))
        np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
        np.testing.assert_array_equal(b.grad, np.ones((2, 2)))

    def test_index_ops_scatter_gradients(self, rng):
        w = rt.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        rt.backward(scalar_loss(rt.index_rows(w, [0, 2])))
        expect = np.zeros((4, 3))
        expect[[0, 2]] = 1.0
        np.testing.assert_array_equal(w.grad, expect)
        w2 = rt.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        rt.backward(scalar_loss(rt.index_cols(w2, [1])))
        expect2 = np.zeros((4, 3))
        expect2[:, 1] = 1.0
        np.testing.assert_array_equal(w2.grad, expect2)


class TestDeterminism:
    def test_forward_deterministic(self, rng):
        x = rng.normal(size=(4, 6))
        g, b = np.ones(6), np.zeros(6)
        y1 = rt.layer_norm_act(rt.Tensor(x), rt.Tensor(g), rt.Tensor(b), "sigmoid")
        y2 = rt.layer_norm_act(rt.Tensor(x), rt.Tensor(g), rt.Tensor(b), "sigmoid")
        np.testing.assert_array_equal(y1.data, y2.data)


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = rt.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        opt = rt.Adam([p], lr=0.1)
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, 2.0])

    def test_first_step_bias_corrected(self):
        p = rt.Tensor(np.array([0.0]), requires_grad=True)
        opt = rt.Adam([p], lr=0.1)
        p.grad = np.array([1.0])
        opt.step()
        assert p.data[0] == pytest.approx(-0.1, abs=1e-6)

    def test_second_moment_monotone_under_constant_grad(self):
        p = rt.Tensor(np.array([0.0]), requires_grad=True)
        opt = rt.Adam([p], lr=0.1)
        p.grad = np.array([1.0])
        opt.step()
        v1 = opt.v[0].copy()
        p.grad = np.array([1.0])
        opt.step()
        assert opt.v[0][0] >= v1[0]

    def test_non_finite_gradient_raises(self):
        p = rt.Tensor(np.array([0.0]), requires_grad=True)
        opt = rt.Adam([p])
        p.grad = np.array([np.nan])
        with pytest.raises(rt.TrainingError):
            opt.step()


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        store = {"a.weight": rt.Tensor(rng.normal(size=(3, 2)), requires_grad=True),
                 "b.bias": rt.Tensor(rng.normal(size=4), requires_grad=True)}
        path = tmp_path / "ckpt.npz"
        rt.save_params(store, path)
        store2 = {k: rt.Tensor(np.zeros_like(t.data)) for k, t in store.items()}
        rt.load_params(store2, path)
        for k in store:
            np.testing.assert_array_equal(store[k].data, store2[k].data)

    def test_missing_param_rejected(self, tmp_path):
        rt.save_params({"x": rt.Tensor(np.ones(2))}, tmp_path / "c.npz")
        with pytest.raises(KeyError):
            rt.load_params({"y": rt.Tensor(np.ones(2))}, tmp_path / "c.npz")
