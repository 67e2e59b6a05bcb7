"""Gradient checks and semantics of the autodiff core.

Every differentiable op is checked against central finite differences
at 64-bit precision with relative error below 1e-4.
"""

import numpy as np
import pytest

from ssdgan import autograd as ag
from ssdgan.autograd import Var

from conftest import numeric_grad, rel_err

TOL = 1e-4


def check_op(build, shapes, rng, seed_weights=True, tol=TOL):
    """build(*vars) -> scalar Var; compare each input's gradient."""
    datas = [rng.standard_normal(s) for s in shapes]
    vs = [Var(d.copy(), requires_grad=True) for d in datas]
    loss = build(*vs)
    loss.backward()
    for i, v in enumerate(vs):
        def f(x, i=i):
            args = [Var(d.copy()) for d in datas]
            args[i] = Var(x)
            return float(build(*args).data)

        num = numeric_grad(f, datas[i])
        assert v.grad is not None
        assert rel_err(v.grad, num) < tol, "input %d gradient mismatch" % i


def weighted(rng, shape):
    w = rng.standard_normal(shape)
    return lambda y: ag.vsum(ag.mul(y, Var(w)))


class TestElementwise:
    def test_add_mul(self, rng):
        w = weighted(rng, (3, 4))
        check_op(lambda a, b: w(ag.add(a, b) * ag.mul(a, b)), [(3, 4), (3, 4)], rng)

    def test_add_broadcast(self, rng):
        w = weighted(rng, (3, 4))
        check_op(lambda a, b: w(a + b), [(3, 4), (1, 4)], rng)

    def test_const_ops(self, rng):
        w = weighted(rng, (5,))
        check_op(lambda a: w(ag.add_const(ag.mul_const(a, 1.7), -0.3)), [(5,)], rng)

    def test_log(self, rng):
        data = rng.uniform(0.5, 2.0, (4, 3))
        v = Var(data.copy(), requires_grad=True)
        w = rng.standard_normal((4, 3))
        ag.vsum(ag.mul(ag.log(v), Var(w))).backward()
        num = numeric_grad(lambda x: float((np.log(x) * w).sum()), data)
        assert rel_err(v.grad, num) < TOL

    def test_tanh_sigmoid(self, rng):
        w = weighted(rng, (6,))
        check_op(lambda a: w(ag.tanh(a)), [(6,)], rng)
        check_op(lambda a: w(ag.sigmoid(a)), [(6,)], rng)

    def test_sigmoid_stable_at_extremes(self):
        y = ag.sigmoid(Var(np.array([-500.0, 500.0])))
        assert np.all(np.isfinite(y.data))
        assert y.data[0] == pytest.approx(0.0, abs=1e-100)
        assert y.data[1] == pytest.approx(1.0)

    def test_relu_subgradient_zero_at_zero(self):
        v = Var(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
        ag.vsum(ag.relu(v)).backward()
        assert v.grad.tolist() == [0.0, 0.0, 1.0]

    def test_clamp_zero_gradient_outside(self):
        v = Var(np.array([-2.0, 0.5, 3.0]), requires_grad=True)
        ag.vsum(ag.clamp(v, 0.0, 1.0)).backward()
        assert v.grad.tolist() == [0.0, 1.0, 0.0]
        assert ag.clamp(Var(np.array([-2.0, 0.5, 3.0])), 0.0, 1.0).data.tolist() == [0.0, 0.5, 1.0]


class TestShapes:
    def test_reshape_sum_mean(self, rng):
        w = weighted(rng, (12,))
        check_op(lambda a: w(ag.reshape(a, (12,))), [(3, 4)], rng)
        check_op(lambda a: ag.vmean(a) + ag.vsum(a), [(3, 4)], rng)

    def test_mean_sum_axis(self, rng):
        w = weighted(rng, (4,))
        check_op(lambda a: w(ag.mean_axis(a, 0)), [(3, 4)], rng)
        check_op(lambda a: w(ag.sum_axis(a, 0)), [(3, 4)], rng)

    def test_concat(self, rng):
        w = weighted(rng, (5, 2))
        check_op(lambda a, b: w(ag.concat([a, b], axis=0)), [(3, 2), (2, 2)], rng)

    def test_matmul(self, rng):
        w = weighted(rng, (3, 5))
        check_op(lambda a, b: w(ag.matmul(a, b)), [(3, 4), (4, 5)], rng)


class TestStructured:
    def test_conv2d_gradcheck(self, rng):
        w = weighted(rng, (2, 3, 4, 4))
        check_op(
            lambda x, k, b: w(ag.conv2d(x, k, b, stride=1, pad=1)),
            [(2, 2, 4, 4), (3, 2, 3, 3), (3,)],
            rng,
        )

    def test_conv2d_strided(self, rng):
        w = weighted(rng, (1, 2, 3, 3))
        check_op(
            lambda x, k, b: w(ag.conv2d(x, k, b, stride=2, pad=1)),
            [(1, 1, 6, 6), (2, 1, 3, 3), (2,)],
            rng,
        )

    def test_conv2d_channel_mismatch(self, rng):
        x = Var(rng.standard_normal((1, 3, 4, 4)))
        k = Var(rng.standard_normal((2, 2, 3, 3)))
        with pytest.raises(ValueError, match="channel mismatch"):
            ag.conv2d(x, k, None, 1, 1)

    def test_avgpool2(self, rng):
        w = weighted(rng, (2, 3, 2, 2))
        check_op(lambda x: w(ag.avgpool2(x)), [(2, 3, 4, 4)], rng)
        with pytest.raises(ValueError, match="even"):
            ag.avgpool2(Var(np.zeros((1, 1, 3, 4))))

    def test_upsample_bilinear2(self, rng):
        w = weighted(rng, (1, 2, 8, 8))
        check_op(lambda x: w(ag.upsample_bilinear2(x)), [(1, 2, 4, 4)], rng)

    def test_upsample_constant_preserved(self):
        x = Var(np.full((1, 1, 4, 4), 0.7))
        y = ag.upsample_bilinear2(x)
        assert y.shape == (1, 1, 8, 8)
        assert np.allclose(y.data, 0.7)

    def test_haar_gradcheck(self, rng):
        w = weighted(rng, (2, 8, 2, 2))
        check_op(lambda x: w(ag.haar_dwt_downsample(x)), [(2, 2, 4, 4)], rng)


class TestTapeSemantics:
    def test_backward_requires_scalar(self):
        v = Var(np.zeros(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            v.backward()

    def test_detach_blocks_gradient(self):
        v = Var(np.ones(3), requires_grad=True)
        ag.vsum(ag.mul_const(v.detach(), 2.0)).backward()
        assert v.grad is None

    def test_diamond_graph_accumulates_once_per_path(self):
        v = Var(np.array([2.0]), requires_grad=True)
        a = ag.mul_const(v, 3.0)
        ag.vsum(a + a).backward()
        assert v.grad.tolist() == [6.0]

    def test_grad_accumulates_across_backwards(self):
        v = Var(np.array([1.0]), requires_grad=True)
        ag.vsum(v).backward()
        ag.vsum(ag.mul_const(v, 2.0)).backward()
        assert v.grad.tolist() == [3.0]
        v.zero_grad()
        assert v.grad is None

    def test_leaf_drops_tape(self):
        v = Var(np.ones(2))
        y = ag.mul_const(Var(np.ones(2), requires_grad=True), 2.0)
        assert v._parents == () and v._backward is None
        assert y.detach()._parents == ()
