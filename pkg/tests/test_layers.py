"""Layer semantics: gradient checks at 64-bit, batchnorm statistics,
spectral normalization, and the orthonormal Haar analysis step."""

import numpy as np
import pytest

from ssdgan import autograd as ag
from ssdgan.autograd import Var
from ssdgan.layers import (
    BatchNorm2d,
    Conv2d,
    Linear,
    SpectralNormLinear,
    global_sum_pool,
    power_iteration,
    spectral_normalize,
)

from conftest import numeric_grad, rel_err

TOL = 1e-4


def weighted_loss(y, w):
    return ag.vsum(ag.mul(y, Var(w)))


class TestLinearConv:
    def test_linear_gradcheck(self, rng):
        layer = Linear(4, 3, rng=rng, dtype=np.float64)
        x0 = rng.standard_normal((5, 4))
        w = rng.standard_normal((5, 3))

        def run(xd):
            return weighted_loss(layer.forward(Var(xd)), w)

        xv = Var(x0.copy(), requires_grad=True)
        loss = weighted_loss(layer.forward(xv), w)
        loss.backward()
        assert rel_err(xv.grad, numeric_grad(lambda x: float(run(x).data), x0)) < TOL

        def loss_of_w(wd):
            orig = layer.w.data.copy()
            layer.w.data[...] = wd
            out = float(weighted_loss(layer.forward(Var(x0)), w).data)
            layer.w.data[...] = orig
            return out

        assert rel_err(layer.w.grad, numeric_grad(loss_of_w, layer.w.data.copy())) < TOL

    def test_linear_dim_error(self, rng):
        layer = Linear(4, 3, rng=rng)
        with pytest.raises(ValueError, match="input dim"):
            layer.forward(Var(np.zeros((2, 5), dtype=np.float32)))

    def test_conv_kernel_size_restriction(self, rng):
        with pytest.raises(ValueError, match="kernels"):
            Conv2d(1, 1, 5, rng=rng)

    def test_conv_layer_gradcheck(self, rng):
        layer = Conv2d(2, 3, 3, 1, 1, rng=rng, dtype=np.float64)
        x0 = rng.standard_normal((2, 2, 4, 4))
        w = rng.standard_normal((2, 3, 4, 4))
        xv = Var(x0.copy(), requires_grad=True)
        weighted_loss(layer.forward(xv), w).backward()

        def f(xd):
            return float(weighted_loss(layer.forward(Var(xd)), w).data)

        assert rel_err(xv.grad, numeric_grad(f, x0)) < TOL


class TestBatchNorm:
    def test_normalizes_batch(self, rng):
        bn = BatchNorm2d(3, dtype=np.float64)
        x = Var(rng.standard_normal((4, 3, 5, 5)))
        y = bn.forward(x, training=True)
        assert np.allclose(y.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-7)
        assert np.allclose(y.data.std(axis=(0, 2, 3)), 1.0, atol=1e-3)

    def test_gradcheck_training(self, rng):
        bn = BatchNorm2d(2, dtype=np.float64)
        bn.gamma.data[...] = rng.standard_normal(2)
        bn.beta.data[...] = rng.standard_normal(2)
        x0 = rng.standard_normal((3, 2, 2, 2))
        w = rng.standard_normal((3, 2, 2, 2))

        def f(xd):
            fresh = BatchNorm2d(2, dtype=np.float64)
            fresh.gamma.data[...] = bn.gamma.data
            fresh.beta.data[...] = bn.beta.data
            return float(weighted_loss(fresh.forward(Var(xd), True), w).data)

        xv = Var(x0.copy(), requires_grad=True)
        weighted_loss(bn.forward(xv, True), w).backward()
        assert rel_err(xv.grad, numeric_grad(f, x0)) < TOL
        # parameter gradients
        gnum = numeric_grad(
            lambda gd: _bn_param_loss(gd, bn.beta.data, x0, w), bn.gamma.data.copy()
        )
        bnum = numeric_grad(
            lambda bd: _bn_param_loss(bn.gamma.data, bd, x0, w), bn.beta.data.copy()
        )
        assert rel_err(bn.gamma.grad, gnum) < TOL
        assert rel_err(bn.beta.grad, bnum) < TOL

    def test_running_stats_and_eval(self, rng):
        bn = BatchNorm2d(2, dtype=np.float64)
        x = rng.standard_normal((8, 2, 4, 4)) * 3.0 + 1.0
        for _ in range(200):
            bn.forward(Var(x), training=True)
        mean = x.mean(axis=(0, 2, 3))
        n = 8 * 16
        var = x.var(axis=(0, 2, 3)) * n / (n - 1)
        assert np.allclose(bn.running_mean, mean, atol=1e-6)
        assert np.allclose(bn.running_var, var, atol=1e-6)
        y = bn.forward(Var(x), training=False)
        expect = (x - mean[:, None, None]) / np.sqrt(var[:, None, None] + bn.eps)
        assert np.allclose(y.data, expect, atol=1e-6)

    def test_eval_mode_does_not_update_stats(self, rng):
        bn = BatchNorm2d(2)
        before = bn.running_mean.copy()
        bn.forward(Var(rng.standard_normal((2, 2, 4, 4)).astype(np.float32)), training=False)
        assert np.array_equal(bn.running_mean, before)


def _bn_param_loss(gamma, beta, x0, w):
    bn = BatchNorm2d(gamma.shape[0], dtype=np.float64)
    bn.gamma.data[...] = gamma
    bn.beta.data[...] = beta
    return float(ag.vsum(ag.mul(bn.forward(Var(x0), True), Var(w))).data)


class TestSpectralNorm:
    def test_power_iteration_matches_svd(self, rng):
        w = rng.standard_normal((8, 4))
        u = rng.standard_normal(8)
        u /= np.linalg.norm(u)
        sigma, _, _ = power_iteration(w, u, 50)
        top = np.linalg.svd(w, compute_uv=False)[0]
        assert abs(sigma - top) / top < 1e-6

    def test_normalized_matrix_unit_norm(self, rng):
        for _ in range(5):
            w = rng.standard_normal((8, 4))
            u = rng.standard_normal(8)
            u /= np.linalg.norm(u)
            wn = spectral_normalize(w, u, n_iters=50)
            top = np.linalg.svd(wn, compute_uv=False)[0]
            assert 0.99 <= top <= 1.01

    def test_zero_matrix_unchanged(self):
        w = np.zeros((3, 3))
        u = np.ones(3) / np.sqrt(3)
        assert np.array_equal(spectral_normalize(w, u), w)

    def test_sn_linear_gradcheck(self, rng):
        layer = SpectralNormLinear(4, 3, rng=rng, dtype=np.float64)
        # converge u so training forward's single iteration is stationary
        for _ in range(100):
            layer.forward(Var(rng.standard_normal((1, 4))), training=True)
        x0 = rng.standard_normal((3, 4))
        w = rng.standard_normal((3, 3))
        u_frozen = layer.u.copy()

        def loss_of_w(wd):
            fresh = SpectralNormLinear(4, 3, rng=np.random.default_rng(0), dtype=np.float64)
            fresh.w.data[...] = wd
            fresh.b.data[...] = layer.b.data
            fresh.u = u_frozen.copy()
            return float(weighted_loss(fresh.forward(Var(x0), training=False), w).data)

        layer.u = u_frozen.copy()
        weighted_loss(layer.forward(Var(x0), training=False), w).backward()
        num = numeric_grad(loss_of_w, layer.w.data.copy())
        assert rel_err(layer.w.grad, num) < TOL

    def test_training_updates_u_eval_does_not(self, rng):
        layer = SpectralNormLinear(4, 2, rng=rng)
        before = layer.u.copy()
        layer.forward(Var(rng.standard_normal((1, 4)).astype(np.float32)), training=False)
        assert np.array_equal(layer.u, before)
        layer.forward(Var(rng.standard_normal((1, 4)).astype(np.float32)), training=True)
        assert not np.array_equal(layer.u, before)


class TestHaar:
    def test_round_trip_and_energy(self, rng):
        x0 = rng.standard_normal((2, 3, 8, 8))
        y = ag.haar_dwt_downsample(Var(x0)).data
        assert y.shape == (2, 12, 4, 4)
        # orthonormal analysis: energy preserved, synthesis = adjoint
        assert abs((y ** 2).sum() - (x0 ** 2).sum()) < 1e-6 * (x0 ** 2).sum()
        ll, lh, hl, hh = np.split(y, 4, axis=1)
        recon = np.empty_like(x0).reshape(2, 3, 4, 2, 4, 2)
        recon[:, :, :, 0, :, 0] = (ll + lh + hl + hh) / 2
        recon[:, :, :, 0, :, 1] = (ll - lh + hl - hh) / 2
        recon[:, :, :, 1, :, 0] = (ll + lh - hl - hh) / 2
        recon[:, :, :, 1, :, 1] = (ll - lh - hl + hh) / 2
        assert np.abs(recon.reshape(x0.shape) - x0).max() < 1e-6

    def test_constant_image_goes_to_ll_only(self):
        x = Var(np.full((1, 1, 4, 4), 0.5))
        y = ag.haar_dwt_downsample(x).data
        assert np.allclose(y[:, 0], 1.0)  # LL = 2 * 0.5
        assert np.allclose(y[:, 1:], 0.0)

    def test_odd_dims_error(self):
        with pytest.raises(ValueError, match="even"):
            ag.haar_dwt_downsample(Var(np.zeros((1, 1, 3, 4))))


def test_global_sum_pool(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    y = global_sum_pool(Var(x))
    assert np.allclose(y.data, x.sum(axis=(2, 3)))
