"""Spectral classifier, blended realness score, and the spectral
regularization term checked against hand-computed values."""

import numpy as np
import pytest

from ssdgan import realness, spectral
from ssdgan.autograd import Var
from ssdgan.realness import (
    SpectralClassifier,
    classify,
    overall_realness,
    spectral_bce_loss,
    spectral_reg_loss,
    spectral_reg_loss_var,
)

from conftest import numeric_grad, rel_err


def make_classifier(dim, rng, dtype=np.float64):
    return SpectralClassifier(dim, rng=rng, dtype=dtype)


class TestClassifier:
    def test_outputs_are_probabilities(self, rng):
        c = make_classifier(12, rng)
        v = rng.standard_normal((20, 12))
        p = c.predict(v)
        assert p.shape == (20,)
        assert np.all((p > 0.0) & (p < 1.0))

    def test_classify_matches_manual_sigmoid(self, rng):
        c = make_classifier(5, rng)
        v = rng.standard_normal(5)
        z = float(v @ c.fc.w.data[0] + c.fc.b.data[0])
        assert classify(c, v) == pytest.approx(1.0 / (1.0 + np.exp(-z)), rel=1e-10)

    def test_classify_accepts_spectral_vector(self, rng):
        c = make_classifier(12, rng)
        img = rng.uniform(0.0, 1.0, (16, 16))
        p = classify(c, spectral.phi(img))
        assert 0.0 < p < 1.0

    def test_classify_length_error(self, rng):
        c = make_classifier(12, rng)
        with pytest.raises(ValueError, match="length 5"):
            classify(c, np.zeros(5))


class TestBceLoss:
    def test_uninformed_classifier_value(self, rng):
        c = make_classifier(4, rng)
        c.fc.w.data[...] = 0.0
        c.fc.b.data[...] = 0.0
        loss = spectral_bce_loss(c, rng.standard_normal((3, 4)), rng.standard_normal((5, 4)))
        # C == 0.5 everywhere: log 0.5 + log 0.5
        assert float(loss.data) == pytest.approx(-2.0 * np.log(2.0), rel=1e-12)

    def test_matches_manual_computation(self, rng):
        c = make_classifier(3, rng)
        vr = rng.standard_normal((4, 3))
        vf = rng.standard_normal((2, 3))
        sig = lambda z: 1.0 / (1.0 + np.exp(-z))
        pr = sig(vr @ c.fc.w.data[0] + c.fc.b.data[0])
        pf = sig(vf @ c.fc.w.data[0] + c.fc.b.data[0])
        want = np.log(pr).mean() + np.log(1.0 - pf).mean()
        got = float(spectral_bce_loss(c, vr, vf).data)
        assert got == pytest.approx(want, rel=1e-10)

    def test_ascending_improves_separation(self, rng):
        c = make_classifier(3, rng)
        vr = rng.standard_normal((8, 3)) + 2.0
        vf = rng.standard_normal((8, 3)) - 2.0
        before = float(spectral_bce_loss(c, vr, vf).data)
        loss = spectral_bce_loss(c, vr, vf)
        loss.backward()
        for p in (c.fc.w, c.fc.b):
            p.data += 0.1 * p.grad  # ascend the log-likelihood
        after = float(spectral_bce_loss(c, vr, vf).data)
        assert after > before

    def test_gradients_reach_classifier_params(self, rng):
        c = make_classifier(3, rng)
        spectral_bce_loss(c, rng.standard_normal((2, 3)), rng.standard_normal((2, 3))).backward()
        assert c.fc.w.grad is not None and c.fc.b.grad is not None


class TestOverallRealness:
    def test_blend_values(self):
        s = overall_realness(0.8, 0.2, 0.5)
        assert s.overall == pytest.approx(0.5)
        assert overall_realness(0.8, 0.2, 1.0).overall == 0.8
        assert overall_realness(0.8, 0.2, 0.0).overall == 0.2

    def test_lambda_range_error(self):
        with pytest.raises(ValueError, match="lambda"):
            overall_realness(0.5, 0.5, 1.5)
        with pytest.raises(ValueError, match="lambda"):
            overall_realness(0.5, 0.5, -0.1)


class TestRegLoss:
    def test_minimum_at_matching_profiles(self, rng):
        real = [rng.uniform(0.0, 1.0, (8, 8)) for _ in range(4)]
        base = spectral_reg_loss(real, real)
        for _ in range(5):
            fake = [im + rng.normal(0, 0.2, im.shape) for im in real]
            assert spectral_reg_loss(real, fake) >= base

    def test_matching_profiles_give_entropy(self, rng):
        real = [rng.uniform(0.0, 1.0, (8, 8))]
        p, q = realness._rescale_profiles(
            spectral.phi(real[0]).values, spectral.phi(real[0]).values
        )
        entropy = float(-(p * np.log(q) + (1 - p) * np.log(1 - q)).mean())
        assert spectral_reg_loss(real, real) == pytest.approx(entropy, rel=1e-12)

    def test_empty_batch_error(self, rng):
        with pytest.raises(ValueError, match="nonempty"):
            spectral_reg_loss([], [rng.uniform(0, 1, (4, 4))])

    def test_var_form_matches_scalar_form(self, rng):
        real = [rng.uniform(0.0, 1.0, (8, 8)) for _ in range(3)]
        fake = rng.uniform(0.0, 1.0, (3, 1, 8, 8))
        profile = np.mean([spectral.phi(im).values for im in real], axis=0)
        got = float(spectral_reg_loss_var(profile, Var(fake)).data)
        want = spectral_reg_loss(real, list(fake[:, 0]))
        assert got == pytest.approx(want, rel=1e-10)

    def test_var_form_gradcheck(self, rng):
        real = [rng.uniform(0.2, 1.0, (8, 8)) for _ in range(2)]
        profile = np.mean([spectral.phi(im).values for im in real], axis=0)
        x0 = rng.uniform(0.2, 1.0, (2, 1, 8, 8))
        xv = Var(x0.copy(), requires_grad=True)
        spectral_reg_loss_var(profile, xv).backward()

        def f(xd):
            return float(spectral_reg_loss_var(profile, Var(xd)).data)

        assert rel_err(xv.grad, numeric_grad(f, x0)) < 1e-4
