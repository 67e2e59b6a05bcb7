"""Spectral realness: the classifier C, its objective, the blended
spatial+spectral score, and the spectral regularization term used by
the REG generator baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import spectral
from .autograd import Var
from .layers import Linear, Module

PROB_CLAMP = 1e-7
REG_DELTA = 1e-7


@dataclass
class RealnessScore:
    spatial: float
    spectral: float
    lam: float
    overall: float


class SpectralClassifier(Module):
    """One fully connected layer + sigmoid over a reduced spectrum."""

    def __init__(self, input_dim, rng, dtype=np.float32):
        self.input_dim = input_dim
        self.fc = Linear(input_dim, 1, rng=rng, dtype=dtype)

    def forward(self, v):
        """v: Var (B, input_dim) -> Var (B, 1) of probabilities."""
        return ag.sigmoid(self.fc.forward(v))

    def predict(self, vectors):
        """Probabilities for a (B, input_dim) array, no tape."""
        arr = np.asarray(vectors, dtype=self.fc.w.dtype)
        return self.forward(Var(arr)).data[:, 0]


def classify(c, v):
    """Spectral realness probability of a single SpectralVector."""
    vec = v.values if isinstance(v, spectral.SpectralVector) else np.asarray(v)
    if len(vec) != c.input_dim:
        raise ValueError(
            "spectral vector length %d != classifier input dim %d" % (len(vec), c.input_dim)
        )
    return float(c.predict(vec[None, :])[0])


def _clamped_prob(p):
    return ag.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def spectral_bce_loss(c, real_vectors, fake_vectors):
    """E_real[log C(v)] + E_fake[log(1 - C(v))] as a Var.

    This is a log-likelihood: the classifier update ascends it
    (training minimizes its negation).
    """
    vr = Var(np.asarray(real_vectors, dtype=c.fc.w.dtype))
    vf = Var(np.asarray(fake_vectors, dtype=c.fc.w.dtype))
    pr = _clamped_prob(c.forward(vr))
    pf = _clamped_prob(c.forward(vf))
    one = c.fc.w.data.dtype.type(1.0)
    return ag.vmean(ag.log(pr)) + ag.vmean(ag.log(one - pf))


def overall_realness(spatial, spectral_score, lam):
    """Blend lam * D(x) + (1 - lam) * C(phi(x))."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1], got %r" % (lam,))
    overall = lam * spatial + (1.0 - lam) * spectral_score
    return RealnessScore(spatial=spatial, spectral=spectral_score, lam=lam, overall=overall)


def _rescale_profiles(real_mean, fake_mean, delta=REG_DELTA):
    """Affine map sending the real profile's [min, max] to
    [delta, 1 - delta]; applied to both profiles, fake clipped into
    range so the cross entropy stays finite."""
    lo = real_mean.min()
    hi = real_mean.max()
    scale = (1.0 - 2.0 * delta) / max(hi - lo, 1e-30)
    p = delta + (real_mean - lo) * scale
    q = delta + (fake_mean - lo) * scale
    return p, np.clip(q, delta, 1.0 - delta)


def spectral_reg_loss(real_batch, fake_batch):
    """Binary cross entropy between batch-mean reduced spectra, the
    real mean serving as the target."""
    if not len(real_batch) or not len(fake_batch):
        raise ValueError("batches must be nonempty")
    phi_real = np.mean([spectral.phi(im).values for im in real_batch], axis=0)
    phi_fake = np.mean([spectral.phi(im).values for im in fake_batch], axis=0)
    p, q = _rescale_profiles(phi_real, phi_fake)
    return float(-(p * np.log(q) + (1.0 - p) * np.log(1.0 - q)).mean())


def spectral_reg_loss_var(real_profile, fake_images_var, delta=REG_DELTA):
    """Differentiable REG term for the generator objective.

    real_profile: precomputed batch-mean phi of the real data (array).
    fake_images_var: (B, C, H, W) Var of phi-ready images; gradients
    flow through the reduced-spectrum pipeline.
    """
    dt = fake_images_var.data.dtype
    lo = real_profile.min()
    hi = real_profile.max()
    scale = (1.0 - 2.0 * delta) / max(hi - lo, 1e-30)
    p = delta + (real_profile - lo) * scale
    vf = spectral.phi_batch_var(fake_images_var)
    fake_mean = ag.mean_axis(vf, 0)
    q = ag.add_const(ag.mul_const(ag.add_const(fake_mean, -lo), scale), delta)
    q = ag.clamp(q, delta, 1.0 - delta)
    pc = Var(np.asarray(p, dtype=q.dtype))
    one = q.data.dtype.type(1.0)
    bce = ag.mul_const(
        ag.vmean(ag.mul(pc, ag.log(q)) + ag.mul(one - pc, ag.log(one - q))), -1.0
    )
    return bce
