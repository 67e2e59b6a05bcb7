"""Frequency-domain pipeline: 2-D DFT, centering, azimuthal reduction.

The reduced spectral representation of an image is the azimuthal mean
of its centered DFT magnitude, indexed by integer radius and divided by
the DC bin.  The transform is computed directly via precomputed DFT
matrices (images here are small); tests check it against a naive
quadruple-loop oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Var

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
DC_EPS = 1e-8


@dataclass
class Spectrum:
    values: np.ndarray  # complex, row-major (M, N)
    centered: bool

    @property
    def shape(self):
        return self.values.shape


@dataclass
class SpectralVector:
    values: np.ndarray  # length R + 1
    normalized: bool

    @property
    def max_radius(self):
        return len(self.values) - 1


def to_grayscale(image):
    """Luma reduction; 1-channel input passes through."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 1:
        return img[:, :, 0]
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ LUMA_WEIGHTS
    raise ValueError("expected 1 or 3 channels, got shape %s" % (img.shape,))


_DFT_CACHE = {}


def _dft_matrix(n):
    m = _DFT_CACHE.get(n)
    if m is None:
        k = np.arange(n)
        m = np.exp(-2j * np.pi * np.outer(k, k) / n)
        _DFT_CACHE[n] = m
    return m


def dft2(signal):
    """Unnormalized forward 2-D DFT, uncentered layout."""
    f = np.asarray(signal, dtype=np.float64)
    M, N = f.shape
    return Spectrum(_dft_matrix(M) @ f @ _dft_matrix(N), centered=False)


def idft2(values):
    """Inverse of dft2 on a raw complex array; returns a complex array."""
    M, N = values.shape
    em = _dft_matrix(M).conj()
    en = _dft_matrix(N).conj()
    return (em @ values @ en) / (M * N)


def fftshift2(spectrum):
    if spectrum.centered:
        raise ValueError("spectrum is already centered")
    return Spectrum(np.fft.fftshift(spectrum.values), centered=True)


def ifftshift2(spectrum):
    if not spectrum.centered:
        raise ValueError("spectrum is not centered")
    return Spectrum(np.fft.ifftshift(spectrum.values), centered=False)


_BIN_CACHE = {}


def radial_bins(M, N):
    """(bins, counts, R) for a centered M x N spectrum.

    Pixel at centered offset (dk, dl) lands in integer bin
    round(sqrt(dk^2 + dl^2)); R covers the corner bins beyond the
    per-axis Nyquist.
    """
    key = (M, N)
    cached = _BIN_CACHE.get(key)
    if cached is None:
        dk = np.arange(M) - M // 2
        dl = np.arange(N) - N // 2
        rho = np.hypot(dk[:, None], dl[None, :])
        R = int(np.floor(np.sqrt((M / 2.0) ** 2 + (N / 2.0) ** 2) + 0.5))
        bins = np.floor(rho + 0.5).astype(np.int64)
        counts = np.bincount(bins.ravel(), minlength=R + 1)
        cached = (bins, counts, R)
        _BIN_CACHE[key] = cached
    return cached


def centered_radius_map(M, N):
    dk = np.arange(M) - M // 2
    dl = np.arange(N) - N // 2
    return np.hypot(dk[:, None], dl[None, :])


def max_radius(M, N):
    return np.sqrt((M / 2.0) ** 2 + (N / 2.0) ** 2)


def azimuthal_average(spectrum):
    """Mean DFT magnitude per integer radius bin (empty bins are 0)."""
    if not spectrum.centered:
        raise ValueError("azimuthal_average requires a centered spectrum")
    M, N = spectrum.shape
    bins, counts, R = radial_bins(M, N)
    sums = np.bincount(bins.ravel(), weights=np.abs(spectrum.values).ravel(), minlength=R + 1)
    v = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return SpectralVector(v, normalized=False)


def phi(image):
    """Reduced spectral representation: grayscale -> DFT -> azimuthal
    mean -> DC-normalized."""
    gray = to_grayscale(image)
    v = azimuthal_average(fftshift2(dft2(gray))).values
    v = v / max(v[0], DC_EPS)
    return SpectralVector(v, normalized=True)


def band_modulate(image, r_lo, r_hi, alpha):
    """Scale the DFT magnitude by alpha on the radial band
    [r_lo, r_hi] (fractions of the full radial extent, so [0, 1]
    covers every bin including the corners), then invert.

    alpha == 1 returns the input untouched so that probe tables built
    on the identity row are exact.
    """
    if not (0 <= r_lo < r_hi <= 1):
        raise ValueError("band must satisfy 0 <= r_lo < r_hi <= 1")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    img = np.asarray(image, dtype=np.float64)
    if alpha == 1.0:
        return img.copy()
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    M, N = img.shape[:2]
    rho = np.fft.ifftshift(centered_radius_map(M, N))
    rmax = max_radius(M, N)
    # the mask is symmetric under (k,l) -> (-k,-l) mod (M,N), so the
    # scaled spectrum stays conjugate-symmetric and the inverse is real
    mask = (rho >= r_lo * rmax) & (rho <= r_hi * rmax)
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        fv = dft2(img[:, :, c]).values
        fv[mask] *= alpha
        out[:, :, c] = idft2(fv).real
    out = np.clip(out, -1.0, 1.0)
    return out[:, :, 0] if squeeze else out


def mean_spectrum_diff(images_a, images_b):
    """|E[F(a)] - E[F(b)]| over centered spectra (complex means first)."""
    if not images_a or not images_b:
        raise ValueError("both image lists must be nonempty")

    def mean_spec(images):
        shape = to_grayscale(images[0]).shape
        acc = np.zeros(shape, dtype=np.complex128)
        for im in images:
            g = to_grayscale(im)
            if g.shape != shape:
                raise ValueError("image size mismatch: %s vs %s" % (g.shape, shape))
            acc += fftshift2(dft2(g)).values
        return acc / len(images)

    ma = mean_spec(images_a)
    mb = mean_spec(images_b)
    if ma.shape != mb.shape:
        raise ValueError("image size mismatch between lists: %s vs %s" % (ma.shape, mb.shape))
    return np.abs(ma - mb)


# -- batched / differentiable form ----------------------------------------


def _bin_matrix(M, N):
    key = ("mat", M, N)
    m = _BIN_CACHE.get(key)
    if m is None:
        bins, counts, R = radial_bins(M, N)
        m = np.zeros((R + 1, M * N))
        m[bins.ravel(), np.arange(M * N)] = 1.0
        m /= np.maximum(counts, 1)[:, None]
        _BIN_CACHE[key] = m
    return m


def phi_batch(images):
    """phi for a (B, C, H, W) array; returns a (B, R+1) float64 array."""
    x = np.asarray(images, dtype=np.float64)
    B, C, H, W = x.shape
    w = LUMA_WEIGHTS if C == 3 else np.ones(1)
    gray = np.einsum("bchw,c->bhw", x, w)
    F = _dft_matrix(H) @ gray @ _dft_matrix(W)
    mag = np.abs(np.fft.fftshift(F, axes=(1, 2)))
    v = mag.reshape(B, H * W) @ _bin_matrix(H, W).T
    denom = np.maximum(v[:, :1], DC_EPS)
    return v / denom


def phi_batch_var(x):
    """Differentiable phi over a (B, C, H, W) Var.

    Gradients chain through the magnitude and the linear DFT; the DFT
    matrices are symmetric so the adjoint uses plain (non-conjugate)
    transposes.  Bins whose magnitude is ~0 get zero gradient.
    """
    B, C, H, W = x.shape
    wch = (LUMA_WEIGHTS if C == 3 else np.ones(1))
    gray = np.einsum("bchw,c->bhw", x.data.astype(np.float64), wch)
    P = _dft_matrix(H)
    Q = _dft_matrix(W)
    F = P @ gray @ Q
    Fs = np.fft.fftshift(F, axes=(1, 2))
    mag = np.abs(Fs)
    binmat = _bin_matrix(H, W)
    v = mag.reshape(B, H * W) @ binmat.T
    denom = np.maximum(v[:, :1], DC_EPS)
    out_data = v / denom
    out = Var(out_data, parents=(x,))

    def bwd(g):
        gv = g / denom
        live = (v[:, :1] > DC_EPS)
        gv[:, :1] += np.where(live, -(g * out_data).sum(axis=1, keepdims=True) / denom, 0.0)
        gmag = (gv @ binmat).reshape(B, H, W)
        safe = np.maximum(mag, 1e-300)
        gFs = gmag * (Fs.real / safe) - 1j * (gmag * (Fs.imag / safe))
        gF = np.fft.ifftshift(gFs, axes=(1, 2))
        ggray = (P.T @ gF @ Q.T).real
        gx = np.einsum("bhw,c->bchw", ggray, wch)
        x.accumulate(gx.astype(x.data.dtype))

    out._backward = bwd
    return out
