"""Both conv backends against a naive six-loop oracle and each other."""

import importlib

import numpy as np
import pytest

from ssdgan import _backend, _conv_numpy

from conftest import rel_err


def naive_conv2d(x, w, b, stride, pad):
    B, C, H, W = x.shape
    cout, cin, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (H + 2 * pad - k) // stride + 1
    wo = (W + 2 * pad - k) // stride + 1
    y = np.zeros((B, cout, ho, wo), dtype=np.float64)
    for bi in range(B):
        for co in range(cout):
            for oh in range(ho):
                for ow in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for ki in range(k):
                            for kj in range(k):
                                acc += (
                                    xp[bi, ci, oh * stride + ki, ow * stride + kj]
                                    * w[co, ci, ki, kj]
                                )
                    y[bi, co, oh, ow] = acc + (b[co] if b is not None else 0.0)
    return y


def backends():
    out = [_conv_numpy]
    try:
        out.append(importlib.import_module("ssdgan._convkernels"))
    except ImportError:
        pass
    return out


CASES = [
    (1, 1, 1, 4, 3, 1, 1),
    (2, 3, 4, 5, 3, 1, 1),
    (2, 2, 3, 6, 3, 2, 1),
    (1, 4, 2, 4, 1, 1, 0),
]


@pytest.mark.parametrize("backend", backends(), ids=lambda m: m.NAME)
@pytest.mark.parametrize("case", CASES)
def test_forward_matches_naive_oracle(backend, case, rng):
    B, cin, cout, H, k, stride, pad = case
    x = rng.standard_normal((B, cin, H, H))
    w = rng.standard_normal((cout, cin, k, k))
    b = rng.standard_normal(cout)
    y, _ = backend.conv2d_forward(x, w, b, stride, pad)
    assert rel_err(y, naive_conv2d(x, w, b, stride, pad)) < 1e-12


@pytest.mark.parametrize("backend", backends(), ids=lambda m: m.NAME)
def test_backward_matches_numpy_reference(backend, rng):
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = np.zeros(4)
    y, cols = backend.conv2d_forward(x, w, b, 1, 1)
    gy = rng.standard_normal(y.shape)
    gx, gw, gb = backend.conv2d_backward(x, w, gy, 1, 1, cols, True)
    y2, cols2 = _conv_numpy.conv2d_forward(x, w, b, 1, 1)
    gx2, gw2, gb2 = _conv_numpy.conv2d_backward(x, w, gy, 1, 1, cols2, True)
    assert rel_err(y, y2) < 1e-12
    assert rel_err(gx, gx2) < 1e-12
    assert rel_err(gw, gw2) < 1e-12
    assert rel_err(gb, gb2) < 1e-12


def test_selected_backend_exposes_name():
    assert _backend.NAME in ("cython", "numpy")
    assert _backend.backend_name() == _backend.NAME


def test_float32_path(rng):
    for backend in backends():
        x = rng.standard_normal((2, 2, 4, 4)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        b = np.zeros(3, dtype=np.float32)
        y, cols = backend.conv2d_forward(x, w, b, 1, 1)
        assert y.dtype == np.float32
        gx, gw, gb = backend.conv2d_backward(x, w, y.copy(), 1, 1, cols, True)
        assert gx.dtype == np.float32 and gw.dtype == np.float32
