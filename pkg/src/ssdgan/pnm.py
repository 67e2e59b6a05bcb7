"""Binary portable graymap (P5) and pixmap (P6) images, 8-bit.

Pixel byte p maps to p/255*2 - 1 in [-1, 1]; writing inverts via
round((v+1)/2*255) with clamping, so a write -> read round trip
reproduces the quantized values exactly.
"""

import numpy as np

from .ioutil import atomic_write_bytes

_MAGICS = {b"P5": 1, b"P6": 3}


def _tokens(data, n):
    """First n whitespace-separated header tokens (comments skipped);
    returns (tokens, offset just past the single whitespace byte that
    terminates the last token)."""
    toks = []
    i = 0
    while len(toks) < n:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise ValueError("malformed header: ran out of data")
        toks.append(data[start:i])
        if len(toks) == n:
            if i >= len(data):
                raise ValueError("malformed header: missing payload")
            i += 1  # exactly one whitespace byte before the payload
    return toks, i


def read_image(path):
    """(H, W) float array for P5, (H, W, 3) for P6, values in [-1, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] not in _MAGICS:
        raise ValueError("%s: not a binary PGM/PPM (magic %r)" % (path, data[:2]))
    toks, off = _tokens(data, 4)
    channels = _MAGICS[toks[0]]
    try:
        w, h, maxval = int(toks[1]), int(toks[2]), int(toks[3])
    except ValueError:
        raise ValueError("%s: malformed header fields %s" % (path, toks[1:]))
    if maxval != 255:
        raise ValueError("%s: unsupported max-val %d (only 255)" % (path, maxval))
    need = w * h * channels
    payload = data[off : off + need]
    if len(payload) < need:
        raise ValueError(
            "%s: truncated payload (%d bytes, expected %d)" % (path, len(payload), need)
        )
    arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    arr = arr / 255.0 * 2.0 - 1.0
    shape = (h, w) if channels == 1 else (h, w, 3)
    return arr.reshape(shape)


def write_image(path, image):
    """Write [-1, 1] values as P5 (2-D or single-channel) or P6 (3-ch)."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError("expected (H,W), (H,W,1) or (H,W,3) image, got shape %s" % (arr.shape,))
    quant = np.clip(np.round((arr + 1.0) / 2.0 * 255.0), 0, 255).astype(np.uint8)
    h, w = quant.shape[:2]
    header = b"%s\n%d %d\n255\n" % (magic, w, h)
    atomic_write_bytes(path, header + quant.tobytes())
