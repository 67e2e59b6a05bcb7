"""Checkpoint container: named float32 tensors in a little-endian
binary file.

Layout: magic "SSDC"; format version (u32); tensor count (u32); then
per tensor: name length (u32) + UTF-8 name, rank (u32), dims (u32
each), payload (row-major little-endian float32).  Tensors are stored
sorted by name, so save -> load -> save is byte-identical.
"""

import struct

import numpy as np

from .ioutil import atomic_write_bytes

MAGIC = b"SSDC"
VERSION = 1


def save_checkpoint(path, tensors):
    """tensors: mapping name -> array (cast to float32)."""
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack("<%dI" % arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    atomic_write_bytes(path, b"".join(parts))


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n, what):
        if self.off + n > len(self.data):
            raise ValueError("%s: truncated checkpoint while reading %s" % (self.path, what))
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path):
    """dict name -> float32 array, in file order."""
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data, path)
    if r.take(4, "magic") != MAGIC:
        raise ValueError("%s: not a checkpoint file (bad magic)" % path)
    version = r.u32("version")
    if version != VERSION:
        raise ValueError("%s: unsupported checkpoint version %d" % (path, version))
    count = r.u32("tensor count")
    out = {}
    for _ in range(count):
        nlen = r.u32("name length")
        name = r.take(nlen, "name").decode("utf-8")
        rank = r.u32("rank")
        shape = struct.unpack("<%dI" % rank, r.take(4 * rank, "dims")) if rank else ()
        size = int(np.prod(shape)) if rank else 1
        payload = r.take(4 * size, "tensor %r payload" % name)
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return out


def check_compatible(table, reference):
    """Raise unless `table` has exactly the names and shapes of
    `reference` (a name -> array mapping); names the offender."""
    for name, ref in reference.items():
        if name not in table:
            raise ValueError("checkpoint is missing tensor %r" % name)
        got = table[name].shape
        want = np.asarray(ref).shape
        if got != want:
            raise ValueError(
                "checkpoint tensor %r has shape %s, expected %s" % (name, got, want)
            )
    extra = set(table) - set(reference)
    if extra:
        raise ValueError("checkpoint has unexpected tensor %r" % sorted(extra)[0])
