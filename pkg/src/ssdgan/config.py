"""Flat key=value run configuration.

Every key has a default; command-line flags override file values; the
fully resolved config echoes into each run directory so every number
is recomputable from it.  Floats serialize via repr, which round-trips
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from . import gan

# text key -> attribute name (only differs for the keyword "lambda")
_KEYS = (
    ("mode", "mode", str),
    ("lambda", "lam", float),
    ("lr", "lr", float),
    ("beta1", "beta1", float),
    ("beta2", "beta2", float),
    ("iterations", "iterations", int),
    ("batch_size", "batch_size", int),
    ("latent_dim", "latent_dim", int),
    ("seed", "seed", int),
    ("w_reg", "w_reg", float),
    ("record_every", "record_every", int),
    ("image_size", "image_size", int),
)


@dataclass
class RunConfig:
    mode: str = "ssd"
    lam: float = 0.5
    lr: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.9
    iterations: int = 10000
    batch_size: int = 8
    latent_dim: int = 8
    seed: int = 0
    w_reg: float = 1.0
    record_every: int = 500
    image_size: int = 16

    def to_text(self):
        lines = []
        for key, attr, typ in _KEYS:
            value = getattr(self, attr)
            lines.append("%s=%s" % (key, repr(value) if typ is float else value))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        values = {}
        by_key = {key: (attr, typ) for key, attr, typ in _KEYS}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError("config line %d has no '=': %r" % (lineno, raw))
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in by_key:
                raise ValueError("unknown config key %r on line %d" % (key, lineno))
            attr, typ = by_key[key]
            try:
                values[attr] = typ(val.strip())
            except ValueError:
                raise ValueError("config key %r has bad %s value %r" % (key, typ.__name__, val))
        return cls(**values)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_gan_config(self):
        kw = {f.name: getattr(self, f.name) for f in fields(gan.GanConfig)}
        return gan.GanConfig(**kw)

    @classmethod
    def from_gan_config(cls, gcfg):
        kw = {f.name: getattr(gcfg, f.name) for f in fields(gan.GanConfig)}
        return cls(**kw)
