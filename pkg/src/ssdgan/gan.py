"""Generator/discriminator pair, adversarial objectives with the
blended spatial+spectral realness score, and the alternating
classifier -> discriminator -> generator training loop.

The spectral classifier's probability enters the adversarial losses as
a detached per-sample constant: adversarial backpropagation never
reaches the classifier's parameters, it only modulates the size of the
spatial gradients (spectrally bad samples get larger generator
updates).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import spectral
from .autograd import Var
from .layers import (
    BatchNorm2d,
    Conv2d,
    Linear,
    Module,
    SpectralNormLinear,
    global_sum_pool,
)
from .optim import Adam
from .realness import PROB_CLAMP, SpectralClassifier, spectral_bce_loss, spectral_reg_loss_var

MODES = ("sgan", "ssd", "ssd_reg")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class GanConfig:
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

    def validate(self):
        if self.mode not in MODES:
            raise ValueError("mode must be one of %s, got %r" % (MODES, self.mode))
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1], got %r" % (self.lam,))

    @property
    def effective_lambda(self):
        return 1.0 if self.mode == "sgan" else self.lam


@dataclass
class StepMetrics:
    iteration: int
    d_loss: float
    g_loss: float
    c_loss: float
    mean_d_real: float
    mean_d_fake: float
    spectral_discrepancy: float

    CSV_HEADER = "iteration,d_loss,g_loss,c_loss,mean_D_real,mean_D_fake,spectral_discrepancy"

    def csv_row(self):
        return "%d,%r,%r,%r,%r,%r,%r" % (
            self.iteration,
            self.d_loss,
            self.g_loss,
            self.c_loss,
            self.mean_d_real,
            self.mean_d_fake,
            self.spectral_discrepancy,
        )


def phi_ready(images):
    """Map [-1, 1] images to [0, 1] before the spectral pipeline so a
    zero-mean pattern keeps a nonzero DC bin."""
    return (images + 1.0) * 0.5


class GenBlock(Module):
    """Pre-activation residual block: BN-ReLU-Conv-BN-ReLU-(Up)-Conv,
    shortcut upsampled (1x1 conv only when channels change)."""

    def __init__(self, cin, cout, upsample, rng, dtype=np.float32):
        self.upsample = upsample
        self.bn1 = BatchNorm2d(cin, dtype=dtype)
        self.conv1 = Conv2d(cin, cout, 3, 1, 1, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(cout, dtype=dtype)
        self.conv2 = Conv2d(cout, cout, 3, 1, 1, rng=rng, dtype=dtype)
        self.conv_sc = Conv2d(cin, cout, 1, 1, 0, rng=rng, dtype=dtype) if cin != cout else None

    def forward(self, x, training):
        h = ag.relu(self.bn1.forward(x, training))
        h = self.conv1.forward(h)
        h = ag.relu(self.bn2.forward(h, training))
        if self.upsample:
            h = ag.upsample_bilinear2(h)
        h = self.conv2.forward(h)
        sc = ag.upsample_bilinear2(x) if self.upsample else x
        if self.conv_sc is not None:
            sc = self.conv_sc.forward(sc)
        return h + sc

    def _children(self):
        for name in ("bn1", "conv1", "bn2", "conv2", "conv_sc"):
            child = getattr(self, name)
            if child is not None:
                yield name, child


class DisBlock(Module):
    """ReLU-Conv-ReLU-Conv-(AvgPool) residual block, shortcut pooled
    then 1x1-projected when channels change."""

    def __init__(self, cin, cout, downsample, rng, dtype=np.float32):
        self.downsample = downsample
        self.conv1 = Conv2d(cin, cout, 3, 1, 1, rng=rng, dtype=dtype)
        self.conv2 = Conv2d(cout, cout, 3, 1, 1, rng=rng, dtype=dtype)
        self.conv_sc = Conv2d(cin, cout, 1, 1, 0, rng=rng, dtype=dtype) if cin != cout else None

    def forward(self, x, training):
        h = ag.relu(x)
        h = self.conv1.forward(h)
        h = ag.relu(h)
        h = self.conv2.forward(h)
        if self.downsample:
            h = ag.avgpool2(h)
        sc = ag.avgpool2(x) if self.downsample else x
        if self.conv_sc is not None:
            sc = self.conv_sc.forward(sc)
        return h + sc

    def _children(self):
        for name in ("conv1", "conv2", "conv_sc"):
            child = getattr(self, name)
            if child is not None:
                yield name, child


class Generator(Module):
    """latent(8) -> FC(1024) -> (64,4,4) -> two upsampling residual
    blocks -> BN-ReLU-Conv-Tanh -> (1,16,16) in [-1, 1]."""

    def __init__(self, rng, latent_dim=8, base_ch=64, img_ch=1, dtype=np.float32):
        self.latent_dim = latent_dim
        self.base_ch = base_ch
        self.fc = Linear(latent_dim, base_ch * 16, rng=rng, dtype=dtype)
        self.block1 = GenBlock(base_ch, base_ch, True, rng, dtype)
        self.block2 = GenBlock(base_ch, base_ch, True, rng, dtype)
        self.bn_out = BatchNorm2d(base_ch, dtype=dtype)
        self.conv_out = Conv2d(base_ch, img_ch, 3, 1, 1, rng=rng, dtype=dtype)

    def forward(self, z, training):
        h = self.fc.forward(z)
        h = ag.reshape(h, (z.shape[0], self.base_ch, 4, 4))
        h = self.block1.forward(h, training)
        h = self.block2.forward(h, training)
        h = ag.relu(self.bn_out.forward(h, training))
        return ag.tanh(self.conv_out.forward(h))


class Discriminator(Module):
    """Three 128-channel residual blocks (first two downsample), ReLU,
    global sum pooling, spectrally normalized FC to one raw logit."""

    def __init__(self, rng, img_ch=1, ch=128, dtype=np.float32):
        self.block1 = DisBlock(img_ch, ch, True, rng, dtype)
        self.block2 = DisBlock(ch, ch, True, rng, dtype)
        self.block3 = DisBlock(ch, ch, False, rng, dtype)
        self.fc = SpectralNormLinear(ch, 1, rng=rng, dtype=dtype)

    def forward(self, x, training):
        h = self.block1.forward(x, training)
        h = self.block2.forward(h, training)
        h = self.block3.forward(h, training)
        h = ag.relu(h)
        h = global_sum_pool(h)
        return self.fc.forward(h, training)

    def prob(self, x, training=False):
        """sigmoid(logit): spatial realness of a (B, C, H, W) Var."""
        return ag.sigmoid(self.forward(x, training))


def sample_latent(batch, rng, latent_dim=8, dtype=np.float32):
    return rng.standard_normal((batch, latent_dim)).astype(dtype)


# -- losses ----------------------------------------------------------------


def _clamp(p):
    return ag.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def _blend(pd, pc_const, lam):
    """lam * D + (1 - lam) * detach(C); pc_const is a plain array."""
    dt = pd.data.dtype
    blended = ag.mul_const(pd, lam)
    spectral_part = Var((np.asarray(pc_const, dtype=dt) * dt.type(1.0 - lam)).reshape(pd.shape))
    return blended + spectral_part


def _d_objective(pd_real, pd_fake, pc_real, pc_fake, lam):
    dss_real = _blend(pd_real, pc_real, lam)
    dss_fake = _blend(pd_fake, pc_fake, lam)
    one = pd_real.data.dtype.type(1.0)
    return -(ag.vmean(ag.log(_clamp(dss_real)))) - ag.vmean(ag.log(_clamp(one - dss_fake)))


def _g_objective(pd_fake, pc_fake, lam):
    dss_fake = _blend(pd_fake, pc_fake, lam)
    return -(ag.vmean(ag.log(_clamp(dss_fake))))


def _spectral_probs(c, images):
    """Detached C(phi(x)) for a batch of [-1,1] images (plain array)."""
    return c.predict(spectral.phi_batch(phi_ready(images)))


def d_loss_ssd(d, c, real, fake, lam, training=False):
    """Discriminator loss on the blended realness; C detached.

    `fake` must already be detached from the generator graph."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1], got %r" % (lam,))
    real = real if isinstance(real, Var) else Var(real)
    fake = fake if isinstance(fake, Var) else Var(fake)
    pc_real = _spectral_probs(c, real.data)
    pc_fake = _spectral_probs(c, fake.data)
    return _d_objective(d.prob(real, training), d.prob(fake, training), pc_real, pc_fake, lam)


def d_loss_sgan(d, real, fake, training=False):
    """Plain non-saturating discriminator loss (the lam = 1 path)."""
    real = real if isinstance(real, Var) else Var(real)
    fake = fake if isinstance(fake, Var) else Var(fake)
    zeros = np.zeros(real.shape[0])
    zf = np.zeros(fake.shape[0])
    return _d_objective(d.prob(real, training), d.prob(fake, training), zeros, zf, 1.0)


def g_loss_ssd(d, c, fake, lam, training=False):
    """Non-saturating generator loss on the blended realness; `fake`
    stays attached to the generator graph, C is detached."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1], got %r" % (lam,))
    fake = fake if isinstance(fake, Var) else Var(fake)
    pc_fake = _spectral_probs(c, fake.data)
    return _g_objective(d.prob(fake, training), pc_fake, lam)


def g_loss_sgan(d, fake, training=False):
    fake = fake if isinstance(fake, Var) else Var(fake)
    return _g_objective(d.prob(fake, training), np.zeros(fake.shape[0]), 1.0)


# -- training --------------------------------------------------------------


@dataclass
class TrainState:
    g: Generator
    d: Discriminator
    c: SpectralClassifier
    opt_g: Adam
    opt_d: Adam
    opt_c: Adam
    rng: np.random.Generator
    iteration: int = 0


def spectral_vector_length(image_size):
    _, _, R = spectral.radial_bins(image_size, image_size)
    return R + 1


def build_state(config):
    """Fresh models, optimizers, and training RNG for a config."""
    config.validate()
    ss = np.random.SeedSequence(config.seed)
    sg, sd, sc, strain = ss.spawn(4)
    g = Generator(np.random.default_rng(sg), latent_dim=config.latent_dim)
    d = Discriminator(np.random.default_rng(sd))
    c = SpectralClassifier(spectral_vector_length(config.image_size), np.random.default_rng(sc))
    mk = lambda m: Adam(m.parameters(), lr=config.lr, beta1=config.beta1, beta2=config.beta2)
    return TrainState(g, d, c, mk(g), mk(d), mk(c), np.random.default_rng(strain))


def _check_finite(name, value, iteration):
    if not np.isfinite(value):
        raise TrainingDiverged(
            "%s is %r at iteration %d; aborting" % (name, value, iteration)
        )


def train_step(state, config, real_batch):
    """One C -> D -> G alternation; returns StepMetrics.

    One latent batch is drawn per iteration and shared by all three
    sub-updates (detached wherever the contract requires).  In sgan
    mode the classifier is still fitted as a passive diagnostic (it is
    decoupled from D and G by lam = 1), which keeps the metrics stream
    identical between sgan and ssd-at-lam-1 runs.
    """
    lam = config.effective_lambda
    i = state.iteration
    real = np.asarray(real_batch, dtype=np.float32)
    z = sample_latent(config.batch_size, state.rng, config.latent_dim)
    fake = state.g.forward(Var(z), training=True)

    v_real = spectral.phi_batch(phi_ready(real))
    v_fake = spectral.phi_batch(phi_ready(fake.data))

    # classifier ascends its log likelihood
    c_obj = spectral_bce_loss(state.c, v_real, v_fake)
    c_loss = float(c_obj.data)
    _check_finite("c_loss", c_loss, i)
    state.opt_c.zero_grad()
    ag.mul_const(c_obj, -1.0).backward()
    state.opt_c.step()

    # discriminator (fresh classifier scores, detached)
    pc_real = state.c.predict(v_real.astype(np.float32))
    pc_fake = state.c.predict(v_fake.astype(np.float32))
    both = Var(np.concatenate([real, fake.data], axis=0))
    pd_both = state.d.prob(both, training=True)
    b = real.shape[0]
    pd_real = _slice_rows(pd_both, 0, b)
    pd_fake = _slice_rows(pd_both, b, b + fake.shape[0])
    d_obj = _d_objective(pd_real, pd_fake, pc_real, pc_fake, lam)
    d_loss = float(d_obj.data)
    _check_finite("d_loss", d_loss, i)
    state.opt_d.zero_grad()
    d_obj.backward()
    state.opt_d.step()

    # generator (fake attached, classifier re-scored after its update)
    pc_fake2 = state.c.predict(v_fake.astype(np.float32))
    pd_fake2 = state.d.prob(fake, training=True)
    g_obj = _g_objective(pd_fake2, pc_fake2, lam)
    if config.mode == "ssd_reg":
        reg = spectral_reg_loss_var(v_real.mean(axis=0), _phi_ready_var(fake))
        g_obj = g_obj + ag.mul_const(reg, config.w_reg)
    g_loss = float(g_obj.data)
    _check_finite("g_loss", g_loss, i)
    state.opt_g.zero_grad()
    state.opt_d.zero_grad()  # G's backward reaches D params; discard
    g_obj.backward()
    state.opt_g.step()

    state.iteration += 1
    return StepMetrics(
        iteration=i,
        d_loss=d_loss,
        g_loss=g_loss,
        c_loss=c_loss,
        mean_d_real=float(pd_real.data.mean()),
        mean_d_fake=float(pd_fake.data.mean()),
        spectral_discrepancy=float(np.abs(v_fake.mean(0) - v_real.mean(0)).sum()),
    )


def _phi_ready_var(fake):
    return ag.mul_const(ag.add_const(fake, 1.0), 0.5)


def _slice_rows(v, lo, hi):
    out = Var(v.data[lo:hi], parents=(v,))

    def bwd(g):
        full = np.zeros_like(v.data)
        full[lo:hi] = g
        v.accumulate(full)

    out._backward = bwd
    return out


def eval_metrics(state, config, real_batch):
    """Loss/score snapshot without touching parameters or buffers.

    Consumes one latent batch from the training RNG (so a resumed run
    replays the identical stream) and runs everything in eval mode.
    Returns (StepMetrics, fake_images)."""
    lam = config.effective_lambda
    real = np.asarray(real_batch, dtype=np.float32)
    z = sample_latent(config.batch_size, state.rng, config.latent_dim)
    fake = state.g.forward(Var(z), training=False)
    v_real = spectral.phi_batch(phi_ready(real))
    v_fake = spectral.phi_batch(phi_ready(fake.data))
    c_loss = float(spectral_bce_loss(state.c, v_real, v_fake).data)
    pc_real = state.c.predict(v_real.astype(np.float32))
    pc_fake = state.c.predict(v_fake.astype(np.float32))
    pd_real = state.d.prob(Var(real), training=False)
    pd_fake = state.d.prob(fake.detach(), training=False)
    d_loss = float(_d_objective(pd_real, pd_fake, pc_real, pc_fake, lam).data)
    g_loss = float(_g_objective(pd_fake, pc_fake, lam).data)
    m = StepMetrics(
        iteration=state.iteration,
        d_loss=d_loss,
        g_loss=g_loss,
        c_loss=c_loss,
        mean_d_real=float(pd_real.data.mean()),
        mean_d_fake=float(pd_fake.data.mean()),
        spectral_discrepancy=float(np.abs(v_fake.mean(0) - v_real.mean(0)).sum()),
    )
    return m, fake.data


def make_real_batch(target_image, batch_size):
    """Dirac real data: the single target replicated across the batch.

    target_image: (H, W) or (H, W, 1) array in [-1, 1]."""
    t = np.asarray(target_image, dtype=np.float32)
    if t.ndim == 3:
        t = t[:, :, 0]
    return np.broadcast_to(t[None, None], (batch_size, 1) + t.shape).copy()


def train(config, target_image, history_hook=None, start_state=None, skip_first_record=False):
    """Run the alternating loop for config.iterations.

    Records an eval snapshot every record_every iterations plus one at
    the end; history_hook (if given) is called with (metrics,
    fake_images) at each record point.  Returns (state, history).
    """
    config.validate()
    state = start_state if start_state is not None else build_state(config)
    # the Dirac real batch is one image replicated; the mean loss over
    # identical rows equals the single-row loss, so one row suffices
    real = make_real_batch(target_image, 1)
    history = []

    def record():
        m, fakes = eval_metrics(state, config, real)
        history.append(m)
        if history_hook is not None:
            history_hook(m, fakes)

    first = True
    while state.iteration < config.iterations:
        if state.iteration % config.record_every == 0:
            if not (first and skip_first_record):
                record()
            first = False
        train_step(state, config, real)
    record()
    return state, history


# -- checkpoint plumbing ---------------------------------------------------


def state_tensors(state):
    out = {}
    for prefix, model in (("g", state.g), ("d", state.d), ("c", state.c)):
        for name, p in model.named_parameters():
            out["%s/%s" % (prefix, name)] = p.data
        for name, b in model.named_buffers():
            out["%s/buf/%s" % (prefix, name)] = b
    for prefix, opt in (("opt_g", state.opt_g), ("opt_d", state.opt_d), ("opt_c", state.opt_c)):
        out.update(opt.state_tensors(prefix))
    out["meta/iteration"] = np.asarray([state.iteration], dtype=np.float32)
    return out


def load_state_tensors(state, table):
    for prefix, model in (("g", state.g), ("d", state.d), ("c", state.c)):
        for name, p in model.named_parameters():
            p.data[...] = table["%s/%s" % (prefix, name)]
        for name, b in model.named_buffers():
            b[...] = table["%s/buf/%s" % (prefix, name)]
    for prefix, opt in (("opt_g", state.opt_g), ("opt_d", state.opt_d), ("opt_c", state.opt_c)):
        opt.load_state_tensors(prefix, table)
    state.iteration = int(table["meta/iteration"][0])
