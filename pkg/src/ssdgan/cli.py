"""Command-line surface.

Every command writes only under --out-dir (default: the SSD_OUT_DIR
environment variable, else the current directory), exits 0 on success,
and prints a one-line diagnostic with a nonzero exit on failure.
Commands are deterministic per (inputs, seed): rerunning reproduces
outputs byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments, gan, pnm, realness, spectral
from .autograd import Var
from .checkpoint import check_compatible, load_checkpoint, save_checkpoint
from .config import RunConfig
from .ioutil import atomic_write_text
from .optim import Adam

_MODES = {"sgan": "sgan", "ssd": "ssd", "ssd-reg": "ssd_reg"}


def _out_path(out_dir, rel, what="output path"):
    """Join rel to out_dir, refusing paths that escape it."""
    if os.path.isabs(rel):
        raise ValueError("%s must be relative to --out-dir: %r" % (what, rel))
    full = os.path.normpath(os.path.join(out_dir, rel))
    base = os.path.normpath(os.path.abspath(out_dir))
    if os.path.commonpath([base, os.path.abspath(full)]) != base:
        raise ValueError("%s escapes --out-dir: %r" % (what, rel))
    os.makedirs(os.path.dirname(full) or ".", exist_ok=True)
    return full


def _list_images(directory):
    names = sorted(
        n for n in os.listdir(directory) if n.lower().endswith((".pgm", ".ppm"))
    )
    if not names:
        raise ValueError("no .pgm/.ppm images in %s" % directory)
    return [(n, pnm.read_image(os.path.join(directory, n))) for n in names]


def _float_list(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _config_from_args(args):
    if getattr(args, "config", None):
        with open(args.config) as f:
            cfg = RunConfig.from_text(f.read())
    else:
        cfg = RunConfig()
    return cfg.with_overrides(
        mode=_MODES[args.mode] if getattr(args, "mode", None) else None,
        lam=getattr(args, "lam", None),
        lr=getattr(args, "lr", None),
        iterations=getattr(args, "iters", None),
        batch_size=getattr(args, "batch_size", None),
        seed=getattr(args, "seed", None),
        w_reg=getattr(args, "w_reg", None),
        record_every=getattr(args, "record_every", None),
    )


def _add_config_flags(p, with_mode=True):
    if with_mode:
        p.add_argument("--mode", choices=sorted(_MODES), help="training objective")
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--lambda", dest="lam", type=float, help="spatial/spectral blend weight")
    p.add_argument("--lr", type=float)
    p.add_argument("--iters", type=int, help="training iterations")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--w-reg", type=float)
    p.add_argument("--record-every", type=int)


# -- subcommands -------------------------------------------------------------


def cmd_phi(args, out_dir):
    image = pnm.read_image(args.image)
    vec = spectral.phi(image)
    lines = ["radius,value"]
    lines += ["%d,%r" % (r, float(v)) for r, v in enumerate(vec.values)]
    path = _out_path(out_dir, args.csv)
    atomic_write_text(path, "\n".join(lines) + "\n")
    print("wrote %s (%d bins)" % (path, len(vec.values)))
    return 0


def cmd_spectrum_diff(args, out_dir):
    imgs_a = [im for _, im in _list_images(args.dir_a)]
    imgs_b = [im for _, im in _list_images(args.dir_b)]
    diff = spectral.mean_spectrum_diff(imgs_a, imgs_b)
    csv_path = _out_path(out_dir, args.out + ".csv")
    atomic_write_text(
        csv_path, "\n".join(",".join(repr(float(v)) for v in row) for row in diff) + "\n"
    )
    peak = diff.max()
    vis = diff / peak * 2.0 - 1.0 if peak > 0 else diff - 1.0
    img_path = _out_path(out_dir, args.out + ".pgm")
    pnm.write_image(img_path, vis)
    print("wrote %s and %s (peak %r)" % (csv_path, img_path, float(peak)))
    return 0


def _phi_matrix(images):
    return np.stack([spectral.phi(im).values for im in images])


def cmd_train_classifier(args, out_dir):
    real = _phi_matrix([im for _, im in _list_images(args.real_dir)])
    fake = _phi_matrix([im for _, im in _list_images(args.fake_dir)])
    if real.shape[1] != fake.shape[1]:
        raise ValueError(
            "image sizes differ between directories (%d vs %d spectrum bins)"
            % (real.shape[1], fake.shape[1])
        )
    rng = np.random.default_rng(args.seed)
    c = realness.SpectralClassifier(real.shape[1], rng)
    opt = Adam(c.parameters(), lr=args.lr)
    loss = float("nan")
    for _ in range(args.iters):
        obj = realness.spectral_bce_loss(c, real, fake)
        loss = float(obj.data)
        opt.zero_grad()
        (-obj).backward()
        opt.step()
    path = _out_path(out_dir, args.ckpt)
    save_checkpoint(path, {"c/%s" % n: p.data for n, p in c.named_parameters()})
    acc_real = float((c.predict(real) > 0.5).mean())
    acc_fake = float((c.predict(fake) < 0.5).mean())
    print(
        "wrote %s; log-likelihood %r, accuracy real %r fake %r"
        % (path, loss, acc_real, acc_fake)
    )
    return 0


def _load_classifier(path):
    table = load_checkpoint(path)
    try:
        w, b = table["c/fc/w"], table["c/fc/b"]
    except KeyError as e:
        raise ValueError("%s: missing classifier tensor %s" % (path, e))
    c = realness.SpectralClassifier(w.shape[1], np.random.default_rng(0))
    c.fc.w.data[...] = w
    c.fc.b.data[...] = b
    return c


def cmd_score(args, out_dir):
    c = _load_classifier(args.ckpt)
    named = _list_images(args.dir)
    rows = []
    for name, im in named:
        vec = spectral.phi(im)
        if len(vec.values) != c.input_dim:
            raise ValueError(
                "%s: spectrum length %d does not match classifier input %d"
                % (name, len(vec.values), c.input_dim)
            )
        rows.append((name, realness.classify(c, vec)))
    rows.sort(key=lambda r: (-r[1], r[0]))
    path = _out_path(out_dir, args.csv)
    atomic_write_text(
        path, "image,spectral_realness\n" + "".join("%s,%r\n" % r for r in rows)
    )
    print("wrote %s (%d images)" % (path, len(rows)))
    return 0


def _resume_state(run_dir, cfg):
    ckpt = load_checkpoint(os.path.join(run_dir, "checkpoint.ssdc"))
    with open(os.path.join(run_dir, "config.txt")) as f:
        prev = RunConfig.from_text(f.read())
    for key in ("mode", "lam", "lr", "batch_size", "latent_dim", "seed", "image_size"):
        if getattr(prev, key) != getattr(RunConfig.from_gan_config(cfg), key):
            raise ValueError("resume config differs from %s in %r" % (run_dir, key))
    state = gan.build_state(cfg)
    check_compatible(ckpt, gan.state_tensors(state))
    gan.load_state_tensors(state, ckpt)
    with open(os.path.join(run_dir, "rng.json")) as f:
        state.rng.bit_generator.state = json.load(f)
    with open(os.path.join(run_dir, "metrics.csv")) as f:
        prior_rows = f.read().splitlines()[1:]
    return state, prior_rows


def cmd_train_toy(args, out_dir):
    cfg = _config_from_args(args).to_gan_config()
    resume_state, prior_rows = (None, None)
    if args.resume_from:
        resume_state, prior_rows = _resume_state(args.resume_from, cfg)
        if resume_state.iteration >= cfg.iterations and cfg.iterations != resume_state.iteration:
            raise ValueError(
                "checkpoint is already at iteration %d" % resume_state.iteration
            )
    run_dir, summary = experiments.run_training(
        cfg, out_dir, resume_state=resume_state, prior_rows=prior_rows
    )
    print(
        "run %s: final_delta %r recon_mae %r"
        % (run_dir, summary["final_delta"], summary["recon_mae"])
    )
    return 0


def cmd_downsample_demo(args, out_dir):
    report = experiments.downsample_demo(out_dir=out_dir)
    bad = [r["image"] for r in report.rows if not (r["anti_below_pre"] and r["anti_below_alias"])]
    print(
        "%d corpus images; anti-aliased gap smallest on %d"
        % (len(report.rows), len(report.rows) - len(bad))
    )
    return 0


def _load_discriminator(path):
    table = load_checkpoint(path)
    d = gan.Discriminator(np.random.default_rng(0))
    wanted = {}
    for name, p in d.named_parameters():
        wanted["d/%s" % name] = p
    for name, b in d.named_buffers():
        wanted["d/buf/%s" % name] = b
    sub = {k: v for k, v in table.items() if k in wanted}
    check_compatible(sub, {k: v.data if isinstance(v, Var) else v for k, v in wanted.items()})
    for k, v in wanted.items():
        if isinstance(v, Var):
            v.data[...] = sub[k]
        else:
            v[...] = sub[k]
    return d


def _band_list(text):
    bands = []
    for part in text.split(","):
        if not part.strip():
            continue
        lo, _, hi = part.partition(":")
        bands.append((float(lo), float(hi)))
    if not bands:
        raise ValueError("no bands given")
    return bands


def cmd_probe(args, out_dir):
    d = _load_discriminator(args.ckpt)
    if args.images:
        images = [im for _, im in _list_images(args.images)]
    else:
        images = [experiments.make_checkerboard(16)]
    report = experiments.probe_discriminator(
        d, images, _band_list(args.bands), _float_list(args.alphas), out_dir=out_dir
    )
    print("probe: %d cells over %d images" % (len(report.rows), len(images)))
    return 0


def cmd_lambda_sweep(args, out_dir):
    cfg = _config_from_args(args).to_gan_config()
    seeds = _int_list(args.seeds)
    report = experiments.lambda_sweep(
        _float_list(args.lambdas), cfg, seeds=seeds, out_dir=out_dir
    )
    print("sweep: %d cells" % len(report.rows))
    return 0


# -- dispatch ----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="ssdgan",
        description="Desk-scale GAN lab with a spectral-realness discriminator.",
    )
    p.add_argument(
        "--out-dir",
        default=os.environ.get("SSD_OUT_DIR", "."),
        help="root for all outputs (default: $SSD_OUT_DIR or '.')",
    )
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("phi", help="reduced spectral representation of one image")
    q.add_argument("image")
    q.add_argument("--csv", default="phi.csv", help="output CSV (relative to --out-dir)")
    q.set_defaults(func=cmd_phi)

    q = sub.add_parser("spectrum-diff", help="mean DFT magnitude difference of two image sets")
    q.add_argument("dir_a")
    q.add_argument("dir_b")
    q.add_argument("--out", default="spectrum_diff", help="output basename")
    q.set_defaults(func=cmd_spectrum_diff)

    q = sub.add_parser("train-classifier", help="fit the spectral classifier on two image sets")
    q.add_argument("real_dir")
    q.add_argument("fake_dir")
    q.add_argument("--iters", type=int, default=500)
    q.add_argument("--lr", type=float, default=1e-2)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--ckpt", default="classifier.ssdc", help="output checkpoint name")
    q.set_defaults(func=cmd_train_classifier)

    q = sub.add_parser("score", help="rank images by spectral realness")
    q.add_argument("ckpt")
    q.add_argument("dir")
    q.add_argument("--csv", default="scores.csv")
    q.set_defaults(func=cmd_score)

    q = sub.add_parser("train-toy", help="train on the checkerboard Dirac target")
    _add_config_flags(q)
    q.add_argument("--resume-from", help="existing run directory to continue from")
    q.set_defaults(func=cmd_train_toy)

    q = sub.add_parser("downsample-demo", help="high-frequency loss under downsampling")
    q.set_defaults(func=cmd_downsample_demo)

    q = sub.add_parser("probe", help="discriminator sensitivity to radial band modulation")
    q.add_argument("--ckpt", required=True, help="training run checkpoint")
    q.add_argument("--bands", required=True, help="comma list of lo:hi radial fractions")
    q.add_argument("--alphas", required=True, help="comma list of magnitude scales")
    q.add_argument("--images", help="directory of probe images (default: 16x16 checkerboard)")
    q.set_defaults(func=cmd_probe)

    q = sub.add_parser("lambda-sweep", help="blend-weight robustness sweep")
    _add_config_flags(q, with_mode=False)
    q.add_argument("--lambdas", required=True, help="comma list, must include 1.0")
    q.add_argument("--seeds", default="0,1,2,3,4")
    q.set_defaults(func=cmd_lambda_sweep)
    return p


def cli_dispatch(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        out_dir = args.out_dir
        os.makedirs(out_dir, exist_ok=True)
        return args.func(args, out_dir)
    except (OSError, ValueError, KeyError, gan.TrainingDiverged) as e:
        print("error: %s" % e, file=sys.stderr)
        return 1


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
