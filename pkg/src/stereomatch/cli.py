"""Command-line interface: infer / train / eval / gradcheck / ablate.

Every command writes a manifest.json into its output directory (atomically,
via rename) recording the resolved configuration, seed, timings, and results,
so any run can be reproduced from the manifest alone.  Exit codes: 0 success,
1 internal failure (including gradient checks out of tolerance), 2 user or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import traceback

import numpy as np

from . import autodiff as ad
from . import nn
from .ablation import AXES, ablate
from .aggregation import ContextGeometryFusion, _DownsampleBlock, _UpsampleBlock
from .autodiff import Tensor, grad_check
from .backbone import Backbone, BackboneConfig, FeaturePyramid, MergeUpsample
from .correlation import (
    AttentionFeatureVolume,
    CorrelationLift,
    CostVolume,
    MatchingConfig,
    build_correlation,
)
from .errors import ConfigError, DataFormatError, ShapeError, StereoMatchError
from .fileio import load_sample, read_pfm, read_pgm, read_ppm, write_pfm
from .losses import bilinear_upsample, smooth_l1, total_loss, upsample_disparity
from .metrics import evaluate, valid_mask_from_gt
from .model import StereoModel
from .regression import (
    DisparityMap,
    SuperpixelUpsample,
    pixel_shuffle,
    top2_softargmax,
    unfold3x3,
)
from .runconfig import RunConfig, load_run_config, run_config_to_text
from .training import (
    Adam,
    OptimConfig,
    fit,
    load_checkpoint,
    make_dataset,
    save_checkpoint,
    stack_samples,
)

GRADCHECK_TOLERANCE = 1e-4


# ---------------------------------------------------------------------------
# gradient-check suite

def _probed(build_output):
    """Wrap a tensor-valued function into a scalar one with a fixed probe."""
    def fn(t):
        out = build_output(t)
        probe = np.random.default_rng(1234).standard_normal(out.shape)
        return ad.tsum(ad.mul(out, Tensor(probe)))
    return fn


def gradcheck_suite():
    """Named thunks, each returning the max relative error of one primitive
    or composite block against central finite differences."""
    rng = np.random.default_rng(42)
    x34 = rng.standard_normal((3, 4))
    y34 = rng.standard_normal((3, 4)) * 0.5 + 2.0   # bounded away from zero
    pos34 = np.abs(rng.standard_normal((3, 4))) + 0.5
    off34 = rng.standard_normal((3, 4))
    off34 += np.where(off34 >= 0, 0.3, -0.3)        # clear of kinks at zero

    checks = [
        ("add", lambda: grad_check(_probed(lambda t: ad.add(t, Tensor(y34))), x34)),
        ("sub", lambda: grad_check(_probed(lambda t: ad.sub(Tensor(y34), t)), x34)),
        ("mul", lambda: grad_check(_probed(lambda t: ad.mul(t, Tensor(y34))), x34)),
        ("div", lambda: grad_check(_probed(lambda t: ad.div(t, Tensor(y34))), x34)),
        ("exp", lambda: grad_check(_probed(ad.exp), x34)),
        ("sqrt", lambda: grad_check(_probed(ad.sqrt), pos34)),
        ("absval", lambda: grad_check(_probed(ad.absval), off34)),
        ("sigmoid", lambda: grad_check(_probed(ad.sigmoid), 3.0 * x34)),
        ("leaky_relu", lambda: grad_check(_probed(lambda t: ad.leaky_relu(t, 0.2)), off34)),
        ("softmax", lambda: grad_check(_probed(lambda t: ad.softmax(t, axis=1)), 2.0 * x34)),
        ("tsum", lambda: grad_check(_probed(lambda t: ad.tsum(t, axis=0, keepdims=True)), x34)),
        ("reshape", lambda: grad_check(_probed(lambda t: ad.reshape(t, (4, 3))), x34)),
        ("expand", lambda: grad_check(
            _probed(lambda t: ad.expand(ad.reshape(t, (3, 1, 4)), (3, 5, 4))), x34)),
        ("narrow", lambda: grad_check(_probed(lambda t: ad.narrow(t, 1, 1, 2)), x34)),
        ("concat", lambda: grad_check(
            _probed(lambda t: ad.concat([t, Tensor(y34), t], axis=1)), x34)),
    ]

    bn_x = rng.standard_normal((2, 3, 4, 4))
    bn_gamma = rng.standard_normal(3) * 0.5 + 1.0
    bn_beta = rng.standard_normal(3)

    def bn_fn(training):
        def build(t):
            mean = np.zeros(3)
            var = np.ones(3)
            return ad.batch_norm(t, Tensor(bn_gamma), Tensor(bn_beta), mean, var,
                                 training=training)
        return _probed(build)

    def bn_gamma_fn(t):
        mean = np.zeros(3)
        var = np.ones(3)
        out = ad.batch_norm(Tensor(bn_x), t, Tensor(bn_beta), mean, var, training=True)
        probe = np.random.default_rng(1234).standard_normal(out.shape)
        return ad.tsum(ad.mul(out, Tensor(probe)))

    checks += [
        ("batch_norm_train", lambda: grad_check(bn_fn(True), bn_x)),
        ("batch_norm_eval", lambda: grad_check(bn_fn(False), bn_x)),
        ("batch_norm_gamma", lambda: grad_check(bn_gamma_fn, bn_gamma)),
    ]

    cx = rng.standard_normal((1, 2, 6, 7))
    cw = rng.standard_normal((3, 2, 3, 3)) * 0.5
    cb = rng.standard_normal(3)
    c3x = rng.standard_normal((1, 2, 4, 5, 6))
    c3w = rng.standard_normal((2, 2, 1, 3, 3)) * 0.5
    tx = rng.standard_normal((1, 3, 4, 4))
    tw = rng.standard_normal((3, 2, 4, 4)) * 0.4
    t3x = rng.standard_normal((1, 2, 2, 3, 3))
    t3w = rng.standard_normal((2, 2, 4, 4, 4)) * 0.4

    checks += [
        ("conv2d_x", lambda: grad_check(_probed(
            lambda t: ad.conv2d(t, Tensor(cw), Tensor(cb), stride=(2, 1), padding=(1, 2))), cx)),
        ("conv2d_w", lambda: grad_check(_probed(
            lambda t: ad.conv2d(Tensor(cx), t, Tensor(cb), stride=(2, 1), padding=(1, 2))), cw)),
        ("conv2d_b", lambda: grad_check(_probed(
            lambda t: ad.conv2d(Tensor(cx), Tensor(cw), t, padding=(1, 1))), cb)),
        ("conv2d_circular_x", lambda: grad_check(_probed(
            lambda t: ad.conv2d(t, Tensor(cw), None, padding=(1, 1), pad_mode="circular")), cx)),
        ("conv3d_x", lambda: grad_check(_probed(
            lambda t: ad.conv3d(t, Tensor(c3w), None, padding=(0, 1, 1))), c3x)),
        ("conv3d_w", lambda: grad_check(_probed(
            lambda t: ad.conv3d(Tensor(c3x), t, None, padding=(0, 1, 1))), c3w)),
        ("conv_transpose2d_x", lambda: grad_check(_probed(
            lambda t: ad.conv_transpose2d(t, Tensor(tw), None, stride=2, padding=1)), tx)),
        ("conv_transpose2d_w", lambda: grad_check(_probed(
            lambda t: ad.conv_transpose2d(Tensor(tx), t, None, stride=2, padding=1)), tw)),
        ("conv_transpose3d_x", lambda: grad_check(_probed(
            lambda t: ad.conv_transpose3d(t, Tensor(t3w), None, stride=2, padding=1)), t3x)),
        ("conv_transpose3d_w", lambda: grad_check(_probed(
            lambda t: ad.conv_transpose3d(Tensor(t3x), t, None, stride=2, padding=1)), t3w)),
    ]

    up_x = rng.standard_normal((1, 2, 3, 4))
    plane = rng.standard_normal((1, 1, 3, 4))
    shuffle_x = rng.standard_normal((1, 8, 2, 3))
    top2_x = np.random.default_rng(3).standard_normal((1, 1, 5, 3, 3)) * 2.0

    checks += [
        ("bilinear_upsample", lambda: grad_check(_probed(
            lambda t: bilinear_upsample(t, 2)), up_x)),
        ("unfold3x3", lambda: grad_check(_probed(unfold3x3), plane)),
        ("pixel_shuffle", lambda: grad_check(_probed(
            lambda t: pixel_shuffle(t, 2)), shuffle_x)),
        ("top2_regression", lambda: grad_check(_probed(top2_softargmax), top2_x)),
    ]

    # composite blocks, weights drawn once per suite run
    wrng = np.random.default_rng(7)
    tiny = BackboneConfig(stem_channels=4, channels=(6, 8, 10, 12))
    backbone = Backbone(tiny, np.random.default_rng(0))
    merge = MergeUpsample(tiny, np.random.default_rng(1))
    image = wrng.uniform(0.0, 1.0, (1, 3, 32, 32))
    # f32 gets 2x2 spatial extent: train-mode batch norm over a single value
    # per channel would flatten the map to beta and zero the gradient.
    pyr_maps = [wrng.standard_normal((1, c, 64 // s, 64 // s))
                for c, s in zip(tiny.channels, (4, 8, 16, 32))]

    def backbone_fn(t):
        out = backbone(t).f4
        probe = np.random.default_rng(1234).standard_normal(out.shape)
        return ad.tsum(ad.mul(out, Tensor(probe)))

    def merge_fn(t):
        pyr = FeaturePyramid(Tensor(pyr_maps[0]), Tensor(pyr_maps[1]),
                             Tensor(pyr_maps[2]), t)
        out = merge(pyr).f4
        probe = np.random.default_rng(1234).standard_normal(out.shape)
        return ad.tsum(ad.mul(out, Tensor(probe)))

    mcfg = MatchingConfig(max_disparity=16, corr_channels=4)
    fl = wrng.standard_normal((1, 4, 6, 8))
    fr = wrng.standard_normal((1, 4, 6, 8))
    lift = CorrelationLift(mcfg, np.random.default_rng(2))
    afv = AttentionFeatureVolume(4, mcfg, np.random.default_rng(3))
    vol = wrng.standard_normal((1, 1, 4, 6, 8))

    def corr_fn(wrt_right):
        def build(t):
            left = Tensor(fl) if wrt_right else t
            right = t if wrt_right else Tensor(fr)
            return build_correlation(left, right, mcfg).data
        return _probed(build)

    def afv_fn(t):
        v = afv(lift(build_correlation(t, Tensor(fr), mcfg)), t)
        probe = np.random.default_rng(1234).standard_normal(v.data.shape)
        return ad.tsum(ad.mul(v.data, Tensor(probe)))

    cgf = ContextGeometryFusion(2, 3, 3, np.random.default_rng(4))
    cgf_g = wrng.standard_normal((1, 2, 2, 4, 4))
    cgf_ctx = wrng.standard_normal((1, 3, 4, 4))
    down = _DownsampleBlock(2, 4, np.random.default_rng(5), 0.2)
    up = _UpsampleBlock(4, 2, np.random.default_rng(6), 0.2)
    up_in = wrng.standard_normal((1, 4, 2, 2, 2))
    up_skip = wrng.standard_normal((1, 2, 4, 4, 4))
    sup = SuperpixelUpsample(2, np.random.default_rng(8))
    sup_d0 = wrng.standard_normal((1, 1, 2, 3))
    sup_ctx = wrng.standard_normal((1, 2, 2, 3))

    gt = wrng.uniform(2.0, 10.0, (1, 1, 8, 8))
    mask = wrng.random((1, 1, 8, 8)) > 0.2
    pred = gt + np.where(wrng.random((1, 1, 8, 8)) > 0.5, 2.5, 0.3)
    coarse = wrng.uniform(0.5, 2.0, (1, 1, 2, 2))

    checks += [
        ("backbone_stage", lambda: grad_check(backbone_fn, image, max_coords=48, seed=0)),
        ("merge_stage", lambda: grad_check(merge_fn, pyr_maps[3], max_coords=48, seed=5)),
        ("correlation_left", lambda: grad_check(corr_fn(False), fl, max_coords=64, seed=1)),
        ("correlation_right", lambda: grad_check(corr_fn(True), fr, max_coords=64, seed=2)),
        ("correlation_lift", lambda: grad_check(_probed(
            lambda t: lift(CostVolume(t, 1.0, "quarter")).data), vol)),
        ("attention_volume", lambda: grad_check(afv_fn, fl, max_coords=64, seed=3)),
        ("cgf_geometry", lambda: grad_check(_probed(
            lambda t: cgf(t, Tensor(cgf_ctx))), cgf_g)),
        ("cgf_context", lambda: grad_check(_probed(
            lambda t: cgf(Tensor(cgf_g), t)), cgf_ctx)),
        ("encoder_stage", lambda: grad_check(_probed(down), cgf_g, max_coords=64, seed=4)),
        ("decoder_stage", lambda: grad_check(_probed(
            lambda t: up(t, Tensor(up_skip))), up_in)),
        ("superpixel_upsample", lambda: grad_check(_probed(
            lambda t: sup(DisparityMap(t, "quarter"), Tensor(sup_ctx)).values), sup_d0)),
        ("smooth_l1_loss", lambda: grad_check(
            lambda t: smooth_l1(t, gt, mask, 1.0), pred)),
        ("total_loss", lambda: grad_check(
            lambda t: total_loss(upsample_disparity(t, 4), Tensor(pred), gt, mask,
                                 RunConfig().model.loss), coarse)),
    ]
    return checks


# ---------------------------------------------------------------------------
# shared plumbing

def _resolve_config(args) -> RunConfig:
    text = None
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as f:
            text = f.read()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    return load_run_config(text, overrides)


def _write_manifest(out_dir: str, manifest: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def _manifest_base(command: str, rc: RunConfig, out_dir: str) -> dict:
    return {
        "command": command,
        "seed": rc.model.seed,
        "out_dir": out_dir,
        "config": run_config_to_text(rc),
        "timings_s": {},
        "results": {},
    }


def _load_image(path: str) -> Tensor:
    with open(path, "rb") as f:
        img = read_ppm(f.read())
    return Tensor(img.transpose(2, 0, 1)[None] / 255.0)


def _build_model(rc: RunConfig, checkpoint: str | None) -> StereoModel:
    model = StereoModel(rc.model)
    if checkpoint:
        load_checkpoint(model, checkpoint)
    model.eval()
    return model


def _optim_config(rc: RunConfig) -> OptimConfig:
    t = rc.train
    return OptimConfig(lr=t.lr, decay_steps=tuple(t.lr_decay_steps),
                       decay_factor=t.lr_decay_factor)


# ---------------------------------------------------------------------------
# commands

def cmd_infer(args) -> int:
    rc = _resolve_config(args)
    started = time.perf_counter()
    model = _build_model(rc, args.checkpoint)
    left = _load_image(args.left)
    right = _load_image(args.right)
    build_s = time.perf_counter() - started

    started = time.perf_counter()
    with ad.no_grad():
        d0, d1 = model(left, right)
    forward_s = time.perf_counter() - started

    os.makedirs(args.out, exist_ok=True)
    outputs = {"disp.pfm": d1.values.data[0, 0]}
    if args.save_d0:
        outputs["d0.pfm"] = d0.values.data[0, 0]
    for name, field in outputs.items():
        with open(os.path.join(args.out, name), "wb") as f:
            f.write(write_pfm(field.astype(np.float32)))

    manifest = _manifest_base("infer", rc, args.out)
    manifest["timings_s"] = {"build": build_s, "forward": forward_s}
    manifest["results"]["outputs"] = sorted(outputs)
    if args.gt:
        with open(args.gt, "rb") as f:
            gt, _ = read_pfm(f.read())
        gt = gt.astype(np.float64)
        if args.mask:
            with open(args.mask, "rb") as f:
                mask = read_pgm(f.read()) == 255
        else:
            mask = valid_mask_from_gt(gt, rc.model.matching.max_disparity)
        report = evaluate(d1.values.data[0, 0], gt, mask)
        manifest["results"]["metrics"] = report.as_dict()
        print(report.to_line())
    _write_manifest(args.out, manifest)
    print(f"wrote {', '.join(sorted(outputs))} to {args.out}")
    return 0


def cmd_train(args) -> int:
    rc = _resolve_config(args)
    t = rc.train
    started = time.perf_counter()
    model = StereoModel(rc.model)
    optim = Adam(model, _optim_config(rc))
    samples = make_dataset(t.data_seed, t.train_samples, t.height, t.width,
                           rc.model.matching.max_disparity, t.mode,
                           t.constant_disparity)
    batches = [stack_samples(samples[i:i + t.batch_size])
               for i in range(0, len(samples), t.batch_size)]
    held = make_dataset(t.data_seed + 10_000, t.eval_samples, t.height, t.width,
                        rc.model.matching.max_disparity, t.mode,
                        t.constant_disparity)
    setup_s = time.perf_counter() - started

    log_lines = []

    def on_step(i, value):
        log_lines.append(f"step={i + 1} lr={optim.current_lr():g} loss={value:.6f}")

    started = time.perf_counter()
    report = fit(model, optim, batches, t.steps, on_step=on_step)
    train_s = time.perf_counter() - started

    started = time.perf_counter()
    model.eval()
    batch = stack_samples(held)
    with ad.no_grad():
        _, d1 = model(batch.left, batch.right)
    metrics = evaluate(d1.values, batch.gt_disparity, batch.valid_mask)
    eval_s = time.perf_counter() - started

    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(model, os.path.join(args.out, "model.ckpt"))
    with open(os.path.join(args.out, "loss_log.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(log_lines) + ("\n" if log_lines else ""))
    with open(os.path.join(args.out, "metrics.txt"), "w", encoding="utf-8") as f:
        f.write(metrics.to_line() + "\n")

    manifest = _manifest_base("train", rc, args.out)
    manifest["timings_s"] = {"setup": setup_s, "train": train_s, "eval": eval_s}
    manifest["results"] = {
        "steps": t.steps,
        "rejected_steps": report.rejected_steps,
        "first_loss": report.losses[0] if report.losses else None,
        "final_loss": report.losses[-1] if report.losses else None,
        "metrics": metrics.as_dict(),
        "outputs": ["loss_log.txt", "metrics.txt", "model.ckpt"],
    }
    _write_manifest(args.out, manifest)
    if report.losses:
        print(f"trained {t.steps} steps: loss {report.losses[0]:.4f} -> "
              f"{report.losses[-1]:.4f}")
    print(metrics.to_line())
    return 0


def _eval_files(args, rc: RunConfig, manifest: dict) -> int:
    with open(args.pred, "rb") as f:
        pred, _ = read_pfm(f.read())
    with open(args.gt, "rb") as f:
        gt, _ = read_pfm(f.read())
    gt = gt.astype(np.float64)
    if args.mask:
        with open(args.mask, "rb") as f:
            mask = read_pgm(f.read()) == 255
    else:
        mask = valid_mask_from_gt(gt, rc.model.matching.max_disparity)
    report = evaluate(pred.astype(np.float64), gt, mask)
    print(report.to_line())
    manifest["results"] = {"aggregate": report.as_dict()}
    if args.out:
        _write_manifest(args.out, manifest)
    return 0


def cmd_eval(args) -> int:
    rc = _resolve_config(args)
    manifest = _manifest_base("eval", rc, args.out or "")
    if args.pred:
        if not args.gt:
            raise ConfigError("--pred needs --gt to compare against")
        return _eval_files(args, rc, manifest)
    if not args.dataset:
        raise ConfigError("eval needs either a dataset directory or --pred/--gt")

    model = _build_model(rc, args.checkpoint)
    names = sorted(
        d for d in os.listdir(args.dataset)
        if os.path.isdir(os.path.join(args.dataset, d))
    )
    if not names:
        raise ConfigError(f"no sample directories under {args.dataset}")
    per_sample = {}
    pooled = {"pred": [], "gt": [], "mask": []}
    started = time.perf_counter()
    for name in names:
        sample = load_sample(os.path.join(args.dataset, name))
        with ad.no_grad():
            _, d1 = model(sample.left, sample.right)
        report = evaluate(d1.values, sample.gt_disparity, sample.valid_mask)
        per_sample[name] = report.as_dict()
        print(f"{name}: {report.to_line()}")
        pooled["pred"].append(d1.values.data.ravel())
        pooled["gt"].append(sample.gt_disparity.ravel())
        pooled["mask"].append(sample.valid_mask.ravel())
    aggregate = evaluate(np.concatenate(pooled["pred"]),
                         np.concatenate(pooled["gt"]),
                         np.concatenate(pooled["mask"]))
    print(f"aggregate: {aggregate.to_line()}")

    manifest["timings_s"] = {"eval": time.perf_counter() - started}
    manifest["results"] = {"per_sample": per_sample, "aggregate": aggregate.as_dict()}
    if args.out:
        _write_manifest(args.out, manifest)
        with open(os.path.join(args.out, "metrics.txt"), "w", encoding="utf-8") as f:
            for name in names:
                f.write(f"{name}: epe={per_sample[name]['epe_px']:.4f}\n")
            f.write(f"aggregate: {aggregate.to_line()}\n")
    return 0


def cmd_gradcheck(args) -> int:
    rc = _resolve_config(args)
    started = time.perf_counter()
    results = {}
    worst = 0.0
    for name, thunk in gradcheck_suite():
        err = float(thunk())
        results[name] = err
        worst = max(worst, err)
        status = "PASS" if err <= GRADCHECK_TOLERANCE else "FAIL"
        print(f"{name:<22} max_rel={err:.3e}  {status}")
    elapsed = time.perf_counter() - started
    passed = worst <= GRADCHECK_TOLERANCE
    print(f"{len(results)} checks, worst {worst:.3e}, "
          f"{'all within' if passed else 'EXCEEDS'} {GRADCHECK_TOLERANCE:g} "
          f"({elapsed:.1f}s)")
    if args.out:
        manifest = _manifest_base("gradcheck", rc, args.out)
        manifest["timings_s"] = {"suite": elapsed}
        manifest["results"] = {"checks": results, "worst": worst, "passed": passed}
        _write_manifest(args.out, manifest)
    return 0 if passed else 1


def cmd_ablate(args) -> int:
    rc = _resolve_config(args)
    t = rc.train
    started = time.perf_counter()
    report = ablate(
        rc.model, args.axis,
        steps=t.steps, data_seed=t.data_seed, height=t.height, width=t.width,
        train_samples=t.train_samples, eval_samples=t.eval_samples,
        optim=_optim_config(rc),
        on_row=lambda row: print(f"finished row: {row.name}", file=sys.stderr),
    )
    elapsed = time.perf_counter() - started
    lines = report.lines()
    for line in lines:
        print(line)

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "table.txt"), "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        manifest = _manifest_base("ablate", rc, args.out)
        manifest["timings_s"] = {"sweep": elapsed}
        manifest["results"] = {
            "axis": report.axis,
            "rows": [
                {
                    "name": r.name,
                    "param_count": r.param_count,
                    "final_loss": r.final_loss,
                    "metrics": r.metrics.as_dict(),
                }
                for r in report.rows
            ],
            "detach_checks": report.detach_checks,
        }
        _write_manifest(args.out, manifest)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stereomatch",
        description="Stereo disparity estimation: train, infer, evaluate, "
                    "gradient-check, and run ablation sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--config", help="key=value run configuration file")
        p.add_argument("--seed", type=int, help="override the model seed")
        p.add_argument("--out", default=out_default, help="output directory")

    p = sub.add_parser("infer", help="predict disparity for one stereo pair")
    p.add_argument("left", help="left image (binary PPM)")
    p.add_argument("right", help="right image (binary PPM)")
    common(p, out_default="runs/infer")
    p.add_argument("--checkpoint", help="trained weights to load")
    p.add_argument("--gt", help="ground-truth PFM for metrics in the manifest")
    p.add_argument("--mask", help="validity mask PGM (255 = valid)")
    p.add_argument("--save-d0", action="store_true",
                   help="also write the coarse prediction as d0.pfm")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("train", help="train on synthetic stereograms")
    common(p, out_default="runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on sample bundles")
    p.add_argument("dataset", nargs="?",
                   help="directory of sample bundle subdirectories")
    common(p)
    p.add_argument("--checkpoint", help="trained weights to load")
    p.add_argument("--pred", help="evaluate this disparity PFM instead of a model")
    p.add_argument("--gt", help="ground-truth PFM (file mode)")
    p.add_argument("--mask", help="validity mask PGM (255 = valid)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="finite-difference audit of every block")
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="architecture sweep along one axis")
    common(p, out_default="runs/ablate")
    p.add_argument("--axis", required=True, choices=AXES)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StereoMatchError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
