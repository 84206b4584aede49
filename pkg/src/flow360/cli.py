"""``flow360`` command line tool.

Exit codes: 0 success, 2 usage error, 3 malformed input or I/O failure,
4 numerical failure.  Errors are reported as a single line on stderr::

    flow360: error exit=3 kind=bad-magic message="..."

Log verbosity comes from the ``FLOW360_LOG_LEVEL`` environment variable.
"""

import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import augment as aug
from . import metrics, raster, sphconv, sphere, warp360
from .config import RunConfig, load_config
from .exceptions import Flow360Error, MalformedInputError, UsageError

log = logging.getLogger("flow360")

LOG_ENV = "FLOW360_LOG_LEVEL"


def _config_flag(name):
    return "--" + name.replace("_", "-")


def _common_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--jobs", type=int, help="worker threads for batch work")
    common.add_argument("--strict", action="store_true",
                        help="abort a batch on the first failing file")
    common.add_argument("--print-config", action="store_true",
                        help="print the resolved configuration and exit")
    for f in RunConfig.__dataclass_fields__.values():
        common.add_argument(_config_flag(f.name), dest="cfg_" + f.name, metavar=f.name.upper())
    return common


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="flow360", parents=[common],
                                     description="360-degree optical flow geometry tools")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("augment", parents=[common],
                       help="spherically augment an image pair and its flow")
    p.add_argument("inputs", nargs="*", metavar="IMG1 IMG2 FLO")
    p.add_argument("--batch-dir", help="directory of STEM.flo with STEM_1.* / STEM_2.* images")
    p.add_argument("--glob", default="*.flo", help="flow file pattern in --batch-dir")

    p = sub.add_parser("synth", parents=[common],
                       help="render a rotated texture pair with its exact flow")
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--pitch", type=float, default=0.0)
    p.add_argument("--roll", type=float, default=0.0)

    p = sub.add_parser("warp", parents=[common], help="backward-warp an image by a flow")
    p.add_argument("image")
    p.add_argument("flow")

    p = sub.add_parser("occlusion", parents=[common], help="occlusion masks of a flow pair")
    p.add_argument("flow_fw")
    p.add_argument("flow_bw")

    p = sub.add_parser("eval", parents=[common], help="endpoint error and warp metrics")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--frame1", help="frame 1 for brightness/photometric metrics")
    p.add_argument("--frame2", help="frame 2 for brightness/photometric metrics")
    p.add_argument("--pred-bw", help="predicted backward flow for the photometric loss")

    p = sub.add_parser("colorize", parents=[common], help="render a flow with the color wheel")
    p.add_argument("flow")
    p.add_argument("--max-magnitude", type=float, default=None)

    p = sub.add_parser("fit", parents=[common], help="fit row-group projection matrices")
    p.add_argument("--kernel", required=True, help="kernel container file")
    p.add_argument("--features", required=True, help=".npy batch N x H x W x C")
    p.add_argument("--augmented", help=".npy augmented batch (default: --features)")
    return parser


def _resolve_config(args):
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_")}
    return load_config(getattr(args, "config", None), overrides)


def _require_out(args):
    out = getattr(args, "out", None)
    if not out:
        raise UsageError("--out is required")
    return out


def _out_dir(args):
    out = _require_out(args)
    os.makedirs(out, exist_ok=True)
    return out


def _suffixed(path, suffix="_360"):
    stem, ext = os.path.splitext(os.path.basename(path))
    return stem + suffix + ext


def _augment_one(cfg, img1, img2, flo, out):
    height = cfg.augment_height or None
    a1, a2, af = aug.augment_triple(raster.read_image(img1), raster.read_image(img2),
                                    raster.read_flo(flo), height, cfg.correction,
                                    cfg.interpolation)
    paths = [os.path.join(out, _suffixed(p)) for p in (img1, img2, flo)]
    raster.write_image(a1, paths[0])
    raster.write_image(a2, paths[1])
    raster.write_flo(af, paths[2])
    return paths


def _batch_triples(directory, pattern):
    triples = []
    for flo in sorted(glob.glob(os.path.join(directory, pattern))):
        stem = os.path.splitext(flo)[0]
        imgs = []
        for idx in (1, 2):
            found = [f"{stem}_{idx}{ext}" for ext in (".ppm", ".pgm", ".png")
                     if os.path.exists(f"{stem}_{idx}{ext}")]
            imgs.append(found[0] if found else None)
        triples.append((imgs[0], imgs[1], flo))
    return triples


def _run_batch(items, fn, jobs, strict):
    """Apply ``fn`` to items, returning results in input order.

    Failed items are logged and skipped unless ``strict``.
    """
    def guarded(item):
        try:
            return fn(item), None
        except (Flow360Error, OSError) as exc:
            return None, exc

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = list(pool.map(guarded, items))
    results = []
    for item, (res, exc) in zip(items, outcomes):
        if exc is None:
            results.append(res)
            continue
        if strict:
            raise exc
        log.warning("skipping %s: %s", item, exc)
    return results


def cmd_augment(args, cfg):
    out = _out_dir(args)
    if getattr(args, "batch_dir", None):
        triples = _batch_triples(args.batch_dir, args.glob)
        if not triples:
            raise UsageError(f"no files match {args.glob!r} in {args.batch_dir}")

        def work(t):
            if None in t:
                raise MalformedInputError(f"missing frame image for {t[2]}")
            return _augment_one(cfg, *t, out)

        done = _run_batch(triples, work, getattr(args, "jobs", 1), getattr(args, "strict", False))
        log.info("augmented %d of %d triples", len(done), len(triples))
        return 0
    if len(args.inputs) != 3:
        raise UsageError("augment needs IMG1 IMG2 FLO or --batch-dir")
    _augment_one(cfg, *args.inputs, out)
    return 0


def cmd_synth(args, cfg):
    out = _out_dir(args)
    rot = sphere.SphereRotation.from_euler(args.yaw, args.pitch, args.roll)
    frame1 = sphere.synthetic_texture(cfg.height, cfg.width, seed=cfg.seed)
    # quantise first so both frames derive from exactly what is on disk
    frame1 = raster.parse_pnm(raster.pnm_bytes(frame1))
    frame2 = sphere.rotate_equirect(frame1, rot, cfg.interpolation)
    raster.write_image(frame1, os.path.join(out, "frame1.ppm"))
    raster.write_image(frame2, os.path.join(out, "frame2.ppm"))
    raster.write_flo(sphere.rotation_flow(rot, cfg.height, cfg.width),
                     os.path.join(out, "flow.flo"))
    return 0


def cmd_warp(args, cfg):
    out = _require_out(args)
    img = raster.read_image(args.image)
    flow = raster.read_flo(args.flow)
    raster.write_image(np.clip(warp360.backward_warp(img, flow, cfg.interpolation), 0, 1), out)
    return 0


def cmd_occlusion(args, cfg):
    out = _out_dir(args)
    fw = raster.read_flo(args.flow_fw)
    bw = raster.read_flo(args.flow_bw)
    o_fw, o_bw = warp360.occlusion_masks(fw, bw, cfg.eps, cfg.mask_mode)
    raster.write_image(o_fw.astype(np.float32), os.path.join(out, "occlusion_fw.pgm"))
    raster.write_image(o_bw.astype(np.float32), os.path.join(out, "occlusion_bw.pgm"))
    return 0


def _eval_pair(cfg, pred_path, gt_path):
    pred = raster.read_flo(pred_path)
    gt = raster.read_flo(gt_path)
    reports = [metrics.wrapped_epe(pred, gt), metrics.epe(pred, gt)]
    if cfg.bands > 1:
        reports += metrics.latitude_band_report(pred, gt, cfg.bands)
    return reports


def _frame_reports(args, cfg, pred_path):
    i1 = raster.read_image(args.frame1)
    i2 = raster.read_image(args.frame2)
    fw = raster.read_flo(pred_path)
    h = i1.shape[0]
    rows = warp360.pole_row_mask(h, cfg.pole_margin)
    reports = [metrics.MetricReport(
        "brightness_error", warp360.brightness_error(i1, fw, i2, cfg.pole_margin),
        int(rows.sum()) * i1.shape[1])]
    if getattr(args, "pred_bw", None):
        bw = raster.read_flo(args.pred_bw)
        o_fw, o_bw = warp360.occlusion_masks(fw, bw, cfg.eps, cfg.mask_mode)
        i1_pred = np.clip(warp360.backward_warp(i2, fw), 0, 1)
        i2_pred = np.clip(warp360.backward_warp(i1, bw), 0, 1)
        t_fw, t_bw = warp360.photometric_terms(i1, i2, i1_pred, i2_pred, o_fw, o_bw,
                                               cfg.eps, cfg.q)
        n = h * i1.shape[1]
        reports += [metrics.MetricReport("photometric_loss", t_fw + t_bw, n),
                    metrics.MetricReport("photometric_fw", t_fw, int(n - o_fw.sum())),
                    metrics.MetricReport("photometric_bw", t_bw, int(n - o_bw.sum()))]
    return reports


def cmd_eval(args, cfg):
    if len(args.pred) != len(args.gt):
        raise UsageError("--pred and --gt need the same number of files")
    pairs = list(zip(args.pred, args.gt))
    results = _run_batch(pairs, lambda pg: _eval_pair(cfg, *pg),
                         getattr(args, "jobs", 1), getattr(args, "strict", False))
    reports = [r for group in results for r in group]
    if getattr(args, "frame1", None) or getattr(args, "frame2", None):
        if not (args.frame1 and args.frame2):
            raise UsageError("--frame1 and --frame2 go together")
        reports += _frame_reports(args, cfg, args.pred[0])
    out = getattr(args, "out", None)
    if out:
        lines = "".join(r.to_json() + "\n" for r in reports)
        raster._atomic_write(out, lines.encode("utf-8"))
    else:
        metrics.write_records(reports, sys.stdout)
    return 0


def cmd_colorize(args, cfg):
    out = _require_out(args)
    raster.write_image(raster.flow_to_color(raster.read_flo(args.flow), args.max_magnitude), out)
    return 0


def _load_npy(path):
    try:
        return np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise MalformedInputError(f"cannot read {path}: {exc}") from None


def cmd_fit(args, cfg):
    out = _out_dir(args)
    kernel = sphconv.read_kernel(args.kernel)
    x_src = _load_npy(args.features)
    x_aug = _load_npy(args.augmented) if getattr(args, "augmented", None) else x_src
    h = np.shape(x_src)[-3]
    plan = sphconv.rowgroup_partition(h, cfg.n_g, cfg.n_l)
    res = sphconv.fit_transform(x_src, x_aug, kernel, plan, method=cfg.method,
                                step=cfg.step_value, iters=cfg.iters, tol=cfg.tol,
                                padding=cfg.padding, correspondence=cfg.correspondence)
    sphconv.write_projections(res.projections, os.path.join(out, "projections.f3pm"))
    lines = [f"{v!r}\n" for v in res.loss_trace]
    lines.append(f"final {res.final_loss!r}\n")
    lines.append(f"degenerate {int(res.degenerate)}\n")
    raster._atomic_write(os.path.join(out, "loss_trace.txt"), "".join(lines).encode("ascii"))
    return 0


COMMANDS = {
    "augment": cmd_augment,
    "synth": cmd_synth,
    "warp": cmd_warp,
    "occlusion": cmd_occlusion,
    "eval": cmd_eval,
    "colorize": cmd_colorize,
    "fit": cmd_fit,
}


def _report_error(exc, code, kind):
    msg = json.dumps(str(exc))
    print(f"flow360: error exit={code} kind={kind} message={msg}", file=sys.stderr)
    return code


def main(argv=None):
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if getattr(args, "print_config", False):
            sys.stdout.write(cfg.dump())
            return 0
        if not args.command:
            parser.print_usage(sys.stderr)
            return _report_error("a subcommand is required", 2, "usage")
        return COMMANDS[args.command](args, cfg)
    except Flow360Error as exc:
        return _report_error(exc, exc.exit_code, exc.kind)
    except OSError as exc:
        return _report_error(exc, 3, "io")


if __name__ == "__main__":
    sys.exit(main())
