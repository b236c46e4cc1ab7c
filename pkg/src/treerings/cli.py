"""Command line front-end: detect, evaluate, synth and batch."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .metrics import evaluate as evaluate_rings
from .metrics import error_heatmap, rasterize_gt_polygon
from .pipeline import DetectionParams, detect
from .synthetic import DiskSpec, generate_disk

log = logging.getLogger("treerings")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_ARGS = 2
EXIT_IMAGE = 3
EXIT_PITH = 4


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def read_config(path) -> dict:
    """Flat ``key = value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def apply_config(parser: argparse.ArgumentParser, config: dict) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in config.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key '{key}'")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            continue
        try:
            defaults[key] = action.type(raw) if action.type else raw
        except (TypeError, ValueError) as exc:
            raise UsageError(f"config key '{key}': {exc}") from exc
    parser.set_defaults(**defaults)


def _detection_flags(p):
    p.add_argument("--cy", type=float, help="pith row (required)")
    p.add_argument("--cx", type=float, help="pith column (required)")
    p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--th_low", "--th-low", dest="th_low", type=float, default=5.0)
    p.add_argument("--th_high", "--th-high", dest="th_high", type=float, default=15.0)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--alpha", type=float, default=30.0)
    p.add_argument("--nr", type=int, default=360)
    p.add_argument("--min_chain_length", "--min-chain-length", dest="min_chain_length", type=int, default=2)
    p.add_argument("--config", help="key=value file; flags given on the command line win")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="treerings", description="Tree-ring delineation on wood cross-sections.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser("detect", help="detect rings in one image")
    p.add_argument("input")
    _detection_flags(p)
    p.add_argument("--output", "-o", default=".", help="output directory")
    p.add_argument("--no-overlay", action="store_true")

    p = sub.add_parser("evaluate", help="score detections against ground truth")
    p.add_argument("--dt", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--cy", type=float)
    p.add_argument("--cx", type=float)
    p.add_argument("--nr", type=int, default=360)
    p.add_argument("--th-pre", "--th_pre", dest="th_pre", type=float, default=60.0)
    p.add_argument("--report", help="JSON report path; a CSV row is written next to it")
    p.add_argument("--name", default=None)
    p.add_argument("--heatmap", help="write the per-node error raster here")

    p = sub.add_parser("synth", help="write a synthetic disk and its ground truth")
    p.add_argument("--rings", default="10", help="ring count or comma-separated radii")
    p.add_argument("--spacing", type=float, default=25.0, help="mean ring spacing when --rings is a count")
    p.add_argument("--deform", type=float, default=0.0)
    p.add_argument("--crack", action="store_true")
    p.add_argument("--stain", action="store_true")
    p.add_argument("--gap", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=1500)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--name", default=None)

    p = sub.add_parser("batch", help="detect (and optionally evaluate) a list of images")
    p.add_argument("manifest", help="CSV with columns image,cy,cx[,gt]")
    _detection_flags(p)
    p.add_argument("--output", "-o", default=".")
    p.add_argument("--th-pre", "--th_pre", dest="th_pre", type=float, default=60.0)
    p.add_argument("--no-overlay", action="store_true")
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = parser._subparsers._group_actions[0].choices[args.command]
        apply_config(sub, read_config(args.config))
        args = parser.parse_args(argv)
    return args


def detection_params(args) -> DetectionParams:
    params = DetectionParams(args.sigma, args.th_low, args.th_high, args.alpha, args.nr,
                             args.min_chain_length, args.height, args.width)
    try:
        params.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return params


def run_detect(image_path, cy, cx, params: DetectionParams, out_dir, overlay=True) -> tuple[int, dict]:
    """Detect rings in one file; returns ``(exit code, summary)``."""
    try:
        image = io.load_image(image_path)
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IMAGE, {}
    h, w = image.shape[:2]
    if cy is None or cx is None:
        log.error("the pith (--cy, --cx) is required")
        return EXIT_ARGS, {}
    if not (0 <= cy < h and 0 <= cx < w):
        log.error("pith (%s, %s) outside the %dx%d image", cy, cx, h, w)
        return EXIT_PITH, {}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(image_path).stem
    res = detect(image, cy, cx, params, image_path=str(image_path))
    io.write_labelme(out / f"{stem}.json", res.labelme)
    if overlay:
        polys = [np.asarray(s["points"]) for s in res.labelme["shapes"]]
        io.save_image(out / f"{stem}_overlay.png", io.render_overlay(image, polys))
    timing = {k: round(v, 4) for k, v in res.timings.items()}
    (out / f"{stem}_timing.json").write_text(json.dumps({"image": str(image_path), "timings": timing,
                                                         "counts": res.counts}, indent=1))
    log.info("%s: %d rings in %.2f s", stem, len(res.rings), res.timings["total"])
    return EXIT_OK, {"json": str(out / f"{stem}.json"), "rings": len(res.rings), "time_sec": res.timings["total"]}


def cmd_detect(args) -> int:
    params = detection_params(args)
    code, summary = run_detect(args.input, args.cy, args.cx, params, args.output, not args.no_overlay)
    if code == EXIT_OK:
        print(f"{summary['rings']} rings -> {summary['json']}")
    return code


def resolve_pith(args, *docs):
    if args.cy is not None and args.cx is not None:
        return args.cy, args.cx
    for doc in docs:
        if "pith" in doc:
            return tuple(doc["pith"])
    raise UsageError("the pith is not in the JSON files; pass --cy and --cx")


def evaluate_files(dt_path, gt_path, pith, nr, th_pre):
    dt_doc = io.read_labelme(dt_path)
    gt_doc = io.read_labelme(gt_path)
    dt = [rasterize_gt_polygon(p, pith, nr, "detection") for p in io.labelme_polygons(dt_doc)]
    gt = [rasterize_gt_polygon(p, pith, nr, "gt") for p in io.labelme_polygons(gt_doc)]
    return evaluate_rings(dt, gt, th_pre), gt


def cmd_evaluate(args) -> int:
    try:
        dt_doc = io.read_labelme(args.dt)
        gt_doc = io.read_labelme(args.gt)
        pith = resolve_pith(args, gt_doc, dt_doc)
        report, gt = evaluate_files(args.dt, args.gt, pith, args.nr, args.th_pre)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_ARGS
    rmse = "nan" if np.isnan(report.rmse) else f"{report.rmse:.3f}"
    print(f"TP={report.TP} FP={report.FP} FN={report.FN} "
          f"P={report.precision:.3f} R={report.recall:.3f} F={report.fscore:.3f} RMSE={rmse}")
    if args.report:
        rp = Path(args.report)
        rp.parent.mkdir(parents=True, exist_ok=True)
        body = report.as_dict()
        body["th_pre"] = args.th_pre
        rp.write_text(json.dumps(body, indent=1))
        row = dict(body, name=args.name or Path(args.dt).stem, time_sec=None)
        io.write_report_csv(rp.with_suffix(".csv"), [row])
    if args.heatmap:
        shape = (gt_doc.get("imageHeight") or 0, gt_doc.get("imageWidth") or 0)
        if not all(shape):
            log.error("the GT file has no image size; cannot draw the heatmap")
            return EXIT_ARGS
        io.save_image(args.heatmap, error_heatmap(report, gt, pith, shape))
    return EXIT_OK


def synth_radii(args) -> list:
    text = str(args.rings)
    if "," in text:
        return [float(x) for x in text.split(",") if x.strip()]
    n = int(text)
    if n < 1:
        raise UsageError("--rings must be positive")
    rng = np.random.default_rng(args.seed)
    steps = args.spacing * rng.uniform(0.8, 1.2, n)
    return [round(float(r), 2) for r in np.cumsum(steps)]


def cmd_synth(args) -> int:
    try:
        radii = synth_radii(args)
        spec = DiskSpec(radii, args.deform, args.crack, args.stain, args.gap, args.seed, (args.size, args.size))
        spec.validate()
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_ARGS
    image, gt = generate_disk(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = args.name or f"synth_{args.seed}"
    gt["imagePath"] = f"{name}.png"
    io.save_image(out / f"{name}.png", image)
    io.write_labelme(out / f"{name}.json", gt)
    print(f"{out / name}.png ({len(radii)} rings, pith {gt['pith'][0]:.1f},{gt['pith'][1]:.1f})")
    return EXIT_OK


def read_manifest(path) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from exc
    if not rows or not {"image", "cy", "cx"} <= set(rows[0]):
        raise UsageError("manifest needs the columns image,cy,cx")
    base = Path(path).parent
    for r in rows:
        for k in ("image", "gt"):
            if r.get(k) and not Path(r[k]).is_absolute():
                r[k] = str(base / r[k])
    return rows


def _batch_item(row, params, out_dir, overlay, th_pre):
    name = Path(row["image"]).stem
    try:
        cy, cx = float(row["cy"]), float(row["cx"])
    except (TypeError, ValueError):
        return EXIT_ARGS, {"name": name}
    code, summary = run_detect(row["image"], cy, cx, params, out_dir, overlay)
    result = {"name": name, "time_sec": summary.get("time_sec")}
    if code != EXIT_OK:
        return code, result
    if row.get("gt"):
        try:
            report, _ = evaluate_files(summary["json"], row["gt"], (cy, cx), params.nr, th_pre)
        except (OSError, ValueError) as exc:
            log.error("%s: %s", name, exc)
            return EXIT_ARGS, result
        result.update(report.as_dict())
    return EXIT_OK, result


def batch_workers(n_items: int) -> int:
    env = os.environ.get("CSTRD_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            log.warning("ignoring CSTRD_THREADS=%r", env)
    return max(1, min(cap, n_items))


def cmd_batch(args) -> int:
    params = detection_params(args)
    rows = read_manifest(args.manifest)
    workers = batch_workers(len(rows))
    jobs = [(r, params, args.output, not args.no_overlay, args.th_pre) for r in rows]
    if workers == 1:
        results = [_batch_item(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_batch_item, *j) for j in jobs]
            results = []
            for f in futures:
                try:
                    results.append(f.result())
                except Exception as exc:  # a crashed worker must not sink the batch
                    log.error("batch item failed: %s", exc)
                    results.append((EXIT_FAIL, {}))
    Path(args.output).mkdir(parents=True, exist_ok=True)
    io.write_report_csv(Path(args.output) / "report.csv", [r for _, r in results if r])
    codes = [c for c, _ in results]
    failed = sum(c != EXIT_OK for c in codes)
    print(f"{len(codes) - failed}/{len(codes)} images processed")
    return max(codes) if failed else EXIT_OK


COMMANDS = {"detect": cmd_detect, "evaluate": cmd_evaluate, "synth": cmd_synth, "batch": cmd_batch}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    log.info("done in %.2f s", time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
