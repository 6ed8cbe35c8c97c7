"""Command-line front end.

Commands: generate, validate, eval, preview, bench. Options can come from
a JSON config file (--config), environment variables prefixed FLOWSYNTH_
(e.g. FLOWSYNTH_WORKERS=8), or flags, with flags taking precedence.

Exit codes: 0 success, 1 usage error, 2 data error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .augment import AugmentConfig
from .errors import FlowSynthError
from .flowio import (
    colorize_flow,
    ingest_images,
    load_manifest_sample,
    read_flo,
    read_kitti_png,
    read_manifest,
    validate_manifest_files,
)
from .metrics import evaluate_pairs, photometric_audit
from .pipeline import RunConfig, run_bench, run_generation
from .synthesis import SynthesisConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3

ENV_PREFIX = "FLOWSYNTH_"

log = logging.getLogger("flowsynth")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _env_default(name: str, fallback=None, cast=str):
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None:
        return fallback
    return cast(raw)


def _build_parser() -> _Parser:
    parser = _Parser(prog="flowsynth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a dataset from an image directory")
    gen.add_argument("--input", default=_env_default("input"), help="source image directory")
    gen.add_argument("--output", default=_env_default("output"), help="output dataset directory")
    gen.add_argument("--count", type=int, default=_env_default("count", 100, int))
    gen.add_argument("--seed", type=int, default=_env_default("seed", 0, int))
    gen.add_argument("--workers", type=int, default=_env_default("workers", 1, int))
    gen.add_argument("--config", default=_env_default("config"), help="JSON config file")
    gen.add_argument("--format", choices=("flo", "kitti", "both"),
                     default=_env_default("format", "flo"))
    gen.add_argument("--cache-dir", default=_env_default("cache_dir"))
    gen.add_argument("--size", default=_env_default("size"),
                     help="force WxH output size, e.g. 1280x544")
    gen.add_argument("--no-augment", action="store_true",
                     help="skip the augmentation stage")
    gen.add_argument("--bench", action="store_true",
                     help="report throughput after generating")

    val = sub.add_parser("validate", help="photometric audit of a generated dataset")
    val.add_argument("manifest", help="path to manifest.jsonl")
    val.add_argument("--mean-threshold", type=float, default=0.02)
    val.add_argument("--p99-threshold", type=float, default=0.1)
    val.add_argument("--report", help="write a JSON audit report here")

    ev = sub.add_parser("eval", help="EPE / F1-all of predictions against ground truth")
    ev.add_argument("--pred", required=True, help="directory of predicted flows")
    ev.add_argument("--gt", required=True, help="directory of ground-truth flows")
    ev.add_argument("--report", help="write a JSON report here")

    pre = sub.add_parser("preview", help="render frame0 | frame1 | flow montage")
    pre.add_argument("manifest")
    pre.add_argument("sample_id")
    pre.add_argument("out", help="output PNG path")

    ben = sub.add_parser("bench", help="measure generation throughput")
    ben.add_argument("--size", default="1280x544", help="WxH, default 1280x544")
    ben.add_argument("--count", type=int, default=10)
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--input", help="optional image directory (default: synthetic textures)")
    return parser


def _parse_size(text):
    if not text:
        return None
    try:
        w, h = (int(t) for t in text.lower().split("x"))
        return h, w
    except ValueError:
        raise FlowSynthError(f"bad size spec {text!r}, expected WxH")


def _load_config_file(path) -> dict:
    with open(path) as f:
        return json.load(f)


def _filtered_kwargs(cls, data: dict) -> dict:
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {k: v for k, v in data.items() if k in names}
    for key, value in kwargs.items():
        if isinstance(value, list):
            kwargs[key] = tuple(value)
    return kwargs


def _cmd_generate(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    synthesis = SynthesisConfig(**_filtered_kwargs(SynthesisConfig, file_cfg.get("synthesis", {})))
    augmentation = None
    if not args.no_augment:
        augmentation = AugmentConfig(**_filtered_kwargs(AugmentConfig, file_cfg.get("augment", {})))
    if not args.input or not args.output:
        print("error: --input and --output are required", file=sys.stderr)
        return EXIT_USAGE
    formats = ("flo", "kitti") if args.format == "both" else (args.format,)
    run = RunConfig(
        input_dir=args.input,
        output_dir=args.output,
        count=args.count,
        seed=args.seed,
        workers=args.workers,
        formats=formats,
        cache_dir=args.cache_dir,
        target_size=_parse_size(args.size or file_cfg.get("size")),
        synthesis=synthesis,
        augmentation=augmentation,
    )
    if run.count < 1 or run.workers < 1:
        print("error: count and workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    stats = run_generation(run)
    print(f"wrote {stats['samples']} samples to {args.output} "
          f"({stats['samples_per_second']:.2f} samples/s)")
    if args.bench:
        print(f"throughput: {stats['samples_per_second']:.2f} samples/s "
              f"over {stats['samples']} samples")
    return EXIT_OK


def _cmd_validate(args) -> int:
    problems = validate_manifest_files(args.manifest)
    header, records = read_manifest(args.manifest)
    del header
    if not records:
        print("error: empty corpus (manifest has no sample records)", file=sys.stderr)
        return EXIT_DATA
    results = []
    failed = list(problems)
    for record in records:
        try:
            sample = load_manifest_sample(args.manifest, record)
        except (OSError, FlowSynthError) as exc:
            failed.append(f"{record.get('id')}: unreadable ({exc})")
            continue
        audit = photometric_audit(sample, args.mean_threshold, args.p99_threshold)
        status = "pass" if audit.passed else "FAIL"
        print(f"{record['id']}: {status} mean={audit.mean_abs_diff:.4f} "
              f"p99={audit.p99_abs_diff:.4f} occ={audit.occlusion_fraction:.2f}")
        results.append({"id": record["id"], "passed": audit.passed,
                        "mean_abs_diff": audit.mean_abs_diff,
                        "p99_abs_diff": audit.p99_abs_diff,
                        "occlusion_fraction": audit.occlusion_fraction})
        if not audit.passed:
            failed.append(f"{record['id']}: photometric audit failed")
    if args.report:
        with open(args.report, "w") as f:
            json.dump({"results": results, "problems": failed}, f, indent=2)
    if failed:
        print(f"{len(failed)} problem(s):", file=sys.stderr)
        for p in failed:
            print(f"  {p}", file=sys.stderr)
        return EXIT_DATA
    print(f"all {len(records)} samples passed the photometric audit")
    return EXIT_OK


def _flow_files(directory: Path) -> dict:
    out = {}
    for path in sorted(directory.iterdir()):
        if path.suffix == ".flo" or (path.suffix == ".png"):
            out[path.stem] = path
    return out


def _read_any_flow(path: Path):
    if path.suffix == ".flo":
        return read_flo(path), None
    return read_kitti_png(path)


def _cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    if not pred_dir.is_dir() or not gt_dir.is_dir():
        print("error: pred and gt must be directories", file=sys.stderr)
        return EXIT_IO
    preds = _flow_files(pred_dir)
    gts = _flow_files(gt_dir)
    missing = sorted(set(gts) - set(preds))
    if missing or not gts:
        print("error: unmatched ground-truth files:", file=sys.stderr)
        for name in missing:
            print(f"  {name}", file=sys.stderr)
        return EXIT_DATA

    def pairs():
        for name in sorted(gts):
            gt, valid = _read_any_flow(gts[name])
            pred, _ = _read_any_flow(preds[name])
            yield name, pred, gt, valid

    report = evaluate_pairs(pairs())
    for row in report.per_sample:
        print(f"{row['name']}: epe={row['epe']:.4f} f1_all={row['f1_all']:.2f}%")
    print(f"aggregate: epe={report.epe_mean:.4f} f1_all={report.f1_all:.2f}% "
          f"over {report.n_valid} pixels")
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report.as_dict(), f, indent=2)
    return EXIT_OK


def _cmd_preview(args) -> int:
    header, records = read_manifest(args.manifest)
    del header
    record = next((r for r in records if r["id"] == args.sample_id), None)
    if record is None:
        print(f"error: no sample with id {args.sample_id}", file=sys.stderr)
        return EXIT_DATA
    sample = load_manifest_sample(args.manifest, record)
    panel = colorize_flow(sample.flow)
    montage = np.concatenate([sample.frame0, sample.frame1, panel], axis=1)
    from .flowio import _write_png8

    _write_png8(montage, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    size = _parse_size(args.size)
    corpus = None
    if args.input:
        corpus = ingest_images(args.input, target_size=size)
    stats = run_bench(height=size[0], width=size[1], count=args.count,
                      seed=args.seed, corpus=corpus)
    print(f"benchmark {stats['width']}x{stats['height']}: "
          f"{stats['samples_per_second']:.2f} samples/s/worker "
          f"({stats['samples']} samples in {stats['seconds']:.1f}s; "
          f"segmentation precompute {stats['segmentation_precompute_seconds']:.1f}s, cached)")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "validate": _cmd_validate,
    "eval": _cmd_eval,
    "preview": _cmd_preview,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(ENV_PREFIX + "LOGLEVEL", "WARNING"))
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FlowSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
