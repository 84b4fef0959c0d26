"""Command-line entry point: ``cmfd detect|match|eval|perturb|synth|dump-keypoints``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig
from .descriptor import write_descriptors_csv
from .evalharness import SYNTH_TAMPERS, DatasetManifest, ManifestError, evaluate, parse_grid, synth_suite, write_corpus, write_outputs
from .harris import write_keypoints_csv
from .image import ImageError
from .imgio import load_image, parse_perturbation, perturb, save_image, save_overlay
from .matcher import detect, extract_features, find_candidates
from .scalespace import build_pyramid

EXIT_GENUINE, EXIT_FORGED, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


def _config_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", type=Path, help="RunConfig JSON file")
    g.add_argument("--seed", type=int, help="seed for every random stream")
    g.add_argument("--octaves", type=int)
    g.add_argument("--intervals", type=int)
    g.add_argument("--beta", type=float)
    g.add_argument("--k", type=float, help="Harris sensitivity")
    g.add_argument("--t-cr", type=float, dest="t_cr", help="corner threshold as a fraction of the level maximum")
    g.add_argument("--eps", type=float, nargs="+", metavar="E", help="one shared or four per-block thresholds")
    g.add_argument("--d-min", type=float, dest="d_min")
    g.add_argument("--model", choices=("translation", "similarity", "affine"))
    g.add_argument("--iterations", type=int)
    g.add_argument("--tol", type=float)
    g.add_argument("--tau-match", type=int, dest="tau_match")
    return p


def effective_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over: dict = {}

    def put(section, key, value):
        if value is not None:
            over.setdefault(section, {})[key] = value

    put("pyramid", "octaves", args.octaves)
    put("pyramid", "intervals", args.intervals)
    put("pyramid", "beta", args.beta)
    put("harris", "k", args.k)
    put("harris", "t_cr_fraction", args.t_cr)
    if args.eps is not None:
        if len(args.eps) not in (1, 4):
            raise ConfigError("--eps takes one value or four")
        put("matcher", "eps", args.eps[0] if len(args.eps) == 1 else list(args.eps))
    put("matcher", "d_min", args.d_min)
    put("matcher", "model", args.model)
    put("matcher", "iterations", args.iterations)
    put("matcher", "tol", args.tol)
    put("matcher", "tau_match", args.tau_match)
    if args.seed is not None:
        over["seed"] = args.seed
    return cfg.override(over)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _sidecar(path: Path, payload: dict) -> None:
    path.with_name(path.name + ".json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_detect(args, cfg: RunConfig) -> int:
    img = load_image(args.image)
    report = detect(img, cfg)
    _emit(report.to_json() + "\n", args.out)
    if args.overlay:
        save_overlay(args.overlay, img, [(p.a, p.b) for p in report.inliers])
    return EXIT_FORGED if report.forged else EXIT_GENUINE


def cmd_match(args, cfg: RunConfig) -> int:
    pairs = find_candidates(extract_features(load_image(args.image), cfg), cfg)
    payload = {"config": cfg.to_dict(), "candidates": len(pairs), "pairs": [p.to_dict() for p in pairs]}
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    manifest = DatasetManifest.load(args.manifest)
    grid = parse_grid(args.grid) if args.grid else ()
    ev = evaluate(manifest, cfg, cfg.seed, grid, args.workers, per_factor=not args.no_per_factor)
    for path in write_outputs(args.out, ev, manifest, cfg, cfg.seed, plot=args.plot):
        print(path)
    for c in ev.cells:
        auc = "n/a" if c.curve is None else f"{c.curve.auc:.4f}"
        param = "" if c.param is None else f"={c.param}"
        print(f"{c.subset:10s} {c.op}{param:8s} AUC {auc}  ({c.n_forged} forged, {c.n_genuine} genuine)")
    return 0


def cmd_perturb(args, cfg: RunConfig) -> int:
    op = parse_perturbation(args.op)
    save_image(args.out, perturb(load_image(args.image), op, cfg.seed))
    _sidecar(args.out, {"source": str(args.image), "op": args.op, "seed": cfg.seed, "config": cfg.to_dict()})
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    items = synth_suite(args.n, cfg.seed, args.tamper, args.size)
    manifest = write_corpus(args.out, items, args.format)
    meta = {"n": args.n, "tamper": args.tamper, "size": args.size, "seed": cfg.seed, "config": cfg.to_dict()}
    (Path(args.out) / "synth.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(manifest)} images and {Path(args.out) / 'manifest.json'}")
    return 0


def cmd_dump_keypoints(args, cfg: RunConfig) -> int:
    img = load_image(args.image)
    if args.dump_pyramid:
        build_pyramid(img, cfg.pyramid).dump(args.dump_pyramid)
    feats = extract_features(img, cfg)
    write_keypoints_csv(args.out, feats.keypoints)
    _sidecar(args.out, {"source": str(args.image), "keypoints": len(feats.keypoints), "config": cfg.to_dict()})
    if args.descriptors:
        write_descriptors_csv(args.descriptors, feats.coords, feats.vectors)
    print(f"{len(feats.keypoints)} keypoints -> {args.out}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    flags = _config_flags()
    parser = argparse.ArgumentParser(prog="cmfd", description="Keypoint-based copy-move forgery detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", parents=[flags], help="verdict and RANSAC report for one image")
    p.add_argument("image", type=Path)
    p.add_argument("--out", type=Path, help="report JSON (default: stdout)")
    p.add_argument("--overlay", type=Path, help="PNG with inlier pairs drawn")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("match", parents=[flags], help="candidate pairs before RANSAC")
    p.add_argument("image", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", parents=[flags], help="ROC sweep over a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("eval_out"))
    p.add_argument("--grid", help="'default' or e.g. blur:3:1,noise:0:3,jpeg:60")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plot", action="store_true", help="also write roc.svg")
    p.add_argument("--no-per-factor", action="store_true", help="skip per tamper-factor subsets")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("perturb", parents=[flags], help="blur, noise or JPEG round-trip")
    p.add_argument("image", type=Path)
    p.add_argument("--op", required=True, help="blur:w:sigma, noise:mean:var or jpeg:q")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("synth", parents=[flags], help="synthetic forged/genuine corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--tamper", choices=SYNTH_TAMPERS, default="naive")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--format", choices=("png", "pgm"), default="png")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dump-keypoints", parents=[flags], help="keypoint CSV, optional descriptors and pyramid")
    p.add_argument("image", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--descriptors", type=Path, help="descriptor CSV")
    p.add_argument("--dump-pyramid", type=Path, metavar="DIR", help="write every pyramid level as PGM")
    p.set_defaults(func=cmd_dump_keypoints)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = effective_config(args)
        return args.func(args, cfg)
    except (ImageError, ConfigError, ManifestError, UsageError, ValueError, OSError) as exc:
        print(f"cmfd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
