"""Command-line front end: simulate, fit, pipeline, export, eval.

Exit codes: 0 success, 1 usage error, 2 data error. Every subcommand is
deterministic given its inputs, seed and config; the effective
configuration is echoed to stderr as one JSON line for reproducibility.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig
from .errors import FeatureRejected, RlffError
from .estimator import (
    CharacteristicPoints,
    FeatureClass,
    classify,
    extract_rlff,
)
from .export import ExportConfig, export_characteristic_points
from .formats import (
    read_observations_csv,
    read_rlff_jsonl,
    read_scene,
    rlff_record,
    write_observations_csv,
    write_rlff_jsonl,
)
from .geometry import LFIntrinsics, Point3D
from .lens import synth_observations
from .pipeline import run_pipeline

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_version(parser: _Parser) -> None:
    parser.add_argument(
        "--version", action="version", version=__version__,
        help="print the version and exit",
    )


def _echo_config(command: str, effective: dict) -> None:
    print(
        "config: " + json.dumps({"command": command, **effective}, sort_keys=True),
        file=sys.stderr,
    )


def _load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_file(path)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="rlff",
        description=(
            "Detect, fit and export refracted light-field features: "
            "six-parameter descriptions of background points seen through "
            "curved refractive objects."
        ),
    )
    _add_version(parser)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser(
        "simulate", help="synthesize observations for a ground-truth scene",
        description="Synthesize one observation per view for every scene "
        "feature and write them as continuous CSV.",
    )
    _add_version(p)
    p.add_argument("--scene", required=True, help="scene JSON (model records)")
    p.add_argument("--intrinsics", required=True, help="intrinsics JSON")
    p.add_argument("--out", required=True, help="output observation CSV")
    p.add_argument(
        "--noise-sigma", type=float, default=0.0,
        help="ray-space noise std on u, v in meters (default 0)",
    )
    p.add_argument("--seed", type=int, default=0, help="noise seed (default 0)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser(
        "fit", help="fit features to an observation CSV",
        description="Fit the six-parameter model to each feature in an "
        "observation CSV and write accepted features as JSON lines.",
    )
    _add_version(p)
    p.add_argument("--obs", required=True, help="observation CSV (continuous or discrete)")
    p.add_argument("--intrinsics", required=True, help="intrinsics JSON")
    p.add_argument("--out", required=True, help="output JSONL")
    p.add_argument("--config", help="TOML/JSON config overriding defaults")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser(
        "pipeline", help="run keypoint matching plus fitting end to end",
        description="Ingest per-view keypoint files, match them across "
        "views, fit features, and write accepted features as JSON lines.",
    )
    _add_version(p)
    p.add_argument("--keypoints", required=True, help="directory of view_<i>_<j>.txt files")
    p.add_argument("--intrinsics", required=True, help="intrinsics JSON")
    p.add_argument("--out", required=True, help="output JSONL")
    p.add_argument("--config", help="TOML/JSON config overriding defaults")
    p.add_argument("--rejects", help="optional JSONL of per-track rejections")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser(
        "export", help="export fitted features as SfM feature files",
        description="Project characteristic points of fitted features into "
        "mono or stereo views and write SfM-style feature files plus a "
        "sidecar index.",
    )
    _add_version(p)
    p.add_argument("--rlff", required=True, help="fitted features JSONL")
    p.add_argument("--intrinsics", required=True, help="intrinsics JSON")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--frame", default="frame", help="frame name (default 'frame')")
    p.add_argument("--mode", choices=("mono", "stereo"), default="mono")
    p.add_argument("--baseline", type=float, help="stereo baseline in meters")
    p.add_argument(
        "--strategy", choices=("identical", "bias", "external-match"),
        default="identical", help="descriptor strategy for refracted pairs",
    )
    p.add_argument("--bias", type=float, default=1.0, help="bias magnitude")
    p.add_argument(
        "--descriptor-dim", type=int, default=128,
        help="placeholder descriptor length (default 128)",
    )
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser(
        "eval", help="compare fitted features against ground truth",
        description="Match fitted features to a ground-truth scene by id "
        "and report parameter RMSEs and classification quality as JSON.",
    )
    _add_version(p)
    p.add_argument("--rlff", required=True, help="fitted features JSONL")
    p.add_argument("--scene", required=True, help="ground-truth scene JSON")
    p.add_argument("--out", help="report path (default stdout)")
    p.add_argument("--config", help="TOML/JSON config (lambertian_eps for truth labels)")
    p.set_defaults(func=_cmd_eval)

    return parser


def _cmd_simulate(args) -> int:
    scene = read_scene(args.scene)
    intr = LFIntrinsics.from_json(args.intrinsics)
    _echo_config(
        "simulate",
        {"scene": args.scene, "intrinsics": args.intrinsics, "out": args.out,
         "noise_sigma": args.noise_sigma, "seed": args.seed},
    )
    sets = []
    for fid, model in scene:
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, fid]))
        sets.append(
            synth_observations(
                model, intr, noise_sigma=args.noise_sigma, seed=rng, feature_id=fid
            )
        )
    write_observations_csv(args.out, sets)
    print(f"wrote {sum(len(s) for s in sets)} observations "
          f"for {len(sets)} features to {args.out}", file=sys.stderr)
    return 0


def _cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    intr = LFIntrinsics.from_json(args.intrinsics)
    _echo_config(
        "fit",
        {"obs": args.obs, "intrinsics": args.intrinsics, "out": args.out,
         "config": cfg.to_dict()},
    )
    sets = read_observations_csv(args.obs, intr)
    records = []
    n_rejected = 0
    for obs in sets:
        try:
            rlff, diag = extract_rlff(obs, intr, cfg)
        except FeatureRejected as exc:
            n_rejected += 1
            print(f"feature {obs.feature_id} rejected ({exc.reason.value}): "
                  f"{exc.detail}", file=sys.stderr)
            continue
        cls_ = classify(rlff, cfg.lambertian_eps)
        records.append(rlff_record(obs.feature_id, rlff, diag, cls_))
    write_rlff_jsonl(args.out, records)
    print(f"fit {len(records)} features ({n_rejected} rejected) to {args.out}",
          file=sys.stderr)
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _load_config(args.config)
    intr = LFIntrinsics.from_json(args.intrinsics)
    _echo_config(
        "pipeline",
        {"keypoints": args.keypoints, "intrinsics": args.intrinsics,
         "out": args.out, "rejects": args.rejects, "config": cfg.to_dict()},
    )
    result = run_pipeline(args.keypoints, intr, cfg)
    records = [
        rlff_record(track.track_id, rlff, diag, classify(rlff, cfg.lambertian_eps))
        for rlff, diag, track in result.accepted
    ]
    records.sort(key=lambda r: r["id"])
    write_rlff_jsonl(args.out, records)
    rejections = sorted(result.rejections, key=lambda r: r.track_id)
    if args.rejects is not None:
        lines = [
            json.dumps({"id": r.track_id, "reason": r.reason, "detail": r.detail})
            for r in rejections
        ]
        Path(args.rejects).write_text("\n".join(lines) + ("\n" if lines else ""))
    else:
        for r in rejections:
            print(f"track {r.track_id} rejected ({r.reason}): {r.detail}",
                  file=sys.stderr)
    print(f"accepted {len(records)} features, rejected {len(rejections)} "
          f"to {args.out}", file=sys.stderr)
    return 0


def _cp_from_record(record: dict) -> CharacteristicPoints:
    cls_ = FeatureClass(record["class"])
    rlff = record["_rlff"]
    if cls_ is FeatureClass.LAMBERTIAN:
        mid = Point3D(rlff.px, rlff.py, 0.5 * (rlff.pz1 + rlff.pz2))
        c1 = c2 = mid
    else:
        c1 = Point3D(rlff.px, rlff.py, rlff.pz1)
        c2 = Point3D(rlff.px, rlff.py, rlff.pz2)
    return CharacteristicPoints(
        feature_class=cls_, c1=c1, c2=c2, feature_id=int(record["id"])
    )


def _cmd_export(args) -> int:
    ecfg = ExportConfig(
        mode=args.mode,
        baseline=args.baseline,
        strategy=args.strategy,
        bias=args.bias,
        descriptor_dim=args.descriptor_dim,
    )
    intr = LFIntrinsics.from_json(args.intrinsics)
    _echo_config(
        "export",
        {"rlff": args.rlff, "intrinsics": args.intrinsics,
         "out_dir": args.out_dir, "frame": args.frame,
         "export": {"mode": ecfg.mode, "baseline": ecfg.effective_baseline(intr),
                    "strategy": ecfg.strategy, "bias": ecfg.bias,
                    "descriptor_dim": ecfg.descriptor_dim}},
    )
    records = read_rlff_jsonl(args.rlff)
    cps = [_cp_from_record(r) for r in records]
    result = export_characteristic_points(cps, intr, ecfg, args.out_dir, args.frame)
    counts = result.index["counts"]
    print(f"exported {counts['rows']} rows for {counts['features']} features "
          f"({counts['refracted']} refracted) under {args.out_dir}", file=sys.stderr)
    return 0


def _theta_error(a: float, b: float) -> float:
    diff = abs(a - b) % math.pi
    return min(diff, math.pi - diff)


def _cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    _echo_config(
        "eval",
        {"rlff": args.rlff, "scene": args.scene, "out": args.out,
         "config": cfg.to_dict()},
    )
    records = read_rlff_jsonl(args.rlff)
    truth = dict(read_scene(args.scene))

    estimates = {r["id"]: r for r in records}
    matched_ids = sorted(set(estimates) & set(truth))
    unmatched_estimates = sorted(set(estimates) - set(truth))
    unmatched_truth = sorted(set(truth) - set(estimates))

    sq_errors = {k: [] for k in ("Px", "Py", "Pz1", "Pz2")}
    theta_sq = {"theta1": [], "theta2": []}
    confusion = {
        "lambertian": {"lambertian": 0, "refracted": 0},
        "refracted": {"lambertian": 0, "refracted": 0},
    }
    for fid in matched_ids:
        est = estimates[fid]
        model = truth[fid]
        # Ground-truth labels follow the same depth-sorted convention.
        if model.pz1 <= model.pz2:
            t_pz1, t_pz2, t_th1, t_th2 = model.pz1, model.pz2, model.theta1, model.theta2
        else:
            t_pz1, t_pz2, t_th1, t_th2 = model.pz2, model.pz1, model.theta2, model.theta1
        true_gap = (t_pz2 - t_pz1) / t_pz1
        true_class = "refracted" if true_gap > cfg.lambertian_eps else "lambertian"
        confusion[true_class][est["class"]] += 1

        sq_errors["Px"].append((est["Px"] - model.px) ** 2)
        sq_errors["Py"].append((est["Py"] - model.py) ** 2)
        sq_errors["Pz1"].append((est["Pz1"] - t_pz1) ** 2)
        sq_errors["Pz2"].append((est["Pz2"] - t_pz2) ** 2)
        if true_class == "refracted":
            # Axis angles are undefined for (near-)spherical truth.
            theta_sq["theta1"].append(_theta_error(est["theta1"], t_th1) ** 2)
            theta_sq["theta2"].append(_theta_error(est["theta2"], t_th2) ** 2)

    def rmse(values: list):
        if not values:
            return None
        return float(np.sqrt(np.mean(values)))

    tp = confusion["refracted"]["refracted"]
    fp = confusion["lambertian"]["refracted"]
    fn = confusion["refracted"]["lambertian"]
    report = {
        "n_estimates": len(estimates),
        "n_truth": len(truth),
        "n_matched": len(matched_ids),
        "unmatched_estimates": unmatched_estimates,
        "unmatched_truth": unmatched_truth,
        "rmse": {
            **{k: rmse(v) for k, v in sq_errors.items()},
            **{k: rmse(v) for k, v in theta_sq.items()},
        },
        "classification": {
            "confusion": confusion,
            "precision": (tp / (tp + fp)) if (tp + fp) > 0 else None,
            "recall": (tp / (tp + fn)) if (tp + fn) > 0 else None,
        },
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        print("rlff: error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (RlffError, OSError) as exc:
        print(f"rlff {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
