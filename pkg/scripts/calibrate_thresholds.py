#!/usr/bin/env python3
"""Monte-Carlo calibration of the default fit-quality thresholds.

Measures, on the default synthetic camera at 0.1 pixel observation noise:

  * the RMS fit-residual floor (in pixel-pitch units),
  * the slope-matrix asymmetry floor,
  * the relative depth gap spuriously seen on truly spherical features,
  * how often offsets recovered through the reconstructed slope matrix beat
    offsets recovered through the raw fit.

The recommended gates are 3x the mean floors. Writes the measurements to
tests/data/calibration.json (consumed by the test suite to keep the config
defaults honest) and prints a summary.

Usage: python3 scripts/calibrate_thresholds.py [--trials N] [--out PATH]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from rlff import (
    AstigmaticLensModel,
    extract_rlff,
    fit_linear_system,
    make_intrinsics,
    recover_offsets,
    symmetrize,
    synth_observations,
)
from rlff.estimator import asymmetry_residual, decompose, reconstruct_hr


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=2000)
    parser.add_argument("--sigma-px", type=float, default=0.1)
    parser.add_argument(
        "--out",
        default=str(Path(__file__).resolve().parent.parent / "tests" / "data" / "calibration.json"),
    )
    args = parser.parse_args()

    intr = make_intrinsics()
    sigma = args.sigma_px * intr.pixel_pitch
    rng = np.random.default_rng(20240501)

    rms_px = []
    asym = []
    spurious_gap = []
    hr_wins = 0
    depth_rel_errors = []

    for trial in range(args.trials):
        theta = rng.uniform(0, np.pi)
        pz = np.sort(rng.uniform(0.2, 2.0, size=2))
        px, py = rng.uniform(-0.05, 0.05, size=2)
        model = AstigmaticLensModel(
            px=px, py=py, pz1=pz[0], pz2=pz[1],
            theta1=theta, theta2=theta + np.pi / 2,
        )
        obs = synth_observations(model, intr, noise_sigma=sigma, seed=rng)
        fit, rms = fit_linear_system(obs)
        rms_px.append(rms / intr.pixel_pitch)
        dec = decompose(symmetrize(fit.hhat), intr.d)
        hr = reconstruct_hr(dec)
        asym.append(asymmetry_residual(fit.hhat, hr))
        depth_rel_errors.append(
            max(abs(dec.pz1 / model.pz1 - 1), abs(dec.pz2 / model.pz2 - 1))
        )

        p_hr = np.array(recover_offsets(hr, fit.xhat))
        p_raw = np.array(recover_offsets(fit.hhat, fit.xhat))
        truth = np.array([px, py])
        if np.linalg.norm(p_hr - truth) < np.linalg.norm(p_raw - truth):
            hr_wins += 1

        # Spherical features: how large a depth gap does pure noise fake?
        pz_s = rng.uniform(0.2, 2.0)
        spherical = AstigmaticLensModel(
            px=px, py=py, pz1=pz_s, pz2=pz_s, theta1=0.0, theta2=np.pi / 2
        )
        obs_s = synth_observations(spherical, intr, noise_sigma=sigma, seed=rng)
        fit_s, _ = fit_linear_system(obs_s)
        dec_s = decompose(symmetrize(fit_s.hhat), intr.d)
        spurious_gap.append((dec_s.pz2 - dec_s.pz1) / dec_s.pz1)

    rms_px = np.array(rms_px)
    asym = np.array(asym)
    spurious_gap = np.array(spurious_gap)
    result = {
        "sigma_px": args.sigma_px,
        "trials": args.trials,
        "camera": {
            "n_views": [intr.ni, intr.nj],
            "n_pixels": [intr.nk, intr.nl],
            "view_pitch": intr.view_pitch,
            "pixel_pitch": intr.pixel_pitch,
            "d": intr.d,
        },
        "rms_floor_px": {
            "mean": float(rms_px.mean()),
            "p50": float(np.quantile(rms_px, 0.5)),
            "p99": float(np.quantile(rms_px, 0.99)),
        },
        "asymmetry_floor": {
            "mean": float(asym.mean()),
            "p50": float(np.quantile(asym, 0.5)),
            "p99": float(np.quantile(asym, 0.99)),
        },
        "spurious_depth_gap": {
            "mean": float(spurious_gap.mean()),
            "p95": float(np.quantile(spurious_gap, 0.95)),
            "p99": float(np.quantile(spurious_gap, 0.99)),
        },
        "depth_rel_error_median": float(np.median(depth_rel_errors)),
        "hr_offset_win_rate": hr_wins / args.trials,
        "recommended": {
            "max_residual": float(3 * rms_px.mean()),
            "max_asymmetry": float(3 * asym.mean()),
        },
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(result, indent=2) + "\n")
    print(json.dumps(result, indent=2))
    print(f"\nwrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
