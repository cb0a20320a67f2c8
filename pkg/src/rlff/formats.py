"""On-disk formats: observation CSV, scene JSON, feature records as JSON lines.

Observation CSV comes in two shapes, told apart by the header:
continuous ``feature_id,i,j,s,t,u,v`` (rays already decoded) and discrete
``feature_id,i,j,k,l`` (raw indices, decoded against intrinsics on read).
Floats are serialized with repr semantics, so reads are lossless and
repeated writes are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .estimator import FeatureClass, FitDiagnostics, Rlff
from .geometry import LFIntrinsics
from .lens import AstigmaticLensModel, ObservationSet

__all__ = [
    "CONTINUOUS_HEADER",
    "DISCRETE_HEADER",
    "write_observations_csv",
    "read_observations_csv",
    "read_scene",
    "write_scene",
    "rlff_record",
    "write_rlff_jsonl",
    "read_rlff_jsonl",
]

CONTINUOUS_HEADER = "feature_id,i,j,s,t,u,v"
DISCRETE_HEADER = "feature_id,i,j,k,l"

RLFF_RECORD_KEYS = (
    "id", "Px", "Py", "Pz1", "Pz2", "theta1", "theta2",
    "rms_residual", "asymmetry", "r_squared", "n_views", "class",
)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_observations_csv(path, sets: list) -> None:
    """Write observation sets as continuous CSV rows, ordered by feature id."""
    lines = [CONTINUOUS_HEADER]
    for obs in sorted(sets, key=lambda o: o.feature_id):
        for (i, j), ray in zip(obs.views, obs.rays):
            lines.append(
                f"{obs.feature_id},{int(i)},{int(j)},"
                f"{_fmt(ray[0])},{_fmt(ray[1])},{_fmt(ray[2])},{_fmt(ray[3])}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_csv_rows(path: Path, expected_fields: int, kind: str) -> list:
    rows = []
    with open(path, "r") as fh:
        for num, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if num == 1 and line in (CONTINUOUS_HEADER, DISCRETE_HEADER):
                continue
            parts = line.split(",")
            if len(parts) != expected_fields:
                raise DataError(
                    f"{path}:{num}: expected {expected_fields} {kind} fields, "
                    f"got {len(parts)}"
                )
            try:
                rows.append(([int(parts[0]), int(parts[1]), int(parts[2])],
                             [float(x) for x in parts[3:]], num))
            except ValueError as exc:
                raise DataError(f"{path}:{num}: {exc}") from exc
    return rows


def read_observations_csv(path, intr: LFIntrinsics | None = None) -> list:
    """Read observation sets from CSV (continuous or discrete form).

    Discrete files require ``intr`` to decode indices to rays; continuous
    files use it, when given, to reconstruct sub-pixel positions. Returns
    sets sorted by feature id.
    """
    path = Path(path)
    with open(path, "r") as fh:
        first = fh.readline().strip()
    if not first:
        return []
    if first == DISCRETE_HEADER:
        discrete = True
    elif first == CONTINUOUS_HEADER:
        discrete = False
    else:
        # Headerless: infer the shape from the field count.
        n_fields = len(first.split(","))
        if n_fields == 5:
            discrete = True
        elif n_fields == 7:
            discrete = False
        else:
            raise DataError(
                f"{path}:1: cannot tell observation format from {n_fields} fields; "
                f"expected header {CONTINUOUS_HEADER!r} or {DISCRETE_HEADER!r}"
            )
    if discrete and intr is None:
        raise DataError("discrete observation CSV requires intrinsics to decode")

    rows = _parse_csv_rows(path, 5 if discrete else 7, "observation")
    by_id: dict = {}
    for head, tail, num in rows:
        by_id.setdefault(head[0], []).append((head[1], head[2], tail, num))

    sets = []
    for fid in sorted(by_id):
        entries = by_id[fid]
        views = np.array([[e[0], e[1]] for e in entries], dtype=int)
        if discrete:
            ijkl = np.array(
                [[e[0], e[1], e[2][0], e[2][1]] for e in entries], dtype=float
            )
            rays = intr.decode_indices(ijkl)
            pixels = ijkl[:, 2:]
        else:
            rays = np.array([e[2] for e in entries], dtype=float)
            pixels = None
            if intr is not None:
                k, l = intr.pixel_for_view_ray(
                    views[:, 0], views[:, 1], rays[:, 2], rays[:, 3]
                )
                pixels = np.column_stack([k, l])
        try:
            sets.append(
                ObservationSet(feature_id=fid, views=views, rays=rays, pixels=pixels)
            )
        except DataError as exc:
            first_line = entries[0][3]
            raise DataError(f"{path}: feature {fid} (near line {first_line}): {exc}") from exc
    return sets


def read_scene(path) -> list:
    """Read a scene file: JSON array of model records with optional ids.

    Returns a list of (id, AstigmaticLensModel); ids default to array
    positions.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise DataError(f"{path}: scene must be a JSON array of model records")
    out = []
    seen = set()
    for pos, record in enumerate(data):
        if not isinstance(record, dict):
            raise DataError(f"{path}: record {pos} is not an object")
        try:
            model = AstigmaticLensModel.from_dict(record)
        except DataError as exc:
            raise DataError(f"{path}: record {pos}: {exc}") from exc
        fid = record.get("id", pos)
        if int(fid) != fid:
            raise DataError(f"{path}: record {pos}: id must be an integer")
        fid = int(fid)
        if fid in seen:
            raise DataError(f"{path}: duplicate feature id {fid}")
        seen.add(fid)
        out.append((fid, model))
    return out


def write_scene(path, models: list) -> None:
    """Write (id, model) pairs as a scene JSON array."""
    records = []
    for fid, model in models:
        record = {"id": int(fid)}
        record.update(model.to_dict())
        records.append(record)
    Path(path).write_text(json.dumps(records, indent=2) + "\n")


def rlff_record(
    fid: int, rlff: Rlff, diag: FitDiagnostics, feature_class: FeatureClass
) -> dict:
    return {
        "id": int(fid),
        "Px": rlff.px,
        "Py": rlff.py,
        "Pz1": rlff.pz1,
        "Pz2": rlff.pz2,
        "theta1": rlff.theta1,
        "theta2": rlff.theta2,
        "rms_residual": diag.rms_residual,
        "asymmetry": diag.asymmetry,
        "r_squared": diag.r_squared,
        "n_views": diag.n_views,
        "class": feature_class.value,
    }


def write_rlff_jsonl(path, records: list) -> None:
    lines = [json.dumps(r) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_rlff_jsonl(path) -> list:
    """Read feature records; validates keys and reconstructs types.

    Returns a list of dicts with an extra "_rlff" entry holding the parsed
    Rlff for convenience.
    """
    path = Path(path)
    out = []
    for num, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{num}: invalid JSON: {exc}") from exc
        missing = [k for k in RLFF_RECORD_KEYS if k not in record]
        if missing:
            raise DataError(f"{path}:{num}: record missing keys {missing}")
        if record["class"] not in (c.value for c in FeatureClass):
            raise DataError(f"{path}:{num}: unknown class {record['class']!r}")
        try:
            rlff = Rlff(
                px=float(record["Px"]), py=float(record["Py"]),
                pz1=float(record["Pz1"]), pz2=float(record["Pz2"]),
                theta1=float(record["theta1"]), theta2=float(record["theta2"]),
            )
        except (TypeError, ValueError, DataError) as exc:
            raise DataError(f"{path}:{num}: bad parameters: {exc}") from exc
        record["_rlff"] = rlff
        out.append(record)
    return out
