"""Report objects and their CSV/JSON serialization.

Column orders are part of the contract:

    linearity: target_id,c0,sin_c0,mean_residual_norm,normalized_residual,n,seed
    compare:   target_id,mechanism,final_scale,achieved_rmse,psnr_mean_db,
               sample_sd,iterations,converged

Scalars are written with full ``repr`` precision, so ``parse(emit(report))``
reproduces the report exactly.  Each file carries a ``# key=value`` header
block embedding the config snapshot and master seed needed to re-run it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import numpy as np

from .control import SampleBatch
from .errors import InputError

__all__ = [
    "LinearityPoint",
    "LinearityFit",
    "LinearityReport",
    "CompareRow",
    "ExperimentReport",
    "write_linearity_csv",
    "read_linearity_csv",
    "write_compare_csv",
    "read_compare_csv",
    "write_batch_csv",
    "report_to_json",
    "linearity_from_json",
    "compare_from_json",
]

LINEARITY_COLUMNS = (
    "target_id", "c0", "sin_c0", "mean_residual_norm",
    "normalized_residual", "n", "seed",
)
COMPARE_COLUMNS = (
    "target_id", "mechanism", "final_scale", "achieved_rmse",
    "psnr_mean_db", "sample_sd", "iterations", "converged",
)
BATCH_COLUMNS = ("draw_index", "scale", "residual_norm", "per_coord_rmse", "seed")


@dataclass(frozen=True)
class LinearityPoint:
    target_id: int
    c0: float
    sin_c0: float
    mean_residual_norm: float
    normalized_residual: float
    n: int
    seed: int


@dataclass(frozen=True)
class LinearityFit:
    target_id: int
    slope: float
    bias: float


@dataclass(frozen=True)
class LinearityReport:
    """Per-target residual curves, their affine fits, and the pooled R^2."""

    points: tuple[LinearityPoint, ...]
    fits: tuple[LinearityFit, ...]
    pooled_r2: float
    seed: int
    config: dict
    version: str
    wall_clock: float = field(compare=False, default=0.0)


@dataclass(frozen=True)
class CompareRow:
    target_id: int
    mechanism: str
    final_scale: float
    achieved_rmse: float
    psnr_mean_db: float
    sample_sd: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class ExperimentReport:
    """Tuned-mechanism comparison table plus the config that produced it.

    ``diagnostics`` carries non-contract extras (norm drift, error messages)
    keyed by ``(target_id, mechanism)``; it is excluded from equality and
    from the CSV contract but included in JSON output.
    """

    rows: tuple[CompareRow, ...]
    seed: int
    config: dict
    version: str
    kind: str = "compare"
    wall_clock: float = field(compare=False, default=0.0)
    diagnostics: dict = field(compare=False, default_factory=dict)


# ----------------------------------------------------------------------
# CSV helpers
# ----------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_table(stream, header: dict, columns, rows) -> None:
    for key, value in header.items():
        stream.write(f"# {key}={value}\n")
    stream.write(",".join(columns) + "\n")
    for row in rows:
        stream.write(",".join(_fmt(v) for v in row) + "\n")


def _read_table(stream) -> tuple[dict, list[str], list[list[str]]]:
    header: dict[str, str] = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    for raw in stream:
        line = raw.rstrip("\n")
        if not line:
            continue
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            header[key] = value
        elif not columns:
            columns = line.split(",")
        else:
            rows.append(line.split(","))
    if not columns:
        raise InputError("no column header found")
    return header, columns, rows


def _open_for(path_or_stream, mode):
    if hasattr(path_or_stream, "write") or hasattr(path_or_stream, "read"):
        return path_or_stream, False
    return open(path_or_stream, mode), True


def write_linearity_csv(report: LinearityReport, path_or_stream) -> None:
    stream, close = _open_for(path_or_stream, "w")
    try:
        header = {
            "report": "linearity",
            "version": report.version,
            "seed": report.seed,
            "pooled_r2": repr(report.pooled_r2),
            "fits": json.dumps(
                [[f.target_id, f.slope, f.bias] for f in report.fits]
            ),
            "config": json.dumps(report.config, sort_keys=True),
        }
        rows = [
            (p.target_id, p.c0, p.sin_c0, p.mean_residual_norm,
             p.normalized_residual, p.n, p.seed)
            for p in report.points
        ]
        _write_table(stream, header, LINEARITY_COLUMNS, rows)
    finally:
        if close:
            stream.close()


def read_linearity_csv(path_or_stream) -> LinearityReport:
    stream, close = _open_for(path_or_stream, "r")
    try:
        header, columns, rows = _read_table(stream)
    finally:
        if close:
            stream.close()
    if tuple(columns) != LINEARITY_COLUMNS:
        raise InputError(f"unexpected linearity columns {columns}")
    points = tuple(
        LinearityPoint(
            target_id=int(r[0]), c0=float(r[1]), sin_c0=float(r[2]),
            mean_residual_norm=float(r[3]), normalized_residual=float(r[4]),
            n=int(r[5]), seed=int(r[6]),
        )
        for r in rows
    )
    fits = tuple(
        LinearityFit(int(t), float(a), float(b))
        for t, a, b in json.loads(header["fits"])
    )
    return LinearityReport(
        points=points,
        fits=fits,
        pooled_r2=float(header["pooled_r2"]),
        seed=int(header["seed"]),
        config=json.loads(header["config"]),
        version=header["version"],
    )


def write_compare_csv(report: ExperimentReport, path_or_stream) -> None:
    stream, close = _open_for(path_or_stream, "w")
    try:
        header = {
            "report": "compare",
            "version": report.version,
            "seed": report.seed,
            "config": json.dumps(report.config, sort_keys=True),
        }
        rows = [
            (r.target_id, r.mechanism, r.final_scale, r.achieved_rmse,
             r.psnr_mean_db, r.sample_sd, r.iterations, r.converged)
            for r in report.rows
        ]
        _write_table(stream, header, COMPARE_COLUMNS, rows)
    finally:
        if close:
            stream.close()


def read_compare_csv(path_or_stream) -> ExperimentReport:
    stream, close = _open_for(path_or_stream, "r")
    try:
        header, columns, rows = _read_table(stream)
    finally:
        if close:
            stream.close()
    if tuple(columns) != COMPARE_COLUMNS:
        raise InputError(f"unexpected compare columns {columns}")
    parsed = tuple(
        CompareRow(
            target_id=int(r[0]), mechanism=r[1], final_scale=float(r[2]),
            achieved_rmse=float(r[3]), psnr_mean_db=float(r[4]),
            sample_sd=float(r[5]), iterations=int(r[6]),
            converged=(r[7] == "true"),
        )
        for r in rows
    )
    return ExperimentReport(
        rows=parsed,
        seed=int(header["seed"]),
        config=json.loads(header["config"]),
        version=header["version"],
    )


def write_batch_csv(batch: SampleBatch, path_or_stream) -> None:
    """One row per draw; mechanism and target identified in the header block."""
    stream, close = _open_for(path_or_stream, "w")
    try:
        header = {
            "report": "samples",
            "mechanism": batch.mechanism,
            "scale": repr(batch.scale),
            "seed": batch.seed,
            "anchor_norm": repr(batch.anchor_norm),
            "target": json.dumps([float(v) for v in batch.target]),
        }
        if batch.t0 is not None:
            header["t0"] = batch.t0
        res = batch.residual_norms()
        per_coord = batch.rmse_values()
        rows = [
            (i, batch.scale, res[i], per_coord[i], int(batch.draw_seeds[i]))
            for i in range(batch.n)
        ]
        _write_table(stream, header, BATCH_COLUMNS, rows)
    finally:
        if close:
            stream.close()


# ----------------------------------------------------------------------
# JSON
# ----------------------------------------------------------------------


def _dataclass_dict(obj):
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def report_to_json(report) -> str:
    """JSON form of a report (includes non-contract diagnostics)."""
    if isinstance(report, LinearityReport):
        payload = {
            "report": "linearity",
            "version": report.version,
            "seed": report.seed,
            "pooled_r2": report.pooled_r2,
            "config": report.config,
            "wall_clock": report.wall_clock,
            "fits": [_dataclass_dict(f) for f in report.fits],
            "points": [_dataclass_dict(p) for p in report.points],
        }
    elif isinstance(report, ExperimentReport):
        payload = {
            "report": report.kind,
            "version": report.version,
            "seed": report.seed,
            "config": report.config,
            "wall_clock": report.wall_clock,
            "rows": [_dataclass_dict(r) for r in report.rows],
            "diagnostics": {
                f"{tid}/{mech}": diag
                for (tid, mech), diag in report.diagnostics.items()
            },
        }
    else:
        raise InputError(f"cannot serialize {type(report).__name__}")
    return json.dumps(payload, indent=2, sort_keys=True)


def linearity_from_json(text: str) -> LinearityReport:
    payload = json.loads(text)
    return LinearityReport(
        points=tuple(LinearityPoint(**p) for p in payload["points"]),
        fits=tuple(LinearityFit(**f) for f in payload["fits"]),
        pooled_r2=payload["pooled_r2"],
        seed=payload["seed"],
        config=payload["config"],
        version=payload["version"],
    )


def compare_from_json(text: str) -> ExperimentReport:
    payload = json.loads(text)
    return ExperimentReport(
        rows=tuple(CompareRow(**r) for r in payload["rows"]),
        seed=payload["seed"],
        config=payload["config"],
        version=payload["version"],
        kind=payload["report"],
    )


def batch_to_json(batch: SampleBatch) -> str:
    res = batch.residual_norms()
    per_coord = batch.rmse_values()
    payload = {
        "report": "samples",
        "mechanism": batch.mechanism,
        "scale": batch.scale,
        "seed": batch.seed,
        "anchor_norm": batch.anchor_norm,
        "t0": batch.t0,
        "target": [float(v) for v in batch.target],
        "rows": [
            {
                "draw_index": i,
                "scale": batch.scale,
                "residual_norm": float(res[i]),
                "per_coord_rmse": float(per_coord[i]),
                "seed": int(batch.draw_seeds[i]),
            }
            for i in range(batch.n)
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True)
