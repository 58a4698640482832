"""Command-line surface.

Subcommands: ``sample``, ``invert``, ``linearity``, ``tune``, ``compare``,
``concentration``, ``verify``.  Common flags: ``--config`` (JSON experiment
file, see :mod:`ccslab.config`), ``--seed`` (overrides the config seeds),
``--out`` (output path, stdout when omitted), ``--format csv|json``.

Exit codes: 0 success, 1 input/config error, 2 numerical failure,
3 verification-suite failure.
"""

from __future__ import annotations

import argparse
import io
import json
import sys

import numpy as np

from . import testbeds
from ._version import __version__
from .config import LabConfig, load_config
from .control import (
    ControllerConfig,
    ccs_edit_sample,
    controller_tune,
    mechanism_handle,
    run_mechanism,
    PerturbationSpec,
)
from .errors import InputError, LabError, NumericsError
from .geometry import concentration_bound, gaussian_norm_frequency
from .protocols import compare_baselines, linearity_protocol
from .reports import (
    batch_to_json,
    report_to_json,
    write_batch_csv,
    write_compare_csv,
    write_linearity_csv,
)
from .sampler import ddim_invert, ddim_sample
from .scoremodel import CfgSpec
from .verify import verify_suite


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _master_seed(args, fallback: int = 0) -> int:
    return int(args.seed) if args.seed is not None else fallback


def _targets_for(cfg: LabConfig, n_default: int, seed: int) -> np.ndarray:
    exp = cfg.experiment
    if "targets" in exp:
        return np.atleast_2d(np.asarray(exp["targets"], dtype=float))
    n = int(exp.get("n_targets", n_default))
    return testbeds.draw_targets(cfg.model, n, seed)


def _cfg_spec(mech: dict, cond_key: str = "condition") -> CfgSpec | None:
    cond = mech.get(cond_key)
    if cond is None:
        return None
    return CfgSpec(float(mech.get("gamma", 3.0)), str(cond))


def _cmd_sample(args) -> int:
    cfg = load_config(args.config)
    mech = cfg.mechanism
    if not mech or "name" not in mech:
        raise InputError("sample requires a mechanism section with a name")
    seed = _master_seed(args, int(mech.get("seed", 0)))
    n = int(cfg.experiment.get("n", 16))
    target = _targets_for(cfg, 1, seed)[0]
    refine = int(mech.get("refine_iters", 0))

    if mech["name"] == "ccs_partial" and "source_condition" in mech:
        batch = ccs_edit_sample(
            cfg.schedule, cfg.model, target,
            c0=float(mech["scale"]), t0=int(mech["t0"]), n=n, seed=seed,
            source_cond=str(mech["source_condition"]),
            target_cond=str(mech["target_condition"]),
            gamma=float(mech.get("gamma", 3.0)),
            refine_iters=refine,
        )
    else:
        spec = PerturbationSpec(
            mechanism=mech["name"],
            scale=float(mech["scale"]),
            seed=seed,
            t0=int(mech["t0"]) if mech.get("t0") is not None else None,
            cfg_invert=_cfg_spec(mech),
            cfg_sample=_cfg_spec(mech),
        )
        batch = run_mechanism(cfg.schedule, cfg.model, target, spec, n, refine)

    if args.format == "json":
        _emit(args, batch_to_json(batch) + "\n")
    else:
        buf = io.StringIO()
        write_batch_csv(batch, buf)
        _emit(args, buf.getvalue())
    return 0


def _cmd_invert(args) -> int:
    cfg = load_config(args.config)
    mech = cfg.mechanism
    seed = _master_seed(args, int(mech.get("seed", 0)) if mech else 0)
    t_stop = int(cfg.experiment.get("t_stop", cfg.schedule.T))
    refine = int(mech.get("refine_iters", 0)) if mech else 0
    target = _targets_for(cfg, 1, seed)[0]
    guidance = _cfg_spec(mech) if mech else None

    state = ddim_invert(cfg.schedule, cfg.model, target, t_stop, guidance, refine)
    if t_stop >= 1:
        back = ddim_sample(cfg.schedule, cfg.model, state, guidance, t_start=t_stop)
        residual = float(np.linalg.norm(back.endpoint - target))
    else:
        residual = 0.0

    if args.format == "json":
        payload = {
            "t_stop": t_stop,
            "roundtrip_residual": residual,
            "state": [float(v) for v in state],
        }
        _emit(args, json.dumps(payload, indent=2) + "\n")
    else:
        buf = io.StringIO()
        buf.write(f"# report=invert\n# t_stop={t_stop}\n")
        buf.write(f"# roundtrip_residual={residual!r}\n")
        buf.write("index,value\n")
        for i, v in enumerate(state):
            buf.write(f"{i},{float(v)!r}\n")
        _emit(args, buf.getvalue())
    return 0


def _cmd_linearity(args) -> int:
    cfg = load_config(args.config)
    exp = cfg.experiment
    seed = _master_seed(args, int(exp.get("seed", 0)))
    targets = _targets_for(cfg, int(exp.get("n_targets", 4)), seed)
    report = linearity_protocol(
        cfg.schedule, cfg.model, targets,
        n_scales=int(exp.get("n_scales", 8)),
        samples_per_scale=int(exp.get("samples_per_scale", 24)),
        scale_max=float(exp.get("scale_max", 0.9)),
        seed=seed,
        scale_mode=exp.get("scale_mode", "random"),
        refine_iters=int(exp.get("refine_iters", 0)),
    )
    if args.format == "json":
        _emit(args, report_to_json(report) + "\n")
    else:
        buf = io.StringIO()
        write_linearity_csv(report, buf)
        _emit(args, buf.getvalue())
    return 0


def _cmd_tune(args) -> int:
    cfg = load_config(args.config)
    if cfg.controller is None:
        raise InputError("tune requires a controller section")
    mech = cfg.mechanism
    if not mech or "name" not in mech:
        raise InputError("tune requires a mechanism section with a name")
    controller = cfg.controller
    if args.seed is not None:
        controller = ControllerConfig(
            mse_target=controller.mse_target, tol=controller.tol,
            batch_size=controller.batch_size, max_iters=controller.max_iters,
            seed=int(args.seed), metric=controller.metric,
        )
    target = _targets_for(cfg, 1, controller.seed)[0]
    if "source_condition" in mech:
        gamma = float(mech.get("gamma", 3.0))
        cfg_invert = CfgSpec(gamma, str(mech["source_condition"]))
        cfg_sample = CfgSpec(gamma, str(mech["target_condition"]))
    else:
        cfg_invert = cfg_sample = _cfg_spec(mech)
    sample_at, bounds, integer = mechanism_handle(
        cfg.schedule, cfg.model, target, mech["name"],
        t0=int(mech["t0"]) if mech.get("t0") is not None else None,
        cfg_invert=cfg_invert,
        cfg_sample=cfg_sample,
        refine_iters=int(mech.get("refine_iters", 0)),
    )
    final, trace = controller_tune(sample_at, controller, bounds, integer)

    if args.format == "json":
        payload = {
            "mechanism": mech["name"],
            "final_scale": final,
            "converged": trace.converged,
            "boundary_eval": trace.boundary_eval,
            "iterations": [
                {"c_low": s.c_low, "c_high": s.c_high, "scale": s.scale,
                 "measured": s.measured}
                for s in trace.iterations
            ],
        }
        _emit(args, json.dumps(payload, indent=2) + "\n")
    else:
        buf = io.StringIO()
        buf.write(f"# report=tune\n# mechanism={mech['name']}\n")
        buf.write(f"# final_scale={final!r}\n# converged={str(trace.converged).lower()}\n")
        if trace.boundary_eval is not None:
            buf.write(f"# boundary_eval={trace.boundary_eval!r}\n")
        buf.write("iteration,c_low,c_high,scale,measured\n")
        for i, s in enumerate(trace.iterations):
            buf.write(f"{i},{s.c_low!r},{s.c_high!r},{s.scale!r},{s.measured!r}\n")
        _emit(args, buf.getvalue())
    return 0


def _cmd_compare(args) -> int:
    cfg = load_config(args.config)
    if cfg.controller is None:
        raise InputError("compare requires a controller section")
    exp = cfg.experiment
    seed = _master_seed(args, cfg.controller.seed)
    targets = _targets_for(cfg, int(exp.get("n_targets", 8)), seed)
    report = compare_baselines(
        cfg.schedule, cfg.model, targets,
        mse_target=cfg.controller.mse_target,
        tol=cfg.controller.tol,
        mechanisms=tuple(exp.get("mechanisms", ("ccs_full", "gp", "ccdf"))),
        seed=seed,
        batch_size=cfg.controller.batch_size,
        max_iters=cfg.controller.max_iters,
        eval_n=int(exp.get("eval_n", 120)),
        t0=int(exp["t0"]) if exp.get("t0") is not None else None,
        refine_iters=int(exp.get("refine_iters", 0)),
    )
    if args.format == "json":
        _emit(args, report_to_json(report) + "\n")
    else:
        buf = io.StringIO()
        write_compare_csv(report, buf)
        _emit(args, buf.getvalue())
    return 0


def _cmd_concentration(args) -> int:
    cfg = load_config(args.config)
    exp = cfg.experiment
    d = int(exp.get("d", 1000))
    delta = float(exp.get("delta", 0.1))
    draws = int(exp.get("draws", 100_000))
    seed = _master_seed(args, int(exp.get("seed", 0)))
    bound = concentration_bound(d, delta)
    freq = gaussian_norm_frequency(d, delta, draws, seed)
    if args.format == "json":
        payload = {"d": d, "delta": delta, "draws": draws,
                   "bound": bound, "mc_frequency": freq}
        _emit(args, json.dumps(payload, indent=2) + "\n")
    else:
        _emit(
            args,
            "d,delta,draws,bound,mc_frequency\n"
            f"{d},{delta!r},{draws},{bound!r},{freq!r}\n",
        )
    return 0


def _cmd_verify(args) -> int:
    seed = _master_seed(args, 0)
    ledger = verify_suite(seed)
    sys.stdout.write(ledger.format_table())
    if args.out:
        if args.format == "json":
            payload = [
                {"name": c.name, "measured": c.measured, "threshold": c.threshold,
                 "op": c.op, "passed": c.passed, "detail": c.detail}
                for c in ledger.checks
            ]
            text = json.dumps(payload, indent=2) + "\n"
        else:
            lines = ["name,measured,threshold,op,passed,detail"]
            for c in ledger.checks:
                lines.append(
                    f"{c.name},{c.measured!r},{c.threshold!r},{c.op},"
                    f"{str(c.passed).lower()},{c.detail}"
                )
            text = "\n".join(lines) + "\n"
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0 if ledger.all_passed else 3


_COMMANDS = {
    "sample": _cmd_sample,
    "invert": _cmd_invert,
    "linearity": _cmd_linearity,
    "tune": _cmd_tune,
    "compare": _cmd_compare,
    "concentration": _cmd_concentration,
    "verify": _cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccslab",
        description="Constrained diffusion sampling lab over analytic score models.",
    )
    parser.add_argument("--version", action="version", version=f"ccslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("sample", "draw a perturbed sample batch around a target mean"),
        ("invert", "compute the start state whose chain reproduces a target"),
        ("linearity", "residual-vs-perturbation-scale study"),
        ("tune", "bisect a mechanism's scale to a diversity target"),
        ("compare", "tune every mechanism to one target diversity and score it"),
        ("concentration", "Gaussian norm-concentration bound and Monte Carlo check"),
        ("verify", "run the numerical verification ledger"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except LabError as exc:  # any remaining package error counts as input-level
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
