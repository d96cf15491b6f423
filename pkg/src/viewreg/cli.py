"""Command-line interface.

Usage:
    viewreg svo embeddings.csv --margin 0.05
    viewreg spd current.csv target.csv --eps 1e-6
    viewreg descriptor stack_dir/ --patch 4 --out descriptor.csv
    viewreg gradcheck spd --seed 1
    viewreg optimize configs/default.json --seed 42 --out trace.csv

Every command prints one JSON object on stdout. Failures print a JSON object
with an ``error_kind`` field on stderr and exit non-zero. ``MOC_SEED`` in the
environment overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import gradcheck, io
from .errors import ConfigError, NotSymmetric, UsageError, ViewRegError
from .features import DEFAULT_EPS, DEFAULT_PATCH, build_descriptor
from .harness import HarnessConfig, check_convergence, run_experiment
from .spd import SymMatrix, lem_distance_sq
from .view_order import DEFAULT_MARGIN, similarities, svo_loss

GRADCHECK_TOL = 1e-5
SYMMETRY_TOL = 1e-9


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seed(args_seed: int | None) -> int | None:
    env = os.environ.get("MOC_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"MOC_SEED must be an integer, got {env!r}") from None
    return args_seed


def _report(command: str, inputs: dict, outputs: dict, status: str = "ok") -> dict:
    return {"command": command, "inputs": inputs, "outputs": outputs, "status": status}


def cmd_svo(embeddings_path, delta: float = DEFAULT_MARGIN) -> dict:
    vs = io.read_embeddings_csv(embeddings_path)
    res = svo_loss(similarities(vs), delta)
    return _report(
        "svo",
        {"embeddings": str(embeddings_path), "margin": delta},
        {"azimuths": list(vs.azimuths), "sims": res.sims.tolist(),
         "per_term": res.per_term.tolist(), "loss": res.loss},
    )


def _load_symmetric(path) -> SymMatrix:
    m = io.read_square_matrix_csv(path)
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * scale:
        raise NotSymmetric(f"{path}: matrix is not symmetric within {SYMMETRY_TOL}")
    return SymMatrix(m)


def cmd_spd(current_path, target_path, eps: float = DEFAULT_EPS) -> dict:
    a, b = _load_symmetric(current_path), _load_symmetric(target_path)
    d2 = lem_distance_sq(a, b, eps)
    return _report(
        "spd",
        {"current": str(current_path), "target": str(target_path), "eps": eps},
        {"lem_distance_sq": d2, "lem_distance": math.sqrt(d2), "dim": a.dim},
    )


def cmd_descriptor(stack_dir, patch: int = DEFAULT_PATCH, eps: float = DEFAULT_EPS,
                   out_path=None) -> dict:
    stack = io.read_feature_stack(stack_dir)
    desc = build_descriptor(stack, d=patch, eps=eps)
    c = desc.c.entries
    sign_c, logdet_c = np.linalg.slogdet(c)
    sign_s, logdet_s = np.linalg.slogdet(desc.sigma_reg)
    if out_path is not None:
        io.write_matrix_csv(out_path, c)
    return _report(
        "descriptor",
        {"stack_dir": str(stack_dir), "patch": patch, "eps": eps,
         "out": None if out_path is None else str(out_path)},
        {"dim": desc.c.dim, "det_c": float(sign_c * math.exp(logdet_c)),
         "det_sigma_reg": float(sign_s * math.exp(logdet_s)),
         "logdet_c": float(logdet_c), "logdet_sigma_reg": float(logdet_s),
         "min_eigenvalue": float(np.linalg.eigvalsh(c)[0]),
         "mean": desc.moments.mean.tolist()},
    )


def cmd_gradcheck(target: str, seed: int = 0, satisfied: bool = False) -> dict:
    if target == "spd":
        res = gradcheck.check_spd(seed)
    elif target == "svo":
        res = gradcheck.check_svo(seed, satisfied=satisfied)
    elif target == "harness":
        res = gradcheck.check_harness(seed)
    else:
        raise UsageError(f"unknown gradcheck target {target!r}; expected spd, svo or harness")
    passed = res.passed(GRADCHECK_TOL)
    return _report(
        "gradcheck",
        {"target": target, "seed": seed, "satisfied": satisfied},
        {"max_rel_err": res.max_rel_err, "tolerance": GRADCHECK_TOL, "passed": passed,
         "analytic_max_abs": float(np.max(np.abs(res.analytic))),
         "numeric_max_abs": float(np.max(np.abs(res.numeric)))},
        status="ok" if passed else "fail",
    )


def load_config(config_path) -> HarnessConfig:
    if config_path is None:
        return HarnessConfig()
    try:
        data = json.loads(Path(config_path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{config_path}: invalid JSON at line {err.lineno}") from None
    return HarnessConfig.from_dict(data)


def cmd_optimize(config_path=None, seed: int | None = None, out_path="trace.csv") -> dict:
    cfg = load_config(config_path)
    seed = cfg.seed if seed is None else seed
    _, trace = run_experiment(cfg, seed)
    Path(out_path).write_text(trace.to_csv())
    conv = check_convergence(trace, tol_spd=1e-3)
    return _report(
        "optimize",
        {"config": None if config_path is None else str(config_path), "seed": seed,
         "out": str(out_path)},
        {"iterations": len(trace) - 1,
         "initial_total": trace.initial("total"), "final_total": trace.final("total"),
         "initial_r_svo": trace.initial("r_svo"), "final_r_svo": trace.final("r_svo"),
         "initial_min_gap": trace.initial("min_gap"), "final_min_gap": trace.final("min_gap"),
         "initial_lem_dist": trace.initial("lem_dist"), "final_lem_dist": trace.final("lem_dist"),
         "svo_zero": conv.svo_zero, "total_decreased": conv.total_decreased},
    )


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="viewreg", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("svo", help="view-order hinge loss of an embedding CSV")
    s.add_argument("embeddings")
    s.add_argument("--margin", type=float, default=DEFAULT_MARGIN)

    s = sub.add_parser("spd", help="squared Log-Euclidean distance between two matrix CSVs")
    s.add_argument("current")
    s.add_argument("target")
    s.add_argument("--eps", type=float, default=DEFAULT_EPS)

    s = sub.add_parser("descriptor", help="extended SPD descriptor of a feature-stack directory")
    s.add_argument("stack_dir")
    s.add_argument("--patch", type=int, default=DEFAULT_PATCH)
    s.add_argument("--eps", type=float, default=DEFAULT_EPS)
    s.add_argument("--out", default=None)

    s = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    s.add_argument("target")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--satisfied", action="store_true",
                   help="svo only: use an ordering that already satisfies every margin")

    s = sub.add_parser("optimize", help="run the synthetic harness and write a trace CSV")
    s.add_argument("config", nargs="?", default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default="trace.csv")
    return p


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    if args.command == "svo":
        return cmd_svo(args.embeddings, args.margin)
    if args.command == "spd":
        return cmd_spd(args.current, args.target, args.eps)
    if args.command == "descriptor":
        return cmd_descriptor(args.stack_dir, args.patch, args.eps, args.out)
    if args.command == "gradcheck":
        return cmd_gradcheck(args.target, _seed(args.seed), args.satisfied)
    return cmd_optimize(args.config, _seed(args.seed), args.out)


def _error(kind: str, message: str, command: str | None) -> int:
    sys.stderr.write(json.dumps({"status": "error", "command": command,
                                 "error_kind": kind, "message": message}) + "\n")
    return 1


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    command = argv[0] if argv else None
    try:
        report = run(argv)
        text = json.dumps(report, allow_nan=False)
    except ViewRegError as err:
        return _error(err.kind, str(err), command)
    except OSError as err:
        return _error("IOError", str(err), command)
    except ValueError as err:
        return _error("InvalidInput", str(err), command)
    sys.stdout.write(text + "\n")
    return 0 if report["status"] == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
