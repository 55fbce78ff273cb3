"""
Command-line entry point.

Usage::

    impulsegame <solve|simulate|verify|compare> --config run.json [--out DIR] [--threads N]

Exit codes: 0 success, 1 usage or configuration error, 2 failed validation
or failed verification checks, 3 divergence guard.
"""

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from dotenv import load_dotenv

from impulsegame import __version__
from impulsegame.config import RunConfig, load_config, resolve_threads
from impulsegame.core.operators import QviForm, hjbi_residual, intervention_continuity
from impulsegame.core.solver import (
    SolveReport,
    boundedness_margin,
    check_lemma1,
    check_mu_scaling,
    isaacs_gap,
    solve,
    uniqueness_gap,
)
from impulsegame.grid.field import interpolate, write_field_csv
from impulsegame.grid.grid import Grid
from impulsegame.model.problem import ProblemSpec
from impulsegame.model.validation import validate_problem
from impulsegame.sim.policy import extract_policy, write_policy_csv
from impulsegame.sim.simulate import simulate, write_trajectory_csv, write_trajectory_summary
from impulsegame.utils.errors import DivergenceError, ImpulseGameError, ValidationFailure
from impulsegame.utils.logging import configure_logging, get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3

LOG_LEVEL_ENV = "QVI_LOG_LEVEL"


class RunContext:
    """Everything a subcommand needs: the config, the built problem and grid, and the output directory."""

    def __init__(self, config: RunConfig, config_path: Path, out_dir: Path, threads: int):
        self.config = config
        self.config_path = config_path
        self.out_dir = out_dir
        self.threads = threads
        self.problem: ProblemSpec = config.build_problem()
        self.grid: Grid = config.build_grid()
        self.params = config.solver_params(self.problem, self.grid, threads, base_dir=config_path.parent)
        self.resolved = config.resolved(self.params.step)

    def solve(self, form: QviForm) -> SolveReport:
        return solve(self.problem, self.grid, form, self.params)

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({**payload, "config": self.resolved}, indent=2, sort_keys=True) + "\n")
        logger.info(f"Wrote {path}")
        return path


# -- Subcommands --

def cmd_solve(ctx: RunContext) -> int:
    validation = validate_problem(ctx.problem, ctx.grid)
    ctx.write_json("validation.json", validation.to_dict())
    for form in ctx.config.forms:
        report = ctx.solve(form)
        csv_path = write_field_csv(report.field, ctx.out_dir / f"field_{form.value}.csv")
        ctx.write_json(f"report_{form.value}.json", report.to_dict(field_csv_path=csv_path.name))
    return EXIT_OK


def cmd_simulate(ctx: RunContext) -> int:
    block = ctx.config.simulate
    if block is None:
        logger.error("simulate needs a 'simulate' block with at least x0")
        return EXIT_USAGE
    form = block.form or ctx.config.forms[0]
    report = ctx.solve(form)
    write_field_csv(report.field, ctx.out_dir / f"field_{form.value}.csv")
    policy = extract_policy(report, ctx.problem, ctx.params.step)
    write_policy_csv(policy, ctx.problem, ctx.out_dir / f"policy_{form.value}.csv")

    record = simulate(
        ctx.problem,
        policy,
        block.x0,
        block.horizon,
        block.h,
        max_consecutive_impulses=block.max_consecutive_impulses,
    )
    write_trajectory_csv(record, ctx.out_dir / "trajectory.csv")
    write_trajectory_summary(
        record,
        ctx.out_dir / "trajectory.json",
        {
            "form": form.value,
            "field_value_at_x0": interpolate(report.field, block.x0),
            "payoff_ledger_error": abs(record.recompute_payoff() - record.payoff),
            "config": ctx.resolved,
        },
    )
    return EXIT_OK


def _verify_form(ctx: RunContext, form: QviForm) -> Dict[str, Any]:
    block = ctx.config.verify
    report = ctx.solve(form)
    result: Dict[str, Any] = {"converged": report.converged, "iterations": report.iterations}
    checks: List[bool] = [report.converged]

    if report.converged:
        violations = check_lemma1(report, ctx.problem, block.tol_lemma1)
        result["lemma1_violations"] = [v.dict() for v in violations]
        checks.append(not violations)

    margin = boundedness_margin(report, ctx.problem)
    result["boundedness_margin"] = margin
    checks.append(margin >= 0)

    scaling = check_mu_scaling(ctx.problem, ctx.grid, form, ctx.params, block.mu, base=report)
    result["mu_scaling"] = scaling.dict()
    checks.append(scaling.ok)

    if block.uniqueness:
        uniqueness = uniqueness_gap(ctx.problem, ctx.grid, form, ctx.params)
        result["uniqueness"] = uniqueness.dict()
        checks.append(uniqueness.ok)

    if block.residual and min(ctx.grid.shape) >= 3:
        residual = hjbi_residual(report.field, ctx.problem, form)
        result["residual_sup_norm"] = residual.sup_norm()

    result["intervention_continuity"] = intervention_continuity(report.field, ctx.problem)
    result["passed"] = all(checks)
    return result


def cmd_verify(ctx: RunContext) -> int:
    results = {form.value: _verify_form(ctx, form) for form in ctx.config.forms}
    passed = all(r["passed"] for r in results.values())
    ctx.write_json("verify.json", {"forms": results, "passed": passed})
    if not passed:
        failed = [name for name, r in results.items() if not r["passed"]]
        logger.error(f"verification failed for forms {failed}")
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_compare(ctx: RunContext) -> int:
    reports = {form: ctx.solve(form) for form in QviForm}
    gap_lu = isaacs_gap(reports[QviForm.L], reports[QviForm.U])
    gap_max_min = isaacs_gap(reports[QviForm.LMAX], reports[QviForm.UMIN])
    tolerance = ctx.config.compare.tolerance
    payload: Dict[str, Any] = {
        "isaacs_gap_LU": gap_lu,
        "isaacs_gap_LmaxUmin": gap_max_min,
        "tolerance": tolerance,
        "within_tolerance": None if tolerance is None else bool(max(gap_lu, gap_max_min) <= tolerance),
    }
    ctx.write_json("compare.json", payload)
    logger.info(f"Isaacs gap L/U {gap_lu:.3e}, Lmax/Umin {gap_max_min:.3e}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunContext], int]] = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impulsegame",
        description="Grid solver for zero-sum differential games with continuous and impulse controls",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Logging level (default: $QVI_LOG_LEVEL or INFO)")
    parser.add_argument("--log-file", default=None, help="Also log to this file")

    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "Solve every configured form and write field CSVs and reports",
        "simulate": "Solve, extract the feedback policy and simulate a trajectory",
        "verify": "Run the structural checks on every configured form",
        "compare": "Report the lower/upper value gaps",
    }
    for name, text in helps.items():
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument("--config", required=True, help="Run configuration (JSON or YAML)")
        sub.add_argument("--out", default=None, help="Output directory (overrides 'outputs')")
        sub.add_argument("--threads", type=int, default=None, help="Worker threads per sweep")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """
    Execute one command line and return its exit code.

    Args:
        argv: Arguments without the program name; ``sys.argv[1:]`` when omitted
    """
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        configure_logging(args.log_level or os.environ.get(LOG_LEVEL_ENV, "INFO"), log_file=args.log_file)
    except ValueError as e:
        print(f"impulsegame: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        config_path = Path(args.config)
        config = load_config(config_path)
        out_dir = Path(args.out) if args.out else Path(config.outputs)
        ctx = RunContext(config, config_path, out_dir, resolve_threads(args.threads, config))
        return COMMANDS[args.command](ctx)
    except ValidationFailure as e:
        logger.error(f"validation failed: {e}")
        return EXIT_VALIDATION
    except DivergenceError as e:
        logger.error(f"divergence: {e}")
        return EXIT_DIVERGENCE
    except (ImpulseGameError, ValueError) as e:
        logger.error(str(e))
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
