"""Command-line surface: ingest votes, dispatch solvers, emit reports.

Subcommands map one-to-one onto the library layers:

* ``solve``      -- equilibrium solver for smooth families + residual certificate
* ``solve-sat``  -- saturating-utilities heuristic + convergence trace CSV
* ``check-core`` -- residual certificate and (when small enough) the brute-force
                    blocking-coalition search for a given allocation
* ``mechanism``  -- randomized approximately-truthful selection + diagnostics
* ``compare``    -- Core vs Welfare rankings, rounded outcomes, similarity table
* ``analyze``    -- pairwise independence tests + clustering merge list
* ``gen``        -- synthetic votes CSV from a named profile

Every run writes a JSON report that is byte-identical across repeat runs with
the same inputs, seed, and config, except for the ``timing`` block.  Failures
print a machine-readable error JSON and exit nonzero.  Money is parsed into
integer cents at the boundary and converted back only for solvers, so repeated
IO round-trips cannot drift budgets.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .aggregation import (
    Scheme,
    chi2_pairwise,
    compare_schemes,
    rank_and_round,
    vote_counts,
)
from .ballots import BallotError, gen_synthetic, parse_votes, write_votes
from .coreverify import (
    InstanceTooLarge,
    certify_from_residual,
    find_deviation_continuous,
)
from .lindahl import SolverConfig, lindahl_residuals, solve_potential, solve_proportional_fairness
from .mechanism import MechanismConfig, MechanismError, approximation_certificate, sample_mechanism
from .model import Allocation, Instance, make_model
from .saturating import HeuristicConfig, heuristic_solve

__all__ = ["CliError", "ElectionConfig", "main", "run_command"]


class CliError(ValueError):
    """Bad command-line usage or configuration."""


def _to_cents(value, what: str) -> int:
    try:
        cents = round(float(value) * 100)
    except (TypeError, ValueError):
        raise CliError(f"{what} must be a number, got {value!r}") from None
    if cents <= 0:
        raise CliError(f"{what} must be positive, got {value!r}")
    return int(cents)


@dataclass(frozen=True)
class ElectionConfig:
    """Parsed run configuration; money held as integer cents."""

    budget_cents: int = 100
    item_sizes_cents: Optional[dict] = None  # name -> cents
    model_family: str = "linear"
    model_params: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    heuristic: dict = field(default_factory=dict)
    mechanism: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def budget(self) -> float:
        return self.budget_cents / 100.0

    @staticmethod
    def from_file(path) -> "ElectionConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as e:
                raise CliError(f"config {path}: invalid JSON ({e})") from None
        return ElectionConfig.from_dict(raw, source=str(path))

    @staticmethod
    def from_dict(raw: dict, source: str = "<dict>") -> "ElectionConfig":
        if not isinstance(raw, dict):
            raise CliError(f"config {source}: expected a JSON object")
        known = {"budget", "items", "utility_model", "solver", "heuristic", "mechanism", "seed"}
        unknown = set(raw) - known
        if unknown:
            raise CliError(f"config {source}: unknown keys {sorted(unknown)}")
        budget_cents = _to_cents(raw.get("budget", 1.0), "budget")
        sizes = None
        if "items" in raw:
            sizes = {}
            for entry in raw["items"]:
                name = entry.get("name")
                if not name:
                    raise CliError(f"config {source}: item entry missing 'name'")
                if name in sizes:
                    raise CliError(f"config {source}: duplicate item {name!r}")
                sizes[name] = (
                    _to_cents(entry["size"], f"size of {name!r}") if "size" in entry else None
                )
        model = dict(raw.get("utility_model", {"family": "linear"}))
        family = model.pop("family", "linear")
        return ElectionConfig(
            budget_cents=budget_cents,
            item_sizes_cents=sizes,
            model_family=family,
            model_params=model,
            solver=dict(raw.get("solver", {})),
            heuristic=dict(raw.get("heuristic", {})),
            mechanism=dict(raw.get("mechanism", {})),
            seed=int(raw.get("seed", 0)),
        )

    def echo(self) -> dict:
        return {
            "budget_cents": self.budget_cents,
            "items": None
            if self.item_sizes_cents is None
            else [{"name": n, "size_cents": c} for n, c in self.item_sizes_cents.items()],
            "utility_model": {"family": self.model_family, **self.model_params},
            "solver": self.solver,
            "heuristic": self.heuristic,
            "mechanism": self.mechanism,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# Report plumbing
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Allocation):
        return {"kind": obj.kind.value, "x": [float(v) for v in obj.x]}
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_report(out_dir: Path, report: dict, started: float) -> Path:
    report = _jsonable(report)
    report["timing"] = {"seconds": round(time.perf_counter() - started, 6)}
    path = out_dir / "report.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_trace(out_dir: Path, trace, name: str = "trace.csv") -> str:
    path = out_dir / name
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,max_violation\n")
        for it, viol in trace:
            fh.write(f"{int(it)},{viol:.12g}\n")
    return str(path)


def _load_instance(args, cfg: ElectionConfig) -> tuple[Instance, dict]:
    if not getattr(args, "votes", None):
        raise CliError("this command needs --votes PATH")
    matrix, names, _ = parse_votes(args.votes)
    sizes = None
    if cfg.item_sizes_cents is not None:
        unknown = [n for n in names if n not in cfg.item_sizes_cents]
        if unknown:
            raise CliError(f"unknown item column(s) not in config: {unknown}")
        missing = [n for n in cfg.item_sizes_cents if n not in names]
        if missing:
            raise CliError(f"config item(s) missing from votes file: {missing}")
        cents = [cfg.item_sizes_cents[n] for n in names]
        if all(c is not None for c in cents):
            sizes = np.array([c / 100.0 for c in cents])
        elif any(c is not None for c in cents):
            raise CliError("either all config items need sizes or none")
    inst = Instance(
        utilities=matrix, budget=cfg.budget, sizes=sizes, item_names=tuple(names)
    )
    meta = {
        "votes": str(args.votes),
        "sha256": _sha256(args.votes),
        "voters": inst.n,
        "items": inst.k,
    }
    return inst, meta


def _base_report(command: str, cfg: ElectionConfig, input_meta: dict) -> dict:
    return {
        "tool": {"name": "budgetcore", "version": __version__},
        "command": command,
        "config": cfg.echo(),
        "input": input_meta,
        "artifacts": {},
        "result": {},
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_solve(args, cfg: ElectionConfig, out_dir: Path) -> dict:
    inst, meta = _load_instance(args, cfg)
    model = make_model(inst, cfg.model_family, **cfg.model_params)
    solver_cfg = SolverConfig(seed=cfg.seed, **cfg.solver)
    solve = solve_proportional_fairness if model.homogeneous else solve_potential
    result = solve(inst, model, solver_cfg)
    cert = certify_from_residual(inst, model, result.x)
    report = _base_report("solve", cfg, meta)
    report["artifacts"]["trace_csv"] = _write_trace(out_dir, result.objective_trace)
    report["result"] = {
        "allocation": result.x,
        "item_names": list(inst.item_names),
        "residuals": result.residuals,
        "max_residual": float(np.max(result.residuals)),
        "iterations": result.iterations,
        "converged": result.converged,
        "certificate": {
            "epsilon": cert.epsilon,
            "budget_total": cert.budget_total,
            "budget_cap": cert.budget_cap,
            "budget_ok": cert.budget_ok,
            "guarantee": cert.guarantee,
        },
    }
    return report


def _cmd_solve_sat(args, cfg: ElectionConfig, out_dir: Path) -> dict:
    inst, meta = _load_instance(args, cfg)
    inst.require_sizes()
    heur_cfg = HeuristicConfig(seed=cfg.seed, **cfg.heuristic)
    result = heuristic_solve(inst, heur_cfg)
    report = _base_report("solve-sat", cfg, meta)
    report["artifacts"]["trace_csv"] = _write_trace(out_dir, result.max_violation_trace)
    report["result"] = {
        "allocation": result.x,
        "item_names": list(inst.item_names),
        "prices_y": result.y,
        "converged": result.converged,
        "sweeps": len(result.max_violation_trace),
        "budget_flagged": result.budget_flagged,
        "max_violation": float(result.max_violation_trace[-1][1])
        if result.max_violation_trace
        else None,
    }
    return report


def _read_allocation(path, k: int) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        raw = raw.get("x", raw.get("allocation"))
    x = np.asarray(raw, dtype=float).reshape(-1)
    if x.size != k:
        raise CliError(f"allocation file has {x.size} entries, expected {k}")
    return x


def _cmd_check_core(args, cfg: ElectionConfig, out_dir: Path) -> dict:
    inst, meta = _load_instance(args, cfg)
    if not args.allocation:
        raise CliError("check-core needs --allocation PATH (JSON spend vector)")
    x = _read_allocation(args.allocation, inst.k)
    model = make_model(inst, cfg.model_family, **cfg.model_params)
    report = _base_report("check-core", cfg, meta)
    report["input"]["allocation"] = str(args.allocation)
    cert = certify_from_residual(inst, model, x)
    result = {
        "allocation": x,
        "certificate": {
            "epsilon": cert.epsilon,
            "budget_total": cert.budget_total,
            "budget_cap": cert.budget_cap,
            "budget_ok": cert.budget_ok,
            "guarantee": cert.guarantee,
        },
    }
    try:
        dev = find_deviation_continuous(
            inst, model, x, grid_steps=args.grid, mode=args.mode, threshold=args.threshold
        )
        if dev is None:
            result["deviation"] = None
        else:
            result["deviation"] = {
                "coalition": list(dev.coalition),
                "y": dev.y,
                "min_gain": dev.min_gain,
                "mode": dev.mode,
            }
    except InstanceTooLarge as e:
        result["deviation_search_skipped"] = str(e)
    report["result"] = result
    return report


def _cmd_mechanism(args, cfg: ElectionConfig, out_dir: Path) -> dict:
    inst, meta = _load_instance(args, cfg)
    mech_cfg = MechanismConfig(seed=cfg.seed, **cfg.mechanism)
    allocation, diagnostics = sample_mechanism(inst, mech_cfg)
    report = _base_report("mechanism", cfg, meta)
    result = {
        "allocation": allocation,
        "item_names": list(inst.item_names),
        "diagnostics": diagnostics,
    }
    try:
        result["core_bound"] = approximation_certificate(inst, allocation, mech_cfg)
    except MechanismError as e:
        result["core_bound_unavailable"] = str(e)
    report["result"] = result
    return report


def _cmd_compare(args, cfg: ElectionConfig, out_dir: Path) -> dict:
    inst, meta = _load_instance(args, cfg)
    sizes = inst.require_sizes()
    heur_cfg = HeuristicConfig(seed=cfg.seed, **cfg.heuristic)
    core_solution = heuristic_solve(inst, heur_cfg)
    core = rank_and_round(inst, Scheme.CORE, fractional_core=core_solution.x)
    welfare = rank_and_round(inst, Scheme.WELFARE)
    similarity = compare_schemes(core, welfare, inst.budget)

    votes = vote_counts(inst)
    core_fill = core.fractional.x / sizes
    welfare_fill = welfare.fractional.x / sizes
    table_path = out_dir / "compare.csv"
    order = np.lexsort((np.arange(inst.k), -core_fill))
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("Project,Budget,Votes,Core,Welfare\n")
        for j in order:
            fh.write(
                f"{inst.item_names[j]},{sizes[j]:.2f},{int(votes[j])},"
                f"{core_fill[j]:.2f},{welfare_fill[j]:.2f}\n"
            )

    report = _base_report("compare", cfg, meta)
    report["artifacts"]["table_csv"] = str(table_path)
    report["result"] = {
        "core": {
            "order": core.order,
            "fractional": core.fractional,
            "integral": core.integral,
            "converged": core_solution.converged,
        },
        "welfare": {
            "order": welfare.order,
            "fractional": welfare.fractional,
            "integral": welfare.integral,
        },
        "similarity": {
            "jaccard": similarity.jaccard,
            "budget_similarity": similarity.budget_similarity,
        },
    }
    return report


def _cmd_analyze(args, cfg: ElectionConfig, out_dir: Path) -> dict:
    inst, meta = _load_instance(args, cfg)
    rep = chi2_pairwise(inst, dof=args.dof, alpha=args.alpha)
    dendro_path = out_dir / "dendrogram.csv"
    with open(dendro_path, "w", encoding="utf-8") as fh:
        fh.write("cluster_a,cluster_b,height\n")
        for a, b, h in rep.merges:
            fh.write(f"{a},{b},{h:.6g}\n")
    report = _base_report("analyze", cfg, meta)
    report["artifacts"]["dendrogram_csv"] = str(dendro_path)
    report["result"] = {
        "p_values": [[None if not np.isfinite(v) else float(v) for v in row] for row in rep.p_values],
        "correlated": rep.correlated,
        "merges": rep.merges,
        "clustered_items": rep.clustered_items,
        "degenerate_items": rep.degenerate_items,
        "dof": rep.dof,
        "alpha": rep.alpha,
        "sample_ok": rep.sample_ok,
    }
    return report


def _cmd_gen(args, cfg: ElectionConfig, out_dir: Path) -> dict:
    params = {}
    for pair in args.param or []:
        if "=" not in pair:
            raise CliError(f"--param expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    inst = gen_synthetic(
        args.profile, n=args.n, k=args.k, seed=cfg.seed, budget=cfg.budget, **params
    )
    votes_path = out_dir / "votes.csv"
    write_votes(votes_path, inst.utilities, inst.item_names)
    # Companion config in the same schema --config accepts, so the pair can be
    # fed straight back into the other subcommands.
    config_path = out_dir / "config.json"
    feedback = {"budget": inst.budget, "seed": cfg.seed}
    if inst.sizes is not None:
        feedback["items"] = [
            {"name": name, "size": round(float(size), 2)}
            for name, size in zip(inst.item_names, inst.sizes)
        ]
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(feedback), fh, indent=2, sort_keys=True)
        fh.write("\n")
    report = _base_report("gen", cfg, {"generated": True})
    report["artifacts"]["votes_csv"] = str(votes_path)
    report["artifacts"]["config_json"] = str(config_path)
    report["result"] = {
        "profile": args.profile,
        "voters": inst.n,
        "items": inst.k,
        "sha256": _sha256(votes_path),
        "sizes": inst.sizes,
    }
    return report


_COMMANDS = {
    "solve": _cmd_solve,
    "solve-sat": _cmd_solve_sat,
    "check-core": _cmd_check_core,
    "mechanism": _cmd_mechanism,
    "compare": _cmd_compare,
    "analyze": _cmd_analyze,
    "gen": _cmd_gen,
}


def run_command(command: str, args, cfg: ElectionConfig, out_dir: Path) -> Path:
    """Dispatch one subcommand and write its report; returns the report path."""
    started = time.perf_counter()
    out_dir.mkdir(parents=True, exist_ok=True)
    report = _COMMANDS[command](args, cfg, out_dir)
    return _write_report(out_dir, report, started)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="budgetcore",
        description="Fair participatory-budgeting allocations: solvers, "
        "verification, randomized mechanism, aggregation analysis.",
    )
    parser.add_argument("--version", action="version", version=f"budgetcore {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, votes=True):
        if votes:
            p.add_argument("--votes", help="votes CSV (header: voter_id,<items...>)")
        p.add_argument("--config", help="election config JSON")
        p.add_argument(
            "--out",
            default=os.environ.get("BUDGETCORE_OUT", "."),
            help="output directory (default: $BUDGETCORE_OUT or current dir)",
        )
        p.add_argument("--seed", type=int, help="override config seed")

    common(sub.add_parser("solve", help="equilibrium solver + core certificate"))
    common(sub.add_parser("solve-sat", help="saturating-utilities heuristic"))

    p = sub.add_parser("check-core", help="verify an allocation against coalitions")
    common(p)
    p.add_argument("--allocation", help="JSON file with the spend vector")
    p.add_argument("--grid", type=int, default=100, help="deviation search grid steps")
    p.add_argument("--mode", choices=["additive", "multiplicative"], default="additive")
    p.add_argument("--threshold", type=float, default=1e-3, help="blocking margin")

    common(sub.add_parser("mechanism", help="randomized approximately-truthful draw"))
    common(sub.add_parser("compare", help="Core vs Welfare rankings and similarity"))

    p = sub.add_parser("analyze", help="pairwise independence tests + clustering")
    common(p)
    p.add_argument("--dof", type=int, default=2, help="chi-squared degrees of freedom")
    p.add_argument("--alpha", type=float, default=0.1, help="correlation p-value cutoff")

    p = sub.add_parser("gen", help="generate synthetic votes")
    common(p, votes=False)
    p.add_argument("--profile", required=True, help="synthetic profile name")
    p.add_argument("--n", type=int, required=True, help="number of voters")
    p.add_argument("--k", type=int, help="number of items (fixed for figure profiles)")
    p.add_argument("--budget", type=float, help="budget override (dollars)")
    p.add_argument(
        "--param",
        action="append",
        metavar="KEY=VALUE",
        help="extra profile parameter (repeatable), e.g. p=0.3",
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = (
            ElectionConfig.from_file(args.config)
            if args.config
            else ElectionConfig.from_dict({}, source="<defaults>")
        )
        if args.seed is not None:
            cfg = ElectionConfig(
                budget_cents=cfg.budget_cents,
                item_sizes_cents=cfg.item_sizes_cents,
                model_family=cfg.model_family,
                model_params=cfg.model_params,
                solver=cfg.solver,
                heuristic=cfg.heuristic,
                mechanism=cfg.mechanism,
                seed=args.seed,
            )
        if getattr(args, "budget", None) is not None:
            cfg = ElectionConfig(
                budget_cents=_to_cents(args.budget, "budget"),
                item_sizes_cents=cfg.item_sizes_cents,
                model_family=cfg.model_family,
                model_params=cfg.model_params,
                solver=cfg.solver,
                heuristic=cfg.heuristic,
                mechanism=cfg.mechanism,
                seed=cfg.seed,
            )
        report_path = run_command(args.command, args, cfg, Path(args.out))
    except (ValueError, OSError) as e:
        # Covers CliError, BallotError, model/solver validation errors, and IO.
        error = {"error": {"type": type(e).__name__, "message": str(e)}}
        print(json.dumps(error, indent=2, sort_keys=True))
        return 1
    with open(report_path, "r", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 0


if __name__ == "__main__":
    sys.exit(main())
