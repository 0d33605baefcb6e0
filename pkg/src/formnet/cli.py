"""formnet command line: rigidity, mst, simulate, compare, validate.

Exit codes: 0 success or affirmative verdict, 2 negative verdict (not rigid,
disconnected), 1 error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
from pathlib import Path

from .graph import Configuration, GraphError, is_generically_rigid
from .io import ScenarioFileError, load_scenario, validate_bundle, write_bundle, write_json
from .loss import CompensationStrategy
from .mst import Disconnected, LinkTokenVector, build_mst, edge_weights, prune_unhealthy
from .sim import compare_strategies, run_scenario

OK, ERROR, NEGATIVE = 0, 1, 2
DEFAULT_STRATEGIES = ("zero", "hold", "combination:0.5")


class CliError(Exception):
    pass


def _emit(rows, fmt, text):
    if fmt == "json":
        print(json.dumps(rows, indent=2, sort_keys=True))
    elif fmt == "csv":
        rows = rows if isinstance(rows, list) else [rows]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
        sys.stdout.write(buf.getvalue())
    else:
        print(text)


def _resolve_seed(args, raw):
    if args.seed is not None:
        return args.seed, "flag"
    env = os.environ.get("FORMNET_SEED")
    if env is not None:
        try:
            return int(env), "FORMNET_SEED"
        except ValueError:
            raise CliError(f"FORMNET_SEED must be an integer, got {env!r}") from None
    return raw.get("seed", 0), "scenario"


def _load(args):
    scenario, raw = load_scenario(args.scenario)
    seed, source = _resolve_seed(args, raw)
    if not 0 <= seed < 2**64:
        raise CliError(f"seed must be an unsigned 64-bit integer, got {seed}")
    meta = {"seed_source": source}
    if "FORMNET_SEED" in os.environ:
        meta["FORMNET_SEED"] = os.environ["FORMNET_SEED"]
    return dataclasses.replace(scenario, seed=seed), raw, meta


def _agents(c):
    return "{" + ",".join(str(i + 1) for i in c) + "}"


def _edge_name(graph, k):
    i, j = graph.pairs[k]
    return f"({i + 1},{j + 1})"


def cmd_rigidity(args) -> int:
    scenario, _, _ = _load(args)
    g = scenario.graph
    rep = is_generically_rigid(g, Configuration(scenario.formation.offsets))
    verdict = "RIGID" if rep.rigid else "NOT RIGID"
    text = f"rank {rep.rank} / required {rep.required} -> {verdict}"
    if rep.degenerate_placement:
        text += " (degenerate placement: generic rank differs)"
    _emit(
        {"rank": rep.rank, "required": rep.required, "rigid": rep.rigid,
         "degenerate_placement": rep.degenerate_placement},
        args.format, text,
    )
    return OK if rep.rigid else NEGATIVE


def _parse_tokens(spec, graph):
    if spec is None:
        return LinkTokenVector((True,) * graph.m)
    if set(spec) <= {"0", "1"}:
        if len(spec) != graph.m:
            raise CliError(f"token bitstring has length {len(spec)}, graph has {graph.m} edges")
        return LinkTokenVector.from_bitstring(spec)
    # named failed edges: "1-2,3-5"
    bits = [True] * graph.m
    for item in spec.split(","):
        try:
            i, j = (int(s) for s in item.split("-"))
            bits[graph.edge_index(i - 1, j - 1)] = False
        except (ValueError, KeyError):
            raise CliError(f"bad token spec {item!r}: use a bitstring or failed edges like 1-2,3-5") from None
    return LinkTokenVector(tuple(bits))


def cmd_mst(args) -> int:
    scenario, _, _ = _load(args)
    g = scenario.graph
    tokens = _parse_tokens(args.tokens, g)
    healthy = prune_unhealthy(g, tokens)
    weights = edge_weights(g, scenario.initial_positions)
    retained = [_edge_name(g, k) for k in healthy.edges]
    try:
        tree = build_mst(g, healthy, weights)
    except Disconnected as exc:
        text = "DISCONNECTED: " + " | ".join(_agents(c) for c in exc.components)
        _emit({"retained": retained, "healthy_count": healthy.healthy_count, "connected": False,
               "components": [[i + 1 for i in c] for c in exc.components]}, args.format, text)
        return NEGATIVE
    tree_names = [_edge_name(g, k) for k in tree.edges]
    text = (
        f"retained {healthy.healthy_count}/{g.m}: {' '.join(retained)}\n"
        f"tree: {' '.join(tree_names)}\n"
        f"total weight: {tree.total_weight:g}"
    )
    _emit({"retained": retained, "healthy_count": healthy.healthy_count, "connected": True,
           "tree": tree_names, "total_weight": tree.total_weight}, args.format, text)
    return OK


def cmd_simulate(args) -> int:
    scenario, raw, meta = _load(args)
    result = run_scenario(scenario)
    summary = write_bundle(result, args.out, config=raw, extra=meta)
    s = summary["summary"]
    text = (
        f"{scenario.strategy.label}: final formation error {s['final_formation_error']:.6g}, "
        f"mean cov trace {s['mean_cov_trace']:.6g}, disconnects {s['disconnect_count']}"
    )
    _emit({"strategy": scenario.strategy.label, "seed": scenario.seed, **s}, args.format, text)
    return OK


def _strategy_list(items):
    names = [s for item in items for s in item.split(",") if s]
    try:
        return [CompensationStrategy.parse(s) for s in names]
    except ValueError as exc:
        raise CliError(str(exc)) from None


def cmd_compare(args) -> int:
    strategies = _strategy_list(args.strategies or DEFAULT_STRATEGIES)
    if not strategies:
        raise CliError("no strategies given")
    scenario, raw, meta = _load(args)
    report = compare_strategies(scenario, strategies)
    out = Path(args.out)
    for label, res in report.results.items():
        write_bundle(res, out / label.replace(":", "_"), config=raw, extra=meta)
    payload = {
        "rows": report.rows,
        "ranking": [{"rank": r, "strategy": s} for r, s in report.ranking],
        "tie": report.tie,
        "combination_beats_baselines": report.combination_beats_baselines,
        "shared_tokens": report.shared_tokens,
        "seed": scenario.seed,
        **meta,
    }
    write_json(payload, out / "comparison.json")

    lines = [f"{'rank':>4}  {'strategy':<18} {'mean cov trace':>16} {'final form. err':>16}"]
    rows = {r["strategy"]: r for r in report.rows}
    for rank, label in report.ranking:
        r = rows[label]
        lines.append(f"{rank:>4}  {label:<18} {r['mean_cov_trace']:>16.6g} {r['final_formation_error']:>16.6g}")
    if report.tie:
        lines.append("TIE: all strategies have identical mean covariance trace")
    _emit(report.rows, args.format, "\n".join(lines))
    return OK


def cmd_validate(args) -> int:
    problems = validate_bundle(args.out)
    for p in problems:
        print(p)
    if problems:
        return ERROR
    print("summary.json matches timeseries.csv")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="formnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help, scenario=True, out=False):
        sp = sub.add_parser(name, help=help)
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario JSON file")
            sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--format", choices=("csv", "json"), default=None, help="machine-readable stdout")
        sp.set_defaults(func=func)
        return sp

    add("rigidity", cmd_rigidity, "rank test of the desired formation")
    sp = add("mst", cmd_mst, "prune lost links and build the MST")
    sp.add_argument("--tokens", default=None, help="bitstring per edge, or failed edges like 1-2,3-5")
    add("simulate", cmd_simulate, "run one scenario", out=True)
    sp = add("compare", cmd_compare, "run one scenario per strategy", out=True)
    sp.add_argument("--strategies", nargs="+", default=None, help="zero hold combination[:gamma]")
    add("validate", cmd_validate, "check summary.json against timeseries.csv", scenario=False, out=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, ScenarioFileError, GraphError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR
    except (ValueError, RuntimeError, Disconnected) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
