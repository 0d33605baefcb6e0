"""Scenario files (JSON) and result bundles (timeseries.csv + summary.json)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .control import DesiredFormation
from .graph import FormationGraph, GraphError
from .loss import CompensationStrategy, LossModel
from .sim import Scenario, ScenarioResult, summarize

TOP_KEYS = {
    "description", "agents", "edges", "leader", "desired_offsets", "initial_positions",
    "noise_sigma", "loss", "strategy", "control_topology", "estimation_topology",
    "step_h", "epochs", "seed", "halt_on_disconnect",
}
REQUIRED = ("agents", "edges", "desired_offsets", "initial_positions")
LOSS_KEYS = {"type", "p", "failed_edges", "schedule"}
STRATEGY_KEYS = {"type", "gamma"}
AXES = "xyz"


class ScenarioFileError(ValueError):
    pass


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ScenarioFileError(f"{where}: expected an object")
    for key in obj:
        if key not in allowed:
            raise ScenarioFileError(f"{where}: unknown key {key!r}")


def _agent(idx, n, where):
    if not isinstance(idx, int) or isinstance(idx, bool) or not 1 <= idx <= n:
        raise ScenarioFileError(f"{where}: agent index {idx!r} must be an integer in 1..{n}")
    return idx - 1


def _points(raw, n, d, key):
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioFileError(f"{key}: expected a list of {n} numeric {d}-vectors") from None
    if arr.shape != (n, d):
        raise ScenarioFileError(f"{key}: expected shape ({n}, {d}), got {arr.shape}")
    return arr


def _number(raw, key, default, kind=float):
    val = raw.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioFileError(f"{key}: expected a number, got {val!r}")
    if kind is int and val != int(val):
        raise ScenarioFileError(f"{key}: expected an integer, got {val!r}")
    return kind(val)


def parse_scenario(raw: dict) -> Scenario:
    _reject_unknown(raw, TOP_KEYS, "scenario")
    for key in REQUIRED:
        if key not in raw:
            raise ScenarioFileError(f"scenario: missing required key {key!r}")
    agents = raw["agents"]
    _reject_unknown(agents, {"count", "dimension"}, "agents")
    n = agents.get("count")
    d = agents.get("dimension", 2)
    if not isinstance(n, int) or n < 1:
        raise ScenarioFileError(f"agents.count: expected a positive integer, got {n!r}")
    if d not in (2, 3):
        raise ScenarioFileError(f"agents.dimension: must be 2 or 3, got {d!r}")

    offsets = _points(raw["desired_offsets"], n, d, "desired_offsets")
    x0 = _points(raw["initial_positions"], n, d, "initial_positions")

    pairs, weights = [], []
    if not isinstance(raw["edges"], list):
        raise ScenarioFileError("edges: expected a list of [i, j] or [i, j, weight]")
    for k, item in enumerate(raw["edges"]):
        where = f"edges[{k}]"
        if not isinstance(item, list) or len(item) not in (2, 3):
            raise ScenarioFileError(f"{where}: expected [i, j] or [i, j, weight]")
        pairs.append((_agent(item[0], n, where), _agent(item[1], n, where)))
        w = item[2] if len(item) == 3 else None
        if w is not None and (isinstance(w, bool) or not isinstance(w, (int, float))):
            raise ScenarioFileError(f"{where}: weight must be a number")
        weights.append(None if w is None else float(w))
    leader = _agent(raw.get("leader", 1), n, "leader")
    try:
        graph = FormationGraph.from_offsets(offsets, pairs, leader=leader, weights=weights)
    except GraphError as exc:
        raise ScenarioFileError(f"edges: {exc}") from None

    def edge_of(item, where):
        if not isinstance(item, list) or len(item) < 2:
            raise ScenarioFileError(f"{where}: expected an agent pair [i, j]")
        i, j = _agent(item[0], n, where), _agent(item[1], n, where)
        try:
            return graph.edge_index(i, j)
        except KeyError:
            raise ScenarioFileError(f"{where}: no edge between agents {i + 1} and {j + 1}") from None

    loss_raw = raw.get("loss", {"type": "none"})
    _reject_unknown(loss_raw, LOSS_KEYS, "loss")
    kind = loss_raw.get("type", "none")
    try:
        if kind == "bernoulli":
            loss = LossModel("bernoulli", p=_number(loss_raw, "p", 0.0))
        elif kind == "persistent":
            failed = [edge_of(it, f"loss.failed_edges[{q}]") for q, it in enumerate(loss_raw.get("failed_edges", []))]
            loss = LossModel("persistent", failed=frozenset(failed))
        elif kind == "scheduled":
            sched = []
            for q, it in enumerate(loss_raw.get("schedule", [])):
                where = f"loss.schedule[{q}]"
                if not isinstance(it, list) or len(it) != 4:
                    raise ScenarioFileError(f"{where}: expected [i, j, start_epoch, end_epoch]")
                sched.append((edge_of(it[:2], where), int(it[2]), int(it[3])))
            loss = LossModel("scheduled", schedule=tuple(sched))
        elif kind == "none":
            loss = LossModel()
        else:
            raise ScenarioFileError(f"loss.type: unknown loss model {kind!r}")
    except ValueError as exc:
        if isinstance(exc, ScenarioFileError):
            raise
        raise ScenarioFileError(f"loss: {exc}") from None

    strat_raw = raw.get("strategy", {"type": "combination", "gamma": 0.5})
    _reject_unknown(strat_raw, STRATEGY_KEYS, "strategy")
    stype = str(strat_raw.get("type", "combination"))
    try:
        if "gamma" in strat_raw:
            if stype not in ("combination",):
                raise ScenarioFileError("strategy.gamma: only valid for the combination strategy")
            strategy = CompensationStrategy("combination", _number(strat_raw, "gamma", 0.5))
        else:
            strategy = CompensationStrategy.parse(stype)
    except ValueError as exc:
        if isinstance(exc, ScenarioFileError):
            raise
        raise ScenarioFileError(f"strategy: {exc}") from None

    scenario = Scenario(
        graph=graph,
        formation=DesiredFormation(offsets),
        initial_positions=x0,
        noise_sigma=_number(raw, "noise_sigma", 0.01),
        loss=loss,
        strategy=strategy,
        control_topology=raw.get("control_topology", "healthy"),
        estimation_topology=raw.get("estimation_topology", "mst"),
        step_h=_number(raw, "step_h", 0.05),
        epochs=_number(raw, "epochs", 50, int),
        seed=_number(raw, "seed", 0, int),
        halt_on_disconnect=bool(raw.get("halt_on_disconnect", False)),
    )
    try:
        scenario.validate()
    except ValueError as exc:
        raise ScenarioFileError(str(exc)) from None
    return scenario


def load_scenario(path) -> tuple[Scenario, dict]:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_scenario(raw), raw


def _fmt(v) -> str:
    return repr(float(v))


def timeseries_header(d: int) -> list[str]:
    return (
        ["epoch", "agent"]
        + [f"true_{a}" for a in AXES[:d]]
        + [f"est_{a}" for a in AXES[:d]]
        + ["est_error", "formation_error", "cov_trace", "mst_connected", "tokens"]
    )


def write_timeseries(result: ScenarioResult, path):
    d = result.scenario.graph.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(timeseries_header(d))
        for rec in result.records:
            for i in range(rec.positions.shape[0]):
                w.writerow(
                    [rec.epoch, i + 1]
                    + [_fmt(v) for v in rec.positions[i]]
                    + [_fmt(v) for v in rec.estimates[i]]
                    + [_fmt(rec.estimation_error[i]), _fmt(rec.formation_error), _fmt(rec.cov_trace),
                       int(rec.mst_connected), rec.tokens]
                )


def write_bundle(result: ScenarioResult, out_dir, config: dict | None = None, extra: dict | None = None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_timeseries(result, out / "timeseries.csv")
    sc = result.scenario
    summary = {
        "tool": "formnet",
        "version": __version__,
        "seed": sc.seed,
        "strategy": sc.strategy.label,
        "config": config,
        "summary": result.summary(),
    }
    summary.update(extra or {})
    write_json(summary, out / "summary.json")
    return summary


def write_json(obj, path):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def summary_from_csv(path) -> dict:
    """Recompute the run aggregates from a timeseries.csv."""
    per_epoch = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            per_epoch.setdefault(int(row["epoch"]), row)
    epochs = [per_epoch[k] for k in sorted(per_epoch)]
    return summarize(
        [float(r["formation_error"]) for r in epochs],
        [float(r["cov_trace"]) for r in epochs],
        [r["mst_connected"] == "1" for r in epochs],
    )


def validate_bundle(out_dir) -> list[str]:
    """Mismatches between summary.json and the aggregates recomputed from CSV."""
    out = Path(out_dir)
    stored = json.loads((out / "summary.json").read_text())["summary"]
    fresh = summary_from_csv(out / "timeseries.csv")
    problems = []
    for key in sorted(set(stored) | set(fresh)):
        a, b = stored.get(key), fresh.get(key)
        same = a == b or (isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b))
        if not same:
            problems.append(f"{key}: summary.json has {a!r}, timeseries.csv gives {b!r}")
    return problems
