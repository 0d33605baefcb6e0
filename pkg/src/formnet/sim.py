"""Per-epoch simulation loop and strategy comparison.

One epoch: sample link tokens, prune lost links, build the MST of the healthy
links, measure relative displacements, compensate lost links, run the
leader-anchored BLUE, apply the consensus law to the estimates, Euler step.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .control import DesiredFormation, control_velocity, formation_error, integrate_step, neighbor_sets
from .estimation import MeasurementSet, anchored_blue, link_variance, partition_incidence
from .graph import Configuration, FormationGraph, build_incidence, components, incidence_from_pairs, is_generically_rigid
from .loss import CompensationStrategy, Compensator, LossModel, sample_tokens, substitute_variance
from .mst import Disconnected, edge_weights, prune_unhealthy, spanning_forest

log = logging.getLogger(__name__)

# keeps P positive definite when sigma = 0 or a substitute matches its estimate
VARIANCE_FLOOR = 1e-12
# substitutes noisier than this multiple of a received packet are dropped
MAX_SUBSTITUTE_RATIO = 1e6
TOPOLOGIES = ("healthy", "mst")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    graph: FormationGraph
    formation: DesiredFormation
    initial_positions: np.ndarray
    noise_sigma: float = 0.01
    loss: LossModel = LossModel()
    strategy: CompensationStrategy = CompensationStrategy("combination", 0.5)
    control_topology: str = "healthy"
    estimation_topology: str = "mst"
    step_h: float = 0.05
    epochs: int = 50
    seed: int = 0
    halt_on_disconnect: bool = False

    def validate(self) -> list[str]:
        """Raise ScenarioError on hard errors; return soft warnings."""
        g = self.graph
        x0 = np.asarray(self.initial_positions, dtype=float)
        if x0.shape != (g.n, g.d):
            raise ScenarioError(f"initial positions have shape {x0.shape}, expected ({g.n}, {g.d})")
        if not np.all(np.isfinite(x0)):
            raise ScenarioError("initial positions must be finite")
        try:
            self.formation.check_against(g)
            self.loss.validate(g)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        if self.epochs < 1:
            raise ScenarioError(f"epochs must be >= 1, got {self.epochs}")
        if not self.noise_sigma >= 0:
            raise ScenarioError(f"noise sigma must be >= 0, got {self.noise_sigma}")
        if not self.step_h > 0:
            raise ScenarioError(f"step size must be > 0, got {self.step_h}")
        for name in ("control_topology", "estimation_topology"):
            if getattr(self, name) not in TOPOLOGIES:
                raise ScenarioError(f"{name} must be one of {TOPOLOGIES}, got {getattr(self, name)!r}")

        warnings = []
        if g.n >= 2:
            report = is_generically_rigid(g, Configuration(self.formation.offsets))
            if not report.rigid:
                warnings.append(
                    f"desired formation is not rigid: rank {report.rank} < required {report.required}"
                )
        H = build_incidence(g)
        if H.size:
            lam = float(np.linalg.eigvalsh(H.T @ H)[-1])
            if self.step_h * lam >= 2:
                warnings.append(f"step h={self.step_h} violates h * lambda_max = {self.step_h * lam:.3g} < 2")
        return warnings


@dataclass
class EpochRecord:
    epoch: int
    positions: np.ndarray
    estimates: np.ndarray  # NaN rows for agents cut off from the leader
    tokens: str
    tree: tuple
    mst_connected: bool
    formation_error: float
    estimation_error: np.ndarray
    cov_trace: float
    substituted: int = 0
    cold_starts: int = 0


@dataclass
class ScenarioResult:
    scenario: Scenario
    records: list = field(default_factory=list)

    def summary(self) -> dict:
        return summarize(
            [r.formation_error for r in self.records],
            [r.cov_trace for r in self.records],
            [r.mst_connected for r in self.records],
        )


def summarize(formation_errors, cov_traces, connected) -> dict:
    return {
        "epochs": len(formation_errors),
        "final_formation_error": float(formation_errors[-1]),
        "max_formation_error": float(max(formation_errors)),
        "mean_formation_error": math.fsum(formation_errors) / len(formation_errors),
        "final_cov_trace": float(cov_traces[-1]),
        "mean_cov_trace": math.fsum(cov_traces) / len(cov_traces),
        "disconnect_count": sum(1 for c in connected if not c),
    }


def noise_draw(seed: int, epoch: int, shape) -> np.ndarray:
    """Standard normal noise for every link at one epoch, independent of the loss stream."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 0x6E6F697365, epoch])
    return np.random.default_rng(ss).standard_normal(shape)


def _anchored_estimate(n, pairs, rows, leader, x_leader, d):
    """Anchored BLUE over the measured rows reachable from the leader.

    ``rows`` maps edge index to ``(value, per-coordinate variance)``. Agents
    outside the leader's component get NaN positions.
    """
    reach = next(c for c in components(n, [pairs[e] for e in rows]) if leader in c)
    local = {a: s for s, a in enumerate(reach)}
    edges = [e for e in sorted(rows) if pairs[e][0] in local]
    H = incidence_from_pairs([(local[pairs[e][0]], local[pairs[e][1]]) for e in edges], len(reach))
    Z = MeasurementSet.isotropic(
        np.array([rows[e][0] for e in edges]).reshape(len(edges), d),
        [rows[e][1] for e in edges],
    )
    est = anchored_blue(partition_incidence(H, local[leader]), x_leader, Z)
    xhat = np.full((n, d), np.nan)
    xhat[list(reach)] = est.positions
    return xhat, est, local


def run_scenario(scenario: Scenario) -> ScenarioResult:
    for w in scenario.validate():
        log.warning(w)
    g = scenario.graph
    n, d, leader = g.n, g.d, g.leader
    pairs = g.pairs
    loss = dataclasses.replace(scenario.loss, seed=scenario.seed)
    comp = Compensator(scenario.strategy, g.m, d)
    base_var = max(scenario.noise_sigma**2, VARIANCE_FLOOR)

    config = Configuration(scenario.initial_positions, 0)
    result = ScenarioResult(scenario)
    for k in range(1, scenario.epochs + 1):
        x = config.positions
        tokens = sample_tokens(loss, g, k)
        healthy = prune_unhealthy(g, tokens)
        tree, _, comps = spanning_forest(g, healthy, edge_weights(g, x))
        connected = len(comps) == 1
        if not connected and scenario.halt_on_disconnect:
            raise Disconnected(comps)

        # noise is drawn for every link, then discarded where the packet is lost
        eps = scenario.noise_sigma * noise_draw(scenario.seed, k, (g.m, d))
        z = np.array([x[i] - x[j] for i, j in pairs]).reshape(g.m, d) + eps

        rows = {}
        for e in healthy.edges:
            rows[e] = (comp.substitute(e, z[e]).value, base_var)
        if scenario.estimation_topology == "mst":
            rows = {e: rows[e] for e in tree}
        received = dict(rows)
        substituted = cold = 0
        for e, ok in enumerate(tokens.tokens):
            if ok:
                continue
            mem = comp.memory[e]
            sub = comp.substitute(e)
            var = substitute_variance(sub.value, mem.last_estimate, mem.estimate_var)
            if var is None or var > MAX_SUBSTITUTE_RATIO * base_var:
                continue
            rows[e] = (sub.value, max(var, VARIANCE_FLOOR))
            substituted += 1
            cold += sub.cold_start

        # link memory is refreshed from received packets only, so a substitute is
        # never judged against an estimate that already contains it
        prior = _anchored_estimate(n, pairs, received, leader, x[leader], d)
        xhat, est, local = _anchored_estimate(n, pairs, rows, leader, x[leader], d) if substituted else prior
        p_xhat, p_est, p_local = prior
        for e, (i, j) in enumerate(pairs):
            if i in p_local and j in p_local:
                comp.record_estimate(e, p_xhat[i] - p_xhat[j], link_variance(p_est, p_local[i], p_local[j]))
            else:
                comp.forget_estimate(e)

        ctrl_edges = healthy.edges if scenario.control_topology == "healthy" else tree
        nbrs = neighbor_sets(n, [pairs[e] for e in ctrl_edges if pairs[e][0] in local and pairs[e][1] in local])
        v = control_velocity(np.nan_to_num(xhat), scenario.formation, nbrs)

        result.records.append(EpochRecord(
            epoch=k,
            positions=x.copy(),
            estimates=xhat,
            tokens=tokens.bitstring(),
            tree=tree,
            mst_connected=connected,
            formation_error=formation_error(x, g),
            estimation_error=np.linalg.norm(xhat - x, axis=1),
            cov_trace=float(np.trace(est.covariance)),
            substituted=substituted,
            cold_starts=cold,
        ))
        config = integrate_step(config, v, scenario.step_h)
    return result


@dataclass
class ComparisonReport:
    rows: list  # one dict per strategy, input order
    ranking: list  # (rank, label) sorted by mean covariance trace; equal values share a rank
    tie: bool
    combination_beats_baselines: dict  # combination label -> bool, when zero and hold both ran
    shared_tokens: bool
    results: dict = field(repr=False, default_factory=dict)


def compare_strategies(base: Scenario, strategies) -> ComparisonReport:
    strategies = [CompensationStrategy.parse(s) if isinstance(s, str) else s for s in strategies]
    if not strategies:
        raise ValueError("need at least one strategy")
    results, rows = {}, []
    for s in strategies:
        try:
            res = run_scenario(dataclasses.replace(base, strategy=s))
        except Exception as exc:
            raise RuntimeError(f"strategy {s.label}: {exc}") from exc
        results[s.label] = res
        rows.append({"strategy": s.label, **res.summary()})

    ordered = sorted(rows, key=lambda r: r["mean_cov_trace"])
    ranking, rank, prev = [], 0, None
    for pos, r in enumerate(ordered, 1):
        if r["mean_cov_trace"] != prev:
            rank, prev = pos, r["mean_cov_trace"]
        ranking.append((rank, r["strategy"]))
    tie = len(rows) > 1 and len({r["mean_cov_trace"] for r in rows}) == 1

    by_label = {r["strategy"]: r["mean_cov_trace"] for r in rows}
    beats = {}
    if "zero" in by_label and "hold" in by_label:
        floor = min(by_label["zero"], by_label["hold"])
        beats = {lab: val < floor for lab, val in by_label.items() if lab.startswith("combination")}

    streams = [[r.tokens for r in res.records] for res in results.values()]
    shared = all(s == streams[0] for s in streams)
    return ComparisonReport(rows, ranking, tie, beats, shared, results)
