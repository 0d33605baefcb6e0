"""Link loss models and receiver-side compensation for lost packets."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .graph import FormationGraph
from .mst import LinkTokenVector

LOSS_KINDS = ("none", "bernoulli", "persistent", "scheduled")
STRATEGY_KINDS = ("to_zero", "to_hold", "combination")


@dataclass(frozen=True)
class LossModel:
    kind: str = "none"
    p: float = 0.0
    failed: frozenset = frozenset()  # edge indices
    schedule: tuple = ()  # (edge index, first epoch, last epoch), inclusive
    seed: int = 0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss model {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"drop probability must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "failed", frozenset(self.failed))
        object.__setattr__(self, "schedule", tuple(tuple(w) for w in self.schedule))
        for edge, start, end in self.schedule:
            if start > end:
                raise ValueError(f"schedule window for edge {edge} has start {start} > end {end}")

    def validate(self, graph: FormationGraph):
        for k in list(self.failed) + [w[0] for w in self.schedule]:
            if not 0 <= k < graph.m:
                raise ValueError(f"loss model references edge {k}, graph has {graph.m}")


def uniform_draw(seed: int, epoch: int, edge: int) -> float:
    """Counter-based uniform in [0, 1): a hash of (seed, epoch, edge)."""
    key = struct.pack("<QQQ", seed & 0xFFFFFFFFFFFFFFFF, epoch, edge)
    digest = hashlib.blake2b(key, digest_size=8, person=b"formnet-tok").digest()
    return int.from_bytes(digest, "little") / 2.0**64


def sample_tokens(model: LossModel, graph: FormationGraph, epoch: int) -> LinkTokenVector:
    m = graph.m
    if model.kind == "none":
        tokens = [True] * m
    elif model.kind == "bernoulli":
        tokens = [uniform_draw(model.seed, epoch, k) >= model.p for k in range(m)]
    elif model.kind == "persistent":
        tokens = [k not in model.failed for k in range(m)]
    else:
        tokens = [True] * m
        for k, start, end in model.schedule:
            if start <= epoch <= end:
                tokens[k] = False
    return LinkTokenVector(tuple(tokens), epoch)


@dataclass(frozen=True)
class CompensationStrategy:
    kind: str
    gamma: float = 0.5

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma out of range [0, 1]: {self.gamma}")

    @property
    def label(self) -> str:
        if self.kind == "combination":
            return f"combination:{self.gamma:g}"
        return self.kind.removeprefix("to_")

    @classmethod
    def parse(cls, text: str) -> "CompensationStrategy":
        """Parse ``zero``, ``hold``, ``combination`` or ``combination:<gamma>``."""
        name, _, arg = text.strip().partition(":")
        name = {"zero": "to_zero", "hold": "to_hold"}.get(name, name)
        if name != "combination":
            if arg or name not in STRATEGY_KINDS:
                raise ValueError(f"unknown strategy {text!r}")
            return cls(name)
        if not arg:
            return cls(name)
        try:
            gamma = float(arg)
        except ValueError:
            raise ValueError(f"bad gamma in strategy {text!r}") from None
        return cls(name, gamma)


@dataclass(frozen=True)
class Substitution:
    value: np.ndarray
    source: str  # "received" or the strategy kind
    cold_start: bool = False  # held value was never received
    no_estimate: bool = False  # combination had no prior estimate


def substitute(strategy: CompensationStrategy, received=None, last_received=None,
               last_estimate=None, d: int | None = None) -> Substitution:
    """Value used for a link this epoch.

    A received packet passes through. On loss, ``to_zero`` gives zeros,
    ``to_hold`` the last received value and ``combination`` mixes the held
    value with the previous local estimate of the link displacement. Missing
    inputs count as zero and are flagged.
    """
    if received is not None:
        return Substitution(np.asarray(received, dtype=float), "received")
    if d is None:
        ref = next((a for a in (last_received, last_estimate) if a is not None), None)
        if ref is None:
            raise ValueError("dimension is needed when nothing has been received or estimated")
        d = np.asarray(ref).shape[0]
    zero = np.zeros(d)
    held = zero if last_received is None else np.asarray(last_received, dtype=float)
    if strategy.kind == "to_zero":
        return Substitution(zero, "to_zero")
    if strategy.kind == "to_hold":
        return Substitution(held, "to_hold", cold_start=last_received is None)
    est = zero if last_estimate is None else np.asarray(last_estimate, dtype=float)
    return Substitution(
        strategy.gamma * held + (1.0 - strategy.gamma) * est,
        "combination",
        cold_start=last_received is None,
        no_estimate=last_estimate is None,
    )


def substitute_variance(value, estimate, estimate_var) -> float | None:
    """Per-coordinate error variance credited to a substituted value.

    The substitute is judged against the receiver's previous estimate of the
    link: ``var(estimate) + |value - estimate|^2 / d``. Without a previous
    estimate there is nothing to judge against and None is returned (the
    substitute is not used).
    """
    if estimate is None or estimate_var is None:
        return None
    value = np.asarray(value, dtype=float)
    gap = value - np.asarray(estimate, dtype=float)
    return float(estimate_var + gap @ gap / value.shape[0])


@dataclass
class LinkMemory:
    last_received: np.ndarray | None = None
    last_estimate: np.ndarray | None = None
    estimate_var: float | None = None


@dataclass
class Compensator:
    """A strategy plus the per-link memory it reads on loss."""

    strategy: CompensationStrategy
    n_links: int
    d: int
    memory: list = field(default_factory=list)

    def __post_init__(self):
        if not self.memory:
            self.memory = [LinkMemory() for _ in range(self.n_links)]

    def substitute(self, link: int, received=None) -> Substitution:
        mem = self.memory[link]
        out = substitute(self.strategy, received, mem.last_received, mem.last_estimate, self.d)
        if received is not None:
            mem.last_received = out.value.copy()
        return out

    def record_estimate(self, link: int, value, variance: float):
        mem = self.memory[link]
        mem.last_estimate = np.asarray(value, dtype=float).copy()
        mem.estimate_var = float(variance)

    def forget_estimate(self, link: int):
        mem = self.memory[link]
        mem.last_estimate = None
        mem.estimate_var = None
