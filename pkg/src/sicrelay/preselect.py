"""Offline relay pre-selection from average channel statistics.

Each candidate relay gets the expected rate it can pass on after SIC,
``R1 * Pr{only x1} + R2 * Pr{only x2} + (R1 + R2) * Pr{both}``, evaluated at a
reference SNR. The objective is a sum over chosen relays, so the best subset of
a given size is simply the highest-weight relays.

Topology files are CSV with header ``node,x,y``; node ids are ``S1``, ``S2``,
``D`` and ``R0`` .. ``R{n-1}``, coordinates in the unit square.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .analytic import end_to_end_outage, event_probs
from .config import RateConfig, ScenarioConfig
from .protocol import Source
from .rng import SeedSpec, uniforms

S1_POS = (0.0, 0.25)
S2_POS = (0.0, 0.75)
D_POS = (1.0, 0.5)
MIN_ANCHOR_DISTANCE = 1e-3
TOPOLOGY_TAG = 0x544F50
_MAX_ATTEMPTS = 64


@dataclass(frozen=True)
class Topology:
    relays: np.ndarray  # (n, 2)
    s1: tuple = S1_POS
    s2: tuple = S2_POS
    d: tuple = D_POS

    def __post_init__(self):
        relays = np.asarray(self.relays, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "relays", relays)
        if len(relays) < 1:
            raise ValueError("topology needs at least one relay")
        for anchor in (self.s1, self.s2, self.d):
            if np.any(np.hypot(*(relays - np.asarray(anchor)).T) <= 0):
                raise ValueError("a relay coincides with a terminal")

    @property
    def n_relays(self) -> int:
        return len(self.relays)

    def _gain_to(self, point) -> np.ndarray:
        d2 = np.sum((self.relays - np.asarray(point, dtype=float)) ** 2, axis=1)
        return 1.0 / d2

    @property
    def h_mean(self) -> np.ndarray:
        return np.stack([self._gain_to(self.s1), self._gain_to(self.s2)])

    @property
    def f_mean(self) -> np.ndarray:
        return self._gain_to(self.d)

    def scenario(self, R1: float, R2: float, selected: Sequence[int], **kw) -> ScenarioConfig:
        return ScenarioConfig(h_mean=self.h_mean, f_mean=self.f_mean, R1=R1, R2=R2,
                              selected=tuple(selected), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "x", "y"])
        for name, (x, y) in (("S1", self.s1), ("S2", self.s2), ("D", self.d)):
            w.writerow([name, repr(float(x)), repr(float(y))])
        for i, (x, y) in enumerate(self.relays):
            w.writerow([f"R{i}", repr(float(x)), repr(float(y))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Topology":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"node", "x", "y"}:
            raise ValueError("topology CSV must have header node,x,y")
        anchors = {}
        relays = {}
        for row in rows:
            node, xy = row["node"].strip(), (float(row["x"]), float(row["y"]))
            if node in ("S1", "S2", "D"):
                anchors[node] = xy
            elif node.startswith("R") and node[1:].isdigit():
                relays[int(node[1:])] = xy
            else:
                raise ValueError(f"unknown node id {node!r}")
        if set(anchors) != {"S1", "S2", "D"}:
            raise ValueError("topology CSV must define S1, S2 and D")
        if sorted(relays) != list(range(len(relays))):
            raise ValueError("relay ids must be R0..R{n-1} without gaps")
        pts = np.array([relays[i] for i in range(len(relays))])
        return cls(relays=pts, s1=anchors["S1"], s2=anchors["S2"], d=anchors["D"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Topology":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def random_topology(n_relays: int, seed: SeedSpec) -> Topology:
    """Relays uniform on the unit square; relay ``i`` always uses stream ``i``,
    so a smaller topology from the same seed is a prefix of a larger one."""
    if n_relays < 1:
        raise ValueError("n_relays must be at least 1")
    key = seed.key(TOPOLOGY_TAG, seed.stream_index)
    anchors = np.array([S1_POS, S2_POS, D_POS])
    streams = np.arange(n_relays, dtype=np.uint64)
    pts = np.empty((n_relays, 2))
    pending = np.ones(n_relays, dtype=bool)
    for attempt in range(_MAX_ATTEMPTS):
        x = uniforms(key, streams, 2 * attempt)
        y = uniforms(key, streams, 2 * attempt + 1)
        cand = np.stack([x, y], axis=1)
        dist = np.min(np.linalg.norm(cand[:, None, :] - anchors[None], axis=2), axis=1)
        ok = pending & (dist >= MIN_ANCHOR_DISTANCE)
        pts[ok] = cand[ok]
        pending &= ~ok
        if not pending.any():
            return Topology(relays=pts)
    raise RuntimeError("could not place relays away from the terminals")


def relay_weight(lam: float, mu: float, rates: RateConfig, gamma: float) -> float:
    """Expected rate forwarded by one relay after its SIC attempt."""
    p = event_probs(lam, mu, rates, gamma)
    return p.p_s1ok_s2fail * rates.R1 + p.p_s1fail_s2ok * rates.R2 + p.p_both_ok * (rates.R1 + rates.R2)


def relay_weights(topology: Topology, R1: float, R2: float, n_used: int, gamma: float) -> np.ndarray:
    rates = RateConfig(R1, R2, n_used + 1)
    h = topology.h_mean
    return np.array([relay_weight(1.0 / h[1, r], 1.0 / h[0, r], rates, gamma)
                     for r in range(topology.n_relays)])


@dataclass(frozen=True)
class SelectionResult:
    chosen: tuple
    weights: np.ndarray

    @property
    def objective(self) -> float:
        return float(self.weights[list(self.chosen)].sum())


def select(weights: Sequence[float], n_used: int) -> SelectionResult:
    """The ``n_used`` highest weights; ties go to the lower index."""
    weights = np.asarray(weights, dtype=float)
    if not 1 <= n_used <= weights.size:
        raise ValueError(f"n_used must lie in [1, {weights.size}], got {n_used}")
    order = sorted(range(weights.size), key=lambda i: (-weights[i], i))
    return SelectionResult(chosen=tuple(sorted(order[:n_used])), weights=weights)


def worst_subset(weights: Sequence[float], n_used: int) -> tuple:
    """The ``n_used`` lowest weights (ties to the higher index), for comparisons."""
    weights = np.asarray(weights, dtype=float)
    order = sorted(range(weights.size), key=lambda i: (weights[i], -i))
    return tuple(sorted(order[:n_used]))


def subset_outage(topology: Topology, subset: Sequence[int], R1: float, R2: float, gamma: float,
                  trials_per_event: int = 2000, master_seed: int = 1) -> float:
    """Mean of the two sources' end-to-end outage when only ``subset`` relays are used."""
    cfg = topology.scenario(R1, R2, subset, trials_per_event=trials_per_event, master_seed=master_seed)
    seed = SeedSpec(master_seed)
    return 0.5 * (end_to_end_outage(cfg, gamma, seed=seed, source=Source.S1).p_hat
                  + end_to_end_outage(cfg, gamma, seed=seed, source=Source.S2).p_hat)
