"""Scenario and rate configuration, plus the versioned YAML file format.

Config file schema (version 1)::

    schema_version: 1
    scenario:
      rates: {R1: 1.0, R2: 1.0}          # bits/symbol
      relays:
        h1_mean: [1.0, 1.0]              # E|h_{1,r}|^2, one entry per relay
        h2_mean: [1.0, 1.0]              # E|h_{2,r}|^2
        f_mean:  [1.0, 1.0]              # E|f_r|^2
      n_used: 2                          # optional, defaults to all relays
      selected: [0, 1]                   # optional explicit relay indices
      p_relay: 1.0                       # relay transmit power budget
    simulation:
      trials: 100000
      master_seed: 1
      trials_per_event: 4000             # analytic second-hop samples per event vector
      snr_db: [0, 5, 10]                 # optional default grid
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario configuration."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class RateConfig:
    """Source rates and the slot count that sets the decoding thresholds."""

    R1: float
    R2: float
    n_slots: int

    def __post_init__(self):
        if not (self.R1 > 0 and self.R2 > 0 and math.isfinite(self.R1) and math.isfinite(self.R2)):
            raise ConfigError(f"rates must be positive and finite, got R1={self.R1}, R2={self.R2}")
        if int(self.n_slots) != self.n_slots or self.n_slots < 2:
            raise ConfigError(f"n_slots must be an integer >= 2, got {self.n_slots}")

    @property
    def k1(self) -> float:
        return 2.0 ** (0.5 * self.n_slots * self.R1) - 1.0

    @property
    def k2(self) -> float:
        return 2.0 ** (0.5 * self.n_slots * self.R2) - 1.0

    @classmethod
    def from_thresholds(cls, k1: float, k2: float, n_slots: int = 3) -> "RateConfig":
        """Build the rate pair that yields the given SNR thresholds."""
        return cls(2.0 * math.log2(1.0 + k1) / n_slots, 2.0 * math.log2(1.0 + k2) / n_slots, n_slots)

    def swapped(self) -> "RateConfig":
        return RateConfig(self.R2, self.R1, self.n_slots)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines a run, apart from the SNR point."""

    h_mean: np.ndarray  # shape (2, n_relays): E|h_{s,r}|^2
    f_mean: np.ndarray  # shape (n_relays,): E|f_r|^2
    R1: float = 1.0
    R2: float = 1.0
    n_used: Optional[int] = None
    selected: Optional[tuple] = None
    p_relay: float = 1.0
    trials: int = 100_000
    master_seed: int = 1
    trials_per_event: int = 4000
    snr_db: tuple = field(default=())

    def __post_init__(self):
        h = np.asarray(self.h_mean, dtype=float)
        f = np.asarray(self.f_mean, dtype=float)
        object.__setattr__(self, "h_mean", h)
        object.__setattr__(self, "f_mean", f)
        if h.ndim != 2 or h.shape[0] != 2:
            raise ConfigError("h_mean must have shape (2, n_relays)")
        if f.shape != (h.shape[1],):
            raise ConfigError("f_mean must have one entry per relay")
        if h.shape[1] < 1:
            raise ConfigError("at least one relay is required")
        if not (np.all(np.isfinite(h)) and np.all(h > 0) and np.all(np.isfinite(f)) and np.all(f > 0)):
            raise ConfigError("mean channel gains must be positive and finite")
        if self.selected is not None:
            sel = tuple(int(i) for i in self.selected)
            if len(set(sel)) != len(sel) or any(not 0 <= i < h.shape[1] for i in sel) or not sel:
                raise ConfigError(f"selected relays {sel} are invalid for {h.shape[1]} relays")
            if self.n_used is not None and self.n_used != len(sel):
                raise ConfigError("n_used disagrees with the number of selected relays")
            object.__setattr__(self, "selected", sel)
        elif self.n_used is not None and not 1 <= self.n_used <= h.shape[1]:
            raise ConfigError(f"n_used must lie in [1, {h.shape[1]}], got {self.n_used}")
        if not (self.p_relay > 0 and math.isfinite(self.p_relay)):
            raise ConfigError("p_relay must be positive")
        if self.trials < 1 or self.trials_per_event < 1:
            raise ConfigError("trial counts must be positive")
        object.__setattr__(self, "snr_db", tuple(float(x) for x in self.snr_db))
        # validates the rates
        self.rates

    @property
    def n_relays(self) -> int:
        return self.h_mean.shape[1]

    @property
    def active(self) -> tuple:
        """Indices of the relays that take part in the protocol."""
        if self.selected is not None:
            return self.selected
        return tuple(range(self.n_used if self.n_used is not None else self.n_relays))

    @property
    def n_slots(self) -> int:
        return len(self.active) + 1

    @property
    def rates(self) -> RateConfig:
        return RateConfig(self.R1, self.R2, self.n_slots)

    @property
    def mu(self) -> np.ndarray:
        """Reciprocal mean gains of the S1 links of the active relays."""
        return 1.0 / self.h_mean[0, list(self.active)]

    @property
    def lam(self) -> np.ndarray:
        return 1.0 / self.h_mean[1, list(self.active)]

    @property
    def nu(self) -> np.ndarray:
        return 1.0 / self.f_mean[list(self.active)]

    def swapped(self) -> "ScenarioConfig":
        """The same scenario with the roles of S1 and S2 exchanged."""
        return replace(self, h_mean=self.h_mean[::-1].copy(), R1=self.R2, R2=self.R1)

    def with_selection(self, relays: Sequence[int]) -> "ScenarioConfig":
        return replace(self, selected=tuple(relays), n_used=None)

    @classmethod
    def symmetric(cls, n_relays: int, mean_gain: float = 1.0, **kw) -> "ScenarioConfig":
        return cls(h_mean=np.full((2, n_relays), mean_gain), f_mean=np.full(n_relays, mean_gain), **kw)

    def to_dict(self) -> dict:
        scenario = {
            "rates": {"R1": float(self.R1), "R2": float(self.R2)},
            "relays": {
                "h1_mean": [float(x) for x in self.h_mean[0]],
                "h2_mean": [float(x) for x in self.h_mean[1]],
                "f_mean": [float(x) for x in self.f_mean],
            },
            "p_relay": float(self.p_relay),
        }
        if self.n_used is not None:
            scenario["n_used"] = int(self.n_used)
        if self.selected is not None:
            scenario["selected"] = list(self.selected)
        simulation = {
            "trials": int(self.trials),
            "master_seed": int(self.master_seed),
            "trials_per_event": int(self.trials_per_event),
        }
        if self.snr_db:
            simulation["snr_db"] = list(self.snr_db)
        return {"schema_version": SCHEMA_VERSION, "scenario": scenario, "simulation": simulation}

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        try:
            sc = data["scenario"]
            relays = sc["relays"]
            rates = sc.get("rates", {})
            sim = data.get("simulation", {}) or {}
            return cls(
                h_mean=np.array([relays["h1_mean"], relays["h2_mean"]], dtype=float),
                f_mean=np.array(relays["f_mean"], dtype=float),
                R1=float(rates.get("R1", 1.0)),
                R2=float(rates.get("R2", 1.0)),
                n_used=sc.get("n_used"),
                selected=sc.get("selected"),
                p_relay=float(sc.get("p_relay", 1.0)),
                trials=int(sim.get("trials", 100_000)),
                master_seed=int(sim.get("master_seed", 1)),
                trials_per_event=int(sim.get("trials_per_event", 4000)),
                snr_db=tuple(sim.get("snr_db", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config: {exc!r}") from exc


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    return ScenarioConfig.from_dict(data)


def dump_config(config: ScenarioConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False), encoding="utf-8")
