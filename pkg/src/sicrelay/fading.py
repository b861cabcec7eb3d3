"""Rayleigh block-fading channel draws.

Gains are zero-mean circularly-symmetric complex Gaussian, so |h|^2 is
exponential with mean ``mean_gain``. Each gain consumes two uniforms (power
and phase) at a draw index fixed by the link, so a relay's channels never
depend on how many relays a scenario contains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .rng import SeedSpec, uniforms

# link ids within one relay: S1->r, S2->r, r->D
_LINKS_PER_RELAY = 3
_F_LINK = 2
# key path tag reserved for channel realizations
CHANNEL_TAG = 0x43484E


@dataclass(frozen=True)
class LinkStats:
    mean_gain: float

    def __post_init__(self):
        if not (self.mean_gain > 0 and math.isfinite(self.mean_gain)):
            raise ValueError(f"mean_gain must be positive and finite, got {self.mean_gain}")

    @property
    def rate_param(self) -> float:
        return 1.0 / self.mean_gain

    @classmethod
    def from_rate(cls, rate: float) -> "LinkStats":
        return cls(1.0 / rate)


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray  # (2, n_relays) complex, h[s, r]
    f: np.ndarray  # (n_relays,) complex

    def __post_init__(self):
        if self.h.ndim != 2 or self.h.shape[0] != 2 or self.f.shape != (self.h.shape[1],):
            raise ValueError("inconsistent realization shapes")
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.f))):
            raise ValueError("non-finite channel gain")


def link_draw_index(relay: int, link: int) -> int:
    """First of the two draw indices used by ``link`` (0: S1, 1: S2, 2: to D) of ``relay``."""
    return 2 * (_LINKS_PER_RELAY * relay + link)


def gains_from_uniforms(mean_gain, u_power, u_phase) -> np.ndarray:
    amplitude = np.sqrt(-np.asarray(mean_gain) * np.log1p(-u_power))
    return amplitude * np.exp(2j * np.pi * u_phase)


def _gain(key, streams, mean_gain, draw):
    return gains_from_uniforms(mean_gain, uniforms(key, streams, draw), uniforms(key, streams, draw + 1))


def draw_complex_gain(stats: LinkStats, seed: SeedSpec, draw: int = 0) -> complex:
    """One CN(0, mean_gain) draw from the stream named by ``seed``."""
    key = seed.key(CHANNEL_TAG)
    return complex(_gain(key, np.array([seed.stream_index]), stats.mean_gain, 2 * draw)[0])


def draw_gains(config: ScenarioConfig, trials: np.ndarray, relays=None, master_seed=None):
    """Vectorized channel draws for many trials.

    Returns ``h`` of shape (T, 2, R) and ``f`` of shape (T, R) for the requested
    relay indices (default: the scenario's active relays).
    """
    relays = tuple(config.active if relays is None else relays)
    trials = np.asarray(trials, dtype=np.uint64)
    key = derive_channel_key(config.master_seed if master_seed is None else master_seed)
    h = np.empty((trials.size, 2, len(relays)), dtype=complex)
    f = np.empty((trials.size, len(relays)), dtype=complex)
    for j, r in enumerate(relays):
        for s in (0, 1):
            h[:, s, j] = _gain(key, trials, config.h_mean[s, r], link_draw_index(r, s))
        f[:, j] = _gain(key, trials, config.f_mean[r], link_draw_index(r, _F_LINK))
    return h, f


def derive_channel_key(master_seed: int):
    return SeedSpec(master_seed).key(CHANNEL_TAG)


def draw_realization(config: ScenarioConfig, seed: SeedSpec) -> ChannelRealization:
    """All 3*N_R gains of one trial, covering every relay of the scenario."""
    if config.n_relays < 1:
        raise ValueError("scenario has no relays")
    h, f = draw_gains(config, np.array([seed.stream_index]), range(config.n_relays), seed.master_seed)
    return ChannelRealization(h=h[0], f=f[0])
