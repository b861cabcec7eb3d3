"""Relay-side processing: SIC ordering and decoding, forwarding coefficients, power scaling.

Decoding outcomes are encoded as two bits (bit 0: x1 decoded, bit 1: x2
decoded) so the vectorized paths can work on small integer arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .config import RateConfig, ScenarioConfig
from .fading import ChannelRealization


class Source(IntEnum):
    S1 = 1
    S2 = 2


class DecodeEvent(IntEnum):
    NONE = 0
    ONLY_S1 = 1
    ONLY_S2 = 2
    BOTH = 3

    @property
    def s1_decoded(self) -> bool:
        return bool(self & 1)

    @property
    def s2_decoded(self) -> bool:
        return bool(self & 2)


@dataclass(frozen=True)
class RelayTxState:
    a1: complex
    a2: complex
    a3: complex
    g: float


def sic_order(Y: float, X: float, rates: RateConfig) -> Source:
    """Which block the relay decodes first; ties go to S1."""
    if Y < 0 or X < 0 or not (np.isfinite(Y) and np.isfinite(X)):
        raise ValueError("channel powers must be finite and non-negative")
    return Source.S1 if Y * rates.k2 >= X * rates.k1 else Source.S2


def decode_codes(Y, X, gamma, rates: RateConfig) -> np.ndarray:
    """Vectorized SIC outcome codes for channel powers ``Y = |h1|^2`` and ``X = |h2|^2``.

    A block counts as decoded when its mutual information reaches
    ``(n_slots/2) * R``; equality is a success.
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    k1, k2 = rates.k1, rates.k2
    inv = 1.0 / np.asarray(gamma, dtype=float)
    s1_first = Y * k2 >= X * k1
    # S1 first: x2 treated as noise while decoding x1, then x2 sees noise only
    s1_ok_a = Y >= k1 * X + k1 * inv
    s2_ok_a = s1_ok_a & (X >= k2 * inv)
    # S2 first
    s2_ok_b = X >= k2 * Y + k2 * inv
    s1_ok_b = s2_ok_b & (Y >= k1 * inv)
    s1_ok = np.where(s1_first, s1_ok_a, s1_ok_b)
    s2_ok = np.where(s1_first, s2_ok_a, s2_ok_b)
    return (s1_ok.astype(np.int8) | (s2_ok.astype(np.int8) << 1)).astype(np.int8)


def relay_decode(Y: float, X: float, gamma: float, rates: RateConfig) -> DecodeEvent:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    sic_order(Y, X, rates)  # input validation
    return DecodeEvent(int(decode_codes(Y, X, gamma, rates)))


def coefficient_arrays(codes, h1, h2):
    """Forwarding coefficients (a1, a2, a3) for arrays of outcome codes."""
    codes = np.asarray(codes)
    s1 = (codes & 1).astype(bool)
    s2 = (codes & 2).astype(bool)
    a1 = np.where(s1, 1.0 + 0j, h1)
    a2 = np.where(s2, 1.0 + 0j, h2)
    a3 = np.where(s1 & s2, 0.0, 1.0)
    return a1, a2, a3


def coefficients(event: DecodeEvent, h1: complex, h2: complex):
    """Table of forwarding coefficients: decoded blocks are re-encoded with unit
    weight, undecoded ones are forwarded through their channel, and the relay
    noise is forwarded unless both blocks were decoded."""
    event = DecodeEvent(event)
    a1 = 1 + 0j if event.s1_decoded else complex(h1)
    a2 = 1 + 0j if event.s2_decoded else complex(h2)
    a3 = 0 + 0j if event == DecodeEvent.BOTH else 1 + 0j
    return a1, a2, a3


def power_scale(a1, a2, a3, sigma2, p_relay=1.0):
    """Amplitude g with g^2 (|a1|^2 + |a2|^2 + |a3|^2 sigma2) = p_relay."""
    denom = np.abs(a1) ** 2 + np.abs(a2) ** 2 + np.abs(a3) ** 2 * sigma2
    if np.any(denom <= 0):
        raise ValueError("all-zero coefficient triple cannot be power scaled")
    g = np.sqrt(p_relay / denom)
    return float(g) if np.ndim(g) == 0 else g


def first_hop_arrays(h: np.ndarray, gamma: float, rates: RateConfig, p_relay: float = 1.0):
    """Relay processing for a batch of trials.

    ``h`` has shape (..., 2, R). Returns ``codes, a1, a2, a3, g`` each of shape (..., R).
    """
    h1 = h[..., 0, :]
    h2 = h[..., 1, :]
    codes = decode_codes(np.abs(h1) ** 2, np.abs(h2) ** 2, gamma, rates)
    a1, a2, a3 = coefficient_arrays(codes, h1, h2)
    g = power_scale(a1, a2, a3, 1.0 / gamma, p_relay)
    return codes, a1, a2, a3, g


def step_first_hop(real: ChannelRealization, config: ScenarioConfig, gamma: float):
    """Decode, pick coefficients and scale power at every active relay of one realization."""
    if real.h.shape[1] != config.n_relays:
        raise ValueError("realization does not match the scenario's relay count")
    rates = config.rates
    out = []
    for r in config.active:
        h1, h2 = real.h[0, r], real.h[1, r]
        event = relay_decode(abs(h1) ** 2, abs(h2) ** 2, gamma, rates)
        a1, a2, a3 = coefficients(event, h1, h2)
        g = power_scale(a1, a2, a3, 1.0 / gamma, config.p_relay)
        out.append((event, RelayTxState(a1, a2, a3, g)))
    return out
