"""Second-hop signal model at the destination, its combining SNR and the MMSE estimator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .protocol import RelayTxState, Source


@dataclass(frozen=True)
class SecondHopModel:
    """Stacked observation ``y = H x + w`` over the relay slots, with diagonal noise covariance."""

    H: np.ndarray  # (R, 2) complex
    noise_cov_diag: np.ndarray  # (R,)

    def __post_init__(self):
        if self.H.ndim != 2 or self.H.shape[1] != 2 or self.noise_cov_diag.shape != (self.H.shape[0],):
            raise ValueError("inconsistent second-hop model shapes")
        if np.any(self.noise_cov_diag <= 0):
            raise ValueError("noise variances must be positive")


def assemble(states: Sequence[RelayTxState], f, sigma2: float) -> SecondHopModel:
    f = np.atleast_1d(np.asarray(f, dtype=complex))
    if len(states) != f.size or not states:
        raise ValueError(f"got {len(states)} relay states for {f.size} relay-destination channels")
    g = np.array([s.g for s in states], dtype=float)
    a = np.array([[s.a1, s.a2] for s in states], dtype=complex)
    a3 = np.array([s.a3 for s in states], dtype=complex)
    H = (g * f)[:, None] * a
    noise = g ** 2 * np.abs(f) ** 2 * np.abs(a3) ** 2 * sigma2 + sigma2
    return SecondHopModel(H=H, noise_cov_diag=noise)


def gamma_d(model: SecondHopModel, source: Source = Source.S1) -> float:
    """Post-combining SNR of one source's block: h^H Sigma^{-1} h over its column."""
    col = model.H[:, int(Source(source)) - 1]
    return float(np.sum(np.abs(col) ** 2 / model.noise_cov_diag))


def gamma_d_arrays(g, f, a_src, a3, gamma) -> np.ndarray:
    """Vectorized SNR sum over the last axis, in the per-relay fraction form."""
    gf2 = np.asarray(g) ** 2 * np.abs(f) ** 2
    terms = gf2 * np.abs(a_src) ** 2 / (gf2 * np.abs(a3) ** 2 + 1.0)
    return gamma * terms.sum(axis=-1)


def mmse_matrix(model: SecondHopModel) -> np.ndarray:
    """The 2 x R linear MMSE filter for unit-power symbols."""
    H = model.H
    HhSi = H.conj().T / model.noise_cov_diag
    return np.linalg.solve(HhSi @ H + np.eye(2), HhSi)


def mmse_estimate(model: SecondHopModel, observed) -> np.ndarray:
    observed = np.asarray(observed, dtype=complex)
    if observed.shape[0] != model.H.shape[0]:
        raise ValueError("observation length does not match the model")
    if not np.all(np.isfinite(observed)):
        raise ValueError("non-finite observation")
    return mmse_matrix(model) @ observed


def post_mmse_sinr(model: SecondHopModel, source: Source = Source.S1) -> float:
    """Output SINR of the MMSE filter row for ``source``."""
    i = int(Source(source)) - 1
    w = mmse_matrix(model)[i]
    H = model.H
    signal = abs(w @ H[:, i]) ** 2
    other = abs(w @ H[:, 1 - i]) ** 2
    noise = float(np.sum(np.abs(w) ** 2 * model.noise_cov_diag))
    return signal / (other + noise)


def outage_at_destination(gamma_d_value, rate: float, n_slots: int):
    """True when log2(1 + gamma_d) falls short of (n_slots/2) * rate; equality is success."""
    threshold = 2.0 ** (0.5 * n_slots * rate) - 1.0
    out = np.asarray(gamma_d_value) < threshold
    return bool(out) if out.ndim == 0 else out
