"""SINR, spectral efficiency, energy efficiency and CSI-error metrics.

Per-(user, subcarrier) tensors are stored as ``(N_c, K)`` arrays, matching
the (subcarrier, user) leading axes of the channel tensor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError

DYNAMIC_SUBARRAY = "dynamic_subarray"
FULLY_CONNECTED = "fully_connected"


@dataclass(frozen=True)
class PowerModel:
    """Hardware power budget used for energy efficiency.

    ``pt_scope`` chooses whether the transmit-power term uses the
    per-subcarrier ``P_t`` (default) or the total ``N_c * P_t``.
    """

    epsilon: float = 0.37
    p_bb: float = 1.0
    p_rf: float = 0.3
    p_ps: float = 0.04
    p_sw: float = 0.005
    architecture: str = DYNAMIC_SUBARRAY
    pt_scope: str = "per_subcarrier"

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ConfigurationError(f"PA efficiency must be in (0, 1], got {self.epsilon}")
        if min(self.p_bb, self.p_rf, self.p_ps, self.p_sw) < 0:
            raise ConfigurationError("component powers must be non-negative")
        if self.architecture not in (DYNAMIC_SUBARRAY, FULLY_CONNECTED):
            raise ConfigurationError(f"unknown architecture {self.architecture!r}")
        if self.pt_scope not in ("per_subcarrier", "total"):
            raise ConfigurationError(f"unknown pt_scope {self.pt_scope!r}")

    def with_architecture(self, architecture: str) -> "PowerModel":
        return PowerModel(self.epsilon, self.p_bb, self.p_rf, self.p_ps, self.p_sw,
                          architecture, self.pt_scope)

    def consumed_power(self, p_t: float, n_rf: int, n_t: int, n_c: int = 1) -> float:
        radiated = p_t * n_c if self.pt_scope == "total" else p_t
        if self.architecture == DYNAMIC_SUBARRAY:
            analog = n_t * (self.p_ps + self.p_sw)
        else:
            analog = n_t * n_rf * self.p_ps
        return radiated / self.epsilon + self.p_bb + n_rf * self.p_rf + analog


@dataclass(frozen=True)
class Evaluation:
    sinr: np.ndarray
    se: float
    ee: Optional[float] = None


def _effective_gains(h, f_rf, f_bb) -> np.ndarray:
    """``G[m, k, i] = h^T[k, m] F_RF f_BB[i, m]``."""
    h = np.asarray(h)
    f_rf = np.asarray(f_rf)
    f_bb = np.asarray(f_bb)
    n_c, k, n_t = h.shape
    if f_rf.ndim != 2 or f_rf.shape[0] != n_t:
        raise ConfigurationError(f"F_RF shape {f_rf.shape} incompatible with N_t={n_t}")
    if f_bb.shape != (n_c, f_rf.shape[1], k):
        raise ConfigurationError(
            f"F_BB shape {f_bb.shape} incompatible with (N_c, N_RF, K)=({n_c}, {f_rf.shape[1]}, {k})")
    return (h @ f_rf) @ f_bb


def sinr_from_gains(gains: np.ndarray, sigma_sq) -> np.ndarray:
    """SINR per (m, k) from the effective gain tensor ``G[m, k, i]``."""
    power = np.abs(gains) ** 2
    signal = np.diagonal(power, axis1=1, axis2=2)
    interference = power.sum(axis=2) - signal
    return signal / (interference + sigma_sq)


def sinr(h, f_rf, f_bb, config) -> np.ndarray:
    """SINR[m, k] for user ``k`` on subcarrier ``m``.

    Parameters
    ----------
    h : ChannelSet or array, shape (N_c, K, N_t)
    f_rf : array, shape (N_t, K)
        Composed analog matrix.
    f_bb : DigitalBeamformer or array, shape (N_c, K, K)
    config : SystemConfig or float
        Supplies the per-subcarrier noise power (a bare float is used as-is).
    """
    sigma_sq = config if np.isscalar(config) else config.sigma_m_sq
    if not sigma_sq > 0:
        raise DomainError(f"noise power must be positive, got {sigma_sq}")
    return sinr_from_gains(_effective_gains(h, f_rf, f_bb), sigma_sq)


def spectral_efficiency(sinr_values, n_c: int) -> float:
    """Sum rate in bits/s/Hz averaged over ``n_c`` subcarriers."""
    s = np.asarray(sinr_values, dtype=float)
    if np.any(s < 0):
        raise DomainError("SINR must be non-negative")
    return float(np.sum(np.log2(1.0 + s)) / n_c)


def energy_efficiency(se: float, p_t: float, n_rf: int, n_t: int, pm: PowerModel,
                      n_c: int = 1) -> float:
    denom = pm.consumed_power(p_t, n_rf, n_t, n_c)
    if not denom > 0:
        raise DomainError(f"consumed power must be positive, got {denom}")
    return se / denom


def ncpe(h_true, h_per) -> float:
    h_true = np.asarray(h_true)
    h_per = np.asarray(h_per)
    if h_true.shape != h_per.shape:
        raise ConfigurationError(f"shape mismatch {h_true.shape} vs {h_per.shape}")
    ref = np.sum(np.abs(h_true) ** 2)
    if ref == 0:
        raise DomainError("NCPE undefined for an all-zero channel")
    return float(np.sum(np.abs(h_true - h_per) ** 2) / ref)


def evaluate(h, f_rf, f_bb, config, power_model: Optional[PowerModel] = None) -> Evaluation:
    s = sinr(h, f_rf, f_bb, config)
    n_c = s.shape[0]
    se = spectral_efficiency(s, n_c)
    ee = None
    if power_model is not None:
        ee = energy_efficiency(se, config.p_t, np.asarray(f_rf).shape[1],
                               np.asarray(f_rf).shape[0], power_model, n_c)
    return Evaluation(s, se, ee)
