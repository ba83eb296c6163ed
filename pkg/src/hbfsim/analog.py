"""Frequency-flat analog beamformers with constant-modulus entries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, PathSet, SystemConfig, array_response
from .errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class AnalogBeamformer:
    """Fully-connected phase-only matrix, ``N_t x K``, entries of modulus 1/sqrt(N_t)."""

    f_tilde: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f_tilde, dtype=complex)
        if f.ndim != 2:
            raise ConfigurationError(f"analog matrix must be 2-D, got shape {f.shape}")
        object.__setattr__(self, "f_tilde", f)

    def __array__(self, dtype=None, copy=None):
        return self.f_tilde if dtype is None else self.f_tilde.astype(dtype)

    @property
    def shape(self):
        return self.f_tilde.shape

    def modulus_error(self) -> float:
        """Largest relative deviation of ``|entry|`` from 1/sqrt(N_t)."""
        target = 1 / np.sqrt(self.f_tilde.shape[0])
        return float(np.max(np.abs(np.abs(self.f_tilde) - target)) / target)


def phase_only(v: np.ndarray) -> np.ndarray:
    """Conjugate-phase columns: ``exp(-j angle(v)) / sqrt(N_t)``; zero entries get phase 0."""
    v = np.asarray(v, dtype=complex)
    # np.angle(0) == 0 already gives the zero-magnitude tie-break
    return np.exp(-1j * np.angle(v)) / np.sqrt(v.shape[0])


def beam_align_los(paths: PathSet, config: SystemConfig) -> AnalogBeamformer:
    """Steer RF chain ``k`` at user ``k``'s LoS direction."""
    a = array_response(paths.theta_los, paths.phi_los, config)  # (K, N_t)
    return AnalogBeamformer(phase_only(a.T))


def conj_phase_match(h) -> AnalogBeamformer:
    """Match each column to the conjugate phases of the subcarrier-mean channel of its user."""
    h = np.asarray(h)
    h_bar = h.mean(axis=0)  # (K, N_t)
    return AnalogBeamformer(phase_only(h_bar.T))
