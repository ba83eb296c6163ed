"""Multipath MIMO-OFDM channel model for a UPA base station.

Each user sees one line-of-sight path plus ``l_p`` scattered paths whose
angles of departure cluster around the LoS direction. The frequency
response on subcarrier ``m`` (1-based) is

    h[k, m] = sqrt(F_k) * (a(los) + sqrt(1/L_p) * sum_l alpha_l a(nlos_l)
              * exp(-2j*pi*m*tau_l / (N_c*T_s)))

with ``F_k = (lambda / (4*pi*r_k))**2``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DomainError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SystemConfig:
    """Array geometry, OFDM numerology and propagation statistics.

    Defaults reproduce the reference scenario: 8x8 UPA at 3 GHz, 30 MHz
    bandwidth, 32 subcarriers, 30 NLoS paths, users at 25 km.
    ``k_users`` doubles as the RF-chain count.
    """

    n_tv: int = 8
    n_th: int = 8
    k_users: int = 4
    n_c: int = 32
    f_c: float = 3e9
    bandwidth: float = 30e6
    d: Optional[float] = None
    noise_psd_dbm_hz: float = -174.0
    p_t: float = 1.0
    l_p: int = 30
    delay_max_symbols: float = 8.0
    angle_spread_rad: float = np.deg2rad(10.0)
    r_k: Union[float, Tuple[float, ...]] = 25_000.0
    aod_range_rad: float = np.pi / 3
    # overrides the PSD-derived per-subcarrier noise power when set
    sigma_sq_override: Optional[float] = None

    def __post_init__(self):
        for name in ("n_tv", "n_th", "k_users", "n_c"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.l_p < 0:
            raise ConfigurationError(f"l_p must be >= 0, got {self.l_p}")
        if not self.f_c > 0 or not self.bandwidth > 0:
            raise ConfigurationError("f_c and bandwidth must be positive")
        if not self.p_t > 0:
            raise ConfigurationError(f"p_t must be positive, got {self.p_t}")
        if self.d is not None and not self.d > 0:
            raise ConfigurationError(f"antenna spacing must be positive, got {self.d}")
        if self.sigma_sq_override is not None and not self.sigma_sq_override > 0:
            raise ConfigurationError("sigma_sq_override must be positive")
        if self.delay_max_symbols < 0 or self.angle_spread_rad < 0 or self.aod_range_rad < 0:
            raise ConfigurationError("delay, spread and AoD range must be non-negative")
        if not np.isscalar(self.r_k):
            r = tuple(float(x) for x in self.r_k)
            if len(r) != self.k_users:
                raise ConfigurationError(f"r_k has {len(r)} entries for {self.k_users} users")
            object.__setattr__(self, "r_k", r)
        if np.any(np.asarray(self.r_k) <= 0):
            raise ConfigurationError("r_k must be positive")

    @property
    def n_t(self) -> int:
        return self.n_tv * self.n_th

    @property
    def lam(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def spacing(self) -> float:
        return self.lam / 2 if self.d is None else self.d

    @property
    def t_s(self) -> float:
        return 1.0 / self.bandwidth

    @property
    def sigma_m_sq(self) -> float:
        """Per-subcarrier noise power in watts."""
        if self.sigma_sq_override is not None:
            return self.sigma_sq_override
        return 10 ** ((self.noise_psd_dbm_hz - 30) / 10) * (self.bandwidth / self.n_c)

    @property
    def distances(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.r_k, dtype=float), (self.k_users,)).copy()

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def dims(self) -> Tuple[int, int, int]:
        return (self.n_c, self.k_users, self.n_t)


@dataclass(frozen=True)
class PathSet:
    """Geometry and gains of every path, one row per user.

    LoS arrays have shape ``(K,)``; NLoS arrays ``(K, L_p)``.
    """

    theta_los: np.ndarray
    phi_los: np.ndarray
    theta_nlos: np.ndarray
    phi_nlos: np.ndarray
    alpha: np.ndarray
    tau: np.ndarray
    f_k: np.ndarray

    @property
    def k_users(self) -> int:
        return self.theta_los.shape[0]

    @property
    def l_p(self) -> int:
        return self.theta_nlos.shape[1]


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Channel tensor ``h[m, k, n]`` (subcarrier, user, antenna)."""

    h: np.ndarray
    config: Optional[SystemConfig] = None
    paths: Optional[PathSet] = field(default=None, repr=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 3:
            raise ConfigurationError(f"channel tensor must be 3-D, got shape {h.shape}")
        if self.config is not None and h.shape != self.config.dims():
            raise ConfigurationError(
                f"channel shape {h.shape} does not match config {self.config.dims()}")
        if not np.all(np.isfinite(h)):
            raise ConfigurationError("channel tensor contains non-finite entries")
        object.__setattr__(self, "h", h)

    def __array__(self, dtype=None, copy=None):
        return self.h if dtype is None else self.h.astype(dtype)

    @property
    def shape(self):
        return self.h.shape


def array_response(theta, phi, config: SystemConfig) -> np.ndarray:
    """UPA steering vector(s), unit-magnitude entries.

    Antenna ``n = m1 * n_th + m2`` with ``m1`` the vertical and ``m2`` the
    horizontal index. ``theta`` and ``phi`` broadcast; the antenna axis is
    appended last.
    """
    theta = np.asarray(theta, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    m1, m2 = np.divmod(np.arange(config.n_t), config.n_th)
    k = 2 * np.pi / config.lam * config.spacing
    return np.exp(1j * k * (m1 * np.sin(theta) * np.cos(phi) + m2 * np.sin(phi)))


def path_loss(r, lam) -> float:
    """Free-space large-scale gain ``(lam / (4 pi r))**2``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or not lam > 0:
        raise DomainError(f"path_loss needs r > 0 and lambda > 0 (r={r}, lambda={lam})")
    out = (lam / (4 * np.pi * r)) ** 2
    return float(out) if out.ndim == 0 else out


def sample_paths(config: SystemConfig, rng_seed) -> PathSet:
    rng = np.random.default_rng(rng_seed)
    k, l_p = config.k_users, config.l_p
    theta_los = rng.uniform(-config.aod_range_rad, config.aod_range_rad, k)
    phi_los = rng.uniform(-config.aod_range_rad, config.aod_range_rad, k)
    spread = config.angle_spread_rad
    theta_nlos = theta_los[:, None] + rng.uniform(-spread, spread, (k, l_p))
    phi_nlos = phi_los[:, None] + rng.uniform(-spread, spread, (k, l_p))
    alpha = (rng.standard_normal((k, l_p)) + 1j * rng.standard_normal((k, l_p))) / np.sqrt(2)
    tau = rng.uniform(0.0, config.delay_max_symbols * config.t_s, (k, l_p))
    f_k = np.asarray(path_loss(config.distances, config.lam), dtype=float).reshape(k)
    return PathSet(theta_los, phi_los, theta_nlos, phi_nlos, alpha, tau, f_k)


def synthesize_channel(paths: PathSet, config: SystemConfig) -> ChannelSet:
    if paths.k_users != config.k_users or paths.l_p != config.l_p:
        raise ConfigurationError(
            f"path set has K={paths.k_users}, L_p={paths.l_p}; "
            f"config expects K={config.k_users}, L_p={config.l_p}")
    a_los = array_response(paths.theta_los, paths.phi_los, config)        # (K, N)
    h = np.broadcast_to(a_los, config.dims()).astype(complex)
    if config.l_p > 0:
        a_nlos = array_response(paths.theta_nlos, paths.phi_nlos, config)  # (K, L, N)
        m = np.arange(1, config.n_c + 1)[:, None, None]
        delay = np.exp(-2j * np.pi * m * paths.tau[None] / (config.n_c * config.t_s))
        weights = delay * paths.alpha[None]                                # (M, K, L)
        h = h + np.einsum("mkl,kln->mkn", weights, a_nlos) / np.sqrt(config.l_p)
    h = np.sqrt(paths.f_k)[None, :, None] * h
    return ChannelSet(h, config=config, paths=paths)


def generate_channel(config: SystemConfig, rng_seed) -> ChannelSet:
    return synthesize_channel(sample_paths(config, rng_seed), config)


def perturb_channel(h: ChannelSet, target_ncpe: float, rng_seed) -> ChannelSet:
    """Imperfect CSI: add i.i.d. CN(0, s2) noise so that E[NCPE] = target.

    ``s2 = target_ncpe * ||h||^2 / (K N_c N_t)``. The noise draw depends
    only on the seed, so sweeping ``target_ncpe`` with one seed rescales a
    single perturbation direction.
    """
    if target_ncpe < 0:
        raise DomainError(f"target NCPE must be >= 0, got {target_ncpe}")
    arr = np.asarray(h)
    if target_ncpe == 0:
        return ChannelSet(arr.copy(), config=getattr(h, "config", None))
    rng = np.random.default_rng(rng_seed)
    var = target_ncpe * np.sum(np.abs(arr) ** 2) / arr.size
    noise = (rng.standard_normal(arr.shape) + 1j * rng.standard_normal(arr.shape)) * np.sqrt(var / 2)
    return ChannelSet(arr + noise, config=getattr(h, "config", None))
