"""Per-realization rate model for an opportunistic/legacy user pair.

Gains are squared channel magnitudes of the legacy user ``x = |h_m|^2`` and
the opportunistic user ``y = |h_n|^2``; noise power and slot duration are both
normalised to one. Every function accepts scalars or numpy arrays.

Rates are computed with natural logarithms and converted to bits per channel
use only where a rate is reported; the hybrid-vs-OMA comparison does not
depend on the base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import ConfigError

LN2 = math.log(2.0)


class Scheme(str, Enum):
    OMA = "OMA"
    FSIC_HYBRID = "FSIC_HYBRID"
    HSIC_HYBRID = "HSIC_HYBRID"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper()
        aliases = {"HSIC": "HSIC_HYBRID", "FSIC": "FSIC_HYBRID"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(f"unknown scheme {value!r}") from None


class Region(str, Enum):
    """Disjoint pieces of the HSIC failure event (plus its complement)."""

    NONE = "NONE"
    P11 = "P11"
    P12 = "P12"
    P21 = "P21"
    P22 = "P22"


# integer codes used by the vectorised classifier; index into REGION_ORDER
REGION_ORDER = (Region.NONE, Region.P11, Region.P12, Region.P21, Region.P22)


@dataclass(frozen=True)
class SystemConfig:
    """One (legacy, opportunistic) pairing among ``M`` ordered users.

    ``m`` and ``n`` are 1-based order indices of the legacy and the
    opportunistic user, ``beta`` the power-reducing coefficient, ``rho_n`` and
    ``rho_m`` linear transmit SNRs and ``R_m`` the legacy target rate in BPCU.
    """

    M: int
    m: int
    n: int
    beta: float
    rho_n: float
    rho_m: float
    R_m: float

    def __post_init__(self):
        for name in ("M", "m", "n"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("beta", "rho_n", "rho_m", "R_m"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.M < 2:
            raise ConfigError(f"M must be at least 2, got {self.M}")
        if not (1 <= self.m <= self.M and 1 <= self.n <= self.M):
            raise ConfigError(f"m and n must lie in 1..{self.M}, got m={self.m}, n={self.n}")
        if self.m == self.n:
            raise ConfigError("legacy and opportunistic users must differ (m == n)")
        if not 0.0 < self.beta < 0.5:
            raise ConfigError(f"beta must lie in (0, 1/2), got {self.beta}")
        if self.rho_n <= 0 or self.rho_m <= 0:
            raise ConfigError("rho_n and rho_m must be positive")
        if self.R_m <= 0:
            raise ConfigError(f"R_m must be positive, got {self.R_m}")

    @classmethod
    def from_snr_db(cls, M, m, n, beta, snr_db, ratio, R_m):
        """Build a config with ``rho_n = 10**(snr_db/10)`` and ``rho_m = rho_n/ratio``."""
        rho_n = 10.0 ** (float(snr_db) / 10.0)
        if ratio <= 0:
            raise ConfigError(f"power ratio must be positive, got {ratio}")
        return cls(M=M, m=m, n=n, beta=beta, rho_n=rho_n, rho_m=rho_n / ratio, R_m=R_m)

    @property
    def eta(self):
        return self.rho_n / self.rho_m

    @property
    def snr_db(self):
        return 10.0 * math.log10(self.rho_n)

    @property
    def eps_m(self):
        return math.expm1(self.R_m * LN2)

    @property
    def alpha_m(self):
        return self.eps_m / self.rho_m

    def replace(self, **changes):
        return replace(self, **changes)

    def with_snr_db(self, snr_db):
        """Same power ratio, new ``rho_n`` (SNR is defined as ``rho_n``)."""
        return SystemConfig.from_snr_db(self.M, self.m, self.n, self.beta, snr_db, self.eta, self.R_m)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of ``M`` ordered squared channel gains (ascending)."""

    gains: np.ndarray

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float)
        if gains.ndim != 1 or gains.size < 2:
            raise ValueError("gains must be a 1-D vector of at least two entries")
        if np.any(gains < 0) or np.any(np.diff(gains) < 0):
            raise ValueError("gains must be non-negative and nondecreasing")
        gains.setflags(write=False)
        object.__setattr__(self, "gains", gains)

    def pair(self, cfg):
        """``(|h_m|^2, |h_n|^2)`` for the pair selected by ``cfg`` (1-based)."""
        return float(self.gains[cfg.m - 1]), float(self.gains[cfg.n - 1])


@dataclass(frozen=True)
class RateBreakdown:
    noma_slot_rate: float
    oma_slot_rate: float
    oma_baseline_rate: float
    sic_stage: int


def interference_threshold(rho_m, h_m_sq, R_m):
    """Largest interference power ``tau_m`` the legacy user tolerates at rate ``R_m``."""
    eps = math.expm1(R_m * LN2)
    return np.maximum(0.0, rho_m * np.asarray(h_m_sq, dtype=float) / eps - 1.0)[()]


def _hsic_parts(cfg, h_m_sq, h_n_sq):
    x = np.asarray(h_m_sq, dtype=float)
    y = np.asarray(h_n_sq, dtype=float)
    rx = cfg.beta * cfg.rho_n * y
    tau = interference_threshold(cfg.rho_m, x, cfg.R_m)
    second = rx <= tau
    inr = cfg.rho_m * x + 1.0
    nat = np.where(second, np.log1p(rx), np.log1p(rx / inr))
    return nat, second, rx


def hsic_noma_rate(cfg, h_m_sq, h_n_sq):
    """Rate of U_n in the shared slot under hybrid SIC, with its decode stage.

    Stage 2 (after the legacy user is removed) is used whenever the received
    power ``beta*rho_n*|h_n|^2`` does not exceed ``tau_m``; otherwise U_n is
    decoded first, treating the legacy signal as noise.
    """
    nat, second, _ = _hsic_parts(cfg, h_m_sq, h_n_sq)
    stage = np.where(second, 2, 1)
    return (nat / LN2)[()], stage[()]


def fsic_noma_rate(cfg, h_m_sq, h_n_sq):
    """Rate of U_n in the shared slot when it is always decoded first."""
    x = np.asarray(h_m_sq, dtype=float)
    y = np.asarray(h_n_sq, dtype=float)
    return (np.log1p(cfg.beta * cfg.rho_n * y / (cfg.rho_m * x + 1.0)) / LN2)[()]


def rate_breakdown(cfg, h_m_sq, h_n_sq, scheme=Scheme.HSIC_HYBRID):
    scheme = Scheme.parse(scheme)
    y = float(h_n_sq)
    baseline = math.log1p(cfg.rho_n * y) / LN2
    if scheme is Scheme.OMA:
        return RateBreakdown(0.0, 0.0, baseline, 1)
    if scheme is Scheme.HSIC_HYBRID:
        noma, stage = hsic_noma_rate(cfg, h_m_sq, h_n_sq)
    else:
        noma, stage = fsic_noma_rate(cfg, h_m_sq, h_n_sq), 1
    oma = math.log1p(cfg.beta * cfg.rho_n * y) / LN2
    return RateBreakdown(float(noma), oma, baseline, int(stage))


def hybrid_vs_oma_indicator(scheme, cfg, h_m_sq, h_n_sq, base=None):
    """True where the two-slot hybrid rate does not exceed the OMA rate.

    ``base`` selects the logarithm used for the rates (natural log when
    ``None``); the outcome is the same for any base.
    """
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.OMA:
        raise ConfigError("the hybrid-vs-OMA comparison needs a hybrid scheme, got OMA")
    y = np.asarray(h_n_sq, dtype=float)
    if scheme is Scheme.HSIC_HYBRID:
        noma, _, rx = _hsic_parts(cfg, h_m_sq, y)
    else:
        rx = cfg.beta * cfg.rho_n * y
        noma = np.log1p(rx / (cfg.rho_m * np.asarray(h_m_sq, dtype=float) + 1.0))
    own = np.log1p(rx)
    baseline = np.log1p(cfg.rho_n * y)
    if base is not None:
        scale = math.log(base)
        noma, own, baseline = noma / scale, own / scale, baseline / scale
    return (noma + own <= baseline)[()]


def legacy_transparency_check(cfg, h_m_sq, h_n_sq, rtol=1e-12):
    """Whether admitting U_n leaves the legacy user's outage unchanged.

    Only realisations in which U_m would succeed under OMA impose a
    requirement. Stage-2 admission must keep the legacy SINR at or above
    ``eps_m``; stage-1 admission removes U_n before U_m is decoded.
    ``rtol`` absorbs rounding at the exact ``beta*rho_n*|h_n|^2 == tau_m`` tie.
    """
    x = np.asarray(h_m_sq, dtype=float)
    y = np.asarray(h_n_sq, dtype=float)
    eps = cfg.eps_m
    signal = cfg.rho_m * x
    oma_ok = signal >= eps * (1.0 - rtol)
    _, second, rx = _hsic_parts(cfg, x, y)
    sinr_ok = signal >= eps * (rx + 1.0) * (1.0 - rtol)
    return (~oma_ok | ~second | sinr_ok)[()]


def lemma_regions(cfg, h_m_sq, h_n_sq):
    """Vectorised region codes (index into ``REGION_ORDER``).

    The failure event splits by decode stage: with ``tau_m > 0`` a stage-2
    realisation fails iff ``|h_n|^2 <= omega3`` (P11 below ``omega2``, P12
    above), a stage-1 realisation fails iff ``|h_n|^2 <= Psi`` (P21); with
    ``tau_m == 0`` every failure is counted in P22.
    """
    x = np.asarray(h_m_sq, dtype=float)
    y = np.asarray(h_n_sq, dtype=float)
    beta, rho_n, rho_m = cfg.beta, cfg.rho_n, cfg.rho_m
    eps = cfg.eps_m
    alpha = eps / rho_m
    omega2 = (1.0 - beta) * alpha / beta
    omega3 = (1.0 - 2.0 * beta) / (beta * beta * rho_n)
    psi = ((1.0 - beta) * (rho_m * x + 1.0) - beta) / (beta * beta * rho_n)

    tau = interference_threshold(rho_m, x, cfg.R_m)
    second = beta * rho_n * y <= tau
    idle = tau <= 0.0

    codes = np.zeros(np.broadcast(x, y).shape, dtype=np.int8)
    fail_2 = second & (y <= omega3)
    fail_1 = ~second & (y <= psi)
    codes = np.where(~idle & fail_2 & (x < omega2), 1, codes)
    codes = np.where(~idle & fail_2 & (x >= omega2), 2, codes)
    codes = np.where(~idle & fail_1, 3, codes)
    codes = np.where(idle & (fail_1 | fail_2), 4, codes)
    return codes.astype(np.int8)[()]


def lemma1_region(cfg, h_m_sq, h_n_sq):
    """Region of the HSIC failure event containing one realisation."""
    return REGION_ORDER[int(lemma_regions(cfg, float(h_m_sq), float(h_n_sq)))]


def energy_per_frame(cfg, scheme):
    """Transmit energy U_n spends per frame (slot duration 1)."""
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.OMA:
        return cfg.rho_n
    return 2.0 * cfg.beta * cfg.rho_n
