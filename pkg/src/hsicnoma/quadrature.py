"""Ground-truth failure probabilities by adaptive 2-D quadrature.

The oracle integrates the joint density of two order statistics of ``M`` iid
unit exponentials over the four failure regions. Only the region predicates
(straight lines in the ``(|h_m|^2, |h_n|^2)`` plane) and the density are
used, so agreement with the closed form is independent evidence.

The outer variable is always the legacy gain ``u = |h_m|^2``; the inner one is
the opportunistic gain ``v = |h_n|^2``. Every boundary is affine in ``u``, so
the outer axis is split at all pairwise line intersections and the inner
limits are smooth on each panel.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, NonConvergenceError
from .estimates import Method, ProbabilityEstimate
from .model import Region


def _cdf(x):
    return -math.expm1(-x)


def joint_order_stat_pdf(M, i, j, x, y):
    """Density of the (i-th, j-th) smallest of ``M`` iid Exp(1) at ``x <= y``."""
    if not (1 <= i < j <= M):
        raise DomainError(f"need 1 <= i < j <= M, got i={i}, j={j}, M={M}")
    if x < 0 or x > y:
        raise DomainError(f"density support is 0 <= x <= y, got x={x}, y={y}")
    coef = math.factorial(M) / (
        math.factorial(i - 1) * math.factorial(j - i - 1) * math.factorial(M - j)
    )
    gap = math.exp(-x) * -math.expm1(-(y - x))  # F(y) - F(x) without cancellation
    return (
        coef
        * _cdf(x) ** (i - 1)
        * gap ** (j - i - 1)
        * math.exp(-(M - j) * y)
        * math.exp(-x - y)
    )


def order_stat_pdf(M, k, x):
    """Marginal density of the k-th smallest of ``M`` iid Exp(1)."""
    if not 1 <= k <= M:
        raise DomainError(f"need 1 <= k <= M, got k={k}, M={M}")
    coef = math.factorial(M) / (math.factorial(k - 1) * math.factorial(M - k))
    return coef * _cdf(x) ** (k - 1) * math.exp(-(M - k + 1) * x)


@dataclass(frozen=True)
class Line:
    """``v = offset + slope * u``."""

    offset: float
    slope: float

    def __call__(self, u):
        return self.offset + self.slope * u


@dataclass(frozen=True)
class RegionSpec:
    """One failure region as ``u_lo < u < u_hi`` and ``max(lower) < v <= min(upper)``.

    The order-statistic support (``v > u`` when ``m < n``, ``v < u`` when
    ``m > n``) and ``v >= 0`` are already folded into the line lists.
    """

    region: Region
    u_bounds: tuple
    lower: tuple
    upper: tuple

    def v_bounds(self, u):
        lo = max(line(u) for line in self.lower)
        hi = min(line(u) for line in self.upper)
        return lo, hi

    def panels(self):
        """Sub-intervals of the ``u`` range on which the region is non-empty."""
        a, b = self.u_bounds
        if not a < b:
            return []
        lines = self.lower + self.upper
        cuts = {a, b}
        for k, p in enumerate(lines):
            for q in lines[k + 1:]:
                if p.slope != q.slope:
                    u = (q.offset - p.offset) / (p.slope - q.slope)
                    if a < u < b:
                        cuts.add(u)
        cuts = sorted(cuts)
        out = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            probe = 0.5 * (lo + hi) if math.isfinite(hi) else lo + 1.0
            vlo, vhi = self.v_bounds(probe)
            if vhi > vlo:
                out.append((lo, hi))
        return out


def region_specs(cfg):
    """The four failure regions of ``cfg`` as ``{Region: RegionSpec}``."""
    beta, rho_n, rho_m = cfg.beta, cfg.rho_n, cfg.rho_m
    alpha = cfg.alpha_m
    omega2 = (1.0 - beta) * alpha / beta
    omega3 = (1.0 - 2.0 * beta) / (beta * beta * rho_n)
    phi = Line(-1.0 / (beta * rho_n), 1.0 / (alpha * beta * rho_n))
    psi = Line(omega3, (1.0 - beta) * rho_m / (beta * beta * rho_n))
    flat = Line(omega3, 0.0)
    zero = Line(0.0, 0.0)
    diagonal = Line(0.0, 1.0)

    if cfg.m < cfg.n:
        base_lower, base_upper = (zero, diagonal), ()
    else:
        base_lower, base_upper = (zero,), (diagonal,)

    def spec(region, u_bounds, lower=(), upper=()):
        return RegionSpec(region, u_bounds, base_lower + lower, base_upper + upper)

    return {
        Region.P11: spec(Region.P11, (alpha, omega2), upper=(phi,)),
        Region.P12: spec(Region.P12, (omega2, math.inf), upper=(flat,)),
        Region.P21: spec(Region.P21, (alpha, math.inf), lower=(phi,), upper=(psi,)),
        Region.P22: spec(Region.P22, (0.0, alpha), upper=(psi,)),
    }


ROUNDOFF_RTOL = 1e-6


def _quad(func, a, b, tol):
    """``(value, error)`` of ``quad``; warnings become ``NonConvergenceError``.

    A nested inner integral carries its own rounding noise, so quadpack may
    flag roundoff before reaching ``tol``, and an integrand that underflows to
    zero is reported as divergent. Such results are kept (with their error
    estimate) when the estimate is within ``ROUNDOFF_RTOL`` relative.
    """
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(func, a, b, epsabs=0.0, epsrel=tol, limit=200)
    if caught:
        msg = str(caught[0].message).strip().splitlines()[0]
        if err > ROUNDOFF_RTOL * abs(val):
            raise NonConvergenceError(msg)
    return val, err


_HEAD = 40.0


def _quad_decaying(func, a, b, tol):
    """Integral of an exponentially decaying integrand over ``(a, b)``, ``b`` may be inf.

    Long intervals are split into a head ``(a, a + 40)`` and a tail mapped to a
    bounded range by ``u = c - log(1 - w)``; plain adaptive rules otherwise miss
    mass concentrated near ``a`` when ``b`` is astronomically far away.
    """
    if b - a <= _HEAD:
        return _quad(func, a, b, tol)
    c = a + _HEAD
    val, err = _quad(func, a, c, tol)
    w_hi = 1.0 if math.isinf(b) else -math.expm1(-(b - c))

    def mapped(w):
        return func(c - math.log1p(-w)) / (1.0 - w) if w < 1.0 else 0.0

    tail, tail_err = _quad(mapped, 0.0, w_hi, tol)
    return val + tail, err + tail_err


_GEOMETRIC_SPLITS = 24


def _quad_geometric(func, a, b, tol):
    """``_quad_decaying`` with the first unit-scale stretch cut at ``a + 2**-k``.

    Steep region boundaries make the outer integrand collapse within a tiny
    distance of ``a``; the geometric cuts let every piece resolve its own scale.
    """
    cuts = [a + 2.0**-k for k in range(_GEOMETRIC_SPLITS, -1, -1) if a + 2.0**-k < b]
    edges = [a] + [c for c in cuts if c > a]
    val = err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = _quad(func, lo, hi, tol)
        val += v
        err += e
    v, e = _quad_decaying(func, edges[-1], b, tol)
    return val + v, err + e


def integrate_region(cfg, spec, tol=1e-10):
    """Mass of one failure region by nested adaptive quadrature."""
    if not 1e-12 <= tol <= 1e-3:
        raise ConfigError(f"tol must lie in [1e-12, 1e-3], got {tol}")
    M, m, n = cfg.M, cfg.m, cfg.n
    if m < n:
        density = lambda u, v: joint_order_stat_pdf(M, m, n, u, v)  # noqa: E731
    else:
        density = lambda u, v: joint_order_stat_pdf(M, n, m, v, u)  # noqa: E731
    inner_tol = max(tol * 1e-2, 1e-13)

    def outer(u):
        lo, hi = spec.v_bounds(u)
        if hi <= lo:
            return 0.0
        return _quad_decaying(lambda v: density(u, v), lo, hi, inner_tol)[0]

    total = 0.0
    err = 0.0
    for a, b in spec.panels():
        val, e = _quad_geometric(outer, a, b, tol)
        total += val
        err += e
    value = min(max(total, 0.0), 1.0)
    return ProbabilityEstimate(value, err, 0, Method.QUADRATURE)


def region_masses(cfg, tol=1e-10):
    return {region: integrate_region(cfg, spec, tol) for region, spec in region_specs(cfg).items()}


def ptilde_quadrature(cfg, tol=1e-10):
    """HSIC failure probability as the sum of the four region integrals."""
    masses = region_masses(cfg, tol)
    value = math.fsum(est.value for est in masses.values())
    err = math.fsum(est.stderr for est in masses.values())
    return ProbabilityEstimate(min(value, 1.0), err, 0, Method.QUADRATURE)


def pdf_normalization(M, i, j, tol=1e-12):
    """Integral of the joint density over ``0 < x < y < inf`` (should be 1)."""

    def outer(x):
        return integrate.quad(lambda y: joint_order_stat_pdf(M, i, j, x, y), x, np.inf,
                              epsabs=1e-14, epsrel=tol, limit=200)[0]

    return integrate.quad(outer, 0.0, np.inf, epsabs=1e-14, epsrel=tol, limit=200)[0]
