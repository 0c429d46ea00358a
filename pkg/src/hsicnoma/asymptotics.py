"""High-SNR limits of the HSIC failure probability and decay-slope fitting.

Three limiting cases are covered:

* joint limit: ``rho_n, rho_m -> inf`` with ``eta = rho_n / rho_m`` fixed.
  Each piece of the probability either tends to a constant or decays like
  ``rho_m**-n`` (``m < n``) or ``rho_m**-n`` plus ``rho_m**-m`` (``m > n``).
  The coefficients depend on ``(M, m, n, beta, eps_m, eta)`` only.
* ``rho_m -> inf`` with ``rho_n`` fixed: a non-zero floor.
* ``rho_n -> inf`` with ``rho_m`` fixed: ``rho_n**-n`` decay.

Coefficients are polynomial sums with alternating signs, evaluated in mpmath
with the same precision-doubling loop as the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .closed_form import Table, _converged, _mphi, classify_regime
from .errors import DomainError, NonPositiveProbabilityError
from .estimates import Method, ProbabilityEstimate

EXTRAPOLATED_BELOW_DB = 25.0


@dataclass(frozen=True)
class AsymptoticConstants:
    """Scaled breakpoints of the joint limit (functions of beta, eps_m, eta only).

    ``varpi2`` and ``varpi5`` are ``rho_m * omega2`` and ``rho_m * omega5``.
    """

    M: int
    m: int
    n: int
    beta: float
    eps_m: float
    eta: float
    varpi1: float
    varpi2: float
    varpi3: float
    varpi4: float
    varpi5: float
    varpi6: float
    varpi7: float
    s_tilde: float

    @classmethod
    def from_config(cls, cfg):
        b, eps, eta = cfg.beta, cfg.eps_m, cfg.eta
        w5 = (1 - b) * eps / (b - (1 - b) * eps) if b != (1 - b) * eps else math.inf
        w3 = (1 - 2 * b) / (b * b * eta)
        chat_n = math.factorial(cfg.M) / (math.factorial(cfg.n - 1) * math.factorial(cfg.M - cfg.n))
        den1 = 1 / eps - b * eta
        den4 = b * b * eta - (1 - b)
        return cls(
            M=cfg.M, m=cfg.m, n=cfg.n, beta=b, eps_m=eps, eta=eta,
            varpi1=1 / den1 if den1 != 0 else math.inf,
            varpi2=(1 - b) * eps / b,
            varpi3=w3,
            varpi4=(1 - 2 * b) / den4 if den4 != 0 else math.inf,
            varpi5=w5,
            varpi6=((1 - b) * eps + 1 - 2 * b) / (b * b * eta),
            varpi7=(w5 / eps - 1) / (b * eta),
            s_tilde=chat_n * w3**cfg.n / cfg.n,
        )


class _Mp:
    """The same constants as mpmath numbers, rebuilt from exact inputs."""

    def __init__(self, cfg):
        mpf = mpmath.mpf
        self.M, self.m, self.n = cfg.M, cfg.m, cfg.n
        b = self.b = mpf(cfg.beta)
        eta = self.eta = mpf(cfg.rho_n) / mpf(cfg.rho_m)
        eps = self.eps = mpmath.expm1(mpf(cfg.R_m) * mpmath.log(2))
        self.be = b * eta
        self.b2e = b * b * eta
        self.w1 = 1 / (1 / eps - b * eta)
        self.w2 = (1 - b) * eps / b
        self.w3 = (1 - 2 * b) / (b * b * eta)
        self.w4 = (1 - 2 * b) / (b * b * eta - (1 - b))
        self.w5 = (1 - b) * eps / (b - (1 - b) * eps)
        self.w6 = ((1 - b) * eps + 1 - 2 * b) / (b * b * eta)
        self.w7 = (self.w5 / eps - 1) / (b * eta)


def _comb(n, k):
    return math.comb(n, k)


# --- m < n ------------------------------------------------------------------
# common form: c_mn * sum_p C(n-m-1, p) (-1)^p / (m+p) * body(p)


def _psi_poly(c, k, hi, lo):
    """sum_q C(k,q) (-1)^q (1-2b)^q (b^2 eta)^(k-q) (hi^(n-q) - lo^(n-q)) / ((1-b)^k (n-q))."""
    n = c.n
    total = mpmath.mpf(0)
    for q in range(k + 1):
        total += (_comb(k, q) * (-1) ** q * (1 - 2 * c.b) ** q * c.b2e ** (k - q)
                  * (hi ** (n - q) - lo ** (n - q)) / (n - q))
    return total / (1 - c.b) ** k


def _phi_poly(c, k, hi, lo):
    """sum_q C(k,q) (b eta)^(k-q) (hi^(n-q) - lo^(n-q)) / (n-q)."""
    n = c.n
    return mpmath.fsum(_comb(k, q) * c.be ** (k - q) * (hi ** (n - q) - lo ** (n - q)) / (n - q)
                       for q in range(k + 1))


def _Tt1(c, p):
    k, n = c.m + p, c.n
    return (c.w3**n - c.w1**n) / n - c.eps**k * _phi_poly(c, k, c.w3, c.w1)


def _Tt4(c, p):
    k, n = c.m + p, c.n
    return ((c.w4**n - c.eps**n) / n
            - c.eps**k * (c.w6 ** (n - k) - c.eps ** (n - k)) / (n - k)
            - _psi_poly(c, k, c.w4, c.w6))


def _Tt5(c, p):
    k, n = c.m + p, c.n
    return ((c.w1**n - c.eps**n) / n
            - c.eps**k * (c.w6 ** (n - k) - c.eps ** (n - k)) / (n - k)
            + c.eps**k * _phi_poly(c, k, c.w7, c.w1)
            - _psi_poly(c, k, c.w7, c.w6))


def _Tt6(c, p):
    k, n = c.m + p, c.n
    return (c.eps**n / n
            + c.eps**k * (c.w6 ** (n - k) - c.eps ** (n - k)) / (n - k)
            - _psi_poly(c, k, c.w6, c.w3))


def _Tt7(c, p):
    k, n = c.m + p, c.n
    return c.w4**n / n - _psi_poly(c, k, c.w4, c.w3)


def _r_lim(c, l, p):
    return l + p + 1 + (c.M - c.m - p) / (c.be * c.eps)


def _a_lim(c, l, p):
    return l + p + 1 + (c.M - c.m - p) * (1 - c.b) / c.b2e


def _Tt2(c, l, p):
    return 1 / _r_lim(c, l, p) - 1 / _a_lim(c, l, p)


def _Tt3(c, l, p):
    return mpmath.mpf(1) / (c.M - c.m + l + 1) - 1 / _a_lim(c, l, p)


# --- m > n ------------------------------------------------------------------
# common form: chat_mn * sum_p C(m-n-1, p) (-1)^p / (n+p) * body(p)


def _phi_inv_poly(c, k, hi, lo):
    """sum_q C(k,q) (-1)^q (hi^(m-q) - lo^(m-q)) / ((b eta)^k eps^(k-q) (m-q))."""
    m = c.m
    return mpmath.fsum(_comb(k, q) * (-1) ** q * (hi ** (m - q) - lo ** (m - q))
                       / (c.be**k * c.eps ** (k - q) * (m - q)) for q in range(k + 1))


def _psi_inv_poly(c, k, hi, lo):
    """sum_q C(k,q) (1-2b)^q (1-b)^(k-q) (hi^(m-q) - lo^(m-q)) / ((b^2 eta)^k (m-q))."""
    m = c.m
    return mpmath.fsum(_comb(k, q) * (1 - 2 * c.b) ** q * (1 - c.b) ** (k - q)
                       * (hi ** (m - q) - lo ** (m - q)) / (c.b2e**k * (m - q))
                       for q in range(k + 1))


# P1 - P(|h_n|^2 <= omega3) = -P(v <= omega3, u <= omega2) + P(alpha_m < u < omega2, v <= Phi(u)),
# both of order rho_m**-m; scaled by rho_m the second bound is min(Phi, u), Phi and u crossing at varpi1.


def _Qt1(c, p):
    # varpi3 >= varpi2: the first mass is the whole triangle below varpi2
    k, m = c.n + p, c.m
    return -c.w1**m / m + _phi_inv_poly(c, k, c.w1, c.eps)


def _Qt2(c, p):
    k, m = c.n + p, c.m
    return (_phi_inv_poly(c, k, c.w2, c.eps) - c.w3**k * c.w2 ** (m - k) / (m - k)
            + c.w3**m * (mpmath.mpf(1) / (m - k) - mpmath.mpf(1) / m))


def _Qt3(c, p):
    k, m = c.n + p, c.m
    return (c.w1**m - c.eps**m) / m - _phi_inv_poly(c, k, c.w1, c.eps)


def _Qt7(c, p):
    k, m = c.n + p, c.m
    return ((c.w4**m - c.eps**m) / m + _psi_inv_poly(c, k, c.w5, c.w4)
            - _phi_inv_poly(c, k, c.w5, c.eps))


def _Qt8(c, p):
    k = c.n + p
    return _psi_inv_poly(c, k, c.w5, c.eps) - _phi_inv_poly(c, k, c.w5, c.eps)


def _Qt9(c, p):
    return c.eps**c.m / c.m


def _Qt10(c, p):
    k, m = c.n + p, c.m
    return c.w4**m / m + _psi_inv_poly(c, k, c.eps, c.w4)


def _t_lim(c, l, p):
    return c.M - c.n - p + (l + p + 1) / (c.be * c.eps)


def _s_lim(c, l, p):
    return c.M - c.n - p + (l + p + 1) * (1 - c.b) / c.b2e


def _Qt4(c, l, p):
    return 1 / _t_lim(c, l, p) - mpmath.mpf(1) / (c.M - c.n + l + 1)


def _Qt5(c, l, p):
    return 1 / _t_lim(c, l, p) - 1 / _s_lim(c, l, p)


_Qt6 = _Qt5

# single-index (polynomial) and double-index (binomial-exponential) terms
_POLY = {"T1": _Tt1, "T4": _Tt4, "T5": _Tt5, "T6": _Tt6, "T7": _Tt7,
         "Q1": _Qt1, "Q2": _Qt2, "Q3": _Qt3, "Q7": _Qt7, "Q8": _Qt8, "Q9": _Qt9, "Q10": _Qt10}
_DOUBLE = {"T2": _Tt2, "T3": _Tt3, "Q4": _Qt4, "Q5": _Qt5, "Q6": _Qt6}


def _limit_term_mp(cfg, name):
    c = _Mp(cfg)
    M, m, n = cfg.M, cfg.m, cfg.n
    f = math.factorial
    lower = name.startswith("T")
    if lower and not m < n or not lower and not m > n:
        raise DomainError(f"{name} does not apply to m={m}, n={n}")
    if lower:
        lead = mpmath.mpf(f(M)) / (f(m - 1) * f(n - m - 1) * f(M - n))
        gap, first = n - m - 1, m
    else:
        lead = mpmath.mpf(f(M)) / (f(n - 1) * f(m - n - 1) * f(M - m))
        gap, first = m - n - 1, n
    total = mpmath.mpf(0)
    if name in _POLY:
        body = _POLY[name]
        for p in range(gap + 1):
            total += _comb(gap, p) * (-1) ** p * body(c, p) / (first + p)
        return lead * total
    body = _DOUBLE[name]
    for p in range(gap + 1):
        cp = _comb(gap, p) * (-1) ** (gap - p)
        for l in range(first):
            cl = _comb(first - 1, l) * (-1) ** l
            weight = (M - m - p) if lower else (l + p + 1)
            total += cp * cl * body(c, l, p) / weight
    return lead * total


def limit_term(cfg, name):
    """Coefficient ``T~k`` / ``Q~k`` of the joint limit as a float."""
    return float(_converged(lambda: _limit_term_mp(cfg, name)))


# (P1, P21, P22) per column: (term, rho_m exponent) with exponent None for a constant
_n, _m = "n", "m"
LIMIT_TABLES = {
    Table.I: {1: (("T1", _n), ("T2", None), ("T6", _n)),
              2: (None, ("T2", None), ("T6", _n)),
              3: (None, ("T3", None), ("T6", _n)),
              4: (None, ("T4", _n), ("T6", _n)),
              5: (None, None, ("T7", _n))},
    Table.II: {1: (("T1", _n), ("T5", _n), ("T6", _n)),
               2: (None, ("T5", _n), ("T6", _n)),
               3: (None, ("T4", _n), ("T6", _n)),
               4: (None, None, ("T7", _n))},
    Table.III: {1: (("Q1", _m), ("Q3", _m), ("Q9", _m)),
                2: (("Q2", _m), ("Q3", _m), ("Q9", _m)),
                3: (("Q2", _m), ("Q4", None), ("Q9", _m)),
                4: (("Q2", _m), ("Q5", None), ("Q9", _m)),
                5: (("Q2", _m), ("Q6", None), ("Q10", _m))},
    Table.IV: {1: (("Q1", _m), ("Q3", _m), ("Q9", _m)),
               2: (("Q2", _m), ("Q3", _m), ("Q9", _m)),
               3: (("Q2", _m), ("Q7", _m), ("Q9", _m)),
               4: (("Q2", _m), ("Q8", _m), ("Q10", _m))},
}


def joint_limit_parts(cfg):
    """``{"P1", "P21", "P22"}`` of the joint-limit approximation at ``cfg``'s SNR."""
    if cfg.m == cfg.n:
        raise DomainError("m == n has no joint limit")
    regime = classify_regime(cfg)
    rho = cfg.rho_m
    parts = {}
    for part, entry in zip(("P1", "P21", "P22"), LIMIT_TABLES[regime.table][regime.column]):
        if entry is None:
            parts[part] = 0.0
            continue
        name, power = entry
        coef = limit_term(cfg, name)
        if power is not None:
            coef /= rho ** (cfg.n if power == _n else cfg.m)
        parts[part] = coef
    if cfg.m > cfg.n:
        parts["P1"] += AsymptoticConstants.from_config(cfg).s_tilde / rho**cfg.n
    return parts, regime


def ptilde_joint_limit(cfg):
    """Joint-limit approximation of the HSIC failure probability."""
    parts, regime = joint_limit_parts(cfg)
    value = math.fsum(parts.values())
    flags = [f"table={regime.table.value}", f"column={regime.column}"]
    if cfg.snr_db < EXTRAPOLATED_BELOW_DB:
        flags.append("extrapolated")
    return ProbabilityEstimate(min(max(value, 0.0), 1.0), 0.0, 0, Method.ASYMPTOTIC, tuple(flags))


def joint_limit_vanishes(cfg):
    """Whether every entry of the governing column decays with SNR."""
    if cfg.m == cfg.n:
        raise DomainError("m == n has no joint limit")
    regime = classify_regime(cfg)
    entries = LIMIT_TABLES[regime.table][regime.column]
    return all(e is None or e[1] is not None for e in entries)


# --- rho_m -> inf with rho_n fixed -----------------------------------------


def _floor_mp(cfg):
    M, m, n = cfg.M, cfg.m, cfg.n
    b = mpmath.mpf(cfg.beta)
    w3 = (1 - 2 * b) / (b * b * mpmath.mpf(cfg.rho_n))
    f = math.factorial
    total = mpmath.mpf(0)
    if m < n:
        lead = mpmath.mpf(f(M)) / (f(m - 1) * f(n - m - 1) * f(M - n))
        for p in range(n - m):
            cp = _comb(n - m - 1, p) * (-1) ** (n - m - 1 - p)
            for l in range(m):
                cl = _comb(m - 1, l) * (-1) ** l
                total += cp * cl / (M - m - p) * (
                    _mphi(0, w3, M - m + l + 1)
                    - mpmath.exp(-(M - m - p) * w3) * _mphi(0, w3, l + p + 1))
    else:
        lead = mpmath.mpf(f(M)) / (f(n - 1) * f(m - n - 1) * f(M - m))
        for p in range(m - n):
            cp = _comb(m - n - 1, p) * (-1) ** (m - n - 1 - p)
            for l in range(n):
                cl = _comb(n - 1, l) * (-1) ** l
                total += (cp * cl / (l + p + 1)
                          * (mpmath.mpf(1) / (M - n - p) - mpmath.mpf(1) / (M - n + l + 1))
                          * -mpmath.expm1(-(M - n + l + 1) * w3))
    return lead * total


def ptilde_floor_rho_m_inf(cfg):
    """Limit of the HSIC failure probability as ``rho_m -> inf`` at fixed ``rho_n``.

    Only ``rho_n`` (through ``(1-2 beta)/(beta^2 rho_n)``) and the indices
    enter; ``rho_m`` and ``R_m`` of ``cfg`` are ignored.
    """
    if cfg.m == cfg.n:
        raise DomainError("m == n")
    value = float(_converged(lambda: _floor_mp(cfg)))
    return ProbabilityEstimate(min(max(value, 0.0), 1.0), 0.0, 0, Method.ASYMPTOTIC,
                               ("limit=rho_m",))


# --- rho_n -> inf with rho_m fixed -----------------------------------------

GROUPINGS = ("typeset", "alternate")


def _rho_n_lower(cfg, grouping):
    M, m, n, b = cfg.M, cfg.m, cfg.n, cfg.beta
    f = math.factorial
    c_mn = f(M) / (f(m - 1) * f(n - m - 1) * f(M - n))
    total = 0.0
    for p in range(n - m):
        sign = _comb(n - m - 1, p) * (-1) ** p
        if grouping == "typeset":
            total += sign / (n - m - p) * (1 / (m + p) - 1 / n)
        else:
            total += sign / ((n - m - p) * (1 / (m + p) - 1 / n))
    return c_mn * total * ((1 - 2 * b) / b**2) ** n / cfg.rho_n**n


def _rho_n_upper(cfg):
    M, m, n, b = cfg.M, cfg.m, cfg.n, cfg.beta
    f = math.factorial
    chat_n = f(M) / (f(n - 1) * f(M - n))
    lead = chat_n / n * ((1 - 2 * b) / b**2) ** n
    if cfg.eps_m <= b / (1 - b):
        return lead / cfg.rho_n**n
    chat_mn = f(M) / (f(n - 1) * f(m - n - 1) * f(M - m))
    alpha, rho_m = cfg.alpha_m, cfg.rho_m
    total = 0.0
    for s in range(m - n):
        d = M - m + 1 + s
        inner = 0.0
        for i in range(1, n + 1):
            weight = ((1 - b) ** i * rho_m**i * (1 - 2 * b) ** (n - i) / b ** (2 * n)
                      - (-1) ** (n - i) * alpha ** (-i) / b**n)
            moments = alpha**i / d + sum(
                math.factorial(i) * alpha ** (i - q) / (math.factorial(i - q) * d ** (q + 1))
                for q in range(1, i + 1))
            inner += _comb(n, i) * weight * moments
        inner += (((1 - 2 * b) / b**2) ** n - (-1 / b) ** n) / d
        total += _comb(m - n - 1, s) * (-1) ** s / n * math.exp(-d * alpha) * inner
    return (chat_mn * total + lead) / cfg.rho_n**n


def ptilde_rho_n_inf(cfg, grouping="typeset"):
    """Leading ``rho_n**-n`` behaviour as ``rho_n -> inf`` at fixed ``rho_m``.

    ``grouping`` selects between the two readings of the nested fraction in
    the ``m < n`` coefficient; ``"typeset"`` is the one the oracle supports.
    """
    if cfg.m == cfg.n:
        raise DomainError("m == n")
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    value = _rho_n_lower(cfg, grouping) if cfg.m < cfg.n else _rho_n_upper(cfg)
    return ProbabilityEstimate(min(max(value, 0.0), 1.0), 0.0, 0, Method.ASYMPTOTIC,
                               ("limit=rho_n",))


# --- slopes ------------------------------------------------------------------


def decay_exponent_fit(points):
    """Least-squares slope of ``log10 P`` against ``log10 rho`` (``rho`` in linear units).

    ``points`` is a sequence of ``(snr_db, probability)``. A probability that
    decays like ``rho**-n`` gives a slope near ``-n``; a floor gives ~0.
    """
    pts = list(points)
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    snr = np.array([float(s) for s, _ in pts])
    prob = np.array([float(p) for _, p in pts])
    if np.any(np.diff(snr) <= 0):
        raise ValueError("SNR values must be strictly increasing")
    if np.any(~(prob > 0)):
        raise NonPositiveProbabilityError("decay fit needs strictly positive probabilities")
    # centred least squares: an exactly flat series gives exactly zero
    x = snr / 10.0 - np.mean(snr / 10.0)
    y = np.log10(prob)
    y = y - np.mean(y)
    return float(np.dot(x, y) / np.dot(x, x))
