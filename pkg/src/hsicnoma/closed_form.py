"""Exact HSIC failure probability as finite sums of exponentials.

Each failure region is a polygon in the gain plane and the joint order
statistic density is a signed sum of exponentials, so every region mass is a
double sum over binomial indices ``(p, l)`` of elementary terms. The sums
alternate in sign and lose many digits to cancellation once the probability
is small, so they are evaluated in mpmath at a working precision that is
doubled until two successive precisions agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import mpmath

from .errors import DomainError, SingularRegimeError
from .estimates import Method, ProbabilityEstimate

SINGULAR_RTOL = 1e-9
RANGE_TOL = 1e-9


class Table(str, Enum):
    I = "I"  # noqa: E741
    II = "II"
    III = "III"
    IV = "IV"


@dataclass(frozen=True)
class RegimeClass:
    table: Table
    column: int
    eps_branch: bool

    @property
    def label(self):
        return f"{self.table.value}/{self.column}"


def _binom(n, k):
    return math.comb(n, k)


def _ratio(num, den, scale):
    """``num/den`` and whether ``den`` is within ``SINGULAR_RTOL`` of zero."""
    singular = abs(den) <= SINGULAR_RTOL * scale
    return (num / den if den != 0 else math.inf), singular


@dataclass(frozen=True)
class DerivedConstants:
    """Every scalar the closed form and its limits are built from."""

    eps_m: float
    alpha_m: float
    eta: float
    omega1: float
    omega2: float
    omega3: float
    omega4: float
    omega5: float
    kappa1: float
    kappa2: float
    kappa3: float
    c_mn: float | None
    chat_mn: float | None
    chat_n: float
    singular: tuple = field(default=())
    M: int = 0
    m: int = 0
    n: int = 0
    beta: float = 0.0
    rho_n: float = 0.0
    rho_m: float = 0.0

    @property
    def breakpoints(self):
        """Column edges of the governing table, in increasing order."""
        if self.eps_m > self.beta / (1.0 - self.beta):
            b = self.beta
            return (self.kappa1, 1.0 / (b * self.eps_m), (1.0 - b) / b**2, self.kappa2)
        return (self.kappa1, self.kappa3, self.kappa2)

    def c_l(self, l):
        return _binom(self.m - 1, l) * (-1) ** l

    def c_p(self, p):
        k = self.n - self.m - 1
        return _binom(k, p) * (-1) ** (k - p)

    def chat_l(self, l):
        return _binom(self.n - 1, l) * (-1) ** l

    def chat_p(self, p):
        k = self.m - self.n - 1
        return _binom(k, p) * (-1) ** (k - p)

    def r(self, l, p):
        return l + p + 1 + (self.M - self.m - p) / (self.beta * self.rho_n * self.alpha_m)

    def a(self, l, p):
        b = self.beta
        return l + p + 1 + (self.M - self.m - p) * (1 - b) * self.rho_m / (b * b * self.rho_n)

    def t(self, l, p):
        return self.M - self.n - p + (l + p + 1) / (self.beta * self.rho_n * self.alpha_m)

    def s(self, l, p):
        b = self.beta
        return self.M - self.n - p + (l + p + 1) * (1 - b) * self.rho_m / (b * b * self.rho_n)


def derive_constants(cfg):
    beta, rho_n, rho_m = cfg.beta, cfg.rho_n, cfg.rho_m
    eps = cfg.eps_m
    alpha = eps / rho_m
    singular = []

    omega1, sing = _ratio(1.0, 1.0 / alpha - beta * rho_n, max(1.0 / alpha, beta * rho_n))
    if sing:
        singular.append("omega1")
    omega4, sing = _ratio(1.0 - 2 * beta, beta**2 * rho_n - (1 - beta) * rho_m,
                          max(beta**2 * rho_n, (1 - beta) * rho_m))
    if sing:
        singular.append("omega4")
    omega5, sing = _ratio(1.0 - beta, beta / alpha - (1 - beta) * rho_m,
                          max(beta / alpha, (1 - beta) * rho_m))
    if sing:
        singular.append("omega5")

    kappa1 = (1 - 2 * beta) / ((1 - beta) * beta * eps)
    M, m, n = cfg.M, cfg.m, cfg.n
    f = math.factorial
    return DerivedConstants(
        eps_m=eps,
        alpha_m=alpha,
        eta=rho_n / rho_m,
        omega1=omega1,
        omega2=(1 - beta) * alpha / beta,
        omega3=(1 - 2 * beta) / (beta**2 * rho_n),
        omega4=omega4,
        omega5=omega5,
        kappa1=kappa1,
        kappa2=(1 - 2 * beta) / (beta**2 * eps) + (1 - beta) / beta**2,
        kappa3=kappa1 + 1 / beta,
        c_mn=f(M) / (f(m - 1) * f(n - m - 1) * f(M - n)) if m < n else None,
        chat_mn=f(M) / (f(n - 1) * f(m - n - 1) * f(M - m)) if m > n else None,
        chat_n=f(M) / (f(n - 1) * f(M - n)),
        singular=tuple(singular),
        M=M, m=m, n=n, beta=beta, rho_n=rho_n, rho_m=rho_m,
    )


def classify_regime(cfg, k=None):
    """Which table and column of the piecewise closed form governs ``cfg``.

    Columns are ``eta <= b1``, ``b1 < eta <= b2``, ... and finally ``eta > b_last``.
    """
    if cfg.m == cfg.n:
        raise DomainError("m == n has no regime")
    k = k or derive_constants(cfg)
    eps_branch = k.eps_m > cfg.beta / (1.0 - cfg.beta)
    if cfg.m < cfg.n:
        table = Table.I if eps_branch else Table.II
    else:
        table = Table.III if eps_branch else Table.IV
    column = 1 + sum(1 for edge in k.breakpoints if k.eta > edge)
    return RegimeClass(table, column, eps_branch)


def phi_kernel(x, y, z):
    """``(exp(-x z) - exp(-y z)) / z`` without cancellation; ``y - x`` as ``z -> 0``."""
    if abs(z) < 1e-12:
        return (y - x) * (1.0 - 0.5 * (x + y) * z)
    return -math.exp(-x * z) * math.expm1(-(y - x) * z) / z


# --- multiprecision evaluation ---------------------------------------------


def _mphi(x, y, z, shift=0):
    """``exp(shift) * phi(x, y, z)`` in the current mpmath context."""
    if x == y:
        return mpmath.mpf(0)
    if mpmath.isinf(y):
        return mpmath.exp(shift - x * z) / z
    return -mpmath.exp(shift - x * z) * mpmath.expm1(-(y - x) * z) / z


class _Ctx:
    """Constants of one configuration, converted at the current precision."""

    def __init__(self, cfg):
        mpf = mpmath.mpf
        self.M, self.m, self.n = cfg.M, cfg.m, cfg.n
        beta = self.beta = mpf(cfg.beta)
        rho_n = self.rho_n = mpf(cfg.rho_n)
        rho_m = self.rho_m = mpf(cfg.rho_m)
        self.eps = mpmath.expm1(mpf(cfg.R_m) * mpmath.log(2))
        alpha = self.alpha = self.eps / rho_m
        self.w1 = 1 / (1 / alpha - beta * rho_n)
        self.w2 = (1 - beta) * alpha / beta
        self.w3 = (1 - 2 * beta) / (beta**2 * rho_n)
        self.w4 = (1 - 2 * beta) / (beta**2 * rho_n - (1 - beta) * rho_m)
        self.w5 = (1 - beta) / (beta / alpha - (1 - beta) * rho_m)
        self.inv_brn = 1 / (beta * rho_n)
        self.psi_slope = (1 - beta) * rho_m / (beta**2 * rho_n)
        self.phi_slope = 1 / (beta * rho_n * alpha)


# m < n: density sum_{p,l} c_p c_l exp(-(l+p+1) x - (M-m-p) y), x = |h_m|^2 < y = |h_n|^2.
# Each term below is the (p, l) bracket; the common factor is c_mn c_p c_l / (M-m-p).


def _T1(c, l, p):
    by, K = c.M - c.m - p, c.M - c.m + l + 1
    r = l + p + 1 + by * c.phi_slope
    return (_mphi(c.w1, c.w3, K) - _mphi(c.w1, c.w2, r, by * c.inv_brn)
            - _mphi(c.w2, c.w3, l + p + 1, -by * c.w3))


def _T2(c, l, p):
    by, K = c.M - c.m - p, c.M - c.m + l + 1
    r = l + p + 1 + by * c.phi_slope
    a = l + p + 1 + by * c.psi_slope
    return (_mphi(c.alpha, c.w1, K) - mpmath.exp(-by * c.w3 - a * c.alpha) / a
            + mpmath.exp(by * c.inv_brn - r * c.w1) / r)


def _T3(c, l, p):
    by, K = c.M - c.m - p, c.M - c.m + l + 1
    a = l + p + 1 + by * c.psi_slope
    return mpmath.exp(-K * c.alpha) / K - mpmath.exp(-by * c.w3 - a * c.alpha) / a


def _T4(c, l, p):
    by, K = c.M - c.m - p, c.M - c.m + l + 1
    a = l + p + 1 + by * c.psi_slope
    return _mphi(c.alpha, c.w4, K) - _mphi(c.alpha, c.w4, a, -by * c.w3)


def _T5(c, l, p):
    by, K = c.M - c.m - p, c.M - c.m + l + 1
    r = l + p + 1 + by * c.phi_slope
    a = l + p + 1 + by * c.psi_slope
    return (_mphi(c.alpha, c.w1, K) - _mphi(c.alpha, c.w5, a, -by * c.w3)
            + _mphi(c.w1, c.w5, r, by * c.inv_brn))


def _T6(c, l, p):
    by, K = c.M - c.m - p, c.M - c.m + l + 1
    a = l + p + 1 + by * c.psi_slope
    return _mphi(0, c.alpha, K) - _mphi(0, c.alpha, a, -by * c.w3)


def _T7(c, l, p):
    by, K = c.M - c.m - p, c.M - c.m + l + 1
    a = l + p + 1 + by * c.psi_slope
    return _mphi(0, c.w4, K) - _mphi(0, c.w4, a, -by * c.w3)


# m > n: density sum_{p,l} chat_p chat_l exp(-(l+p+1) x - (M-n-p) y), x = |h_n|^2 < y = |h_m|^2.
# Common factor chat_mn chat_p chat_l / (l+p+1).


def _Q1(c, l, p):
    A, B, K = l + p + 1, c.M - c.n - p, c.M - c.n + l + 1
    t = B + A * c.phi_slope
    return ((mpmath.exp(-B * c.alpha) - mpmath.exp(-K * c.w3)) / B
            - _mphi(c.alpha, c.w1, t, A * c.inv_brn) - _mphi(c.w1, c.w3, K))


def _Q2(c, l, p):
    A, B = l + p + 1, c.M - c.n - p
    t = B + A * c.phi_slope
    return (-_mphi(c.alpha, c.w2, t, A * c.inv_brn)
            + (mpmath.exp(-B * c.alpha) - mpmath.exp(-A * c.w3 - B * c.w2)) / B)


def _Q3(c, l, p):
    A, B, K = l + p + 1, c.M - c.n - p, c.M - c.n + l + 1
    t = B + A * c.phi_slope
    return _mphi(c.alpha, c.w1, t, A * c.inv_brn) - _mphi(c.alpha, c.w1, K)


def _Q4(c, l, p):
    A, B, K = l + p + 1, c.M - c.n - p, c.M - c.n + l + 1
    t = B + A * c.phi_slope
    return mpmath.exp(A * c.inv_brn - t * c.alpha) / t - mpmath.exp(-K * c.alpha) / K


def _Q5(c, l, p):
    A, B, K = l + p + 1, c.M - c.n - p, c.M - c.n + l + 1
    t = B + A * c.phi_slope
    s = B + A * c.psi_slope
    return (mpmath.exp(A * c.inv_brn - t * c.alpha) / t
            - mpmath.exp(-A * c.w3 - s * c.w4) / s - _mphi(c.alpha, c.w4, K))


def _Q6(c, l, p):
    A, B = l + p + 1, c.M - c.n - p
    t = B + A * c.phi_slope
    s = B + A * c.psi_slope
    return (mpmath.exp(A * c.inv_brn - t * c.alpha) / t
            - mpmath.exp(-A * c.w3 - s * c.alpha) / s)


def _Q7(c, l, p):
    A, B, K = l + p + 1, c.M - c.n - p, c.M - c.n + l + 1
    t = B + A * c.phi_slope
    s = B + A * c.psi_slope
    return (_mphi(c.alpha, c.w5, t, A * c.inv_brn) - _mphi(c.alpha, c.w4, K)
            - _mphi(c.w4, c.w5, s, -A * c.w3))


def _Q8(c, l, p):
    A, B = l + p + 1, c.M - c.n - p
    t = B + A * c.phi_slope
    s = B + A * c.psi_slope
    return _mphi(c.alpha, c.w5, t, A * c.inv_brn) - _mphi(c.alpha, c.w5, s, -A * c.w3)


def _Q9(c, l, p):
    B, K = c.M - c.n - p, c.M - c.n + l + 1
    return _mphi(0, c.alpha, B) - _mphi(0, c.alpha, K)


def _Q10(c, l, p):
    A, B, K = l + p + 1, c.M - c.n - p, c.M - c.n + l + 1
    s = B + A * c.psi_slope
    return _mphi(0, c.alpha, B) - _mphi(0, c.w4, K) - _mphi(c.w4, c.alpha, s, -A * c.w3)


T_TERMS = {"T1": _T1, "T2": _T2, "T3": _T3, "T4": _T4, "T5": _T5, "T6": _T6, "T7": _T7}
Q_TERMS = {"Q1": _Q1, "Q2": _Q2, "Q3": _Q3, "Q4": _Q4, "Q5": _Q5, "Q6": _Q6, "Q7": _Q7,
           "Q8": _Q8, "Q9": _Q9, "Q10": _Q10}

# (P1, P21, P22) per column; None is an exact zero
TABLES = {
    Table.I: {1: ("T1", "T2", "T6"), 2: (None, "T2", "T6"), 3: (None, "T3", "T6"),
              4: (None, "T4", "T6"), 5: (None, None, "T7")},
    Table.II: {1: ("T1", "T5", "T6"), 2: (None, "T5", "T6"), 3: (None, "T4", "T6"),
               4: (None, None, "T7")},
    Table.III: {1: ("Q1", "Q3", "Q9"), 2: ("Q2", "Q3", "Q9"), 3: ("Q2", "Q4", "Q9"),
                4: ("Q2", "Q5", "Q9"), 5: ("Q2", "Q6", "Q10")},
    Table.IV: {1: ("Q1", "Q3", "Q9"), 2: ("Q2", "Q3", "Q9"), 3: ("Q2", "Q7", "Q9"),
               4: ("Q2", "Q8", "Q10")},
}


def _term_sum(cfg, name):
    """One named term (T1..T7 or Q1..Q10) at the current mpmath precision."""
    c = _Ctx(cfg)
    f = math.factorial
    M, m, n = cfg.M, cfg.m, cfg.n
    total = mpmath.mpf(0)
    if name.startswith("T"):
        if not m < n:
            raise DomainError(f"{name} is defined for m < n only")
        term = T_TERMS[name]
        c_mn = mpmath.mpf(f(M)) / (f(m - 1) * f(n - m - 1) * f(M - n))
        for p in range(n - m):
            c_p = _binom(n - m - 1, p) * (-1) ** (n - m - 1 - p)
            for l in range(m):
                c_l = _binom(m - 1, l) * (-1) ** l
                total += c_mn * c_p * c_l * term(c, l, p) / (M - m - p)
    else:
        if not m > n:
            raise DomainError(f"{name} is defined for m > n only")
        term = Q_TERMS[name]
        chat_mn = mpmath.mpf(f(M)) / (f(n - 1) * f(m - n - 1) * f(M - m))
        for p in range(m - n):
            chat_p = _binom(m - n - 1, p) * (-1) ** (m - n - 1 - p)
            for l in range(n):
                chat_l = _binom(n - 1, l) * (-1) ** l
                total += chat_mn * chat_p * chat_l * term(c, l, p) / (l + p + 1)
    return total


def _converged(evaluate, start_dps=30, max_dps=4000, rtol=1e-15):
    """Run ``evaluate()`` at doubling precision until two results agree."""
    dps = start_dps
    with mpmath.workdps(dps):
        prev = evaluate()
    while True:
        dps *= 2
        with mpmath.workdps(dps):
            cur = evaluate()
            if cur == prev or abs(cur - prev) <= rtol * abs(cur):
                return cur
        if dps >= max_dps:
            raise ArithmeticError("closed-form sum did not stabilise; cancellation too severe")
        prev = cur


def closed_form_parts(cfg, regime=None, check_singular=True):
    """``{"P1": .., "P21": .., "P22": ..}`` as floats for the governing column.

    ``regime`` overrides the automatic classification (used to evaluate a
    neighbouring column's expression at a breakpoint).
    """
    k = derive_constants(cfg)
    if cfg.m == cfg.n:
        raise DomainError("m == n")
    if check_singular and k.singular:
        raise SingularRegimeError(
            f"near-zero denominator in {', '.join(k.singular)}; use quadrature", k.singular)
    regime = regime or classify_regime(cfg, k)
    names = TABLES[regime.table][regime.column]
    parts = {}
    for part, name in zip(("P1", "P21", "P22"), names):
        if name is None:
            parts[part] = 0.0
        else:
            parts[part] = float(_converged(lambda name=name: _term_sum(cfg, name)))
    return parts


def term_value(cfg, name):
    """A single T/Q term as a float, whatever the governing column."""
    return float(_converged(lambda: _term_sum(cfg, name)))


def _assemble(cfg, regime=None, check_singular=True):
    parts = closed_form_parts(cfg, regime, check_singular)
    raw = math.fsum(parts.values())
    if not -RANGE_TOL <= raw <= 1 + RANGE_TOL:
        raise ArithmeticError(f"closed form left [0, 1]: {raw!r} (parts {parts})")
    regime = regime or classify_regime(cfg)
    return ProbabilityEstimate(min(max(raw, 0.0), 1.0), 0.0, 0, Method.CLOSED_FORM,
                               (f"table={regime.table.value}", f"column={regime.column}"))


def ptilde_closed_m_lt_n(cfg, regime=None, check_singular=True):
    if not cfg.m < cfg.n:
        raise DomainError("this expression needs m < n")
    return _assemble(cfg, regime, check_singular)


def ptilde_closed_m_gt_n(cfg, regime=None, check_singular=True):
    if not cfg.m > cfg.n:
        raise DomainError("this expression needs m > n")
    return _assemble(cfg, regime, check_singular)


def ptilde_closed(cfg, **kwargs):
    if cfg.m < cfg.n:
        return ptilde_closed_m_lt_n(cfg, **kwargs)
    return ptilde_closed_m_gt_n(cfg, **kwargs)
