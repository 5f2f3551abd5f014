"""GMWB valuation in reduced coordinates.

The fund F (deposit G, withdrawals at rate w, fee m) is mapped onto the
reduced process Y = sigma^2 F / (4w) in the time scale u = sigma^2 s / 4, so
every expectation below depends only on

    nu = (2(r - m) - sigma^2) / sigma^2,  y = t = sigma^2 G / (4w),
    r_hat = 4 r / sigma^2.

The building blocks, all for Y from y with tau its first passage to 0:

    h = E[Y_t; tau > t]          a = E[e^{-r_hat tau}]
    b = E[e^{-r_hat tau}; tau > t]  c = P(tau < t)
    d = E[int_0^{tau ^ t} e^{-r_hat u} Y_u du]

Each is a finite sum of exponentials in t plus a spectral integral. Currency
factors (4w/sigma^2, 16w/sigma^4) are applied only in the two gap functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import mpmath as mp
from scipy import optimize
from scipy import special as sc

from .errors import DomainError, NoBracket, NonConvergence, PoleDegeneracy, TailBoundFailure
from .hitting import (
    _mp_laplace_tau,
    laplace_tau,
    prob_finite_tau,
    residue_terms,
    small_time_bound,
    spectral_integral,
    talbot_invert,
)
from .quad import DEFAULT_QUAD, QuadConfig

SEAM_TOL = 1e-8
POLE_TOL = 1e-9
NEGLIGIBLE = 1e-15
FEE_BRACKET = (1e-6, 0.10)
FEE_BRACKET_WIDE = 0.20
FEE_XTOL = 1e-7
FEE_MAXITER = 60
M_PERTURB = 1e-7

Side = Literal["policyholder", "insurer"]


@dataclass(frozen=True)
class ModelParams:
    """Contract and market inputs; maturity is T = G / w."""

    r: float
    sigma: float
    G: float
    w: float
    m: float
    m_w: float

    def __post_init__(self):
        vals = (self.r, self.sigma, self.G, self.w, self.m, self.m_w)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("ModelParams must be finite")
        if not (self.sigma > 0 and self.G > 0 and self.w > 0):
            raise DomainError("sigma, G and w must be positive")
        if not self.r > 0:
            raise DomainError(f"r must be positive, got {self.r}")
        if not self.m >= self.m_w >= 0:
            raise DomainError(f"need m >= m_w >= 0 (m={self.m}, m_w={self.m_w})")

    @property
    def T(self) -> float:
        return self.G / self.w

    def with_fee(self, m: float, fee_link: float = 1.0) -> "ModelParams":
        """Copy with m replaced and m_w = fee_link * m."""
        return replace(self, m=m, m_w=fee_link * m)


@dataclass(frozen=True)
class DerivedParams:
    """Reduced coordinates (nu, y, t, r_hat) and kappa = (1 - nu)/2."""

    nu: float
    y: float
    t: float
    r_hat: float
    kappa: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.nu, self.y, self.t, self.r_hat, self.kappa)):
            raise DomainError("DerivedParams must be finite")
        if not (self.y > 0 and self.t > 0):
            raise DomainError(f"need y > 0 and t > 0 (y={self.y}, t={self.t})")

    @classmethod
    def of(cls, nu: float, y: float, t: float, r_hat: float) -> "DerivedParams":
        return cls(nu, y, t, r_hat, 0.5 * (1.0 - nu))

    @property
    def c0(self) -> float:
        """Linear drift coefficient 2(nu + 1) of the reduced process."""
        return 2.0 * (self.nu + 1.0)


def derive(mp_: ModelParams) -> DerivedParams:
    """Map contract inputs to reduced coordinates (total fee m enters nu)."""
    s2 = mp_.sigma ** 2
    nu = (2.0 * (mp_.r - mp_.m) - s2) / s2
    return DerivedParams.of(nu, s2 * mp_.G / (4.0 * mp_.w), s2 * mp_.T / 4.0, 4.0 * mp_.r / s2)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def _on_seam(dp: DerivedParams) -> bool:
    return abs(dp.nu + 1.0) < SEAM_TOL


def _negligible_passage(dp: DerivedParams) -> bool:
    return small_time_bound(dp.nu, dp.y, dp.t) < NEGLIGIBLE


def _mean_y(dp: DerivedParams) -> float:
    """E[Y_t] ignoring absorption: (y - 1/c0) e^{c0 t} + 1/c0."""
    c0, t = dp.c0, dp.t
    if abs(c0) * t < 1e-12:
        return dp.y - t
    return dp.y * math.exp(c0 * t) - math.expm1(c0 * t) / c0


def _phi(x: float, t: float) -> float:
    """int_0^t e^{x u} du."""
    return t if abs(x) * t < 1e-15 else math.expm1(x * t) / x


def _mp_h_hat(s, dp: DerivedParams):
    nu, y = mp.mpf(dp.nu), mp.mpf(dp.y)
    return (y - (1 - _mp_laplace_tau(s, nu, y)) / s) / (s - mp.mpf(dp.c0))


def _talbot(F, dp: DerivedParams) -> float:
    return talbot_invert(F, dp.t)


def _h_parts(dp: DerivedParams) -> list[tuple[float, float]]:
    """(coefficient, rate) pairs of the exponential part of h."""
    nu, y, c0 = dp.nu, dp.y, dp.c0
    if _on_seam(dp):
        z = 0.5 / y
        return [(y * math.exp(-z) - 0.5 * sc.exp1(z), 0.0)]
    # L(c0) has lam = |nu + 2|; alpha = y + (L(c0) - 1)/c0 is finite as c0 -> 0
    alpha = y + (laplace_tau(nu, y, c0) - 1.0) / c0
    parts = [(alpha, c0)]
    pinf = prob_finite_tau(nu, y)
    if pinf < 1.0:
        parts.append(((1.0 - pinf) / c0, 0.0))
    for k, q, B in residue_terms(nu, y):
        A = B / (math.factorial(k) * (nu - k))
        parts.append((-A / (c0 - q), q))
    return parts


def _w_h(nu: float):
    n2, m2 = nu * nu, (nu + 2.0) ** 2
    return lambda p: 1.0 / ((n2 + p * p) * (m2 + p * p))


def h_value(dp: DerivedParams, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """h = E[Y_t; tau > t].

    Exponential part from ``_h_parts`` plus (2/pi^2) times the spectral
    integral with weight 1/((nu^2+p^2)((nu+2)^2+p^2)). On the seam
    |nu + 1| < 1e-8 the exponential part is y e^{-z} - E1(z)/2, z = 1/(2y).
    """
    if _negligible_passage(dp):
        return _mean_y(dp)
    try:
        spec = spectral_integral(dp.nu, dp.y, dp.t, _w_h(dp.nu), 2, cfg)
    except TailBoundFailure:
        return _talbot(lambda s: _mp_h_hat(s, dp), dp)
    expo = math.fsum(cf * math.exp(q * dp.t) for cf, q in _h_parts(dp))
    return expo + 2.0 / math.pi ** 2 * spec


def a_value(dp: DerivedParams) -> float:
    """a = E[exp(-r_hat tau)]."""
    return laplace_tau(dp.nu, dp.y, dp.r_hat)


def b_value(dp: DerivedParams, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """b = E[exp(-r_hat tau); tau > t]."""
    nu, y, t, rh = dp.nu, dp.y, dp.t, dp.r_hat
    if _negligible_passage(dp):
        return a_value(dp)
    n2 = nu * nu
    try:
        spec = spectral_integral(nu, y, t, lambda p: 1.0 / (n2 + p * p + 2.0 * rh), 1, cfg)
    except TailBoundFailure:
        nu_, y_, a = mp.mpf(nu), mp.mpf(y), mp.mpf(a_value(dp))
        return _talbot(lambda s: (a - _mp_laplace_tau(s + rh, nu_, y_)) / s, dp)
    val = math.exp(-rh * t) * spec / math.pi ** 2
    for k, q, B in residue_terms(nu, y):
        val -= 2.0 * B * math.exp((q - rh) * t) / (math.gamma(k) * (rh - q))
    return val


def c_value(dp: DerivedParams, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """c = P(tau < t)."""
    nu, y, t = dp.nu, dp.y, dp.t
    if _negligible_passage(dp):
        return 0.0
    n2 = nu * nu
    try:
        spec = spectral_integral(nu, y, t, lambda p: 1.0 / (n2 + p * p), 1, cfg)
    except TailBoundFailure:
        nu_, y_ = mp.mpf(nu), mp.mpf(y)
        return _talbot(lambda s: _mp_laplace_tau(s, nu_, y_) / s, dp)
    val = prob_finite_tau(nu, y) - spec / math.pi ** 2
    for k, q, B in residue_terms(nu, y):
        val += B * math.exp(q * t) / (math.factorial(k) * (nu - k))
    return val


def d_value(dp: DerivedParams, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """d = E[int_0^{tau ^ t} e^{-r_hat u} Y_u du].

    Written as d = h_hat(r_hat) - int_t^inf e^{-r_hat u} h(u) du with the tail
    taken term by term: each exponential c e^{q u} of h contributes
    -c e^{(q - r_hat) t}/(r_hat - q), and the spectral part contributes
    -(4/pi^2) e^{-r_hat t} times the spectral integral with weight
    1/((2 r_hat + nu^2 + p^2)(nu^2+p^2)((nu+2)^2+p^2)). Here
    h_hat(s) = (y - (1 - L(s))/s)/(s - c0) is the Laplace transform of h.

    Raises
    ------
    PoleDegeneracy
        if r_hat is within 1e-9 of c0 = 2(nu+1) (fee m = 0 in contract terms).
    """
    nu, y, t, rh, c0 = dp.nu, dp.y, dp.t, dp.r_hat, dp.c0
    if abs(rh - c0) < POLE_TOL:
        raise PoleDegeneracy(f"r_hat={rh} coincides with 2(nu+1)={c0}")
    if _negligible_passage(dp):
        # int_0^t e^{-r_hat u} E[Y_u] du
        if abs(c0) * t < 1e-12:
            return (y * _phi(-rh, t) - (1.0 - math.exp(-rh * t) * (1.0 + rh * t)) / rh ** 2)
        return y * _phi(c0 - rh, t) - (_phi(c0 - rh, t) - _phi(-rh, t)) / c0
    n2, m2, r2 = nu * nu, (nu + 2.0) ** 2, 2.0 * rh
    try:
        spec = spectral_integral(
            nu, y, t, lambda p: 1.0 / ((r2 + n2 + p * p) * (n2 + p * p) * (m2 + p * p)), 3, cfg)
    except TailBoundFailure:
        return _talbot(lambda s: _mp_h_hat(s + rh, dp) / s, dp)
    h_hat = (y - (1.0 - a_value(dp)) / rh) / (rh - c0)
    tail = math.fsum(cf * math.exp((q - rh) * t) / (rh - q) for cf, q in _h_parts(dp))
    return h_hat - tail - 4.0 / math.pi ** 2 * math.exp(-rh * t) * spec


# ---------------------------------------------------------------------------
# pricing equations
# ---------------------------------------------------------------------------

def _withdrawals_pv(mp_: ModelParams) -> float:
    return mp_.w / mp_.r * -math.expm1(-mp_.r * mp_.T)


def policyholder_gap(mp_: ModelParams, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """e^{-rT} E[F_T; tau > T] + (w/r)(1 - e^{-rT}) - G."""
    dp = derive(mp_)
    fund = math.exp(-mp_.r * mp_.T) * 4.0 * mp_.w / mp_.sigma ** 2 * h_value(dp, cfg)
    return fund + _withdrawals_pv(mp_) - mp_.G


def _d_perturbed(mp_: ModelParams, cfg: QuadConfig) -> float:
    try:
        return d_value(derive(mp_), cfg)
    except PoleDegeneracy:
        return d_value(derive(replace(mp_, m=mp_.m + M_PERTURB)), cfg)


def insurer_gap(mp_: ModelParams, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """Guarantee liability minus fee revenue:
    (w/r)(a - b) - (w/r) e^{-rT} c - m_w (16 w/sigma^4) d."""
    dp = derive(mp_)
    wr = mp_.w / mp_.r
    liability = wr * (a_value(dp) - b_value(dp, cfg)) - wr * math.exp(-mp_.r * mp_.T) * c_value(dp, cfg)
    revenue = 0.0
    if mp_.m_w > 0:
        revenue = mp_.m_w * 16.0 * mp_.w / mp_.sigma ** 4 * _d_perturbed(mp_, cfg)
    return liability - revenue


def equivalence_residual(mp_: ModelParams, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """E[e^{-rT} F_T 1(tau > T) + int_0^{tau ^ T} e^{-rs}(w + m F_s) ds] - G.

    Zero for every fee level by Dynkin's formula; equals policyholder_gap
    minus insurer_gap when m_w = m.
    """
    if abs(mp_.m - mp_.m_w) > 1e-15:
        raise DomainError("equivalence_residual needs m == m_w")
    dp = derive(mp_)
    disc = math.exp(-mp_.r * mp_.T)
    s2 = mp_.sigma ** 2
    fund = disc * 4.0 * mp_.w / s2 * h_value(dp, cfg)
    stopped = (a_value(dp) - b_value(dp, cfg)) + disc * (1.0 - c_value(dp, cfg))
    withdrawals = mp_.w / mp_.r * (1.0 - stopped)
    fees = mp_.m * 16.0 * mp_.w / s2 ** 2 * _d_perturbed(mp_, cfg) if mp_.m > 0 else 0.0
    return fund + withdrawals + fees - mp_.G


def _gap_fn(side: Side):
    if side == "policyholder":
        return policyholder_gap
    if side == "insurer":
        return insurer_gap
    raise DomainError(f"side must be 'policyholder' or 'insurer', got {side!r}")


@dataclass(frozen=True)
class FairFee:
    """Solved fee rate m (per year), its GMWB share m_w, and both in bp."""

    m: float
    m_w: float
    m_bp: int
    m_w_bp: int


def to_bp(rate: float) -> int:
    """Nearest basis point, halves rounded up."""
    return int(math.floor(rate * 1e4 + 0.5))


def solve_fair_fee(side: Side, mp_template: ModelParams, fee_link: float = 1.0,
                   cfg: QuadConfig = DEFAULT_QUAD) -> FairFee:
    """Fee m at which the chosen pricing equation balances, with m_w = fee_link m.

    Brent's method on [1e-6, 0.10] per year (widened once to 0.20 when the
    gap has no sign change), to an absolute tolerance of 1e-7 in m.

    Raises
    ------
    NoBracket
        if the gap keeps its sign on the widened bracket.
    NonConvergence
        after 60 iterations.
    """
    if not 0 < fee_link <= 1:
        raise DomainError(f"fee_link must lie in (0, 1], got {fee_link}")
    gap = _gap_fn(side)

    def g(m):
        return gap(mp_template.with_fee(m, fee_link), cfg)

    lo, hi = FEE_BRACKET
    glo, ghi = g(lo), g(hi)
    if glo * ghi > 0:
        hi = FEE_BRACKET_WIDE
        ghi = g(hi)
        if glo * ghi > 0:
            raise NoBracket(f"{side} gap keeps its sign on [{lo}, {hi}] ({glo:.3g}, {ghi:.3g})")
    try:
        m = optimize.brentq(g, lo, hi, xtol=FEE_XTOL, maxiter=FEE_MAXITER)
    except RuntimeError as exc:
        raise NonConvergence(f"fee root search failed: {exc}") from exc
    m_w = fee_link * m
    return FairFee(m, m_w, to_bp(m), to_bp(m_w))


__all__ = [
    "ModelParams", "DerivedParams", "FairFee", "derive", "h_value", "a_value", "b_value",
    "c_value", "d_value", "policyholder_gap", "insurer_gap", "equivalence_residual",
    "solve_fair_fee", "to_bp",
]
