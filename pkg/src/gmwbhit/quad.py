"""Adaptive Gauss-Kronrod quadrature for vectorised integrands.

Two entry points: :func:`integrate_finite` for ordinary intervals (an
infinite upper limit is mapped onto [0, 1)), and :func:`integrate_spectral`
for integrals over p in [0, inf) whose integrand is bounded by an envelope
C p^alpha exp(pi p/4 - beta p^2/2). The envelope fixes the truncation point,
so the neglected tail is bounded rather than guessed.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import NonConvergence, TailBoundFailure

Integrand = Callable[[np.ndarray], np.ndarray]

# QUADPACK qk21 abscissae (non-negative half) and weights
_XGK = np.array([
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0,
])
_WGK = np.array([
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208108523581, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG_FULL = np.zeros(21)
# Gauss nodes are the odd-indexed Kronrod abscissae (1, 3, 5, 7, 9)
for _j, _w in zip((1, 3, 5, 7, 9), _WG):
    _WG_FULL[_j] = _w
    _WG_FULL[20 - _j] = _w

_EPS_NOISE = 1e-14


@dataclass(frozen=True)
class QuadConfig:
    """Tolerances for both quadrature families.

    ``tail_bound_constant`` fixes C in the spectral envelope; when ``None``
    it is estimated from the integrand. ``cancel_tol`` is the absolute
    rounding-noise level (integral of |f| times ~1e-15) tolerated before a
    truncated spectral integral is declared numerically useless.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_subdivisions: int = 200
    tail_bound_constant: float | None = None
    cancel_tol: float = 1e-10
    min_t: float = 1e-4
    max_cutoff: float = 1e4

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("rel_tol and abs_tol must be positive")
        if self.max_subdivisions < 10:
            raise ValueError("max_subdivisions must be >= 10")


DEFAULT_QUAD = QuadConfig()


class QuadResult(NamedTuple):
    value: float
    error: float
    l1: float
    intervals: int


def _rule(f: Integrand, a: np.ndarray, b: np.ndarray):
    """Apply G10K21 on each [a_i, b_i]; returns (kronrod, error, l1) arrays."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    if not np.all(np.isfinite(fx)):
        raise NonConvergence("integrand returned a non-finite value")
    k = half * (fx @ _WK)
    g = half * (fx @ _WG_FULL)
    l1 = np.abs(half) * (np.abs(fx) @ _WK)
    return k, np.abs(k - g), l1


def quad_adaptive(f: Integrand, lo: float, hi: float, cfg: QuadConfig = DEFAULT_QUAD,
                  points: Sequence[float] = (), pieces: int = 1) -> QuadResult:
    """Globally adaptive G10K21 on a finite interval.

    ``f`` must accept a 1-D array. ``points`` are extra breakpoints and
    ``pieces`` subdivides the interval uniformly before refinement starts.
    """
    if not hi > lo:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    cuts = sorted({lo, hi, *(p for p in points if lo < p < hi)})
    edges = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        edges.extend(np.linspace(a, b, max(1, pieces) + 1)[:-1])
    edges.append(hi)
    a = np.array(edges[:-1])
    b = np.array(edges[1:])
    k, e, l1 = _rule(f, a, b)
    heap = [(-ei, ai, bi, ki, li) for ai, bi, ki, ei, li in zip(a, b, k, e, l1)]
    heapq.heapify(heap)
    total = float(k.sum())
    err = float(e.sum())
    lsum = float(l1.sum())
    # the 1e-14 * int|f| floor stops refinement once the error estimate is
    # rounding noise; callers that care (the spectral path) test for it
    while err > max(cfg.abs_tol, cfg.rel_tol * abs(total), 1e-14 * lsum):
        if len(heap) >= cfg.max_subdivisions:
            raise NonConvergence(
                f"quadrature on [{lo}, {hi}] exhausted {cfg.max_subdivisions} "
                f"subdivisions (error {err:.3g}, value {total:.6g})")
        ne, ai, bi, ki, li = heapq.heappop(heap)
        m = 0.5 * (ai + bi)
        if not (ai < m < bi):
            raise NonConvergence("interval collapsed below machine resolution")
        k2, e2, l2 = _rule(f, np.array([ai, m]), np.array([m, bi]))
        total += float(k2.sum()) - ki
        err += float(e2.sum()) + ne
        lsum += float(l2.sum()) - li
        for j, (x0, x1) in enumerate(((ai, m), (m, bi))):
            heapq.heappush(heap, (-e2[j], x0, x1, k2[j], l2[j]))
    # recompute from leaves to shed accumulated rounding in the running sums
    total = math.fsum(h[3] for h in heap)
    err = math.fsum(-h[0] for h in heap)
    return QuadResult(total, err, lsum, len(heap))


def integrate_finite(f: Integrand, lo: float, hi: float, cfg: QuadConfig = DEFAULT_QUAD,
                     points: Sequence[float] = ()) -> float:
    """Adaptive integral of a vectorised ``f`` over [lo, hi].

    ``hi`` may be ``math.inf``; the half line is then mapped onto [0, 1) by
    x = lo + s / (1 - s).
    """
    if math.isinf(hi):
        def g(s):
            s = np.asarray(s)
            x = lo + s / (1.0 - s)
            return f(x) / (1.0 - s) ** 2
        mapped = [(p - lo) / (1.0 + p - lo) for p in points if p > lo]
        return quad_adaptive(g, 0.0, 1.0, cfg, points=mapped, pieces=4).value
    return quad_adaptive(f, lo, hi, cfg, points=points).value


# ---------------------------------------------------------------------------
# spectral integrals over [0, inf)
# ---------------------------------------------------------------------------

def _log_envelope(p, alpha, beta, growth):
    return alpha * np.log(p) + growth * p - 0.5 * beta * p * p


def _tail_bound(P, alpha, beta, growth):
    """Upper bound of int_P^inf p^alpha exp(growth p - beta p^2/2) dp, valid
    once the log-derivative is below -1 on [P, inf)."""
    slope = beta * P - growth - alpha / P
    if slope < 1.0:
        return math.inf
    return math.exp(float(_log_envelope(P, alpha, beta, growth))) / slope


def spectral_cutoff(f: Integrand, alpha: float, beta: float, cfg: QuadConfig,
                    growth: float = math.pi / 4) -> tuple[float, float]:
    """Truncation point P* and the envelope constant C used to choose it."""
    peak = max(1.0, growth / beta)
    C = cfg.tail_bound_constant
    if C is None:
        hi = peak + 6.0 / math.sqrt(beta)
        ps = np.linspace(max(0.5, 0.5 * peak), hi, 24)
        # in logs: the envelope itself may underflow at the sample points
        with np.errstate(divide="ignore"):
            log_ratio = np.log(np.abs(f(ps))) - _log_envelope(ps, alpha, beta, growth)
        C = 10.0 * math.exp(min(float(np.max(log_ratio)), 700.0))
    if C == 0.0:
        return peak, 0.0
    target = cfg.abs_tol / 10.0
    P = peak
    step = 0.25 / math.sqrt(beta)
    while P <= cfg.max_cutoff:
        if C * _tail_bound(P, alpha, beta, growth) <= target:
            return P, C
        P += step
    raise TailBoundFailure(f"no truncation point below {cfg.max_cutoff} meets the tail bound")


def integrate_spectral(f: Integrand, t: float, nu: float, cfg: QuadConfig = DEFAULT_QUAD,
                       alpha: float | None = None, beta: float | None = None,
                       points: Sequence[float] = (), full: bool = False):
    """int_0^inf f(p) dp for integrands with a Gaussian-in-p envelope.

    ``f`` is vectorised and bounded by C p^alpha exp(pi p/4 - beta p^2/2);
    ``beta`` defaults to ``t`` and ``alpha`` to ``nu/2 - 1``. The cutoff P* is
    the first point where C times the envelope tail drops below abs_tol/10.

    Raises
    ------
    TailBoundFailure
        for t below ``cfg.min_t``, when no cutoff below ``cfg.max_cutoff``
        exists, when rounding noise from cancellation (int |f| * 1e-14)
        exceeds both ``cfg.cancel_tol`` and 1e-8 of the result, or when
        refinement stalls while the envelope peak exceeds ~1e6.
    NonConvergence
        when refinement stalls on a well-conditioned integrand.
    """
    if t < cfg.min_t:
        raise TailBoundFailure(f"t={t} is below the supported minimum {cfg.min_t}")
    beta = t if beta is None else beta
    alpha = nu / 2.0 - 1.0 if alpha is None else alpha
    # the envelope peaks at e^{pi^2/(32 beta)}; past ~1e15 nothing survives rounding
    if math.pi ** 2 / (32.0 * beta) > 34.5:
        raise TailBoundFailure(f"spectral integral at t={t} is dominated by cancellation")
    P, _ = spectral_cutoff(f, alpha, beta, cfg)
    pieces = max(2, int(math.ceil(P / 1.5)))
    try:
        res = quad_adaptive(f, 0.0, P, cfg, points=points, pieces=pieces)
    except NonConvergence as exc:
        # with a peak above ~1e6 the stalled refinement is rounding noise
        if math.pi ** 2 / (32.0 * beta) > 13.8:
            raise TailBoundFailure(f"spectral integral at t={t} stalls on cancellation") from exc
        raise
    noise = res.l1 * _EPS_NOISE
    if noise > max(cfg.cancel_tol, 1e-8 * abs(res.value)):
        raise TailBoundFailure(
            f"spectral integral at t={t} loses accuracy to cancellation "
            f"(|f| mass {res.l1:.3g} vs value {res.value:.3g})")
    return res if full else res.value
