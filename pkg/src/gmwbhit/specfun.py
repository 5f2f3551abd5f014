"""Special-function kernels used by the hitting-time and GMWB formulas.

Kummer's M with complex parameters and the Whittaker function of imaginary
index are implemented here directly; the remaining real-argument kernels
(Kummer U, Bessel I, incomplete gamma, E1, log-gamma) delegate to
``scipy.special`` behind argument checks.

All functions accept NumPy arrays where noted and are pure.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as sc
from scipy.integrate import quad

from .errors import DomainError, NonConvergence, PoleError

POLE_TOL = 1e-12
SERIES_RADIUS = 50.0
MAX_TERMS = 5000
EULER_GAMMA = 0.5772156649015329


def _near_nonpositive_integer(x, tol: float = POLE_TOL):
    x = np.asarray(x, dtype=complex)
    re = x.real
    return (np.abs(x.imag) <= tol) & (re < 0.5) & (np.abs(re - np.round(re)) <= tol)


# ---------------------------------------------------------------------------
# Kummer M
# ---------------------------------------------------------------------------

def _kummer_series(a, b, z):
    """Power series of M(a, b, z), Kahan-compensated, vectorised."""
    a, b, z = np.broadcast_arrays(*(np.asarray(v, dtype=complex) for v in (a, b, z)))
    term = np.ones(a.shape, dtype=complex)
    total = term.copy()
    comp = np.zeros(a.shape, dtype=complex)
    for n in range(MAX_TERMS):
        term = term * (a + n) / (b + n) * z / (n + 1)
        yk = term - comp
        tk = total + yk
        comp = (tk - total) - yk
        total = tk
        # terminating series (a a non-positive integer) leaves term == 0
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)) and n > 2:
            return total
    raise NonConvergence(f"Kummer M series did not converge in {MAX_TERMS} terms")


def _kummer_asymptotic(a, b, z, nterms: int = 60, with_error: bool = False):
    """Large-|z| expansion of M(a, b, z) (both exponential branches).

    With ``with_error`` also returns the relative size of the smallest
    dominant-branch term, a truncation-error estimate.
    """
    a, b, z = (np.asarray(v, dtype=complex) for v in (a, b, z))
    s1 = np.ones(np.broadcast(a, b, z).shape, dtype=complex)
    s2 = s1.copy()
    t1 = s1.copy()
    t2 = s1.copy()
    smallest = np.ones(s1.shape)
    for s in range(nterms):
        n1 = t1 * (b - a + s) * (1 - a + s) / ((s + 1) * z)
        n2 = t2 * (a + s) * (a - b + 1 + s) / ((s + 1) * (-z))
        # stop each branch at its smallest term (optimal truncation)
        grow1 = np.abs(n1) > np.abs(t1)
        grow2 = np.abs(n2) > np.abs(t2)
        live1 = (t1 != 0) & ~grow1
        t1 = np.where(grow1, 0, n1)
        t2 = np.where(grow2, 0, n2)
        smallest = np.where(live1, np.minimum(smallest, np.abs(n1)), smallest)
        s1 = s1 + t1
        s2 = s2 + t2
        if np.all(t1 == 0) and np.all(t2 == 0):
            break
    lgb = sc.loggamma(b)
    dom = np.exp(lgb - sc.loggamma(a) + z + (a - b) * np.log(z)) * s1
    # subdominant branch: e^{+-i pi a} z^{-a}, Stokes average on the real axis
    sgn = np.sign(z.imag)
    phase = np.where(sgn == 0, np.cos(np.pi * a), np.exp(1j * np.pi * a * sgn))
    rgba = np.where(_near_nonpositive_integer(b - a), 0.0, 1.0)
    with np.errstate(all="ignore"):
        sub = rgba * phase * np.exp(lgb - sc.loggamma(np.where(rgba == 0, 1.0, b - a))
                                    - a * np.log(z)) * s2
    if with_error:
        return dom + sub, smallest / np.maximum(np.abs(s1), 1e-300)
    return dom + sub


def kummer_m(a, b, z):
    """Kummer's confluent hypergeometric function M(a, b, z) = 1F1(a; b; z).

    Parameters may be complex. The power series (compensated summation) is
    used for |z| <= 50 and the two-branch asymptotic expansion beyond, unless
    the expansion's smallest term shows it cannot reach full precision. For
    Re z < 0 Kummer's transformation M(a,b,z) = e^z M(b-a,b,-z) is applied
    first so the series never alternates badly.

    Raises
    ------
    PoleError
        if ``b`` is within 1e-12 of 0, -1, -2, ...
    NonConvergence
        if the series exhausts its term budget.
    """
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0 and np.ndim(z) == 0
    real_in = all(np.isrealobj(v) for v in (a, b, z))
    a_, b_, z_ = np.broadcast_arrays(*(np.asarray(v, dtype=complex) for v in (a, b, z)))
    if np.any(~np.isfinite(a_) | ~np.isfinite(b_) | ~np.isfinite(z_)):
        raise DomainError("kummer_m received a non-finite argument")
    if np.any(_near_nonpositive_integer(b_)):
        raise PoleError("kummer_m: b is a non-positive integer")

    flip = z_.real < 0
    aa = np.where(flip, b_ - a_, a_)
    zz = np.where(flip, -z_, z_)
    poly = _near_nonpositive_integer(aa)
    big = (np.abs(zz) > SERIES_RADIUS) & ~poly

    out = np.empty(a_.shape, dtype=complex)
    if np.any(~big):
        out[~big] = _kummer_series(aa[~big], b_[~big], zz[~big])
    if np.any(big):
        val, err = _kummer_asymptotic(aa[big], b_[big], zz[big], with_error=True)
        # when a or b is comparable to z the expansion never gets small; the
        # series is cancellation-free near the positive real axis, so use it
        zb = zz[big]
        redo = (err > 1e-14) & (np.abs(zb) - zb.real < 10.0) & (np.abs(zb) < 2000.0)
        if np.any(redo):
            val[redo] = _kummer_series(aa[big][redo], b_[big][redo], zb[redo])
        out[big] = val
    out = np.where(flip, np.exp(np.where(flip, z_, 0)) * out, out)

    if real_in:
        out = out.real
    if scalar:
        v = out.reshape(())[()]
        return float(v) if real_in else complex(v)
    return out


def kummer_m_scaled(a: float, b: float, x):
    """e^{-x} M(a, b, x) for real parameters and real x >= 0.

    Past x = 600 the factor e^x of the dominant asymptotic branch is
    cancelled analytically, so the result stays finite where M overflows.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("kummer_m_scaled needs x >= 0")
    out = np.empty(x.shape)
    small = x <= 600.0
    if np.any(small):
        out[small] = np.exp(-x[small]) * kummer_m(a, b, x[small])
    if np.any(~small):
        xb = x[~small]
        s = np.ones_like(xb)
        term = np.ones_like(xb)
        for k in range(60):
            nxt = term * (b - a + k) * (1 - a + k) / ((k + 1) * xb)
            nxt = np.where(np.abs(nxt) > np.abs(term), 0.0, nxt)
            if np.all(nxt == 0):
                break
            s += nxt
            term = nxt
        if _near_nonpositive_integer(a):
            out[~small] = 0.0  # polynomial M times e^{-x} underflows here
        else:
            out[~small] = np.exp(math.lgamma(b) - math.lgamma(a) + (a - b) * np.log(xb)) \
                * s * sc.gammasgn(b) * sc.gammasgn(a)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Gamma family
# ---------------------------------------------------------------------------

def gamma_complex(z):
    """Gamma function of a complex argument (via scipy's complex log-gamma)."""
    zc = np.asarray(z, dtype=complex)
    if np.any(_near_nonpositive_integer(zc)):
        raise PoleError(f"gamma_complex: pole at {z}")
    out = np.exp(sc.loggamma(zc))
    return complex(out) if np.ndim(z) == 0 else out


def log_gamma_complex(z):
    """Principal branch of log Gamma(z); raises on poles."""
    zc = np.asarray(z, dtype=complex)
    if np.any(_near_nonpositive_integer(zc)):
        raise PoleError(f"log_gamma_complex: pole at {z}")
    out = sc.loggamma(zc)
    return complex(out) if np.ndim(z) == 0 else out


def gamma_abs_sq(x, p):
    """|Gamma(x + i p/2)|^2 for real ``x`` and ``p``."""
    arg = np.asarray(x, dtype=float) + 0.5j * np.asarray(p, dtype=float)
    if np.any(_near_nonpositive_integer(arg)):
        raise PoleError(f"gamma_abs_sq: pole at x={x}, p={p}")
    out = np.exp(2.0 * sc.loggamma(arg).real)
    return float(out) if np.ndim(out) == 0 else out


def rgamma(x):
    """Reciprocal gamma 1/Gamma(x); entire, so zero at the poles."""
    out = sc.rgamma(x)
    return float(out) if np.ndim(out) == 0 else out


def incomplete_gamma(kind: str, s: float, x: float) -> float:
    """Non-regularised incomplete gamma: ``kind='lower'`` gives gamma(s, x),
    ``kind='upper'`` gives Gamma(s, x)."""
    if not (s > 0 and x >= 0):
        raise DomainError(f"incomplete_gamma needs s > 0, x >= 0 (s={s}, x={x})")
    if kind == "lower":
        return float(sc.gammainc(s, x) * sc.gamma(s))
    if kind == "upper":
        return float(sc.gammaincc(s, x) * sc.gamma(s))
    raise DomainError(f"unknown incomplete gamma kind {kind!r}")


def exp_integral_e1(x: float) -> float:
    """Exponential integral E1(x) = int_x^inf e^{-t}/t dt for x > 0."""
    if not x > 0:
        raise DomainError(f"E1 needs x > 0, got {x}")
    return float(sc.exp1(x))


# ---------------------------------------------------------------------------
# Kummer U, parabolic cylinder U, Bessel I
# ---------------------------------------------------------------------------

def _kummer_u_integral(a: float, b: float, z: float) -> float:
    # U = z^{-a}/Gamma(a) int_0^inf e^{-u} u^{a-1} (1 + u/z)^{b-a-1} du, a > 0
    c = b - a - 1.0
    cut = min(1.0, z)

    def smooth(u):
        return math.exp(-u + c * math.log1p(u / z))

    def full(u):
        return math.exp(-u + (a - 1.0) * math.log(u) + c * math.log1p(u / z))

    kw = dict(epsabs=0.0, epsrel=1e-13, limit=400)
    total = quad(smooth, 0.0, cut, weight="alg", wvar=(a - 1.0, 0.0), **kw)[0]
    edges = [cut] + [e for e in (1.0, 10.0, 60.0) if e > cut] + [math.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += quad(full, lo, hi, **kw)[0]
    return total * math.exp(-a * math.log(z) - math.lgamma(a))


def kummer_u(a: float, b: float, z: float) -> float:
    """Tricomi's confluent hypergeometric function U(a, b, z), z > 0.

    Computed from the Laplace-type integral for a > 0; otherwise Kummer's
    transformation U(a,b,z) = z^{1-b} U(a-b+1, 2-b, z) or the three-term
    recurrence in ``a`` moves the first parameter to the positive axis.
    Non-positive integer ``a`` gives the terminating polynomial.
    """
    if not z > 0:
        raise DomainError(f"kummer_u needs z > 0, got {z}")
    a = float(a)
    b = float(b)
    if a > 0:
        return _kummer_u_integral(a, b, z)
    if a - b + 1.0 > 0:
        return z ** (1.0 - b) * _kummer_u_integral(a - b + 1.0, 2.0 - b, z)
    if abs(a - round(a)) <= POLE_TOL:
        n = int(round(-a))
        poch = math.prod(b + j for j in range(n))
        return (-1) ** n * poch * kummer_m(-float(n), b, z)
    # U(a-1) = (2a - b + z) U(a) - a (a - b + 1) U(a + 1), run downward from a > 0
    n = int(math.floor(a)) * -1 + 1
    top = a + n
    u_hi = _kummer_u_integral(top + 1.0, b, z)
    u = _kummer_u_integral(top, b, z)
    aa = top
    while aa - a > 0.5:
        u, u_hi = (2 * aa - b + z) * u - aa * (aa - b + 1) * u_hi, u
        aa -= 1.0
    return u


def parabolic_cylinder_u(b: float, z: float) -> float:
    """Parabolic cylinder function U(b, z) for b > -1/2, z >= 0, from
    U(b/2 + 1/4, 1/2, z^2/2) = 2^{b/2+1/4} e^{z^2/4} U(b, z)."""
    if not b > -0.5 or z < 0:
        raise DomainError(f"parabolic_cylinder_u needs b > -1/2, z >= 0 (b={b}, z={z})")
    c = 0.5 * b + 0.25
    if z == 0.0:
        return math.sqrt(math.pi) / (2.0 ** c * math.gamma(0.75 + 0.5 * b))
    return 2.0 ** (-c) * math.exp(-0.25 * z * z) * kummer_u(c, 0.5, 0.5 * z * z)


def bessel_i(order: float, z):
    """Modified Bessel function of the first kind I_order(z), z >= 0."""
    if np.any(np.asarray(z) < 0) or order < 0:
        raise DomainError("bessel_i needs z >= 0 and order >= 0")
    out = sc.iv(order, z)
    return float(out) if np.ndim(out) == 0 else out


def bessel_i_scaled(order: float, z):
    """e^{-z} I_order(z), for large arguments."""
    if np.any(np.asarray(z) < 0) or order < 0:
        raise DomainError("bessel_i_scaled needs z >= 0 and order >= 0")
    out = sc.ive(order, z)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Whittaker functions of imaginary index
# ---------------------------------------------------------------------------

def whittaker_m(kappa, mu, z):
    """Whittaker M_{kappa,mu}(z) = e^{-z/2} z^{1/2+mu} M(1/2+mu-kappa, 1+2mu, z)."""
    mu = np.asarray(mu, dtype=complex)
    z = np.asarray(z, dtype=complex)
    return np.exp(-0.5 * z + (0.5 + mu) * np.log(z)) * kummer_m(0.5 + mu - kappa, 1 + 2 * mu, z)


def whittaker_gamma_kernel(kappa: float, p, z: float, shift: float):
    """W_{-kappa, ip/2}(z) * sinh(pi p) * |Gamma(shift + ip/2)|^2 for p > 0.

    Evaluated as -2 pi Im[M_{-kappa,ip/2}(z) |Gamma(shift+ip/2)|^2 /
    (Gamma(1+ip) Gamma(1/2+kappa-ip/2))] with all gamma factors combined in
    log space, so the sinh(pi p) factor never has to be formed.
    """
    p = np.asarray(p, dtype=float)
    ip2 = 0.5j * p
    mw = np.exp(-0.5 * z + (0.5 + ip2) * math.log(z)) * kummer_m(0.5 + ip2 + kappa, 1 + 2 * ip2, z)
    with np.errstate(all="ignore"):
        lg = (2.0 * sc.loggamma(shift + ip2).real
              - sc.loggamma(1 + 2 * ip2)
              - sc.loggamma(0.5 + kappa - ip2))
    return -2.0 * np.pi * np.imag(mw * np.exp(lg))


def _w_imag_raw(kappa: float, p: float, z: float) -> float:
    ip2 = 0.5j * p
    mw = whittaker_m(-kappa, ip2, z)
    x = mw * np.exp(-sc.loggamma(1 + 2 * ip2) - sc.loggamma(0.5 + kappa - ip2))
    return float(-2.0 * math.pi / math.sinh(math.pi * p) * np.imag(x))


def whittaker_w_imag(kappa: float, p: float, z: float) -> float:
    """Whittaker function of the second kind W_{-kappa, ip/2}(z), real-valued.

    Uses W = -(2 pi / sinh(pi p)) Im[M_{-kappa,ip/2}(z) / (Gamma(1+ip)
    Gamma(1/2+kappa-ip/2))]. At p = 0 the removable singularity is resolved by
    Richardson extrapolation of one-sided values at p = 1e-4 and 5e-5.
    """
    if not z > 0 or p < 0:
        raise DomainError(f"whittaker_w_imag needs z > 0, p >= 0 (z={z}, p={p})")
    if _near_nonpositive_integer(0.5 + kappa + 0.5j * p):
        raise PoleError("whittaker_w_imag: Gamma(1/2+kappa-ip/2) pole")
    if p == 0.0:
        h = 1e-4
        w1 = _w_imag_raw(kappa, h, z)
        w2 = _w_imag_raw(kappa, 0.5 * h, z)
        return (4.0 * w2 - w1) / 3.0
    return _w_imag_raw(kappa, p, z)
