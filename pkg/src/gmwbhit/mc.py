"""Monte Carlo oracle for the hitting-time laws and the GMWB expectations.

Every process is simulated through its exact pathwise form, so the only
discretisation is a trapezoid rule for a time integral:

* ``A_t = int_0^t e^{2(W_u + nu u)} du``;
* ``Y_t = e^{2 B_t} (y - int_0^t e^{-2 B_u} du)`` with ``B_u = W_u + nu u``,
  so Y hits 0 exactly when the (increasing) integral reaches y;
* ``F_s = e^{X_s} (G - w int_0^s e^{-X_u} du)`` with
  ``X_s = (r - m - sigma^2/2) s + sigma W_s``.

Each monitored functional is monotone in time, so a crossing between grid
points is located by linear interpolation of that functional and no bridge
correction is needed. Paths are generated in fixed blocks of ``BLOCK``, each
driven by its own counter-based Philox stream keyed by (seed, salt, block
index); a path's draws therefore do not depend on the total path count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sc

from .errors import DomainError
from .gmwb import ModelParams
from .hitting import DiffusionParams

BLOCK = 4096
CHUNK = 256
RETIRE_EPS = 1e-9
_SALT = {"A": 11, "H": 13, "tau": 17, "gmwb": 19, "path": 23, "X": 29}


@dataclass(frozen=True)
class McConfig:
    """Simulation controls; ``dt`` is in the time unit of the simulated law
    (reduced units for GMWB, converted as 4 dt / sigma^2 years)."""

    n_paths: int = 100_000
    dt: float = 1e-4
    seed: int = 12345
    horizon_cap: float = 50.0
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError("n_paths must be >= 1")
        if not (self.dt > 0 and self.horizon_cap > 0):
            raise DomainError("dt and horizon_cap must be positive")
        if self.antithetic and BLOCK % 2:
            raise DomainError("antithetic sampling needs an even block size")


@dataclass(frozen=True)
class PathSample:
    """One realisation on a grid; ``hit_time`` is None when no passage occurred."""

    times: np.ndarray
    values: np.ndarray
    hit_time: float | None = None

    def __post_init__(self):
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise DomainError("times and values must be aligned 1-D arrays")
        if self.times[0] != 0 or np.any(np.diff(self.times) <= 0):
            raise DomainError("times must start at 0 and increase strictly")


@dataclass(frozen=True)
class HitSample:
    """First-passage times (``inf`` where censored) and bookkeeping."""

    times: np.ndarray
    horizon_cap: float
    retired: int = 0

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(~np.isfinite(self.times)))

    @property
    def finite(self) -> np.ndarray:
        return self.times[np.isfinite(self.times)]


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float

    @classmethod
    def of(cls, x: np.ndarray) -> "Estimate":
        n = x.size
        sd = float(np.std(x, ddof=1)) if n > 1 else math.inf
        return cls(float(np.mean(x)), sd / math.sqrt(n))

    def z(self, target: float) -> float:
        """Standardised distance of ``target`` from the estimate."""
        return abs(self.mean - target) / self.stderr if self.stderr > 0 else (
            0.0 if self.mean == target else math.inf)


@dataclass(frozen=True)
class GmwbEstimates:
    """Discounted-payoff estimators of the GMWB expectations.

    fund_T     E[e^{-rT} F_T; tau > T]
    p_ruin     P(tau < T)
    disc_ruin  E[e^{-r tau}; tau < T]
    fee_base   E[int_0^{tau ^ T} e^{-rs} F_s ds]
    identity   E[e^{-rT} F_T 1(tau > T) + int_0^{tau ^ T} e^{-rs}(w + m F_s) ds]
    """

    fund_T: Estimate
    p_ruin: Estimate
    disc_ruin: Estimate
    fee_base: Estimate
    identity: Estimate
    n_paths: int = field(default=0)


def _blocks(cfg: McConfig, salt: str):
    """(generator, size) per block; a block's stream depends only on its index."""
    nblocks = -(-cfg.n_paths // BLOCK)
    for j in range(nblocks):
        ss = np.random.SeedSequence(cfg.seed, spawn_key=(_SALT[salt], j))
        yield np.random.Generator(np.random.Philox(ss)), min(BLOCK, cfg.n_paths - j * BLOCK)


def _normals(rng: np.random.Generator, steps: int, n: int, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.standard_normal((steps, n))
    half = rng.standard_normal((steps, (n + 1) // 2))
    return np.concatenate([half, -half], axis=1)[:, :n]


def _integral_passage(vol: float, drift: float, level: float, cfg: McConfig,
                      salt: str) -> HitSample:
    """First time int_0^t exp(vol W_u + drift u) du reaches ``level``.

    When drift < 0 the integral converges and, by Dufresne's identity, the
    remaining integral from a state (X_t, I_t) is (4/vol^2) e^{X_t}/(2 Z) with
    Z ~ Gamma(-2 drift/vol^2). A path whose eventual passage probability falls
    below 1e-9 is censored at once instead of being simulated to the horizon.
    """
    dt = cfg.dt
    sq = math.sqrt(dt)
    nu_eff = -2.0 * drift / vol ** 2 if drift < 0 else None
    scale = 4.0 / vol ** 2
    out = np.empty(cfg.n_paths)
    retired = 0
    pos = 0
    for rng, n_keep in _blocks(cfg, salt):
        # full blocks are always simulated (and truncated) so the live set, and
        # with it every draw, depends only on the block's own stream
        n = BLOCK
        hit = np.full(n, np.inf)
        alive = np.arange(n)
        X = np.zeros(n)
        I = np.zeros(n)
        t0 = 0.0
        while alive.size and t0 < cfg.horizon_cap:
            steps = min(CHUNK, int(math.ceil((cfg.horizon_cap - t0) / dt)))
            if cfg.antithetic:
                dW = _normals(rng, steps, n, True)[:, alive] * sq
            else:
                dW = rng.standard_normal((steps, alive.size)) * sq
            Xs = X[alive] + np.cumsum(vol * dW + drift * dt, axis=0)
            E = np.exp(np.vstack([X[alive][None, :], Xs]))
            Is = I[alive] + np.cumsum(0.5 * dt * (E[:-1] + E[1:]), axis=0)
            crossed = Is >= level
            any_hit = crossed.any(axis=0)
            k = np.argmax(crossed, axis=0)
            idx = np.nonzero(any_hit)[0]
            if idx.size:
                kk = k[idx]
                prev = np.where(kk > 0, Is[kk - 1, idx], I[alive[idx]])
                frac = (level - prev) / (Is[kk, idx] - prev)
                hit[alive[idx]] = t0 + (kk + frac) * dt
            X[alive] = Xs[-1]
            I[alive] = Is[-1]
            keep = ~any_hit
            t0 += steps * dt
            if nu_eff is not None:
                live = alive[keep]
                p = sc.gammainc(nu_eff, scale * np.exp(X[live]) / (2.0 * (level - I[live])))
                gone = p < RETIRE_EPS
                retired += int(np.sum(live[gone] < n_keep))
                keep[np.nonzero(keep)[0][gone]] = False
            alive = alive[keep]
        hit[hit > cfg.horizon_cap] = np.inf
        out[pos:pos + n_keep] = hit[:n_keep]
        pos += n_keep
    return HitSample(out, cfg.horizon_cap, retired)


def simulate_A(nu: float, t_end: float, cfg: McConfig) -> np.ndarray:
    """Samples of A_{t_end} = int_0^{t_end} e^{2(W_u + nu u)} du (trapezoid)."""
    if not t_end > 0:
        raise DomainError(f"t_end must be positive, got {t_end}")
    nsteps = max(1, int(math.ceil(t_end / cfg.dt)))
    dt = t_end / nsteps
    sq = math.sqrt(dt)
    out = np.empty(cfg.n_paths)
    pos = 0
    for rng, n in _blocks(cfg, "A"):
        X = np.zeros(n)
        I = np.zeros(n)
        done = 0
        while done < nsteps:
            steps = min(CHUNK, nsteps - done)
            Xs = X + np.cumsum(2.0 * sq * _normals(rng, steps, n, cfg.antithetic) + 2.0 * nu * dt, axis=0)
            E = np.exp(np.vstack([X[None, :], Xs]))
            I = I + 0.5 * dt * (E[:-1] + E[1:]).sum(axis=0)
            X = Xs[-1]
            done += steps
        out[pos:pos + n] = I
        pos += n
    return out


def _check_level(level: float, cfg: McConfig, name: str):
    if not level > 0:
        raise DomainError(f"{name} must be positive, got {level}")
    if level < 10.0 * cfg.dt:
        raise DomainError(f"{name}={level} is below 10 dt={10 * cfg.dt}; refine dt")


def simulate_hitting_H(nu: float, a: float, cfg: McConfig) -> HitSample:
    """First passage of Yor's process A^{(nu)} to level a."""
    _check_level(a, cfg, "a")
    return _integral_passage(2.0, 2.0 * nu, a, cfg, "H")


def simulate_hitting_tau(nu: float, y: float, cfg: McConfig) -> HitSample:
    """First passage to 0 of dY = [2(nu+1)Y - 1]dt + 2Y dW from y.

    Y_t = e^{2B_t}(y - int_0^t e^{-2B_u} du) vanishes exactly when the
    integral reaches y. Censored times (``inf``) cover both the horizon cap and
    paths retired because their eventual passage probability is below 1e-9.
    """
    _check_level(y, cfg, "y")
    return _integral_passage(-2.0, -2.0 * nu, y, cfg, "tau")


def simulate_hitting_tau_general(d: DiffusionParams, cfg: McConfig) -> HitSample:
    """First passage to 0 of dY = (mu Y - 1) dt + sigma Y dW from ``d.start``:
    Y vanishes when int_0^t exp(-sigma W_u - (mu - sigma^2/2) u) du reaches y."""
    _check_level(d.start, cfg, "start")
    return _integral_passage(-d.sigma, -(d.mu - 0.5 * d.sigma ** 2), d.start, cfg, "tau")


def simulate_X(nu: float, t_end: float, cfg: McConfig) -> np.ndarray:
    """Samples of X_t = e^{2B_t} int_0^t e^{-2B_u} du, the ascending process
    dX = [2(nu+1) X + 1] dt + 2 X dW started at 0."""
    if not t_end > 0:
        raise DomainError(f"t_end must be positive, got {t_end}")
    nsteps = max(1, int(math.ceil(t_end / cfg.dt)))
    dt = t_end / nsteps
    sq = math.sqrt(dt)
    out = np.empty(cfg.n_paths)
    pos = 0
    for rng, n in _blocks(cfg, "X"):
        B = np.zeros(n)
        I = np.zeros(n)
        done = 0
        while done < nsteps:
            steps = min(CHUNK, nsteps - done)
            Bs = B + np.cumsum(sq * _normals(rng, steps, n, cfg.antithetic) + nu * dt, axis=0)
            E = np.exp(-2.0 * np.vstack([B[None, :], Bs]))
            I = I + 0.5 * dt * (E[:-1] + E[1:]).sum(axis=0)
            B = Bs[-1]
            done += steps
        out[pos:pos + n] = np.exp(2.0 * B) * I
        pos += n
    return out


def simulate_path_Y(nu: float, y: float, t_end: float, cfg: McConfig) -> PathSample:
    """One path of Y on [0, t_end], frozen at 0 after absorption."""
    _check_level(y, cfg, "y")
    nsteps = max(1, int(math.ceil(t_end / cfg.dt)))
    dt = t_end / nsteps
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(_SALT["path"],))))
    B = np.concatenate([[0.0], np.cumsum(math.sqrt(dt) * rng.standard_normal(nsteps) + nu * dt)])
    E = np.exp(-2.0 * B)
    I = np.concatenate([[0.0], np.cumsum(0.5 * dt * (E[:-1] + E[1:]))])
    times = np.linspace(0.0, t_end, nsteps + 1)
    vals = np.exp(2.0 * B) * (y - I)
    hit = None
    over = np.nonzero(I >= y)[0]
    if over.size:
        k = over[0]
        hit = float(times[k - 1] + dt * (y - I[k - 1]) / (I[k] - I[k - 1]))
        vals[k:] = 0.0
    return PathSample(times, vals, hit)


def simulate_gmwb(mp_: ModelParams, cfg: McConfig) -> GmwbEstimates:
    """Simulate the fund under the pricing measure from F_0 = G with
    absorption at 0 and return the discounted estimators.

    The step is 4 dt / sigma^2 years (``cfg.dt`` in reduced units), adjusted
    down so the grid ends exactly at T = G/w. Running integrals use the
    trapezoid rule; the ruin step is cut at the interpolated ruin time.
    """
    r, s, G, w, m = mp_.r, mp_.sigma, mp_.G, mp_.w, mp_.m
    T = mp_.T
    nsteps = max(1, int(math.ceil(T / (4.0 * cfg.dt / s ** 2))))
    h = T / nsteps
    sq = math.sqrt(h)
    mu = (r - m - 0.5 * s * s) * h
    cols = {k: np.empty(cfg.n_paths) for k in ("fund", "ruin", "disc", "fee", "stop")}
    pos = 0
    for rng, n in _blocks(cfg, "gmwb"):
        X = np.zeros(n)
        J = np.zeros(n)           # int_0^s e^{-X}
        fee = np.zeros(n)         # int_0^s e^{-r u} F_u
        tau = np.full(n, np.inf)
        alive = np.ones(n, dtype=bool)
        done = 0
        while done < nsteps:
            steps = min(CHUNK, nsteps - done)
            dW = _normals(rng, steps, n, cfg.antithetic) * sq
            tgrid = (done + np.arange(steps + 1)) * h
            Xs = np.vstack([X[None, :], X + np.cumsum(mu + s * dW, axis=0)])
            Em = np.exp(-Xs)
            Js = np.vstack([J[None, :], J + np.cumsum(0.5 * h * (Em[:-1] + Em[1:]), axis=0)])
            Fs = np.exp(Xs) * np.maximum(G - w * Js, 0.0)
            D = np.exp(-r * tgrid)[:, None] * Fs
            crossed = (w * Js[1:] >= G) & alive
            any_hit = crossed.any(axis=0)
            k = np.argmax(crossed, axis=0)
            # full steps before ruin (or all steps) contribute trapezoids
            csum = np.vstack([np.zeros(n), np.cumsum(0.5 * h * (D[:-1] + D[1:]), axis=0)])
            upto = np.where(any_hit, k, steps)
            fee += np.where(alive, csum[upto, np.arange(n)], 0.0)
            idx = np.nonzero(any_hit)[0]
            if idx.size:
                kk = k[idx]
                gprev = G - w * Js[kk, idx]
                gnext = G - w * Js[kk + 1, idx]
                frac = gprev / (gprev - gnext)
                tau[idx] = tgrid[kk] + frac * h
                fee[idx] += 0.5 * frac * h * D[kk, idx]
                alive[idx] = False
            X, J = Xs[-1], Js[-1]
            done += steps
        ruined = np.isfinite(tau)
        FT = np.exp(X) * np.maximum(G - w * J, 0.0)
        sl = slice(pos, pos + n)
        cols["fund"][sl] = np.where(ruined, 0.0, math.exp(-r * T) * FT)
        cols["ruin"][sl] = ruined
        cols["disc"][sl] = np.where(ruined, np.exp(-r * np.where(ruined, tau, 0.0)), 0.0)
        cols["fee"][sl] = fee
        cols["stop"][sl] = np.minimum(tau, T)
        pos += n
    ident = cols["fund"] + w / r * -np.expm1(-r * cols["stop"]) + m * cols["fee"]
    return GmwbEstimates(
        fund_T=Estimate.of(cols["fund"]),
        p_ruin=Estimate.of(cols["ruin"]),
        disc_ruin=Estimate.of(cols["disc"]),
        fee_base=Estimate.of(cols["fee"]),
        identity=Estimate.of(ident),
        n_paths=cfg.n_paths,
    )


__all__ = [
    "McConfig", "PathSample", "HitSample", "Estimate", "GmwbEstimates", "simulate_A",
    "simulate_hitting_H", "simulate_hitting_tau", "simulate_hitting_tau_general", "simulate_X",
    "simulate_path_Y", "simulate_gmwb",
]
