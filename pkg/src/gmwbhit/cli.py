"""Command-line front end: fee tables, law grids, fair fees and verification.

Examples
--------
    gmwbhit --command table1 --check
    gmwbhit --command fair-fee --sigma 0.3 --g 100 --w 5 --fee-link 0.8
    gmwbhit --command density --law H --nu 1 --level 0.5 --grid 0.1:3:30 --both
    gmwbhit --command verify --skip-mc
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import gmwb, hitting, mc
from .errors import GmwbHitError
from .quad import DEFAULT_QUAD, QuadConfig

COMMANDS = ("table1", "table2", "fair-fee", "density", "cdf", "laplace", "mc-verify",
            "verify", "equivalence")
W_OVER_G = (0.05, 0.06, 0.07, 0.08, 0.09)
SIGMAS = (0.2, 0.3)
TABLE_R = 0.05
CHECK_TOL_BP = 1

# published fair charges in bp, keyed by (w/G, sigma)
GOLDEN_TABLE1 = {
    (0.05, 0.2): 29, (0.06, 0.2): 41, (0.07, 0.2): 54, (0.08, 0.2): 68, (0.09, 0.2): 82,
    (0.05, 0.3): 77, (0.06, 0.3): 104, (0.07, 0.3): 132, (0.08, 0.3): 162, (0.09, 0.3): 192,
}
# (m, m_w) in bp with m_w = 0.8 m
GOLDEN_TABLE2 = {
    (0.05, 0.2): (37, 29), (0.06, 0.2): (53, 42), (0.07, 0.2): (71, 56),
    (0.08, 0.2): (90, 72), (0.09, 0.2): (110, 88),
    (0.05, 0.3): (101, 81), (0.06, 0.3): (139, 111), (0.07, 0.3): (179, 143),
    (0.08, 0.3): (222, 178), (0.09, 0.3): (267, 213),
}

EXIT_OK, EXIT_FAIL, EXIT_CHECK = 0, 1, 2


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    n: int

    @classmethod
    def parse(cls, text: str) -> "Grid":
        try:
            lo, hi, n = text.split(":")
            g = cls(float(lo), float(hi), int(n))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"grid must be lo:hi:n, got {text!r}") from exc
        if g.n < 1 or (g.n > 1 and not g.hi > g.lo):
            raise argparse.ArgumentTypeError(f"invalid grid {text!r}")
        return g

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


@dataclass
class RunConfig:
    """Parsed command and its inputs; unset fields keep the documented defaults."""

    command: str
    params: gmwb.ModelParams
    law: str = "tau"
    nu: float = 1.0
    level: float = 0.5
    t: float = 1.0
    side: str = "both"
    fee_link: float = 1.0
    grid: Grid | None = None
    output_path: str | None = None
    format: str = "csv"
    check: bool = False
    both: bool = False
    skip_mc: bool = False
    jobs: int = 1
    quad: QuadConfig = DEFAULT_QUAD
    mc: mc.McConfig = field(default_factory=lambda: mc.McConfig(n_paths=20_000, dt=1e-3))


@dataclass
class Output:
    """Rows for CSV/JSON emission plus the exit status and diagnostics."""

    columns: list[str]
    rows: list[list]
    code: int = EXIT_OK
    notes: list[str] = field(default_factory=list)
    report: dict | None = None


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def render(out: Output, fmt: str) -> str:
    if out.report is not None:
        return json.dumps(out.report, indent=2) + "\n"
    if fmt == "json":
        recs = [dict(zip(out.columns, row)) for row in out.rows]
        return json.dumps(recs, indent=2, allow_nan=True) + "\n"
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(out.columns)
    for row in out.rows:
        wr.writerow([_cell(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# tables and fees
# ---------------------------------------------------------------------------

def _table_cell(args):
    which, wg, sigma, quad = args
    tpl = gmwb.ModelParams(TABLE_R, sigma, 100.0, 100.0 * wg, 0.0, 0.0)
    if which == 1:
        return gmwb.solve_fair_fee("policyholder", tpl, 1.0, quad)
    return gmwb.solve_fair_fee("insurer", tpl, 0.8, quad)


def _safe(fn, args):
    try:
        return fn(args)
    except GmwbHitError as exc:
        return exc


def _map(fn, items: Sequence, jobs: int) -> list:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_safe, [fn] * len(items), items))
    return [_safe(fn, it) for it in items]


def run_table(which: int, cfg: RunConfig, golden: dict | None = None) -> Output:
    """Fair-charge grid over w/G x sigma at r = 0.05 (policyholder solve for
    table 1 with m = m_w, insurer solve for table 2 with m_w = 0.8 m)."""
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    golden = golden if golden is not None else (GOLDEN_TABLE1 if which == 1 else GOLDEN_TABLE2)
    cells = [(wg, s) for s in SIGMAS for wg in W_OVER_G]
    results = _map(_table_cell, [(which, wg, s, cfg.quad) for wg, s in cells], cfg.jobs)
    cols = ["w_over_G", "sigma", "m_bp"] + (["m_w_bp"] if which == 2 else [])
    out = Output(cols, [])
    for (wg, s), res in zip(cells, results):
        if isinstance(res, Exception):
            out.notes.append(f"cell (w/G={wg}, sigma={s}): {type(res).__name__}: {res}")
            out.rows.append([wg, s] + [math.nan] * (len(cols) - 2))
            out.code = max(out.code, EXIT_FAIL)
            continue
        got = (res.m_bp,) if which == 1 else (res.m_bp, res.m_w_bp)
        out.rows.append([wg, s, *got])
        if cfg.check:
            want = golden[(wg, s)]
            want = (want,) if which == 1 else tuple(want)
            if any(abs(g - w) > CHECK_TOL_BP for g, w in zip(got, want)):
                out.notes.append(f"cell (w/G={wg}, sigma={s}): got {got}, expected {want}")
                out.code = EXIT_CHECK
    return out


def run_fair_fee(cfg: RunConfig) -> Output:
    sides = ["policyholder", "insurer"] if cfg.side == "both" else [cfg.side]
    out = Output(["side", "m", "m_w", "m_bp", "m_w_bp"], [])
    for side in sides:
        # the policyholder equation does not involve m_w, so its link is cosmetic
        try:
            ff = gmwb.solve_fair_fee(side, cfg.params, cfg.fee_link, cfg.quad)
            out.rows.append([side, ff.m, ff.m_w, ff.m_bp, ff.m_w_bp])
        except GmwbHitError as exc:
            out.notes.append(f"{side}: {type(exc).__name__}: {exc}")
            out.rows.append([side, math.nan, math.nan, math.nan, math.nan])
            out.code = EXIT_FAIL
    return out


def run_equivalence(cfg: RunConfig) -> Output:
    grid = cfg.grid or Grid(0.001, 0.03, 5)
    out = Output(["m", "residual", "policyholder_gap", "insurer_gap"], [])
    for m in grid.points():
        p = cfg.params.with_fee(float(m), 1.0)
        out.rows.append([float(m), gmwb.equivalence_residual(p, cfg.quad),
                         gmwb.policyholder_gap(p, cfg.quad), gmwb.insurer_gap(p, cfg.quad)])
    return out


# ---------------------------------------------------------------------------
# law grids
# ---------------------------------------------------------------------------

def _grid_eval(out: Output, xs, fns: list[Callable[[float], float]]) -> Output:
    for x in xs:
        row = [float(x)]
        for fn in fns:
            try:
                row.append(float(fn(float(x))))
            except (GmwbHitError, ArithmeticError, ValueError) as exc:
                out.notes.append(f"point {x}: {type(exc).__name__}: {exc}")
                row.append(math.nan)
                out.code = EXIT_FAIL
        out.rows.append(row)
    return out


def run_density(cfg: RunConfig) -> Output:
    """Density of H_a or tau_{y,0} on a u-grid, or the CDF of A_t on a y-grid."""
    grid = cfg.grid or Grid(0.1, 3.0, 30)
    nu, lvl = cfg.nu, cfg.level
    if cfg.law == "H":
        p = hitting.YorParams(nu, lvl)
        fns = [lambda u: hitting.density_H_second(p, u, cfg.quad)]
        cols = ["u", "density"]
        if cfg.both:
            fns.append(lambda u: hitting.density_H_first(p, u))
            cols = ["u", "density_second", "density_first"]
        return _grid_eval(Output(cols, []), grid.points(), fns)
    if cfg.law == "tau":
        return _grid_eval(Output(["u", "density"], []), grid.points(),
                          [lambda u: hitting.density_tau(nu, lvl, u, cfg.quad)])
    if cfg.law == "A":
        return _grid_eval(Output(["y", "cdf"], []), grid.points(),
                          [lambda y: hitting.cdf_A(nu, cfg.t, y, cfg.quad)])
    raise ValueError(f"unknown law {cfg.law!r}")


def run_cdf(cfg: RunConfig) -> Output:
    grid = cfg.grid or Grid(0.1, 3.0, 30)
    nu, lvl = cfg.nu, cfg.level
    if cfg.law == "A":
        return run_density(cfg)
    if cfg.law == "H":
        hitting.YorParams(nu, lvl).require_nonneg()
        fn = lambda u: hitting.cdf_tau(-nu, lvl, u, cfg.quad)  # noqa: E731
    elif cfg.law == "tau":
        fn = lambda u: hitting.cdf_tau(nu, lvl, u, cfg.quad)  # noqa: E731
    else:
        raise ValueError(f"unknown law {cfg.law!r}")
    return _grid_eval(Output(["u", "cdf"], []), grid.points(), [fn])


def run_laplace(cfg: RunConfig) -> Output:
    grid = cfg.grid or Grid(0.0, 5.0, 11)
    nu, lvl = cfg.nu, cfg.level
    if cfg.law == "H":
        p = hitting.YorParams(nu, lvl)
        fn = lambda s: hitting.laplace_H(p, s)  # noqa: E731
    elif cfg.law == "tau":
        fn = lambda s: hitting.laplace_tau(nu, lvl, s)  # noqa: E731
    else:
        raise ValueError(f"laplace supports laws H and tau, got {cfg.law!r}")
    fns = [fn]
    cols = ["s", "laplace"]
    if cfg.both:
        sign = -1.0 if cfg.law == "H" else 1.0
        fns.append(lambda s: hitting.laplace_tau_numeric(sign * nu, lvl, s, cfg.quad))
        cols = ["s", "laplace", "laplace_numeric"]
    return _grid_eval(Output(cols, []), grid.points(), fns)


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------

def _check(name: str, passed: bool, **stats_) -> dict:
    return {"name": name, "passed": bool(passed), **{k: _jsonable(v) for k, v in stats_.items()}}


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    return v


def _analytic_checks(cfg: RunConfig, golden1: dict, golden2: dict) -> list[dict]:
    q = cfg.quad
    checks = []
    worst = 0.0
    for nu in (0.0, 1.0):
        for u in (0.5, 1.0, 2.0):
            p = hitting.YorParams(nu, 0.5)
            worst = max(worst, abs(hitting.density_H_first(p, u) - hitting.density_H_second(p, u, q)))
    checks.append(_check("representation_equivalence", worst <= 1e-6, max_abs_diff=worst))

    worst = 0.0
    for nu, y, s in ((1.23, 0.3, 0.5), (-1.0, 0.5, 1.0), (-3.0, 0.4, -4.0)):
        a = hitting.laplace_tau(nu, y, s)
        worst = max(worst, abs(hitting.laplace_tau_numeric(nu, y, s, q) - a) / abs(a))
    checks.append(_check("laplace_density_consistency", worst <= 1e-6, max_rel_diff=worst))

    for which, golden in ((1, golden1), (2, golden2)):
        out = run_table(which, RunConfig(f"table{which}", cfg.params, check=True, quad=q), golden)
        checks.append(_check(f"table{which}", out.code == EXIT_OK, rows=out.rows, notes=out.notes))

    worst = 0.0
    for sigma in (0.2, 0.3):
        for m in (0.001, 0.005, 0.01, 0.02, 0.03):
            p = gmwb.ModelParams(TABLE_R, sigma, 100.0, 7.0, m, m)
            worst = max(worst, abs(gmwb.equivalence_residual(p, q)))
    checks.append(_check("equivalence_residual", worst <= 1e-5 * 100.0, max_abs_residual=worst))
    return checks


def _mc_checks(cfg: RunConfig) -> list[dict]:
    mcc = cfg.mc
    checks = []
    a = mc.simulate_hitting_H(1.0, 5.0, mcc)
    b = mc.simulate_hitting_tau(-1.0, 5.0, mc.McConfig(mcc.n_paths, mcc.dt, mcc.seed + 1,
                                                        mcc.horizon_cap, mcc.antithetic))
    pval = float(stats.ks_2samp(a.times, b.times).pvalue)
    checks.append(_check("identity_in_distribution_ks", pval > 0.01, p_value=pval))

    ts = mc.simulate_hitting_tau(2.0, 0.3, mcc)
    target = 1.0 - hitting.prob_finite_tau(2.0, 0.3)
    se = math.sqrt(target * (1 - target) / mcc.n_paths)
    z = abs(ts.censored_fraction - target) / se
    checks.append(_check("censored_mass", z <= 3.0, z=z, mc=ts.censored_fraction, analytic=target))

    p = gmwb.ModelParams(TABLE_R, 0.2, 100.0, 7.0, 0.0054, 0.0054)
    dp = gmwb.derive(p)
    est = mc.simulate_gmwb(p, mcc)
    scale = 4.0 * p.w / p.sigma ** 2
    targets = {
        "fund_T": math.exp(-p.r * p.T) * scale * gmwb.h_value(dp, cfg.quad),
        "p_ruin": gmwb.c_value(dp, cfg.quad),
        "disc_ruin": gmwb.a_value(dp) - gmwb.b_value(dp, cfg.quad),
        "fee_base": scale * 4.0 / p.sigma ** 2 * gmwb.d_value(dp, cfg.quad),
    }
    for name, tgt in targets.items():
        e = getattr(est, name)
        zz = e.z(tgt)
        checks.append(_check(f"mc_{name}", zz <= 3.0, z=zz, mc=e.mean, stderr=e.stderr, analytic=tgt))
    return checks


def run_verify(cfg: RunConfig, golden1: dict | None = None, golden2: dict | None = None) -> Output:
    """Run the analytic checks (and the Monte Carlo ones unless skipped) and
    return a JSON report; exit status 0 iff every check passes."""
    checks = _analytic_checks(cfg, golden1 or GOLDEN_TABLE1, golden2 or GOLDEN_TABLE2)
    if not cfg.skip_mc:
        checks += _mc_checks(cfg)
    ok = all(c["passed"] for c in checks)
    report = {"passed": ok, "skip_mc": cfg.skip_mc,
              "mc": asdict(cfg.mc) if not cfg.skip_mc else None, "checks": checks}
    return Output([], [], EXIT_OK if ok else EXIT_FAIL, report=report)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gmwbhit", description=__doc__.split("\n\n")[0])
    ap.add_argument("command_pos", nargs="?", choices=COMMANDS, metavar="COMMAND",
                    help="same as --command")
    ap.add_argument("--command", choices=COMMANDS)
    ap.add_argument("--r", type=float, default=TABLE_R, help="risk-free rate (default 0.05)")
    ap.add_argument("--sigma", type=float, default=0.2, help="volatility (default 0.2)")
    ap.add_argument("--g", type=float, default=100.0, help="initial deposit G (default 100)")
    ap.add_argument("--w", type=float, default=7.0, help="withdrawal rate (default 7)")
    ap.add_argument("--m", type=float, default=0.0, help="total fee rate per year")
    ap.add_argument("--mw", type=float, default=None, help="GMWB fee rate (default: --m)")
    ap.add_argument("--fee-link", type=float, default=1.0, help="m_w / m for fair-fee (default 1)")
    ap.add_argument("--side", choices=("policyholder", "insurer", "both"), default="both")
    ap.add_argument("--law", choices=("H", "tau", "A"), default="tau")
    ap.add_argument("--nu", type=float, default=1.0, help="drift index of the law")
    ap.add_argument("--level", type=float, default=0.5, help="level a (H) or start y (tau, A)")
    ap.add_argument("--t", type=float, default=1.0, help="time for law A")
    ap.add_argument("--grid", type=Grid.parse, default=None, help="lo:hi:n")
    ap.add_argument("--out", default=None, help="output file (default stdout)")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--seed", type=int, default=12345)
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--check", action="store_true", help="compare tables with published values")
    ap.add_argument("--both", action="store_true", help="emit both representations")
    ap.add_argument("--skip-mc", action="store_true")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for tables")
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    command = ns.command or ns.command_pos
    if command is None:
        raise SystemExit("a command is required (positional or --command)")
    mw = ns.m if ns.mw is None else ns.mw
    params = gmwb.ModelParams(ns.r, ns.sigma, ns.g, ns.w, ns.m, mw)
    return RunConfig(
        command=command, params=params, law=ns.law, nu=ns.nu, level=ns.level, t=ns.t,
        side=ns.side, fee_link=ns.fee_link, grid=ns.grid, output_path=ns.out,
        format=ns.format, check=ns.check, both=ns.both, skip_mc=ns.skip_mc, jobs=ns.jobs,
        mc=mc.McConfig(n_paths=ns.paths, dt=ns.dt, seed=ns.seed),
    )


def dispatch(cfg: RunConfig) -> Output:
    c = cfg.command
    if c in ("table1", "table2"):
        return run_table(int(c[-1]), cfg)
    if c == "fair-fee":
        return run_fair_fee(cfg)
    if c == "density":
        return run_density(cfg)
    if c == "cdf":
        return run_cdf(cfg)
    if c == "laplace":
        return run_laplace(cfg)
    if c == "equivalence":
        return run_equivalence(cfg)
    if c in ("verify", "mc-verify"):
        return run_verify(cfg)
    raise ValueError(f"unknown command {c!r}")


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        out = dispatch(cfg)
    except GmwbHitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    text = render(out, cfg.format)
    if cfg.output_path:
        with open(cfg.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for note in out.notes:
        print(note, file=sys.stderr)
    return out.code


if __name__ == "__main__":
    sys.exit(main())
