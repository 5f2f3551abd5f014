"""Hitting times of Yor's process and of GBM with affine drift, and fair-fee
pricing of a guaranteed minimum withdrawal benefit built on them."""

from .errors import (
    CaseError,
    DomainError,
    GmwbHitError,
    NoBracket,
    NonConvergence,
    PoleDegeneracy,
    PoleError,
    TailBoundFailure,
)
from .gmwb import (
    DerivedParams,
    FairFee,
    ModelParams,
    a_value,
    b_value,
    c_value,
    d_value,
    derive,
    equivalence_residual,
    h_value,
    insurer_gap,
    policyholder_gap,
    solve_fair_fee,
)
from .hitting import (
    DiffusionParams,
    YorParams,
    cdf_A,
    cdf_tau,
    density_H_first,
    density_H_second,
    density_tau,
    laplace_H,
    laplace_H_increment,
    laplace_rho,
    laplace_tau,
    laplace_tau_general,
    laplace_tau_to_zero,
    prob_finite_tau,
)
from .quad import QuadConfig, integrate_finite, integrate_spectral

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
