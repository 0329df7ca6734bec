"""Tempered target families: schedules, log targets, and the induced potentials.

A schedule maps algorithmic time fraction u in [0, 1] to an inverse
temperature in [gamma_floor, 1], non-decreasing and Lipschitz with a
declared constant.  A tempered family raises an unnormalized density to
the scheduled power; the per-step potentials are the resulting density
ratios, which flatten as the horizon grows because the total temperature
change is fixed.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fk_core import DriftSpec, PotentialFamily

__all__ = [
    "TemperingSchedule",
    "LogTarget",
    "TemperedFamily",
    "linear_schedule",
    "smoothstep_schedule",
    "piecewise_linear_schedule",
    "gaussian_target",
    "gaussian_mixture_target",
    "tempered_log_density",
    "build_potentials",
    "drift_function",
]

_AUDIT_POINTS = 10_001
_LIPSCHITZ_SAFETY = 1.01


@dataclass(frozen=True)
class TemperingSchedule:
    """Inverse-temperature path u -> gamma(u) with declared Lipschitz constant."""

    gamma_floor: float
    fn: Callable
    lipschitz_const: float
    name: str = "custom"

    def __post_init__(self):
        if not 0.0 < self.gamma_floor <= 1.0:
            raise ValueError(f"gamma_floor must lie in (0, 1], got {self.gamma_floor}")
        _audit_schedule(self)

    def __call__(self, u):
        return self.fn(u)


def _audit_schedule(s):
    """Grid audit: endpoints, monotonicity, declared Lipschitz constant.

    The declared constant is trusted up to a 1.01 safety factor; exact
    verification of a black-box callable is not possible.
    """
    u = np.linspace(0.0, 1.0, _AUDIT_POINTS)
    g = np.asarray(s.fn(u), dtype=float)
    if abs(g[0] - s.gamma_floor) > 1e-12 or abs(g[-1] - 1.0) > 1e-12:
        raise ValueError(
            f"schedule endpoints ({g[0]!r}, {g[-1]!r}) != ({s.gamma_floor}, 1.0)"
        )
    dg = np.diff(g)
    if dg.min() < -1e-12:
        raise ValueError("schedule is not non-decreasing")
    slopes = dg / (u[1] - u[0])
    if slopes.max() > s.lipschitz_const * _LIPSCHITZ_SAFETY:
        raise ValueError(
            f"observed slope {slopes.max():.6g} exceeds declared Lipschitz "
            f"constant {s.lipschitz_const}"
        )


def linear_schedule(gamma_floor=0.7):
    span = 1.0 - gamma_floor
    return TemperingSchedule(
        gamma_floor=gamma_floor,
        fn=lambda u: gamma_floor + span * np.asarray(u, dtype=float),
        lipschitz_const=span if span > 0 else 1.0,
        name="linear",
    )


def smoothstep_schedule(gamma_floor=0.7):
    span = 1.0 - gamma_floor

    def fn(u):
        u = np.asarray(u, dtype=float)
        return gamma_floor + span * (3.0 * u**2 - 2.0 * u**3)

    # max slope of 3u^2-2u^3 is 1.5 at u = 1/2
    return TemperingSchedule(
        gamma_floor=gamma_floor,
        fn=fn,
        lipschitz_const=1.5 * span if span > 0 else 1.0,
        name="smoothstep",
    )


def piecewise_linear_schedule(gamma_floor, knots):
    """Schedule interpolating (u_i, gamma_i) knots; endpoints are pinned."""
    pts = [(0.0, gamma_floor)] + [(float(u), float(g)) for u, g in knots] + [(1.0, 1.0)]
    us = np.array([p[0] for p in pts])
    gs = np.array([p[1] for p in pts])
    if np.any(np.diff(us) <= 0):
        raise ValueError("knot abscissae must be strictly increasing in (0, 1)")
    slopes = np.diff(gs) / np.diff(us)
    if slopes.min() < 0:
        raise ValueError("knots must be non-decreasing")
    return TemperingSchedule(
        gamma_floor=gamma_floor,
        fn=lambda u: np.interp(np.asarray(u, dtype=float), us, gs),
        lipschitz_const=float(slopes.max()) if slopes.max() > 0 else 1.0,
        name="piecewise-linear",
    )


@dataclass(frozen=True)
class LogTarget:
    """Unnormalized log density with a known (or declared) supremum.

    ``sup_is_declared`` marks targets whose supremum is a supplied bound
    rather than an attained analytic value; downstream reports flag it as
    unverified.  ``tempered_sampler(gamma, size, rng)``, when available,
    draws exactly from the tempered law (used for references and exact
    initialization).
    """

    dim: int
    log_unnorm: Callable
    sup_log_unnorm: float
    gradient: Optional[Callable] = None
    tempered_sampler: Optional[Callable] = None
    sup_is_declared: bool = False
    name: str = "custom"


def gaussian_target(mean=0.0, sigma=1.0):
    """Isotropic-by-axis Gaussian with unit amplitude: sup of the density is 1."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), mean.shape).copy()
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    d = mean.size

    def log_unnorm(x):
        x = np.asarray(x, dtype=float)
        z = (x - mean) / sigma
        return -0.5 * np.sum(z * z, axis=-1)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return -(x - mean) / sigma**2

    def tempered_sampler(gamma, size, rng):
        return mean + rng.standard_normal((size, d)) * (sigma / math.sqrt(gamma))

    return LogTarget(
        dim=d,
        log_unnorm=log_unnorm,
        sup_log_unnorm=0.0,
        gradient=gradient,
        tempered_sampler=tempered_sampler,
        name="gaussian",
    )


def gaussian_mixture_target(means, sigmas, weights):
    """Mixture of axis-aligned Gaussian bumps with amplitude weights.

    The supremum is bounded by the sum of amplitudes (enumeration over
    component peaks); the bound is declared, not attained.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    n_comp, d = means.shape
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), means.shape).copy()
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n_comp,) or np.any(weights <= 0):
        raise ValueError("need one positive amplitude per component")

    def log_unnorm(x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None, :] - means) / sigmas
        comp = -0.5 * np.sum(z * z, axis=-1) + np.log(weights)
        m = comp.max(axis=-1)
        return m + np.log(np.sum(np.exp(comp - m[..., None]), axis=-1))

    return LogTarget(
        dim=d,
        log_unnorm=log_unnorm,
        sup_log_unnorm=float(np.log(weights.sum())),
        sup_is_declared=True,
        name="gaussian-mixture",
    )


@dataclass(frozen=True)
class TemperedFamily:
    """A log target paired with a tempering schedule."""

    target: LogTarget
    schedule: TemperingSchedule


def tempered_log_density(fam, gamma, x):
    """Unnormalized log density of the tempered law at inverse temperature gamma."""
    lo = fam.schedule.gamma_floor
    if not lo - 1e-12 <= gamma <= 1.0 + 1e-12:
        raise ValueError(f"gamma={gamma} outside [{lo}, 1]")
    return gamma * fam.target.log_unnorm(x)


def build_potentials(fam, n):
    """Per-step potentials for horizon n: the scheduled density-ratio increments.

    log G[k](x) = (gamma((k+1)/n) - gamma(k/n)) * log density(x).  The
    family upper bound follows from the Lipschitz constant: no step can
    change the exponent by more than C/n.
    """
    if n < 1:
        raise ValueError(f"horizon must be >= 1, got {n}")
    gammas = np.asarray(fam.schedule(np.arange(n + 1) / n), dtype=float)
    deltas = np.diff(gammas)
    target = fam.target
    log_g_max = max(0.0, fam.schedule.lipschitz_const / n * target.sup_log_unnorm)

    def log_g(k, x):
        return deltas[k] * target.log_unnorm(x)

    return PotentialFamily(horizon=n, log_g=log_g, log_g_max=log_g_max)


def drift_function(fam, beta):
    """Drift function matched to the family: a negative power of the floor-tempered target.

    V(x) = exp(-beta * gamma_floor * (log density(x) - sup log density)),
    normalized to 1 at the density's supremum, hence V >= 1 everywhere.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    target = fam.target
    bg = beta * fam.schedule.gamma_floor

    def v(x):
        return np.exp(-bg * (target.log_unnorm(x) - target.sup_log_unnorm))

    return DriftSpec(v=v)
