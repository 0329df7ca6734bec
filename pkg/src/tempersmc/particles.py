"""Interacting particle system: init, reweight-resample-mutate steps, estimators.

The transition draws, for each new particle independently, an ancestor
index proportional to the current weights and then mutates it through the
next Markov kernel: the reweight and mutate are one fused mixture draw, and
resampling is always multinomial.  Weight normalization happens in the log
domain with max-subtraction; a step aborts only when every weight
underflows to zero.

Randomness for step k of replicate r comes from the stream keyed by
(seed, r, k): ancestor uniforms are drawn first, then the mutation draws,
with particle i consuming the i-th slot of each vector, so results do not
depend on how replicates are scheduled across workers.
"""

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import streams
from .fk_core import FlowIndex, normalized_log_potential

__all__ = [
    "Ensemble",
    "EmpiricalMeasure",
    "StepSummary",
    "TotalDegeneracyError",
    "init_ensemble",
    "smc_step",
    "run_sampler",
    "estimate",
    "ess_from_log_weights",
]


class TotalDegeneracyError(RuntimeError):
    """Every particle weight underflowed to zero; the replicate is aborted."""


@dataclass
class Ensemble:
    """N particle states at one step of one replicate's flow."""

    states: np.ndarray
    idx: FlowIndex
    seed: int
    replicate: int = 0

    def __post_init__(self):
        if len(self.states) < 1:
            raise ValueError("ensemble must hold at least one particle")

    @property
    def n_particles(self):
        return len(self.states)


@dataclass
class EmpiricalMeasure:
    """Uniformly weighted empirical measure on the particle states."""

    states: np.ndarray


@dataclass
class StepSummary:
    """Per-step diagnostics; weight fields are NaN at the terminal step."""

    k: int
    ess: float
    log_w_max: float
    log_w_min: float
    eta_v: float
    eta_gtilde: float


def init_ensemble(mu_sampler, n_particles, n, seed, replicate=0):
    """Independent draws from the initial law; stream key uses step 0."""
    if n_particles < 1:
        raise ValueError("need at least one particle")
    rng = streams.stream(seed, replicate, 0)
    states = np.asarray(mu_sampler(n_particles, rng))
    if len(states) != n_particles:
        raise ValueError("initial sampler returned the wrong number of states")
    return Ensemble(states=states, idx=FlowIndex(n, 0), seed=seed, replicate=replicate)


def _log_weights(model, k, states):
    lw = np.asarray(model.potentials.log_g(k, states), dtype=float)
    top = lw.max()
    if not np.isfinite(top):
        raise TotalDegeneracyError(f"all particle weights vanished at step {k}")
    return lw


def smc_step(ens, model):
    """One transition: multinomial ancestor draw by weight, then mutation."""
    k = ens.idx.k
    if k >= ens.idx.n:
        raise ValueError(f"flow already at terminal step k={k}")
    lw = _log_weights(model, k, ens.states)
    w = np.exp(lw - lw.max())
    cw = np.cumsum(w)
    rng = streams.stream(ens.seed, ens.replicate, k + 1)
    u = rng.random(ens.n_particles)
    ancestors = np.minimum(
        np.searchsorted(cw, u * cw[-1], side="right"), ens.n_particles - 1
    )
    if model.kernels.sample_batch is not None:
        new_states = model.kernels.sample_batch(k + 1, ens.states[ancestors], rng)
    else:
        new_states = np.asarray(
            [model.kernels.sample(k + 1, x, rng) for x in ens.states[ancestors]]
        )
    return Ensemble(
        states=np.asarray(new_states),
        idx=FlowIndex(ens.idx.n, k + 1),
        seed=ens.seed,
        replicate=ens.replicate,
    )


def ess_from_log_weights(lw):
    """(sum w)^2 / sum w^2 from unnormalized log weights."""
    lw = np.asarray(lw, dtype=float)
    top = lw.max()
    if not np.isfinite(top):
        return 0.0
    w = np.exp(lw - top)
    return float(w.sum() ** 2 / np.sum(w * w))


def _summary(model, ens, drift):
    k = ens.idx.k
    eta_v = float(np.mean(drift.values(ens.states))) if drift is not None else math.nan
    if k < ens.idx.n:
        lw = np.asarray(
            normalized_log_potential(model.potentials, k, ens.states), dtype=float
        )
        return StepSummary(
            k=k,
            ess=ess_from_log_weights(lw),
            log_w_max=float(lw.max()),
            log_w_min=float(lw.min()),
            eta_v=eta_v,
            eta_gtilde=float(np.mean(np.exp(lw))),
        )
    return StepSummary(
        k=k,
        ess=math.nan,
        log_w_max=math.nan,
        log_w_min=math.nan,
        eta_v=eta_v,
        eta_gtilde=math.nan,
    )


def run_sampler(model, n_particles, seed, replicate=0, drift=None, keep_summaries=True):
    """Run the full flow; returns the terminal empirical measure and summaries."""
    ens = init_ensemble(model.initial.sample, n_particles, model.horizon, seed, replicate)
    summaries: Optional[List[StepSummary]] = [] if keep_summaries else None
    for _ in range(model.horizon):
        if summaries is not None:
            summaries.append(_summary(model, ens, drift))
        ens = smc_step(ens, model)
    if summaries is not None:
        summaries.append(_summary(model, ens, drift))
    return EmpiricalMeasure(states=ens.states), summaries


def estimate(em, f):
    """Plain average of f over the support; raises on non-finite values."""
    vals = np.asarray(f(em.states), dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise ValueError(f"test function non-finite at particle {int(np.flatnonzero(bad)[0])}")
    return float(vals.mean())
