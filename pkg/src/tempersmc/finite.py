"""Finite-state model builders: tempered chains, fixtures, random test models.

Finite models carry exact kernel matrices alongside their samplers, so the
oracle can compute every flow quantity by matrix algebra while the particle
engine runs the same model stochastically.  The tempered chain uses lazy
Metropolis kernels with a uniform proposal over the other states, which are
exactly invariant (reversible) for each tempered law.
"""

import numpy as np

from .fk_core import FKModel, InitialDistribution, KernelFamily, PotentialFamily, DriftSpec
from .tempering import LogTarget, TemperedFamily, build_potentials, linear_schedule

__all__ = [
    "finite_target",
    "metropolis_matrix",
    "matrix_kernel_family",
    "table_model",
    "tempered_chain_model",
    "tempered_stationary",
    "two_state_fixture",
    "drift_inputs_for_chain",
    "fixture_drift_inputs",
    "random_finite_model",
]

_ROW_TOL = 1e-12


def finite_target(log_weights):
    """A log target over integer states, backed by a table lookup."""
    logw = np.asarray(log_weights, dtype=float)
    if logw.ndim != 1 or not np.all(np.isfinite(logw)):
        raise ValueError("log weights must be a finite 1-d vector")
    return LogTarget(
        dim=1,
        log_unnorm=lambda x: logw[np.asarray(x, dtype=int)],
        sup_log_unnorm=float(logw.max()),
        name="finite-table",
    )


def metropolis_matrix(log_weights, gamma, move_prob=0.5):
    """Lazy uniform-proposal Metropolis matrix targeting weights^gamma.

    From each state, propose one of the other m-1 states with total
    probability ``move_prob`` and accept by the tempered weight ratio; the
    matrix is reversible for the tempered law, hence exactly invariant.
    """
    logw = np.asarray(log_weights, dtype=float)
    m = logw.size
    if m < 2:
        raise ValueError("need at least two states")
    if not 0.0 < move_prob <= 1.0:
        raise ValueError("move_prob must lie in (0, 1]")
    ratio = np.exp(np.minimum(0.0, gamma * (logw[None, :] - logw[:, None])))
    p = move_prob / (m - 1) * ratio
    np.fill_diagonal(p, 0.0)
    np.fill_diagonal(p, 1.0 - p.sum(axis=1))
    return p


def matrix_kernel_family(matrices):
    """Kernel family backed by explicit matrices, one per step k = 1..n."""
    mats = [np.asarray(a, dtype=float) for a in matrices]
    n = len(mats)
    m = mats[0].shape[0]
    for k, a in enumerate(mats, start=1):
        if a.shape != (m, m) or np.any(a < 0):
            raise ValueError(f"kernel matrix at step {k} is not a {m}x{m} nonnegative matrix")
        if np.max(np.abs(a.sum(axis=1) - 1.0)) > _ROW_TOL:
            raise ValueError(f"kernel matrix at step {k} has rows not summing to 1")
    cums = [np.cumsum(a, axis=1) for a in mats]

    def sample(k, x, rng):
        u = rng.random()
        j = int(np.searchsorted(cums[k - 1][int(x)], u, side="right"))
        return min(j, m - 1)

    def sample_batch(k, xs, rng):
        u = rng.random(len(xs))
        rows = cums[k - 1][np.asarray(xs, dtype=int)]
        return np.minimum((u[:, None] > rows).sum(axis=1), m - 1)

    return KernelFamily(
        horizon=n, sample=sample, sample_batch=sample_batch, matrix=lambda k: mats[k - 1]
    )


def _initial_from_weights(weights):
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > _ROW_TOL:
        raise ValueError("initial weights must be a probability vector")
    cum = np.cumsum(w)

    def sample(size, rng):
        u = rng.random(size)
        return np.minimum((u[:, None] > cum[None, :]).sum(axis=1), w.size - 1)

    return InitialDistribution(sample=sample, weights=w)


def table_model(matrices, log_g_table, mu, log_g_max=None):
    """Assemble a finite model from kernel matrices, a log-weight table and mu.

    ``log_g_table`` has shape (n, m); entries must be finite (weights are
    strictly positive by construction).  The family bound defaults to the
    exact table maximum.
    """
    table = np.asarray(log_g_table, dtype=float)
    if not np.all(np.isfinite(table)):
        raise ValueError("potential table must be finite (weights strictly positive)")
    kernels = matrix_kernel_family(matrices)
    n = kernels.horizon
    m = kernels.matrix(1).shape[0]
    if table.shape != (n, m):
        raise ValueError(f"potential table has shape {table.shape}, expected ({n}, {m})")
    bound = float(table.max()) if log_g_max is None else float(log_g_max)
    if table.max() > bound + 1e-12:
        raise ValueError("potential table exceeds the declared upper bound")
    potentials = PotentialFamily(
        horizon=n, log_g=lambda k, x: table[k][np.asarray(x, dtype=int)], log_g_max=bound
    )
    return FKModel(
        horizon=n,
        kernels=kernels,
        potentials=potentials,
        initial=_initial_from_weights(mu),
        n_states=m,
    )


def tempered_stationary(log_weights, gamma):
    """Exact tempered probability vector weights^gamma / normalizer."""
    logw = gamma * np.asarray(log_weights, dtype=float)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def tempered_chain_model(log_weights, schedule, n, move_prob=0.5, init=None):
    """Finite tempered chain: per-step weight increments + invariant Metropolis kernels.

    ``init`` defaults to the exact floor-tempered law; pass any probability
    vector to start the flow elsewhere.
    """
    logw = np.asarray(log_weights, dtype=float)
    fam = TemperedFamily(target=finite_target(logw), schedule=schedule)
    potentials = build_potentials(fam, n)
    gammas = np.asarray(schedule(np.arange(n + 1) / n), dtype=float)
    matrices = [metropolis_matrix(logw, gammas[k], move_prob) for k in range(1, n + 1)]
    kernels = matrix_kernel_family(matrices)
    if init is None:
        init = tempered_stationary(logw, schedule.gamma_floor)
    return FKModel(
        horizon=n,
        kernels=kernels,
        potentials=potentials,
        initial=_initial_from_weights(init),
        n_states=logw.size,
    )


# Shipped two-state fixture: weights (1, 0.35), linear schedule from 0.7,
# lazy flip kernels.  Small enough to hand-check, mixing slow enough that
# initialization bias stays far above float noise over the test horizons.
FIXTURE_LOG_WEIGHTS = (0.0, float(np.log(0.35)))
FIXTURE_GAMMA_FLOOR = 0.7
FIXTURE_MOVE_PROB = 0.3
FIXTURE_BETA = 0.5


def two_state_fixture(n, init=None, gamma_floor=FIXTURE_GAMMA_FLOOR):
    return tempered_chain_model(
        FIXTURE_LOG_WEIGHTS,
        linear_schedule(gamma_floor),
        n,
        move_prob=FIXTURE_MOVE_PROB,
        init=init,
    )


def drift_inputs_for_chain(log_weights, gamma_floor, move_prob=0.5, beta=0.5, lam=0.6):
    """Drift and minorization inputs holding for every kernel of a tempered chain.

    V is the floor-tempered weight raised to -beta, normalized to 1 at the
    heaviest state.  The small set is the whole space, so the drift offset
    only needs to dominate the worst one-step growth of V over the
    temperature range; both constants are computed on a dense temperature
    grid with a small safety margin and then verified exactly per model by
    the audit.
    """
    logw = np.asarray(log_weights, dtype=float)
    m = logw.size
    v = np.exp(-beta * gamma_floor * (logw - logw.max()))
    gammas = np.linspace(gamma_floor, 1.0, 2001)
    b = 0.0
    min_entry = np.inf
    for g in gammas:
        mk = metropolis_matrix(logw, g, move_prob)
        b = max(b, float(np.max(mk @ v - lam * v)))
        min_entry = min(min_entry, float(mk.min()))
    if min_entry <= 0:
        raise ValueError("chain kernels have zero entries; cannot minorize on the whole space")
    drift = DriftSpec(v=v, lam=lam, level_d=float(v.max()), b_d=max(1.05 * b, 1e-6))
    eps = 0.999 * m * min_entry
    nu = np.full(m, 1.0 / m)
    return drift, (eps, nu)


def fixture_drift_inputs(beta=FIXTURE_BETA, lam=0.6, gamma_floor=FIXTURE_GAMMA_FLOOR):
    return drift_inputs_for_chain(
        FIXTURE_LOG_WEIGHTS,
        gamma_floor=gamma_floor,
        move_prob=FIXTURE_MOVE_PROB,
        beta=beta,
        lam=lam,
    )


def random_finite_model(rng, m=5, n=10):
    """Random strictly positive model for identity and property tests."""
    matrices = rng.dirichlet(np.ones(m), size=(n, m))
    # keep rows comfortably inside the simplex to avoid zero entries
    matrices = 0.9 * matrices + 0.1 / m
    table = rng.uniform(np.log(0.2), np.log(2.0), size=(n, m))
    mu = rng.dirichlet(np.ones(m))
    return table_model(list(matrices), table, mu)
