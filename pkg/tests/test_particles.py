import math

import numpy as np
import pytest
import scipy.stats

from tempersmc import oracle, streams
from tempersmc.fk_core import (
    FKModel,
    InitialDistribution,
    KernelFamily,
    PotentialFamily,
)
from tempersmc.finite import (
    fixture_drift_inputs,
    table_model,
    tempered_stationary,
    two_state_fixture,
)
from tempersmc.particles import (
    EmpiricalMeasure,
    TotalDegeneracyError,
    estimate,
    ess_from_log_weights,
    init_ensemble,
    run_sampler,
    smc_step,
)
from tempersmc.rwm import gaussian_increment, rwm_kernel_family
from tempersmc.tempering import (
    TemperedFamily,
    build_potentials,
    drift_function,
    gaussian_target,
    linear_schedule,
)

M2 = np.array([[0.9, 0.1], [0.2, 0.8]])
G2 = np.array([1.0, 0.5])


def two_state_model(n=3, mu=(0.6, 0.4)):
    table = np.tile(np.log(G2), (n, 1))
    return table_model([M2] * n, table, np.array(mu))


def gaussian_model(n, init_mean=0.0, floor=0.7):
    fam = TemperedFamily(gaussian_target([0.0], [1.0]), linear_schedule(floor))
    sampler = lambda size, rng: init_mean + rng.standard_normal((size, 1))
    return FKModel(
        horizon=n,
        kernels=rwm_kernel_family(fam, n, gaussian_increment(1, 1.0)),
        potentials=build_potentials(fam, n),
        initial=InitialDistribution(sample=sampler),
    ), fam


# ------------------------------------------------------------- initialization

def test_init_dirac_all_equal():
    ens = init_ensemble(lambda size, rng: np.full(size, 7), 100, 3, seed=1)
    assert np.all(ens.states == 7)
    assert ens.idx.k == 0 and ens.idx.n == 3


def test_init_bit_reproducible():
    sampler = lambda size, rng: rng.standard_normal((size, 2))
    a = init_ensemble(sampler, 64, 5, seed=42, replicate=3)
    b = init_ensemble(sampler, 64, 5, seed=42, replicate=3)
    np.testing.assert_array_equal(a.states, b.states)
    c = init_ensemble(sampler, 64, 5, seed=42, replicate=4)
    assert not np.array_equal(a.states, c.states)


def test_init_finite_frequencies():
    model = two_state_model()
    n_particles = 100_000
    ens = init_ensemble(model.initial.sample, n_particles, 3, seed=9)
    counts = np.bincount(ens.states, minlength=2)
    for j, p in enumerate(model.initial.weights):
        sd = math.sqrt(n_particles * p * (1 - p))
        assert abs(counts[j] - n_particles * p) < 4 * sd


# ------------------------------------------------------------- transitions

def test_flat_weights_resample_uniformly():
    # constant potential: each new particle's law is the kernel-propagated
    # empirical measure
    n, m = 2, 3
    mats = [np.array([[0.2, 0.5, 0.3], [0.6, 0.2, 0.2], [0.1, 0.1, 0.8]])] * n
    model = table_model(mats, np.full((n, m), np.log(2.7)), np.full(m, 1 / 3))
    pattern = np.array([0, 0, 1, 2, 2, 2], dtype=int)
    n_copies = 20_000
    ens = init_ensemble(lambda size, rng: np.tile(pattern, size // pattern.size),
                        pattern.size * n_copies, n, seed=5)
    stepped = smc_step(ens, model)
    freq = np.bincount(pattern, minlength=m) / pattern.size
    expected = freq @ mats[0]
    counts = np.bincount(stepped.states, minlength=m)
    _, pval = scipy.stats.chisquare(counts, expected * stepped.n_particles)
    assert pval > 1e-4


def test_single_particle_always_mutates():
    model = two_state_model()
    ens = init_ensemble(lambda size, rng: np.ones(size, dtype=int), 1, 3, seed=2)
    stepped = smc_step(ens, model)
    assert stepped.n_particles == 1
    assert stepped.idx.k == 1


def test_one_step_law_matches_exact_mixture():
    # a tiled fixed ensemble: each new particle is an independent draw from
    # the reweight-then-mutate mixture of the pattern measure
    model = two_state_model()
    pattern = np.array([0, 0, 0, 1, 1], dtype=int)
    n_copies = 20_000
    ens = init_ensemble(lambda size, rng: np.tile(pattern, size // pattern.size),
                        pattern.size * n_copies, 3, seed=31)
    stepped = smc_step(ens, model)
    eta_pattern = np.bincount(pattern, minlength=2) / pattern.size
    expected = oracle.flow_map(model, eta_pattern, 0, 1).w
    counts = np.bincount(stepped.states, minlength=2)
    _, pval = scipy.stats.chisquare(counts, expected * stepped.n_particles)
    assert pval > 1e-4


def test_total_degeneracy_raises():
    n, m = 2, 2
    pf = PotentialFamily(horizon=n, log_g=lambda k, x: np.full(np.asarray(x).shape, -np.inf),
                         log_g_max=0.0)
    kf = KernelFamily(horizon=n, sample=lambda k, x, rng: x,
                      sample_batch=lambda k, xs, rng: xs)
    model = FKModel(horizon=n, kernels=kf, potentials=pf,
                    initial=InitialDistribution(sample=lambda size, rng: np.zeros(size, dtype=int)))
    ens = init_ensemble(model.initial.sample, 16, n, seed=1)
    with pytest.raises(TotalDegeneracyError):
        smc_step(ens, model)


def test_step_past_terminal_rejected():
    model = two_state_model(n=1)
    ens = init_ensemble(model.initial.sample, 8, 1, seed=1)
    stepped = smc_step(ens, model)
    with pytest.raises(ValueError):
        smc_step(stepped, model)


# ------------------------------------------------------------- full runs

def test_horizon_zero_returns_initial_ensemble():
    m = 2
    pf = PotentialFamily(horizon=0, log_g=lambda k, x: 0.0, log_g_max=0.0)
    kf = KernelFamily(horizon=0, sample=lambda k, x, rng: x)
    model = FKModel(horizon=0, kernels=kf, potentials=pf,
                    initial=InitialDistribution(sample=lambda size, rng: np.arange(size) % m))
    em, summaries = run_sampler(model, 10, seed=3)
    np.testing.assert_array_equal(em.states, np.arange(10) % m)
    assert len(summaries) == 1 and math.isnan(summaries[0].ess)


def test_terminal_mean_matches_oracle_over_replicates():
    model = two_state_fixture(6)
    f = lambda s: (np.asarray(s) == 1).astype(float)
    exact = float(oracle.eta_exact(model, 6).w @ np.array([0.0, 1.0]))
    vals = []
    for r in range(200):
        em, _ = run_sampler(model, 400, seed=17, replicate=r, keep_summaries=False)
        vals.append(estimate(em, f))
    vals = np.asarray(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - exact) < 4 * se


def test_gaussian_symmetry_of_terminal_mean():
    model, _ = gaussian_model(8, init_mean=0.0)
    vals = []
    for r in range(60):
        em, _ = run_sampler(model, 500, seed=23, replicate=r, keep_summaries=False)
        vals.append(estimate(em, lambda x: np.asarray(x)[:, 0]))
    vals = np.asarray(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean()) < 4 * se


def test_summaries_schema():
    model = two_state_fixture(4)
    drift, _ = fixture_drift_inputs()
    _, summaries = run_sampler(model, 300, seed=5, drift=drift)
    assert [s.k for s in summaries] == [0, 1, 2, 3, 4]
    for s in summaries[:-1]:
        assert 0 < s.ess <= 300
        assert s.log_w_max <= 0 + 1e-12 and s.log_w_min <= s.log_w_max
        assert 0 < s.eta_gtilde <= 1 + 1e-12
        assert s.eta_v >= 1.0
    last = summaries[-1]
    assert math.isnan(last.ess) and math.isnan(last.eta_gtilde)
    assert last.eta_v >= 1.0


def test_ess_formula():
    assert ess_from_log_weights(np.zeros(50)) == pytest.approx(50.0)
    lw = np.log(np.array([1.0, 1.0, 2.0]))
    assert ess_from_log_weights(lw) == pytest.approx(16.0 / 6.0)
    assert ess_from_log_weights(np.full(4, -np.inf)) == 0.0


# ------------------------------------------------------------- estimators

def test_estimate_basics():
    em = EmpiricalMeasure(states=np.full(10, 3, dtype=int))
    assert estimate(em, lambda s: np.ones(len(s))) == 1.0
    assert estimate(em, lambda s: np.asarray(s, dtype=float)) == 3.0
    with pytest.raises(ValueError, match="particle 0"):
        estimate(em, lambda s: np.full(len(s), np.nan))


def test_exchangeability_of_particle_indices():
    model = two_state_fixture(3)
    picks = {0: [], 3: []}
    for r in range(400):
        em, _ = run_sampler(model, 8, seed=41, replicate=r, keep_summaries=False)
        picks[0].append(int(em.states[0]))
        picks[3].append(int(em.states[3]))
    table = np.stack([np.bincount(picks[0], minlength=2), np.bincount(picks[3], minlength=2)])
    _, pval, _, _ = scipy.stats.chi2_contingency(table)
    assert pval > 1e-3


# ------------------------------------------------------------- drift monitoring

def test_particle_drift_regression_and_boundedness():
    model, fam = gaussian_model(30, init_mean=3.0)
    drift = drift_function(fam, 0.5)
    pairs = []
    sup_by_n = {}
    for n in (10, 30):
        model_n, _ = gaussian_model(n, init_mean=3.0)
        per_k = []
        for r in range(40):
            _, summaries = run_sampler(model_n, 400, seed=53, replicate=r, drift=drift)
            etav = [s.eta_v for s in summaries]
            per_k.append(etav)
            pairs.extend(zip(etav[:-1], etav[1:]))
        sup_by_n[n] = float(np.max(np.mean(np.asarray(per_k), axis=0)))
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    # one-step conditional mean of eta(V) contracts: slope below 1 with a
    # bounded offset (drift probe on this target estimates lambda ~ 0.74-0.94)
    assert slope <= 0.95
    assert 0.0 <= intercept < 5.0
    # sup over steps of the mean drift statistic does not grow with the horizon
    assert sup_by_n[30] <= 3.0 * sup_by_n[10]


def test_normalizer_diagnostic_bounded_away_from_zero():
    model, fam = gaussian_model(20, init_mean=3.0)
    drift = drift_function(fam, 0.5)
    worst = math.inf
    for r in range(20):
        _, summaries = run_sampler(model, 500, seed=61, replicate=r, drift=drift)
        worst = min(worst, min(s.eta_gtilde for s in summaries[:-1]))
    assert worst > 0.5
