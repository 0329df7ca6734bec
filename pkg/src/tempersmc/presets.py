"""Shipped experiment configurations.

These are the reference configurations exercised by the acceptance suite;
the JSON files under ``configs/`` in the repository mirror them for CLI
use.  ``preset(name)`` returns a fresh dict that can be customized (e.g.
``out_dir``) before serialization.
"""

import copy
import json
import math

__all__ = ["PRESETS", "preset", "preset_json"]

_FIXTURE_MODEL = {
    "kind": "finite-tempered",
    "log_weights": [0.0, math.log(0.35)],
    "schedule": {"name": "linear", "gamma_floor": 0.7},
    "move_prob": 0.3,
    "beta": 0.5,
    "lam": 0.6,
}

_GAUSSIAN_MODEL = {
    "kind": "gaussian",
    "target": {"name": "gaussian", "mean": [0.0], "sigma": [1.0]},
    "schedule": {"name": "linear", "gamma_floor": 0.7},
    "increment": {"name": "gaussian", "scale": 1.0},
    "beta": 0.5,
}

PRESETS = {
    # exact initialization-bias decay on the two-state fixture
    "bias_finite": {
        "experiment": "bias-decay",
        "seed": 20_001,
        "model": _FIXTURE_MODEL,
        "init": {"name": "dirac", "state": 0},
        "f": {"name": "indicator", "state": 1},
        "grids": {"n": [3, 4, 5, 6, 8, 10, 12, 14, 16, 20]},
        "replicates": 0,
        "out_dir": "out/bias_finite",
    },
    # particle bias decay on the 1-d Gaussian configuration, shifted start
    "bias_gaussian": {
        "experiment": "bias-decay",
        "seed": 20_002,
        "model": _GAUSSIAN_MODEL,
        "init": {"name": "gaussian", "mean": [3.0], "sigma": [1.0]},
        "f": {"name": "coordinate"},
        "grids": {"n": [5, 10, 20, 40], "N": [2000]},
        "replicates": 200,
        "out_dir": "out/bias_gaussian",
    },
    # RMSE against the exact value as the particle count grows
    "scaling_sqrt_n": {
        "experiment": "n-scaling",
        "seed": 20_003,
        "model": _FIXTURE_MODEL,
        "init": {"name": "tempered-floor"},
        "f": {"name": "indicator", "state": 1},
        "grids": {"n": [20], "N": [100, 1000, 10000]},
        "replicates": 200,
        "out_dir": "out/scaling_sqrt_n",
    },
    # RMSE across horizons at a fixed particle count
    "scaling_uniform_n": {
        "experiment": "n-scaling",
        "seed": 20_004,
        "model": _FIXTURE_MODEL,
        "init": {"name": "tempered-floor"},
        "f": {"name": "indicator", "state": 1},
        "grids": {"n": [10, 20, 40, 80], "N": [1000]},
        "replicates": 200,
        "out_dir": "out/scaling_uniform_n",
    },
    # trajectory diagnostics with the drift function attached
    "drift_monitor": {
        "experiment": "run",
        "seed": 20_005,
        "model": _GAUSSIAN_MODEL,
        "init": {"name": "gaussian", "mean": [3.0], "sigma": [1.0]},
        "grids": {"n": [10, 200], "N": [1000]},
        "replicates": 50,
        "out_dir": "out/drift_monitor",
    },
    # Monte Carlo probe of the one-step drift ratio on spherical shells
    "drift_check": {
        "experiment": "drift-check",
        "seed": 20_006,
        "model": _GAUSSIAN_MODEL,
        "radii": [2, 4, 6],
        "out_dir": "out/drift_check",
    },
    # two-point product-inequality violation in the plane
    "counterexample": {
        "experiment": "counterexample",
        "seed": 20_007,
        "epsilon": 1.0,
        "delta": 0.9,
        "out_dir": "out/counterexample",
    },
    # tilted minorization/drift audit over a horizon grid
    "lemma1_audit": {
        "experiment": "lemma1-audit",
        "seed": 20_008,
        "model": _FIXTURE_MODEL,
        "grids": {"n": list(range(2, 31))},
        "out_dir": "out/lemma1_audit",
    },
}


def preset(name):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])


def preset_json(name):
    return json.dumps(preset(name), indent=2) + "\n"
