import numpy as np
import pytest

from ippsim.cmaes import CmaEs, minimize
from ippsim.errors import ConfigurationError


def sphere(x):
    return float(np.dot(x, x))


def test_sphere_10d_under_budget_all_seeds():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        _, best_f, evals = minimize(sphere, np.full(10, 0.5), 0.3, rng, max_evaluations=2000, f_target=1e-8)
        assert best_f < 1e-8
        assert evals <= 2000


def test_rosenbrock_2d_progress():
    def rosenbrock(x):
        return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)

    rng = np.random.default_rng(0)
    _, best_f, _ = minimize(rosenbrock, np.array([-1.0, 1.0]), 0.5, rng, max_evaluations=6000)
    assert best_f < 1e-6


def test_deterministic_given_seed():
    xs = []
    for _ in range(2):
        rng = np.random.default_rng(42)
        x, _, _ = minimize(sphere, np.full(5, 1.0), 0.5, rng, max_evaluations=500)
        xs.append(x)
    assert np.array_equal(xs[0], xs[1])


def test_ask_shape_and_tell_updates_mean():
    rng = np.random.default_rng(1)
    es = CmaEs(np.zeros(4), 0.5, rng, popsize=8)
    xs = es.ask()
    assert xs.shape == (8, 4)
    target = np.array([1.0, -1.0, 0.5, 0.0])
    fs = np.array([sphere(x - target) for x in xs])
    mean_before = es.mean.copy()
    es.tell(xs, fs)
    assert not np.array_equal(es.mean, mean_before)
    assert es.evaluations == 8


def test_step_size_stays_positive():
    rng = np.random.default_rng(3)
    es = CmaEs(np.full(3, 2.0), 0.2, rng)
    for _ in range(40):
        xs = es.ask()
        es.tell(xs, np.array([sphere(x) for x in xs]))
        assert es.sigma > 0


def test_invalid_parameters_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigurationError):
        CmaEs(np.zeros(3), 0.0, rng)
    with pytest.raises(ConfigurationError):
        CmaEs(np.zeros(3), 0.5, rng, popsize=3)
    with pytest.raises(ConfigurationError):
        CmaEs(np.zeros((2, 2)), 0.5, rng)
