"""Covariance matrix adaptation evolution strategy (minimization).

Standard CMA-ES with rank-one and rank-mu covariance updates, cumulative
step-size adaptation, and the default log-rank recombination weights and
learning rates. Kept dependency-free beyond numpy so it can be sanity-checked
in isolation (e.g. on the sphere function) independently of any planning code.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError


class CmaEs:
    """Ask/tell optimizer state for one CMA-ES run."""

    def __init__(
        self,
        x0: np.ndarray,
        sigma0: float,
        rng: np.random.Generator,
        popsize: int | None = None,
    ) -> None:
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.ndim != 1 or x0.size < 1:
            raise ConfigurationError("x0 must be a 1-D vector")
        if sigma0 <= 0:
            raise ConfigurationError("sigma0 must be > 0")
        n = x0.size
        lam = popsize if popsize is not None else 4 + int(3 * np.log(n))
        if lam < 4:
            raise ConfigurationError("population size must be >= 4")
        mu = lam // 2
        raw = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        self.weights = raw / raw.sum()
        self.mu_eff = 1.0 / np.sum(self.weights**2)

        self.n = n
        self.lam = lam
        self.mu = mu
        self.rng = rng
        self.mean = x0.copy()
        self.sigma = float(sigma0)

        self.c_sigma = (self.mu_eff + 2.0) / (n + self.mu_eff + 5.0)
        self.d_sigma = (
            1.0
            + 2.0 * max(0.0, np.sqrt((self.mu_eff - 1.0) / (n + 1.0)) - 1.0)
            + self.c_sigma
        )
        self.c_c = (4.0 + self.mu_eff / n) / (n + 4.0 + 2.0 * self.mu_eff / n)
        self.c_1 = 2.0 / ((n + 1.3) ** 2 + self.mu_eff)
        self.c_mu = min(
            1.0 - self.c_1,
            2.0 * (self.mu_eff - 2.0 + 1.0 / self.mu_eff) / ((n + 2.0) ** 2 + self.mu_eff),
        )
        self.chi_n = np.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n**2))

        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.C = np.eye(n)
        self.generation = 0
        self.evaluations = 0
        self.best_x = x0.copy()
        self.best_f = np.inf
        self._update_eigensystem()

    def _update_eigensystem(self) -> None:
        self.C = 0.5 * (self.C + self.C.T)
        eigvals, eigvecs = np.linalg.eigh(self.C)
        eigvals = np.maximum(eigvals, 1e-20)
        self._B = eigvecs
        self._D = np.sqrt(eigvals)
        self._inv_sqrt_C = eigvecs @ np.diag(1.0 / self._D) @ eigvecs.T

    def ask(self) -> np.ndarray:
        """Sample a (popsize, n) array of candidate solutions."""
        z = self.rng.standard_normal((self.lam, self.n))
        y = z * self._D @ self._B.T
        self._last_y = y
        return self.mean + self.sigma * y

    def tell(self, solutions: np.ndarray, fitnesses: np.ndarray) -> None:
        """Rank candidates by fitness (lower is better) and update the state."""
        fitnesses = np.asarray(fitnesses, dtype=np.float64)
        order = np.argsort(fitnesses, kind="stable")
        self.evaluations += fitnesses.size
        if fitnesses[order[0]] < self.best_f:
            self.best_f = float(fitnesses[order[0]])
            self.best_x = np.array(solutions[order[0]], copy=True)

        y = (solutions[order[: self.mu]] - self.mean) / self.sigma
        y_w = self.weights @ y
        self.mean = self.mean + self.sigma * y_w

        self.p_sigma = (1.0 - self.c_sigma) * self.p_sigma + np.sqrt(
            self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff
        ) * (self._inv_sqrt_C @ y_w)
        norm_ps = float(np.linalg.norm(self.p_sigma))
        denom = np.sqrt(1.0 - (1.0 - self.c_sigma) ** (2 * (self.generation + 1)))
        h_sigma = float(norm_ps / denom / self.chi_n < 1.4 + 2.0 / (self.n + 1.0))
        self.p_c = (1.0 - self.c_c) * self.p_c + h_sigma * np.sqrt(
            self.c_c * (2.0 - self.c_c) * self.mu_eff
        ) * y_w

        rank_one = np.outer(self.p_c, self.p_c)
        rank_mu = (self.weights[:, None] * y).T @ y
        delta_h = (1.0 - h_sigma) * self.c_c * (2.0 - self.c_c)
        self.C = (
            (1.0 - self.c_1 - self.c_mu) * self.C
            + self.c_1 * (rank_one + delta_h * self.C)
            + self.c_mu * rank_mu
        )
        self.sigma *= float(
            np.exp((self.c_sigma / self.d_sigma) * (norm_ps / self.chi_n - 1.0))
        )
        self.generation += 1
        self._update_eigensystem()


def minimize(
    func,
    x0: np.ndarray,
    sigma0: float,
    rng: np.random.Generator,
    popsize: int | None = None,
    max_evaluations: int = 10000,
    f_target: float = -np.inf,
) -> tuple[np.ndarray, float, int]:
    """Run CMA-ES until the evaluation budget or fitness target is reached.

    Returns (best solution, best fitness, evaluations used).
    """
    es = CmaEs(x0, sigma0, rng, popsize)
    while es.evaluations < max_evaluations and es.best_f > f_target:
        xs = es.ask()
        fs = np.array([func(x) for x in xs])
        es.tell(xs, fs)
    return es.best_x, es.best_f, es.evaluations
