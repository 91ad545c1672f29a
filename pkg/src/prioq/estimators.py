"""Estimator-style wrappers so the engines slot into scikit-learn tooling.

Both estimators are parameterised entirely through ``__init__`` (so
``get_params``/``set_params``/``clone`` work) and do their computation in
``fit``; fitted attributes carry a trailing underscore.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .analytic import GeneralWaitingTime
from .model import make_model
from .simulator import SimulationConfig, merge_histograms, residual_fraction, run, run_replicas
from .solver import assemble, solve, solve_auto, solve_direct

_METHODS = ("neumann", "direct", "auto")


class StationaryDensityEstimator(BaseEstimator):
    """Old-task priority density of the two-task proportional rule on Uniform(c, 1).

    ``fit`` assembles the kernel and solves for the density; ``X`` is accepted
    for pipeline compatibility and ignored.  ``method="neumann"`` raises
    :class:`~prioq.exceptions.DivergenceError` outside the certified region,
    ``"direct"`` uses the dense solve, ``"auto"`` falls back to it.
    """

    def __init__(self, p=0.9, c=0.2, n_nodes=256, tol=1e-10, max_terms=200,
                 c1_split=None, method="neumann", normalize=False, spacing="auto"):
        self.p = p
        self.c = c
        self.n_nodes = n_nodes
        self.tol = tol
        self.max_terms = max_terms
        self.c1_split = c1_split
        self.method = method
        self.normalize = normalize
        self.spacing = spacing

    def fit(self, X=None, y=None):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        self.protocol_, self.dist_ = make_model("proportional", self.p, self.c)
        self.assembly_ = assemble(self.protocol_, self.dist_, c1_split=self.c1_split,
                                  n_nodes=self.n_nodes, spacing=self.spacing)
        if self.method == "neumann":
            sol = solve(self.assembly_, self.tol, self.max_terms, self.normalize)
        elif self.method == "direct":
            sol = solve_direct(self.assembly_, self.normalize)
        else:
            sol = solve_auto(self.assembly_, self.tol, self.max_terms, self.normalize)
        self.solution_ = sol
        self.hs_norm_ = sol.hs_norm
        self.n_terms_ = sol.n_terms
        self.residual_ = sol.residual
        self.mass_ = sol.mass
        return self

    def pdf(self, X):
        check_is_fitted(self, "solution_")
        return self.solution_.pdf(np.asarray(X, dtype=float))

    def cdf(self, X):
        check_is_fitted(self, "solution_")
        return self.solution_.cdf(np.asarray(X, dtype=float))

    def score_samples(self, X):
        """Log density at ``X``."""
        return np.log(self.pdf(X))

    def transform(self, X):
        """Probability-integral transform of priorities under the fitted old-task law."""
        return self.cdf(X)

    def waiting_time_law(self):
        check_is_fitted(self, "solution_")
        return GeneralWaitingTime(self.protocol_, self.dist_, self.solution_.density(),
                                  self.n_nodes)


class QueueSimulator(BaseEstimator):
    """Monte Carlo of the priority list; ``fit`` runs ``n_replicas`` seeded replicas.

    With one replica the run uses ``SeedSequence(seed)``; with several,
    replica ``i`` uses the child stream ``spawn_key=(i,)``.
    """

    def __init__(self, protocol="barabasi", p=0.5, c=0.0, L=2, steps=1_000_000,
                 burnin=10_000, seed=0, n_replicas=1, n_jobs=1):
        self.protocol = protocol
        self.p = p
        self.c = c
        self.L = L
        self.steps = steps
        self.burnin = burnin
        self.seed = seed
        self.n_replicas = n_replicas
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        proto, dist = make_model(self.protocol, self.p, self.c)
        config = SimulationConfig(proto, dist, self.L, self.steps, self.burnin, self.seed)
        if self.n_replicas == 1:
            self.results_ = [run(config)]
        else:
            self.results_ = run_replicas(config, self.n_replicas, self.n_jobs)
        self.histogram_ = merge_histograms([r.histogram for r in self.results_])
        self.mean_tau_ = self.histogram_.mean()
        self.residual_fractions_ = [residual_fraction(r) for r in self.results_]
        self.old_priority_samples_ = np.concatenate(
            [r.old_priority_samples for r in self.results_])
        return self

    def pmf(self, k):
        """Empirical P(tau = k) pooled over replicas."""
        check_is_fitted(self, "histogram_")
        return self.histogram_.pmf(k)
