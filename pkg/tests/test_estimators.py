import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from prioq import QueueSimulator, StationaryDensityEstimator
from prioq.exceptions import DivergenceError


def test_density_estimator_fit_and_transform():
    est = StationaryDensityEstimator(p=0.9, c=0.2, n_nodes=128).fit()
    assert est.hs_norm_ < 1 and est.residual_ < 1e-8
    X = np.linspace(0.2, 1.0, 11).reshape(-1, 1)
    F = est.transform(X).ravel()
    assert F[0] == 0.0 and F[-1] == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(F) > 0)
    assert np.allclose(np.exp(est.score_samples(X)), est.pdf(X))
    assert est.waiting_time_law().mean_exact() == pytest.approx(2.0, abs=1e-6)


def test_density_estimator_params_and_clone():
    est = StationaryDensityEstimator(p=0.7, method="direct")
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert twin.set_params(p=0.5).p == 0.5


def test_density_estimator_needs_fit_and_validates():
    with pytest.raises(NotFittedError):
        StationaryDensityEstimator().pdf([[0.5]])
    with pytest.raises(ValueError):
        StationaryDensityEstimator(method="magic").fit()
    with pytest.raises(DivergenceError):
        StationaryDensityEstimator(p=0.999, c=0.001, method="neumann").fit()
    assert StationaryDensityEstimator(p=0.999, c=0.001, method="auto").fit().solution_.method \
        == "direct"


def test_queue_simulator():
    est = QueueSimulator(p=0.5, steps=30_000, burnin=1000, n_replicas=2).fit()
    assert abs(est.mean_tau_ - 2) < 0.05
    assert len(est.results_) == 2 and est.pmf(1) > 0.5
    again = clone(est).fit()
    assert np.array_equal(again.histogram_.counts, est.histogram_.counts)
