"""Closed-form Barabasi results and the general two-task waiting-time law.

For a task arriving with priority ``x`` the waiting time is 1 with probability
``1 - q1(x)``; otherwise the task becomes old and survives each later step
with probability ``q(x)``:

    P(tau = 1) = E[1 - q1(X)]
    P(tau = k) = E[q1(X) (1 - q(X)) q(X)**(k - 2)],   k >= 2,

with ``X`` drawn from the arrival law.  The geometric structure gives exact
tails, so sums over ``k`` are completed analytically rather than truncated.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_in_support, check_probability
from .exceptions import DegenerateRegimeError
from .model import GridDensity, SelectionProtocol, check_density, q, q1
from .quadrature import DEFAULT_NODES


def _check_p_below_one(p):
    p = check_probability(p, "p")
    if p == 1.0:
        raise DegenerateRegimeError(
            "p = 1: the old-task priority drifts to the bottom of the support; no stationary law")
    return p


def barabasi_stationary_cdf(p, dist, x):
    """Stationary cdf of the old task's priority, two-task Barabasi list.

    Sums the total-probability series over ``X ~ Geometric((1 - p) / (1 + p))``:
    ``1 - E[(1 - R(x))**X] = (1 + p) R / (1 - p + 2 p R)``.
    """
    p = _check_p_below_one(p)
    x = check_in_support(x, dist.support_lo, dist.support_hi, "x")
    R = np.asarray(dist.cdf(x), dtype=float)
    out = (1.0 + p) * R / (1.0 - p + 2.0 * p * R)
    return float(out) if out.ndim == 0 else out


def barabasi_stationary_pdf(p, dist, x):
    p = _check_p_below_one(p)
    x = check_in_support(x, dist.support_lo, dist.support_hi, "x")
    R = np.asarray(dist.cdf(x), dtype=float)
    out = (1.0 - p * p) * np.asarray(dist.pdf(x), dtype=float) / (1.0 - p + 2.0 * p * R) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class BarabasiStationaryDensity:
    """The old-task law for the two-task Barabasi list as a density object."""

    p: float
    dist: object

    def __post_init__(self):
        _check_p_below_one(self.p)

    @property
    def support_lo(self):
        return self.dist.support_lo

    @property
    def support_hi(self):
        return self.dist.support_hi

    @property
    def breakpoints(self):
        # the density has width ~ (1 - p) / (2p) in R near the bottom of the support
        lo, hi = self.support_lo, self.support_hi
        width = (1.0 - self.p) / (2.0 * self.p) if self.p > 0 else 1.0
        graded = []
        while width < 0.25:
            graded.append(lo + (hi - lo) * width)
            width *= 4.0
        return tuple(sorted(set(self.dist.breakpoints) | set(graded)))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.support_lo) & (x <= self.support_hi)
        xc = np.clip(x, self.support_lo, self.support_hi)
        return np.where(inside, barabasi_stationary_pdf(self.p, self.dist, xc), 0.0)

    def cdf(self, x):
        xc = np.clip(np.asarray(x, dtype=float), self.support_lo, self.support_hi)
        return barabasi_stationary_cdf(self.p, self.dist, xc)


def stationary_residual(protocol, dist, density, x=None, n_nodes=DEFAULT_NODES):
    """Sup-norm defect of the stationary balance ``r1 = r1 q + r q1`` at nodes ``x``.

    A stationary old-task density is unchanged by one step: the old task stays
    old when the arrival is executed, and the arrival becomes old when the old
    task is executed.
    """
    density = check_density(density, n_nodes=n_nodes)
    if x is None:
        x = dist.grid(n_nodes).nodes
    if isinstance(density, GridDensity):
        r1 = np.interp(x, density.grid.nodes, density.values)
    else:
        r1 = density.pdf(x)
    rhs = r1 * q(protocol, dist, x, n_nodes) + dist.pdf(x) * q1(protocol, density, x, n_nodes)
    return float(np.max(np.abs(r1 - rhs)))


# ---------------------------------------------------------------------------
# Waiting-time laws
# ---------------------------------------------------------------------------

def _atanh_ratio(p):
    """atanh(p) / p, equal to 1 + p^2/3 + ... near 0."""
    return 1.0 if p < 1e-8 else math.atanh(p) / p


def _phi(x):
    """(1 - exp(-x)) / x with phi(0) = 1."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x == 0.0, 1.0, x)
    return np.where(x == 0.0, 1.0, -np.expm1(-safe) / safe)


def _barabasi_pmf_array(p, ks):
    """Closed-form pmf with p cancelled analytically, stable for every 0 <= p < 1.

    For m = k - 1 >= 1,
    ((1+p)/2)^m - ((1-p)/2)^m = ((1+p)/2)^m * 2 m atanh(p) * phi(2 m atanh(p)),
    which turns the prefactor (1 - p^2) / (4 p m) into a bounded one.
    """
    ks = np.asarray(ks, dtype=np.int64)
    if p == 0.0:
        return np.ldexp(1.0, -ks)
    out = np.empty(ks.shape)
    first = ks == 1
    ratio = _atanh_ratio(p)
    out[first] = 1.0 - (1.0 - p * p) * ratio / 2.0
    m = (ks[~first] - 1).astype(float)
    log_a = math.log1p(p) - math.log(2.0)
    out[~first] = ((1.0 - p * p) / 2.0 * ratio * np.exp(m * log_a)
                   * _phi(2.0 * m * math.atanh(p)))
    return out


def barabasi_tau_pmf(p, k):
    """P(tau = k) for the two-task Barabasi list in closed form.

    ``p = 0`` gives ``2**-k`` exactly.  At ``p = 1`` there is no stationary
    regime; the p -> 1 limit (all mass at k = 1) is returned with a warning.
    """
    p = check_probability(p, "p")
    ks = np.asarray(k)
    if np.any(ks < 1) or not np.issubdtype(ks.dtype, np.integer):
        raise ValueError("k must be a positive integer")
    if p == 1.0:
        warnings.warn("p = 1: returning the p -> 1 limit P(tau=1)=1; the process is a "
                      "record process with no stationary waiting-time law", RuntimeWarning)
        out = (ks == 1).astype(float)
    else:
        out = _barabasi_pmf_array(p, ks)
    return float(out) if out.ndim == 0 else out


def _log_series_tail(a, K, eps=1e-19):
    """Sum over m >= K of a**m / m, together with a certified bound on what was dropped."""
    if a == 0.0:
        return 0.0, 0.0
    total = 0.0
    m0 = K
    block = 4096
    while True:
        m = np.arange(m0, m0 + block, dtype=float)
        terms = np.exp(m * math.log(a)) / m
        total += float(terms.sum())
        m_next = m0 + block
        bound = a ** m_next / (m_next * (1.0 - a))
        if bound < eps or terms[-1] == 0.0:
            return total, bound
        m0 = m_next


class WaitingTimeLaw:
    """Common interface of waiting-time laws with an exact geometric-type tail."""

    def pmf(self, k):
        raise NotImplementedError

    def tail_mass(self, K):
        """P(tau > K)."""
        raise NotImplementedError

    def tail_mean(self, K):
        """Sum over k > K of k P(tau = k)."""
        raise NotImplementedError

    def total(self, K=50):
        return float(np.sum(self.pmf(np.arange(1, K + 1)))) + self.tail_mass(K)

    def mean(self, K=50):
        ks = np.arange(1, K + 1)
        return float(ks @ self.pmf(ks)) + self.tail_mean(K)


@dataclass(frozen=True)
class BarabasiWaitingTime(WaitingTimeLaw):
    p: float

    def __post_init__(self):
        check_probability(self.p, "p")

    def pmf(self, k):
        return barabasi_tau_pmf(self.p, k)

    def _parts(self):
        p = self.p
        return (1.0 - p * p) / (4.0 * p), (1.0 + p) / 2.0, (1.0 - p) / 2.0

    def _direct_tail(self, K, weight):
        # summing the stable pmf avoids the cancellation in C (a-series - b-series) for small p
        a = (1.0 + self.p) / 2.0
        lead = (1.0 - self.p ** 2) / 2.0 * _atanh_ratio(self.p)
        total, k0 = 0.0, K + 1
        while True:
            k = np.arange(k0, k0 + 256)
            total += float(np.sum(weight(k) * _barabasi_pmf_array(self.p, k)))
            k0 += 256
            # remaining terms: pmf(k) <= lead a^(k-1), weight(k) <= k
            if lead * a ** (k0 - 1) * (k0 / (1.0 - a) + 1.0 / (1.0 - a) ** 2) < 1e-19:
                return total

    def tail_mass(self, K):
        if self.p == 0.0:
            return 0.5 ** K
        if self.p < 0.5:
            return self._direct_tail(K, np.ones_like)
        C, a, b = self._parts()
        ta, _ = _log_series_tail(a, K)
        tb, _ = _log_series_tail(b, K)
        return C * (ta - tb)

    def tail_mean(self, K):
        if self.p == 0.0:
            return (K + 2) * 0.5 ** K
        if self.p < 0.5:
            return self._direct_tail(K, lambda k: k.astype(float))
        C, a, b = self._parts()
        ta, _ = _log_series_tail(a, K)
        tb, _ = _log_series_tail(b, K)
        geo = a ** K / (1.0 - a) - b ** K / (1.0 - b)
        return C * (geo + ta - tb)


@dataclass(frozen=True, eq=False)
class GeneralWaitingTime(WaitingTimeLaw):
    """Waiting-time law for any two-task protocol given the old-task density ``r1``.

    ``q`` and ``q1`` are tabulated once on the arrival-law grid (or on the
    grid of ``r1`` when it is a :class:`GridDensity`).
    """

    protocol: SelectionProtocol
    dist: object
    r1: object
    n_nodes: int = DEFAULT_NODES
    x: np.ndarray = field(init=False, repr=False)
    w: np.ndarray = field(init=False, repr=False)
    qx: np.ndarray = field(init=False, repr=False)
    q1x: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        r1 = check_density(self.r1, n_nodes=self.n_nodes)
        grid = r1.grid if isinstance(r1, GridDensity) else self.dist.grid(self.n_nodes)
        x = grid.nodes
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", grid.weights * self.dist.pdf(x))
        object.__setattr__(self, "qx", np.asarray(q(self.protocol, self.dist, x, self.n_nodes)))
        object.__setattr__(self, "q1x", np.asarray(q1(self.protocol, r1, x, self.n_nodes)))

    def pmf(self, k):
        ks = np.asarray(k)
        if np.any(ks < 1):
            raise ValueError("k must be >= 1")
        flat = ks.ravel().astype(np.int64)
        out = np.empty(flat.size)
        first = flat == 1
        out[first] = self.w @ (1.0 - self.q1x)
        rest = flat[~first]
        if rest.size:
            powers = self.qx[None, :] ** (rest[:, None] - 2)
            out[~first] = (powers * (self.q1x * (1.0 - self.qx))) @ self.w
        out = out.reshape(ks.shape)
        return float(out) if out.ndim == 0 else out

    def tail_mass(self, K):
        # sum_{k>K} q1 (1-q) q^(k-2) = q1 q^(K-1)
        return float(self.w @ (self.q1x * self.qx ** (K - 1)))

    def tail_mean(self, K):
        # sum_{k>K} k (1-q) q^(k-2) = q^(K-1) (K + 1 + q / (1 - q))
        qq = self.qx
        return float(self.w @ (self.q1x * qq ** (K - 1) * (K + 1 + qq / (1.0 - qq))))

    def mean_exact(self):
        """E[tau] = 1 + E[q1(X) / (1 - q(X))], no truncation at all."""
        return 1.0 + float(self.w @ (self.q1x / (1.0 - self.qx)))


def tau_pmf_general(protocol, dist, r1, k, n_nodes=DEFAULT_NODES):
    """P(tau = k) for a general two-task protocol by quadrature over the arrival law."""
    return GeneralWaitingTime(protocol, dist, r1, n_nodes).pmf(k)


def expected_tau(source, K=50):
    """Mean waiting time: partial sum up to ``K`` plus the exact tail.

    ``source`` is a :class:`WaitingTimeLaw`, or a float ``p`` meaning the
    two-task Barabasi list.  Returns ``math.inf`` for ``p = 1`` (records regime).
    """
    if isinstance(source, WaitingTimeLaw):
        law = source
    else:
        p = check_probability(source, "p")
        if p == 1.0:
            warnings.warn("p = 1: records regime, the waiting-time mean is infinite",
                          RuntimeWarning)
            return math.inf
        law = BarabasiWaitingTime(p)
    return law.mean(K)
