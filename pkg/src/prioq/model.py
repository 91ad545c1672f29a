"""Priority distributions, selection protocols and the conditional selection probabilities.

A selection protocol for a two-task list is a function ``v(x, y)``: the
probability that the newly arrived task (priority ``x``) is executed while the
old task has priority ``y``.  Two derived quantities drive everything else:

``q(s)``
    probability that the new task is executed when the old one has priority ``s``;
    this is the old task's survival probability for one step.
``q1(s)``
    probability that the old task is executed when the new one has priority
    ``s``, averaged over the old-task law; the new task's survival probability
    in its arrival step.
"""

import csv
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np
from scipy import integrate

from ._validation import check_grid_density, check_in_support, check_probability
from .exceptions import ContractError
from .quadrature import DEFAULT_NODES, DEFAULT_ORDER, QuadratureGrid, map_rule

DISCONTINUITIES = ("none", "diagonal")


# ---------------------------------------------------------------------------
# Priority distributions
# ---------------------------------------------------------------------------

def _uniform_cdf(x, lo, hi):
    return np.clip((np.asarray(x, dtype=float) - lo) / (hi - lo), 0.0, 1.0)


def _uniform_pdf(x, lo, hi):
    x = np.asarray(x, dtype=float)
    return np.where((x >= lo) & (x <= hi), 1.0 / (hi - lo), 0.0)


def _uniform_sampler(rng, size, lo, hi):
    return rng.uniform(lo, hi, size)


@dataclass(frozen=True, eq=False)
class PriorityDistribution:
    """Law of an arriving task's priority, supported on a bounded interval.

    ``cdf`` and ``pdf`` must accept numpy arrays; ``sampler(rng, size)`` draws
    from the law with a :class:`numpy.random.Generator`.
    """

    support_lo: float
    support_hi: float
    cdf: Callable
    pdf: Callable
    sampler: Callable
    name: str = "custom"
    breakpoints: tuple = ()

    def __post_init__(self):
        if not self.support_hi > self.support_lo:
            raise ValueError("support_hi must exceed support_lo")

    @classmethod
    def uniform(cls, lo=0.0, hi=1.0):
        lo, hi = float(lo), float(hi)
        return cls(lo, hi, partial(_uniform_cdf, lo=lo, hi=hi),
                   partial(_uniform_pdf, lo=lo, hi=hi),
                   partial(_uniform_sampler, lo=lo, hi=hi),
                   name=f"uniform({lo:g},{hi:g})")

    @classmethod
    def from_table(cls, x, pdf):
        """Density tabulated at increasing knots ``x``, linearly interpolated.

        The table is rescaled to unit mass.
        """
        table = _Tabulated(x, pdf)
        return cls(table.x[0], table.x[-1], table.cdf, table.pdf, table.sample,
                   name="tabulated", breakpoints=tuple(table.x[1:-1]))

    @classmethod
    def from_csv(cls, path):
        """Read a two-column ``x,pdf`` CSV (header row and ``#`` comments allowed)."""
        xs, fs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    xs.append(float(row[0]))
                    fs.append(float(row[1]))
                except ValueError:
                    if xs:
                        raise
                    continue  # header
        return cls.from_table(xs, fs)

    def sample(self, rng, size=None):
        return self.sampler(rng, size)

    def grid(self, n_nodes=DEFAULT_NODES, spacing="uniform"):
        return QuadratureGrid.gauss_legendre(self.support_lo, self.support_hi, n_nodes,
                                             spacing=spacing, breakpoints=self.breakpoints)

    def validate(self, n_nodes=DEFAULT_NODES, n_check=201):
        """Audit cdf endpoints and monotonicity, pdf sign, unit mass and square integrability."""
        lo, hi = self.support_lo, self.support_hi
        xs = np.linspace(lo, hi, n_check)
        F = np.asarray(self.cdf(xs), dtype=float)
        if abs(F[0]) > 1e-12 or abs(F[-1] - 1.0) > 1e-12:
            raise ContractError("cdf must be 0 at support_lo and 1 at support_hi")
        if np.any(np.diff(F) < -1e-15):
            raise ContractError("cdf must be nondecreasing")
        g = self.grid(n_nodes)
        f = np.asarray(self.pdf(g.nodes), dtype=float)
        if np.any(f < 0):
            raise ContractError("pdf must be nonnegative")
        mass = g.integrate(f)
        if abs(mass - 1.0) > 1e-9:
            raise ContractError(f"pdf integrates to {mass!r}, not 1")
        if not np.isfinite(g.integrate(f * f)):
            raise ContractError("pdf must be square integrable")
        return self


class _Tabulated:
    """Piecewise-linear density with an exact piecewise-quadratic cdf and inverse."""

    def __init__(self, x, pdf):
        x = np.asarray(x, dtype=float)
        f = np.asarray(pdf, dtype=float)
        if x.ndim != 1 or x.size < 2 or x.shape != f.shape:
            raise ContractError("need at least two (x, pdf) pairs")
        if np.any(np.diff(x) <= 0):
            raise ContractError("tabulated x must be strictly increasing")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ContractError("tabulated pdf must be finite and nonnegative")
        dx = np.diff(x)
        seg_mass = 0.5 * (f[:-1] + f[1:]) * dx
        total = seg_mass.sum()
        if total <= 0:
            raise ContractError("tabulated pdf has zero mass")
        self.x = x
        self.f = f / total
        self.slope = np.diff(self.f) / dx
        self.cum = np.concatenate([[0.0], np.cumsum(seg_mass / total)])
        self.cum[-1] = 1.0

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.x, self.f)
        return np.where((t >= self.x[0]) & (t <= self.x[-1]), out, 0.0)

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), self.x[0], self.x[-1])
        i = np.clip(np.searchsorted(self.x, t, side="right") - 1, 0, self.x.size - 2)
        d = t - self.x[i]
        return np.minimum(self.cum[i] + self.f[i] * d + 0.5 * self.slope[i] * d * d, 1.0)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        i = np.clip(np.searchsorted(self.cum, u, side="right") - 1, 0, self.x.size - 2)
        rem = u - self.cum[i]
        f, s = self.f[i], self.slope[i]
        # stable root of s/2 d^2 + f d - rem = 0
        disc = np.sqrt(np.maximum(f * f + 2.0 * s * rem, 0.0))
        denom = f + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(denom > 0, 2.0 * rem / denom, 0.0)
        return np.clip(self.x[i] + d, self.x[i], self.x[i + 1])

    def sample(self, rng, size=None):
        return self.ppf(rng.random(size))


# ---------------------------------------------------------------------------
# Selection protocols
# ---------------------------------------------------------------------------

def _barabasi_v(x, y, p):
    return p * (x > y) + (1.0 - p) / 2.0


def _proportional_v(x, y, p):
    return p * x / (x + y) + (1.0 - p) / 2.0


@dataclass(frozen=True)
class SelectionProtocol:
    """Selection rule ``v(x, y)`` for a two-task list.

    ``sup_bound`` is a certified upper bound on ``v``; it must be < 1 except for
    the deterministic highest-priority-first rule.  ``discontinuity="diagonal"``
    marks rules with a jump on ``x == y``, which quadrature splits around.
    """

    v: Callable
    sup_bound: float
    discontinuity: str = "none"
    p: float = math.nan
    name: str = "custom"

    def __post_init__(self):
        if self.discontinuity not in DISCONTINUITIES:
            raise ValueError(f"discontinuity must be one of {DISCONTINUITIES}")
        if not 0.0 < self.sup_bound <= 1.0:
            raise ContractError("sup_bound must lie in (0, 1]")
        if self.sup_bound == 1.0 and self.p != 1.0:
            raise ContractError("sup_bound must be < 1 unless p = 1")

    def __call__(self, x, y):
        return self.v(x, y)

    @classmethod
    def barabasi(cls, p):
        """Execute the higher-priority task with probability ``p``, else pick uniformly."""
        p = check_probability(p, "p")
        return cls(partial(_barabasi_v, p=p), (1.0 + p) / 2.0, "diagonal", p, "barabasi")

    @classmethod
    def proportional(cls, p, c=0.0):
        """With probability ``p`` pick proportionally to priority, else uniformly.

        ``c`` is the lower end of the priority support and only enters the
        certified bound ``p / (1 + c) + (1 - p) / 2`` (priorities live in [c, 1]).
        """
        p = check_probability(p, "p")
        if not 0.0 <= c < 1.0:
            raise ValueError("c must lie in [0, 1)")
        return cls(partial(_proportional_v, p=p), p / (1.0 + c) + (1.0 - p) / 2.0,
                   "none", p, "proportional")

    @classmethod
    def highest_first(cls):
        return cls.barabasi(1.0)

    @classmethod
    def custom(cls, v, sup_bound, *, support=(0.0, 1.0), discontinuity="none", n_audit=65):
        """Wrap a user rule and audit its declared bound and monotonicity on a grid."""
        proto = cls(v, float(sup_bound), discontinuity)
        proto.audit(*support, n=n_audit)
        return proto

    @property
    def is_builtin(self):
        return self.name in ("barabasi", "proportional")

    def audit(self, lo, hi, n=65):
        """Grid check of ``v`` in [0, 1], ``v <= sup_bound`` and the monotonicity directions."""
        xs = np.linspace(lo, hi, n)
        V = np.asarray(self.v(xs[:, None], xs[None, :]), dtype=float)
        if V.shape != (n, n):
            V = np.broadcast_to(V, (n, n))
        if np.any(V < -1e-12) or np.any(V > 1 + 1e-12):
            raise ContractError("v must take values in [0, 1]")
        if np.max(V) > self.sup_bound + 1e-12:
            raise ContractError(
                f"v reaches {np.max(V)!r} on the audit grid, above sup_bound {self.sup_bound!r}")
        if np.any(np.diff(V, axis=0) < -1e-12):
            raise ContractError("v(., y) must be nondecreasing in the new-task priority")
        if np.any(np.diff(V, axis=1) > 1e-12):
            raise ContractError("v(x, .) must be nonincreasing in the old-task priority")
        return self


# ---------------------------------------------------------------------------
# Densities tabulated on a grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GridDensity:
    """A probability density known through its values at quadrature nodes."""

    grid: QuadratureGrid
    values: np.ndarray = field(repr=False)
    mass_tol: float = 1e-6

    def __post_init__(self):
        vals = check_grid_density(self.grid.nodes, self.grid.weights, self.values,
                                  mass_tol=self.mass_tol)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def support_lo(self):
        return self.grid.lo

    @property
    def support_hi(self):
        return self.grid.hi

    @property
    def mass(self):
        return float(self.grid.integrate(self.values))


def _split_rule(lo, hi, s, split, n_nodes, breakpoints=()):
    """Per-row composite rules on [lo, hi] (one row per entry of ``s``).

    Panels are laid uniformly between consecutive knots: the ends, any
    ``breakpoints`` and, if ``split``, the row's own ``s``.
    """
    order = min(DEFAULT_ORDER, n_nodes)
    n_panels = max(1, n_nodes // order)
    m = s.size
    fixed = np.unique(np.concatenate([[lo, hi], np.asarray(breakpoints, dtype=float)]))
    fixed = fixed[(fixed >= lo) & (fixed <= hi)]
    knots = np.broadcast_to(fixed, (m, fixed.size))
    if split:
        knots = np.sort(np.concatenate([knots, s[:, None]], axis=1), axis=1)
    n_int = knots.shape[1] - 1
    per = max(1, n_panels // n_int)
    frac = np.arange(per) / per
    edges = knots[:, :-1, None] + np.diff(knots, axis=1)[:, :, None] * frac
    edges = np.concatenate([edges.reshape(m, -1), knots[:, -1:]], axis=1)
    x, w = map_rule(edges[:, :-1], edges[:, 1:], order)
    return x.reshape(m, -1), w.reshape(m, -1)


def q(protocol, dist, s, n_nodes=DEFAULT_NODES):
    """Probability that the new task is executed given the old task has priority ``s``.

    Integrates ``v(y, s)`` against the arrival law; for protocols with a jump on
    the diagonal the integral is split at ``y = s``.
    """
    s_arr = check_in_support(s, dist.support_lo, dist.support_hi)
    flat = np.atleast_1d(s_arr).ravel()
    y, w = _split_rule(dist.support_lo, dist.support_hi, flat,
                       protocol.discontinuity == "diagonal", n_nodes)
    vals = np.asarray(protocol(y, flat[:, None]), dtype=float) * dist.pdf(y)
    out = np.sum(vals * w, axis=1)
    return float(out[0]) if s_arr.ndim == 0 else out.reshape(s_arr.shape)


def density_mass(density, n_nodes=DEFAULT_NODES):
    if isinstance(density, GridDensity):
        return density.mass
    lo, hi = density.support_lo, density.support_hi
    g = QuadratureGrid.gauss_legendre(lo, hi, n_nodes,
                                      breakpoints=getattr(density, "breakpoints", ()))
    return float(g.integrate(density.pdf(g.nodes)))


def check_density(density, mass_tol=1e-6, n_nodes=DEFAULT_NODES):
    """Validate a GridDensity or any object exposing ``pdf`` and a support."""
    if isinstance(density, GridDensity):
        return density
    if not all(hasattr(density, a) for a in ("pdf", "support_lo", "support_hi")):
        raise ContractError("density must be a GridDensity or expose pdf/support_lo/support_hi")
    g = QuadratureGrid.gauss_legendre(density.support_lo, density.support_hi, n_nodes,
                                      breakpoints=getattr(density, "breakpoints", ()))
    f = np.asarray(density.pdf(g.nodes), dtype=float)
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ContractError("density must be finite and nonnegative")
    mass = g.integrate(f)
    if abs(mass - 1.0) > mass_tol:
        # fixed grid may miss a sharply concentrated density; retry adaptively
        mass, _ = integrate.quad(lambda t: float(density.pdf(t)), density.support_lo,
                                 density.support_hi, limit=500,
                                 points=getattr(density, "breakpoints", ()) or None)
    if abs(mass - 1.0) > mass_tol:
        raise ContractError(f"density integrates to {mass!r}, not 1 (tolerance {mass_tol})")
    return density


def q1(protocol, old_density, s, n_nodes=DEFAULT_NODES):
    """Probability that the old task is executed given the new task has priority ``s``.

    ``old_density`` is the law of the old task's priority: either a
    :class:`GridDensity` (summed over its own nodes) or an object with ``pdf``,
    ``support_lo`` and ``support_hi`` (integrated with a rule split at ``y = s``
    when the protocol jumps on the diagonal).
    """
    old_density = check_density(old_density, n_nodes=n_nodes)
    lo, hi = old_density.support_lo, old_density.support_hi
    s_arr = check_in_support(s, lo, hi)
    flat = np.atleast_1d(s_arr).ravel()
    if isinstance(old_density, GridDensity):
        y = old_density.grid.nodes
        keep = 1.0 - np.asarray(protocol(flat[:, None], y[None, :]), dtype=float)
        out = keep @ (old_density.grid.weights * old_density.values)
    else:
        y, w = _split_rule(lo, hi, flat, protocol.discontinuity == "diagonal", n_nodes,
                           getattr(old_density, "breakpoints", ()))
        keep = 1.0 - np.asarray(protocol(flat[:, None], y), dtype=float)
        out = np.sum(keep * old_density.pdf(y) * w, axis=1)
    return float(out[0]) if s_arr.ndim == 0 else out.reshape(s_arr.shape)


PROTOCOLS = ("barabasi", "proportional")


def make_model(protocol="barabasi", p=0.5, c=0.0, density_csv=None):
    """Protocol and arrival law from names: Uniform(c, 1) unless a tabulated CSV is given."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
    if density_csv is not None:
        dist = PriorityDistribution.from_csv(density_csv)
    else:
        if not 0.0 <= c < 1.0:
            raise ValueError("c must lie in [0, 1)")
        dist = PriorityDistribution.uniform(c, 1.0)
    if protocol == "barabasi":
        proto = SelectionProtocol.barabasi(p)
    else:
        proto = SelectionProtocol.proportional(p, max(dist.support_lo, 0.0))
    return proto, dist
