"""Composite Gauss-Legendre grids on a bounded interval."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

DEFAULT_NODES = 256
DEFAULT_ORDER = 32


@lru_cache(maxsize=32)
def _reference_rule(order):
    nodes, weights = leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def panel_edges(lo, hi, n_panels, spacing="uniform"):
    """Panel boundaries for a composite rule.

    ``spacing="geometric"`` grades the panels towards ``lo`` and needs ``lo > 0``;
    it resolves kernels such as y / (x + y) whose scale near the lower end of
    the support is ``lo`` itself.
    """
    if spacing == "auto":
        spacing = "geometric" if lo > 0 and hi / lo > 50 else "uniform"
    if spacing == "uniform":
        return np.linspace(lo, hi, n_panels + 1)
    if spacing == "geometric":
        if lo <= 0:
            raise ValueError("geometric spacing requires a positive lower end")
        edges = np.geomspace(lo, hi, n_panels + 1)
        edges[0], edges[-1] = lo, hi
        return edges
    raise ValueError(f"unknown spacing {spacing!r}")


def map_rule(a, b, order=DEFAULT_ORDER):
    """Gauss-Legendre nodes and weights on [a, b] (broadcasts over array ``a``, ``b``)."""
    t, w = _reference_rule(order)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return half * t + (a + b) * 0.5, half * w


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and positive weights of a composite rule on [lo, hi]."""

    nodes: np.ndarray
    weights: np.ndarray
    lo: float
    hi: float

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def gauss_legendre(cls, lo, hi, n_nodes=DEFAULT_NODES, order=DEFAULT_ORDER,
                       spacing="uniform", breakpoints=()):
        """Composite rule with ``n_nodes // order`` panels of ``order`` points each.

        Interior ``breakpoints`` become extra panel edges, so a piecewise-smooth
        integrand is integrated panel by panel.
        """
        lo, hi = float(lo), float(hi)
        if not hi > lo:
            raise ValueError("need hi > lo")
        order = min(order, n_nodes)
        n_panels = max(1, n_nodes // order)
        edges = panel_edges(lo, hi, n_panels, spacing)
        extra = [b for b in breakpoints if lo < b < hi]
        if extra:
            edges = np.unique(np.concatenate([edges, extra]))
        x, w = map_rule(edges[:-1], edges[1:], order)
        return cls(x.ravel(), w.ravel(), lo, hi)

    def __len__(self):
        return self.nodes.size

    @property
    def length(self):
        return self.hi - self.lo

    def integrate(self, values):
        """Weighted sum over the last axis of ``values``."""
        return np.asarray(values, dtype=float) @ self.weights
