"""Stationary old-task density for general two-task protocols.

Dividing the stationary balance by ``1 - q(x)`` and splitting off a constant
``c1`` turns it into a Fredholm equation of the second kind,

    r1(x) = g(x) * integral (1 - v(x, y) - c1) r1(y) dy + c1 g(x),
    g(x)  = r(x) / (1 - q(x)),

whose solution is ``r1 = c1 g (1 + H1 + H2 + ...)`` with ``H_n = A~^n 1`` and
``A~`` the integral operator with kernel ``alpha(x, y) g(y)``.  The series is
summed on a Gauss-Legendre grid by repeated matrix-vector products; a
Hilbert-Schmidt norm below one certifies convergence.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_probability
from .exceptions import (ContractError, DivergenceError, NonConvergenceWarning,
                         UnsupportedConfigurationError)
from .model import GridDensity, PriorityDistribution, SelectionProtocol, q1
from .quadrature import DEFAULT_NODES, QuadratureGrid, map_rule

DEFAULT_TOL = 1e-10
DEFAULT_MAX_TERMS = 200
_PDF_BLOCK = 8192


@dataclass(frozen=True, eq=False)
class KernelAssembly:
    """Kernel pieces tabulated on a grid.

    ``alpha[i, j] = 1 - v(x_i, y_j) - c1_split``, ``g = r / (1 - q)``,
    ``f = c1_split * g`` and ``k_tilde[i, j] = alpha[i, j] * g[j]``.
    """

    protocol: SelectionProtocol
    dist: PriorityDistribution
    grid: QuadratureGrid
    c1_split: float
    r: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    k_tilde: np.ndarray = field(repr=False)
    alpha_changes_sign: bool = False

    def apply_a(self, phi):
        """``(A phi)(x_i) = g_i * sum_j w_j alpha_ij phi_j`` (the kernel of the fixed-point form)."""
        return self.g * (self.alpha @ (self.grid.weights * phi))

    def apply_a_tilde(self, h):
        return self.k_tilde @ (self.grid.weights * h)


def default_c1_split(protocol, grid):
    if protocol.is_builtin:
        return (1.0 - protocol.p) / 2.0
    x = grid.nodes
    return 1.0 - float(np.max(protocol(x[:, None], x[None, :])))


def assemble(protocol, dist, grid=None, c1_split=None, n_nodes=DEFAULT_NODES, spacing="auto"):
    """Tabulate ``alpha``, ``g``, ``f`` and ``K~`` on ``grid``.

    The denominator ``1 - q(x)`` is computed with the same grid, which keeps
    the discrete fixed point at unit mass.
    """
    if protocol.discontinuity != "none":
        raise ContractError("kernel assembly needs a continuous protocol; "
                            "use the closed forms for the barabasi rule")
    if grid is None:
        grid = dist.grid(n_nodes, spacing=spacing)
    if c1_split is None:
        c1_split = default_c1_split(protocol, grid)
    c1_split = float(c1_split)
    if not 0.0 < c1_split < 1.0:
        raise ContractError(f"c1_split must lie in (0, 1), got {c1_split!r}")
    x, w = grid.nodes, grid.weights
    r = np.asarray(dist.pdf(x), dtype=float)
    V = np.asarray(protocol(x[:, None], x[None, :]), dtype=float)
    # q(x_i) = sum_j w_j r_j v(y_j, x_i)
    qx = (w * r) @ V
    denom = 1.0 - qx
    if np.any(denom <= 0):
        raise ContractError("1 - q(x) must be positive; the protocol violates its bound")
    if np.any(denom < 1.0 - protocol.sup_bound - 1e-12):
        raise ContractError("1 - q(x) fell below 1 - sup_bound; declared bound is wrong")
    g = r / denom
    alpha = 1.0 - V - c1_split
    changes = bool(np.any(alpha < -1e-15))
    if changes:
        warnings.warn("alpha = 1 - v - c1_split changes sign; the series may still converge",
                      RuntimeWarning)
    return KernelAssembly(protocol, dist, grid, c1_split, r, qx, g, c1_split * g,
                          alpha, alpha * g[None, :], changes)


def hs_norm(assembly):
    """Hilbert-Schmidt norm of ``K~`` by tensor-product quadrature."""
    w = assembly.grid.weights
    return float(math.sqrt(w @ (assembly.k_tilde ** 2) @ w))


def _l2(grid, values):
    return float(math.sqrt(grid.integrate(values * values)))


@dataclass(frozen=True, eq=False)
class NeumannSolution:
    """Old-task density on the grid plus convergence diagnostics.

    ``r1_raw`` is the series output as summed; ``r1`` is the raw vector or,
    when ``normalized`` is set, the vector rescaled to unit mass.
    """

    assembly: KernelAssembly = field(repr=False)
    r1_raw: np.ndarray = field(repr=False)
    n_terms: int
    hs_norm: float
    tail_bound: float
    residual: float
    normalized: bool = False
    converged: bool = True
    method: str = "neumann"
    _cdf_table: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self):
        return self.assembly.grid

    @property
    def mass(self):
        return float(self.grid.integrate(self.r1_raw))

    @property
    def r1_normalized(self):
        return self.r1_raw / self.mass

    @property
    def r1(self):
        return self.r1_normalized if self.normalized else self.r1_raw

    @property
    def support_lo(self):
        return self.grid.lo

    @property
    def support_hi(self):
        return self.grid.hi

    def density(self, normalized=True):
        """The solution as a :class:`GridDensity`."""
        vals = self.r1_normalized if normalized else self.r1_raw
        return GridDensity(self.grid, vals)

    def pdf(self, x):
        """Nystrom interpolation: the fixed-point equation evaluated off the grid."""
        a = self.assembly
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        y, w = a.grid.nodes, a.grid.weights
        vals = np.empty(flat.size)
        for start in range(0, flat.size, _PDF_BLOCK):  # bounds the (points x nodes) temporaries
            xb = flat[start:start + _PDF_BLOCK]
            vyx = np.asarray(a.protocol(y[None, :], xb[:, None]), dtype=float)
            gx = np.asarray(a.dist.pdf(xb), dtype=float) / (1.0 - vyx @ (w * a.r))
            alpha = 1.0 - np.asarray(a.protocol(xb[:, None], y[None, :]), dtype=float) - a.c1_split
            vals[start:start + _PDF_BLOCK] = gx * (alpha @ (w * self.r1_raw) + a.c1_split)
        if self.normalized:
            vals = vals / self.mass
        vals = vals.reshape(x.shape)
        return float(vals) if vals.ndim == 0 else vals

    def _table(self, n_cells=4096, order=8):
        if "edges" not in self._cdf_table:
            edges = np.linspace(self.support_lo, self.support_hi, n_cells + 1)
            xs, ws = map_rule(edges[:-1], edges[1:], order)
            cell = (self.pdf(xs.ravel()).reshape(xs.shape) * ws).sum(axis=1)
            self._cdf_table["edges"] = edges
            self._cdf_table["cum"] = np.concatenate([[0.0], np.cumsum(cell)])
        return self._cdf_table["edges"], self._cdf_table["cum"]

    def cdf(self, x, order=8):
        """Integral of the interpolated density from ``support_lo`` to ``x``."""
        edges, cum = self._table()
        x = np.clip(np.asarray(x, dtype=float), self.support_lo, self.support_hi)
        flat = np.atleast_1d(x).ravel()
        i = np.clip(np.searchsorted(edges, flat, side="right") - 1, 0, edges.size - 2)
        xs, ws = map_rule(edges[i], flat, order)
        part = (self.pdf(xs.ravel()).reshape(xs.shape) * ws).sum(axis=1)
        out = (cum[i] + part).reshape(x.shape)
        return float(out) if out.ndim == 0 else out

    def cdf_interp(self, x):
        """Fast cdf by linear interpolation of the cumulative table (for large samples)."""
        edges, cum = self._table()
        return np.interp(x, edges, cum)


def fixed_point_residual(assembly, r1):
    """Sup-norm of ``r1 - (A r1 + f)`` on the grid."""
    return float(np.max(np.abs(r1 - assembly.apply_a(r1) - assembly.f)))


def solve(assembly, tol=DEFAULT_TOL, max_terms=DEFAULT_MAX_TERMS, normalize=False):
    """Sum ``c1 g (1 + H1 + H2 + ...)`` until a term's L1 norm drops below ``tol``.

    ``H_{n+1} = A~ H_n`` is applied by quadrature; iterated kernels are never
    formed.  Refuses with :class:`DivergenceError` when the Hilbert-Schmidt
    norm is not below one.
    """
    max_terms = check_positive_int(max_terms, "max_terms")
    norm = hs_norm(assembly)
    if norm >= 1.0:
        raise DivergenceError(norm)
    grid = assembly.grid
    c1g = assembly.f
    h = np.ones(len(grid))
    total = np.zeros(len(grid))
    n_terms = 0
    converged = False
    for n in range(max_terms):
        if n > 0 and grid.integrate(np.abs(c1g * h)) < tol:
            converged = True
            break
        total += h
        n_terms += 1
        h = assembly.apply_a_tilde(h)
    tail = _l2(grid, c1g) * norm ** (n_terms + 1) / (1.0 - norm)
    if not converged:
        warnings.warn(f"Neumann series hit max_terms={max_terms} before tol={tol}; "
                      f"tail bound {tail:.3g}", NonConvergenceWarning)
    r1 = c1g * total
    return NeumannSolution(assembly, r1, n_terms, norm, tail,
                           fixed_point_residual(assembly, r1), normalize, converged)


def solve_direct(assembly, normalize=False):
    """Solve ``(I - A) r1 = f`` on the grid with a dense linear solve.

    Independent of the series; also usable where the Hilbert-Schmidt
    certificate fails (``tail_bound`` is then NaN).
    """
    n = len(assembly.grid)
    A = assembly.g[:, None] * assembly.alpha * assembly.grid.weights[None, :]
    r1 = np.linalg.solve(np.eye(n) - A, assembly.f)
    return NeumannSolution(assembly, r1, 0, hs_norm(assembly), math.nan,
                           fixed_point_residual(assembly, r1), normalize, True, "direct")


def proportional_setup(p, c, n_nodes=DEFAULT_NODES, spacing="auto"):
    """Protocol, arrival law and assembly for the proportional rule on Uniform(c, 1)."""
    protocol = SelectionProtocol.proportional(p, c)
    dist = PriorityDistribution.uniform(c, 1.0)
    return assemble(protocol, dist, n_nodes=n_nodes, spacing=spacing)


@dataclass(frozen=True)
class RegionPoint:
    p: float
    c: float
    hs_norm: float
    converges: bool


def scan_region(c_values, p_values, n_nodes=128):
    """Hilbert-Schmidt norm over a (p, c) grid for the proportional rule.

    Uses ``c1_split = (1 - p) / 2``; ``converges`` means the norm is below one.
    Points with ``p = 0`` have a vanishing kernel.
    """
    rows = []
    for c in c_values:
        c = float(c)
        if not 0.0 < c < 1.0:
            raise ValueError("c values must lie in (0, 1)")
        for p in p_values:
            p = float(p)
            if not 0.0 <= p < 1.0:
                raise ValueError("p values must lie in [0, 1)")
            norm = hs_norm(proportional_setup(p, c, n_nodes))
            rows.append(RegionPoint(p, c, norm, norm < 1.0))
    return rows


# ---------------------------------------------------------------------------
# Waiting-time bounds for the proportional rule on Uniform(c, 1)
# ---------------------------------------------------------------------------

def proportional_q(p, c, x):
    """Closed form of q for the proportional rule with Uniform(c, 1) arrivals."""
    x = np.asarray(x, dtype=float)
    return (1.0 + p) / 2.0 - p * x / (1.0 - c) * np.log((1.0 + x) / (c + x))


def proportional_dq(p, c, x):
    """Derivative of :func:`proportional_q` in ``x`` (strictly negative for p > 0)."""
    x = np.asarray(x, dtype=float)
    return -p / (1.0 - c) * (np.log((1.0 + x) / (c + x))
                             - x * (1.0 - c) / ((1.0 + x) * (c + x)))


@dataclass(frozen=True)
class TauBounds:
    lower: object
    upper: object
    k0: float
    m: float
    M: float


def solve_auto(assembly, tol=DEFAULT_TOL, max_terms=DEFAULT_MAX_TERMS, normalize=False):
    """Series when certified, dense solve otherwise."""
    try:
        return solve(assembly, tol, max_terms, normalize)
    except DivergenceError:
        return solve_direct(assembly, normalize)


def tau_bounds(p, c, k, r1=None, n_nodes=DEFAULT_NODES):
    """Two-sided bounds ``m B_k <= P(tau = k) <= M B_k`` for k > 1 and the cutoff ``k0``.

    ``B_k = (q(c)**(k-1) - q(1)**(k-1)) / (k - 1)``, ``M = -1 / ((1 - c) q'(1))``
    and ``m = -q1(1) (1 - q(c)) / ((1 - c) q'(c))``: ``|q'|`` is largest at
    ``c``, so ``q'(c)`` is what bounds ``-1/q'`` from below.  ``q1(1)`` needs
    the old-task density; it is solved for when ``r1`` is not given.
    """
    p = check_probability(p, "p", allow_zero=False, allow_one=False)
    if not 0.0 < c < 1.0:
        raise ValueError("c must lie in (0, 1)")
    ks = np.asarray(k)
    if np.any(ks <= 1):
        raise UnsupportedConfigurationError("bounds hold for k > 1 only")
    protocol = SelectionProtocol.proportional(p, c)
    if r1 is None:
        r1 = solve_auto(proportional_setup(p, c, n_nodes)).density()
    q1_top = q1(protocol, r1, 1.0)
    qc, qtop = float(proportional_q(p, c, c)), float(proportional_q(p, c, 1.0))
    dq_c, dq_top = float(proportional_dq(p, c, c)), float(proportional_dq(p, c, 1.0))
    m = -q1_top * (1.0 - qc) / ((1.0 - c) * dq_c)
    M = -1.0 / ((1.0 - c) * dq_top)
    m1 = ks - 1.0
    B = (qc ** m1 - qtop ** m1) / m1
    lower, upper = m * B, M * B
    if lower.ndim == 0:
        lower, upper = float(lower), float(upper)
    return TauBounds(lower, upper, -1.0 / math.log(qc), m, M)
