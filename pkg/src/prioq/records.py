"""Lower-record statistics of an i.i.d. stream (the p = 1, two-task regime).

With highest-priority-first selection the task left on a two-task list is the
running minimum of every priority seen, so its resident times are the
inter-record times of the priority stream.  Record times of a continuous
stream are distribution-free; the batteries below use Uniform(0, 1).
"""

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from ._validation import check_positive_int
from .exceptions import PartialResultWarning

MAX_ORACLE_T = 8
_MAX_INDICATOR_LENGTH = 10_000_000


@dataclass(frozen=True, eq=False)
class RecordTrace:
    """Record times ``T_k`` (``T_1 = 1``), values ``x_k`` and gaps ``Delta_k = T_k - T_{k-1}``.

    ``inter_record[0]`` is ``Delta_2``.  ``length`` is the stream length the
    trace was observed over.
    """

    record_times: np.ndarray
    record_values: np.ndarray
    length: int
    inter_record: np.ndarray = field(init=False)

    def __post_init__(self):
        times = np.asarray(self.record_times)
        object.__setattr__(self, "inter_record", np.diff(times))

    @property
    def n_records(self):
        return int(np.size(self.record_times))

    @property
    def indicators(self):
        """0/1 array with ``I_t = 1`` exactly at record times (t = 1 .. length)."""
        if self.length > _MAX_INDICATOR_LENGTH:
            raise MemoryError("stream too long to materialise its indicator sequence")
        ind = np.zeros(self.length, dtype=np.int8)
        ind[np.asarray(self.record_times, dtype=np.int64) - 1] = 1
        return ind


def extract_records(stream):
    """Lower records of ``stream``; equal values never count as a new record."""
    x = np.asarray(stream, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("stream must be a non-empty 1-D sequence")
    running = np.minimum.accumulate(x)
    is_record = np.empty(x.size, dtype=bool)
    is_record[0] = True
    is_record[1:] = x[1:] < running[:-1]
    idx = np.flatnonzero(is_record)
    return RecordTrace(idx + 1, x[idx], int(x.size))


def indicator_law_oracle(t_max):
    """Exact joint law of ``(I_1, ..., I_t_max)`` by enumerating rank orderings.

    Returns a dict mapping indicator tuples to :class:`fractions.Fraction`
    probabilities; every one of the ``t_max!`` orderings has equal weight.
    """
    t_max = check_positive_int(t_max, "t_max")
    if t_max > MAX_ORACLE_T:
        raise ValueError(f"t_max must be <= {MAX_ORACLE_T} (enumerates t_max! orderings)")
    law = {}
    weight = Fraction(1, math.factorial(t_max))
    for perm in itertools.permutations(range(t_max)):
        ind = []
        low = math.inf
        for r in perm:
            ind.append(1 if r < low else 0)
            low = min(low, r)
        key = tuple(ind)
        law[key] = law.get(key, 0) + weight
    return law


def indicator_marginals(law):
    t_max = len(next(iter(law)))
    return [sum((pr for key, pr in law.items() if key[t]), Fraction(0)) for t in range(t_max)]


def tata_conditional(t, x):
    """P(Delta_k / T_k > x | T_{k-1} = t) = t / floor(t / (1 - x)).

    ``x = 1`` returns 0 (the limit).
    """
    t = check_positive_int(t, "t")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 1.0:
        return 0.0
    if isinstance(x, Fraction):
        return float(Fraction(t) / math.floor(Fraction(t) / (1 - x)))
    return t / math.floor(t / (1.0 - x))


def next_record_times(t, rng):
    """Draw ``T_k`` given ``T_{k-1} = t`` (array), using ``P(T_k > s | t) = t / s`` for s >= t.

    ``floor(t / U) + 1`` is exact in integer arithmetic while ``t / U`` is
    below 2**53; past that the draw is exact to float precision.
    """
    u = 1.0 - rng.random(np.shape(t))  # in (0, 1]
    return np.floor(t / u) + 1.0


def simulate_record_times(n_runs, k_target, rng):
    """Record times ``T_1..T_k_target`` for ``n_runs`` independent streams.

    Generated from the record-time chain directly; no stream is materialised,
    so ``k_target`` around 30 (streams of length ~e^30) costs O(n_runs k).
    Returns an ``(n_runs, k_target)`` float array.
    """
    out = np.empty((n_runs, k_target))
    out[:, 0] = 1.0
    for k in range(1, k_target):
        out[:, k] = next_record_times(out[:, k - 1], rng)
    return out


def _geometric_gap(x, rng):
    if x > 1e-12:
        return int(rng.geometric(x))
    # inversion in floats: numpy's int64 draw would overflow for tiny x
    gap = math.floor(math.log(1.0 - rng.random()) / math.log1p(-x)) + 1.0
    return int(gap) if math.isfinite(gap) else None


def simulate_record_trace(k_max, rng):
    """One uniform stream's first ``k_max`` records, values included.

    Given the current record value ``x``, the gap to the next record is
    geometric with success probability ``x`` and the next value is uniform on
    (0, x), independently.  Record times are int64 while they fit and float64
    beyond (exact below 2**53).
    """
    k_max = check_positive_int(k_max, "k_max")
    times = [1]
    values = [float(rng.random())]
    for _ in range(k_max - 1):
        x = values[-1]
        gap = _geometric_gap(x, rng)
        nxt = x * float(1.0 - rng.random())
        if gap is None or nxt == 0.0 or times[-1] + gap > 1e300:
            warnings.warn(f"stopped after {len(times)} records: float range exhausted",
                          PartialResultWarning)
            break
        times.append(times[-1] + gap)
        values.append(nxt)
    dtype = np.int64 if times[-1] < 2**63 else float
    return RecordTrace(np.asarray(times, dtype=dtype), np.asarray(values), times[-1])


def _normalised_log(z, k):
    return (np.log(z) - k) / math.sqrt(k)


@dataclass(frozen=True)
class AsymptoticReport:
    k_target: int
    n_runs: int
    slln: dict
    clt_ks: dict
    lil_band: dict
    ratio_ks: float
    median_log_gap_rate: float


def lil_band_fraction(log_z, band=1.05, k_min=3):
    """Share of ``k >= k_min`` with ``|ln z_k - k| / sqrt(2 k ln ln k) <= band``."""
    k = np.arange(1, log_z.size + 1, dtype=float)
    sel = k >= k_min
    env = np.sqrt(2.0 * k[sel] * np.log(np.log(k[sel])))
    return float(np.mean(np.abs(log_z[sel] - k[sel]) / env <= band))


def long_run_log_record_times(k_max, rng):
    """``ln T_k`` for k = 1..k_max along one path, propagated in log space."""
    logs = np.empty(k_max)
    logs[0] = 0.0
    for k in range(1, k_max):
        if logs[k - 1] < 52 * math.log(2.0):
            t = math.exp(logs[k - 1])
            logs[k] = math.log(math.floor(t / (1.0 - rng.random())) + 1.0)
        else:
            # floor(t/U) + 1 = t/U to within relative 2**-52
            logs[k] = logs[k - 1] - math.log(1.0 - rng.random())
    return logs


def asymptotic_tests(n_runs, k_target, rng, lil_k=20_000):
    """Monte Carlo battery for record times ``T_k`` and gaps ``Delta_k``.

    ``slln``
        mean of ``ln z_k / k`` (limit 1) for ``z`` in {T, delta}.
    ``clt_ks``
        KS distance of ``(ln z_k - k) / sqrt(k)`` to the standard normal.
    ``lil_band``
        share of one ``lil_k``-record path whose normalised ``ln z_k`` lies
        within 1.05 of the iterated-logarithm envelope; a band occupancy, not
        a limsup, since any finite path is all we can see.
    ``ratio_ks``
        KS distance of ``Delta_k / T_k`` to Uniform(0, 1).
    """
    n_runs = check_positive_int(n_runs, "n_runs")
    k_target = check_positive_int(k_target, "k_target", min_val=2)
    if k_target < 10 or n_runs < 100:
        warnings.warn("k_target >= 10 and n_runs >= 100 are needed for a meaningful battery",
                      PartialResultWarning)
    T = simulate_record_times(n_runs, k_target, rng)
    Tk, Tprev = T[:, -1], T[:, -2]
    if not np.all(np.isfinite(Tk)):
        warnings.warn("some runs overflowed before the target record", PartialResultWarning)
    gap = Tk - Tprev
    k = k_target
    slln = {"T": float(np.mean(np.log(Tk) / k)), "delta": float(np.mean(np.log(gap) / k))}
    norm_cdf = stats.norm.cdf
    clt = {"T": float(stats.kstest(_normalised_log(Tk, k), norm_cdf).statistic),
           "delta": float(stats.kstest(_normalised_log(gap, k), norm_cdf).statistic)}
    ratio = float(stats.kstest(gap / Tk, stats.uniform.cdf).statistic)
    log_T = long_run_log_record_times(lil_k, rng)
    # ln Delta_k = ln T_k + ln(1 - T_{k-1}/T_k)
    log_gap = log_T[1:] + np.log1p(-np.exp(log_T[:-1] - log_T[1:]))
    lil = {"T": lil_band_fraction(log_T),
           "delta": lil_band_fraction(np.concatenate([[0.0], log_gap]))}
    median = float(np.median(np.log(gap) / k))
    return AsymptoticReport(k, n_runs, slln, clt, lil, ratio, median)
