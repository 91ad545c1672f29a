"""Discrete-time Monte Carlo of the priority list.

Each step one task arrives and joins the ``L - 1`` resident tasks, then one of
the ``L`` tasks is executed and leaves.  A task's waiting time counts the steps
it spent on the list inclusively, so a task executed in its arrival step has
``tau = 1``.  The ``L - 1`` tasks present before step 1 are booked as arriving
in step 1, which makes the buffer-time identity

    sum(executed waiting times) + sum(residual resident times) == L * steps

exact for every run.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_probability
from .exceptions import DegenerateRegimeError, UnsupportedConfigurationError
from .model import PriorityDistribution, SelectionProtocol

R_NEW, R_OLD, R_COMP = 0, 1, 2
NO_EVENT = -1
EVENT_NAMES = {R_NEW: "R_new", R_OLD: "R_old", R_COMP: "R_comp"}
_EVENT_BY_NAME = {v: k for k, v in EVENT_NAMES.items()}

DEFAULT_BURNIN = 10_000
# draws are generated in fixed-size blocks; changing this changes every stream
_CHUNK = 1 << 16


@dataclass(frozen=True)
class QueueState:
    """Tasks resident between steps, oldest first.

    Between steps the list holds ``L - 1`` tasks; during a step the arrival
    brings it to exactly ``L``.
    """

    priorities: tuple
    arrival_steps: tuple
    step_index: int = 0

    @property
    def L(self):
        return len(self.priorities) + 1

    @classmethod
    def initial(cls, L, dist, rng):
        L = check_positive_int(L, "L", min_val=2)
        pri = np.atleast_1d(dist.sample(rng, L - 1))
        return cls(tuple(float(x) for x in pri), (1,) * (L - 1), 0)


@dataclass(frozen=True)
class ExecutedTask:
    priority: float
    waiting_time: int
    event: int = NO_EVENT


@dataclass(frozen=True, eq=False)
class WaitingTimeHistogram:
    """Counts of executed waiting times plus the resident times left at the end.

    ``counts[k]`` is the number of executions with waiting time ``k``;
    ``counts[0]`` is always zero.
    """

    counts: np.ndarray = field(repr=False)
    residuals: tuple = ()

    @property
    def total_executed(self):
        return int(self.counts.sum())

    @property
    def kmax(self):
        return self.counts.size - 1

    def as_dict(self):
        return {int(k): int(c) for k, c in enumerate(self.counts) if c}

    def pmf(self, k=None):
        """Empirical P(tau = k); the whole table when ``k`` is None."""
        freq = self.counts / max(self.total_executed, 1)
        if k is None:
            return freq
        k = np.asarray(k)
        out = np.where(k < freq.size, freq[np.minimum(k, freq.size - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    def mean(self):
        ks = np.arange(self.counts.size)
        return float(ks @ self.counts) / self.total_executed


@dataclass(frozen=True)
class SimulationConfig:
    protocol: SelectionProtocol
    dist: PriorityDistribution
    L: int = 2
    steps: int = 1_000_000
    burnin: int = DEFAULT_BURNIN
    seed: int = 0


@dataclass(frozen=True, eq=False)
class SimulationResult:
    config: SimulationConfig
    histogram: WaitingTimeHistogram
    old_priority_samples: np.ndarray = field(repr=False)
    event_codes: np.ndarray = field(repr=False)
    total_waiting_time: int
    final_state: QueueState
    arrivals: np.ndarray = field(default=None, repr=False)

    @property
    def steps(self):
        return self.config.steps

    @property
    def mean_tau(self):
        return self.histogram.mean()

    def event_frequencies(self):
        codes = self.event_codes
        if codes is None or codes.size == 0 or codes[0] == NO_EVENT:
            return {}
        return {name: float(np.mean(codes == c)) for c, name in EVENT_NAMES.items()}

    def summary(self):
        out = {
            "steps": self.steps,
            "burnin": self.config.burnin,
            "L": self.config.L,
            "executed": self.histogram.total_executed,
            "mean_tau": self.mean_tau,
            "residual_fraction": residual_fraction(self),
            "total_waiting_time": self.total_waiting_time,
            "residual_times": list(self.histogram.residuals),
        }
        if self.event_frequencies():
            out["renewal_count"] = renewal_count(self.event_codes, self.config.L)
            out["event_frequencies"] = self.event_frequencies()
        return out


def _check_protocol_for_L(protocol, L):
    if L > 2 and protocol.name != "barabasi":
        raise UnsupportedConfigurationError(
            f"L = {L} > 2 is only defined for the barabasi protocol, got {protocol.name!r}")


def _selector(protocol, L):
    """Return ``select(priorities, u1, u2) -> (index, event)``.

    ``priorities`` lists all ``L`` tasks oldest first, the new arrival last.
    """
    if protocol.name == "barabasi":
        p = protocol.p
        if L == 2:
            def select(pri, u1, u2):
                if u1 < p:
                    return (1 if pri[1] > pri[0] else 0), R_COMP
                if u2 < 0.5:
                    return 1, R_NEW
                return 0, R_OLD
        else:
            def select(pri, u1, u2):
                if u1 < p:
                    return max(range(L), key=pri.__getitem__), R_COMP
                idx = int(u2 * L)
                return idx, (R_OLD if idx == 0 else R_NEW)
        return select

    v = protocol.v

    def select(pri, u1, u2):
        return (1 if u1 < v(pri[1], pri[0]) else 0), NO_EVENT
    return select


def step(state, protocol, dist, rng):
    """Advance the list by one step.

    Draws the arrival, then two uniforms (protocol coin, choice), and returns the
    new state with the executed task.
    """
    L = state.L
    _check_protocol_for_L(protocol, L)
    t = state.step_index + 1
    pri = list(state.priorities) + [float(dist.sample(rng))]
    arr = list(state.arrival_steps) + [t]
    idx, event = _selector(protocol, L)(pri, rng.random(), rng.random())
    done = ExecutedTask(pri[idx], t - arr[idx] + 1, event)
    del pri[idx], arr[idx]
    return QueueState(tuple(pri), tuple(arr), t), done


def replica_seed_sequence(seed, replica=None):
    """Seed sequence of a run: ``SeedSequence(seed)`` or its child ``spawn_key=(replica,)``.

    Child keys depend only on ``(seed, replica)``, so replica streams do not
    depend on how replicas are scheduled.
    """
    if replica is None:
        return np.random.SeedSequence(seed)
    return np.random.SeedSequence(seed, spawn_key=(int(replica),))


def run(config, *, replica=None, keep_arrivals=False):
    """Simulate ``config.steps`` steps; statistics are collected after ``config.burnin``.

    ``old_priority_samples`` holds, for every post-burn-in step, the priorities
    of the ``L - 1`` tasks left on the list after the execution.
    """
    L = check_positive_int(config.L, "L", min_val=2)
    steps = check_positive_int(config.steps, "steps")
    burnin = check_positive_int(config.burnin, "burnin", min_val=0)
    if steps <= burnin:
        raise ValueError("steps must exceed burnin")
    protocol, dist = config.protocol, config.dist
    _check_protocol_for_L(protocol, L)
    rng = np.random.Generator(np.random.PCG64(replica_seed_sequence(config.seed, replica)))

    state = QueueState.initial(L, dist, rng)
    pri, arr = list(state.priorities), list(state.arrival_steps)
    initial = list(pri)
    select = _selector(protocol, L)
    taus, events, olds = [], [], []
    arrivals = [] if keep_arrivals else None
    t = 0
    for start in range(0, steps, _CHUNK):
        n = min(_CHUNK, steps - start)
        new = np.asarray(dist.sample(rng, n), dtype=float).tolist()
        u1 = rng.random(n).tolist()
        u2 = rng.random(n).tolist()
        if keep_arrivals:
            arrivals.extend(new)
        for j in range(n):
            t += 1
            pri.append(new[j])
            arr.append(t)
            idx, ev = select(pri, u1[j], u2[j])
            taus.append(t - arr[idx] + 1)
            events.append(ev)
            del pri[idx], arr[idx]
            if t > burnin:
                olds.extend(pri)

    taus = np.asarray(taus, dtype=np.int64)
    kept = taus[burnin:]
    counts = np.bincount(kept, minlength=2)
    residuals = tuple(t - a + 1 for a in arr)
    hist = WaitingTimeHistogram(counts, residuals)
    codes = np.asarray(events, dtype=np.int8)
    if keep_arrivals:
        arrivals = np.asarray(initial + arrivals)
    return SimulationResult(config, hist, np.asarray(olds), codes, int(taus.sum()),
                            QueueState(tuple(pri), tuple(arr), t), arrivals)


def _run_replica(args):
    config, replica = args
    return run(config, replica=replica)


def run_replicas(config, n_replicas, n_jobs=1):
    """Independent replicas with streams derived from ``(config.seed, index)``.

    Results come back in replica order whatever ``n_jobs`` is.
    """
    n_replicas = check_positive_int(n_replicas, "n_replicas")
    jobs = [(config, i) for i in range(n_replicas)]
    if n_jobs == 1 or n_replicas == 1:
        return [_run_replica(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_run_replica, jobs))


def merge_histograms(histograms):
    """Sum counts in the given order; residual tuples are concatenated."""
    size = max(h.counts.size for h in histograms)
    counts = np.zeros(size, dtype=np.int64)
    residuals = ()
    for h in histograms:
        counts[:h.counts.size] += h.counts
        residuals += h.residuals
    return WaitingTimeHistogram(counts, residuals)


def residual_fraction(result):
    """Total resident time of the tasks still listed at the end, divided by the step count."""
    return sum(result.histogram.residuals) / result.steps


def renewal_count(codes, L):
    """Number of positions where a run of ``L - 1`` consecutive R_old events starts.

    Runs may overlap.  ``codes`` holds event integers or their names.
    """
    codes = list(codes) if not isinstance(codes, np.ndarray) else codes
    if len(codes) and isinstance(codes[0], str):
        codes = [_EVENT_BY_NAME[c] for c in codes]
    is_old = (np.asarray(codes) == R_OLD).astype(np.int64)
    width = L - 1
    if is_old.size < width:
        return 0
    window = np.convolve(is_old, np.ones(width, dtype=np.int64), mode="valid")
    return int(np.count_nonzero(window == width))


def min_of_geometric_sampler(p, dist, rng, size=None):
    """Minimum of ``X`` arrival draws, ``X ~ Geometric((1 - p) / (1 + p))`` on {1, 2, ...}.

    For the two-task Barabasi list this is the stationary law of the old task's
    priority: the old task must have beaten every comparison since the last
    uniform step that executed the previous old task.
    """
    p = check_probability(p, "p")
    if p == 1.0:
        raise DegenerateRegimeError("p = 1: the geometric count diverges, no stationary law")
    n = 1 if size is None else int(np.prod(size))
    counts = rng.geometric((1.0 - p) / (1.0 + p), n)
    draws = np.asarray(dist.sample(rng, int(counts.sum())), dtype=float)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    mins = np.minimum.reduceat(draws, starts)
    if size is None:
        return float(mins[0])
    return mins.reshape(size)
