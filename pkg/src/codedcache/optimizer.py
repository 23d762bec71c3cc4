"""Cache placement solvers for offloaded traffic (AFOT) and ergodic rate (AER).

All solvers work on integer packet counts; the capacity ``M`` files per SBS
is ``M * n`` packets. Weighted differences that agree to within
``TIE_RTOL`` are treated as equal so that round-off never triggers a move
with no real gain; among tied candidates the least popular file (largest
index) gives up a packet.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytics as an
from .analytics import (
    CachingVector,
    ChannelModel,
    CodingConfig,
    ContinuousAllocation,
    PopularityProfile,
)
from .errors import DomainError, InstanceTooLargeError

TIE_RTOL = 1e-12
EXHAUSTIVE_LIMIT = 10**7
CONTINUOUS_TMAX = 10**4


class Objective(str, enum.Enum):
    AFOT = "AFOT"
    AER = "AER"


class Method(str, enum.Enum):
    GREEDY = "Greedy1"
    CONTINUOUS = "Continuous"
    ROUNDING = "Rounding2"
    HEURISTIC_AER = "HeuristicAER"
    EXHAUSTIVE = "Exhaustive"
    MPC = "MPC"


@dataclass(frozen=True)
class PlacementProblem:
    cfg: CodingConfig
    pop: PopularityProfile
    objective: Objective = Objective.AFOT
    ch: ChannelModel | None = None
    alpha: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        if self.objective is Objective.AFOT and self.ch is None:
            raise DomainError("an AFOT problem needs a ChannelModel")
        if self.alpha is None:
            if self.ch is None:
                raise DomainError("an AER problem needs alpha or a ChannelModel")
            object.__setattr__(self, "alpha", self.ch.alpha)
        elif not self.alpha > 2:
            raise DomainError(f"alpha must exceed 2, got {self.alpha}")

    @property
    def n(self) -> int:
        return self.cfg.n

    @property
    def M(self) -> int:
        return self.cfg.m_cap

    @property
    def F(self) -> int:
        return self.pop.F

    @property
    def capacity(self) -> int:
        """Cache size in packets."""
        return self.cfg.m_cap * self.cfg.n

    def per_file_table(self) -> np.ndarray:
        """``L[0..n]`` or ``R[0..n]`` depending on the objective."""
        if self.objective is Objective.AFOT:
            return an.fot_table(self.ch, self.n)
        return an.rate_table(self.alpha, self.n)

    def value(self, m) -> float:
        if self.objective is Objective.AFOT:
            return an.afot(self.ch, self.cfg, self.pop, m)
        return an.aer(self.alpha, self.cfg, self.pop, m)


@dataclass(frozen=True)
class PlacementSolution:
    mvec: CachingVector
    objective_value: float
    updates: int
    method: Method
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def m(self) -> tuple[int, ...]:
        return self.mvec.m


@dataclass(frozen=True)
class McKpInstance:
    """Multiple-choice knapsack: class ``j`` picks one item ``k`` in ``0..n``."""

    profits: np.ndarray
    weights: np.ndarray
    capacity: float

    @classmethod
    def for_aer(cls, prob: PlacementProblem) -> "McKpInstance":
        rates = an.rate_table(prob.alpha, prob.n)
        profits = np.outer(prob.pop.as_array(), rates)
        weights = np.tile(np.arange(prob.n + 1) / prob.n, (prob.F, 1))
        return cls(profits, weights, float(prob.M))


def _is_tied(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_RTOL * max(abs(a), abs(b))


def _clearly_greater(a: float, b: float) -> bool:
    return a > b and not _is_tied(a, b)


def _argmin_last(values: dict[int, float]) -> int:
    """Index of the smallest value; ties go to the largest index."""
    best = min(values.values())
    return max(j for j, v in values.items() if v <= best or _is_tied(v, best))


def _argmax_first(values: dict[int, float]) -> int:
    best = max(values.values())
    return min(j for j, v in values.items() if v >= best or _is_tied(v, best))


def _require_afot(prob: PlacementProblem):
    if prob.objective is not Objective.AFOT:
        raise DomainError("this solver maximises AFOT")


def _solution(prob, m, updates, method, history=()):
    mvec = CachingVector(tuple(m), prob.n)
    return PlacementSolution(mvec, prob.value(mvec), updates, Method(method), tuple(history))


def mpc_solution(prob: PlacementProblem) -> PlacementSolution:
    return _solution(prob, an.mpc_vector(prob.F, prob.n, prob.M), 0, Method.MPC)


# ---------------------------------------------------------------------------
# greedy packet exchange (optimal for AFOT)


def solve_afot_greedy(prob: PlacementProblem) -> PlacementSolution:
    """Start from most-popular caching and trade packets toward less popular files.

    Candidate file ``i`` takes one packet at a time from the stored file
    whose last packet carries the smallest weighted offloaded traffic, as
    long as that strictly raises AFOT. A candidate that cannot take even its
    first packet ends the search, since every later file is less popular.
    """
    _require_afot(prob)
    n, M, F = prob.n, prob.M, prob.F
    if M >= F:
        raise DomainError(f"need M < F for a non-trivial placement, got M={M}, F={F}")
    p = prob.pop.as_array()
    delta = an.difference_table(prob.ch, n).as_array()
    value_of = an.fot_table(prob.ch, n)

    m = [n] * M + [0] * (F - M)
    value = float(np.dot(p, value_of[m]))
    history = [value]
    updates = 0
    i = M
    while i < F:
        if m[i] < n:
            gain = p[i] * delta[m[i] + 1]
            losses = {j: p[j] * delta[m[j]] for j in range(i) if m[j] > 0}
            if losses:
                jp = _argmin_last(losses)
                if _clearly_greater(gain, losses[jp]):
                    m[i] += 1
                    m[jp] -= 1
                    updates += 1
                    value += gain - losses[jp]
                    history.append(value)
                    continue
            if m[i] == 0:
                break
        i += 1
    return _solution(prob, m, updates, Method.GREEDY, history)


def greedy_update_bound(n: int, F: int, M: int) -> float:
    """Worst-case number of greedy exchanges, ``min{(n-1)(F-M), sum nM/(i+1)}``."""
    return min((n - 1) * (F - M), sum(n * M / (i + 1) for i in range(1, n)))


# ---------------------------------------------------------------------------
# continuous relaxation


def _continuous_pieces(ch: ChannelModel):
    """Linear pieces of ``L(x)`` ordered from x = 0 upward: (lengths, slopes, t)."""
    log_q = an.log_q_factor(ch)
    chain = [an._chain_from_log(log_q, 1)]
    while len(chain) < CONTINUOUS_TMAX:
        c = an._chain_from_log(log_q, len(chain) + 1)
        if c <= 1e-18 * chain[0]:
            break
        chain.append(c)
    chain = np.array(chain)
    t_max = chain.size
    csum = np.cumsum(chain)
    t = np.arange(t_max, 1, -1)
    slopes = csum[t - 1] - t * chain[t - 1]
    lengths = 1.0 / (t * (t - 1.0))
    # leading piece [0, 1/t_max] is the chord through L(1/t_max) = csum/t_max
    lengths = np.concatenate([[1.0 / t_max], lengths])
    slopes = np.concatenate([[csum[-1]], slopes])
    t = np.concatenate([[t_max + 1], t])
    return lengths, slopes, t


def solve_afot_continuous(prob: PlacementProblem) -> tuple[ContinuousAllocation, float]:
    """Exact optimum of the relaxed problem and its AFOT (an upper bound for any n).

    ``L(x)`` is concave and piecewise linear, so filling capacity with the
    steepest weighted pieces first is optimal.
    """
    _require_afot(prob)
    F, M = prob.F, prob.M
    p = prob.pop.as_array()
    if M >= F:
        x = np.ones(F)
    else:
        lengths, slopes, t = _continuous_pieces(prob.ch)
        P = lengths.size
        files = np.repeat(np.arange(F), P)
        w = np.outer(p, slopes).ravel()
        seg_len = np.tile(lengths, F)
        seg_t = np.tile(t, F)
        order = np.lexsort((files, -seg_t, -w))
        taken = np.cumsum(seg_len[order])
        cut = int(np.searchsorted(taken, M, side="left"))
        x = np.zeros(F)
        np.add.at(x, files[order[:cut]], seg_len[order[:cut]])
        if cut < order.size:
            used = taken[cut - 1] if cut > 0 else 0.0
            x[files[order[cut]]] += M - used
        x = np.clip(x, 0.0, 1.0)
    value = float(sum(pj * an.fot_continuous(prob.ch, float(xj)) for pj, xj in zip(p, x)))
    return ContinuousAllocation(tuple(float(v) for v in x)), value


# ---------------------------------------------------------------------------
# round up the relaxed optimum, then discard


def _discard(m: list[int], excess: int, weights: np.ndarray, deltas: np.ndarray) -> int:
    """Drop ``excess`` packets, each time the one with the least weighted loss."""
    for _ in range(excess):
        losses = {j: weights[j] * deltas[mj] for j, mj in enumerate(m) if mj > 0}
        m[_argmin_last(losses)] -= 1
    return excess


def solve_afot_rounding(prob: PlacementProblem) -> PlacementSolution:
    _require_afot(prob)
    n = prob.n
    alloc, _ = solve_afot_continuous(prob)
    # x_j * n can land a hair above an integer
    m = [min(n, max(0, math.ceil(n * xj - 1e-9))) for xj in alloc.x]
    excess = sum(m) - prob.capacity
    delta = an.difference_table(prob.ch, n).as_array()
    updates = _discard(m, max(excess, 0), prob.pop.as_array(), delta)
    return _solution(prob, m, updates, Method.ROUNDING)


# ---------------------------------------------------------------------------
# LP-relaxed MCKP plus repair (AER)


def _upper_hull(weights: np.ndarray, profits: np.ndarray) -> list[int]:
    """Items on the upper-left convex hull starting from item 0 (LP-undominated)."""
    hull = [0]
    for k in range(1, weights.size):
        if profits[k] <= profits[hull[-1]]:
            continue
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it lies on or below the segment a -> k
            cross = (weights[b] - weights[a]) * (profits[k] - profits[a]) - (
                profits[b] - profits[a]
            ) * (weights[k] - weights[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(k)
    return hull


def solve_mckp_lp(inst: McKpInstance) -> np.ndarray:
    """Optimal solution ``x[j, k]`` of the linear MCKP relaxation.

    Dominated and LP-dominated items are dropped per class, the remaining
    hull increments are taken in order of decreasing efficiency, and the
    first increment that does not fit is taken fractionally.
    """
    F, K = inst.profits.shape
    increments = []
    for j in range(F):
        hull = _upper_hull(inst.weights[j], inst.profits[j])
        for a, b in zip(hull[:-1], hull[1:]):
            dw = inst.weights[j, b] - inst.weights[j, a]
            dp = inst.profits[j, b] - inst.profits[j, a]
            increments.append((-dp / dw, j, a, b, dw))
    increments.sort(key=lambda r: (r[0], r[1], r[2]))

    x = np.zeros((F, K))
    x[:, 0] = 1.0
    level = [0] * F
    room = inst.capacity
    for neg_eff, j, a, b, dw in increments:
        if neg_eff >= 0 or room <= 0:
            break
        if level[j] != a:
            # a class's increments arrive in hull order because efficiencies decrease
            continue
        if dw <= room + 1e-12:
            x[j, a] = 0.0
            x[j, b] = 1.0
            level[j] = b
            room -= dw
        else:
            frac = room / dw
            x[j, a] = 1.0 - frac
            x[j, b] = frac
            room = 0.0
            break
    return x


def solve_aer_heuristic(prob: PlacementProblem) -> PlacementSolution:
    if prob.objective is not Objective.AER:
        raise DomainError("this solver maximises AER")
    n = prob.n
    p = prob.pop.as_array()
    rates = an.rate_table(prob.alpha, n)
    x = solve_mckp_lp(McKpInstance.for_aer(prob))
    # a fractional class split exactly in half rounds up, as in the rounding heuristic
    m = [int(np.flatnonzero(row >= row.max() - 1e-12)[-1]) for row in x]

    cap = prob.capacity
    used = sum(m)
    updates = 0
    if used > cap:
        rate_deltas = np.concatenate([[np.inf], np.diff(rates)])
        updates = _discard(m, used - cap, p, rate_deltas)
    else:
        while used < cap:
            gains = {j: p[j] * (rates[mj + 1] - rates[mj]) for j, mj in enumerate(m) if mj < n}
            if not gains:
                break
            jp = _argmax_first(gains)
            if rates[m[jp] + 1] - rates[m[jp]] < 0:
                break
            m[jp] += 1
            used += 1
            updates += 1
    return _solution(prob, m, updates, Method.HEURISTIC_AER)


# ---------------------------------------------------------------------------
# exhaustive oracle


def _nonincreasing_vectors(F: int, n: int, budget: int, cap: int | None = None):
    cap = n if cap is None else cap
    if F == 0:
        yield ()
        return
    for v in range(min(cap, budget), -1, -1):
        for rest in _nonincreasing_vectors(F - 1, n, budget - v, v):
            yield (v,) + rest


def _best_of(vectors: np.ndarray, p: np.ndarray, table: np.ndarray):
    if vectors.size == 0:
        return None
    values = table[vectors] @ p
    best = values.max()
    tied = np.flatnonzero((values >= best) | np.isclose(values, best, rtol=TIE_RTOL, atol=0.0))
    # lexicographically largest among ties
    cand = vectors[tied]
    order = np.lexsort(cand.T[::-1])
    pick = cand[order[-1]]
    return float(values[tied[order[-1]]]), tuple(int(v) for v in pick)


def _reduce(results):
    best = None
    for r in results:
        if r is None:
            continue
        if best is None or _clearly_greater(r[0], best[0]):
            best = r
        elif _is_tied(r[0], best[0]) and r[1] > best[1]:
            best = r
    return best


def _aer_block(first: int, F: int, n: int, cap: int, p: np.ndarray, table: np.ndarray):
    """Best vector with ``m_1 = first`` over the full (unordered) grid."""
    if F == 1:
        grid = np.array([[first]]) if first <= cap else np.empty((0, 1), dtype=int)
        return _best_of(grid, p, table)
    rest = np.indices((n + 1,) * (F - 1), dtype=np.int8).reshape(F - 1, -1).T
    rest = rest[rest.sum(axis=1, dtype=np.int64) <= cap - first]
    vectors = np.column_stack([np.full(len(rest), first, dtype=np.int8), rest])
    return _best_of(vectors, p, table)


def solve_exhaustive(prob: PlacementProblem, workers: int = 1) -> PlacementSolution:
    """Brute-force optimum; ties go to the lexicographically largest vector.

    AFOT searches only non-increasing vectors (the optimum is always one);
    AER searches every vector.
    """
    n, F, cap = prob.n, prob.F, prob.capacity
    if (n + 1) ** F > EXHAUSTIVE_LIMIT:
        raise InstanceTooLargeError(
            f"(n+1)^F = {(n + 1) ** F} exceeds the exhaustive limit {EXHAUSTIVE_LIMIT}"
        )
    p = prob.pop.as_array()
    table = prob.per_file_table()
    if prob.objective is Objective.AFOT:
        vectors = np.array(list(_nonincreasing_vectors(F, n, cap)), dtype=np.int64)
        best = _best_of(vectors, p, table)
    else:
        firsts = range(min(n, cap) + 1)
        args = [(f, F, n, cap, p, table) for f in firsts]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_aer_block, *zip(*args)))
        else:
            results = [_aer_block(*a) for a in args]
        best = _reduce(results)
    return _solution(prob, best[1], 0, Method.EXHAUSTIVE)
