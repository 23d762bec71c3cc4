"""Closed-form performance metrics for coded caching with an SIC receiver.

Everything here is a pure function of its arguments. The SIR threshold
``tau`` is always linear (not dB).

Notation used in the code:

* ``Q(tau)`` is the per-layer base factor, ``q_k = Q**-k`` and
  ``C_k = Q**-(k(k+1)/2)`` is the probability that the first ``k`` layers
  all decode.
* ``L[m]`` is the fractional offloaded traffic of a file with ``m`` of its
  ``n`` coded packets in every SBS; ``R[m]`` is its ergodic rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, InfeasibleError

# Tail cutoff for the ergodic-rate integrand.
RATE_TAIL_CUTOFF = 1e-12


@dataclass(frozen=True)
class ChannelModel:
    alpha: float
    tau: float

    def __post_init__(self):
        if not self.alpha > 2:
            raise DomainError(f"pathloss exponent must exceed 2, got {self.alpha}")
        if not self.tau > 0:
            raise DomainError(f"SIR threshold must be positive, got {self.tau}")


@dataclass(frozen=True)
class PopularityProfile:
    """Request probabilities sorted from most to least popular."""

    probs: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("popularity vector must be a non-empty 1-d sequence")
        if np.any(p < 0) or np.any(p > 1):
            raise DomainError("popularities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-9:
            raise DomainError(f"popularities sum to {p.sum()!r}, not 1")
        if np.any(np.diff(p) > 0):
            raise DomainError("popularities must be non-increasing")
        object.__setattr__(self, "probs", tuple(float(v) for v in p))

    @property
    def F(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs)


@dataclass(frozen=True)
class CodingConfig:
    n: int
    m_cap: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"coding parameter n must be a positive integer, got {self.n}")
        if int(self.m_cap) != self.m_cap or self.m_cap < 1:
            raise DomainError(f"cache size M must be a positive integer, got {self.m_cap}")


@dataclass(frozen=True)
class CachingVector:
    """Packets of each file stored per SBS, each entry in ``0..n``."""

    m: tuple[int, ...]
    n: int

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        if any(v < 0 or v > self.n for v in m):
            raise DomainError(f"caching vector entries must lie in 0..{self.n}: {m}")
        object.__setattr__(self, "m", m)

    @property
    def packets(self) -> int:
        return sum(self.m)

    def is_feasible(self, m_cap: int) -> bool:
        # integer form of sum(m_j / n) <= M
        return self.packets <= m_cap * self.n

    def __iter__(self):
        return iter(self.m)

    def __len__(self):
        return len(self.m)


@dataclass(frozen=True)
class ContinuousAllocation:
    x: tuple[float, ...]

    def __post_init__(self):
        if any(v < -1e-12 or v > 1 + 1e-12 for v in self.x):
            raise DomainError("continuous allocation entries must lie in [0, 1]")


@dataclass(frozen=True)
class DifferenceTable:
    """First differences ``L[m] - L[m-1]`` for ``m = 1..n``.

    ``region_labels[m]`` is ``(t, t)`` for a within-region difference
    ``d_t`` and ``(t, t')`` for a boundary difference ``d_{t,t'}``, where
    ``t = ceil(n/m)`` and ``t' = ceil(n/(m-1))``.
    """

    n: int
    deltas: dict[int, float]
    region_labels: dict[int, tuple[int, int]]
    distinct_count: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "distinct_count", len(set(self.region_labels.values())))

    def label(self, m: int) -> str:
        t, tp = self.region_labels[m]
        return f"d_{t}" if t == tp else f"d_{{{t},{tp}}}"

    def labels(self) -> list[str]:
        return [self.label(m) for m in range(1, self.n + 1)]

    def as_array(self) -> np.ndarray:
        """Deltas as an array indexed by ``m`` (entry 0 unused, set to inf)."""
        out = np.empty(self.n + 1)
        out[0] = np.inf
        for m, d in self.deltas.items():
            out[m] = d
        return out


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _as_mvec(mvec) -> tuple[int, ...]:
    if isinstance(mvec, CachingVector):
        return mvec.m
    return tuple(int(v) for v in mvec)


# ---------------------------------------------------------------------------
# special function and layer probabilities


def beta_complement(a: float, b: float, z: float) -> float:
    """Complementary incomplete Beta integral ``int_z^1 u^(a-1) (1-u)^(b-1) du``.

    The range is split at 1/2. Below it ``s = u**a`` and above it
    ``v = (1-u)**b`` turn each endpoint singularity into a smooth integrand,
    so plain adaptive quadrature reaches ~1e-13 relative accuracy.
    """
    if not (a > 0 and b > 0):
        raise DomainError(f"beta_complement needs a, b > 0, got a={a}, b={b}")
    if not 0 < z < 1:
        raise DomainError(f"beta_complement needs 0 < z < 1, got z={z}")

    total = 0.0
    if z < 0.5:
        inv_a = 1.0 / a
        lo, hi = z**a, 0.5**a
        val, _ = integrate.quad(
            lambda s: (1.0 - s**inv_a) ** (b - 1.0), lo, hi, epsabs=0.0, epsrel=1e-13, limit=200
        )
        total += val / a
    inv_b = 1.0 / b
    top = (1.0 - max(z, 0.5)) ** b
    if top > 0.0:
        val, _ = integrate.quad(
            lambda v: (1.0 - v**inv_b) ** (a - 1.0), 0.0, top, epsabs=0.0, epsrel=1e-13, limit=200
        )
        total += val / b
    return total


@lru_cache(maxsize=4096)
def _log_q_factor(alpha: float, tau: float) -> float:
    if tau == 0.0:
        return 0.0
    delta = 2.0 / alpha
    tail = beta_complement(delta, 1.0 - delta, 1.0 / (1.0 + tau))
    return math.log1p(delta * tau**delta * tail)


def log_q_factor(ch: ChannelModel) -> float:
    """Natural log of ``Q``; strictly positive for ``tau > 0``."""
    return _log_q_factor(float(ch.alpha), float(ch.tau))


def q_factor(ch: ChannelModel) -> float:
    return math.exp(log_q_factor(ch))


def layer_success_prob(ch: ChannelModel, k: int) -> float:
    """Success probability of the ``k``-th SIC layer, ``Q**-k``."""
    if k < 1:
        raise DomainError(f"layer index must be >= 1, got {k}")
    return math.exp(-k * log_q_factor(ch))


def _chain_from_log(log_q: float, k: int) -> float:
    # exp of a large negative exponent underflows cleanly to 0.0
    return math.exp(-0.5 * k * (k + 1) * log_q)


def chain_success_prob(ch: ChannelModel, k: int) -> float:
    """Probability that layers ``1..k`` all decode, ``Q**-(k(k+1)/2)``."""
    if k < 1:
        raise DomainError(f"layer index must be >= 1, got {k}")
    return _chain_from_log(log_q_factor(ch), k)


def chain_probs(ch: ChannelModel, kmax: int) -> np.ndarray:
    """Array ``[C_1 .. C_kmax]``."""
    k = np.arange(1, kmax + 1, dtype=float)
    return np.exp(-0.5 * k * (k + 1) * log_q_factor(ch))


# ---------------------------------------------------------------------------
# fractional offloaded traffic


def _fot_from_chain(csum: np.ndarray, chain: np.ndarray, x: float, t: int) -> float:
    # csum[t-1] = C_1 + ... + C_t
    return x * csum[t - 1] + (1.0 - x * t) * chain[t - 1]


def fot(ch: ChannelModel, n: int, m_j: int) -> float:
    """Fractional offloaded traffic ``L[m_j]`` of one file."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if int(m_j) != m_j or not 0 <= m_j <= n:
        raise DomainError(f"m_j must be an integer in 0..{n}, got {m_j}")
    if m_j == 0:
        return 0.0
    t = _ceil_div(n, m_j)
    chain = chain_probs(ch, t)
    return _fot_from_chain(np.cumsum(chain), chain, m_j / n, t)


def fot_table(ch: ChannelModel, n: int) -> np.ndarray:
    """``L[0..n]`` as an array."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    chain = chain_probs(ch, n)
    csum = np.cumsum(chain)
    out = np.zeros(n + 1)
    for m in range(1, n + 1):
        out[m] = _fot_from_chain(csum, chain, m / n, _ceil_div(n, m))
    return out


def afot(ch: ChannelModel, cfg: CodingConfig, pop: PopularityProfile, mvec) -> float:
    """Popularity-weighted offloaded traffic of a caching vector."""
    m = _as_mvec(mvec)
    _check_vector(m, cfg, pop)
    table = fot_table(ch, cfg.n)
    return float(np.dot(pop.as_array(), table[list(m)]))


def _check_vector(m: tuple[int, ...], cfg: CodingConfig, pop: PopularityProfile) -> None:
    if len(m) != pop.F:
        raise DomainError(f"caching vector has {len(m)} entries for {pop.F} files")
    if any(v < 0 or v > cfg.n for v in m):
        raise DomainError(f"caching vector entries must lie in 0..{cfg.n}")
    if sum(m) > cfg.m_cap * cfg.n:
        raise InfeasibleError(
            f"caching vector stores {sum(m)} packets, capacity is {cfg.m_cap * cfg.n}"
        )


def fot_continuous(ch: ChannelModel, x_j: float) -> float:
    """Relaxed offloaded traffic ``L(x)`` for a cached fraction ``x`` in [0, 1]."""
    if not 0.0 <= x_j <= 1.0:
        raise DomainError(f"x_j must lie in [0, 1], got {x_j}")
    if x_j == 0.0:
        return 0.0
    t = math.ceil(1.0 / x_j)
    log_q = log_q_factor(ch)
    # terms past kmax are below 1e-320 and cannot change the sum
    kmax = t
    if log_q > 0:
        kmax = min(t, int(math.sqrt(2 * 745.0 / log_q)) + 2, 10**6)
    chain = chain_probs(ch, kmax)
    c_t = chain[t - 1] if t <= kmax else 0.0
    return float(x_j * chain.sum() + (1.0 - x_j * t) * c_t)


def region_slope(ch: ChannelModel, t: int) -> float:
    """Slope of ``L(x)`` on ``(1/t, 1/(t-1))``: ``sum_{i<=t} C_i - t C_t``."""
    if t < 2:
        raise DomainError(f"linear regions are indexed from t=2, got {t}")
    chain = chain_probs(ch, t)
    return float(chain.sum() - t * chain[-1])


def within_region_delta(ch: ChannelModel, n: int, t: int) -> float:
    """``d_t``: the first difference of ``L[m]`` inside region ``t``."""
    return region_slope(ch, t) / n


def difference_table(ch: ChannelModel, n: int) -> DifferenceTable:
    """Offloaded traffic difference table for coding parameter ``n``.

    A boundary difference ``d_{t,t+1}`` taken at ``m = n/t`` equals
    ``d_{t+1}`` exactly, because ``L(x)`` is continuous at the breakpoint
    ``x = 1/t``. Such an entry takes the label ``d_{t+1}`` whenever that
    within-region difference occurs elsewhere in the table (e.g. ``d_{1,2}``
    becomes ``d_2`` for ``n >= 4``).
    """
    table = fot_table(ch, n)
    deltas = {m: float(table[m] - table[m - 1]) for m in range(1, n + 1)}

    raw: dict[int, tuple[int, int]] = {1: (n, n)}
    for m in range(2, n + 1):
        raw[m] = (_ceil_div(n, m), _ceil_div(n, m - 1))
    within = {t for m, (t, tp) in raw.items() if m >= 2 and t == tp}

    labels = {}
    for m, (t, tp) in raw.items():
        if m >= 2 and tp == t + 1 and m * t == n and tp in within:
            labels[m] = (tp, tp)
        else:
            labels[m] = (t, tp)
    return DifferenceTable(n=n, deltas=deltas, region_labels=labels)


# ---------------------------------------------------------------------------
# ergodic rate


def _rate_integrand(alpha: float, t: int, r: float) -> float:
    tau = math.expm1(r * math.log(2.0))
    return math.exp(-0.5 * t * (t + 1) * _log_q_factor(alpha, tau))


@lru_cache(maxsize=1024)
def rate_truncation_point(alpha: float, t: int) -> float:
    """Smallest ``r`` (to ~1e-9) where ``C_t(2**r - 1)`` drops below the cutoff."""
    hi = 1.0
    while _rate_integrand(alpha, t, hi) >= RATE_TAIL_CUTOFF:
        hi *= 2.0
        if hi > 4096:
            raise RuntimeError("ergodic-rate integrand failed to decay")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > 1e-9 * hi:
        mid = 0.5 * (lo + hi)
        if _rate_integrand(alpha, t, mid) >= RATE_TAIL_CUTOFF:
            lo = mid
        else:
            hi = mid
    return hi


@lru_cache(maxsize=1024)
def rate_integral(alpha: float, t: int) -> float:
    """``int_0^inf C_t(2**r - 1) dr`` with the tail past the cutoff dropped."""
    if not alpha > 2:
        raise DomainError(f"pathloss exponent must exceed 2, got {alpha}")
    if t < 1:
        raise DomainError(f"layer count must be >= 1, got {t}")
    r_max = rate_truncation_point(float(alpha), int(t))
    # the integrand varies on an O(1) scale near r = 0 and decays slowly after
    edges = [0.0] + [e for e in (1.0, 4.0, 16.0) if e < r_max] + [r_max]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(
            lambda r: _rate_integrand(float(alpha), int(t), r),
            lo, hi, epsabs=1e-11, epsrel=1e-11, limit=200,
        )
        total += val
    return total


def ergodic_rate(ch_alpha: float, n: int, m_j: int) -> float:
    """Ergodic rate ``R[m_j]`` in bits/s/Hz; no threshold enters."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if int(m_j) != m_j or not 0 <= m_j <= n:
        raise DomainError(f"m_j must be an integer in 0..{n}, got {m_j}")
    if m_j == 0:
        return 0.0
    t = _ceil_div(n, m_j)
    return t * rate_integral(float(ch_alpha), t)


def rate_table(ch_alpha: float, n: int) -> np.ndarray:
    """``R[0..n]`` as an array."""
    return np.array([ergodic_rate(ch_alpha, n, m) for m in range(n + 1)])


def aer(ch_alpha: float, cfg: CodingConfig, pop: PopularityProfile, mvec) -> float:
    m = _as_mvec(mvec)
    _check_vector(m, cfg, pop)
    table = rate_table(ch_alpha, cfg.n)
    return float(np.dot(pop.as_array(), table[list(m)]))


# ---------------------------------------------------------------------------
# popularity and the most-popular-caching baseline


def zipf_popularity(F: int, gamma: float) -> PopularityProfile:
    if int(F) != F or F < 1:
        raise DomainError(f"file count must be a positive integer, got {F}")
    if gamma < 0:
        raise DomainError(f"Zipf exponent must be >= 0, got {gamma}")
    w = np.arange(1, F + 1, dtype=float) ** -float(gamma)
    p = w / w.sum()
    # renormalising can leave 1-ulp upticks on long flat tails
    p = np.minimum.accumulate(p)
    return PopularityProfile(tuple(p))


def mpc_vector(F: int, n: int, M: int) -> tuple[int, ...]:
    """All packets of the ``M`` most popular files, nothing else."""
    k = min(M, F)
    return (n,) * k + (0,) * (F - k)


def mpc_afot(ch: ChannelModel, pop: PopularityProfile, M: int) -> float:
    if M >= pop.F:
        raise DomainError(f"most-popular caching needs M < F, got M={M}, F={pop.F}")
    return layer_success_prob(ch, 1) * float(sum(pop.probs[:M]))


def degeneracy_threshold(ch: ChannelModel, n: int) -> float:
    """Right-hand side ``sum_{k<=n} C_k / (C_1 - C_2)`` of the MPC condition."""
    chain = chain_probs(ch, max(n, 2))
    gap = chain[0] - chain[1]
    assert gap > 0, "C_1 - C_2 must be positive for tau > 0"
    return float(chain[:n].sum() / gap)


def mpc_degeneracy_holds(ch: ChannelModel, n: int, pop: PopularityProfile, M: int) -> bool:
    """True when the optimal AFOT placement is plain most-popular caching."""
    if n < 2:
        raise DomainError(f"the degeneracy condition needs n >= 2, got {n}")
    if not 1 <= M < pop.F:
        raise DomainError(f"need 1 <= M < F, got M={M}, F={pop.F}")
    p_m, p_next = pop.probs[M - 1], pop.probs[M]
    rhs = degeneracy_threshold(ch, n)
    if p_next == 0.0:
        return True
    return p_m / p_next >= rhs


def mvec_from(seq: Sequence[int], n: int) -> CachingVector:
    return CachingVector(tuple(seq), n)
