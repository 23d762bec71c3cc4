"""Monte Carlo validation of the layer, offloaded-traffic and rate formulas.

SBSs form a homogeneous PPP on a square centred on the typical user, every
SBS transmits all the time with Rayleigh fading, and the user runs SIC in
order of increasing distance. Each trial owns a Philox stream keyed on
``(master_seed, trial_index)``, so results do not depend on how trials are
split across workers.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import DomainError

log = logging.getLogger(__name__)

MIN_SBS_PER_LAYER = 50
RATE_SIR_CAP = 1e12
_MAX_REDRAWS = 64
_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class SimConfig:
    lambda_b: float = 100.0
    region_side: float = 4.0
    trials: int = 100_000
    master_seed: int = 0
    alpha: float = 4.0
    max_layers: int = 16

    def __post_init__(self):
        if not self.lambda_b > 0:
            raise DomainError(f"lambda_b must be positive, got {self.lambda_b}")
        if not self.region_side > 0:
            raise DomainError(f"region_side must be positive, got {self.region_side}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise DomainError(f"trials must be a positive integer, got {self.trials}")
        if not self.alpha > 2:
            raise DomainError(f"alpha must exceed 2, got {self.alpha}")
        if int(self.max_layers) != self.max_layers or self.max_layers < 1:
            raise DomainError(f"max_layers must be a positive integer, got {self.max_layers}")
        if self.mean_count < MIN_SBS_PER_LAYER * self.max_layers:
            raise DomainError(
                f"expected SBS count {self.mean_count:.1f} is below "
                f"{MIN_SBS_PER_LAYER} x max_layers; enlarge region_side or lambda_b"
            )
        object.__setattr__(self, "master_seed", int(self.master_seed) & _SEED_MASK)
        edge = 40.0 / math.sqrt(self.lambda_b * math.pi)
        if self.region_side < edge:
            log.warning(
                "region_side %.3g km is below the edge-effect guard %.3g km", self.region_side, edge
            )

    @property
    def area(self) -> float:
        return self.region_side**2

    @property
    def mean_count(self) -> float:
        return self.lambda_b * self.area


@dataclass(frozen=True)
class NetworkRealization:
    """One SBS snapshot seen from the typical user.

    ``distances`` are sorted ascending; ``fading_powers[i]`` belongs to the
    SBS at ``distances[i]``.
    """

    distances: np.ndarray
    fading_powers: np.ndarray
    redraws: int = 0

    @property
    def count(self) -> int:
        return int(self.distances.size)


@dataclass(frozen=True)
class SicTrialOutcome:
    layers_decoded: int
    min_sir: float


@dataclass(frozen=True)
class LayerEstimate:
    k: int
    q_hat: float
    stderr: float
    successes: int
    conditioned: int

    @property
    def defined(self) -> bool:
        return self.conditioned > 0


def _trial_generator(seed: int, trial_index: int, attempt: int) -> np.random.Generator:
    # 128-bit key = (trial, seed); a redraw starts its own counter block
    key = (trial_index << 64) | seed
    return np.random.Generator(np.random.Philox(key=key, counter=attempt << 192))


def _draw_raw(cfg: SimConfig, trial_index: int):
    """Squared distances and fading powers (unsorted), plus the redraw count."""
    half = 0.5 * cfg.region_side
    for attempt in range(_MAX_REDRAWS):
        gen = _trial_generator(cfg.master_seed, trial_index, attempt)
        count = int(gen.poisson(cfg.mean_count))
        if count < cfg.max_layers + 1:
            continue
        xy = gen.uniform(-half, half, size=(count, 2))
        d2 = np.einsum("ij,ij->i", xy, xy)
        fading = gen.standard_exponential(count)
        if np.any(d2 == 0.0) or np.any(fading == 0.0):
            continue
        return d2, fading, attempt
    raise RuntimeError(f"trial {trial_index}: no usable realization after {_MAX_REDRAWS} draws")


def sample_realization(cfg: SimConfig, trial_index: int) -> NetworkRealization:
    if not 0 <= trial_index < cfg.trials:
        raise DomainError(f"trial_index must lie in 0..{cfg.trials - 1}, got {trial_index}")
    d2, fading, redraws = _draw_raw(cfg, trial_index)
    order = np.argsort(d2, kind="stable")
    return NetworkRealization(np.sqrt(d2[order]), fading[order], redraws)


def sir_profile(real: NetworkRealization, alpha: float, K: int) -> np.ndarray:
    """SIR of layers ``1..K`` for one realization (``inf`` when nothing interferes)."""
    d2 = np.ascontiguousarray(real.distances**2, dtype=np.float64)
    fading = np.ascontiguousarray(real.fading_powers, dtype=np.float64)
    offsets = np.array([0, d2.size], dtype=np.int64)
    return kernels.sir_layers_batch(d2, fading, offsets, float(alpha), int(K))[0]


def decoded_layers(sir: np.ndarray, tau: float) -> np.ndarray:
    """Consecutive successful layers from layer 1, row-wise."""
    ok = np.atleast_2d(sir) >= tau
    return np.cumprod(ok, axis=1).sum(axis=1)


def sic_trial(real: NetworkRealization, tau: float, K: int, alpha: float = 4.0) -> SicTrialOutcome:
    sir = sir_profile(real, alpha, K)
    return SicTrialOutcome(int(decoded_layers(sir, tau)[0]), float(sir.min()))


# ---------------------------------------------------------------------------
# batched trials


def _run_chunk(cfg: SimConfig, start: int, stop: int):
    d2_parts, fade_parts = [], []
    offsets = np.zeros(stop - start + 1, dtype=np.int64)
    redraws = 0
    for row, idx in enumerate(range(start, stop)):
        d2, fading, extra = _draw_raw(cfg, idx)
        d2_parts.append(d2)
        fade_parts.append(fading)
        offsets[row + 1] = offsets[row] + d2.size
        redraws += extra
    sir = kernels.sir_layers_batch(
        np.concatenate(d2_parts), np.concatenate(fade_parts), offsets, float(cfg.alpha),
        int(cfg.max_layers),
    )
    return sir, redraws


@dataclass(frozen=True)
class SirSample:
    """Per-trial SIR of layers ``1..max_layers``, shape ``(trials, max_layers)``."""

    cfg: SimConfig
    sir: np.ndarray
    redraws: int

    def _check_depth(self, K):
        if K > self.cfg.max_layers:
            raise DomainError(f"K={K} exceeds the simulated depth max_layers={self.cfg.max_layers}")

    def layers(self, tau: float, K: int | None = None) -> np.ndarray:
        K = self.cfg.max_layers if K is None else K
        self._check_depth(K)
        return decoded_layers(self.sir[:, :K], tau)

    def layer_success(self, tau: float, K: int) -> list[LayerEstimate]:
        depth = self.layers(tau, K)
        out = []
        for k in range(1, K + 1):
            num = int(np.count_nonzero(depth >= k))
            den = int(np.count_nonzero(depth >= k - 1))
            if den == 0:
                out.append(LayerEstimate(k, math.nan, math.nan, 0, 0))
                continue
            q = num / den
            out.append(LayerEstimate(k, q, math.sqrt(q * (1 - q) / den), num, den))
        return out

    def fot(self, tau: float, n: int, m_j: int) -> tuple[float, float]:
        if not 1 <= m_j <= n:
            raise DomainError(f"m_j must lie in 1..{n}, got {m_j}")
        K = -(-n // m_j)
        depth = self.layers(tau, K)
        contrib = np.where(depth >= K, 1.0, depth * (m_j / n))
        return _mean_and_stderr(contrib)

    def ergodic_rate(self, n: int, m_j: int) -> tuple[float, float]:
        if not 1 <= m_j <= n:
            raise DomainError(f"m_j must lie in 1..{n}, got {m_j}")
        K = -(-n // m_j)
        self._check_depth(K)
        worst = np.minimum(self.sir[:, :K].min(axis=1), RATE_SIR_CAP)
        return _mean_and_stderr(K * np.log2(1.0 + worst))


def _mean_and_stderr(x: np.ndarray) -> tuple[float, float]:
    mean = float(x.mean())
    if x.size < 2:
        return mean, math.nan
    return mean, float(x.std(ddof=1) / math.sqrt(x.size))


def run_trials(cfg: SimConfig, workers: int = 1, chunk_size: int = 2000) -> SirSample:
    """Simulate every trial of ``cfg``; identical output for any ``workers``."""
    bounds = [(s, min(s + chunk_size, cfg.trials)) for s in range(0, cfg.trials, chunk_size)]
    if workers <= 1 or len(bounds) == 1:
        parts = [_run_chunk(cfg, s, e) for s, e in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [cfg] * len(bounds), *zip(*bounds)))
    sir = np.concatenate([p[0] for p in parts], axis=0)
    redraws = sum(p[1] for p in parts)
    if redraws:
        log.info("%d realizations were re-drawn", redraws)
    return SirSample(cfg, sir, redraws)


@lru_cache(maxsize=4)
def _cached_trials(cfg: SimConfig) -> SirSample:
    return run_trials(cfg)


def estimate_layer_success(cfg: SimConfig, tau: float, K: int) -> list[LayerEstimate]:
    """Conditional per-layer success estimates ``q_hat_k`` for ``k = 1..K``."""
    return _cached_trials(cfg).layer_success(tau, K)


def estimate_fot(cfg: SimConfig, tau: float, n: int, m_j: int) -> tuple[float, float]:
    return _cached_trials(cfg).fot(tau, n, m_j)


def estimate_ergodic_rate(cfg: SimConfig, n: int, m_j: int) -> tuple[float, float]:
    return _cached_trials(cfg).ergodic_rate(n, m_j)
