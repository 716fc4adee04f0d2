"""Snapshot generation.

Every shot draws from its own counter-based stream (Philox keyed by a
SeedSequence of ``(seed, shot_index)``), so a batch is a pure function of
its inputs no matter how many workers produce it.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .binning import BinGrid, BinnedComponents, BinnedDensity, Snapshot, snapshot_matrix
from .exceptions import DomainError, RejectionLimitError
from .fcs import QuadratureSpec, exact_probabilities
from .physics import TWO_PI, TwoCloudState, reduce_phase

MODES = ("theta-multinomial", "theta-poisson", "exact-enumeration")
REJECTION_LIMIT = 1_000_000
THREADS_ENV = "FRINGE_FCS_THREADS"


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "theta-multinomial"
    shots: int = 1
    seed: int = 0
    pin_theta: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown sampler mode {self.mode!r}; expected one of {MODES}")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class ShotRecord:
    shot_index: int
    hidden_theta: float | None
    snapshot: Snapshot
    rng_stream_id: int


def shot_stream(seed: int, shot_index: int) -> tuple[np.random.Generator, int]:
    """Independent generator for one shot plus a 64-bit id of its stream."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(shot_index),))
    stream_id = int(ss.generate_state(1, dtype=np.uint64)[0])
    return np.random.Generator(np.random.Philox(ss)), stream_id


def worker_count(requested: int = 1) -> int:
    """Requested workers, capped by $FRINGE_FCS_THREADS when set."""
    cap = os.environ.get(THREADS_ENV)
    if cap:
        requested = min(requested, int(cap))
    return max(1, requested)


class SnapshotSampler:
    """Precomputes what a state/bin pair needs and draws shots by index."""

    def __init__(self, state: TwoCloudState, bins: BinGrid, config: SamplerConfig,
                 quad: QuadratureSpec | None = None):
        self.state = state
        self.bins = bins
        self.config = config
        self.components = BinnedComponents.from_state(state, bins)
        self._table = None
        if config.mode == "exact-enumeration":
            if state.n > 4 or bins.k > 6:
                raise DomainError("exact-enumeration sampling needs N <= 4 and K <= 6")
            snaps = snapshot_matrix(state.n, bins.k)
            probs = exact_probabilities(state, bins, snaps, quad)
            self._table = (snaps, np.cumsum(probs))

    def _hidden_phase(self, rng: np.random.Generator) -> float:
        if self.config.pin_theta is not None:
            return float(reduce_phase(self.config.pin_theta))
        return float(rng.uniform(0.0, TWO_PI))

    def _rho(self, theta: float) -> np.ndarray:
        return np.clip(self.components.rho(theta), 0.0, None)

    def shot(self, shot_index: int) -> ShotRecord:
        rng, stream_id = shot_stream(self.config.seed, shot_index)
        n = self.state.n
        mode = self.config.mode
        if mode == "exact-enumeration":
            snaps, cdf = self._table
            i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            counts = snaps[min(i, len(snaps) - 1)]
            return ShotRecord(shot_index, None, Snapshot(counts), stream_id)
        theta = self._hidden_phase(rng)
        rho = self._rho(theta)
        if mode == "theta-multinomial":
            counts = rng.multinomial(n, rho / rho.sum())
        else:
            counts = self._poisson_conditioned(rng, rho, n)
        return ShotRecord(shot_index, theta, Snapshot(counts), stream_id)

    @staticmethod
    def _poisson_conditioned(rng, rho, n, block: int = 256) -> np.ndarray:
        drawn = 0
        while drawn < REJECTION_LIMIT:
            trial = rng.poisson(rho, size=(block, rho.size))
            hit = np.flatnonzero(trial.sum(axis=1) == n)
            if hit.size:
                return trial[hit[0]]
            drawn += block
        raise RejectionLimitError(f"no Poisson draw summed to N = {n} in {REJECTION_LIMIT} tries")

    def batch(self, workers: int | None = None) -> list[ShotRecord]:
        workers = worker_count(self.config.workers if workers is None else workers)
        indices = range(self.config.shots)
        if workers == 1:
            return [self.shot(i) for i in indices]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.shot, indices))


def sample_shot(state: TwoCloudState, bins: BinGrid, config: SamplerConfig, shot_index: int) -> ShotRecord:
    return SnapshotSampler(state, bins, config).shot(shot_index)


def sample_batch(state: TwoCloudState, bins: BinGrid, config: SamplerConfig, workers: int | None = None) -> list[ShotRecord]:
    """Shots 0..shots-1 in index order."""
    return SnapshotSampler(state, bins, config).batch(workers)


def counts_array(records: Sequence[ShotRecord]) -> np.ndarray:
    return np.array([r.snapshot.counts for r in records], dtype=np.int64)


def empirical_mean_profile(records: Sequence[ShotRecord]) -> BinnedDensity:
    if len(records) == 0:
        raise ValueError("need at least one shot record")
    return BinnedDensity(counts_array(records).mean(axis=0))


def mixture_count_moments(state: TwoCloudState, bins: BinGrid, nodes: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin mean and variance of n_k under the uniform-phase multinomial mixture.

    Var = E_θ[N p_k (1 - p_k)] + Var_θ[N p_k]; the second term is the
    run-to-run fringe movement and dwarfs shot noise when fringes are visible.
    """
    comps = BinnedComponents.from_state(state, bins)
    rho = np.clip(comps.rho(TWO_PI * np.arange(nodes) / nodes), 0.0, None)
    p = rho / rho.sum(axis=1, keepdims=True)
    n = state.n
    mean = n * p.mean(axis=0)
    var = (n * p * (1 - p)).mean(axis=0) + (n * p).var(axis=0)
    return mean, var
