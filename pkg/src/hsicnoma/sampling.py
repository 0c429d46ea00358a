"""Monte Carlo estimation over ordered Rayleigh-fading gains.

Draws are organised in fixed-size chunks, each with its own counter-based
stream derived from ``(seed, chunk index)``. Chunks are reduced by integer
addition, so estimates do not depend on how many workers evaluate them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .estimates import Method, ProbabilityEstimate
from .model import (
    REGION_ORDER,
    ChannelRealization,
    Region,
    Scheme,
    hybrid_vs_oma_indicator,
    lemma_regions,
)


@dataclass(frozen=True)
class SamplerSpec:
    seed: int = 0
    n_samples: int = 1_000_000
    chunk_size: int = 250_000
    workers: int = 1

    def __post_init__(self):
        if self.n_samples < 1 or self.chunk_size < 1:
            raise ConfigError("n_samples and chunk_size must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")

    @property
    def n_chunks(self):
        return -(-self.n_samples // self.chunk_size)

    def chunk_length(self, index):
        return min(self.chunk_size, self.n_samples - index * self.chunk_size)


def chunk_generator(seed, index):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def ordered_gain_block(M, spec, index):
    """Chunk ``index`` of the stream as an ``(rows, M)`` array, rows ascending.

    Uses the Renyi representation: the k-th smallest of ``M`` iid Exp(1)
    variates equals ``sum_{j<k} E_j / (M - j)`` for iid Exp(1) ``E_j``, which
    yields sorted rows with the exact joint law without sorting.
    """
    if M < 2:
        raise ConfigError(f"M must be at least 2, got {M}")
    rng = chunk_generator(spec.seed, index)
    spacings = rng.standard_exponential((spec.chunk_length(index), M))
    spacings /= np.arange(M, 0, -1, dtype=float)
    return np.cumsum(spacings, axis=1, out=spacings)


def iter_gain_blocks(M, spec):
    for index in range(spec.n_chunks):
        yield ordered_gain_block(M, spec, index)


def sample_ordered_gains(M, spec):
    """Stream of ``ChannelRealization`` objects (one per draw)."""
    for block in iter_gain_blocks(M, spec):
        for row in block:
            yield ChannelRealization(row)


def _chunk_counts(cfg, spec, index):
    gains = ordered_gain_block(cfg.M, spec, index)
    x = gains[:, cfg.m - 1]
    y = gains[:, cfg.n - 1]
    hsic = hybrid_vs_oma_indicator(Scheme.HSIC_HYBRID, cfg, x, y)
    fsic = hybrid_vs_oma_indicator(Scheme.FSIC_HYBRID, cfg, x, y)
    regions = np.bincount(lemma_regions(cfg, x, y), minlength=len(REGION_ORDER))
    return np.concatenate(([int(hsic.sum()), int(fsic.sum())], regions)).astype(np.int64)


@dataclass(frozen=True)
class MonteCarloCounts:
    n_samples: int
    hsic: int
    fsic: int
    regions: dict

    def estimate(self, count):
        return binomial_estimate(count, self.n_samples)


def mc_counts(cfg, spec):
    """Event counts for both schemes and every region, from one pass over the stream."""
    indices = range(spec.n_chunks)
    if spec.workers > 1 and spec.n_chunks > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            parts = list(pool.map(lambda i: _chunk_counts(cfg, spec, i), indices))
    else:
        parts = [_chunk_counts(cfg, spec, i) for i in indices]
    total = np.sum(parts, axis=0)
    regions = {region: int(total[2 + k]) for k, region in enumerate(REGION_ORDER)}
    return MonteCarloCounts(spec.n_samples, int(total[0]), int(total[1]), regions)


def binomial_estimate(count, n):
    p = count / n
    if count == 0 or count == n:
        # plug-in variance vanishes; use the 3/N surrogate instead
        stderr = 3.0 / n
    else:
        stderr = math.sqrt(p * (1.0 - p) / n)
    return ProbabilityEstimate(p, stderr, n, Method.MONTE_CARLO)


def mc_probability(cfg, scheme, spec):
    """Empirical probability that the hybrid scheme does not beat OMA."""
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.OMA:
        raise ConfigError("Monte Carlo comparison needs a hybrid scheme, got OMA")
    counts = mc_counts(cfg, spec)
    return counts.estimate(counts.hsic if scheme is Scheme.HSIC_HYBRID else counts.fsic)


def mc_region_decomposition(cfg, spec):
    """Empirical masses of the four failure regions on one shared stream."""
    counts = mc_counts(cfg, spec)
    return {r: counts.estimate(counts.regions[r]) for r in REGION_ORDER if r is not Region.NONE}
