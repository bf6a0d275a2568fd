"""Seeded chunk layout for Monte Carlo runs and the pool that evaluates chunks."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, TypeVar

import numpy as np
from loguru import logger
from tqdm import tqdm

from core.config import settings

T = TypeVar("T")


@dataclass(frozen=True)
class SampleLayout:
    """
    ``count`` samples split into chunks of ``chunk_size``; chunk i draws from
    its own generator spawned from SeedSequence(seed). The same (seed, count,
    chunk_size) reproduces the same samples for any thread count.
    """

    seed: int
    count: int
    chunk_size: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"Sample count must be positive, got {self.count}")
        if self.chunk_size < 1:
            raise ValueError(f"Chunk size must be positive, got {self.chunk_size}")

    @classmethod
    def build(cls, count: int, seed: int | None = None, chunk_size: int | None = None) -> "SampleLayout":
        return cls(
            seed=settings.PHILAB_SEED if seed is None else seed,
            count=count,
            chunk_size=chunk_size or settings.PHILAB_CHUNK_SIZE,
        )

    @property
    def n_chunks(self) -> int:
        return math.ceil(self.count / self.chunk_size)

    def chunk_sizes(self) -> list[int]:
        sizes = [self.chunk_size] * (self.n_chunks - 1)
        sizes.append(self.count - self.chunk_size * (self.n_chunks - 1))
        return sizes

    def generators(self) -> list[np.random.Generator]:
        children = np.random.SeedSequence(self.seed).spawn(self.n_chunks)
        return [np.random.default_rng(child) for child in children]


def concurrent_chunks(layout: SampleLayout, threads: int | None = None, sample_bytes: int = 0) -> int:
    """
    Worker count for a layout: at most ``threads``, one per chunk, and no more
    chunks in flight than PHILAB_MEMORY_MB holds at ``sample_bytes`` per sample.
    """
    threads = min(threads or settings.PHILAB_THREADS, layout.n_chunks)
    if sample_bytes <= 0:
        return threads
    chunk_bytes = sample_bytes * layout.chunk_size
    fitting = settings.PHILAB_MEMORY_MB * 2**20 // chunk_bytes
    if fitting < 1:
        logger.warning(
            f"One chunk needs about {chunk_bytes / 2**20:.0f} MB, above PHILAB_MEMORY_MB="
            f"{settings.PHILAB_MEMORY_MB}; lower the chunk size"
        )
    if fitting < threads:
        logger.debug(f"Memory budget caps workers at {max(fitting, 1)} of {threads}")
    return int(max(min(threads, fitting), 1))


def map_chunks(
    fn: Callable[[np.random.Generator, int], T],
    layout: SampleLayout,
    threads: int | None = None,
    desc: str = "chunks",
    sample_bytes: int = 0,
) -> list[T]:
    """Evaluate fn(rng, size) for every chunk; results come back in chunk order."""
    threads = concurrent_chunks(layout, threads, sample_bytes)
    tasks = list(zip(layout.generators(), layout.chunk_sizes()))
    logger.debug(f"{desc}: {layout.count} samples in {len(tasks)} chunks on {threads} thread(s)")
    progress = dict(total=len(tasks), desc=desc, disable=not settings.PHILAB_PROGRESS, leave=False)
    if threads == 1:
        return [fn(rng, size) for rng, size in tqdm(tasks, **progress)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(tqdm(pool.map(lambda task: fn(*task), tasks), **progress))
