"""Time grids and Brownian path bundles.

Randomness follows a counter-based contract: paths are cut into fixed blocks
of :data:`BLOCK_PATHS`, and block ``b`` draws its normals from a Philox stream
keyed by ``(seed, b)`` in (path, step, coordinate) order.  The output is
therefore a pure function of ``(seed, M, N, d)`` no matter how many workers
generate the blocks or in which order.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TerminalBoundError

logger = logging.getLogger(__name__)

BLOCK_PATHS = 1024

__all__ = [
    "TimeGrid",
    "BrownianBundle",
    "make_grid",
    "simulate_brownian",
    "evaluate_terminal",
    "dump_bundle",
]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("grid times must be strictly increasing with at least one step")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @property
    def N(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    def window(self, k0: int, k1: int) -> "TimeGrid":
        return TimeGrid(self.times[k0:k1 + 1].copy())

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    __hash__ = None


def make_grid(T: float, N: int, start: float = 0.0) -> TimeGrid:
    """Uniform grid of ``N`` steps on ``[start, start + T]``."""
    if not T > 0:
        raise ValueError("T must be positive")
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    times = start + T * np.arange(N + 1) / N
    times[-1] = start + T
    return TimeGrid(times)


@dataclass(frozen=True, eq=False)
class BrownianBundle:
    """``M`` discrete d-dimensional Brownian paths.

    ``cumulative[m, k]`` is W at ``grid.times[k]``.  For a window of a longer
    bundle the cumulative values keep their absolute level (they are the same
    paths), so ``cumulative[:, 0]`` is zero only for a bundle starting at t=0.
    """

    increments: np.ndarray
    cumulative: np.ndarray
    seed: int
    grid: TimeGrid

    @property
    def M(self) -> int:
        return self.increments.shape[0]

    @property
    def N(self) -> int:
        return self.increments.shape[1]

    @property
    def d(self) -> int:
        return self.increments.shape[2]

    def subset(self, lo: int, hi: int) -> "BrownianBundle":
        """Paths ``lo..hi-1`` of the bundle (views, no copy)."""
        if not 0 <= lo < hi <= self.M:
            raise ValueError("invalid path range")
        return BrownianBundle(self.increments[lo:hi], self.cumulative[lo:hi], self.seed, self.grid)

    def window(self, k0: int, k1: int) -> "BrownianBundle":
        """Sub-bundle on grid indices ``k0..k1`` (views, no copy)."""
        if not 0 <= k0 < k1 <= self.N:
            raise ValueError("invalid window")
        return BrownianBundle(
            self.increments[:, k0:k1], self.cumulative[:, k0:k1 + 1], self.seed, self.grid.window(k0, k1)
        )


def _block_normals(seed: int, block: int, count: int, N: int, d: int) -> np.ndarray:
    bitgen = np.random.Philox(key=np.array([seed, block], dtype=np.uint64))
    return np.random.Generator(bitgen).standard_normal((count, N, d))


def simulate_brownian(grid: TimeGrid, M: int, d: int, seed: int, workers: int = 1) -> BrownianBundle:
    """Simulate ``M`` paths with i.i.d. N(0, dt) increments per coordinate."""
    if M < 1 or d < 1:
        raise ValueError("M and d must be positive")
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    N = grid.N
    normals = np.empty((M, N, d))
    blocks = range((M + BLOCK_PATHS - 1) // BLOCK_PATHS)

    def fill(b):
        lo = b * BLOCK_PATHS
        hi = min(M, lo + BLOCK_PATHS)
        normals[lo:hi] = _block_normals(seed, b, hi - lo, N, d)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, blocks))
    else:
        for b in blocks:
            fill(b)
    increments = normals * np.sqrt(grid.dt)[None, :, None]
    cumulative = np.zeros((M, N + 1, d))
    np.cumsum(increments, axis=1, out=cumulative[:, 1:, :])
    increments.setflags(write=False)
    cumulative.setflags(write=False)
    return BrownianBundle(increments, cumulative, int(seed), grid)


def evaluate_terminal(spec, bundle: BrownianBundle) -> np.ndarray:
    """Per-path terminal vectors, shape ``(M, n)``, checked against declared bounds."""
    if spec.d != bundle.d:
        raise ValueError(f"spec has d={spec.d} but bundle has d={bundle.d}")
    xi = spec.terminal.evaluate(bundle.cumulative)
    for i, part in enumerate(spec.terminal.parts):
        excess = np.abs(xi[:, i]).max() - part.bound
        if excess > 1e-12 * (1 + part.bound):
            raise TerminalBoundError(f"terminal component {i + 1} exceeds its declared bound {part.bound}")
    return xi


def dump_bundle(bundle: BrownianBundle, path, fmt: str = "csv") -> Path:
    """Write cumulative paths; one row per path, columns ordered (time, coordinate)."""
    path = Path(path)
    flat = bundle.cumulative.reshape(bundle.M, -1)
    if fmt == "npy":
        np.save(path, bundle.cumulative)
    elif fmt == "csv":
        header = [f"W{j + 1}@{t:.17g}" for t in bundle.grid.times for j in range(bundle.d)]
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in flat:
                writer.writerow([f"{v:.17g}" for v in row])
    else:
        raise ValueError(f"unknown dump format {fmt!r}")
    return path
