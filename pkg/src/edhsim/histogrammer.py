"""Histogram constructors over photon streams.

Four ways of summarizing an exposure:

* :func:`oedh`  - oracle equi-depth boundaries: exact empirical quantiles of
  the pooled timestamps. Needs the full photon history, so it is an accuracy
  reference, not a sensor design.
* :func:`pedh`  - proportional equi-depth boundaries: one optimized binner
  per interior quantile, all running in parallel over the full exposure.
* :func:`hedh`  - hierarchical equi-depth boundaries: a binary tree of
  fixed-stepping median binners run level by level, each level consuming its
  share of the cycles and refining within the intervals found so far.
* :func:`ewh`   - a plain equi-width photon-count histogram.

Equi-depth boundary sets always carry the forced endpoints 0 and n_bins.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .binner import BinnerBank, StepParams
from .errors import (
    BinCountError,
    InvalidParamsError,
    PowerOfTwoError,
    TooFewPhotonsError,
)
from .transient import PhotonStream


@dataclass(frozen=True)
class EdhBoundaries:
    """Sorted equi-depth bin boundaries {t_0 .. t_q} with t_0=0, t_q=n_bins."""

    q: int
    bounds: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(np.asarray(self.bounds, dtype=np.float64))
        if self.q < 1:
            raise InvalidParamsError("q must be >= 1")
        if b.shape != (self.q + 1,):
            raise InvalidParamsError(f"need q+1={self.q + 1} boundaries, got {b.shape}")
        if b[0] != 0.0:
            raise InvalidParamsError("boundary set must start at 0")
        if np.any(np.diff(b) < 0.0):
            raise InvalidParamsError("boundaries must be non-decreasing")
        b.setflags(write=False)
        object.__setattr__(self, "bounds", b)

    @property
    def interior(self) -> np.ndarray:
        return self.bounds[1:-1]

    @property
    def span(self) -> float:
        """Total covered range (equals n_bins)."""
        return float(self.bounds[-1])


@dataclass(frozen=True)
class EwHistogram:
    """Equi-width photon counts over ``bin_count`` bins spanning [0, span]."""

    counts: np.ndarray
    span: float

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.counts))
        if c.ndim != 1:
            raise InvalidParamsError("histogram counts must be 1-d")
        if c.size and (np.any(c < 0) or not np.all(np.isfinite(c.astype(np.float64)))):
            raise InvalidParamsError("histogram counts must be finite and >= 0")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def bin_count(self) -> int:
        return self.counts.size

    @property
    def bin_width(self) -> float:
        return self.span / self.bin_count


def oedh(stream: PhotonStream, q: int) -> EdhBoundaries:
    """Exact empirical quantile boundaries from the pooled timestamps.

    Interior boundary j is the smallest pooled timestamp at which the
    empirical CDF reaches j/q, i.e. the order statistic of rank
    ``ceil(j*N/q)``. Endpoints are forced to 0 and n_bins.

    Raises:
        TooFewPhotonsError: if the stream pooled fewer than q photons.
    """
    if q < 1:
        raise InvalidParamsError("q must be >= 1")
    pooled = stream.pooled()
    n = pooled.size
    if n < q:
        raise TooFewPhotonsError(f"need >= {q} photons for {q} quantiles, stream has {n}")
    j = np.arange(1, q, dtype=np.int64)
    ranks = (j * n + q - 1) // q  # ceil(j*n/q) in integer arithmetic
    interior = pooled[ranks - 1]
    bounds = np.concatenate(([0.0], interior, [float(stream.n_bins)]))
    return EdhBoundaries(q, bounds)


def pedh(stream: PhotonStream, q: int, params: Optional[StepParams] = None) -> EdhBoundaries:
    """Parallel proportional equi-depth boundaries.

    Instantiates q-1 optimized binners with targets j/q, every one consuming
    every cycle of the stream. Final CVs can cross under noise since the
    binners are independent; the output is sorted to restore a valid
    boundary set.
    """
    if q < 2:
        raise InvalidParamsError("pedh needs q >= 2")
    if params is None:
        params = StepParams()
    targets = np.arange(1, q, dtype=np.float64) / q
    bank = BinnerBank(targets, params, stream.n_bins)
    interior = np.sort(bank.run(stream))
    bounds = np.concatenate(([0.0], interior, [float(stream.n_bins)]))
    return EdhBoundaries(q, bounds)


def hedh(
    stream: PhotonStream,
    q: int,
    fixed_step_size: float = 1.0,
    level_fractions: Optional[Sequence[float]] = None,
) -> EdhBoundaries:
    """Hierarchical equi-depth boundaries from fixed-stepping median binners.

    log2(q) levels run sequentially, splitting the exposure's cycles as
    evenly as possible across levels (``level_fractions`` reweights the
    split). Level 1 runs one median binner over the full range; level l runs
    2**(l-1) median binners, each confined to one interval delimited by the
    boundaries already found (photons outside the interval are invisible to
    that binner) and initialized at the interval midpoint.

    Raises:
        PowerOfTwoError: if q is not a power of two.
    """
    if q < 2 or q & (q - 1):
        raise PowerOfTwoError(f"hedh requires a power-of-two q, got {q}")
    if not fixed_step_size > 0.0:
        raise InvalidParamsError("fixed_step_size must be > 0")
    n_levels = q.bit_length() - 1
    cuts = _level_cuts(stream.n_cycles, n_levels, level_fractions)

    n_bins_f = float(stream.n_bins)
    interior: list[float] = []
    for level in range(n_levels):
        edges = np.array(sorted([0.0] + interior + [n_bins_f]))
        lo, hi = edges[:-1], edges[1:]
        cvs = (lo + hi) / 2.0
        for i in range(cuts[level], cuts[level + 1]):
            ts = stream.cycle(i)
            at_lo = np.searchsorted(ts, lo, side="left")
            at_cv = np.searchsorted(ts, cvs, side="left")
            at_hi = np.searchsorted(ts, hi, side="left")
            early = at_cv - at_lo
            total = at_hi - at_lo
            frac = np.divide(
                early, total, out=np.zeros(early.shape, np.float64), where=total > 0
            )
            dn = np.where(total > 0, 0.5 - frac, 0.0)
            cvs = np.clip(cvs + fixed_step_size * np.sign(dn), lo, hi)
        interior.extend(cvs.tolist())

    bounds = np.concatenate(([0.0], np.sort(interior), [n_bins_f]))
    return EdhBoundaries(q, bounds)


def _level_cuts(n_cycles: int, n_levels: int, fractions: Optional[Sequence[float]]) -> np.ndarray:
    if fractions is None:
        weights = np.ones(n_levels)
    else:
        weights = np.asarray(fractions, dtype=np.float64)
        if weights.shape != (n_levels,) or np.any(weights <= 0.0):
            raise InvalidParamsError(f"level_fractions must be {n_levels} positive values")
    cum = np.concatenate(([0.0], np.cumsum(weights))) / weights.sum()
    return np.rint(cum * n_cycles).astype(np.int64)


def ewh(stream: PhotonStream, bin_count: int) -> EwHistogram:
    """Equi-width photon-count histogram over the pooled stream.

    Raises:
        BinCountError: unless 1 <= bin_count <= n_bins.
    """
    if not isinstance(bin_count, (int, np.integer)) or not 1 <= bin_count <= stream.n_bins:
        raise BinCountError(f"bin_count must be an integer in [1, {stream.n_bins}], got {bin_count}")
    width = stream.n_bins / bin_count
    idx = (stream.timestamps // width).astype(np.int64)
    np.clip(idx, 0, bin_count - 1, out=idx)
    counts = np.bincount(idx, minlength=bin_count)
    return EwHistogram(counts, float(stream.n_bins))
