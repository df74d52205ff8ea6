"""Time interval analysis: cross-correlation histograms, CAR, JSI measurement."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from .events import Arm, ChannelConfig, Gate, SourceConfig, TagStream, simulate
from .state import BiphotonState, JsiMatrix

__all__ = [
    "Histogram", "JsiMatrix", "cross_correlate", "count_coincidences", "car",
    "peak_and_background", "measure_jsi", "measure_jsi_cell", "compensate_gate",
    "gate_acceptance", "derive_seed",
]

# signal tags processed per vectorized chunk of the sweep
_CHUNK = 200_000


@dataclass
class Histogram:
    """Counts of t_signal - t_idler in bins [-range + j*bin, -range + (j+1)*bin)."""

    bin_width_ps: float
    range_ps: float
    counts: np.ndarray
    n_signal: int = 0
    n_idler: int = 0
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if len(self.counts) != self.n_bins:
            raise ValueError(f"{len(self.counts)} counts for {self.n_bins} bins")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def n_bins(self) -> int:
        return int(round(2 * self.range_ps / self.bin_width_ps))

    @property
    def centers_ps(self) -> np.ndarray:
        return -self.range_ps + (np.arange(self.n_bins) + 0.5) * self.bin_width_ps

    @property
    def edges_ps(self) -> np.ndarray:
        return -self.range_ps + np.arange(self.n_bins + 1) * self.bin_width_ps

    def _check_compatible(self, other: "Histogram"):
        if (self.bin_width_ps, self.range_ps) != (other.bin_width_ps, other.range_ps):
            raise ValueError("histograms have different binning")

    def __add__(self, other: "Histogram") -> "Histogram":
        self._check_compatible(other)
        valid = None
        if self.valid is not None or other.valid is not None:
            a = self.valid if self.valid is not None else np.ones(self.n_bins, bool)
            b = other.valid if other.valid is not None else np.ones(self.n_bins, bool)
            valid = a & b
        return Histogram(self.bin_width_ps, self.range_ps, self.counts + other.counts,
                         self.n_signal + other.n_signal, self.n_idler + other.n_idler, valid)

    def mirrored(self) -> "Histogram":
        """Histogram of t_idler - t_signal (same binning)."""
        valid = None if self.valid is None else self.valid[::-1].copy()
        return Histogram(self.bin_width_ps, self.range_ps, self.counts[::-1].copy(),
                         self.n_idler, self.n_signal, valid)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["delay_ps", "counts"] + (["valid"] if self.valid is not None else [])
        w.writerow(header)
        counts = self.counts.tolist()
        for j, c in enumerate(self.centers_ps.tolist()):
            row = [repr(c), repr(counts[j])]
            if self.valid is not None:
                row.append(str(int(self.valid[j])))
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Histogram":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        centers = np.array([float(r[0]) for r in body])
        raw = [r[1] for r in body]
        counts = np.array([float(x) for x in raw])
        if all("." not in x and "e" not in x for x in raw):
            counts = counts.astype(np.int64)
        bw = float(centers[1] - centers[0]) if len(centers) > 1 else 1.0
        rng = -(centers[0] - bw / 2)
        valid = np.array([bool(int(r[2])) for r in body]) if "valid" in header else None
        return cls(bw, rng, counts, valid=valid)


def _times(x) -> np.ndarray:
    return x.time_ps if isinstance(x, TagStream) else np.asarray(x, dtype=float)


def _check_sorted(t: np.ndarray, name: str):
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise ValueError(f"{name} stream is not sorted by time")


def _deltas(ts: np.ndarray, ti: np.ndarray, lo_ps: float, hi_ps: float) -> Iterator[np.ndarray]:
    """Yield every t_s - t_i lying in [lo, hi), chunk by chunk.

    For each signal tag the matching idler tags form a contiguous run
    [first, last) in the sorted idler stream; both pointers only move forward
    as the signal time increases, so they are found for all signal tags at
    once with searchsorted. A 1 ps margin absorbs rounding in ts - hi; the
    exact window test is applied to the computed differences.
    """
    for start in range(0, len(ts), _CHUNK):
        s = ts[start:start + _CHUNK]
        first = np.searchsorted(ti, s - hi_ps - 1.0, side="left")
        last = np.searchsorted(ti, s - lo_ps + 1.0, side="right")
        n = last - first
        total = int(n.sum())
        if total == 0:
            continue
        rep = np.repeat(np.arange(len(s)), n)
        offsets = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
        dt = s[rep] - ti[first[rep] + offsets]
        yield dt[(dt >= lo_ps) & (dt < hi_ps)]


def _n_bins(bin_width_ps: float, range_ps: float) -> int:
    if bin_width_ps <= 0 or range_ps <= 0:
        raise ValueError("bin width and range must be > 0")
    ratio = range_ps / bin_width_ps
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"range {range_ps} ps is not a multiple of bin width {bin_width_ps} ps")
    return 2 * int(round(ratio))


def cross_correlate(signal, idler, bin_width_ps: float, range_ps: float) -> Histogram:
    """Multi-stop cross-correlation of two sorted time-tag streams."""
    n = _n_bins(bin_width_ps, range_ps)
    ts, ti = _times(signal), _times(idler)
    _check_sorted(ts, "signal")
    _check_sorted(ti, "idler")
    counts = np.zeros(n, dtype=np.int64)
    for dt in _deltas(ts, ti, -range_ps, range_ps):
        b = np.floor((dt + range_ps) / bin_width_ps).astype(np.int64)
        b = b[(b >= 0) & (b < n)]
        counts += np.bincount(b, minlength=n)
    return Histogram(bin_width_ps, range_ps, counts, len(ts), len(ti))


def count_coincidences(signal, idler, lo_ps: float, hi_ps: float) -> int:
    """Number of (signal, idler) tag pairs with t_s - t_i in [lo, hi)."""
    ts, ti = _times(signal), _times(idler)
    _check_sorted(ts, "signal")
    _check_sorted(ti, "idler")
    return int(sum(len(dt) for dt in _deltas(ts, ti, lo_ps, hi_ps)))


def peak_and_background(hist: Histogram, window_ps: float,
                        center_ps: Optional[float] = None,
                        guard_ps: Optional[float] = None) -> tuple[float, float, int]:
    """Counts in the peak window and mean counts of the disjoint off-peak windows.

    The peak window sits where the windowed count is largest unless
    ``center_ps`` is given. Off-peak windows tile the rest of the histogram on
    the same grid as the peak window; those starting within ``guard_ps`` (default:
    one window) of the peak window are skipped so the peak's exponential
    tails do not count as accidentals. Returns (peak, background_mean, n_background).
    """
    bw = hist.bin_width_ps
    nw = int(round(window_ps / bw))
    if nw < 1 or window_ps < bw * (1 - 1e-9):
        raise ValueError("window must be at least one bin wide")
    if window_ps > hist.range_ps * (1 + 1e-9):
        raise ValueError("window larger than half the histogram range")
    n = hist.n_bins
    counts = np.asarray(hist.counts, dtype=float)
    if center_ps is None:
        # window position with the largest sum; for a single peak this centres it
        sums = np.convolve(counts, np.ones(nw), mode="valid")
        start = int(np.argmax(sums))
    else:
        start = int(round((center_ps + hist.range_ps) / bw - nw / 2))
    start = min(max(start, 0), n - nw)
    peak = float(counts[start:start + nw].sum())
    guard = int(math.ceil((window_ps if guard_ps is None else guard_ps) / bw - 1e-9))
    bg = []
    s = start % nw
    while s + nw <= n:
        if s + nw <= start - guard or s >= start + nw + guard:
            bg.append(counts[s:s + nw].sum())
        s += nw
    if not bg:
        raise ValueError("no off-peak window fits in the histogram")
    return peak, float(np.mean(bg)), len(bg)


def car(hist: Histogram, window_ps: float, center_ps: Optional[float] = None,
        guard_ps: Optional[float] = None) -> float:
    """Coincidence-to-accidental ratio; ``math.inf`` when no accidentals are seen."""
    peak, bg, _ = peak_and_background(hist, window_ps, center_ps, guard_ps)
    if bg == 0:
        return math.inf
    return peak / bg


def derive_seed(seed: int, *keys: int) -> int:
    ss = np.random.SeedSequence([int(seed)] + [int(k) for k in keys])
    return int(ss.generate_state(1, np.uint64)[0])


def measure_jsi_cell(state: BiphotonState, src: SourceConfig,
                     channels: tuple[ChannelConfig, ChannelConfig], k_s: int, k_i: int, *,
                     bin_width_ps: float = 100.0, range_ps: float = 25_000.0) -> Histogram:
    """Correlate with the pulse shaper passing only signal k_s and idler k_i."""
    sig, idl = simulate(state, src, Arm(channels[0], (k_s,)), Arm(channels[1], (k_i,)))
    return cross_correlate(sig, idl, bin_width_ps, range_ps)


def measure_jsi(state: BiphotonState, src: SourceConfig,
                channels: tuple[ChannelConfig, ChannelConfig], k_range: Sequence[int],
                window_ps: float = 2000.0, *, bin_width_ps: float = 100.0,
                range_ps: float = 25_000.0, subtract_accidentals: bool = True,
                workers: int = 1) -> JsiMatrix:
    """Monte Carlo JSI: one filtered correlation run per (k_s, k_i) cell.

    Each cell gets its own seed derived from ``src.seed`` and the cell
    indices, so cells are independent and can run in any order. The cell
    value is the zero-delay window count, minus the mean accidental count
    when ``subtract_accidentals`` (clamped at 0). The per-cell
    peak-to-background ratio is stored in ``JsiMatrix.car``.
    """
    lo, hi = int(k_range[0]), int(k_range[1])
    missing = [k for k in range(lo, hi + 1) if k not in state.ks]
    if missing:
        raise ValueError(f"sidebands {missing} are outside the state's comb {state.ks}")
    cells = [(a, b) for a in range(lo, hi + 1) for b in range(lo, hi + 1)]

    def job(cell):
        a, b = cell
        cell_src = replace(src, seed=derive_seed(src.seed, a, b))
        h = measure_jsi_cell(state, cell_src, channels, a, b,
                             bin_width_ps=bin_width_ps, range_ps=range_ps)
        return peak_and_background(h, window_ps, center_ps=0.0)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, cells))
    else:
        results = [job(c) for c in cells]
    n = hi - lo + 1
    vals = np.zeros((n, n))
    ratio = np.zeros((n, n))
    for (a, b), (peak, bg, _) in zip(cells, results):
        vals[a - lo, b - lo] = max(peak - bg, 0.0) if subtract_accidentals else peak
        ratio[a - lo, b - lo] = peak / bg if bg > 0 else math.inf
    return JsiMatrix((lo, hi), vals, "counts", car=ratio)


def gate_acceptance(delays_ps: np.ndarray, gate: Gate) -> np.ndarray:
    """Relative probability that two tags separated by ``delay`` both pass the gate.

    The gate autocorrelation is a train of triangles of half-width ``width``
    repeating every ``period``; the result is normalized to 1 at zero delay.
    """
    d = np.asarray(delays_ps, dtype=float)
    P, W = gate.period_ps, gate.width_ps
    n_lo = math.floor((d.min() - W) / P)
    n_hi = math.ceil((d.max() + W) / P)
    acc = np.zeros_like(d)
    for n in range(n_lo, n_hi + 1):
        acc += np.clip(W - np.abs(d - n * P), 0.0, None)
    zero = sum(max(0.0, W - abs(n * P)) for n in range(-math.ceil(W / P), math.ceil(W / P) + 1))
    return acc / zero


# acceptance below which a bin is flagged instead of rescaled
MIN_ACCEPTANCE = 0.05


def compensate_gate(hist: Histogram, gate: Gate) -> Histogram:
    """Undo the roll-off that finite detection gates impose on a histogram."""
    acc = gate_acceptance(hist.centers_ps, gate)
    if np.all(acc <= 0):
        raise ValueError("gate acceptance is zero across the whole histogram")
    valid = acc >= MIN_ACCEPTANCE
    counts = np.asarray(hist.counts, dtype=float).copy()
    counts[valid] = counts[valid] / acc[valid]
    if hist.valid is not None:
        valid &= hist.valid
    return Histogram(hist.bin_width_ps, hist.range_ps, counts, hist.n_signal, hist.n_idler, valid)
