"""Biphoton comb state: ideal JSI and single-pair coincidence profile."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .spectral import RingParams, SidebandWeights, sideband_weights


@dataclass(frozen=True)
class BiphotonState:
    params: RingParams
    weights: Optional[SidebandWeights] = None

    def __post_init__(self):
        if self.weights is None:
            object.__setattr__(self, "weights", sideband_weights(self.params))
        if len(self.weights) != self.params.n_sidebands:
            raise ValueError(
                f"{len(self.weights)} weights for {self.params.n_sidebands} sidebands"
            )
        if tuple(self.weights.ks) != tuple(self.params.sideband_indices.tolist()):
            raise ValueError("weight indices do not match the ring's sideband indices")

    @property
    def ks(self) -> tuple[int, ...]:
        return self.weights.ks

    @property
    def populated(self) -> tuple[int, ...]:
        return tuple(k for k, w in zip(self.weights.ks, self.weights.weights) if w > 0)

    def with_weights(self, weights: SidebandWeights) -> "BiphotonState":
        return BiphotonState(self.params, weights)


@dataclass
class CorrelationCurve:
    delays_ps: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.delays_ps = np.asarray(self.delays_ps, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.delays_ps.shape != self.values.shape or self.delays_ps.ndim != 1:
            raise ValueError("delays and values must be 1-D arrays of equal length")
        if len(self.delays_ps) > 1 and np.any(np.diff(self.delays_ps) <= 0):
            raise ValueError("delays must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("correlation values must be non-negative")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delay_ps", "value"])
        for d, v in zip(self.delays_ps.tolist(), self.values.tolist()):
            w.writerow([repr(d), repr(v)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, label: str = "") -> "CorrelationCurve":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["delay_ps", "value"]:
            raise ValueError(f"unexpected header {rows[0]}")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1], label)


@dataclass
class JsiMatrix:
    """Joint spectral intensity over a (signal k) x (idler k) grid.

    ``k_range`` is the inclusive pair (k_min, k_max); rows index the signal
    sideband and columns the idler sideband.
    """

    k_range: tuple[int, int]
    values: np.ndarray
    normalization: str = "counts"
    car: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        lo, hi = self.k_range
        n = hi - lo + 1
        if self.values.shape != (n, n):
            raise ValueError(f"JSI shape {self.values.shape} does not match k_range {self.k_range}")
        if np.any(self.values < 0):
            raise ValueError("JSI entries must be non-negative")
        if self.normalization not in ("counts", "unit_trace"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def ks(self) -> list[int]:
        return list(range(self.k_range[0], self.k_range[1] + 1))

    def cell(self, k_s: int, k_i: int) -> float:
        lo = self.k_range[0]
        return float(self.values[k_s - lo, k_i - lo])

    def unit_trace(self) -> "JsiMatrix":
        tr = np.trace(self.values)
        if tr <= 0:
            raise ValueError("JSI trace is zero")
        return JsiMatrix(self.k_range, self.values / tr, "unit_trace", self.car)

    def offdiag_ratio(self) -> float:
        """Off-diagonal to diagonal energy (sum of squares) ratio."""
        v = self.values
        diag = float(np.sum(np.diag(v) ** 2))
        off = float(np.sum(v**2)) - diag
        return off / diag if diag > 0 else math.inf

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k_s\\k_i"] + [str(k) for k in self.ks])
        for k, row in zip(self.ks, self.values.tolist()):
            w.writerow([str(k)] + [repr(x) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, normalization: str = "counts") -> "JsiMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        ks = [int(x) for x in rows[0][1:]]
        vals = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
        return cls((ks[0], ks[-1]), vals, normalization)


def predicted_jsi(state: BiphotonState) -> JsiMatrix:
    """Accidental-free JSI: energy matching puts all weight on the diagonal."""
    w = np.asarray(state.weights.weights, dtype=float)
    ks = state.ks
    return JsiMatrix((ks[0], ks[-1]), np.diag(w / w.sum()), "unit_trace")


def temporal_correlation(
    state: BiphotonState, k: int, delays_ps: Sequence[float], label: str = ""
) -> CorrelationCurve:
    """Coincidence profile exp(-2*Gamma*|tau|) of one sideband pair, peak 1."""
    if k not in state.populated:
        raise ValueError(f"sideband {k} is not populated (have {state.populated})")
    tau = np.asarray(delays_ps, dtype=float) * 1e-12
    values = np.exp(-2.0 * state.params.gamma * np.abs(tau))
    return CorrelationCurve(np.asarray(delays_ps, dtype=float), values, label or f"S{k}I{k}")


def correlation_fwhm(curve: CorrelationCurve) -> float:
    """Full width at half maximum in ps, linearly interpolated between samples.

    Raises ValueError if the curve does not drop below half maximum on both
    sides of its peak within the sampled range.
    """
    x, y = curve.delays_ps, curve.values
    if len(y) < 3:
        raise ValueError("need at least 3 samples")
    i0 = int(np.argmax(y))
    peak = y[i0]
    if peak <= 0:
        raise ValueError("curve has no positive peak")
    half = peak / 2.0

    left = np.nonzero(y[: i0 + 1] < half)[0]
    right = np.nonzero(y[i0:] < half)[0]
    if len(left) == 0 or len(right) == 0:
        raise ValueError("curve does not cross half maximum within the delay grid")
    a = left[-1]
    xl = x[a] + (half - y[a]) * (x[a + 1] - x[a]) / (y[a + 1] - y[a])
    b = i0 + right[0]
    xr = x[b - 1] + (half - y[b - 1]) * (x[b] - x[b - 1]) / (y[b] - y[b - 1])
    return float(xr - xl)
