"""Chirped-grating dispersion: group delay, dispersed coincidence peaks, cancellation.

The grating is first order: its group delay is linear in optical frequency
with slope set by D at the reference wavelength,

    delay(nu) = D * dlambda,   dlambda = -(lambda_ref**2 / c) * (nu - nu_ref),

so a longer wavelength (lower frequency) is delayed more when D > 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal as sps
from scipy.special import exp1

from .events import KIND_PAIR, TagStream
from .spectral import C_M_PER_S, resonance_frequencies
from .state import BiphotonState, CorrelationCurve, JsiMatrix


@dataclass(frozen=True)
class DispersionElement:
    D_ns_per_nm: float
    ref_wavelength_nm: float = 1550.9
    insertion_loss: float = 1.0

    def __post_init__(self):
        if not self.ref_wavelength_nm > 0:
            raise ValueError("ref_wavelength_nm must be > 0")
        if not 0.0 <= self.insertion_loss <= 1.0:
            raise ValueError("insertion_loss is a transmission factor in [0, 1]")

    @property
    def ref_freq(self) -> float:
        return C_M_PER_S / (self.ref_wavelength_nm * 1e-9)

    @property
    def slope_ps_per_hz(self) -> float:
        """d(delay)/d(nu) in ps/Hz (negative for D > 0)."""
        lam = self.ref_wavelength_nm * 1e-9
        dlam_dnu_nm = -(lam**2 / C_M_PER_S) * 1e9
        return self.D_ns_per_nm * 1e3 * dlam_dnu_nm

    def delay_ps(self, freq_hz):
        return self.slope_ps_per_hz * (np.asarray(freq_hz, dtype=float) - self.ref_freq)

    @classmethod
    def from_db(cls, D_ns_per_nm: float, ref_wavelength_nm: float, loss_db: float):
        return cls(D_ns_per_nm, ref_wavelength_nm, 10 ** (-loss_db / 10))


NO_DISPERSION = DispersionElement(0.0)


def group_delay(elem: DispersionElement, freq_hz):
    """Group delay in ps at optical frequency ``freq_hz``."""
    if np.any(np.asarray(freq_hz) <= 0):
        raise ValueError("frequency must be > 0")
    out = elem.delay_ps(freq_hz)
    return float(out) if np.ndim(out) == 0 else out


def apply_dispersion(tags: TagStream, elem: DispersionElement, state: BiphotonState,
                     seed: int) -> TagStream:
    """Pass a recorded photon stream through a dispersive element.

    Photon tags survive with probability ``insertion_loss`` and are shifted by
    the group delay at their exact optical frequency. Dark counts pass
    unchanged (they are generated at the detector).
    """
    rng = np.random.default_rng(int(seed))
    is_photon = tags.kind == KIND_PAIR
    keep = ~is_photon | (rng.uniform(size=len(tags)) < elem.insertion_loss)
    out = tags.select(keep)
    nu = out.optical_frequency(state)
    shift = np.where(out.kind == KIND_PAIR, np.nan_to_num(elem.delay_ps(nu)), 0.0)
    t = out.time_ps + shift
    moved = out.with_times(t)
    inside = (t >= 0) & (t <= tags.duration_ps)
    return moved.select(inside).sorted()


# ---------------------------------------------------------------------------
# analytic dispersed correlation
# ---------------------------------------------------------------------------

def laplace_cauchy_density(t_ps, scale_ps: float, cauchy_ps: float) -> np.ndarray:
    """Density of X + Y, X two-sided exponential (scale s), Y Cauchy (scale b).

    Closed form  (1 / (2 pi s)) Im[e^{z} E1(z) - e^{-z} E1(-z)],  z = (t - i b) / s.
    For b = 0 this is the plain two-sided exponential.
    """
    t = np.asarray(t_ps, dtype=float)
    s = float(scale_ps)
    if cauchy_ps == 0:
        return np.exp(-np.abs(t) / s) / (2 * s)
    z = (t - 1j * abs(cauchy_ps)) / s
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.exp(z) * exp1(z) - np.exp(-z) * exp1(-z)
    out = val.imag / (2 * math.pi * s)
    # far tails: e^{z} E1(z) ~ 1/z, result tends to the Cauchy density
    bad = ~np.isfinite(out)
    if np.any(bad):
        b = abs(cauchy_ps)
        out[bad] = b / (math.pi * (t[bad] ** 2 + b**2))
    return np.clip(out, 0.0, None)


def pair_offsets(state: BiphotonState, d_s: DispersionElement, d_i: DispersionElement):
    """Per-sideband centre delay (ps) and Cauchy broadening scale (ps).

    Within one resonance the signal and idler detunings are anticorrelated,
    so the arrival difference moves by -(slope_s + slope_i) * Omega/2pi; with
    Lorentzian Omega this is a Cauchy spread of scale
    |slope_s + slope_i| * linewidth/2.
    """
    centers = []
    for k in state.ks:
        nu_s, nu_i = resonance_frequencies(state.params, k)
        centers.append(d_s.delay_ps(nu_s) - d_i.delay_ps(nu_i))
    spread = abs(d_s.slope_ps_per_hz + d_i.slope_ps_per_hz) * state.params.linewidth_hz / 2
    return np.asarray(centers, dtype=float), float(spread)


def dispersed_correlation(state: BiphotonState, d_s: DispersionElement,
                          d_i: DispersionElement, delays_ps: Sequence[float],
                          label: str = "") -> CorrelationCurve:
    """Probability density (per ps) of t_s - t_i after dispersing both arms."""
    t = np.asarray(delays_ps, dtype=float)
    centers, spread = pair_offsets(state, d_s, d_i)
    scale = 1.0 / (2.0 * state.params.gamma) / 1e-12
    total = np.zeros_like(t)
    for w, c in zip(state.weights.weights, centers):
        if w > 0:
            total += w * laplace_cauchy_density(t - c, scale, spread)
    return CorrelationCurve(t, total, label)


def peak_positions(curve: CorrelationCurve, min_prominence: float) -> list[tuple[float, float]]:
    """Local maxima above ``min_prominence``, refined by a parabola through 3 samples."""
    if not min_prominence > 0:
        raise ValueError("min_prominence must be > 0")
    x, y = curve.delays_ps, curve.values
    idx, _ = sps.find_peaks(y, prominence=min_prominence)
    out = []
    for i in idx:
        if 0 < i < len(y) - 1:
            y0, y1, y2 = y[i - 1], y[i], y[i + 1]
            denom = y0 - 2 * y1 + y2
            frac = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
            frac = min(max(frac, -0.5), 0.5)
            step = x[i + 1] - x[i] if frac > 0 else x[i] - x[i - 1]
            out.append((float(x[i] + frac * step), float(y1 - 0.25 * (y0 - y2) * frac)))
        else:
            out.append((float(x[i]), float(y[i])))
    return sorted(out)


def assign_peaks(peaks: list[tuple[float, float]], state: BiphotonState,
                 d_s: DispersionElement, d_i: DispersionElement):
    """Order peaks by populated sideband: each predicted centre takes the nearest peak."""
    centers, _ = pair_offsets(state, d_s, d_i)
    out = []
    for c, w in zip(centers, state.weights.weights):
        if w <= 0:
            continue
        j = int(np.argmin([abs(p[0] - c) for p in peaks]))
        out.append(peaks[j])
    return out


def peak_areas(hist, centers_ps: Sequence[float], window_ps: float) -> np.ndarray:
    """Histogram counts summed within +-window/2 of each centre."""
    c = hist.centers_ps
    counts = np.asarray(hist.counts, dtype=float)
    return np.array([counts[np.abs(c - x0) <= window_ps / 2].sum() for x0 in centers_ps])


@dataclass(frozen=True)
class MappingRecord:
    k: int
    jsi_diag: float
    peak_height: float
    ratio: float
    consistent: bool


def frequency_time_map_check(jsi: JsiMatrix, peaks: Sequence, rel_err=None,
                             n_sigma: float = 3.0) -> list[MappingRecord]:
    """Compare the JSI diagonal with dispersed peak heights, both max-normalized.

    ``peaks`` are heights (or (delay, height) tuples) in sideband order.
    ``rel_err`` is the 1-sigma relative uncertainty of each ratio (scalar or
    per entry); without it every record is reported as consistent.
    """
    heights = np.array([p[1] if isinstance(p, (tuple, list)) else p for p in peaks], dtype=float)
    diag = np.diag(jsi.values).astype(float)
    if len(heights) != len(diag):
        raise ValueError(f"{len(heights)} peaks for {len(diag)} JSI diagonal entries")
    if diag.max() <= 0 or heights.max() <= 0:
        raise ValueError("cannot normalize an all-zero diagonal or peak list")
    dn = diag / diag.max()
    hn = heights / heights.max()
    errs = np.broadcast_to(np.asarray(rel_err if rel_err is not None else np.inf, float), dn.shape)
    out = []
    for k, a, b, e in zip(jsi.ks, dn, hn, errs):
        ratio = b / a if a > 0 else math.inf
        out.append(MappingRecord(k, float(a), float(b), float(ratio),
                                 bool(abs(ratio - 1.0) <= n_sigma * e)))
    return out


def peaks_to_csv(peaks: Sequence[tuple[float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delay_ns", "height"])
    for d, h in peaks:
        w.writerow([repr(d / 1e3), repr(h)])
    return buf.getvalue()
