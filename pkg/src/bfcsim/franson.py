"""Franson two-photon interference for a multi-sideband biphoton comb.

Post-selected coincidence probability (central peak only):

    C = 1/2 * [1 + V0 * Re(exp(i*2*w_p*tau_s) * E(tau_d))]
    E(tau_d) = exp(-Gamma*|tau_d|) * sum_k w_k * exp(i*w_idler_k*tau_d)

with tau_d = tau_i - tau_s. The sum over sidebands produces envelope nulls
and revivals every 1/FSR; the exponential is the single-resonance decay.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, curve_fit

from .correlator import count_coincidences, derive_seed
from .events import Arm, ChannelConfig, PairBatch, SourceConfig, simulate
from .state import BiphotonState

BELL_THRESHOLD = 1.0 / math.sqrt(2.0)

# minimum ratio of MZI imbalance to single-photon coherence time 1/(pi*linewidth)
MIN_IMBALANCE_FACTOR = 5.0
# maximum ratio of MZI imbalance to pump coherence time
MAX_PUMP_FRACTION = 0.1

COMMON_DELAY = "common_delay"
TAU_D = "tau_d"


@dataclass(frozen=True)
class FransonConfig:
    tau_s_ns: float = 6.0
    tau_i_ns: float = 6.0
    base_visibility: float = 1.0
    pump_coherence_ns: float = 1000.0

    def __post_init__(self):
        if not 0.0 <= self.base_visibility <= 1.0:
            raise ValueError("base_visibility must be in [0, 1]")
        if not self.pump_coherence_ns > 0:
            raise ValueError("pump_coherence_ns must be > 0")

    @property
    def tau_d_ns(self) -> float:
        return self.tau_i_ns - self.tau_s_ns

    def check(self, state: BiphotonState) -> None:
        """Reject imbalances that allow single-photon interference or lose pump coherence."""
        t_single_ns = 1e9 / (math.pi * state.params.linewidth_hz)
        for name, tau in (("tau_s_ns", self.tau_s_ns), ("tau_i_ns", self.tau_i_ns)):
            if tau <= MIN_IMBALANCE_FACTOR * t_single_ns:
                raise ValueError(
                    f"{name}={tau} ns must exceed {MIN_IMBALANCE_FACTOR}x the single-photon "
                    f"coherence time ({MIN_IMBALANCE_FACTOR * t_single_ns:.3g} ns)"
                )
            if tau >= MAX_PUMP_FRACTION * self.pump_coherence_ns:
                raise ValueError(
                    f"{name}={tau} ns must stay well below the pump coherence time "
                    f"({self.pump_coherence_ns} ns)"
                )

    @classmethod
    def at_crest(cls, state: BiphotonState, near_ns: float = 6.0, tau_d_fs: float = 0.0,
                 base_visibility: float = 1.0, offset_rad: float = 0.0, **kw) -> "FransonConfig":
        """Imbalance near ``near_ns`` with 2*w_p*tau_s = offset (mod 2 pi)."""
        two_nu = 2.0 * state.params.pump_freq
        n = round(near_ns * 1e-9 * two_nu)
        tau_s = (n + offset_rad / (2 * math.pi)) / two_nu * 1e9
        return cls(tau_s, tau_s + tau_d_fs * 1e-6, base_visibility, **kw)


def idler_freqs(state: BiphotonState) -> np.ndarray:
    p = state.params
    return p.pump_freq - np.asarray(state.ks) * p.fsr_hz


def mean_idler_freq(state: BiphotonState) -> float:
    return float(np.dot(state.weights.weights, idler_freqs(state)))


def _comb_sum(state: BiphotonState, tau_d_s) -> np.ndarray:
    """sum_k w_k exp(i*w_idler_k*tau_d), without the single-resonance decay."""
    tau = np.asarray(tau_d_s, dtype=float)
    phases = 2 * math.pi * np.multiply.outer(tau, idler_freqs(state))
    return np.exp(1j * phases) @ state.weights.weights


def coherence_function(state: BiphotonState, tau_d_s) -> np.ndarray:
    """E(tau_d) for tau_d in seconds."""
    tau = np.asarray(tau_d_s, dtype=float)
    return np.exp(-state.params.gamma * np.abs(tau)) * _comb_sum(state, tau)


def envelope(state: BiphotonState, tau_d_ps):
    """|E(tau_d)|, tau_d in ps."""
    out = np.abs(coherence_function(state, np.asarray(tau_d_ps, dtype=float) * 1e-12))
    return float(out) if np.ndim(out) == 0 else out


def _rate(state: BiphotonState, tau_s_s, tau_d_s, v0: float) -> np.ndarray:
    cycles = 2.0 * state.params.pump_freq * np.asarray(tau_s_s, dtype=float)
    pump_term = np.exp(2j * math.pi * np.mod(cycles, 1.0))
    return 0.5 * (1.0 + v0 * np.real(pump_term * coherence_function(state, tau_d_s)))


def coincidence_rate(state: BiphotonState, cfg: FransonConfig) -> float:
    """Normalized post-selected coincidence probability in [0, 1]."""
    cfg.check(state)
    return float(_rate(state, cfg.tau_s_ns * 1e-9, cfg.tau_d_ns * 1e-9, cfg.base_visibility))


def bell_witness(visibility: float) -> bool:
    """True when a two-photon visibility exceeds the 1/sqrt(2) Bell-type threshold."""
    return visibility > BELL_THRESHOLD


def envelope_lobe_width(state: BiphotonState, level: float = 0.5) -> float:
    """Full width (ps) of the central envelope lobe at ``level`` of its peak."""
    fsr_period_ps = 1e12 / state.params.fsr_hz
    grid = np.linspace(0.0, fsr_period_ps / 2, 4001)
    env = envelope(state, grid)
    below = np.nonzero(env < level)[0]
    if len(below) == 0:
        raise ValueError(f"envelope stays above {level} over half a revival period")
    j = below[0]
    t = brentq(lambda x: envelope(state, x) - level, grid[j - 1], grid[j], xtol=1e-12)
    return 2.0 * t


@dataclass
class FringeScan:
    axis: str
    delays_fs: np.ndarray
    coincidences: np.ndarray
    visibility: Optional[np.ndarray] = None
    carrier_hz: float = math.nan

    def __post_init__(self):
        if self.axis not in (COMMON_DELAY, TAU_D):
            raise ValueError(f"unknown scan axis {self.axis!r}")
        self.delays_fs = np.asarray(self.delays_fs, dtype=float)
        self.coincidences = np.asarray(self.coincidences, dtype=float)
        if len(self.delays_fs) > 1 and np.any(np.diff(self.delays_fs) <= 0):
            raise ValueError("scan delays must be increasing")

    @property
    def period_fs(self) -> float:
        return 1e15 / self.carrier_hz

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        has_v = self.visibility is not None
        w.writerow(["delay_fs", "coincidences"] + (["visibility"] if has_v else []))
        for j, (d, c) in enumerate(zip(self.delays_fs.tolist(), self.coincidences.tolist())):
            row = [repr(d), repr(c)]
            if has_v:
                row.append(repr(float(self.visibility[j])))
            w.writerow(row)
        return buf.getvalue()


def _scan_taus(cfg: FransonConfig, axis: str, grid_fs):
    g = np.asarray(grid_fs, dtype=float) * 1e-15
    tau_s = cfg.tau_s_ns * 1e-9
    if axis == COMMON_DELAY:
        return tau_s + g, np.full_like(g, cfg.tau_d_ns * 1e-9)
    if axis == TAU_D:
        return np.full_like(g, tau_s), g
    raise ValueError(f"unknown scan axis {axis!r}")


def scan_carrier(state: BiphotonState, axis: str) -> float:
    if axis == COMMON_DELAY:
        return 2.0 * state.params.pump_freq
    return mean_idler_freq(state)


def fringe_scan(state: BiphotonState, cfg: FransonConfig, axis: str,
                grid_fs: Sequence[float]) -> FringeScan:
    """Analytic coincidence scan.

    ``common_delay``: both imbalances move together by the grid offset, tau_d
    stays at the template value. ``tau_d``: tau_s is held at the template
    value and the grid gives tau_d directly.
    """
    if len(grid_fs) == 0:
        raise ValueError("scan grid is empty")
    cfg.check(state)
    tau_s, tau_d = _scan_taus(cfg, axis, grid_fs)
    rate = _rate(state, tau_s, tau_d, cfg.base_visibility)
    vis = cfg.base_visibility * np.abs(coherence_function(state, tau_d))
    return FringeScan(axis, np.asarray(grid_fs, float), rate, vis, scan_carrier(state, axis))


@dataclass(frozen=True)
class VisibilityFit:
    visibility: float
    phase: float
    stderr: float
    offset: float


def fit_visibility(scan: FringeScan, window: Optional[tuple[int, int]] = None,
                   carrier_hz: Optional[float] = None) -> VisibilityFit:
    """Least-squares sinusoid at the known carrier over scan[window[0]:window[1]]."""
    i0, i1 = window if window is not None else (0, len(scan.delays_fs))
    x = scan.delays_fs[i0:i1] * 1e-15
    y = scan.coincidences[i0:i1]
    f = carrier_hz if carrier_hz is not None else scan.carrier_hz
    if not np.isfinite(f) or f <= 0:
        raise ValueError("scan has no carrier frequency")
    if len(x) < 4 or (x[-1] - x[0]) * f < 2.0 * (1 - 1e-9):
        raise ValueError("fit window must span at least two fringe periods")
    X = np.column_stack([np.ones_like(x), np.cos(2 * math.pi * f * x), np.sin(2 * math.pi * f * x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    a, b, c = coef
    if a <= 0:
        raise ValueError("degenerate fit: non-positive offset")
    amp = math.hypot(b, c)
    vis = amp / a
    dof = len(x) - 3
    resid = y - X @ coef
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.pinv(X.T @ X)
        if amp > 0:
            grad = np.array([-amp / a**2, b / (amp * a), c / (amp * a)])
        else:
            grad = np.array([0.0, 1.0 / a, 0.0])
        stderr = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    else:
        stderr = math.nan
    return VisibilityFit(float(vis), float(math.atan2(-c, b)), stderr, float(a))


def fit_fringe_period(scan: FringeScan, window: Optional[tuple[int, int]] = None) -> tuple[float, float]:
    """Free-frequency sinusoid fit; returns (period_fs, stderr_fs)."""
    i0, i1 = window if window is not None else (0, len(scan.delays_fs))
    x = scan.delays_fs[i0:i1]
    y = scan.coincidences[i0:i1]
    dx = np.diff(x)
    if not np.allclose(dx, dx[0], rtol=1e-6):
        raise ValueError("period fit needs a uniform grid")
    # coarse guess from the zero-padded spectrum
    n_fft = 16 * len(x)
    power = np.abs(np.fft.rfft(y - y.mean(), n_fft))
    freqs = np.fft.rfftfreq(n_fft, dx[0])
    f0 = freqs[int(np.argmax(power[1:])) + 1]

    def model(xx, a, b, c, f):
        return a + b * np.cos(2 * math.pi * f * xx) + c * np.sin(2 * math.pi * f * xx)

    popt, pcov = curve_fit(model, x - x[0], y, p0=[y.mean(), y.std(), 0.0, f0])
    f = popt[3]
    return float(1.0 / f), float(math.sqrt(abs(pcov[3, 3])) / f**2)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def franson_hook(state: BiphotonState, cfg: FransonConfig):
    """Pair hook for the event engine: path choice, post-selection, interference.

    A pair with both photons detected lands in a satellite peak (|SL>, |LS>)
    with probability 1/2. Otherwise it is registered at the monitored ports
    with probability C evaluated at the pair's own idler frequency; a
    non-registered pair leaves through the unmonitored ports. Lone photons
    take a random path.
    """
    p = state.params
    v0 = cfg.base_visibility
    tau_s = cfg.tau_s_ns * 1e-9
    tau_d = cfg.tau_d_ns * 1e-9
    pump_cycles = float(np.mod(2.0 * p.pump_freq * tau_s, 1.0))
    shift_s_ps = cfg.tau_s_ns * 1e3
    shift_i_ps = cfg.tau_i_ns * 1e3

    def hook(pairs: PairBatch, keep_s, keep_i, rng):
        n = len(pairs)
        u_sat, u_path, u_int = rng.uniform(size=(3, n))
        both = keep_s & keep_i
        satellite = both & (u_sat < 0.5)
        central = both & ~satellite
        nu_i = p.pump_freq - pairs.k * p.fsr_hz - pairs.detuning / (2 * math.pi)
        cycles = pump_cycles + np.mod(nu_i * tau_d, 1.0)
        c = 0.5 * (1.0 + v0 * np.cos(2 * math.pi * cycles))
        lost = central & (u_int >= c)
        long_s = u_path < 0.5
        long_i = np.where(satellite, ~long_s, long_s)
        return (keep_s & ~lost, keep_i & ~lost,
                np.where(long_s, shift_s_ps, 0.0), np.where(long_i, shift_i_ps, 0.0))

    return hook


def mc_franson(state: BiphotonState, src: SourceConfig,
               channels: tuple[ChannelConfig, ChannelConfig], cfg: FransonConfig,
               seed: int, window_ps: float = 2000.0, *,
               sidebands: Optional[Sequence[int]] = None, workers: int = 1) -> int:
    """Central-peak coincidence count for one interferometer setting."""
    cfg.check(state)
    if window_ps >= min(cfg.tau_s_ns, cfg.tau_i_ns) * 1e3:
        raise ValueError("coincidence window must be shorter than the MZI imbalance")
    sb = tuple(sidebands) if sidebands is not None else None
    sig, idl = simulate(state, replace(src, seed=int(seed)), Arm(channels[0], sb),
                        Arm(channels[1], sb), hook=franson_hook(state, cfg), workers=workers)
    return count_coincidences(sig, idl, -window_ps / 2, window_ps / 2)


def mc_fringe_scan(state: BiphotonState, src: SourceConfig,
                   channels: tuple[ChannelConfig, ChannelConfig], cfg: FransonConfig,
                   axis: str, grid_fs: Sequence[float], seed: int,
                   window_ps: float = 2000.0, workers: int = 1) -> FringeScan:
    """Monte Carlo counterpart of ``fringe_scan``; point j uses seed (seed, j)."""
    tau_s, tau_d = _scan_taus(cfg, axis, grid_fs)
    counts = []
    for j, (ts, td) in enumerate(zip(tau_s, tau_d)):
        point = replace(cfg, tau_s_ns=ts * 1e9, tau_i_ns=(ts + td) * 1e9)
        counts.append(mc_franson(state, src, channels, point, derive_seed(seed, j),
                                 window_ps, workers=workers))
    return FringeScan(axis, np.asarray(grid_fs, float), np.asarray(counts, float),
                      None, scan_carrier(state, axis))
