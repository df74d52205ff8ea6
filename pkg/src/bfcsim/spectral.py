"""Microring resonance comb: resonance frequencies, lineshape, sideband weights.

Units follow the field names: wavelengths in nm, FSR in GHz, linewidth in MHz.
Derived quantities exposed as properties are SI (Hz, rad/s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

C_M_PER_S = 299_792_458.0

# linewidth / FSR ratio above which the comb is no longer a set of isolated resonances
MAX_FINESSE_RATIO = 0.01


@dataclass(frozen=True)
class Flat:
    """Equal weight on every sideband."""


@dataclass(frozen=True)
class Explicit:
    """User-supplied |alpha_k|^2 values (normalized on use)."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class LorentzianRolloff:
    """w_k proportional to 1 / (1 + (k/scale)^4)."""

    scale: float = 5.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"rolloff scale must be > 0, got {self.scale}")


WeightModel = Union[Flat, Explicit, LorentzianRolloff]


@dataclass(frozen=True)
class RingParams:
    pump_wavelength_nm: float = 1550.9
    fsr_ghz: float = 384.6
    linewidth_mhz: float = 270.0
    n_sidebands: int = 6
    min_sideband: int = 2
    weight_model: WeightModel = field(default_factory=Flat)

    def __post_init__(self):
        if not self.pump_wavelength_nm > 0:
            raise ValueError("pump_wavelength_nm must be > 0")
        if not self.fsr_ghz > 0:
            raise ValueError("fsr_ghz must be > 0")
        if not self.linewidth_mhz > 0:
            raise ValueError("linewidth_mhz must be > 0")
        ratio = self.linewidth_mhz * 1e6 / (self.fsr_ghz * 1e9)
        if ratio >= MAX_FINESSE_RATIO:
            raise ValueError(
                f"linewidth_mhz/fsr_ghz ratio {ratio:.3g} must be < {MAX_FINESSE_RATIO} (resolved resonances)"
            )
        if int(self.n_sidebands) != self.n_sidebands or self.n_sidebands < 1:
            raise ValueError("n_sidebands must be an integer >= 1")
        if int(self.min_sideband) != self.min_sideband or self.min_sideband < 1:
            raise ValueError("min_sideband must be an integer >= 1")

    @property
    def pump_freq(self) -> float:
        """Pump optical frequency in Hz."""
        return C_M_PER_S / (self.pump_wavelength_nm * 1e-9)

    @property
    def fsr_hz(self) -> float:
        return self.fsr_ghz * 1e9

    @property
    def linewidth_hz(self) -> float:
        return self.linewidth_mhz * 1e6

    @property
    def gamma(self) -> float:
        """Angular half-width of a resonance, rad/s (pi * FWHM)."""
        return math.pi * self.linewidth_hz

    @property
    def sideband_indices(self) -> np.ndarray:
        return np.arange(self.min_sideband, self.min_sideband + self.n_sidebands)


@dataclass(frozen=True)
class SidebandWeights:
    """Normalized pair weights w_k = |alpha_k|^2 for consecutive sidebands k."""

    ks: tuple[int, ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        ks = tuple(int(k) for k in self.ks)
        if w.ndim != 1 or len(w) != len(ks):
            raise ValueError("weights and ks must be 1-D and of equal length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must not all be zero")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.ks)

    def __getitem__(self, k: int) -> float:
        return float(self.weights[self.ks.index(k)])

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.ks, self.weights.tolist()))


def resonance_frequencies(params: RingParams, k: int) -> tuple[float, float]:
    """Signal and idler resonance frequencies (Hz) for sideband pair ``k``.

    ``k = 0`` is the pump resonance. Negative ``k`` swaps the roles of signal
    and idler. Pairs with ``0 < |k| < min_sideband`` sit inside the pump
    notch filter and are rejected.
    """
    k = int(k)
    if k != 0 and abs(k) < params.min_sideband:
        raise ValueError(
            f"sideband {k} is removed by the pump band-stop filter "
            f"(usable |k| >= {params.min_sideband})"
        )
    nu_p = params.pump_freq
    offset = k * params.fsr_hz
    return nu_p + offset, nu_p - offset


def lineshape(params: RingParams, detuning):
    """Complex Lorentzian field amplitude Gamma / (Gamma + i*Omega).

    ``detuning`` is an angular frequency offset (rad/s) from the resonance
    centre; scalars and arrays are accepted.
    """
    g = params.gamma
    return g / (g + 1j * np.asarray(detuning, dtype=float))


def sideband_weights(params: RingParams) -> SidebandWeights:
    ks = params.sideband_indices
    model = params.weight_model
    if isinstance(model, Flat):
        w = np.ones(len(ks))
    elif isinstance(model, LorentzianRolloff):
        w = 1.0 / (1.0 + (ks / model.scale) ** 4)
    elif isinstance(model, Explicit):
        if len(model.values) != params.n_sidebands:
            raise ValueError(
                f"explicit weights have length {len(model.values)}, "
                f"expected n_sidebands={params.n_sidebands}"
            )
        w = np.asarray(model.values, dtype=float)
        if np.any(w < 0):
            raise ValueError("explicit weights must be non-negative")
    else:
        raise TypeError(f"unknown weight model {model!r}")
    return SidebandWeights(tuple(ks.tolist()), w)


def equalize_weights(weights: SidebandWeights, subset: Iterable[int]) -> SidebandWeights:
    """Attenuate the ``subset`` sidebands down to their common minimum.

    Sidebands outside the subset are blocked. A pulse shaper only attenuates,
    so no weight is ever raised before renormalization.
    """
    subset = sorted(set(int(k) for k in subset))
    if not subset:
        raise ValueError("subset must not be empty")
    missing = [k for k in subset if k not in weights.ks]
    if missing:
        raise ValueError(f"sidebands {missing} not in {weights.ks}")
    idx = [weights.ks.index(k) for k in subset]
    floor = weights.weights[idx].min()
    if floor <= 0:
        raise ValueError("cannot equalize onto a sideband with zero weight")
    out = np.zeros(len(weights.ks))
    out[idx] = floor
    return SidebandWeights(weights.ks, out)
