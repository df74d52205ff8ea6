"""Schmidt decomposition of a measured JSI.

Only intensities are measured, so the joint amplitude is taken as the
element-wise square root of the JSI with all phases set to zero. Any phase
structure can only raise the true Schmidt number, which makes the value
computed here a lower bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .correlator import measure_jsi
from .events import ChannelConfig, SourceConfig
from .state import BiphotonState, JsiMatrix

log = logging.getLogger(__name__)

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def jacobi_svd(a: np.ndarray, tol: float = JACOBI_TOL):
    """One-sided (Hestenes) Jacobi SVD of a real matrix.

    Columns are rotated pairwise until they are mutually orthogonal: a pair
    is left alone once its overlap is at rounding level, and iteration stops
    when a sweep rotates nothing and the off-diagonal Frobenius mass of
    A^T A (relative to |A|_F^4, i.e. absolute for a normalized amplitude
    matrix) is below ``tol``. Returns (U, s, Vt), s in descending order.
    """
    a = np.array(a, dtype=float)
    transposed = a.shape[0] < a.shape[1]
    if transposed:
        a = a.T
    m, n = a.shape
    u = a.copy()
    v = np.eye(n)
    scale = max(float(np.sum(a * a)) ** 2, np.finfo(float).tiny)
    eps = 4 * np.finfo(float).eps
    # columns this small are rounding noise of a rank-deficient input
    null = (eps**2) * math.sqrt(scale)
    for _ in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = u[:, p] @ u[:, p]
                beta = u[:, q] @ u[:, q]
                gamma = u[:, p] @ u[:, q]
                if min(alpha, beta) <= null or abs(gamma) <= eps * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                up, uq = u[:, p].copy(), u[:, q].copy()
                u[:, p] = c * up - s * uq
                u[:, q] = s * up + c * uq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            g = u.T @ u
            off = float(np.sum(g**2) - np.sum(np.diag(g) ** 2))
            if off <= tol * scale:
                break
    else:
        raise RuntimeError("Jacobi SVD did not converge")
    sv = np.linalg.norm(u, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv = sv[order]
    v = v[:, order]
    u = u[:, order]
    nz = sv > 0
    u[:, nz] = u[:, nz] / sv[nz]
    if transposed:
        return v, sv, u.T
    return u, sv, v.T


@dataclass(frozen=True)
class SchmidtResult:
    coefficients: np.ndarray
    schmidt_number: float

    @property
    def effective_bits(self) -> float:
        return math.log2(self.schmidt_number)

    def to_text(self) -> str:
        coeffs = " ".join(repr(float(c)) for c in self.coefficients)
        return (f"schmidt_number = {self.schmidt_number!r}\n"
                f"effective_bits = {self.effective_bits!r}\n"
                f"coefficients = {coeffs}\n")


def _values(jsi) -> np.ndarray:
    v = np.asarray(jsi.values if isinstance(jsi, JsiMatrix) else jsi, dtype=float)
    if np.any(v < 0):
        log.warning("clamping %d negative JSI cells to zero", int(np.sum(v < 0)))
        v = np.clip(v, 0.0, None)
    return v


def schmidt_decompose(jsi) -> SchmidtResult:
    """Schmidt coefficients and number K = 1 / sum(lambda^2) of sqrt(JSI)."""
    v = _values(jsi)
    total = v.sum()
    if total <= 0:
        raise ValueError("JSI is all zero")
    amp = np.sqrt(v / total)
    _, s, _ = jacobi_svd(amp)
    lam = s**2
    lam = lam / lam.sum()
    return SchmidtResult(lam, float(1.0 / np.sum(lam**2)))


def diagonal_schmidt(jsi) -> SchmidtResult:
    """Schmidt analysis with every off-diagonal JSI cell set to zero."""
    v = _values(jsi)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError("diagonal analysis needs a square JSI")
    d = np.diag(v)
    if d.sum() <= 0:
        raise ValueError("JSI diagonal is all zero")
    return schmidt_decompose(np.diag(d))


@dataclass(frozen=True)
class SchmidtPipelineResult:
    jsi: JsiMatrix
    full: SchmidtResult
    diagonal: SchmidtResult

    @property
    def k_min(self) -> float:
        return self.full.schmidt_number

    @property
    def k_diag(self) -> float:
        return self.diagonal.schmidt_number


def simulate_schmidt_pipeline(state: BiphotonState, src: SourceConfig,
                              channels: tuple[ChannelConfig, ChannelConfig],
                              k_range: Sequence[int], seed: int, *,
                              window_ps: float = 2000.0, bin_width_ps: float = 100.0,
                              range_ps: float = 25_000.0, workers: int = 1) -> SchmidtPipelineResult:
    """Measure a raw JSI (accidentals kept) by Monte Carlo and decompose it."""
    jsi = measure_jsi(state, replace(src, seed=int(seed)), channels, k_range, window_ps,
                      bin_width_ps=bin_width_ps, range_ps=range_ps,
                      subtract_accidentals=False, workers=workers)
    return SchmidtPipelineResult(jsi, schmidt_decompose(jsi), diagonal_schmidt(jsi))
