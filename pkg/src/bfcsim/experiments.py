"""Named experiments reproducing the comb measurements, writing CSV/SVG artifacts."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import franson as fr
from .config import ExperimentConfig
from .correlator import car, cross_correlate, measure_jsi
from .dispersion import (NO_DISPERSION, assign_peaks, dispersed_correlation, peak_areas,
                         peak_positions, peaks_to_csv)
from .events import Arm, simulate
from .schmidt import simulate_schmidt_pipeline
from .spectral import equalize_weights
from .state import BiphotonState, CorrelationCurve, correlation_fwhm, temporal_correlation
from .svg import Style, heat_map, line_plot

log = logging.getLogger(__name__)

Artifacts = dict[str, str]


def _hist_curve(hist) -> CorrelationCurve:
    return CorrelationCurve(hist.centers_ps, np.asarray(hist.counts, float))


def _summary(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def run_correlate(cfg: ExperimentConfig, workers: int = 1) -> Artifacts:
    state = BiphotonState(cfg.ring)
    k = cfg.tia.sideband
    sig, idl = simulate(state, cfg.source, Arm(cfg.signal, (k,)), Arm(cfg.idler, (k,)),
                        workers=workers)
    hist = cross_correlate(sig, idl, cfg.tia.bin_ps, cfg.tia.range_ps)
    curve = _hist_curve(hist)
    analytic = temporal_correlation(state, k, hist.centers_ps)
    name = f"S{k}I{k}"
    peak = int(np.argmax(hist.counts))
    summary = {
        "pair": name,
        "car": car(hist, cfg.tia.window_ps),
        "peak_delay_ps": float(hist.centers_ps[peak]),
        "fwhm_ps": correlation_fwhm(curve),
        "analytic_fwhm_ps": math.log(2) / cfg.ring.gamma * 1e12,
        "n_signal": hist.n_signal,
        "n_idler": hist.n_idler,
    }
    scaled = analytic.values * hist.counts.max()
    return {
        f"correlation_{name}.csv": hist.to_csv(),
        f"correlation_{name}_analytic.csv": analytic.to_csv(),
        f"correlation_{name}.svg": line_plot(
            [(hist.centers_ps / 1e3, hist.counts), (hist.centers_ps / 1e3, scaled)],
            Style(f"Time correlation {name}", "delay (ns)", "coincidences", ["measured", "model"])),
        f"correlation_{name}_summary.json": _summary(summary),
    }


def run_jsi(cfg: ExperimentConfig, workers: int = 1) -> Artifacts:
    state = BiphotonState(cfg.ring)
    kr = cfg.schmidt.k_range
    jsi = measure_jsi(state, cfg.source, cfg.channels, kr, cfg.tia.window_ps,
                      bin_width_ps=cfg.tia.bin_ps, range_ps=cfg.tia.range_ps, workers=workers)
    car_csv = replace(jsi, values=np.where(np.isfinite(jsi.car), jsi.car, 0.0)).to_csv()
    return {
        "jsi.csv": jsi.to_csv(),
        "jsi_car.csv": car_csv,
        "jsi.svg": heat_map(jsi.values, jsi.ks, jsi.ks,
                            Style("Joint spectral intensity", "idler sideband", "signal sideband")),
        "jsi_summary.json": _summary({"offdiag_energy_ratio": jsi.offdiag_ratio(),
                                      "k_range": list(kr)}),
    }


def _franson_state(cfg: ExperimentConfig) -> BiphotonState:
    state = BiphotonState(cfg.ring)
    return state.with_weights(equalize_weights(state.weights, cfg.franson.sidebands))


def _mc_grid(span_fs: float, n: int) -> np.ndarray:
    return np.linspace(-span_fs / 2, span_fs / 2, n)


def run_franson_common(cfg: ExperimentConfig, workers: int = 1) -> Artifacts:
    sec = cfg.franson
    state = _franson_state(cfg)
    base = fr.FransonConfig.at_crest(state, sec.cfg.tau_s_ns, 0.0, sec.cfg.base_visibility,
                                     pump_coherence_ns=sec.cfg.pump_coherence_ns)
    n = int(round(sec.common_span_fs / sec.common_step_fs)) + 1
    grid = np.linspace(-sec.common_span_fs / 2, sec.common_span_fs / 2, n)
    scan = fr.fringe_scan(state, base, fr.COMMON_DELAY, grid)
    period, period_err = fr.fit_fringe_period(scan)
    vis = fr.fit_visibility(scan)
    out = {"franson_common.csv": scan.to_csv()}
    summary = {
        "analytic_period_fs": scan.period_fs,
        "fitted_period_fs": period,
        "fitted_period_stderr_fs": period_err,
        "visibility": vis.visibility,
        "bell_witness": fr.bell_witness(vis.visibility),
    }
    series = [(scan.delays_fs, scan.coincidences)]
    if sec.mc_points > 0:
        src = replace(cfg.source, duration=sec.mc_duration)
        mc = fr.mc_fringe_scan(state, src, cfg.channels, base, fr.COMMON_DELAY,
                               _mc_grid(sec.common_span_fs, sec.mc_points), cfg.source.seed,
                               cfg.tia.window_ps, workers=workers)
        mcv = fr.fit_visibility(mc)
        summary.update(mc_visibility=mcv.visibility, mc_visibility_stderr=mcv.stderr)
        out["franson_common_mc.csv"] = mc.to_csv()
        series.append((mc.delays_fs, mc.coincidences / max(mc.coincidences.max(), 1.0)))
    out["franson_common.svg"] = line_plot(
        series, Style("Franson fringes, common delay", "delay offset (fs)", "coincidences (norm.)",
                      ["model", "Monte Carlo"]))
    out["franson_common_summary.json"] = _summary(summary)
    return out


def run_franson_taud(cfg: ExperimentConfig, workers: int = 1) -> Artifacts:
    sec = cfg.franson
    state = _franson_state(cfg)
    base = fr.FransonConfig.at_crest(state, sec.cfg.tau_s_ns, 0.0, sec.cfg.base_visibility,
                                     pump_coherence_ns=sec.cfg.pump_coherence_ns)
    n = int(round((sec.taud_stop_ps - sec.taud_start_ps) * 1e3 / sec.taud_step_fs)) + 1
    grid = np.linspace(sec.taud_start_ps * 1e3, sec.taud_stop_ps * 1e3, n)
    scan = fr.fringe_scan(state, base, fr.TAU_D, grid)
    env_curve = CorrelationCurve(grid, scan.visibility)
    revivals = peak_positions(env_curve, 0.05 * sec.cfg.base_visibility)
    pos = [p[0] for p in revivals]
    summary = {
        "carrier_period_fs": scan.period_fs,
        "revival_positions_fs": pos,
        "revival_period_ps": float(np.mean(np.diff(pos))) / 1e3 if len(pos) > 1 else None,
        "expected_revival_period_ps": 1e12 / cfg.ring.fsr_hz,
        "central_lobe_width_ps": fr.envelope_lobe_width(state),
    }
    v0 = sec.cfg.base_visibility
    env = np.abs(fr.coherence_function(state, grid * 1e-15))
    out = {
        "franson_taud.csv": scan.to_csv(),
        "franson_taud.svg": line_plot(
            [(grid / 1e3, scan.coincidences), (grid / 1e3, 0.5 * (1 + v0 * env)),
             (grid / 1e3, 0.5 * (1 - v0 * env))],
            Style("Franson fringes vs tau_d", "tau_d (ps)", "coincidence probability",
                  ["fringes", "envelope"])),
    }
    if sec.mc_points > 0:
        src = replace(cfg.source, duration=sec.mc_duration)
        span = 4 * scan.period_fs
        mc = fr.mc_fringe_scan(state, src, cfg.channels, base, fr.TAU_D,
                               _mc_grid(span, sec.mc_points), cfg.source.seed, cfg.tia.window_ps,
                               workers=workers)
        mcv = fr.fit_visibility(mc)
        summary.update(mc_visibility=mcv.visibility, mc_visibility_stderr=mcv.stderr)
        out["franson_taud_mc.csv"] = mc.to_csv()
    out["franson_taud_summary.json"] = _summary(summary)
    return out


def run_dispersion(cfg: ExperimentConfig, workers: int = 1) -> Artifacts:
    sec = cfg.dispersion
    state = BiphotonState(cfg.ring)
    sb = tuple(range(sec.sidebands[0], sec.sidebands[1] + 1))
    # restrict the analytic model to the passband
    w = np.array([state.weights[k] if k in sb else 0.0 for k in state.ks])
    sub_state = state.with_weights(type(state.weights)(state.ks, w))
    cases = {
        "none": (NO_DISPERSION, NO_DISPERSION),
        "signal": (sec.signal, NO_DISPERSION),
        "idler": (NO_DISPERSION, sec.idler),
        "both": (sec.signal, sec.idler),
    }
    out: Artifacts = {}
    summary = {}
    series = []
    for j, (name, (d_s, d_i)) in enumerate(cases.items()):
        src = replace(cfg.source, seed=cfg.source.seed + j)
        sig, idl = simulate(state, src, Arm(cfg.signal, sb, d_s), Arm(cfg.idler, sb, d_i),
                            workers=workers)
        hist = cross_correlate(sig, idl, sec.bin_ps, sec.range_ns * 1e3)
        curve = _hist_curve(hist)
        peaks = peak_positions(curve, 0.2 * max(curve.values.max(), 1.0))
        analytic = dispersed_correlation(sub_state, d_s, d_i, hist.centers_ps)
        out[f"dispersion_{name}.csv"] = hist.to_csv()
        out[f"dispersion_{name}_analytic.csv"] = analytic.to_csv()
        out[f"dispersion_{name}_peaks.csv"] = peaks_to_csv(peaks)
        entry = {"n_peaks": len(peaks), "peak_delays_ns": [p[0] / 1e3 for p in peaks]}
        if len(peaks) > 1:
            entry["mean_spacing_ns"] = float(np.mean(np.diff([p[0] for p in peaks]))) / 1e3
        if len(peaks) == len(sb):
            ordered = assign_peaks(peaks, sub_state, d_s, d_i)
            entry["peak_areas"] = peak_areas(hist, [p[0] for p in ordered], cfg.tia.window_ps).tolist()
        summary[name] = entry
        series.append((hist.centers_ps / 1e3, hist.counts))
    out["dispersion.svg"] = line_plot(
        series, Style("Nonlocal dispersion cancellation", "delay (ns)", "coincidences",
                      list(cases)))
    out["dispersion_summary.json"] = _summary(summary)
    return out


def run_schmidt(cfg: ExperimentConfig, workers: int = 1) -> Artifacts:
    state = BiphotonState(cfg.ring)
    src = cfg.source
    if cfg.schmidt.duration is not None:
        src = replace(src, duration=cfg.schmidt.duration)
    if cfg.schmidt.pair_rate is not None:
        src = replace(src, pair_rate=cfg.schmidt.pair_rate)
    res = simulate_schmidt_pipeline(state, src, cfg.channels, cfg.schmidt.k_range, src.seed,
                                    window_ps=cfg.tia.window_ps, bin_width_ps=cfg.tia.bin_ps,
                                    range_ps=cfg.tia.range_ps, workers=workers)
    text = (f"K_min = {res.k_min!r}\n"
            f"K_diag = {res.k_diag!r}\n"
            f"bits = {res.full.effective_bits!r}\n"
            f"coefficients = {' '.join(repr(float(c)) for c in res.full.coefficients)}\n")
    return {"schmidt.txt": text, "jsi_raw.csv": res.jsi.to_csv()}


EXPERIMENTS: dict[str, Callable[[ExperimentConfig], Artifacts]] = {
    "correlate": run_correlate,
    "jsi": run_jsi,
    "franson_common": run_franson_common,
    "franson_taud": run_franson_taud,
    "dispersion": run_dispersion,
    "schmidt": run_schmidt,
}
ALL = "all"


def run(cfg: ExperimentConfig, experiment: str, out_dir, workers: int = 1) -> dict:
    """Run one experiment (or ``all``), write its files, then the manifest."""
    if experiment != ALL and experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}")
    names = list(EXPERIMENTS) if experiment == ALL else [experiment]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda n: EXPERIMENTS[n](cfg, workers), names))
    else:
        results = [EXPERIMENTS[n](cfg, workers) for n in names]
    files = {}
    for arts in results:
        for fname, text in sorted(arts.items()):
            data = text.encode()
            (out / fname).write_bytes(data)
            files[fname] = hashlib.sha256(data).hexdigest()
    digest = hashlib.sha256()
    digest.update(cfg.sha256.encode())
    digest.update(str(cfg.source.seed).encode())
    for fname in sorted(files):
        digest.update(f"{fname}:{files[fname]}".encode())
    manifest = {
        "config_sha256": cfg.sha256,
        "seed": cfg.source.seed,
        "experiments": names,
        "outputs": dict(sorted(files.items())),
        "artifact_set_sha256": digest.hexdigest(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
