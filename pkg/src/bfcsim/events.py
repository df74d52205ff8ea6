"""Monte Carlo photon-pair emission and single-photon detection.

Times inside the engine are float64 picoseconds. Random streams are keyed by
(seed, segment index), where a segment is a fixed slice of simulated time
(``SourceConfig.segment_duration``). Workers only decide which segments run
concurrently, so the merged output never depends on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, NamedTuple, Optional

import numpy as np

from .state import BiphotonState

SIGNAL = 0
IDLER = 1
CHANNEL_NAMES = {SIGNAL: "signal", IDLER: "idler"}

KIND_PAIR = 0
KIND_DARK = 1

PS = 1e-12

# little-endian record: u64 time (ps), u8 channel, u8 truth kind, i16 sideband
BINARY_DTYPE = np.dtype([("time", "<u8"), ("channel", "u1"), ("kind", "u1"), ("k", "<i2")])


@dataclass(frozen=True)
class SourceConfig:
    pair_rate: float
    duration: float
    seed: int = 0
    segment_duration: float = 1e-3

    def __post_init__(self):
        if not self.pair_rate > 0:
            raise ValueError("pair_rate must be > 0")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if not self.segment_duration > 0:
            raise ValueError("segment_duration must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def n_segments(self) -> int:
        return max(1, math.ceil(self.duration / self.segment_duration - 1e-9))

    def segment_bounds_ps(self, seg: int) -> tuple[float, float]:
        t0 = seg * self.segment_duration
        t1 = min(self.duration, (seg + 1) * self.segment_duration)
        return t0 / PS, t1 / PS


@dataclass(frozen=True)
class Gate:
    period_ps: float
    width_ps: float

    def __post_init__(self):
        if not self.period_ps > 0 or not self.width_ps > 0:
            raise ValueError("gate period and width must be > 0")
        if self.width_ps > self.period_ps:
            raise ValueError("gate width must not exceed the gate period")

    def open_at(self, t_ps: np.ndarray) -> np.ndarray:
        return np.mod(t_ps, self.period_ps) < self.width_ps


@dataclass(frozen=True)
class ChannelConfig:
    efficiency: float = 1.0
    dark_rate: float = 0.0
    jitter_ps: float = 0.0
    gate: Optional[Gate] = None

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be in [0, 1]")
        if self.dark_rate < 0:
            raise ValueError("dark_rate must be >= 0")
        if self.jitter_ps < 0:
            raise ValueError("jitter_ps must be >= 0")


@dataclass
class PairBatch:
    """Emitted pairs. ``detuning`` is the angular signal detuning Omega (rad/s)."""

    emission_ps: np.ndarray
    k: np.ndarray
    detuning: np.ndarray
    tau_rel_ps: np.ndarray
    pair_id: np.ndarray
    t_start_ps: float
    t_stop_ps: float

    def __len__(self):
        return len(self.emission_ps)

    @classmethod
    def concat(cls, batches: list["PairBatch"]) -> "PairBatch":
        return cls(
            np.concatenate([b.emission_ps for b in batches]),
            np.concatenate([b.k for b in batches]),
            np.concatenate([b.detuning for b in batches]),
            np.concatenate([b.tau_rel_ps for b in batches]),
            np.concatenate([b.pair_id for b in batches]),
            min(b.t_start_ps for b in batches),
            max(b.t_stop_ps for b in batches),
        )


class TimeTag(NamedTuple):
    time_ps: float
    channel: int
    kind: int
    pair_id: int
    k: int
    detuning: float


@dataclass
class TagStream:
    """A time-sorted detector record plus ground-truth annotations."""

    time_ps: np.ndarray
    channel: np.ndarray
    kind: np.ndarray
    pair_id: np.ndarray
    k: np.ndarray
    detuning: np.ndarray
    duration_ps: float

    def __len__(self):
        return len(self.time_ps)

    def __iter__(self) -> Iterator[TimeTag]:
        for row in zip(
            self.time_ps.tolist(), self.channel.tolist(), self.kind.tolist(),
            self.pair_id.tolist(), self.k.tolist(), self.detuning.tolist(),
        ):
            yield TimeTag(*row)

    @classmethod
    def empty(cls, channel: int, duration_ps: float) -> "TagStream":
        return cls(
            np.empty(0), np.full(0, channel, np.uint8), np.empty(0, np.uint8),
            np.empty(0, np.int64), np.empty(0, np.int16), np.empty(0), duration_ps,
        )

    def select(self, mask) -> "TagStream":
        return TagStream(
            self.time_ps[mask], self.channel[mask], self.kind[mask],
            self.pair_id[mask], self.k[mask], self.detuning[mask], self.duration_ps,
        )

    def sorted(self) -> "TagStream":
        order = np.argsort(self.time_ps, kind="stable")
        return self.select(order)

    def with_times(self, time_ps: np.ndarray) -> "TagStream":
        return TagStream(
            np.asarray(time_ps, dtype=float), self.channel, self.kind,
            self.pair_id, self.k, self.detuning, self.duration_ps,
        )

    @classmethod
    def concat(cls, streams: list["TagStream"]) -> "TagStream":
        return cls(
            np.concatenate([s.time_ps for s in streams]),
            np.concatenate([s.channel for s in streams]),
            np.concatenate([s.kind for s in streams]),
            np.concatenate([s.pair_id for s in streams]),
            np.concatenate([s.k for s in streams]),
            np.concatenate([s.detuning for s in streams]),
            max(s.duration_ps for s in streams),
        )

    def optical_frequency(self, state: BiphotonState) -> np.ndarray:
        """Exact optical frequency (Hz) of each photon tag; NaN for dark counts."""
        p = state.params
        sign = np.where(self.channel == SIGNAL, 1.0, -1.0)
        nu = p.pump_freq + sign * (self.k * p.fsr_hz + self.detuning / (2 * math.pi))
        return np.where(self.kind == KIND_PAIR, nu, np.nan)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_ps", "channel", "truth"])
        for tag in self:
            if tag.kind == KIND_DARK:
                truth = "dark"
            else:
                truth = f"pair:{tag.pair_id}:{tag.k}:{tag.detuning!r}"
            w.writerow([repr(tag.time_ps), CHANNEL_NAMES[tag.channel], truth])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, duration_ps: float = math.nan) -> "TagStream":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["time_ps", "channel", "truth"]:
            raise ValueError(f"unexpected header {rows[0]}")
        names = {v: k for k, v in CHANNEL_NAMES.items()}
        t, ch, kind, pid, k, det = [], [], [], [], [], []
        for time_s, chan, truth in rows[1:]:
            t.append(float(time_s))
            ch.append(names[chan])
            if truth == "dark":
                kind.append(KIND_DARK); pid.append(-1); k.append(0); det.append(0.0)
            else:
                _, a, b, c = truth.split(":")
                kind.append(KIND_PAIR); pid.append(int(a)); k.append(int(b)); det.append(float(c))
        return cls(
            np.array(t, float), np.array(ch, np.uint8), np.array(kind, np.uint8),
            np.array(pid, np.int64), np.array(k, np.int16), np.array(det, float),
            duration_ps,
        )

    def to_binary(self) -> bytes:
        rec = np.empty(len(self), dtype=BINARY_DTYPE)
        rec["time"] = np.rint(self.time_ps).astype(np.uint64)
        rec["channel"] = self.channel
        rec["kind"] = self.kind
        rec["k"] = self.k
        return rec.tobytes()

    @classmethod
    def from_binary(cls, data: bytes, duration_ps: float = math.nan) -> "TagStream":
        """Read binary records; pair ids and detunings are not stored and come back as -1/0."""
        rec = np.frombuffer(data, dtype=BINARY_DTYPE)
        n = len(rec)
        return cls(
            rec["time"].astype(float), rec["channel"].copy(), rec["kind"].copy(),
            np.full(n, -1, np.int64), rec["k"].astype(np.int16), np.zeros(n), duration_ps,
        )


# ---------------------------------------------------------------------------
# pair emission
# ---------------------------------------------------------------------------

def _segment_rngs(seed: int, seg: int, n: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(seg),))
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def _sample_pairs(state: BiphotonState, rate: float, t0_ps: float, t1_ps: float,
                  rng: np.random.Generator, id_base: int) -> PairBatch:
    span_s = (t1_ps - t0_ps) * PS
    n = int(rng.poisson(rate * span_s))
    emission = np.sort(rng.uniform(t0_ps, t1_ps, n))
    ks = np.asarray(state.ks)
    k = ks[rng.choice(len(ks), size=n, p=state.weights.weights)].astype(np.int16)
    gamma = state.params.gamma
    # Lorentzian detuning by inverse CDF
    detuning = gamma * np.tan(np.pi * (rng.uniform(size=n) - 0.5))
    # two-sided exponential with rate 2*Gamma
    mag = rng.exponential(1.0 / (2.0 * gamma), size=n) / PS
    sign = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
    pair_id = id_base + np.arange(n, dtype=np.int64)
    return PairBatch(emission, k, detuning, sign * mag, pair_id, t0_ps, t1_ps)


def _segment_id_base(seg: int) -> int:
    return int(seg) << 32


def generate_pairs(state: BiphotonState, src: SourceConfig) -> PairBatch:
    """Emit pairs over the whole duration, segment by segment."""
    batches = []
    for seg in range(src.n_segments):
        t0, t1 = src.segment_bounds_ps(seg)
        rng = _segment_rngs(src.seed, seg, 1)[0]
        batches.append(_sample_pairs(state, src.pair_rate, t0, t1, rng, _segment_id_base(seg)))
    return PairBatch.concat(batches)


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

def _photon_freq(state: BiphotonState, pairs: PairBatch, which: int) -> np.ndarray:
    p = state.params
    sign = 1.0 if which == SIGNAL else -1.0
    return p.pump_freq + sign * (pairs.k * p.fsr_hz + pairs.detuning / (2 * math.pi))


def _survival(pairs: PairBatch, cfg: ChannelConfig, rng: np.random.Generator,
              sidebands=None, dispersion=None) -> np.ndarray:
    keep = rng.uniform(size=len(pairs)) < cfg.efficiency
    if sidebands is not None:
        keep &= np.isin(pairs.k, np.asarray(list(sidebands)))
    if dispersion is not None:
        keep &= rng.uniform(size=len(pairs)) < dispersion.insertion_loss
    return keep


def _emit(state: Optional[BiphotonState], pairs: PairBatch, which: int, keep: np.ndarray,
          shift_ps, cfg: ChannelConfig, rng: np.random.Generator, dispersion,
          duration_ps: float) -> TagStream:
    sign = 0.5 if which == SIGNAL else -0.5
    t = pairs.emission_ps[keep] + sign * pairs.tau_rel_ps[keep]
    if np.ndim(shift_ps):
        t = t + np.asarray(shift_ps)[keep]
    elif shift_ps:
        t = t + shift_ps
    if dispersion is not None:
        sub = PairBatch(pairs.emission_ps[keep], pairs.k[keep], pairs.detuning[keep],
                        pairs.tau_rel_ps[keep], pairs.pair_id[keep], 0.0, 0.0)
        t = t + dispersion.delay_ps(_photon_freq(state, sub, which))
    if cfg.jitter_ps > 0:
        t = t + rng.normal(0.0, cfg.jitter_ps, size=len(t))
    n_true = len(t)
    n_dark = int(rng.poisson(cfg.dark_rate * (pairs.t_stop_ps - pairs.t_start_ps) * PS))
    t_dark = rng.uniform(pairs.t_start_ps, pairs.t_stop_ps, size=n_dark)
    stream = TagStream(
        np.concatenate([t, t_dark]),
        np.full(n_true + n_dark, which, np.uint8),
        np.concatenate([np.full(n_true, KIND_PAIR, np.uint8), np.full(n_dark, KIND_DARK, np.uint8)]),
        np.concatenate([pairs.pair_id[keep], np.full(n_dark, -1, np.int64)]),
        np.concatenate([pairs.k[keep].astype(np.int16), np.zeros(n_dark, np.int16)]),
        np.concatenate([pairs.detuning[keep], np.zeros(n_dark)]),
        duration_ps,
    )
    mask = (stream.time_ps >= 0) & (stream.time_ps <= duration_ps)
    if cfg.gate is not None:
        mask &= cfg.gate.open_at(stream.time_ps)
    return stream.select(mask).sorted()


def detect(pairs: PairBatch, which: int, cfg: ChannelConfig, seed: int, *,
           state: Optional[BiphotonState] = None, sidebands: Optional[Iterable[int]] = None,
           dispersion=None) -> TagStream:
    """Detect one arm of ``pairs``: loss, timing, jitter, dark counts, gating.

    ``sidebands`` models the pulse-shaper passband (None passes everything).
    ``dispersion`` (needs ``state`` for photon frequencies) applies a group
    delay before the detector, so gating sees the dispersed arrival times.
    """
    if dispersion is not None and state is None:
        raise ValueError("dispersion needs the state to compute photon frequencies")
    rng = np.random.default_rng(int(seed))
    keep = _survival(pairs, cfg, rng, sidebands, dispersion)
    return _emit(state, pairs, which, keep, 0.0, cfg, rng, dispersion, pairs.t_stop_ps)


# (pairs, keep_signal, keep_idler, rng) -> (keep_signal, keep_idler, shift_signal_ps, shift_idler_ps)
PairHook = Callable[[PairBatch, np.ndarray, np.ndarray, np.random.Generator],
                    tuple[np.ndarray, np.ndarray, object, object]]


@dataclass(frozen=True)
class Arm:
    """Everything between the source and one detector."""

    channel: ChannelConfig
    sidebands: Optional[tuple[int, ...]] = None
    dispersion: object = None


def _run_segment(state, src, seg, signal: Arm, idler: Arm, hook: Optional[PairHook]):
    t0, t1 = src.segment_bounds_ps(seg)
    r_pairs, r_sig, r_idl, r_hook = _segment_rngs(src.seed, seg, 4)
    pairs = _sample_pairs(state, src.pair_rate, t0, t1, r_pairs, _segment_id_base(seg))
    keep_s = _survival(pairs, signal.channel, r_sig, signal.sidebands, signal.dispersion)
    keep_i = _survival(pairs, idler.channel, r_idl, idler.sidebands, idler.dispersion)
    shift_s = shift_i = 0.0
    if hook is not None:
        keep_s, keep_i, shift_s, shift_i = hook(pairs, keep_s, keep_i, r_hook)
    dur = src.duration / PS
    s = _emit(state, pairs, SIGNAL, keep_s, shift_s, signal.channel, r_sig, signal.dispersion, dur)
    i = _emit(state, pairs, IDLER, keep_i, shift_i, idler.channel, r_idl, idler.dispersion, dur)
    return s, i


def simulate(state: BiphotonState, src: SourceConfig, signal: Arm, idler: Arm, *,
             hook: Optional[PairHook] = None, workers: int = 1) -> tuple[TagStream, TagStream]:
    """Full source-to-detector run returning sorted (signal, idler) tag streams."""
    segs = range(src.n_segments)

    def job(seg):
        return _run_segment(state, src, seg, signal, idler, hook)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, segs))
    else:
        parts = [job(seg) for seg in segs]
    dur = src.duration / PS
    if not parts:
        return TagStream.empty(SIGNAL, dur), TagStream.empty(IDLER, dur)
    sig = TagStream.concat([p[0] for p in parts]).sorted()
    idl = TagStream.concat([p[1] for p in parts]).sorted()
    return sig, idl
