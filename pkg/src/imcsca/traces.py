"""Two-channel current traces and the feature extraction run on them.

Samples are kept in the file units (ns, uA) so that a trace written to disk
and read back is bit-identical.  Channel conventions: ``supply`` is the VDD
pin current with current drawn from the supply negative; ``ground`` is the
current sunk into the ground pin, positive.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

HEADER = "# imc-trace v1"
CHANNELS = ("supply", "ground")


class NoSeparationError(ValueError):
    pass


@dataclass(frozen=True)
class Phase:
    name: str
    start: float  # ns
    end: float  # ns


@dataclass(frozen=True)
class CurrentTrace:
    dt_ns: float
    supply_ua: np.ndarray
    ground_ua: np.ndarray
    phases: tuple = ()

    def __post_init__(self):
        s = np.asarray(self.supply_ua, dtype=float)
        g = np.asarray(self.ground_ua, dtype=float)
        if s.shape != g.shape or s.ndim != 1:
            raise ValueError("channels must be 1-D and equally long")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(g))):
            raise ValueError("trace contains non-finite samples")
        if self.dt_ns <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "supply_ua", s)
        object.__setattr__(self, "ground_ua", g)
        object.__setattr__(self, "phases", tuple(self.phases))

    @classmethod
    def from_amps(cls, dt_s: float, supply_a, ground_a, phases=()) -> "CurrentTrace":
        return cls(dt_s * 1e9, np.asarray(supply_a) * 1e6, np.asarray(ground_a) * 1e6, phases)

    def __len__(self) -> int:
        return len(self.supply_ua)

    @property
    def duration_ns(self) -> float:
        return len(self) * self.dt_ns

    @property
    def t_ns(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt_ns

    def channel(self, name: str) -> np.ndarray:
        """Channel samples in amps."""
        if name == "supply":
            return self.supply_ua * 1e-6
        if name == "ground":
            return self.ground_ua * 1e-6
        raise ValueError(f"unknown channel {name!r}")

    def phase(self, name: str) -> Phase:
        for p in self.phases:
            if p.name == name:
                return p
        raise KeyError(name)

    def phases_named(self, prefix: str) -> list:
        return [p for p in self.phases if p.name.startswith(prefix)]

    def energy(self, vdd: float) -> float:
        """Energy drawn from the supply over the whole trace (J)."""
        return float(vdd * np.sum(np.maximum(-self.supply_ua, 0.0)) * 1e-6 * self.dt_ns * 1e-9)

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(f"{HEADER}, dt_ns={self.dt_ns!r}, channels=supply,ground\n")
        for p in self.phases:
            buf.write(f"# phase,{p.name},{p.start!r},{p.end!r}\n")
        t = self.t_ns
        for ti, s, g in zip(t.tolist(), self.supply_ua.tolist(), self.ground_ua.tolist()):
            buf.write(f"{ti!r},{s!r},{g!r}\n")
        return buf.getvalue()

    @classmethod
    def read(cls, path) -> "CurrentTrace":
        return cls.loads(Path(path).read_text())

    @classmethod
    def loads(cls, text: str) -> "CurrentTrace":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(HEADER):
            raise ValueError("not a trace file")
        fields = dict(kv.strip().split("=", 1) for kv in lines[0].split(",")[1:] if "=" in kv)
        dt = float(fields["dt_ns"])
        phases, rows = [], []
        for line in lines[1:]:
            if line.startswith("# phase,"):
                _, name, start, end = line.split(",")
                phases.append(Phase(name, float(start), float(end)))
            elif line and not line.startswith("#"):
                rows.append(line.split(","))
        data = np.array(rows, dtype=float).reshape(-1, 3)
        return cls(dt, data[:, 1], data[:, 2], tuple(phases))


@dataclass(frozen=True)
class MeasurementWindow:
    start: float  # ns
    end: float  # ns

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid window [{self.start}, {self.end})")

    def shifted(self, offset_ns: float) -> "MeasurementWindow":
        return MeasurementWindow(self.start + offset_ns, self.end + offset_ns)

    def to_dict(self) -> dict:
        return {"start_ns": self.start, "end_ns": self.end}

    @classmethod
    def from_dict(cls, d) -> "MeasurementWindow":
        return cls(d["start_ns"], d["end_ns"])


def add_noise(trace: CurrentTrace, sigma: float, seed=None) -> CurrentTrace:
    """Add i.i.d. Gaussian noise of ``sigma`` amps to every sample of both channels."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return trace
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma * 1e6, size=(2, len(trace)))
    return replace(trace, supply_ua=trace.supply_ua + noise[0], ground_ua=trace.ground_ua + noise[1])


def average(traces) -> CurrentTrace:
    traces = list(traces)
    s = np.mean([t.supply_ua for t in traces], axis=0)
    g = np.mean([t.ground_ua for t in traces], axis=0)
    return replace(traces[0], supply_ua=s, ground_ua=g)


def subtract_leakage(trace: CurrentTrace, baseline) -> CurrentTrace:
    """Remove a constant per-channel leakage ``(supply_A, ground_A)``."""
    bs, bg = (baseline, baseline) if np.isscalar(baseline) else baseline
    return replace(trace, supply_ua=trace.supply_ua - bs * 1e6, ground_ua=trace.ground_ua - bg * 1e6)


def estimate_leakage(trace: CurrentTrace) -> tuple:
    """Per-channel quiescent current in amps.

    Uses the annotated ``idle`` phase when present, otherwise the median of
    the quietest tenth of the samples.
    """
    try:
        p = trace.phase("idle")
        i0, i1 = _index_range(trace, p.start, p.end)
        return tuple(float(np.median(trace.channel(c)[i0:i1])) for c in CHANNELS)
    except KeyError:
        out = []
        for c in CHANNELS:
            x = trace.channel(c)
            q = np.sort(np.abs(x))[: max(1, len(x) // 10)][-1]
            out.append(float(np.median(x[np.abs(x) <= q])))
        return tuple(out)


def _index_range(trace: CurrentTrace, start_ns: float, end_ns: float) -> tuple:
    i0 = int(np.ceil(start_ns / trace.dt_ns - 1e-9))
    i1 = int(np.ceil(end_ns / trace.dt_ns - 1e-9))
    return max(i0, 0), min(i1, len(trace))


def mean_current(trace: CurrentTrace, window: MeasurementWindow, channel: str) -> float:
    """Arithmetic mean (A) of the samples whose time lies in ``[start, end)``."""
    i0, i1 = _index_range(trace, window.start, window.end)
    if i1 <= i0:
        raise ValueError("window holds no samples")
    return float(np.mean(trace.channel(channel)[i0:i1]))


def window_means(samples: np.ndarray, dt_ns: float, window: MeasurementWindow) -> np.ndarray:
    """Window mean along the last axis of a (..., T) sample array."""
    i0 = int(np.ceil(window.start / dt_ns - 1e-9))
    i1 = int(np.ceil(window.end / dt_ns - 1e-9))
    if i1 <= i0:
        raise ValueError("window holds no samples")
    return samples[..., i0:i1].mean(axis=-1)


def select_window(mean_traces: dict, dt_ns: float, t0_ns: float = 0.0, step: int = 1,
                  min_width: int = 1, max_width: int | None = None) -> MeasurementWindow:
    """Window maximizing the smallest adjacent-fanin separation of mean currents.

    ``mean_traces`` maps fanin -> 1-D mean current array, all sampled at
    ``dt_ns`` from ``t0_ns``.  Window edges are searched on a grid of ``step``
    samples; the search is exhaustive over that grid.  Ties go to the
    earliest, then the shortest window.
    """
    if len(mean_traces) < 2:
        raise ValueError("need at least two fanins")
    keys = sorted(mean_traces)
    x = np.stack([np.asarray(mean_traces[k], dtype=float) for k in keys])
    n = x.shape[1]
    csum = np.concatenate([np.zeros((len(keys), 1)), np.cumsum(x, axis=1)], axis=1)
    edges = np.arange(0, n + 1, step)
    if edges[-1] != n:
        edges = np.append(edges, n)
    best, best_sep = None, -np.inf
    for a in edges:
        ends = edges[edges >= a + min_width]
        if max_width is not None:
            ends = ends[ends <= a + max_width]
        if not len(ends):
            continue
        means = (csum[:, ends] - csum[:, [a]]) / (ends - a)
        sep = np.abs(np.diff(means, axis=0)).min(axis=0)
        j = int(np.argmax(sep))
        if sep[j] > best_sep * (1 + 1e-12) + 1e-30:
            best_sep, best = sep[j], (a, ends[j])
    scale = np.abs(x).max()
    if best is None or best_sep <= 1e-9 * max(scale, 1e-30):
        raise NoSeparationError("model traces are indistinguishable in every window")
    a, b = best
    return MeasurementWindow(t0_ns + a * dt_ns, t0_ns + b * dt_ns)


def window_separation(mean_traces: dict, dt_ns: float, window: MeasurementWindow, t0_ns: float = 0.0) -> float:
    keys = sorted(mean_traces)
    w = window.shifted(-t0_ns)
    means = np.array([window_means(np.asarray(mean_traces[k]), dt_ns, w) for k in keys])
    return float(np.abs(np.diff(means)).min())


@dataclass(frozen=True)
class Event:
    kind: str  # precharge-peak | short-circuit-peak | sharp-change | steady-plateau
    channel: str
    start: float  # ns
    end: float  # ns
    peak: float = 0.0  # A, signed extreme of the event


@dataclass(frozen=True)
class EventThresholds:
    active: float = 10e-9  # A above leakage counted as activity
    peak_fraction: float = 0.5  # of the channel maximum, for precharge peaks
    peak_max_ns: float = 10.0
    bipolar_fraction: float = 0.2  # opposite-sign lobe needed for a short-circuit peak
    sharp_ratio: float = 2.0  # current change across a segment needed for a sharp change
    sharp_fraction: float = 0.5  # of the segment's largest derivative
    sharp_floor: float | None = None  # A/ns; default 10x median |dI/dt| of quiet samples
    plateau_rel: float = 2e-3  # |dI| / |I| per sample for a steady plateau
    plateau_min_ns: float = 5.0
    edge_samples: int = 2


def _runs(mask: np.ndarray, min_gap: int = 0) -> list:
    """Contiguous True runs as [start, end) index pairs, merging gaps <= min_gap."""
    idx = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(np.int8), [0]])))
    runs = [[a, b] for a, b in zip(idx[::2], idx[1::2])]
    merged = []
    for r in runs:
        if merged and r[0] - merged[-1][1] <= min_gap:
            merged[-1][1] = r[1]
        else:
            merged.append(r)
    return [tuple(r) for r in merged]


def active_segments(trace: CurrentTrace, channel: str, thresholds: EventThresholds = EventThresholds(),
                    leakage=None) -> list:
    """[start, end) index ranges where the leakage-free current is above the activity floor."""
    leak = estimate_leakage(trace) if leakage is None else leakage
    x = trace.channel(channel) - leak[CHANNELS.index(channel)]
    return _runs(np.abs(x) > thresholds.active, min_gap=1)


def _monotone_spans(y: np.ndarray, runs, offset: int) -> list:
    """Widen steep runs to the monotone excursion around them; overlapping spans merge."""
    spans = []
    for ra, rb in runs:
        s0, s1 = ra + offset, rb + offset + 1
        sgn = 1.0 if y[s1] >= y[s0] else -1.0
        while s0 > 0 and (y[s0] - y[s0 - 1]) * sgn >= 0:
            s0 -= 1
        while s1 < len(y) - 1 and (y[s1 + 1] - y[s1]) * sgn >= 0:
            s1 += 1
        if spans and s0 <= spans[-1][1]:
            spans[-1] = (spans[-1][0], max(spans[-1][1], s1))
        else:
            spans.append((s0, s1))
    return spans


def detect_events(trace: CurrentTrace, thresholds: EventThresholds = EventThresholds()) -> list:
    """Classify activity on both channels into the four event kinds."""
    th = thresholds
    leak = estimate_leakage(trace)
    dt = trace.dt_ns
    events = []
    for ci, ch in enumerate(CHANNELS):
        x = trace.channel(ch) - leak[ci]
        if not np.any(np.abs(x) > th.active):
            continue
        chan_max = np.abs(x).max()
        dx = np.abs(np.diff(x)) / dt
        floor = th.sharp_floor
        if floor is None:
            # noise slope, taken where the channel is quiet
            quiet = (np.abs(x[1:]) <= th.active) & (np.abs(x[:-1]) <= th.active)
            ref = dx[quiet] if quiet.any() else dx
            floor = 10 * float(np.median(ref)) if len(ref) else 0.0
        for a, b in _runs(np.abs(x) > th.active, min_gap=1):
            seg = x[a:b]
            lo, hi = seg.min(), seg.max()
            ext = max(abs(lo), abs(hi))
            t0, t1 = a * dt, b * dt
            if min(abs(lo), abs(hi)) >= th.bipolar_fraction * ext and lo < 0 < hi:
                events.append(Event("short-circuit-peak", ch, t0, t1, float(hi if abs(hi) >= abs(lo) else lo)))
                continue
            peak = float(hi if abs(hi) >= abs(lo) else lo)
            if (t1 - t0) <= th.peak_max_ns and ext >= th.peak_fraction * chan_max:
                events.append(Event("precharge-peak", ch, t0, t1, peak))
                continue
            e = th.edge_samples
            inner = np.abs(seg[e:len(seg) - e]) if len(seg) > 2 * e + 2 else np.abs(seg)
            d = np.abs(np.diff(inner)) / dt
            if len(d) and inner.min() > 0 and inner.max() / inner.min() >= th.sharp_ratio:
                level = max(th.sharp_fraction * d.max(), floor)
                for s0, s1 in _monotone_spans(np.abs(seg), _runs(d >= level, min_gap=max(2, len(d) // 50)), e):
                    events.append(Event("sharp-change", ch, (a + s0) * dt, (a + s1 + 1) * dt, peak))
            rel = np.abs(np.diff(seg)) / np.maximum(np.abs(seg[:-1]), 1e-30)
            min_len = int(np.ceil(th.plateau_min_ns / dt))
            for ra, rb in _runs(rel <= th.plateau_rel):
                if rb - ra >= min_len:
                    events.append(Event("steady-plateau", ch, (a + ra) * dt, (a + rb + 1) * dt,
                                        float(np.median(seg[ra:rb + 1]))))
    events.sort(key=lambda ev: (ev.start, ev.channel))
    return events
