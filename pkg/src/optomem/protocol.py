"""Timed measurement protocols and their execution against a device.

A protocol is an immutable, time-ordered list of pulse events plus the times
at which conductance is sampled.  The engine does not simulate the
millisecond read/bias interleaving pulse by pulse: BIAS events switch the
bias level used for parameter lookup from their start onward, reads happen
implicitly at every sample at the protocol read voltage, and SET trains
collapse to a single relaxation event anchored at train end.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import device as dev
from .device import DeviceState
from .params import P_REF_MW_CM2, ParameterTable, SetDecayParams, default_table

__all__ = [
    "EventKind",
    "PulseEvent",
    "PulseProtocol",
    "Trace",
    "TraceFormatError",
    "mean_applied_voltage",
    "optical_pulse_energy",
    "build_timing_protocol",
    "build_bias_protocol",
    "build_set_probe_protocol",
    "run_protocol",
    "subtract_baseline",
    "with_multiplicative_noise",
]

#: Protocol conventions: fixed read/bias slot widths (s) and read voltage (V).
READ_WIDTH = 0.5e-3
BIAS_WIDTH = 1.5e-3
V_READ = 0.6

#: Standard SET train: 100 pulses of 4 V, 1 ms each.
SET_TRAIN_VOLTS = 4.0
SET_TRAIN_COUNT = 100
SET_PULSE_WIDTH = 1e-3

#: Standard optical pulse: 1 ms at the reference power density.
OPTICAL_PULSE_WIDTH = 1e-3

#: Traces start this long before the SET event by convention (s).
TRACE_START = -600.0


class EventKind(enum.Enum):
    READ = "read"
    BIAS = "bias"
    SET_TRAIN = "set_train"
    OPTICAL = "optical"


_ELECTRICAL = (EventKind.READ, EventKind.BIAS, EventKind.SET_TRAIN)


@dataclass(frozen=True)
class PulseEvent:
    """One timed pulse.

    ``amplitude`` is a voltage (V) for electrical kinds and a power density
    (mW/cm^2) for optical pulses.  ``count`` > 1 turns a SET event into a
    pulse train.  ``dg_ns`` optionally fixes the conductance jump of a SET
    event; without it the tabulated train amplitude for the active bias is
    used.
    """

    kind: EventKind
    start: float
    width: float
    amplitude: float
    count: int = 1
    dg_ns: float | None = None

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("event width must be > 0")
        if self.count < 1:
            raise ValueError("event count must be >= 1")

    @property
    def effect_time(self) -> float:
        """Time at which the event changes the device state."""
        if self.kind is EventKind.SET_TRAIN:
            return self.start + self.count * self.width
        if self.kind is EventKind.OPTICAL:
            return self.start + self.width
        return self.start

    @property
    def span(self) -> tuple[float, float]:
        if self.kind is EventKind.SET_TRAIN:
            return (self.start, self.start + self.count * self.width)
        return (self.start, self.start + self.width)


_APPLY_ORDER = {EventKind.BIAS: 0, EventKind.SET_TRAIN: 1,
                EventKind.OPTICAL: 2, EventKind.READ: 3}


@dataclass(frozen=True)
class PulseProtocol:
    """Immutable protocol: sorted events plus conductance sample times."""

    events: tuple[PulseEvent, ...]
    sample_times: np.ndarray
    v_read: float = V_READ
    read_width: float = READ_WIDTH
    bias_width: float = BIAS_WIDTH

    def __post_init__(self):
        starts = [e.start for e in self.events]
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ValueError("protocol events must be sorted by start time")
        st = np.asarray(self.sample_times, dtype=float)
        if np.any(np.diff(st) < 0):
            raise ValueError("sample_times must be sorted")
        object.__setattr__(self, "sample_times", st)
        spans = sorted(e.span for e in self.events if e.kind in _ELECTRICAL)
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1:
                raise ValueError(f"overlapping electrical events at t={b0}")

    def optical_events(self) -> list[PulseEvent]:
        return [e for e in self.events if e.kind is EventKind.OPTICAL]

    def total_optical_energy(self, area_um2: float) -> float:
        """Sum of per-pulse optical energies over the protocol (pJ)."""
        return sum(optical_pulse_energy(e.amplitude, area_um2, e.width)
                   for e in self.optical_events())


class TraceFormatError(ValueError):
    """Malformed trace CSV; carries the 1-based offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


@dataclass
class Trace:
    """Sampled conductance trace with read current and stimulus columns."""

    t: np.ndarray          # s
    g: np.ndarray          # nS
    i: np.ndarray          # A
    v_applied: np.ndarray  # V
    p_opt: np.ndarray      # mW/cm^2

    COLUMNS = ("t_s", "G_nS", "I_A", "V_applied_V", "P_opt_mWcm2")

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in
                  (self.t, self.g, self.i, self.v_applied, self.p_opt)]
        n = len(arrays[0])
        if any(len(a) != n for a in arrays):
            raise ValueError("trace columns must have equal length")
        if np.any(np.diff(arrays[0]) <= 0):
            raise ValueError("trace times must be strictly increasing")
        self.t, self.g, self.i, self.v_applied, self.p_opt = arrays

    def __len__(self) -> int:
        return len(self.t)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for row in zip(self.t, self.g, self.i, self.v_applied, self.p_opt):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise TraceFormatError("empty trace file", line=1)
        header = tuple(h.strip() for h in lines[0].split(","))
        if header != cls.COLUMNS:
            raise TraceFormatError(
                f"expected header {','.join(cls.COLUMNS)!r}, got {lines[0]!r}", line=1)
        rows = []
        for ln, raw in enumerate(lines[1:], start=2):
            if not raw.strip():
                continue
            parts = raw.split(",")
            if len(parts) != len(cls.COLUMNS):
                raise TraceFormatError(f"expected {len(cls.COLUMNS)} columns", line=ln)
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise TraceFormatError(f"non-numeric value in {raw!r}", line=ln) from None
        if not rows:
            raise TraceFormatError("trace file has no data rows", line=1)
        cols = np.asarray(rows, dtype=float).T
        return cls(*cols)


def mean_applied_voltage(v_read: float, v_bias: float) -> float:
    """Time-averaged voltage of the read/bias interleaved waveform."""
    return (0.5 * v_read + 1.5 * v_bias) / 2.0


def optical_pulse_energy(p_opt: float, area_um2: float, width: float) -> float:
    """Energy of one optical pulse over a device pitch area, in pJ.

    p_opt in mW/cm^2, area in um^2, width in s.
    """
    if p_opt < 0 or area_um2 < 0 or width < 0:
        raise ValueError("energy arguments must be >= 0")
    # 1 mW/cm^2 * 1 um^2 * 1 s = 10 pJ
    return 10.0 * p_opt * area_um2 * width


def read_power_nw(g_ns: float, v_read: float = V_READ) -> float:
    """Electrical power dissipated by one read, G*v_read^2, in nW."""
    return g_ns * v_read * v_read


# -- sampling grids ----------------------------------------------------------

def _log_offsets(span: float, first: float = 0.1, per_decade: int = 10) -> np.ndarray:
    """Log-spaced offsets in (first, span], per_decade points per decade."""
    if span <= first:
        return np.array([])
    n = max(2, int(math.ceil(per_decade * math.log10(span / first))) + 1)
    return np.geomspace(first, span, n)


def default_sample_times(events: tuple[PulseEvent, ...], start: float, end: float,
                         per_decade: int = 10) -> np.ndarray:
    """Default grid: uniform 1 s before the first event, the event anchors
    themselves, and log-spaced offsets (``per_decade`` per decade) after each
    event."""
    anchors = sorted(e.effect_time for e in events
                     if e.kind in (EventKind.SET_TRAIN, EventKind.OPTICAL))
    first = anchors[0] if anchors else end
    pts = [np.arange(start, min(first, end), 1.0)]
    for a in anchors:
        if a > end:
            continue
        pts.append(np.array([a]))
        pts.append(a + _log_offsets(end - a, per_decade=per_decade))
    grid = np.unique(np.concatenate(pts))
    return grid[(grid >= start) & (grid <= end)]


# -- protocol builders -------------------------------------------------------

def standard_set_train(at: float = 0.0) -> PulseEvent:
    return PulseEvent(EventKind.SET_TRAIN, start=at, width=SET_PULSE_WIDTH,
                      amplitude=SET_TRAIN_VOLTS, count=SET_TRAIN_COUNT)


def build_timing_protocol(optical_times: list[float], *, start: float = TRACE_START,
                          end: float = 600.0, p_opt: float = P_REF_MW_CM2) -> PulseProtocol:
    """Constant-read protocol probing how pulse timing shapes the photoresponse.

    One standard SET train fires at t = 0; optical pulses fire at the given
    absolute times (the train ends at t = 0.1 s, so a probe Dt after the SET
    goes at 0.1 + Dt).
    """
    times = list(optical_times)
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("optical_times must be sorted")
    events = [standard_set_train(0.0)]
    events += [PulseEvent(EventKind.OPTICAL, start=t, width=OPTICAL_PULSE_WIDTH,
                          amplitude=p_opt) for t in times]
    events.sort(key=lambda e: e.start)
    grid = default_sample_times(tuple(events), start, end)
    return PulseProtocol(events=tuple(events), sample_times=grid)


def build_bias_protocol(v_bias: float, *, start: float = TRACE_START, end: float = 600.0,
                        include_optical: bool = True,
                        pre_optical_times: tuple[float, ...] = (-400.0, -200.0),
                        post_optical_times: tuple[float, ...] = (100.0, 200.0, 400.0),
                        p_opt: float = P_REF_MW_CM2) -> PulseProtocol:
    """Read/bias interleaved protocol with a SET train at t = 0.

    A BIAS event at trace start selects the relaxation parameter set; optical
    probes run on the steady baseline before the SET and on the decaying
    state after it.  Pair with ``steady_device(v_bias, clock=start)``.
    """
    events = [PulseEvent(EventKind.BIAS, start=start, width=BIAS_WIDTH, amplitude=v_bias),
              standard_set_train(0.0)]
    if include_optical:
        for t in tuple(pre_optical_times) + tuple(post_optical_times):
            events.append(PulseEvent(EventKind.OPTICAL, start=t,
                                     width=OPTICAL_PULSE_WIDTH, amplitude=p_opt))
    events.sort(key=lambda e: e.start)
    grid = default_sample_times(tuple(events), start, end)
    return PulseProtocol(events=tuple(events), sample_times=grid)


def build_set_probe_protocol(variant: str, *, n_sets: int = 5, set_period: float = 30.0,
                             probe_delay: float = 1.0, set_dg_ns: float = 5.0,
                             train_probe_delays: tuple[float, ...] = (0.1, 1.0, 10.0),
                             end: float | None = None,
                             p_opt: float = P_REF_MW_CM2) -> PulseProtocol:
    """Photoresponse-vs-state protocols using two SET styles.

    ``individual``: ``n_sets`` single SET pulses (each raising the state by a
    user-supplied ``set_dg_ns``), one optical probe after each.
    ``train``: one standard 100-pulse train followed by optical probes at the
    given delays after train end.
    """
    events: list[PulseEvent] = []
    if variant == "individual":
        for k in range(n_sets):
            t = k * set_period
            events.append(PulseEvent(EventKind.SET_TRAIN, start=t, width=SET_PULSE_WIDTH,
                                     amplitude=SET_TRAIN_VOLTS, count=1, dg_ns=set_dg_ns))
            events.append(PulseEvent(EventKind.OPTICAL, start=t + probe_delay,
                                     width=OPTICAL_PULSE_WIDTH, amplitude=p_opt))
        end = end if end is not None else n_sets * set_period + 100.0
    elif variant == "train":
        events.append(standard_set_train(0.0))
        train_end = SET_TRAIN_COUNT * SET_PULSE_WIDTH
        for d in train_probe_delays:
            events.append(PulseEvent(EventKind.OPTICAL, start=train_end + d,
                                     width=OPTICAL_PULSE_WIDTH, amplitude=p_opt))
        end = end if end is not None else 600.0
    else:
        raise ValueError(f"unknown variant {variant!r}; use 'individual' or 'train'")
    events.sort(key=lambda e: e.start)
    grid = default_sample_times(tuple(events), 0.0, end)
    return PulseProtocol(events=tuple(events), sample_times=grid)


def steady_device(bias: float, clock: float = TRACE_START,
                  table: ParameterTable | None = None, **kwargs) -> DeviceState:
    """Device resting at the steady baseline for a bias, clocked at ``clock``."""
    return DeviceState.at_steady(bias=bias, clock=clock, table=table, **kwargs)


# -- execution ---------------------------------------------------------------

def _apply_event(state: DeviceState, ev: PulseEvent) -> DeviceState:
    if ev.kind is EventKind.BIAS:
        return replace(state, bias=ev.amplitude)
    if ev.kind is EventKind.READ:
        return state
    if ev.kind is EventKind.OPTICAL:
        return dev.apply_optical_pulse(state, ev.amplitude, ev.width, ev.start)
    if ev.kind is EventKind.SET_TRAIN:
        at = ev.effect_time
        if ev.count > 1 and ev.dg_ns is None:
            # A full train is characterised as one relaxation event whose
            # asymptote is the tabulated SET-model steady level, which can
            # differ slightly from the pre-SET optical baseline.
            sp = dev.bias_params(state.bias, state.table)[0]
            state = replace(state, g_steady=sp.g_steady)
        return dev.apply_set_event(state, at, amplitude=ev.dg_ns)
    raise ValueError(f"unhandled event kind {ev.kind}")


def run_protocol(proto: PulseProtocol, device: DeviceState) -> Trace:
    """Execute a protocol on a copy of ``device`` and sample its conductance.

    Events take effect lazily: a sample between an event's start and its
    effect time still sees the pre-event state, consistent with modelling
    pulses as instantaneous steps at pulse end.  Read current is G * v_read
    at every sample.
    """
    events = sorted(proto.events, key=lambda e: (e.effect_time, _APPLY_ORDER[e.kind]))
    samples = np.asarray(proto.sample_times, dtype=float)
    extra = [e.start for e in proto.events if e.kind is EventKind.READ]
    if extra:
        samples = np.unique(np.concatenate([samples, np.asarray(extra)]))
    if events and device.clock > min(e.start for e in events):
        raise ValueError("device clock must not exceed the first protocol event")

    optical = proto.optical_events()
    rows_t, rows_g = [], []
    rows_p = []
    idx = 0
    for t in samples:
        while idx < len(events) and events[idx].effect_time <= t:
            device = _apply_event(device, events[idx])
            idx += 1
        rows_t.append(float(t))
        rows_g.append(dev.conductance_at(device, float(t)))
        p_here = 0.0
        for e in optical:
            if e.start <= t < e.start + e.width:
                p_here = e.amplitude
                break
        rows_p.append(p_here)
    t_arr = np.asarray(rows_t)
    g_arr = np.asarray(rows_g)
    v_arr = np.full_like(t_arr, proto.v_read)
    i_arr = g_arr * 1e-9 * v_arr
    return Trace(t=t_arr, g=g_arr, i=i_arr, v_applied=v_arr, p_opt=np.asarray(rows_p))


def subtract_baseline(trace: Trace, p: SetDecayParams, t0: float) -> Trace:
    """Subtract the SET relaxation model from a trace's conductance column."""
    if np.any(trace.t < t0):
        raise ValueError("trace extends before t0; cannot subtract model there")
    g0 = dev.set_decay_value(p, trace.t, t0)
    g = trace.g - g0
    return Trace(t=trace.t.copy(), g=g, i=g * 1e-9 * trace.v_applied,
                 v_applied=trace.v_applied.copy(), p_opt=trace.p_opt.copy())


def with_multiplicative_noise(trace: Trace, sigma: float, seed: int) -> Trace:
    """Copy of a trace with G scaled by (1 + sigma*N(0,1)) per sample.

    Exists for fitting tests and demos; the engine itself is noise-free.
    """
    rng = np.random.default_rng(seed)
    g = trace.g * (1.0 + sigma * rng.standard_normal(len(trace)))
    return Trace(t=trace.t.copy(), g=g, i=g * 1e-9 * trace.v_applied,
                 v_applied=trace.v_applied.copy(), p_opt=trace.p_opt.copy())


# -- protocol JSON I/O -------------------------------------------------------

def protocol_to_dict(proto: PulseProtocol) -> dict:
    events = []
    for e in proto.events:
        d = {"kind": e.kind.value, "start": e.start, "width": e.width,
             "amplitude": e.amplitude, "count": e.count}
        if e.dg_ns is not None:
            d["dg_nS"] = e.dg_ns
        events.append(d)
    return {"v_read": proto.v_read, "read_width": proto.read_width,
            "bias_width": proto.bias_width, "events": events,
            "sample_times": [float(t) for t in proto.sample_times]}


def protocol_from_dict(data: dict) -> PulseProtocol:
    events = tuple(
        PulseEvent(kind=EventKind(d["kind"]), start=float(d["start"]),
                   width=float(d["width"]), amplitude=float(d["amplitude"]),
                   count=int(d.get("count", 1)),
                   dg_ns=(float(d["dg_nS"]) if "dg_nS" in d else None))
        for d in data["events"])
    return PulseProtocol(events=events,
                         sample_times=np.asarray(data["sample_times"], dtype=float),
                         v_read=float(data.get("v_read", V_READ)),
                         read_width=float(data.get("read_width", READ_WIDTH)),
                         bias_width=float(data.get("bias_width", BIAS_WIDTH)))
