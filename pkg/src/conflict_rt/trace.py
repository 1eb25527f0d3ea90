"""Kinematic trace data model: ingestion, validation, resampling, persistence.

A trace holds time-indexed states for the subject vehicle (SV) and the
principal other vehicle (POV; the lead vehicle in rear-end scenarios) on a
uniform (t0, dt) grid, plus per-sample and event-level context flags.

Positions are lane-relative: x is distance along the lane centerline, y is
lateral offset from it, heading is measured from the road tangent. For
rear-end geometry the bumper-to-bumper gap is ``pov.x - sv.x``.

File format: a CSV with columns
``t, sv_x, sv_y, sv_v, sv_a, pov_x, pov_y, pov_v, pov_a, pov_width,
brake_light_on, occluded`` and an optional sidecar JSON
``{scenario_kind, brake_light_surprising, expected_slowdown_context,
eyes_off_path, impaired}`` next to it (same stem, .json suffix).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import EmptyTrace, MissingColumn, NaNValue, NonMonotonicTime

DEFAULT_DT = 0.1          # s, onboard-sensor cadence
MAX_ABS_ACCEL = 15.0      # m/s^2, physical sanity bound

CSV_COLUMNS = (
    "t", "sv_x", "sv_y", "sv_v", "sv_a",
    "pov_x", "pov_y", "pov_v", "pov_a",
    "pov_width", "brake_light_on", "occluded",
)


class ScenarioKind(str, Enum):
    S1 = "S1"                      # lead vehicle brakes surprisingly
    S2 = "S2"                      # lead vehicle exits lane, then brakes
    S3 = "S3"                      # lead vehicle stopped/slow, SV closing in
    CUT_IN = "CutIn"
    CROSSING_PATH = "CrossingPath"
    UNKNOWN = "Unknown"


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AgentState:
    """Single-sample kinematic state of one agent."""

    x: float          # longitudinal position along lane centerline (m)
    y: float          # lateral offset from centerline (m)
    v: float          # speed (m/s)
    a: float          # signed longitudinal acceleration (m/s^2, < 0 braking)
    heading: float = 0.0  # rad, 0 = road tangent


@dataclass(frozen=True)
class AgentStates:
    """Time series of one agent's states (struct of arrays)."""

    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    a: np.ndarray
    heading: np.ndarray

    def __post_init__(self):
        for name in ("x", "y", "v", "a", "heading"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    def __len__(self) -> int:
        return len(self.x)

    def sample(self, i: int) -> AgentState:
        return AgentState(
            float(self.x[i]), float(self.y[i]), float(self.v[i]),
            float(self.a[i]), float(self.heading[i]))

    @classmethod
    def from_arrays(cls, x, y, v, a, heading=None) -> "AgentStates":
        x = np.asarray(x, dtype=float)
        if heading is None:
            heading = np.zeros_like(x)
        return cls(x=x, y=np.asarray(y, float), v=np.asarray(v, float),
                   a=np.asarray(a, float), heading=np.asarray(heading, float))


@dataclass(frozen=True)
class ContextFlags:
    """Per-sample observables plus event-level annotator judgment inputs.

    The event-level booleans are explicit inputs, never inferred: whether a
    brake light onset counts as surprising, or whether a slowdown was to be
    expected (visible queue, red light, downhill), is supplied by whoever
    produced the trace.
    """

    brake_light_on: np.ndarray
    occluded: np.ndarray
    brake_light_surprising: bool = False
    expected_slowdown_context: bool = False
    eyes_off_path: bool = False
    impaired: bool = False

    def __post_init__(self):
        object.__setattr__(self, "brake_light_on",
                           _readonly(self.brake_light_on, dtype=bool))
        object.__setattr__(self, "occluded",
                           _readonly(self.occluded, dtype=bool))

    @classmethod
    def quiet(cls, n: int, **event_flags) -> "ContextFlags":
        """All-off per-sample flags for a trace of n samples."""
        return cls(brake_light_on=np.zeros(n, bool),
                   occluded=np.zeros(n, bool), **event_flags)

    def event_dict(self) -> dict:
        return {
            "brake_light_surprising": self.brake_light_surprising,
            "expected_slowdown_context": self.expected_slowdown_context,
            "eyes_off_path": self.eyes_off_path,
            "impaired": self.impaired,
        }


@dataclass(frozen=True)
class KinematicTrace:
    """Uniformly sampled two-agent kinematics with context flags.

    Immutable after construction; all operations on traces are pure and
    return new instances, so traces are safe to share across threads.
    """

    dt: float
    t0: float
    sv: AgentStates
    pov: AgentStates
    pov_width: float
    flags: ContextFlags
    scenario_kind: ScenarioKind = ScenarioKind.UNKNOWN

    @property
    def n(self) -> int:
        return len(self.sv)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def span(self) -> float:
        """Duration covered, (n - 1) * dt."""
        return (self.n - 1) * self.dt

    def gap(self) -> np.ndarray:
        """Bumper-to-bumper longitudinal gap pov.x - sv.x."""
        return self.pov.x - self.sv.x


@dataclass(frozen=True)
class Violation:
    """One invariant violation, naming the field and sample index."""

    field: str
    index: int | None
    message: str

    def __str__(self):
        where = f"[{self.index}]" if self.index is not None else ""
        return f"{self.field}{where}: {self.message}"


def validate_trace(trace: KinematicTrace) -> list[Violation]:
    """Check every trace invariant; empty list means the trace is valid."""
    out: list[Violation] = []
    n_sv, n_pov = len(trace.sv), len(trace.pov)
    if n_sv != n_pov:
        out.append(Violation("pov", None,
                             f"length {n_pov} != sv length {n_sv}"))
    if n_sv < 2:
        out.append(Violation("sv", None, f"needs >= 2 samples, has {n_sv}"))
    if not trace.dt > 0:
        out.append(Violation("dt", None, f"must be > 0, is {trace.dt}"))
    if not trace.pov_width > 0:
        out.append(Violation("pov_width", None,
                             f"must be > 0, is {trace.pov_width}"))
    for agent_name in ("sv", "pov"):
        agent = getattr(trace, agent_name)
        for arr_name in ("x", "y", "v", "a", "heading"):
            arr = getattr(agent, arr_name)
            bad = np.flatnonzero(~np.isfinite(arr))
            for i in bad:
                out.append(Violation(f"{agent_name}.{arr_name}", int(i),
                                     "not finite"))
        for i in np.flatnonzero(agent.v < 0):
            out.append(Violation(f"{agent_name}.v", int(i),
                                 f"negative speed {agent.v[i]:g}"))
        for i in np.flatnonzero(np.abs(agent.a) > MAX_ABS_ACCEL):
            out.append(Violation(f"{agent_name}.a", int(i),
                                 f"|a| = {abs(agent.a[i]):g} exceeds "
                                 f"{MAX_ABS_ACCEL:g} m/s^2"))
    for flag_name in ("brake_light_on", "occluded"):
        arr = getattr(trace.flags, flag_name)
        if len(arr) != n_sv:
            out.append(Violation(f"flags.{flag_name}", None,
                                 f"length {len(arr)} != trace length {n_sv}"))
    return out


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def load_trace(path, fmt: str = "csv", sidecar=None) -> KinematicTrace:
    """Load a trace CSV plus its sidecar JSON of event-level flags.

    dt and t0 are inferred from the timestamp column, which must be
    strictly increasing and uniformly spaced (a (t0, dt) grid cannot
    represent anything else). Raises MissingColumn, NaNValue or
    NonMonotonicTime naming the offending row/column.
    """
    if fmt != "csv":
        raise ValueError(f"unsupported trace format: {fmt!r}")
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in CSV_COLUMNS:
            if col not in header:
                raise MissingColumn(f"{path.name}: missing column {col!r}")
        rows = list(reader)
    if not rows:
        raise EmptyTrace(f"{path.name}: no data rows")

    cols: dict[str, list[float]] = {c: [] for c in CSV_COLUMNS}
    for i, row in enumerate(rows):
        line = i + 2  # header is line 1
        for col in CSV_COLUMNS:
            raw = row[col]
            try:
                val = float(raw)
            except (TypeError, ValueError):
                raise NaNValue(
                    f"{path.name} line {line}: column {col!r} has "
                    f"unparseable value {raw!r}") from None
            if math.isnan(val):
                raise NaNValue(
                    f"{path.name} line {line}: column {col!r} is NaN")
            cols[col].append(val)

    t = np.asarray(cols["t"])
    diffs = np.diff(t)
    for i in np.flatnonzero(diffs <= 0):
        raise NonMonotonicTime(
            f"{path.name} line {int(i) + 3}: timestamp {t[i + 1]:g} does not "
            f"increase past {t[i]:g}")
    dt = float(diffs[0]) if len(diffs) else DEFAULT_DT
    if len(diffs) and np.max(np.abs(diffs - dt)) > 1e-6 * max(dt, 1.0):
        i = int(np.argmax(np.abs(diffs - dt)))
        raise NonMonotonicTime(
            f"{path.name} line {int(i) + 3}: non-uniform sample spacing "
            f"{diffs[i]:g} (expected {dt:g})")

    event_flags = {}
    kind = ScenarioKind.UNKNOWN
    sc = Path(sidecar) if sidecar is not None else sidecar_path(path)
    if sc.exists():
        with open(sc) as fh:
            meta = json.load(fh)
        kind = ScenarioKind(meta.get("scenario_kind", "Unknown"))
        for key in ("brake_light_surprising", "expected_slowdown_context",
                    "eyes_off_path", "impaired"):
            if key in meta:
                event_flags[key] = bool(meta[key])

    n = len(rows)
    flags = ContextFlags(
        brake_light_on=np.asarray(cols["brake_light_on"]) != 0,
        occluded=np.asarray(cols["occluded"]) != 0,
        **event_flags)
    return KinematicTrace(
        dt=dt, t0=float(t[0]),
        sv=AgentStates.from_arrays(cols["sv_x"], cols["sv_y"],
                                   cols["sv_v"], cols["sv_a"]),
        pov=AgentStates.from_arrays(cols["pov_x"], cols["pov_y"],
                                    cols["pov_v"], cols["pov_a"]),
        pov_width=float(cols["pov_width"][0]),
        flags=flags, scenario_kind=kind)


def save_trace(trace: KinematicTrace, path, sidecar=None) -> None:
    """Write the trace CSV and its sidecar JSON.

    Floats are written with repr so that load_trace(save_trace(t)) is the
    identity on all numeric fields.
    """
    path = Path(path)
    t = trace.t
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for i in range(trace.n):
            writer.writerow([
                repr(float(t[i])),
                repr(float(trace.sv.x[i])), repr(float(trace.sv.y[i])),
                repr(float(trace.sv.v[i])), repr(float(trace.sv.a[i])),
                repr(float(trace.pov.x[i])), repr(float(trace.pov.y[i])),
                repr(float(trace.pov.v[i])), repr(float(trace.pov.a[i])),
                repr(float(trace.pov_width)),
                int(trace.flags.brake_light_on[i]),
                int(trace.flags.occluded[i]),
            ])
    meta = {"scenario_kind": trace.scenario_kind.value}
    meta.update(trace.flags.event_dict())
    sc = Path(sidecar) if sidecar is not None else sidecar_path(path)
    with open(sc, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def resample(trace: KinematicTrace, dt_new: float) -> KinematicTrace:
    """Resample to a new uniform grid starting at t0.

    Continuous fields are linearly interpolated; boolean flags are carried
    by the nearest previous sample. The covered span is preserved to within
    one dt_new.
    """
    if not dt_new > 0:
        raise ValueError(f"dt_new must be > 0, got {dt_new}")
    if trace.n < 2:
        raise EmptyTrace(f"cannot resample a {trace.n}-sample trace")
    t_old = trace.t
    n_new = int(math.floor(trace.span / dt_new + 1e-9)) + 1
    t_new = trace.t0 + dt_new * np.arange(n_new)

    def interp_agent(agent: AgentStates) -> AgentStates:
        return AgentStates.from_arrays(
            *(np.interp(t_new, t_old, getattr(agent, f))
              for f in ("x", "y", "v", "a", "heading")))

    prev_idx = np.clip(
        np.searchsorted(t_old, t_new + 1e-12, side="right") - 1,
        0, trace.n - 1)
    flags = ContextFlags(
        brake_light_on=trace.flags.brake_light_on[prev_idx],
        occluded=trace.flags.occluded[prev_idx],
        **trace.flags.event_dict())
    return replace(trace, dt=dt_new, sv=interp_agent(trace.sv),
                   pov=interp_agent(trace.pov), flags=flags)
