"""Sensor event streams, timing features and behavior classification.

Two features summarize a user's routine: how long they take to move between
rooms (one duration per consecutive pair of events in different locations)
and how long they hold an activity (one duration per maximal run of the same
non-idle activity).  Users are assigned to the behavior class whose centroid
is nearest in feature space; centroids evolve by incremental mean as new
observations fold in, and a trust value in [0, 1] expresses how well a fresh
feature vector matches a class.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

IDLE_ACTIVITY = "none"

EVENT_HEADER = ["timestamp", "user", "location", "activity"]

DEFAULT_DISTANCE_FLOOR = 30.0  # seconds


class OrderingError(ValueError):
    """A user's events are not sorted by timestamp."""


class EventFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownClassError(KeyError):
    pass


class ModelFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class SensorEvent:
    user: str
    timestamp: int
    location: str
    activity: str = IDLE_ACTIVITY


@dataclass
class FeatureVector:
    """Mean durations per feature key plus the observation count behind each."""

    entries: Dict[str, float] = field(default_factory=dict)
    support: Dict[str, int] = field(default_factory=dict)

    def copy(self) -> "FeatureVector":
        return FeatureVector(dict(self.entries), dict(self.support))


@dataclass
class BehaviorClass:
    id: str
    centroid: FeatureVector
    n: int = 1


@dataclass
class BehaviorModel:
    classes: List[BehaviorClass]
    distance_floor: float = DEFAULT_DISTANCE_FLOOR

    def __post_init__(self) -> None:
        ids = [c.id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate class ids: {ids}")
        if self.distance_floor <= 0:
            raise ValueError("distance_floor must be positive")

    def get(self, class_id: str) -> BehaviorClass:
        for cls in self.classes:
            if cls.id == class_id:
                return cls
        raise UnknownClassError(class_id)


def move_key(from_room: str, to_room: str) -> str:
    return f"move:{from_room}->{to_room}"


def hold_key(activity: str) -> str:
    return f"hold:{activity}"


def _user_stream(events, user: str) -> List[SensorEvent]:
    stream = [e for e in events if e.user == user]
    previous = None
    for event in stream:
        if previous is not None and event.timestamp < previous.timestamp:
            raise OrderingError(
                f"{user}: timestamp {event.timestamp} after {previous.timestamp}")
        previous = event
    return stream


def moving_time(events, user: str) -> Dict[Tuple[str, str], List[float]]:
    """Durations of room changes, keyed by (from, to).

    Consecutive events in the same room contribute nothing.
    """
    stream = _user_stream(events, user)
    out: Dict[Tuple[str, str], List[float]] = {}
    for before, after in zip(stream, stream[1:]):
        if before.location != after.location:
            key = (before.location, after.location)
            out.setdefault(key, []).append(float(after.timestamp - before.timestamp))
    return out


def holding_time(events, user: str) -> Dict[str, List[float]]:
    """Durations of maximal runs of the same non-idle activity.

    A single-event run has duration zero; idle (``none``) never counts.
    """
    stream = _user_stream(events, user)
    out: Dict[str, List[float]] = {}
    current: Optional[str] = None
    start = last = 0

    def close_run() -> None:
        if current is not None and current != IDLE_ACTIVITY:
            out.setdefault(current, []).append(float(last - start))

    for event in stream:
        if event.activity == current:
            last = event.timestamp
            continue
        close_run()
        current = event.activity
        start = last = event.timestamp
    close_run()
    return out


def extract_features(events, user: str) -> FeatureVector:
    """Per-key mean of the moving and holding duration lists."""
    fv = FeatureVector()
    for (src, dst), durations in moving_time(events, user).items():
        key = move_key(src, dst)
        fv.entries[key] = sum(durations) / len(durations)
        fv.support[key] = len(durations)
    for activity, durations in holding_time(events, user).items():
        key = hold_key(activity)
        fv.entries[key] = sum(durations) / len(durations)
        fv.support[key] = len(durations)
    return fv


def distance(a: FeatureVector, b: FeatureVector) -> float:
    """Euclidean distance over the union of keys; absent keys count as zero.

    Keys are summed in sorted order so the result is bit-identical no matter
    how the vectors' dicts were built.
    """
    keys = sorted(set(a.entries) | set(b.entries))
    return math.sqrt(sum(
        (a.entries.get(k, 0.0) - b.entries.get(k, 0.0)) ** 2 for k in keys))


def classify(model: BehaviorModel, fv: FeatureVector) -> Tuple[str, float]:
    """Nearest class by centroid distance; ties go to the earlier class."""
    if not model.classes:
        raise ValueError("model has no classes")
    best = model.classes[0]
    best_d = distance(fv, best.centroid)
    for cls in model.classes[1:]:
        d = distance(fv, cls.centroid)
        if d < best_d:
            best, best_d = cls, d
    return best.id, best_d


def update_class(model: BehaviorModel, class_id: str,
                 fv: FeatureVector) -> BehaviorModel:
    """Fold one observation into a class centroid by incremental mean.

    Keys the centroid already has move by ``(x - c) / (n + 1)``; keys it has
    not seen adopt the observed value outright.  Other classes are untouched.
    """
    cls = model.get(class_id)
    for key, x in fv.entries.items():
        if key in cls.centroid.entries:
            c = cls.centroid.entries[key]
            cls.centroid.entries[key] = c + (x - c) / (cls.n + 1)
        else:
            cls.centroid.entries[key] = x
        cls.centroid.support[key] = cls.centroid.support.get(key, 0) + 1
    cls.n += 1
    return model


def trust_score(model: BehaviorModel, class_id: str, fv: FeatureVector) -> float:
    """``1 / (1 + d/floor)``: 1 at an exact match, 0.5 at one floor away."""
    cls = model.get(class_id)
    d = distance(fv, cls.centroid)
    return 1.0 / (1.0 + d / model.distance_floor)


# ---------------------------------------------------------------------------
# Event CSV: header `timestamp,user,location,activity`; rows per-user sorted.
# ---------------------------------------------------------------------------

def load_events(text: str) -> List[SensorEvent]:
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise EventFormatError("missing header", 1)
    header = [cell.strip() for cell in rows[0]]
    if header != EVENT_HEADER:
        raise EventFormatError(
            f"expected header {','.join(EVENT_HEADER)}, got {','.join(header)}", 1)
    events: List[SensorEvent] = []
    last_seen: Dict[str, int] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != 4:
            raise EventFormatError(f"expected 4 fields, got {len(row)}", lineno)
        raw_ts, user, location, activity = (cell.strip() for cell in row)
        try:
            timestamp = int(raw_ts)
        except ValueError:
            raise EventFormatError(f"bad timestamp {raw_ts!r}", lineno) from None
        if user in last_seen and timestamp < last_seen[user]:
            raise EventFormatError(
                f"events for {user} not sorted (timestamp {timestamp})", lineno)
        last_seen[user] = timestamp
        events.append(SensorEvent(user=user, timestamp=timestamp,
                                  location=location, activity=activity))
    return events


def load_events_file(path) -> List[SensorEvent]:
    with open(path, "r", encoding="utf-8") as fh:
        return load_events(fh.read())


def users_in(events) -> List[str]:
    seen: Dict[str, None] = {}
    for event in events:
        seen.setdefault(event.user, None)
    return list(seen)


# ---------------------------------------------------------------------------
# Model checkpoint: `class <id> n=<n>` then indented `  <key> = <value>` lines.
# ---------------------------------------------------------------------------

def _format_value(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def save_model(model: BehaviorModel) -> str:
    lines = []
    for cls in model.classes:
        lines.append(f"class {cls.id} n={cls.n}")
        for key in sorted(cls.centroid.entries):
            lines.append(f"  {key} = {_format_value(cls.centroid.entries[key])}")
    return "\n".join(lines) + ("\n" if lines else "")


def load_model(text: str,
               distance_floor: float = DEFAULT_DISTANCE_FLOOR) -> BehaviorModel:
    classes: List[BehaviorClass] = []
    current: Optional[BehaviorClass] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line.startswith("class "):
            parts = line.split()
            if len(parts) != 3 or not parts[2].startswith("n="):
                raise ModelFormatError(f"bad class line: {line!r}", lineno)
            try:
                n = int(parts[2][2:])
            except ValueError:
                raise ModelFormatError(f"bad count in {line!r}", lineno) from None
            current = BehaviorClass(id=parts[1], centroid=FeatureVector(), n=n)
            classes.append(current)
            continue
        if line.startswith("  ") and current is not None:
            if "=" not in line:
                raise ModelFormatError(f"bad centroid line: {line!r}", lineno)
            key, _, value = line.partition("=")
            try:
                parsed = float(value.strip())
            except ValueError:
                raise ModelFormatError(f"bad value in {line!r}", lineno) from None
            key = key.strip()
            current.centroid.entries[key] = parsed
            current.centroid.support[key] = max(current.n, 1)
            continue
        raise ModelFormatError(f"unrecognized line: {line!r}", lineno)
    return BehaviorModel(classes=classes, distance_floor=distance_floor)


def load_model_file(path,
                    distance_floor: float = DEFAULT_DISTANCE_FLOOR) -> BehaviorModel:
    with open(path, "r", encoding="utf-8") as fh:
        return load_model(fh.read(), distance_floor=distance_floor)


def save_model_file(model: BehaviorModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(save_model(model))
