"""Shared domain types: directions, events, annotations and their frame-wise form.

Coordinate convention (right-handed, matching the array geometry):
front = (0, 0), left = (+90deg, 0), top = (azimuth, +90deg). Azimuth is
stored in radians in [-pi, pi), elevation in [-pi/2, pi/2]. Annotation
files on disk use degrees; everything in memory is radians.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

#: The single spherical convention used everywhere: right-handed, front at
#: (0, 0), left at (+90deg, 0), top at (azimuth, +90deg).
SPHERICAL_COORDINATE_CONVENTION = (
    "right-handed; front=(0,0), left=(90deg,0), top=(*,90deg); "
    "azimuth in [-180,180) deg, elevation in [-90,90] deg"
)

#: Frame hop used for all frame-wise scoring, in seconds. 20 ms keeps one
#: time base with the feature front-end and makes a one-second segment
#: exactly 50 frames.
METRIC_FRAME_HOP_S = 0.02

#: Frames per one-second scoring segment at the metric hop.
FRAMES_PER_SEGMENT = round(1.0 / METRIC_FRAME_HOP_S)

_TWO_PI = 2.0 * math.pi


def wrap_azimuth(azimuth: float) -> float:
    """Wrap an azimuth angle into [-pi, pi). Idempotent."""
    wrapped = (azimuth + math.pi) % _TWO_PI - math.pi
    # fmod artefacts: (x + pi) % 2pi can return 2pi for x just below pi
    if wrapped >= math.pi:
        wrapped -= _TWO_PI
    return wrapped


@dataclass(frozen=True)
class Doa:
    """A direction of arrival: azimuth/elevation in radians, optional distance in meters.

    Azimuth is wrapped into [-pi, pi) on construction; elevation must lie in
    [-pi/2, pi/2]; distance, when given, must be finite and > 0.
    """

    azimuth: float
    elevation: float
    distance: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "azimuth", wrap_azimuth(float(self.azimuth)))
        object.__setattr__(self, "elevation", float(self.elevation))
        if not math.isfinite(self.azimuth) or not math.isfinite(self.elevation):
            raise ValueError("azimuth and elevation must be finite")
        if abs(self.elevation) > math.pi / 2:
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")
        if self.distance is not None:
            dist = float(self.distance)
            if not math.isfinite(dist) or dist <= 0:
                raise ValueError(f"distance must be finite and > 0, got {self.distance}")
            object.__setattr__(self, "distance", dist)

    @classmethod
    def from_degrees(cls, azimuth_deg: float, elevation_deg: float,
                     distance: float | None = None) -> "Doa":
        return cls(math.radians(azimuth_deg), math.radians(elevation_deg), distance)

    @property
    def azimuth_deg(self) -> float:
        return math.degrees(self.azimuth)

    @property
    def elevation_deg(self) -> float:
        return math.degrees(self.elevation)

    def unit_vector(self) -> np.ndarray:
        """Cartesian unit vector (x front, y left, z up)."""
        ce = math.cos(self.elevation)
        return np.array([
            ce * math.cos(self.azimuth),
            ce * math.sin(self.azimuth),
            math.sin(self.elevation),
        ])

    def without_distance(self) -> "Doa":
        return Doa(self.azimuth, self.elevation)


@dataclass(frozen=True)
class EventInstance:
    """One placed sound event: class, time extent, direction and source clip."""

    class_id: int
    onset: float
    offset: float
    doa: Doa
    source_ref: str = ""

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")
        if self.onset < 0:
            raise ValueError(f"onset must be >= 0, got {self.onset}")
        if self.offset <= self.onset:
            raise ValueError(f"offset {self.offset} must exceed onset {self.onset}")


@dataclass(frozen=True)
class AnnotationSet:
    """Event-level labels for one recording (reference or estimate side).

    Events are sorted by onset on construction and must fit inside the
    declared duration.
    """

    recording_id: str
    events: tuple[EventInstance, ...]
    duration: float
    frame_hop: float = METRIC_FRAME_HOP_S

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.frame_hop <= 0:
            raise ValueError("frame_hop must be > 0")
        events = tuple(sorted(self.events, key=lambda e: (e.onset, e.class_id)))
        object.__setattr__(self, "events", events)
        for ev in events:
            if ev.offset > self.duration + 1e-9:
                raise ValueError(
                    f"event (class {ev.class_id}, {ev.onset:.3f}-{ev.offset:.3f}s) "
                    f"extends beyond duration {self.duration}s"
                )

    @property
    def n_frames(self) -> int:
        return math.ceil(self.duration / self.frame_hop - 1e-9)

    def n_classes(self) -> int:
        """Smallest class count that covers every event (0 when empty)."""
        return 1 + max((e.class_id for e in self.events), default=-1)

    def max_polyphony(self) -> int:
        """Maximum number of events simultaneously active, by boundary sweep."""
        bounds = []
        for ev in self.events:
            bounds.append((ev.onset, 1))
            bounds.append((ev.offset, -1))
        bounds.sort()
        peak = count = 0
        for _, step in bounds:
            count += step
            peak = max(peak, count)
        return peak


@dataclass
class MultichannelAudio:
    """A rendered 4 x N sample buffer with its format tag ("foa" or "mic")."""

    audio: np.ndarray
    sample_rate: int
    fmt: str

    def __post_init__(self):
        self.audio = np.asarray(self.audio, dtype=np.float64)
        if self.audio.ndim != 2:
            raise ValueError("audio must be (channels, samples)")

    @property
    def n_channels(self) -> int:
        return self.audio.shape[0]

    @property
    def n_samples(self) -> int:
        return self.audio.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass
class FrameWiseOutput:
    """Discretized activity: a T x C binary matrix plus one Doa per active cell.

    ``doas[(t, c)]`` exists iff ``activity[t, c]`` is set.
    """

    activity: np.ndarray
    doas: dict[tuple[int, int], Doa] = field(default_factory=dict)

    def __post_init__(self):
        self.activity = np.asarray(self.activity, dtype=bool)
        if self.activity.ndim != 2:
            raise ValueError("activity must be a T x C matrix")
        active = {(int(t), int(c)) for t, c in zip(*np.nonzero(self.activity))}
        if active != set(self.doas):
            raise ValueError("doas keys must match the active cells exactly")

    @property
    def n_frames(self) -> int:
        return self.activity.shape[0]

    @property
    def n_classes(self) -> int:
        return self.activity.shape[1]


def frame_overlaps(onset: float, offset: float, frame: int, hop: float) -> bool:
    """True when [onset, offset) overlaps frame ``frame`` = [frame*hop, (frame+1)*hop)."""
    return onset < (frame + 1) * hop and offset > frame * hop


def events_to_frames(ann: AnnotationSet, n_classes: int | None = None) -> FrameWiseOutput:
    """Discretize an annotation set onto the metric frame grid.

    A frame is active for class c when any class-c event overlaps it by a
    positive amount. The frame's Doa for the class comes from the earliest-
    onset overlapping event of that class (class cells are single-valued;
    the DOA-metric frame lists keep all directions instead).
    """
    t_frames = ann.n_frames
    c = ann.n_classes() if n_classes is None else n_classes
    if n_classes is not None and ann.n_classes() > n_classes:
        raise ValueError(f"event class ids exceed n_classes={n_classes}")
    activity = np.zeros((t_frames, c), dtype=bool)
    doas: dict[tuple[int, int], Doa] = {}
    hop = ann.frame_hop
    for ev in ann.events:  # sorted by onset: first writer wins the Doa slot
        first = max(0, math.floor(ev.onset / hop))
        last = min(t_frames - 1, math.ceil(ev.offset / hop))
        for t in range(first, last + 1):
            if frame_overlaps(ev.onset, ev.offset, t, hop) and not activity[t, ev.class_id]:
                activity[t, ev.class_id] = True
                doas[(t, ev.class_id)] = ev.doa
    return FrameWiseOutput(activity, doas)


def frames_to_events(frames: FrameWiseOutput, frame_hop: float = METRIC_FRAME_HOP_S,
                     recording_id: str = "", duration: float | None = None) -> AnnotationSet:
    """Re-segment frame-wise activity into maximal per-class runs.

    Inverse of :func:`events_to_frames` up to one frame_hop of onset/offset
    quantization. The run's Doa is the first frame's Doa.
    """
    t_frames, n_classes = frames.activity.shape
    events = []
    for c in range(n_classes):
        t = 0
        while t < t_frames:
            if frames.activity[t, c]:
                start = t
                while t < t_frames and frames.activity[t, c]:
                    t += 1
                events.append(EventInstance(
                    class_id=c,
                    onset=start * frame_hop,
                    offset=t * frame_hop,
                    doa=frames.doas[(start, c)],
                ))
            else:
                t += 1
    dur = duration if duration is not None else t_frames * frame_hop
    return AnnotationSet(recording_id=recording_id, events=tuple(events),
                         duration=dur, frame_hop=frame_hop)


# ---------------------------------------------------------------------------
# Annotation CSV: class,start_time_s,end_time_s,azimuth_deg,elevation_deg,distance_m
# Angles are degrees in files, radians in memory. Distance may be empty
# (estimate files usually carry none).

ANNOTATION_HEADER = ["class", "start_time_s", "end_time_s",
                     "azimuth_deg", "elevation_deg", "distance_m"]


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_annotation_csv(ann: AnnotationSet, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANNOTATION_HEADER)
        for ev in ann.events:
            dist = "" if ev.doa.distance is None else _fmt(ev.doa.distance)
            writer.writerow([
                ev.class_id, _fmt(ev.onset), _fmt(ev.offset),
                _fmt(ev.doa.azimuth_deg), _fmt(ev.doa.elevation_deg), dist,
            ])


def read_annotation_csv(path: str | Path, recording_id: str | None = None,
                        duration: float | None = None,
                        frame_hop: float = METRIC_FRAME_HOP_S,
                        clamp: bool = False) -> AnnotationSet:
    """Read an annotation CSV.

    ``duration`` defaults to the last offset rounded up to a whole second.
    With ``clamp=True`` events are clipped to the duration instead of
    rejected (used when scoring third-party estimate files).
    """
    path = Path(path)
    rows = []
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ANNOTATION_HEADER:
            raise ValueError(f"{path}: expected header {','.join(ANNOTATION_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 columns, got {len(row)}")
            class_id = int(row[0])
            onset, offset = float(row[1]), float(row[2])
            az_deg, el_deg = float(row[3]), float(row[4])
            dist = float(row[5]) if row[5].strip() else None
            rows.append((class_id, onset, offset, az_deg, el_deg, dist))
    if duration is None:
        last = max((offset for _, _, offset, _, _, _ in rows), default=1.0)
        duration = max(1.0, math.ceil(last - 1e-9))
    events = []
    for class_id, onset, offset, az_deg, el_deg, dist in rows:
        if clamp:
            onset = min(max(onset, 0.0), duration)
            offset = min(offset, duration)
            if offset <= onset:
                continue
        events.append(EventInstance(
            class_id=class_id, onset=onset, offset=offset,
            doa=Doa.from_degrees(az_deg, el_deg, dist),
        ))
    rec_id = recording_id if recording_id is not None else path.stem
    return AnnotationSet(recording_id=rec_id, events=tuple(events),
                         duration=duration, frame_hop=frame_hop)
