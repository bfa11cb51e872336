"""The four challenge metrics and their raw statistics.

Detection is scored in one-second segments (error rate and F-score from
substitution/deletion/insertion counts); localization is scored frame-wise
(Hungarian-matched spherical distance and frame recall). All statistics
accumulate additively, so per-recording results merge in any order and
pooled metrics are computed once from the pooled counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import (FRAMES_PER_SEGMENT, AnnotationSet, Doa, FrameWiseOutput,
                   events_to_frames, frame_overlaps)


def spherical_distance(a: Doa, b: Doa) -> float:
    """Great-circle central angle in radians.

    arccos(sin el_a sin el_b + cos el_a cos el_b cos(az_a - az_b)) with the
    argument clamped to [-1, 1]; identical directions short-circuit to an
    exact zero.
    """
    if a.azimuth == b.azimuth and a.elevation == b.elevation:
        return 0.0
    arg = (math.sin(a.elevation) * math.sin(b.elevation)
           + math.cos(a.elevation) * math.cos(b.elevation)
           * math.cos(a.azimuth - b.azimuth))
    return math.acos(min(1.0, max(-1.0, arg)))


def hungarian_assign(cost: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost assignment of min(R, E) pairs in an R x E cost matrix."""
    cost = np.atleast_2d(np.asarray(cost, dtype=np.float64))
    if cost.size == 0:
        return [], 0.0
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]
    return pairs, float(cost[rows, cols].sum())


@dataclass
class DoaFrameLists:
    """Per-frame reference and estimate DOA lists.

    Unlike the class-indexed frame activity, these lists keep every DOA of
    every overlapping event (same-class overlaps included), so localization
    scoring sees all references.
    """

    reference: list[list[Doa]]
    estimate: list[list[Doa]]

    def __post_init__(self):
        if len(self.reference) != len(self.estimate):
            raise ValueError("reference and estimate must cover the same frames")

    @property
    def n_frames(self) -> int:
        return len(self.reference)

    @classmethod
    def from_annotations(cls, ref: AnnotationSet, est: AnnotationSet) -> "DoaFrameLists":
        n_frames = ref.n_frames
        return cls(reference=_per_frame_doas(ref, n_frames),
                   estimate=_per_frame_doas(est, n_frames))


def _per_frame_doas(ann: AnnotationSet, n_frames: int) -> list[list[Doa]]:
    frames: list[list[Doa]] = [[] for _ in range(n_frames)]
    hop = ann.frame_hop
    for ev in ann.events:
        first = max(0, math.floor(ev.onset / hop))
        last = min(n_frames - 1, math.ceil(ev.offset / hop))
        for t in range(first, last + 1):
            if frame_overlaps(ev.onset, ev.offset, t, hop):
                frames[t].append(ev.doa.without_distance())
    return frames


def _frame_assignment_cost_deg(ref: list[Doa], est: list[Doa]) -> float:
    """Hungarian-matched spherical distance (degrees) over min(R, E) pairs."""
    if not ref or not est:
        return 0.0
    cost = np.array([[math.degrees(spherical_distance(r, e)) for e in est]
                     for r in ref])
    _, total = hungarian_assign(cost)
    return total


def doa_error_stats(frames: DoaFrameLists) -> tuple[float, int]:
    """(summed matched distance in degrees, summed estimate count)."""
    num = 0.0
    den = 0
    for ref, est in zip(frames.reference, frames.estimate):
        num += _frame_assignment_cost_deg(ref, est)
        den += len(est)
    return num, den


def doa_error(frames: DoaFrameLists) -> float:
    """Average matched angular error in degrees; 0 when nothing was estimated.

    The numerator matches min(D_R, D_E) pairs per frame; the denominator is
    the total estimate count, taken as written (count mismatches are
    surfaced by frame recall instead).
    """
    num, den = doa_error_stats(frames)
    return num / den if den > 0 else 0.0


def frame_recall_stats(frames: DoaFrameLists) -> tuple[int, int]:
    """(frames where reference and estimate counts agree, total frames)."""
    hits = sum(1 for ref, est in zip(frames.reference, frames.estimate)
               if len(ref) == len(est))
    return hits, frames.n_frames


def frame_recall(frames: DoaFrameLists) -> float:
    """Fraction of frames where the DOA counts agree (both-empty included)."""
    hits, total = frame_recall_stats(frames)
    if total < 1:
        raise ValueError("need at least one frame")
    return hits / total


@dataclass
class SegmentCounts:
    """Segment-level detection statistics, accumulated over one-second segments.

    S/D/I decompose per-segment false positives and negatives:
    S = sum_k min(FP_k, FN_k), D = sum_k max(0, FN_k - FP_k),
    I = sum_k max(0, FP_k - FN_k).
    """

    tp: int = 0
    fp: int = 0
    fn: int = 0
    n: int = 0
    s: int = 0
    d: int = 0
    i: int = 0

    def __add__(self, other: "SegmentCounts") -> "SegmentCounts":
        return SegmentCounts(self.tp + other.tp, self.fp + other.fp,
                             self.fn + other.fn, self.n + other.n,
                             self.s + other.s, self.d + other.d, self.i + other.i)


def segment_sed_counts(ref: FrameWiseOutput, est: FrameWiseOutput,
                       segment_frames: int = FRAMES_PER_SEGMENT) -> SegmentCounts:
    """Pool frame activity into segments (active in any frame) and count.

    Reference and estimate must share the frame and class grid.
    """
    if ref.activity.shape != est.activity.shape:
        raise ValueError(f"shape mismatch: {ref.activity.shape} vs {est.activity.shape}")
    if segment_frames < 1:
        raise ValueError("segment_frames must be >= 1")
    counts = SegmentCounts()
    t_frames = ref.n_frames
    for lo in range(0, t_frames, segment_frames):
        hi = min(lo + segment_frames, t_frames)
        ref_seg = ref.activity[lo:hi].any(axis=0)
        est_seg = est.activity[lo:hi].any(axis=0)
        fp_k = int(np.sum(est_seg & ~ref_seg))
        fn_k = int(np.sum(ref_seg & ~est_seg))
        counts.tp += int(np.sum(ref_seg & est_seg))
        counts.fp += fp_k
        counts.fn += fn_k
        counts.n += int(np.sum(ref_seg))
        counts.s += min(fp_k, fn_k)
        counts.d += max(0, fn_k - fp_k)
        counts.i += max(0, fp_k - fn_k)
    return counts


def er_fscore(counts: SegmentCounts) -> tuple[float, float]:
    """(error rate, F-score in percent) from pooled segment counts.

    ER = (S + D + I) / N; F = 100 * 2TP / (2TP + FP + FN). With no active
    references ER is reported as 0 and flagged upstream; a fully empty
    comparison scores F = 100 (nothing to get wrong).
    """
    er = (counts.s + counts.d + counts.i) / counts.n if counts.n > 0 else 0.0
    f_den = 2 * counts.tp + counts.fp + counts.fn
    f = 100.0 * 2 * counts.tp / f_den if f_den > 0 else 100.0
    return er, f


@dataclass
class MetricsAccumulator:
    """Additive raw statistics for any pool of recordings."""

    counts: SegmentCounts = field(default_factory=SegmentCounts)
    doa_num_deg: float = 0.0
    doa_den: int = 0
    fr_hits: int = 0
    n_frames: int = 0

    def __add__(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        return MetricsAccumulator(
            counts=self.counts + other.counts,
            doa_num_deg=self.doa_num_deg + other.doa_num_deg,
            doa_den=self.doa_den + other.doa_den,
            fr_hits=self.fr_hits + other.fr_hits,
            n_frames=self.n_frames + other.n_frames,
        )

    def report(self) -> "MetricsReport":
        er, f = er_fscore(self.counts)
        return MetricsReport(
            er=er,
            f=f,
            doa_error_deg=self.doa_num_deg / self.doa_den if self.doa_den > 0 else 0.0,
            frame_recall=100.0 * self.fr_hits / self.n_frames if self.n_frames else 0.0,
            er_undefined=self.counts.n == 0,
            doa_undefined=self.doa_den == 0,
            raw=self,
        )


def score_recording(ref: AnnotationSet, est: AnnotationSet,
                    segment_frames: int = FRAMES_PER_SEGMENT) -> MetricsAccumulator:
    """Raw statistics for one reference/estimate annotation pair."""
    n_classes = max(ref.n_classes(), est.n_classes(), 1)
    ref_frames = events_to_frames(ref, n_classes)
    est_frames = events_to_frames(est, n_classes)
    if ref_frames.n_frames != est_frames.n_frames:
        raise ValueError("reference and estimate cover different durations")
    lists = DoaFrameLists.from_annotations(ref, est)
    num, den = doa_error_stats(lists)
    hits, total = frame_recall_stats(lists)
    return MetricsAccumulator(
        counts=segment_sed_counts(ref_frames, est_frames, segment_frames),
        doa_num_deg=num, doa_den=den, fr_hits=hits, n_frames=total,
    )


@dataclass
class MetricsReport:
    """The four challenge numbers plus the raw statistics they derive from."""

    er: float
    f: float
    doa_error_deg: float
    frame_recall: float
    er_undefined: bool = False
    doa_undefined: bool = False
    raw: MetricsAccumulator = field(default_factory=MetricsAccumulator)

    def to_json_dict(self) -> dict:
        return {
            "er": self.er,
            "f": self.f,
            "doa_error_deg": self.doa_error_deg,
            "frame_recall": self.frame_recall,
            "er_undefined": self.er_undefined,
            "doa_undefined": self.doa_undefined,
            "raw": {
                "tp": self.raw.counts.tp, "fp": self.raw.counts.fp,
                "fn": self.raw.counts.fn, "n": self.raw.counts.n,
                "s": self.raw.counts.s, "d": self.raw.counts.d,
                "i": self.raw.counts.i,
                "doa_num": self.raw.doa_num_deg, "doa_den": self.raw.doa_den,
                "fr_hits": self.raw.fr_hits, "frames": self.raw.n_frames,
            },
        }

    def table(self) -> str:
        lines = [
            f"  error rate      : {self.er:.3f}" + (" (undefined: no references)" if self.er_undefined else ""),
            f"  F-score         : {self.f:.1f} %",
            f"  DOA error       : {self.doa_error_deg:.1f} deg" + (" (undefined: no estimates)" if self.doa_undefined else ""),
            f"  frame recall    : {self.frame_recall:.1f} %",
        ]
        return "\n".join(lines)


@dataclass
class Standing:
    position: int
    method_id: str
    final_score: int
    ranks: dict[str, int]


def rank_methods(entries: list[tuple[str, MetricsReport]]) -> list[Standing]:
    """Order methods by the sum of their four per-metric ranks.

    Each metric is ranked separately (ties share the better rank); the
    final score is the rank sum, ascending, with ties broken by error rate
    and then DOA error.
    """
    if not entries:
        raise ValueError("need at least one entry")

    def ranks_for(values: list[float], lower_better: bool) -> list[int]:
        out = []
        for v in values:
            better = sum(1 for u in values if (u < v if lower_better else u > v))
            out.append(1 + better)
        return out

    ids = [mid for mid, _ in entries]
    reports = [rep for _, rep in entries]
    rank_er = ranks_for([r.er for r in reports], lower_better=True)
    rank_f = ranks_for([r.f for r in reports], lower_better=False)
    rank_de = ranks_for([r.doa_error_deg for r in reports], lower_better=True)
    rank_fr = ranks_for([r.frame_recall for r in reports], lower_better=False)
    scored = []
    for k, mid in enumerate(ids):
        final = rank_er[k] + rank_f[k] + rank_de[k] + rank_fr[k]
        scored.append((final, reports[k].er, reports[k].doa_error_deg, mid, {
            "er": rank_er[k], "f": rank_f[k], "doa_error": rank_de[k],
            "frame_recall": rank_fr[k],
        }))
    scored.sort(key=lambda item: item[:3])
    standings = []
    for idx, (final, er, de, mid, ranks) in enumerate(scored):
        if idx > 0 and scored[idx - 1][:3] == (final, er, de):
            position = standings[-1].position
        else:
            position = idx + 1
        standings.append(Standing(position=position, method_id=mid,
                                  final_score=final, ranks=ranks))
    return standings
