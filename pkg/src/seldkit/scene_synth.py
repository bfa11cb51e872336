"""Sound-scene and dataset generation.

A scene is sampled as a list of event placements (class, clip, start time,
grid DOA) under a polyphony cap, then rendered per format: the direct path
goes through the format's steering vector on the STFT grid, a stochastic
exponential tail emulates each room's reverberation, and a pink-noise bed
is mixed at the target SNR. Real measured impulse responses are not used
anywhere; the room acoustics are a parametric emulation, not a
reproduction of any measured space.

Determinism: the dataset plan (rooms, polyphony flags, per-recording
seeds) is a pure function of the master seed, and each recording's
sampling and rendering draw only from its own seed, so datasets are
reproducible sample-for-sample regardless of how rendering is scheduled.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import array_model, dsp
from .core import (AnnotationSet, Doa, EventInstance, MultichannelAudio,
                   write_annotation_csv)

log = logging.getLogger(__name__)

MAX_PLACEMENT_TRIES = 200


class ScenePlacementError(RuntimeError):
    """Raised when events cannot be placed under the polyphony constraint."""


class RenderError(RuntimeError):
    """Raised when a rendered event produces non-finite samples."""


@dataclass(frozen=True)
class RoomProfile:
    """Parametric acoustic character of one emulated environment."""

    room_id: int
    t60: float
    direct_to_reverb_db: float
    dimensions_label: str = ""

    def __post_init__(self):
        if not 1 <= self.room_id <= 5:
            raise ValueError("room_id must be in 1..5")
        # t60 = 0 is the anechoic escape hatch used by calibration tests
        if not (self.t60 == 0.0 or 0.1 <= self.t60 <= 2.0):
            raise ValueError("t60 must be 0 (anechoic) or within [0.1, 2.0] s")


DEFAULT_ROOMS: tuple[RoomProfile, ...] = (
    RoomProfile(1, 0.30, 8.0, "small office"),
    RoomProfile(2, 0.45, 6.0, "meeting room"),
    RoomProfile(3, 0.60, 5.0, "classroom"),
    RoomProfile(4, 0.75, 4.0, "corridor"),
    RoomProfile(5, 0.90, 3.0, "lecture hall"),
)


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to sample and render one recording."""

    max_polyphony: int
    room: RoomProfile
    seed: int
    duration: float = 60.0
    sample_rate: int = 48000
    snr_db: float | None = 30.0
    n_events: tuple[int, int] = (8, 14)

    def __post_init__(self):
        if self.max_polyphony not in (1, 2):
            raise ValueError("max_polyphony must be 1 or 2")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.sample_rate != 48000:
            raise ValueError("only 48 kHz material is supported (no resampling)")
        lo, hi = self.n_events
        if not (1 <= lo <= hi):
            raise ValueError("n_events must be an increasing positive range")


@dataclass(frozen=True)
class SourceClip:
    class_id: int
    path: str
    n_samples: int

    @property
    def duration(self) -> float:
        return self.n_samples / 48000.0


@dataclass(frozen=True)
class SourceBank:
    """Mono 48 kHz source clips grouped by class."""

    clips_by_class: dict[int, tuple[SourceClip, ...]]

    def __post_init__(self):
        if not self.clips_by_class:
            raise ValueError("bank must contain at least one class")
        for class_id, clips in self.clips_by_class.items():
            if not clips:
                raise ValueError(f"class {class_id} has no clips")

    @property
    def n_classes(self) -> int:
        return 1 + max(self.clips_by_class)

    @property
    def class_ids(self) -> list[int]:
        return sorted(self.clips_by_class)

    def longest_clip_s(self) -> float:
        return max(c.duration for clips in self.clips_by_class.values() for c in clips)

    @classmethod
    def from_directory(cls, root: str | Path) -> "SourceBank":
        """Scan ``root/<classdir>/*.wav``; sorted class dirs become ids 0..C-1."""
        root = Path(root)
        class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
        if not class_dirs:
            raise ValueError(f"no class subdirectories under {root}")
        clips_by_class: dict[int, tuple[SourceClip, ...]] = {}
        for class_id, class_dir in enumerate(class_dirs):
            clips = []
            for wav in sorted(class_dir.glob("*.wav")):
                audio, rate = dsp.read_wav(wav)
                if rate != 48000:
                    raise ValueError(f"{wav}: expected 48 kHz, got {rate}")
                if audio.shape[0] != 1:
                    raise ValueError(f"{wav}: expected mono, got {audio.shape[0]} channels")
                clips.append(SourceClip(class_id, str(wav), audio.shape[1]))
            clips_by_class[class_id] = tuple(clips)
        return cls(clips_by_class)

    def partition(self, n_parts: int, rng: np.random.Generator) -> list["SourceBank"]:
        """Split every class's examples into n_parts disjoint sub-banks.

        Example counts per part differ by at most one within each class.
        """
        if n_parts < 1:
            raise ValueError("n_parts must be >= 1")
        parts: list[dict[int, list[SourceClip]]] = [dict() for _ in range(n_parts)]
        for class_id in self.class_ids:
            clips = self.clips_by_class[class_id]
            if len(clips) < n_parts:
                raise ValueError(
                    f"class {class_id} has {len(clips)} examples; "
                    f"need at least {n_parts} to fill every partition")
            order = rng.permutation(len(clips))
            for slot, clip_idx in enumerate(order):
                parts[slot % n_parts].setdefault(class_id, []).append(clips[clip_idx])
        return [SourceBank({cid: tuple(clips) for cid, clips in part.items()})
                for part in parts]


@dataclass(frozen=True)
class SceneDescription:
    """A fully resolved scene: the spec plus its placed events."""

    recording_id: str
    spec: SceneSpec
    events: tuple[EventInstance, ...]

    def to_annotation_set(self) -> AnnotationSet:
        return AnnotationSet(recording_id=self.recording_id, events=self.events,
                             duration=self.spec.duration)

    def to_json_dict(self) -> dict:
        return {
            "recording_id": self.recording_id,
            "seed": self.spec.seed,
            "room_id": self.spec.room.room_id,
            "max_polyphony": self.spec.max_polyphony,
            "events": [
                {"class_id": ev.class_id, "onset": ev.onset, "offset": ev.offset,
                 "azimuth": ev.doa.azimuth, "elevation": ev.doa.elevation,
                 "distance": ev.doa.distance, "source_ref": ev.source_ref}
                for ev in self.events
            ],
        }


def _scene_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, stream)))


def _polyphony_ok(candidate: tuple[float, float], accepted: list[tuple[float, float]],
                  max_polyphony: int) -> bool:
    """Sweep the interval boundaries; the candidate must never push the
    simultaneous count above the cap."""
    bounds = [(candidate[0], 1), (candidate[1], -1)]
    for on, off in accepted:
        bounds.append((on, 1))
        bounds.append((off, -1))
    bounds.sort()
    count = 0
    for _, step in bounds:
        count += step
        if count > max_polyphony:
            return False
    return True


def sample_scene(spec: SceneSpec, bank: SourceBank,
                 rng: np.random.Generator | None = None) -> SceneDescription:
    """Place random events from the bank under the polyphony constraint.

    Start times are drawn uniformly and accepted/rejected so the
    instantaneous event count never exceeds the cap; two events of the same
    class are never allowed to overlap (the class-indexed annotation format
    cannot represent that). Deterministic given (spec.seed, spec).
    """
    if rng is None:
        rng = _scene_rng(spec.seed, 0)
    if bank.longest_clip_s() >= spec.duration:
        raise ScenePlacementError("scene duration must exceed the longest source clip")
    fs = spec.sample_rate
    n_events = int(rng.integers(spec.n_events[0], spec.n_events[1] + 1))
    class_ids = bank.class_ids
    grid = array_model.measurement_doa_grid()
    placed: list[EventInstance] = []
    intervals: list[tuple[float, float]] = []
    for _ in range(n_events):
        for _attempt in range(MAX_PLACEMENT_TRIES):
            class_id = class_ids[int(rng.integers(len(class_ids)))]
            clips = bank.clips_by_class[class_id]
            clip = clips[int(rng.integers(len(clips)))]
            doa = grid[int(rng.integers(len(grid)))]
            # quantize the onset to whole samples so audio placement is exact
            onset = int(rng.integers(0, int((spec.duration - clip.duration) * fs) + 1)) / fs
            offset = onset + clip.n_samples / fs
            same_class_clash = any(
                ev.class_id == class_id and ev.onset < offset and ev.offset > onset
                for ev in placed)
            if same_class_clash:
                continue
            if not _polyphony_ok((onset, offset), intervals, spec.max_polyphony):
                continue
            placed.append(EventInstance(class_id=class_id, onset=onset, offset=offset,
                                        doa=doa, source_ref=clip.path))
            intervals.append((onset, offset))
            break
        else:
            raise ScenePlacementError(
                f"could not place event {len(placed) + 1}/{n_events} after "
                f"{MAX_PLACEMENT_TRIES} tries (polyphony {spec.max_polyphony}, "
                f"duration {spec.duration}s)")
    events = tuple(sorted(placed, key=lambda e: (e.onset, e.class_id)))
    return SceneDescription(recording_id="", spec=spec, events=events)


# ---------------------------------------------------------------------------
# Rendering

_STFT_CFG = dsp.StftConfig()


def _load_clip(clip: SourceClip) -> np.ndarray:
    audio, rate = dsp.read_wav(clip.path)
    if rate != 48000 or audio.shape[0] != 1:
        raise RenderError(f"{clip.path}: sources must be mono 48 kHz")
    return audio[0]


def _steering_for(fmt: str, doa: Doa) -> np.ndarray:
    if fmt != array_model.FORMAT_MIC:  # FOA vectors are cheap to rebuild
        return array_model.steering_vectors(fmt, doa, _STFT_CFG.bin_frequencies())
    key = (doa.azimuth, doa.elevation)
    cached = _steering_cache.get(key)
    if cached is None:
        cached = array_model.steering_vectors(fmt, doa, _STFT_CFG.bin_frequencies())
        _steering_cache[key] = cached
    return cached


# rigid-sphere vectors per grid direction, shared read-only within a process
_steering_cache: dict[tuple[float, float], np.ndarray] = {}


def _render_direct(clip: np.ndarray, sv: np.ndarray, cfg: dsp.StftConfig) -> np.ndarray:
    """STFT-domain multiply by the steering vector, back to time domain.

    The clip is framed with zero guard windows so its span lies in the
    COLA-complete interior; one extra window of filter spill is kept.
    """
    guard = cfg.window_len
    x = np.concatenate([np.zeros(guard), clip, np.zeros(guard + cfg.hop)])
    spec = dsp.stft(x, cfg)
    keep = clip.size + guard
    out = np.zeros((sv.shape[0], keep))
    for ch in range(sv.shape[0]):
        y = dsp.istft(dsp.apply_transfer(spec, sv[ch]))
        out[ch] = y[guard:guard + keep]
    return out


def _reverb_tail(clip: np.ndarray, room: RoomProfile, direct_energy_1m: float,
                 rng: np.random.Generator, fs: int, n_channels: int = 4) -> np.ndarray | None:
    """Channel-decorrelated exponentially decaying tail, level set by the
    room's direct-to-reverb ratio at 1 m. Level does not scale with source
    distance, so DRR falls as sources move away."""
    if room.t60 <= 0.0:
        return None
    tail_len = int(round(room.t60 * fs))
    decay = 10.0 ** (-3.0 * np.arange(tail_len) / (fs * room.t60))
    noise = rng.standard_normal((n_channels, tail_len)) * decay[None, :]
    target = direct_energy_1m * 10.0 ** (-room.direct_to_reverb_db / 10.0)
    out = np.empty((n_channels, clip.size + tail_len - 1))
    for ch in range(n_channels):
        rev = dsp.fft_convolve(clip, noise[ch])
        energy = float(np.sum(rev ** 2))
        if energy > 0.0:
            rev *= math.sqrt(target / energy)
        out[ch] = rev
    return out


def _pink_ambience(n_samples: int, room: RoomProfile, fmt: str,
                   rng: np.random.Generator, n_channels: int = 4) -> np.ndarray:
    """Per-channel decorrelated pink-like noise bed.

    The spectral slope leans slightly per room, and FOA beds weight the
    omni channel +6 dB over the dipoles (diffuse-field-like substitute for
    recorded ambience).
    """
    alpha = 1.0 + 0.05 * (room.room_id - 3)
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / 48000.0)
    shape = np.zeros_like(freqs)
    shape[1:] = freqs[1:] ** (-alpha / 2.0)
    amb = np.empty((n_channels, n_samples))
    for ch in range(n_channels):
        spectrum = np.fft.rfft(rng.standard_normal(n_samples)) * shape
        amb[ch] = np.fft.irfft(spectrum, n=n_samples)
    amb /= np.sqrt(np.mean(amb ** 2)) + 1e-300
    if fmt == array_model.FORMAT_FOA:
        amb[0] *= 2.0
    return amb


def render_scene(desc: SceneDescription, bank: SourceBank,
                 fmt: str) -> tuple[MultichannelAudio, AnnotationSet]:
    """Render one scene into four channels of the requested format.

    Per event: direct path through the steering vector scaled by 1 m /
    distance, plus the room's stochastic tail; events sum at their onsets;
    the ambience bed is mixed at the spec's SNR over the event-active
    samples. Output is checked for non-finite values and clipping is
    reported, never limited.
    """
    if fmt not in array_model.FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    spec = desc.spec
    fs = spec.sample_rate
    n_total = int(round(spec.duration * fs))
    scene = np.zeros((4, n_total))
    active = np.zeros(n_total, dtype=bool)
    for k, ev in enumerate(desc.events):
        if ev.doa.distance is None:
            raise RenderError(f"event {k} (class {ev.class_id}) has no distance")
        clip = _load_clip(_find_clip(bank, ev))
        sv = _steering_for(fmt, ev.doa)
        direct = _render_direct(clip, sv, _STFT_CFG)
        direct_energy_1m = float(np.mean(np.sum(direct ** 2, axis=1)))
        direct /= ev.doa.distance
        onset_sample = int(round(ev.onset * fs))
        _add_at(scene, direct, onset_sample)
        tail = _reverb_tail(clip, spec.room, direct_energy_1m,
                            _scene_rng(spec.seed, 1000 + k), fs)
        if tail is not None:
            _add_at(scene, tail, onset_sample)
        active[onset_sample:min(n_total, onset_sample + clip.size)] = True
        if not np.all(np.isfinite(scene)):
            raise RenderError(
                f"non-finite samples after event {k} (class {ev.class_id}, "
                f"onset {ev.onset:.3f}s, source {ev.source_ref})")
    if spec.snr_db is not None and desc.events:
        ambience = _pink_ambience(n_total, spec.room, fmt, _scene_rng(spec.seed, 2))
        scene = dsp.mix_at_snr(scene, ambience, spec.snr_db, active_mask=active)
    clipped = int(np.sum(np.abs(scene) > 1.0))
    if clipped:
        log.warning("%s/%s: %d samples exceed full scale (written unlimited)",
                    desc.recording_id or "<scene>", fmt, clipped)
    audio = MultichannelAudio(audio=scene, sample_rate=fs, fmt=fmt)
    return audio, desc.to_annotation_set()


def _find_clip(bank: SourceBank, ev: EventInstance) -> SourceClip:
    for clip in bank.clips_by_class.get(ev.class_id, ()):
        if clip.path == ev.source_ref:
            return clip
    raise RenderError(f"source {ev.source_ref!r} not present in the bank")


def _add_at(scene: np.ndarray, signal: np.ndarray, start: int) -> None:
    end = min(scene.shape[1], start + signal.shape[1])
    if end > start:
        scene[:, start:end] += signal[:, :end - start]


# ---------------------------------------------------------------------------
# Dataset generation

@dataclass(frozen=True)
class DatasetConfig:
    """Counts, formats and acoustics for a full dataset run."""

    out_dir: str
    n_dev_recordings: int = 400
    n_eval_recordings: int = 100
    n_splits: int = 4
    formats: tuple[str, ...] = (array_model.FORMAT_FOA, array_model.FORMAT_MIC)
    duration: float = 60.0
    snr_db: float | None = 30.0
    n_events: tuple[int, int] = (8, 14)
    rooms: tuple[RoomProfile, ...] = DEFAULT_ROOMS

    def __post_init__(self):
        if self.n_splits < 1:
            raise ValueError("n_splits must be >= 1")
        if self.n_dev_recordings < self.n_splits:
            raise ValueError("need at least one dev recording per split")
        for fmt in self.formats:
            if fmt not in array_model.FORMATS:
                raise ValueError(f"unknown format {fmt!r}")
        if not self.formats:
            raise ValueError("at least one format is required")


@dataclass(frozen=True)
class _RecordingPlan:
    recording_id: str
    split: int  # 1..n_splits for dev, 0 for eval
    spec: SceneSpec
    partition_index: int


def _plan_recordings(cfg: DatasetConfig, master_seed: int) -> list[_RecordingPlan]:
    plan_rng = _scene_rng(master_seed, 1)
    plans: list[_RecordingPlan] = []

    def plan_block(n_recordings: int, split: int, partition_index: int, tag: str):
        n_poly2 = n_recordings // 2  # half the recordings carry overlap
        for idx in range(n_recordings):
            poly = 2 if idx < n_poly2 else 1
            room = cfg.rooms[int(plan_rng.integers(len(cfg.rooms)))]
            seed = int(plan_rng.integers(0, 2 ** 63))
            rec_id = f"{tag}_room{room.room_id}_ov{poly}_{idx:03d}"
            spec = SceneSpec(max_polyphony=poly, room=room, seed=seed,
                             duration=cfg.duration, snr_db=cfg.snr_db,
                             n_events=cfg.n_events)
            plans.append(_RecordingPlan(rec_id, split, spec, partition_index))

    base = cfg.n_dev_recordings // cfg.n_splits
    remainder = cfg.n_dev_recordings % cfg.n_splits
    for split in range(1, cfg.n_splits + 1):
        plan_block(base + (1 if split <= remainder else 0), split,
                   split - 1, f"split{split}")
    if cfg.n_eval_recordings:
        plan_block(cfg.n_eval_recordings, 0, cfg.n_splits, "eval")
    return plans


def _render_one(args) -> tuple[str, dict]:
    plan, cfg, partitions_root = args
    bank = partitions_root[plan.partition_index]
    out = Path(cfg.out_dir)
    stage = "dev" if plan.split > 0 else "eval"
    written: list[Path] = []
    try:
        desc = replace(sample_scene(plan.spec, bank), recording_id=plan.recording_id)
        meta_dir = out / f"metadata_{stage}"
        meta_path = meta_dir / f"{plan.recording_id}.csv"
        write_annotation_csv(desc.to_annotation_set(), meta_path)
        written.append(meta_path)
        for fmt in cfg.formats:
            audio, _ = render_scene(desc, bank, fmt)
            wav_path = out / f"{fmt}_{stage}" / f"{plan.recording_id}.wav"
            dsp.write_wav(wav_path, audio.audio.astype(np.float32), audio.sample_rate)
            written.append(wav_path)
    except Exception:
        for path in written:  # never leave partial recordings behind
            path.unlink(missing_ok=True)
        raise
    entry = {
        "split": plan.split,
        "room_id": plan.spec.room.room_id,
        "max_polyphony": plan.spec.max_polyphony,
        "seed": plan.spec.seed,
        "formats": list(cfg.formats),
        "duration_s": plan.spec.duration,
    }
    return plan.recording_id, entry


def generate_dataset(cfg: DatasetConfig, bank: SourceBank, master_seed: int,
                     jobs: int = 1) -> dict:
    """Write the full dataset and return its manifest.

    Layout: ``<out>/{foa,mic}_{dev,eval}/<id>.wav`` plus
    ``<out>/metadata_{dev,eval}/<id>.csv`` and ``<out>/manifest.json``
    (written last). Dev recordings spread over splits 1..n_splits (split 0
    is the evaluation pool); each recording draws its sources from its
    split's disjoint bank partition and its events from a single room.
    """
    out = Path(cfg.out_dir)
    partitions = bank.partition(cfg.n_splits + 1, _scene_rng(master_seed, 0))
    plans = _plan_recordings(cfg, master_seed)
    stages = {"dev" if p.split > 0 else "eval" for p in plans}
    for stage in stages:
        (out / f"metadata_{stage}").mkdir(parents=True, exist_ok=True)
        for fmt in cfg.formats:
            (out / f"{fmt}_{stage}").mkdir(parents=True, exist_ok=True)
    tasks = [(plan, cfg, partitions) for plan in plans]
    manifest: dict[str, dict] = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rec_id, entry in pool.map(_render_one, tasks):
                manifest[rec_id] = entry
    else:
        for task in tasks:
            rec_id, entry = _render_one(task)
            manifest[rec_id] = entry
    manifest = dict(sorted(manifest.items()))
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    log.info("wrote %d recordings to %s", len(manifest), out)
    return manifest


def reconstruct_scene(cfg: DatasetConfig, bank: SourceBank, master_seed: int,
                      recording_id: str) -> SceneDescription:
    """Re-derive the exact scene generate_dataset rendered for one recording.

    Useful for audits: re-render parts of a recording (for example without
    the ambience bed) and compare against the shipped files.
    """
    partitions = bank.partition(cfg.n_splits + 1, _scene_rng(master_seed, 0))
    for plan in _plan_recordings(cfg, master_seed):
        if plan.recording_id == recording_id:
            desc = sample_scene(plan.spec, partitions[plan.partition_index])
            return replace(desc, recording_id=recording_id)
    raise KeyError(f"recording {recording_id!r} is not part of this dataset plan")


# ---------------------------------------------------------------------------
# Procedural source material (stand-in for real isolated event banks)

def procedural_bank(out_dir: str | Path, n_classes: int = 11,
                    examples_per_class: int = 20, seed: int = 0,
                    duration_range: tuple[float, float] = (0.4, 2.0)) -> SourceBank:
    """Synthesize a small class-distinct source bank of mono 48 kHz clips.

    Classes cycle through harmonic stacks, filtered noise bursts and chirps
    with class-dependent registers, enough structure for placement,
    rendering and scoring pipelines to be exercised end to end.
    """
    out_dir = Path(out_dir)
    fs = 48000
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 77)))
    for class_id in range(n_classes):
        class_dir = out_dir / f"class{class_id:02d}"
        class_dir.mkdir(parents=True, exist_ok=True)
        base_freq = 180.0 * 2.0 ** (class_id / 2.5)
        for k in range(examples_per_class):
            dur = float(rng.uniform(*duration_range))
            n = int(dur * fs)
            t = np.arange(n) / fs
            kind = class_id % 3
            if kind == 0:
                f0 = base_freq * float(rng.uniform(0.9, 1.1))
                sig = sum(np.sin(2 * np.pi * f0 * (h + 1) * t
                                 + float(rng.uniform(0, 2 * np.pi))) / (h + 1)
                          for h in range(4))
            elif kind == 1:
                noise = rng.standard_normal(n)
                spectrum = np.fft.rfft(noise)
                freqs = np.fft.rfftfreq(n, 1 / fs)
                band = (freqs > base_freq * 0.7) & (freqs < base_freq * 1.6)
                sig = np.fft.irfft(spectrum * band, n=n)
            else:
                f1 = base_freq * float(rng.uniform(1.5, 2.5))
                sig = np.sin(2 * np.pi * (base_freq * t + (f1 - base_freq) * t ** 2 / (2 * dur)))
            attack = min(n // 4, int(0.02 * fs))
            env = np.ones(n)
            env[:attack] = np.linspace(0, 1, attack)
            release = min(n // 4, int(0.05 * fs))
            env[n - release:] = np.linspace(1, 0, release)
            sig = sig * env
            peak = np.max(np.abs(sig))
            if peak > 0:
                sig = 0.25 * sig / peak
            dsp.write_wav(class_dir / f"ex{k:02d}.wav", sig.astype(np.float32)[None, :], fs)
    return SourceBank.from_directory(out_dir)
