"""Signal-processing primitives shared by synthesis, features and IR tools.

Everything here is a pure function of its inputs. Audio buffers are numpy
arrays shaped (channels, samples) for multichannel or (samples,) for mono,
float, at 48 kHz unless a config says otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve as _scipy_fftconvolve
from scipy.signal import max_len_seq


@dataclass(frozen=True)
class StftConfig:
    """Analysis grid: 2048-point DFT over 40 ms Hann windows hopped by 20 ms."""

    sample_rate: int = 48000
    window_len: int = 1920
    hop: int = 960
    dft_size: int = 2048

    def __post_init__(self):
        if self.hop <= 0:
            raise ValueError("hop must be > 0")
        if not (self.hop <= self.window_len <= self.dft_size):
            raise ValueError("require hop <= window_len <= dft_size")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")

    @property
    def n_bins(self) -> int:
        return self.dft_size // 2 + 1

    def window(self) -> np.ndarray:
        """Periodic Hann; sums to one at 50% overlap (amplitude COLA)."""
        n = np.arange(self.window_len)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.window_len)

    def bin_frequencies(self) -> np.ndarray:
        return np.fft.rfftfreq(self.dft_size, d=1.0 / self.sample_rate)

    def to_json(self) -> str:
        return json.dumps({"sample_rate": self.sample_rate, "window_len": self.window_len,
                           "hop": self.hop, "dft_size": self.dft_size})

    @classmethod
    def from_json(cls, text: str) -> "StftConfig":
        raw = json.loads(text)
        return cls(sample_rate=int(raw["sample_rate"]), window_len=int(raw["window_len"]),
                   hop=int(raw["hop"]), dft_size=int(raw["dft_size"]))


@dataclass
class Spectrogram:
    """T x F complex STFT frames on a given analysis grid."""

    frames: np.ndarray
    config: StftConfig

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.complex128)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.n_bins:
            raise ValueError(f"frames must be T x {self.config.n_bins}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]


def stft(signal: np.ndarray, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Hann-windowed STFT, zero-padded per frame to the DFT size.

    Frame t covers samples [t*hop, t*hop + window_len); only full frames are
    produced (a signal shorter than one window is padded to a single frame).
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("signal must be a non-empty 1-D array")
    if x.size < cfg.window_len:
        x = np.pad(x, (0, cfg.window_len - x.size))
    n_frames = 1 + (x.size - cfg.window_len) // cfg.hop
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = x[idx] * cfg.window()[None, :]
    return Spectrogram(np.fft.rfft(frames, n=cfg.dft_size, axis=1), cfg)


def istft(spec: Spectrogram) -> np.ndarray:
    """Overlap-add inverse of :func:`stft`.

    The analysis Hann sums to one at 50% overlap, so plain overlap-add of
    the inverse-DFT frames reconstructs the COLA-complete interior exactly
    (the first and last half-window attenuate). Frame content beyond the
    analysis window (spectral modifications spilling into the zero-padded
    region) is kept, which makes per-bin filtering behave as linear
    convolution within the padding headroom.
    """
    cfg = spec.config
    frames = np.fft.irfft(spec.frames, n=cfg.dft_size, axis=1)
    out = np.zeros(cfg.dft_size + (spec.n_frames - 1) * cfg.hop)
    for t in range(spec.n_frames):
        start = t * cfg.hop
        out[start:start + cfg.dft_size] += frames[t]
    return out


def apply_transfer(spec: Spectrogram, transfer: np.ndarray) -> Spectrogram:
    """Multiply every frame by a per-bin complex response."""
    h = np.asarray(transfer)
    if h.shape != (spec.n_bins,):
        raise ValueError(f"transfer must have shape ({spec.n_bins},)")
    return Spectrogram(spec.frames * h[None, :], spec.config)


# ---------------------------------------------------------------------------
# MLS excitation and STFT-domain least-squares IR estimation

MLS_MIN_ORDER, MLS_MAX_ORDER = 2, 24


def generate_mls(order: int) -> np.ndarray:
    """Maximum length sequence of +-1 values, length 2**order - 1.

    LFSR with the standard primitive-polynomial taps (scipy's table); the
    periodic autocorrelation is 2**order - 1 at lag 0 and exactly -1 at
    every other lag.
    """
    if not MLS_MIN_ORDER <= order <= MLS_MAX_ORDER:
        raise ValueError(f"MLS order must be in [{MLS_MIN_ORDER}, {MLS_MAX_ORDER}]")
    bits, _ = max_len_seq(order)
    return bits.astype(np.float64) * 2.0 - 1.0


@dataclass
class ImpulseResponseStft:
    """Frequency-domain IR on the STFT bin grid, with low-energy bins flagged."""

    transfer: np.ndarray
    config: StftConfig
    flagged_bins: np.ndarray

    def time_domain(self, length: int | None = None) -> np.ndarray:
        """Render the transfer to a time-domain IR (truncated or zero-padded)."""
        ir = np.fft.irfft(self.transfer, n=self.config.dft_size)
        if length is None:
            return ir
        if length <= ir.size:
            return ir[:length]
        return np.pad(ir, (0, length - ir.size))


def estimate_transfer(x_spec: Spectrogram, y_spec: Spectrogram) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin least squares: H(f) = sum_t X_t(f)* Y_t(f) / (sum_t |X_t(f)|^2 + eps).

    eps is a fixed fraction (1e-10) of the strongest bin energy, which keeps
    spectral nulls of the excitation from blowing up without visibly biasing
    energetic bins. Returns (transfer, indices of bins whose reference
    energy sits near that floor).
    """
    n_frames = min(x_spec.n_frames, y_spec.n_frames)
    x = x_spec.frames[:n_frames]
    y = y_spec.frames[:n_frames]
    energy = np.sum(np.abs(x) ** 2, axis=0)
    eps = 1e-10 * float(energy.max())
    if eps == 0.0:
        raise ValueError("reference has no energy")
    transfer = np.sum(np.conj(x) * y, axis=0) / (energy + eps)
    flagged = np.nonzero(energy <= 1e-8 * energy.max())[0]
    return transfer, flagged


def estimate_ir_stft(reference: np.ndarray, recording: np.ndarray,
                     cfg: StftConfig = StftConfig()) -> ImpulseResponseStft:
    """Least-squares transfer estimate between a known excitation and a recording.

    The regression runs independently at each frequency bin over the common
    frames of the two STFTs; see :func:`estimate_transfer`.
    """
    reference = np.asarray(reference, dtype=np.float64)
    recording = np.asarray(recording, dtype=np.float64)
    if recording.size < reference.size:
        raise ValueError("recording must be at least as long as the reference")
    transfer, flagged = estimate_transfer(stft(reference, cfg), stft(recording, cfg))
    return ImpulseResponseStft(transfer=transfer, config=cfg, flagged_bins=flagged)


def fft_convolve(signal: np.ndarray, ir: np.ndarray) -> np.ndarray:
    """Full linear convolution, length len(signal) + len(ir) - 1."""
    signal = np.asarray(signal, dtype=np.float64)
    ir = np.asarray(ir, dtype=np.float64)
    if signal.size == 0 or ir.size == 0:
        raise ValueError("signal and ir must be non-empty")
    return _scipy_fftconvolve(signal, ir, mode="full")


# ---------------------------------------------------------------------------
# SNR-controlled mixing

def _as_multichannel(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def measure_snr(events: np.ndarray, ambient: np.ndarray,
                active_mask: np.ndarray | None = None) -> float:
    """Event-to-ambient SNR in dB.

    Event power is averaged over channels and over the samples where events
    are active (by default: where any channel is nonzero); ambient power is
    averaged over the full event duration. This is the same estimator
    :func:`mix_at_snr` inverts, so re-measuring a mix is self-consistent.
    """
    events = _as_multichannel(events)
    ambient = _as_multichannel(ambient)[:, :events.shape[1]]
    if ambient.shape[0] != events.shape[0]:
        raise ValueError("channel counts must match")
    if active_mask is None:
        active_mask = np.any(events != 0.0, axis=0)
    active_mask = np.asarray(active_mask, dtype=bool)
    if active_mask.shape != (events.shape[1],):
        raise ValueError("active_mask must have one flag per sample")
    if not active_mask.any():
        raise ValueError("no active samples to measure event power over")
    p_events = float(np.mean(events[:, active_mask] ** 2))
    p_ambient = float(np.mean(ambient ** 2))
    if p_events == 0.0:
        raise ValueError("events have zero power")
    if p_ambient == 0.0:
        raise ValueError("ambient has zero power")
    return 10.0 * math.log10(p_events / p_ambient)


def mix_at_snr(event_mix: np.ndarray, ambient: np.ndarray, target_snr_db: float,
               active_mask: np.ndarray | None = None) -> np.ndarray:
    """Scale ambient so the event-active SNR hits the target, then sum.

    The ambient bed must be at least as long as the event mix; the output is
    trimmed to the event mix length.
    """
    event_mix = _as_multichannel(event_mix)
    ambient = _as_multichannel(ambient)
    if ambient.shape[1] < event_mix.shape[1]:
        raise ValueError("ambient must be at least as long as the event mix")
    current = measure_snr(event_mix, ambient, active_mask)
    gain = 10.0 ** ((current - target_snr_db) / 20.0)
    return event_mix + gain * ambient[:, :event_mix.shape[1]]


# ---------------------------------------------------------------------------
# Feature front-end: per-channel magnitude + phase, framed into sequences

def feature_sequences(audio: np.ndarray, cfg: StftConfig = StftConfig(),
                      seq_len: int = 128) -> np.ndarray:
    """Stack per-channel spectrogram magnitude and phase into fixed sequences.

    Returns float32 of shape (n_seq, 2K, seq_len, F): K magnitude maps then
    K phase maps, the time axis zero-padded up to a whole number of
    sequences.
    """
    audio = _as_multichannel(audio)
    specs = [stft(ch, cfg).frames for ch in audio]
    t_frames = specs[0].shape[0]
    n_seq = max(1, math.ceil(t_frames / seq_len))
    k = len(specs)
    out = np.zeros((n_seq, 2 * k, seq_len, cfg.n_bins), dtype=np.float32)
    for ch, frames in enumerate(specs):
        mag = np.abs(frames).astype(np.float32)
        phase = np.angle(frames).astype(np.float32)
        for s in range(n_seq):
            lo, hi = s * seq_len, min((s + 1) * seq_len, t_frames)
            out[s, ch, :hi - lo] = mag[lo:hi]
            out[s, k + ch, :hi - lo] = phase[lo:hi]
    return out


# ---------------------------------------------------------------------------
# WAV I/O: float32 written; float32/64 and PCM 16/24/32 accepted on read

def write_wav(path: str | Path, audio: np.ndarray, sample_rate: int = 48000) -> None:
    audio = _as_multichannel(audio)
    data = np.ascontiguousarray(audio.T.astype(np.float32))
    wavfile.write(str(path), sample_rate, data)


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a WAV file as float64 (channels, samples) in [-1, 1] scale."""
    rate, data = wavfile.read(str(path))
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.int16:
        audio = data.astype(np.float64) / 2 ** 15
    elif data.dtype == np.int32:
        audio = data.astype(np.float64) / 2 ** 31
    elif data.dtype == np.uint8:
        audio = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        audio = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format: {data.dtype}")
    return audio.T, int(rate)
