"""Waveform <-> log-mel spectrogram conversion and audio rendering.

All functions are pure and deterministic: identical inputs produce
bit-identical outputs.  The analysis contract is frame-count exact: a
waveform of ``frames * hop`` samples yields exactly ``frames`` STFT frames
under center padding, so the paper profile maps 32768 samples to a
512 x 512 grid.
"""

from __future__ import annotations

import functools
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .config import MelConfig


class DspError(ValueError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray  # float32, [-1, 1]
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise DspError(f"waveform must be mono, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise DspError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self.samples) else 0.0


@dataclass
class MelSpec:
    """Log-mel magnitude grid normalized to [-1, 1]; shape (mel_bins, frames)."""

    values: np.ndarray
    config: MelConfig

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        expected = (self.config.mel_bins, self.config.frames)
        if self.values.shape != expected:
            raise DspError(f"mel grid shape {self.values.shape} != {expected}")
        if not np.all(np.isfinite(self.values)):
            raise DspError("mel grid contains non-finite values")


def hann_window(size: int) -> np.ndarray:
    """Periodic Hann window (standard for STFT analysis)."""
    n = np.arange(size, dtype=np.float64)
    return (0.5 - 0.5 * np.cos(2.0 * np.pi * n / size)).astype(np.float64)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=8)
def _mel_filterbank_cached(sample_rate: int, fft_size: int, mel_bins: int) -> tuple:
    n_freqs = fft_size // 2 + 1
    fft_freqs = np.arange(n_freqs, dtype=np.float64) * sample_rate / fft_size
    grid = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), mel_bins + 2)
    hz_grid = mel_to_hz(grid)

    fb = np.zeros((mel_bins, n_freqs), dtype=np.float64)
    for j in range(mel_bins):
        lo, center, hi = hz_grid[j], hz_grid[j + 1], hz_grid[j + 2]
        rise = (fft_freqs - lo) / max(center - lo, 1e-12)
        fall = (hi - fft_freqs) / max(hi - center, 1e-12)
        fb[j] = np.clip(np.minimum(rise, fall), 0.0, None)
        if not np.any(fb[j] > 0):
            # Filter narrower than the FFT grid (low bins at high mel counts):
            # keep it non-degenerate by spiking the nearest FFT bin.
            fb[j, int(np.argmin(np.abs(fft_freqs - center)))] = 1.0
    centers = hz_grid[1:-1].copy()
    fb.setflags(write=False)
    centers.setflags(write=False)
    return fb, centers


def mel_filterbank(c: MelConfig) -> np.ndarray:
    """Triangular mel filterbank, shape (mel_bins, fft_size//2+1).

    Every row is non-negative with at least one positive entry.
    """
    return _mel_filterbank_cached(c.sample_rate, c.fft_size, c.mel_bins)[0]


def mel_center_freqs(c: MelConfig) -> np.ndarray:
    """Center frequency in Hz of each mel filter."""
    return _mel_filterbank_cached(c.sample_rate, c.fft_size, c.mel_bins)[1]


def stft_magnitude(samples: np.ndarray, c: MelConfig) -> np.ndarray:
    """Center-padded STFT magnitude, shape (frames, fft_size//2+1).

    Requires len(samples) == frames * hop so the frame count is exact.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) != c.num_samples:
        raise DspError(f"expected {c.num_samples} samples, got {len(samples)}")
    pad = c.window // 2
    padded = np.pad(samples, (pad, pad))
    idx = np.arange(c.window)[None, :] + c.hop * np.arange(c.frames)[:, None]
    frames = padded[idx] * hann_window(c.window)[None, :]
    spec = np.fft.rfft(frames, n=c.fft_size, axis=1)
    return np.abs(spec)


def _istft(spec: np.ndarray, c: MelConfig) -> np.ndarray:
    """Overlap-add inverse of stft_magnitude's framing (complex input)."""
    win = hann_window(c.window)
    frames = np.fft.irfft(spec, n=c.fft_size, axis=1)[:, : c.window] * win[None, :]
    pad = c.window // 2
    total = c.num_samples + 2 * pad
    out = np.zeros(total, dtype=np.float64)
    wsum = np.zeros(total, dtype=np.float64)
    for t in range(c.frames):
        start = t * c.hop
        out[start : start + c.window] += frames[t]
        wsum[start : start + c.window] += win**2
    out /= np.maximum(wsum, 1e-8)
    return out[pad : pad + c.num_samples]


def _db_to_unit(db: np.ndarray, c: MelConfig) -> np.ndarray:
    unit = 2.0 * (db - c.norm_min_db) / (c.norm_max_db - c.norm_min_db) - 1.0
    return np.clip(unit, -1.0, 1.0)


def _unit_to_db(unit: np.ndarray, c: MelConfig) -> np.ndarray:
    return (np.asarray(unit, dtype=np.float64) + 1.0) / 2.0 * (c.norm_max_db - c.norm_min_db) + c.norm_min_db


def mapped_log_floor(c: MelConfig) -> float:
    """Value a silent frame maps to after log compression and normalization."""
    return float(_db_to_unit(np.array(c.log_floor_db), c))


def mel_spectrogram(w: Waveform, c: MelConfig) -> MelSpec:
    """Log-compressed mel magnitude grid, affinely mapped to [-1, 1]."""
    if w.sample_rate != c.sample_rate:
        raise DspError(f"waveform rate {w.sample_rate} != config rate {c.sample_rate}")
    mag = stft_magnitude(w.samples, c)
    mel_mag = mag @ mel_filterbank(c).T  # (frames, mel_bins)
    db = 20.0 * np.log10(np.maximum(mel_mag, c.amp_floor))
    db = np.maximum(db, c.log_floor_db)
    return MelSpec(_db_to_unit(db, c).T.astype(np.float32), c)


def invert_mel(m: MelSpec, c: MelConfig, iters: int = 32, normalize: bool = True) -> Waveform:
    """Render audio from a mel grid: filterbank pseudo-inverse + Griffin-Lim.

    iters=0 gives the zero-phase reconstruction.  Playback convenience only;
    fidelity is not an evaluated quantity.
    """
    db = _unit_to_db(m.values, c)
    mel_mag = 10.0 ** (db / 20.0)
    # Anything at the clamp floor is silence, not amplitude amp_floor.
    mel_mag[db <= c.log_floor_db + 1e-9] = 0.0
    pinv = np.linalg.pinv(mel_filterbank(c))
    mag = np.clip(pinv @ mel_mag, 0.0, None).T  # (frames, n_freqs)

    spec = mag.astype(np.complex128)  # zero phase
    x = _istft(spec, c)
    for _ in range(iters):
        rebuilt = np.fft.rfft(
            np.pad(x, (c.window // 2, c.window // 2))[
                np.arange(c.window)[None, :] + c.hop * np.arange(c.frames)[:, None]
            ]
            * hann_window(c.window)[None, :],
            n=c.fft_size,
            axis=1,
        )
        phase = np.angle(rebuilt)
        x = _istft(mag * np.exp(1j * phase), c)

    x = np.nan_to_num(x)
    peak = np.max(np.abs(x))
    if normalize and peak > 1e-8:
        x = x * (0.99 / peak)
    return Waveform(x.astype(np.float32), c.sample_rate)


def pitch_shift(w: Waveform, semitones: int) -> Waveform:
    """Resample-based pitch shift; output re-cropped/padded to input length."""
    if abs(semitones) > 24:
        raise DspError(f"pitch shift {semitones} out of range (|s| <= 24)")
    if semitones == 0:
        return Waveform(w.samples.copy(), w.sample_rate)
    rate = 2.0 ** (semitones / 12.0)
    n = len(w.samples)
    m = max(1, int(round(n / rate)))
    src = np.arange(n, dtype=np.float64)
    dst = np.linspace(0.0, n - 1, m)
    shifted = np.interp(dst, src, w.samples.astype(np.float64))
    if len(shifted) >= n:
        shifted = shifted[:n]
    else:
        shifted = np.pad(shifted, (0, n - len(shifted)))
    return Waveform(shifted.astype(np.float32), w.sample_rate)


def _decode_pcm(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:  # scipy delivers 24-bit PCM as int32
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise DspError(f"unsupported WAV sample format {data.dtype}")


def _resample_linear(x: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    if src_rate == dst_rate:
        return x
    m = max(1, int(round(len(x) * dst_rate / src_rate)))
    return np.interp(np.linspace(0.0, len(x) - 1, m), np.arange(len(x), dtype=np.float64), x)


def load_waveform(path: str | Path | io.BytesIO, target: MelConfig) -> Waveform:
    """Load audio: mono mixdown, resample, center crop / zero pad, normalize.

    The result has exactly ``target.num_samples`` samples and peak 0.99.
    Raises on undecodable files, zero-length audio and silent input.
    """
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise DspError(f"undecodable audio file: {exc}") from exc
    if data.size == 0:
        raise DspError("zero-length audio")
    x = _decode_pcm(data)
    if x.ndim == 2:
        x = x.mean(axis=1)
    x = _resample_linear(x, rate, target.sample_rate)

    n = target.num_samples
    if len(x) > n:  # center window of longer files
        start = (len(x) - n) // 2
        x = x[start : start + n]
    elif len(x) < n:
        x = np.pad(x, (0, n - len(x)))

    peak = np.max(np.abs(x))
    if peak < 1e-9:
        raise DspError("silent input")
    x = x * (0.99 / peak)
    return Waveform(x.astype(np.float32), target.sample_rate)


def save_wav(path: str | Path | io.BytesIO, w: Waveform) -> None:
    """Write 16-bit PCM WAV."""
    clipped = np.clip(w.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype(np.int16)
    wavfile.write(path, w.sample_rate, pcm)


def wav_bytes(w: Waveform) -> bytes:
    buf = io.BytesIO()
    save_wav(buf, w)
    return buf.getvalue()


def sine_wave(freq_hz: float, c: MelConfig, amplitude: float = 0.99, phase: float = 0.0) -> Waveform:
    """Test/demo helper: pure tone at the config's contract length."""
    t = np.arange(c.num_samples, dtype=np.float64) / c.sample_rate
    return Waveform((amplitude * np.sin(2.0 * np.pi * freq_hz * t + phase)).astype(np.float32), c.sample_rate)


def midi_to_hz(midi: int) -> float:
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)
