"""Pitch shifting and time stretching for contrastive sample fabrication.

Both transforms ride on a phase vocoder (1024-point FFT, 256-sample hop,
Hann window). Tempo change stretches time while holding pitch; pitch shift
composes a stretch with linear-interpolation resampling so duration is
preserved while all frequencies scale by r = 1 - coeff/2.
"""

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer
from .errors import EmptyInputError, ParameterError

N_FFT = 1024
HOP = 256

# A phase vocoder needs a few frames to lock onto phase advance.
MIN_SAMPLES = N_FFT + 3 * HOP


@dataclass(frozen=True)
class AugmentCoeffs:
    """Severity-dependent strengths: pitch_coeff c gives frequency ratio
    1 - c/2; tempo_coeff t is a speed factor (duration scales by 1/t)."""

    pitch_coeff: float
    tempo_coeff: float

    def __post_init__(self):
        if not 0.0 < self.pitch_coeff <= 1.0:
            raise ParameterError(f"pitch_coeff {self.pitch_coeff} outside (0, 1]")
        if not 0.0 < self.tempo_coeff <= 1.0:
            raise ParameterError(f"tempo_coeff {self.tempo_coeff} outside (0, 1]")


def _stft(x: np.ndarray) -> np.ndarray:
    """Hann-windowed STFT, no padding; shape (n_frames, N_FFT // 2 + 1)."""
    n_frames = (len(x) - N_FFT) // HOP + 1
    idx = np.arange(N_FFT)[None, :] + HOP * np.arange(n_frames)[:, None]
    return np.fft.rfft(x[idx] * np.hanning(N_FFT), axis=1)


def _istft(frames: np.ndarray, length: int) -> np.ndarray:
    """Windowed overlap-add inverse, normalized by the summed squared window,
    then trimmed or zero-padded to exactly `length` samples."""
    window = np.hanning(N_FFT)
    n_frames = frames.shape[0]
    total = N_FFT + HOP * (n_frames - 1)
    y = np.zeros(total)
    wsum = np.zeros(total)
    chunks = np.fft.irfft(frames, n=N_FFT, axis=1)
    for i in range(n_frames):
        start = i * HOP
        y[start:start + N_FFT] += window * chunks[i]
        wsum[start:start + N_FFT] += window * window
    good = wsum > 1e-8
    y[good] /= wsum[good]
    if len(y) >= length:
        return y[:length]
    return np.pad(y, (0, length - len(y)))


def _phase_vocoder(frames: np.ndarray, rate: float) -> np.ndarray:
    """Resample an STFT along time by `rate` (< 1 lengthens), accumulating
    phase so sinusoidal partials stay coherent across synthesis hops."""
    n_frames, n_bins = frames.shape
    steps = np.arange(0.0, n_frames, rate)
    padded = np.vstack([frames, np.zeros((2, n_bins), dtype=frames.dtype)])
    expected = 2.0 * np.pi * HOP * np.arange(n_bins) / N_FFT
    out = np.empty((len(steps), n_bins), dtype=np.complex128)
    phase = np.angle(padded[0])
    for i, t in enumerate(steps):
        lo = int(t)
        frac = t - lo
        a, b = padded[lo], padded[lo + 1]
        mag = (1.0 - frac) * np.abs(a) + frac * np.abs(b)
        out[i] = mag * np.exp(1j * phase)
        dphase = np.angle(b) - np.angle(a) - expected
        dphase -= 2.0 * np.pi * np.round(dphase / (2.0 * np.pi))
        phase += expected + dphase
    return out


def _resample(x: np.ndarray, stride: float, n_out: int) -> np.ndarray:
    """Read `x` at fractional positions i * stride with linear interpolation;
    frequencies scale by `stride`."""
    pos = np.arange(n_out) * stride
    return np.interp(pos, np.arange(len(x)), x)


def _check_input(buffer: AudioBuffer) -> None:
    if len(buffer) < MIN_SAMPLES:
        raise EmptyInputError(
            f"buffer of {len(buffer)} samples is too short to analyze "
            f"(need at least {MIN_SAMPLES})"
        )


def _finalize(samples: np.ndarray, sample_rate: int) -> AudioBuffer:
    return AudioBuffer(np.clip(samples, -1.0, 1.0), sample_rate)


def tempo_change(buffer: AudioBuffer, tempo_coeff: float) -> AudioBuffer:
    """Stretch duration by 1/tempo_coeff at constant pitch; 1.0 is identity."""
    if not 0.0 < tempo_coeff <= 1.0:
        raise ParameterError(f"tempo_coeff {tempo_coeff} outside (0, 1]")
    if tempo_coeff == 1.0:
        return buffer
    _check_input(buffer)
    stretched = _phase_vocoder(_stft(buffer.samples), tempo_coeff)
    target = int(round(len(buffer) / tempo_coeff))
    return _finalize(_istft(stretched, target), buffer.sample_rate)


def pitch_shift(buffer: AudioBuffer, pitch_coeff: float) -> AudioBuffer:
    """Scale all frequencies by r = 1 - pitch_coeff / 2 without changing
    duration; 0 is identity. Implemented as a phase-vocoder stretch by 1/r
    followed by a linear-interpolation resample by r."""
    if not 0.0 <= pitch_coeff <= 1.0:
        raise ParameterError(f"pitch_coeff {pitch_coeff} outside [0, 1]")
    if pitch_coeff == 0.0:
        return buffer
    _check_input(buffer)
    ratio = 1.0 - pitch_coeff * 0.5
    stretched = _phase_vocoder(_stft(buffer.samples), 1.0 / ratio)
    mid = _istft(stretched, int(round(len(buffer) * ratio)))
    return _finalize(_resample(mid, ratio, len(buffer)), buffer.sample_rate)
