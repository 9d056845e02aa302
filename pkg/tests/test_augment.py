"""Pitch/tempo transforms checked against FFT-peak and length oracles."""

import numpy as np
import numpy.testing as npt
import pytest

from dsrkit.audio import AudioBuffer
from dsrkit.augment import MIN_SAMPLES, AugmentCoeffs, pitch_shift, tempo_change
from dsrkit.errors import EmptyInputError, ParameterError

SR = 16000


def tone(f0, duration_s=1.0, sr=SR):
    t = np.arange(int(round(duration_s * sr))) / sr
    return AudioBuffer(0.5 * np.sin(2 * np.pi * f0 * t), sr)


def fft_peak_hz(buf):
    spec = np.abs(np.fft.rfft(buf.samples))
    return np.argmax(spec) * buf.sample_rate / len(buf)


class TestPitchShift:
    def test_220hz_coeff_half_lands_at_165(self):
        out = pitch_shift(tone(220.0), 0.5)
        assert abs(fft_peak_hz(out) - 165.0) <= 3.0
        assert abs(len(out) - SR) <= 160

    def test_coeff_zero_is_exact_identity(self):
        buf = tone(220.0)
        out = pitch_shift(buf, 0.0)
        assert out is buf

    def test_ratio_sweep(self):
        for f0 in (120.0, 220.0, 300.0):
            for coeff in (0.25, 0.5, 1.0):
                ratio = 1.0 - coeff * 0.5
                out = pitch_shift(tone(f0), coeff)
                assert abs(fft_peak_hz(out) - ratio * f0) <= 0.03 * ratio * f0
                assert abs(len(out) - SR) < 0.01 * SR

    def test_output_valid_buffer(self):
        out = pitch_shift(tone(220.0), 0.5)
        assert np.all(np.isfinite(out.samples))
        assert np.max(np.abs(out.samples)) <= 1.0

    def test_short_buffer_rejected(self):
        with pytest.raises(EmptyInputError):
            pitch_shift(AudioBuffer(np.zeros(MIN_SAMPLES - 1)), 0.5)

    def test_coeff_out_of_range(self):
        buf = tone(220.0)
        with pytest.raises(ParameterError):
            pitch_shift(buf, 1.5)
        with pytest.raises(ParameterError):
            pitch_shift(buf, -0.1)

    def test_deterministic(self):
        a = pitch_shift(tone(220.0), 0.5)
        b = pitch_shift(tone(220.0), 0.5)
        assert a.samples.tobytes() == b.samples.tobytes()


class TestTempoChange:
    def test_coeff_half_doubles_duration_pitch_fixed(self):
        out = tempo_change(tone(220.0), 0.5)
        assert abs(len(out) - 2 * SR) <= 0.01 * 2 * SR
        assert abs(fft_peak_hz(out) - 220.0) <= 6.6

    def test_coeff_one_is_exact_identity(self):
        buf = tone(220.0)
        out = tempo_change(buf, 1.0)
        assert out is buf

    def test_duration_and_peak_sweep(self):
        for f0 in (120.0, 220.0, 300.0):
            for coeff in (0.5, 0.7):
                out = tempo_change(tone(f0), coeff)
                target = SR / coeff
                assert abs(len(out) - target) <= 0.01 * target
                assert abs(fft_peak_hz(out) - f0) <= 0.03 * f0

    def test_composition_with_identity_keeps_length(self):
        once = tempo_change(tone(220.0), 0.5)
        again = tempo_change(once, 1.0)
        assert len(again) == len(once)

    def test_output_valid_buffer(self):
        out = tempo_change(tone(300.0), 0.5)
        assert np.all(np.isfinite(out.samples))
        assert np.max(np.abs(out.samples)) <= 1.0

    def test_short_buffer_rejected(self):
        with pytest.raises(EmptyInputError):
            tempo_change(AudioBuffer(np.zeros(MIN_SAMPLES - 1)), 0.5)

    def test_coeff_out_of_range(self):
        buf = tone(220.0)
        with pytest.raises(ParameterError):
            tempo_change(buf, 0.0)
        with pytest.raises(ParameterError):
            tempo_change(buf, 1.2)


class TestAugmentCoeffs:
    def test_valid_pairs(self):
        AugmentCoeffs(0.5, 0.5)
        AugmentCoeffs(0.25, 0.7)
        AugmentCoeffs(1.0, 1.0)

    def test_invalid_pairs(self):
        with pytest.raises(ParameterError):
            AugmentCoeffs(0.0, 0.5)
        with pytest.raises(ParameterError):
            AugmentCoeffs(0.5, 0.0)
        with pytest.raises(ParameterError):
            AugmentCoeffs(1.1, 0.5)
        with pytest.raises(ParameterError):
            AugmentCoeffs(0.5, 1.1)


class TestOnVoiceLikeSignal:
    """Same calibration on a harmonic stack, not just pure sines."""

    def test_pitch_shift_moves_harmonic_voice(self):
        from dsrkit.audio import VoiceSpec, synth_voice

        buf = synth_voice(VoiceSpec(f0=220.0, n_harmonics=6, harmonic_rolloff=12.0,
                                    duration_s=1.0, seed=4))
        out = pitch_shift(buf, 0.5)
        assert abs(fft_peak_hz(out) - 165.0) <= 5.0

    def test_tempo_keeps_harmonic_voice_pitch(self):
        from dsrkit.audio import VoiceSpec, synth_voice

        buf = synth_voice(VoiceSpec(f0=180.0, n_harmonics=6, harmonic_rolloff=12.0,
                                    duration_s=1.0, seed=8))
        out = tempo_change(buf, 0.5)
        npt.assert_allclose(len(out), 2 * SR, rtol=0.01)
        assert abs(fft_peak_hz(out) - 180.0) <= 0.03 * 180.0
