import math

import numpy as np
import pytest

from seldkit.dsp import (ImpulseResponseStft, Spectrogram, StftConfig,
                         apply_transfer, estimate_ir_stft, estimate_transfer,
                         feature_sequences, fft_convolve, generate_mls, istft,
                         measure_snr, mix_at_snr, read_wav, stft, write_wav)

CFG = StftConfig()


class TestStftConfig:
    def test_defaults_match_the_analysis_grid(self):
        assert (CFG.sample_rate, CFG.window_len, CFG.hop, CFG.dft_size) == (48000, 1920, 960, 2048)
        assert CFG.n_bins == 1025

    def test_validation(self):
        with pytest.raises(ValueError):
            StftConfig(hop=0)
        with pytest.raises(ValueError):
            StftConfig(window_len=4096)  # > dft_size

    def test_json_round_trip(self):
        cfg = StftConfig(window_len=1024, hop=512, dft_size=1024)
        assert StftConfig.from_json(cfg.to_json()) == cfg


class TestStft:
    def test_dc_input_concentrates_in_bin_zero(self):
        spec = stft(np.ones(48000))
        mags = np.abs(spec.frames[5])
        assert np.argmax(mags) == 0
        # padded 1920/2048 grid: Hann leakage, still 30 dB down from bin 2 on
        assert (mags[2:] / mags[0]).max() < 10 ** (-30 / 20)

    def test_dc_input_unpadded_grid_below_60db(self):
        # with window_len == dft_size the Hann nulls land on bins exactly
        cfg = StftConfig(window_len=2048, hop=1024, dft_size=2048)
        spec = stft(np.ones(48000), cfg)
        mags = np.abs(spec.frames[5])
        assert (mags[2:] / mags[0]).max() < 1e-3

    def test_bin_centered_tone_peaks_at_its_bin(self):
        f = 25 * 48000 / 2048
        t = np.arange(48000) / 48000
        spec = stft(np.sin(2 * np.pi * f * t))
        assert set(np.argmax(np.abs(spec.frames), axis=1).tolist()) == {25}

    def test_round_trip_interior_error_below_1e6(self, rng):
        x = rng.standard_normal(48000)
        y = istft(stft(x))
        w = CFG.window_len
        xi, yi = x[w:-w], y[w:x.size - w]
        rel = np.sqrt(np.mean((xi - yi) ** 2) / np.mean(xi ** 2))
        assert rel < 1e-6

    def test_rejects_empty_signal(self):
        with pytest.raises(ValueError):
            stft(np.array([]))

    def test_short_signal_padded_to_one_frame(self):
        spec = stft(np.ones(100))
        assert spec.n_frames == 1

    def test_parseval_within_one_percent(self, rng):
        x = rng.standard_normal(480000)
        spec = stft(x)
        weights = np.full(spec.n_bins, 2.0)
        weights[0] = weights[-1] = 1.0
        e_spec = float(np.sum(weights * np.abs(spec.frames) ** 2)) / CFG.dft_size
        covered = CFG.window_len + (spec.n_frames - 1) * CFG.hop
        # mean squared Hann value is 3/8, two overlapping frames per sample
        e_sig = 0.75 * float(np.sum(x[:covered] ** 2))
        assert e_spec / e_sig == pytest.approx(1.0, abs=0.01)


class TestIstft:
    def test_zero_spectrogram_gives_zero_signal(self):
        spec = Spectrogram(np.zeros((4, CFG.n_bins), dtype=complex), CFG)
        assert not istft(spec).any()

    def test_single_frame_dc_bin_gives_constant_segment(self):
        frames = np.zeros((1, CFG.n_bins), dtype=complex)
        frames[0, 0] = CFG.dft_size  # irfft -> unit constant over the frame
        y = istft(Spectrogram(frames, CFG))
        np.testing.assert_allclose(y[:CFG.dft_size], 1.0, atol=1e-12)
        assert y.size == CFG.dft_size


class TestMls:
    def test_order_3_is_seven_pm_one(self):
        seq = generate_mls(3)
        assert seq.size == 7
        assert set(np.unique(seq)) == {-1.0, 1.0}

    def test_order_10_lag5_autocorrelation_exact(self):
        seq = generate_mls(10).astype(np.int64)
        assert int(np.dot(seq, np.roll(seq, 5))) == -1

    def test_no_values_outside_pm_one(self):
        seq = generate_mls(10)
        assert int(np.sum(np.abs(seq) != 1.0)) == 0

    @pytest.mark.parametrize("order", range(2, 17))
    def test_autocorrelation_property_all_lags(self, order):
        seq = generate_mls(order).astype(np.int64)
        n = seq.size
        assert n == 2 ** order - 1
        # circular autocorrelation via FFT, rounded back to exact integers
        ac = np.rint(np.fft.irfft(np.abs(np.fft.rfft(seq)) ** 2, n=n)).astype(np.int64)
        assert ac[0] == n
        assert set(ac[1:].tolist()) == {-1}

    @pytest.mark.parametrize("order", [1, 25])
    def test_unsupported_order_rejected(self, order):
        with pytest.raises(ValueError):
            generate_mls(order)


class TestEstimateIr:
    def test_identity_system(self):
        mls = generate_mls(15)
        ir = estimate_ir_stft(mls, mls)
        assert np.abs(ir.transfer - 1.0).max() < 1e-6
        assert ir.flagged_bins.size == 0

    def test_scalar_gain(self):
        mls = generate_mls(15)
        ir = estimate_ir_stft(mls, 0.5 * mls)
        assert np.abs(ir.transfer - 0.5).max() < 1e-6

    def test_delay_recovered_by_phase_slope(self):
        delay = 100
        mls = generate_mls(15)
        ir = estimate_ir_stft(mls, np.concatenate([np.zeros(delay), mls]))
        mag = np.abs(ir.transfer[:800])
        assert mag.mean() == pytest.approx(1.0, abs=0.05)
        # independent oracle: linear fit of the unwrapped phase,
        # slope = -2 pi delay / dft_size per bin
        phase = np.unwrap(np.angle(ir.transfer[:400]))
        slope = np.polyfit(np.arange(400), phase, 1)[0]
        assert -slope * CFG.dft_size / (2 * np.pi) == pytest.approx(delay, abs=1.0)
        # and via the rendered time-domain peak
        assert abs(int(np.argmax(np.abs(ir.time_domain()))) - delay) <= 1

    def test_reapplying_transfer_reproduces_recording_spectrogram(self, rng):
        x = rng.standard_normal(48000)
        true_h = np.fft.rfft(rng.standard_normal(64), n=CFG.dft_size)
        x_spec = stft(x)
        y_spec = apply_transfer(x_spec, true_h)
        est, _ = estimate_transfer(x_spec, y_spec)
        recon = apply_transfer(x_spec, est)
        rel = np.linalg.norm(recon.frames - y_spec.frames) / np.linalg.norm(y_spec.frames)
        assert rel < 1e-9  # only the regularization floor separates them

    def test_tonal_reference_flags_empty_bins(self):
        t = np.arange(48000) / 48000
        tone = np.sin(2 * np.pi * (25 * 48000 / 2048) * t)
        ir = estimate_ir_stft(tone, tone)
        assert ir.flagged_bins.size > 900  # almost everything off the tone bin

    def test_recording_shorter_than_reference_rejected(self):
        mls = generate_mls(12)
        with pytest.raises(ValueError):
            estimate_ir_stft(mls, mls[:-10])


class TestFftConvolve:
    def test_unit_impulse_is_identity(self, rng):
        x = rng.standard_normal(500)
        np.testing.assert_allclose(fft_convolve(x, np.array([1.0])), x, atol=1e-12)

    def test_single_sample_delay(self, rng):
        x = rng.standard_normal(100)
        y = fft_convolve(x, np.array([0.0, 1.0]))
        np.testing.assert_allclose(y[1:], x, atol=1e-12)
        assert abs(y[0]) < 1e-12

    def test_matches_direct_convolution(self, rng):
        x = rng.standard_normal(1000)
        h = rng.standard_normal(257)
        direct = np.zeros(x.size + h.size - 1)
        for i, hi in enumerate(h):  # O(N*M) oracle
            direct[i:i + x.size] += hi * x
        fast = fft_convolve(x, h)
        assert fast.shape == direct.shape
        assert np.abs(fast - direct).max() < 1e-9

    def test_linearity(self, rng):
        x, y = rng.standard_normal(300), rng.standard_normal(300)
        h = rng.standard_normal(64)
        lhs = fft_convolve(2.0 * x + 0.5 * y, h)
        rhs = 2.0 * fft_convolve(x, h) + 0.5 * fft_convolve(y, h)
        assert np.abs(lhs - rhs).max() < 1e-9

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fft_convolve(np.array([]), np.array([1.0]))


class TestSnrMixing:
    def test_equal_power_zero_db_gain_is_unity(self, rng):
        x = rng.standard_normal((2, 4000))
        out = mix_at_snr(x, x.copy(), 0.0, active_mask=np.ones(4000, bool))
        np.testing.assert_allclose(out, 2.0 * x, rtol=1e-12)

    def test_30db_closed_form_gain(self, rng):
        events = rng.standard_normal((1, 8000))
        ambient = rng.standard_normal((1, 8000))
        p_e = np.mean(events ** 2)
        p_a = np.mean(ambient ** 2)
        ambient *= math.sqrt(p_e / p_a)  # equal power now
        out = mix_at_snr(events, ambient, 30.0, active_mask=np.ones(8000, bool))
        implied_gain = (out - events) / ambient
        np.testing.assert_allclose(implied_gain, 10 ** (-1.5), rtol=1e-9)

    def test_self_consistency_at_30db(self, rng):
        events = np.zeros((4, 48000))
        events[:, 10000:30000] = rng.standard_normal((4, 20000))
        ambient = rng.standard_normal((4, 48000))
        mask = np.zeros(48000, bool)
        mask[10000:30000] = True
        out = mix_at_snr(events, ambient, 30.0, active_mask=mask)
        remeasured = measure_snr(events, out - events, active_mask=mask)
        assert remeasured == pytest.approx(30.0, abs=0.01)

    def test_zero_power_errors(self):
        silent = np.zeros((1, 100))
        noise = np.ones((1, 100))
        with pytest.raises(ValueError):
            measure_snr(silent, noise, active_mask=np.ones(100, bool))
        with pytest.raises(ValueError):
            measure_snr(noise, silent)

    def test_short_ambient_rejected(self):
        with pytest.raises(ValueError):
            mix_at_snr(np.ones((1, 100)), np.ones((1, 50)), 0.0)


class TestFeatures:
    def test_sequence_layout(self, rng):
        audio = rng.standard_normal((4, 48000 * 3))
        tensor = feature_sequences(audio, CFG, seq_len=128)
        spec_frames = stft(audio[0], CFG).n_frames
        n_seq = math.ceil(spec_frames / 128)
        assert tensor.shape == (n_seq, 8, 128, CFG.n_bins)
        assert tensor.dtype == np.float32
        # magnitude maps are non-negative, phase maps lie in [-pi, pi]
        assert (tensor[:, :4] >= 0).all()
        assert (np.abs(tensor[:, 4:]) <= np.pi + 1e-6).all()


class TestWavIo:
    def test_float32_round_trip(self, tmp_path, rng):
        audio = rng.uniform(-0.8, 0.8, size=(4, 1000)).astype(np.float32)
        path = tmp_path / "x.wav"
        write_wav(path, audio, 48000)
        back, rate = read_wav(path)
        assert rate == 48000
        assert back.shape == (4, 1000)
        np.testing.assert_allclose(back, audio, atol=1e-7)

    def test_reads_pcm_int(self, tmp_path):
        from scipy.io import wavfile
        data = (np.linspace(-0.5, 0.5, 100) * 2 ** 15).astype(np.int16)
        wavfile.write(str(tmp_path / "pcm.wav"), 48000, data)
        audio, rate = read_wav(tmp_path / "pcm.wav")
        assert audio.shape == (1, 100)
        assert np.abs(audio).max() <= 0.5 + 1e-3


class TestImpulseResponseStft:
    def test_time_domain_lengths(self):
        h = np.zeros(CFG.n_bins, dtype=complex)
        h[:] = 1.0
        ir = ImpulseResponseStft(h, CFG, np.array([], dtype=int))
        assert ir.time_domain().size == CFG.dft_size
        assert ir.time_domain(100).size == 100
        assert ir.time_domain(4096).size == 4096
