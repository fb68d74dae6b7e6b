"""Tests for the over-suppression measure and SI-SDR."""

import numpy as np
import pytest

from pse.dsp import ComplexSpectrogram, StftConfig, Waveform
from pse.metrics import MetricParams, TsosFlags, si_sdr, tsos_frames, tsos_report


def brute_force_flags(ref_mag, est_mag, gamma, p):
    """Oracle: evaluate the frame rule bin by bin with plain loops."""
    T, F = ref_mag.shape
    flags = []
    for t in range(T):
        os_sum = 0.0
        ref_sum = 0.0
        for f in range(F):
            d = ref_mag[t, f] ** p - est_mag[t, f] ** p
            if d > 0:
                os_sum += d * d
            ref_sum += ref_mag[t, f] ** p
        flags.append(1 if os_sum > gamma * ref_sum else 0)
    return np.array(flags, dtype=np.uint8)


def brute_force_report(flags, hop_s):
    """Oracle: linear scan for count and longest run."""
    count = sum(flags)
    best = cur = 0
    for v in flags:
        cur = cur + 1 if v else 0
        best = max(best, cur)
    return 100.0 * count / len(flags), count * hop_s, best * hop_s


class TestTsosFrames:
    def _random_pair(self, seed, t=16, f=8):
        rng = np.random.default_rng(seed)
        ref = rng.standard_normal((t, f)) + 1j * rng.standard_normal((t, f))
        est = rng.standard_normal((t, f)) + 1j * rng.standard_normal((t, f))
        return ref, est

    def test_identity_never_flags(self):
        ref, _ = self._random_pair(0)
        flags = tsos_frames(ref, ref.copy(), frame_rate_hz=62.5)
        assert flags.flags.sum() == 0

    def test_fully_suppressed_frame_flags(self):
        ref = np.ones((3, 16), dtype=complex)
        est = ref.copy()
        est[1] = 0  # deficit sum F > 0.1 * F
        flags = tsos_frames(ref, est, frame_rate_hz=62.5)
        np.testing.assert_array_equal(flags.flags, [0, 1, 0])

    def test_matches_brute_force(self):
        for seed in range(25):
            ref, est = self._random_pair(seed)
            got = tsos_frames(ref, est, frame_rate_hz=62.5).flags
            want = brute_force_flags(np.abs(ref), np.abs(est), 0.1, 0.3)
            np.testing.assert_array_equal(got, want)

    def test_boundary_equality_not_flagged(self):
        # p=1 keeps the arithmetic exact: deficit^2 = 0.25 == gamma * ref sum
        params = MetricParams(gamma=0.25, p=1.0)
        ref = np.array([[1.0 + 0j]])
        est = np.array([[0.5 + 0j]])
        flags = tsos_frames(ref, est, params, frame_rate_hz=62.5)
        assert flags.flags[0] == 0
        # just below the boundary the flag flips
        est_lower = np.array([[0.4999 + 0j]])
        flags2 = tsos_frames(ref, est_lower, params, frame_rate_hz=62.5)
        assert flags2.flags[0] == 1

    def test_silent_reference_frame_not_flagged(self):
        ref = np.zeros((2, 4), dtype=complex)
        est = np.ones((2, 4), dtype=complex)
        flags = tsos_frames(ref, est, frame_rate_hz=62.5)
        assert flags.flags.sum() == 0

    def test_phase_invariance_of_estimate(self):
        ref, est = self._random_pair(3)
        rotated = est * np.exp(1j * 1.23)
        a = tsos_frames(ref, est, frame_rate_hz=62.5).flags
        b = tsos_frames(ref, rotated, frame_rate_hz=62.5).flags
        np.testing.assert_array_equal(a, b)

    def test_monotonicity_reducing_estimate_keeps_flags(self):
        for seed in range(10):
            ref, est = self._random_pair(seed + 100)
            before = tsos_frames(ref, est, frame_rate_hz=62.5).flags
            after = tsos_frames(ref, est * 0.5, frame_rate_hz=62.5).flags
            assert np.all(after >= before)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            tsos_frames(np.zeros((2, 3)), np.zeros((2, 4)), frame_rate_hz=62.5)

    def test_accepts_spectrogram_objects(self):
        cfg = StftConfig(fft_size=16, window_size=16, hop_size=8)
        vals = np.ones((4, 8), dtype=complex)
        ref = ComplexSpectrogram(vals, cfg)
        est = ComplexSpectrogram(vals * 0.1, cfg)
        flags = tsos_frames(ref, est)
        assert flags.frame_rate_hz == 2000.0


class TestTsosReport:
    def test_all_clear(self):
        rep = tsos_report(TsosFlags(np.zeros(4, dtype=np.uint8), 62.5))
        assert rep.percent_os_frames == 0
        assert rep.total_os_duration_s == 0
        assert rep.max_os_duration_s == 0

    def test_known_pattern(self):
        rep = tsos_report(TsosFlags(np.array([1, 0, 1, 1]), 62.5))
        assert rep.percent_os_frames == pytest.approx(75.0)
        assert rep.total_os_duration_s == pytest.approx(0.048)
        assert rep.max_os_duration_s == pytest.approx(0.032)

    def test_matches_linear_scan_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            flags = rng.integers(0, 2, size=rng.integers(1, 40))
            rep = tsos_report(TsosFlags(flags, 62.5))
            pct, tot, mx = brute_force_report(list(flags), 1 / 62.5)
            assert rep.percent_os_frames == pytest.approx(pct)
            assert rep.total_os_duration_s == pytest.approx(tot)
            assert rep.max_os_duration_s == pytest.approx(mx)
            assert rep.max_os_duration_s <= rep.total_os_duration_s + 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            tsos_report(TsosFlags(np.zeros(0, dtype=np.uint8), 62.5))


class TestSiSdr:
    def test_identical_capped(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(1000)
        assert si_sdr(x, x.copy()) == 60.0

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(1000)
        assert si_sdr(x, 2 * x) == 60.0
        noisy = x + 0.1 * rng.standard_normal(1000)
        assert si_sdr(x, noisy) == pytest.approx(si_sdr(x, 3.7 * noisy), abs=1e-9)

    def test_analytic_orthogonal_noise(self):
        n = 4096
        t = np.arange(n)
        ref = np.sin(2 * np.pi * 8 * t / n)
        noise = np.sin(2 * np.pi * 16 * t / n)  # orthogonal over full periods
        for ratio_db in (0.0, 10.0, 23.5):
            g = 10 ** (-ratio_db / 20)
            est = ref + g * noise
            assert si_sdr(ref, est) == pytest.approx(ratio_db, abs=1e-6)

    def test_silent_reference_rejected(self):
        with pytest.raises(ValueError, match="silent"):
            si_sdr(np.zeros(10), np.ones(10))

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            si_sdr(np.ones(10), np.ones(11))

    def test_accepts_waveforms(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(1600) * 0.1
        assert si_sdr(Waveform(x), Waveform(x.copy())) == 60.0
