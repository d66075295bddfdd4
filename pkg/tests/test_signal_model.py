import numpy as np
import pytest

from blindcfo.signal_model import (
    QAM4_POINTS,
    SystemParams,
    build_virtual_channel,
    generate_symbols,
    pulse_derivative,
    pulse_value,
    synthesize_received,
)


def random_params(seed, K=2, P=4, N=256, sigma2=0.0, Ts=1.0, fmax=None):
    rng = np.random.default_rng(seed)
    fmax = 0.5 / P if fmax is None else fmax
    return SystemParams(
        K=K, P=P,
        f=rng.uniform(-fmax, fmax, K),
        tau=rng.uniform(0, Ts / P, K),
        a=(rng.standard_normal(K) + 1j * rng.standard_normal(K)) / np.sqrt(2),
        sigma2_w=sigma2, N=N, Ts=Ts,
    )


def oracle_channel_entry(params, m, k):
    """Scalar re-evaluation of one mixing entry, independent of the library path."""
    t = m / params.P * params.Ts - params.tau[k]
    if 0 <= t <= params.Ts:
        p = 0.54 - 0.46 * np.cos(2 * np.pi * t / params.Ts)
    else:
        p = 0.0
    return params.a[k] * np.exp(2j * np.pi * m * params.f[k]) * p


class TestPulse:
    def test_peak(self):
        assert pulse_value(0.5, 1.0) == pytest.approx(1.0)

    def test_endpoint(self):
        assert pulse_value(0.0, 1.0) == pytest.approx(0.08)
        assert pulse_value(1.0, 1.0) == pytest.approx(0.08)

    def test_outside_support(self):
        assert pulse_value(-0.1, 1.0) == 0.0
        assert pulse_value(1.1, 1.0) == 0.0

    def test_scales_with_symbol_period(self):
        assert pulse_value(1.0, 2.0) == pytest.approx(1.0)

    def test_derivative_matches_finite_difference(self):
        t = np.linspace(0.01, 0.99, 37)
        h = 1e-7
        fd = (pulse_value(t + h) - pulse_value(t - h)) / (2 * h)
        assert np.allclose(pulse_derivative(t), fd, atol=1e-5)

    def test_derivative_zero_at_peak_and_outside(self):
        assert pulse_derivative(0.5, 1.0) == pytest.approx(0.0, abs=1e-12)
        assert pulse_derivative(-0.3, 1.0) == 0.0


class TestGenerateSymbols:
    def test_alphabet_and_power(self):
        frame = generate_symbols(1, 4, "4qam", seed=0)
        assert frame.s.shape == (1, 4)
        assert np.allclose(np.abs(frame.s), 1.0)
        assert np.allclose(np.abs(frame.s.real), 1 / np.sqrt(2))
        assert np.allclose(np.abs(frame.s.imag), 1 / np.sqrt(2))

    def test_mean_and_power_converge(self):
        N = 10**5
        frame = generate_symbols(2, N, "4qam", seed=1)
        assert abs(frame.s.mean()) < 3 / np.sqrt(N)
        assert abs(np.mean(np.abs(frame.s) ** 2) - 1.0) < 3 / np.sqrt(N)

    def test_empirical_kurtosis(self):
        # brute-force cumulant of the alphabet: E|s|^4 - 2(E|s|^2)^2 - |E s^2|^2 = -1
        pts = QAM4_POINTS
        exact = np.mean(np.abs(pts) ** 4) - 2 * np.mean(np.abs(pts) ** 2) ** 2 \
            - abs(np.mean(pts**2)) ** 2
        assert exact == pytest.approx(-1.0)
        s = generate_symbols(1, 10**5, "4qam", seed=2).s[0]
        kurt = np.mean(np.abs(s) ** 4) - 2 * np.mean(np.abs(s) ** 2) ** 2 \
            - abs(np.mean(s * s)) ** 2
        assert kurt == pytest.approx(-1.0, abs=0.05)

    def test_deterministic_given_seed(self):
        a = generate_symbols(3, 100, seed=42).s
        b = generate_symbols(3, 100, seed=42).s
        assert np.array_equal(a, b)

    def test_unsupported_constellation(self):
        with pytest.raises(ValueError, match="4qam"):
            generate_symbols(1, 10, "16apsk", seed=0)


class TestSystemParams:
    def test_rejects_undersampling(self):
        with pytest.raises(ValueError, match="P"):
            random_params(0, K=4, P=2)

    def test_rejects_out_of_range_cfo(self):
        with pytest.raises(ValueError, match="f_k"):
            SystemParams(K=1, P=2, f=[0.7], tau=[0.0], a=[1.0], sigma2_w=0, N=8)

    def test_rejects_delay_at_branch_spacing(self):
        with pytest.raises(ValueError, match="tau"):
            SystemParams(K=1, P=2, f=[0.0], tau=[0.5], a=[1.0], sigma2_w=0, N=8)


class TestVirtualChannel:
    def test_zero_cfo_zero_delay_reduces_to_pulse_samples(self):
        params = SystemParams(K=1, P=2, f=[0.0], tau=[0.0], a=[1.0], sigma2_w=0, N=8)
        A = build_virtual_channel(params).A
        assert np.allclose(A[:, 0], [1.0, 0.08])

    def test_quarter_cycle_cfo_rotates_rows(self):
        params = SystemParams(K=1, P=2, f=[0.25], tau=[0.0], a=[1.0], sigma2_w=0, N=8)
        A = build_virtual_channel(params).A
        assert np.allclose(A[:, 0], [1j * 1.0, -1 * 0.08])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scalar_oracle(self, seed):
        params = random_params(seed)
        A = build_virtual_channel(params).A
        for m in range(1, params.P + 1):
            for k in range(params.K):
                assert A[m - 1, k] == pytest.approx(oracle_channel_entry(params, m, k), abs=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_pulse_arguments_stay_in_support(self, seed):
        # 0 <= tau < Ts/P keeps every sampling offset inside (0, Ts]: each
        # sample touches exactly one symbol per user (no ISI)
        params = random_params(seed, K=3, P=5)
        m = np.arange(1, params.P + 1)
        args = np.subtract.outer(m / params.P * params.Ts, params.tau)
        assert np.all(args > 0)
        assert np.all(args <= params.Ts)
        assert np.all(pulse_value(args, params.Ts) > 0)

    def test_full_column_rank_for_random_delays(self):
        for seed in range(10):
            params = random_params(seed, K=3, P=5)
            A = build_virtual_channel(params).A
            assert np.linalg.matrix_rank(A) == 3


class TestSynthesizeReceived:
    def test_zero_cfo_is_time_invariant_mixing(self):
        params = SystemParams(K=2, P=3, f=[0.0, 0.0], tau=[0.05, 0.2],
                              a=[1.0, 1j], sigma2_w=0.0, N=64)
        symbols = generate_symbols(2, 64, seed=3)
        y = synthesize_received(params, symbols).y
        A = build_virtual_channel(params).A
        assert np.allclose(y, A @ symbols.s, atol=1e-14)

    def test_single_tap_rotation(self):
        # one user, one branch: received = pulse tail times rotating symbols,
        # sampled at t = (i+1)Ts so the rotation phase is 2 pi f (i+1)
        params = SystemParams(K=1, P=1, f=[0.1], tau=[0.0], a=[1.0], sigma2_w=0.0, N=32)
        symbols = generate_symbols(1, 32, seed=4)
        y = synthesize_received(params, symbols).y
        i = np.arange(32)
        expected = symbols.s[0] * np.exp(2j * np.pi * 0.1 * (i + 1)) * pulse_value(1.0, 1.0)
        assert np.allclose(y[0], expected, atol=1e-14)
        # rotation advances 36 degrees per symbol
        ratio = (y[0, 1:] * symbols.s[0, :-1]) / (y[0, :-1] * symbols.s[0, 1:])
        assert np.allclose(np.angle(ratio), np.deg2rad(36.0), atol=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_samplewise_double_sum_oracle(self, seed):
        params = random_params(seed, K=2, P=4, N=50)
        symbols = generate_symbols(2, 50, seed=seed + 100)
        y = synthesize_received(params, symbols).y
        for i in range(params.N):
            for m in range(1, params.P + 1):
                acc = sum(
                    oracle_channel_entry(params, m, k)
                    * symbols.s[k, i]
                    * np.exp(2j * np.pi * params.f[k] * i * params.P)
                    for k in range(params.K)
                )
                assert y[m - 1, i] == pytest.approx(acc, abs=1e-12)

    def test_seeded_determinism_bit_identical(self):
        params = random_params(1, sigma2=0.3)
        symbols = generate_symbols(2, params.N, seed=9)
        y1 = synthesize_received(params, symbols, seed=5).y
        y2 = synthesize_received(params, symbols, seed=5).y
        assert np.array_equal(y1, y2)

    def test_dimension_mismatch(self):
        params = random_params(0, K=2, N=64)
        symbols = generate_symbols(2, 63, seed=0)
        with pytest.raises(ValueError, match="shape"):
            synthesize_received(params, symbols)

    def test_sample_covariance_converges(self):
        N = 10**5
        params = random_params(3, K=2, P=4, N=N, sigma2=0.5)
        symbols = generate_symbols(2, N, seed=8)
        y = synthesize_received(params, symbols, seed=8).y
        A = build_virtual_channel(params).A
        target = A @ A.conj().T + params.sigma2_w * np.eye(params.P)
        sample = y @ y.conj().T / N
        assert np.linalg.norm(sample - target) < 10 / np.sqrt(N)

    def test_noise_variance_calibration(self):
        # per-sample complex noise variance equals sigma2_w
        params = SystemParams(K=1, P=2, f=[0.0], tau=[0.0], a=[0.0], sigma2_w=0.8,
                              N=10**5)
        symbols = generate_symbols(1, params.N, seed=0)
        y = synthesize_received(params, symbols, seed=1).y
        assert np.mean(np.abs(y) ** 2) == pytest.approx(0.8, rel=0.02)
