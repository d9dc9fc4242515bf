import math

import numpy as np
import pytest

from iegirs.mathkit import array_response, group_shrink_factor, laguerre_half, virtual_los_direction


def bessel_i_series(nu, z):
    """Independent power-series oracle for the modified Bessel function."""
    half = z / 2.0
    term = half ** nu / math.factorial(nu)
    total = 0.0
    k = 0
    while True:
        total += term
        k += 1
        term *= half * half / (k * (k + nu))
        if term < 1e-19 * max(total, 1.0) or k > 500:
            return total


def laguerre_series_oracle(x):
    return math.exp(-x / 2.0) * ((1.0 + x) * bessel_i_series(0, x / 2.0)
                                 + x * bessel_i_series(1, x / 2.0))


class TestLaguerreHalf:
    def test_zero_is_exactly_one(self):
        assert laguerre_half(0.0) == 1.0

    @pytest.mark.parametrize("x,frozen", [
        (0.1, 1.0493852561567293),   # mpmath, 30 digits
        (1.0, 1.4464913440831718),
        (10.0, 3.6586716081480355),
    ])
    def test_small_arguments(self, x, frozen):
        series = laguerre_series_oracle(x)
        assert abs(series - frozen) <= 1e-14 * frozen
        assert abs(laguerre_half(x) - series) <= 1e-10 * series

    def test_large_argument(self):
        # frozen high-precision value and the |x|^(1/2)/Gamma(3/2) asymptote
        val = laguerre_half(1e4)
        assert abs(val - 112.84073769273349) <= 1e-8 * 112.84
        asymptote = 2.0 * math.sqrt(1e4 / math.pi)
        assert abs(val - asymptote) / asymptote <= 1e-4

    def test_stable_at_huge_arguments(self):
        val = laguerre_half(1e8)
        assert np.isfinite(val)
        asymptote = 2.0 * math.sqrt(1e8 / math.pi)
        assert abs(val - asymptote) / asymptote <= 1e-6

    def test_monotone_on_grid(self):
        grid = np.concatenate([np.linspace(0.0, 50.0, 500), np.geomspace(50.0, 1e6, 500)])
        vals = laguerre_half(grid)
        assert np.all(np.diff(vals) >= 0)

    def test_asymptote_band_above_200(self):
        grid = np.geomspace(200.0, 1e8, 300)
        ratio = laguerre_half(grid) / (2.0 * np.sqrt(grid / np.pi))
        assert np.all(ratio >= 0.99) and np.all(ratio <= 1.01)

    @pytest.mark.parametrize("bad", [-1.0, -1e-12, np.nan, np.inf])
    def test_domain_errors(self, bad):
        with pytest.raises(ValueError):
            laguerre_half(bad)

    @pytest.mark.parametrize("kappa,sigma", [(0.5, 1.0), (2.0, 0.7)])
    def test_rician_envelope_mean(self, kappa, sigma):
        # h = m + g with g ~ CN(0, sigma^2), |m|^2 = kappa sigma^2:
        # E|h| = (sqrt(pi)/2) sigma L(kappa)
        rng = np.random.default_rng(17)
        n = 10 ** 5
        g = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
        h = sigma * np.sqrt(kappa) + g
        expected = (np.sqrt(np.pi) / 2.0) * sigma * laguerre_half(kappa)
        assert abs(np.mean(np.abs(h)) - expected) / expected <= 0.01


class TestArrayResponse:
    def test_broadside_is_all_ones(self):
        for n in (1, 3, 16):
            assert np.allclose(array_response(n, 0.0), np.ones(n))

    def test_two_element_endfire(self):
        resp = array_response(2, np.pi / 2)
        assert np.allclose(resp, [1.0, -1.0], atol=1e-12)

    def test_norm_and_modulus(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(1, 64))
            theta = rng.uniform(-np.pi / 2, np.pi / 2)
            resp = array_response(n, theta)
            assert abs(np.linalg.norm(resp) - np.sqrt(n)) <= 1e-12 * np.sqrt(n)
            assert np.allclose(np.abs(resp), 1.0)
            assert resp[0] == 1.0

    def test_zero_size_rejected(self):
        with pytest.raises(ValueError):
            array_response(0, 0.3)


class TestGroupShrinkFactor:
    def test_known_values(self):
        assert abs(group_shrink_factor(2) - 2.0 / np.pi) <= 1e-15
        assert abs(group_shrink_factor(4) - 2.0 * np.sqrt(2.0) / np.pi) <= 1e-15

    def test_limit(self):
        assert abs(group_shrink_factor(10 ** 6) - 1.0) <= 1e-11

    def test_single_group_degenerates_to_zero(self):
        assert group_shrink_factor(1) == 0.0

    def test_increasing(self):
        vals = [group_shrink_factor(q) for q in range(1, 200)]
        assert np.all(np.diff(vals) > 0)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            group_shrink_factor(0)


class TestVirtualLosDirection:
    def test_single_group(self):
        v = virtual_los_direction(1)
        assert v.shape == (1,)
        assert abs(abs(v[0]) - 1.0) <= 1e-15

    def test_two_groups(self):
        v = virtual_los_direction(2)
        # phases -(2g-1)pi/2 for g = 1, 2, i.e. -pi/2 and -3pi/2 (= +pi/2)
        assert np.allclose(np.angle(v), [-np.pi / 2, np.pi / 2])

    def test_alignment_gives_real_positive_sum(self):
        for q in (2, 4, 7):
            direction = virtual_los_direction(q)
            mean = 3.7 * direction            # any positive scale
            rcv = np.exp(1j * np.angle(direction))
            total = np.vdot(rcv, mean)        # rcv^H mean
            assert abs(total.imag) <= 1e-12 * abs(total)
            assert abs(total.real - 3.7 * q) <= 1e-12 * 3.7 * q

    def test_domain_error(self):
        with pytest.raises(ValueError):
            virtual_los_direction(0)
