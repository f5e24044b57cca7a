import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dampedns.inequalities import (
    LIEB_THIRRING_BOUND,
    IneqTrialReport,
    OrthonormalFamily,
    advection_pairing,
    band_dimension,
    divergence_pairing,
    interpolation_slacks,
    interpolation_trials,
    ladyzhenskaya_ratio,
    ladyzhenskaya_trials,
    lieb_thirring_ratio,
    lieb_thirring_trials,
    orthogonality_residuals,
    orthogonality_trials,
    pointwise_inequality_check,
    pointwise_trials,
    random_orthonormal_family,
    saturation_slack,
    verify_all,
)
from dampedns.spectral import Grid, SpectralVectorField, random_field, resample, single_mode
from dampedns.variational import gram_matrix


def normalized_mode(grid, k):
    u = single_mode(grid, k, 0.3 + 0.4j)
    return u / u.norm()


class TestPointwise:
    def test_saturation_example(self):
        assert pointwise_inequality_check([[1.0, 0.0], [0.0, -1.0]], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-15)

    def test_zero_vector(self):
        assert pointwise_inequality_check([[0.3, 2.0], [-1.0, -0.3]], [0.0, 0.0]) == 0.0

    def test_requires_traceless(self):
        with pytest.raises(ValueError):
            pointwise_inequality_check([[1.0, 0.0], [0.0, 0.0]], [1.0, 0.0])

    @given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
    def test_property(self, a, b, c, x, y):
        A = np.array([[a, b], [c, -a]])
        scale = np.linalg.norm(A) * (x * x + y * y)
        assert pointwise_inequality_check(A, [x, y]) >= -1e-12 * scale

    def test_trials_and_saturation(self):
        rep = pointwise_trials(20_000, seed=1)
        assert rep.trials == 20_000 and rep.min_slack >= -1e-12
        assert rep.empirical_constant <= 1 / math.sqrt(2) + 1e-12
        assert saturation_slack(200) <= 1e-12


class TestLiebThirring:
    def test_single_mode_closed_form(self):
        grid = Grid(32)
        for k, k2 in (((1, 0), 1), ((1, 1), 2), ((0, 3), 9)):
            fam = OrthonormalFamily.from_coefficients(normalized_mode(grid, k).coefficients[None], grid)
            assert lieb_thirring_ratio(fam) == pytest.approx(3 / (8 * math.pi**2 * k2), rel=1e-12)

    def test_resolution_invariance(self):
        fam = random_orthonormal_family(Grid(32), 3, seed=5)
        fine = Grid(64)
        c = np.stack([resample(SpectralVectorField(q, fam.grid), fine).coefficients for q in fam.coefficients])
        assert lieb_thirring_ratio(OrthonormalFamily.from_coefficients(c, fine)) == pytest.approx(
            lieb_thirring_ratio(fam), rel=1e-10
        )

    def test_box_rescaling_invariance(self):
        fam = random_orthonormal_family(Grid(32), 3, seed=2)
        other = Grid(32, box_length=1.7)
        c = fam.coefficients * math.sqrt(fam.grid.area / other.area)
        assert lieb_thirring_ratio(OrthonormalFamily.from_coefficients(c, other)) == pytest.approx(
            lieb_thirring_ratio(fam), rel=1e-10
        )

    def test_trials_stay_below_bound(self):
        rep = lieb_thirring_trials(Grid(32), trials=5, m_values=(1, 4, 8))
        assert rep.trials == 15 and rep.min_slack > 0
        assert rep.empirical_constant < LIEB_THIRRING_BOUND

    def test_zero_gradient_sum(self, grid16):
        fam = OrthonormalFamily.__new__(OrthonormalFamily)
        object.__setattr__(fam, "m", 1)
        object.__setattr__(fam, "members", (SpectralVectorField.zeros(grid16),))
        object.__setattr__(fam, "gram_defect", 0.0)
        with pytest.raises(ArithmeticError):
            lieb_thirring_ratio(fam)


class TestFamilies:
    def test_orthonormal_and_deterministic(self, grid32):
        a = random_orthonormal_family(grid32, 6, seed=9)
        b = random_orthonormal_family(grid32, 6, seed=9)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)
        assert np.max(np.abs(gram_matrix(a.coefficients, grid32) - np.eye(6))) <= 1e-12
        for f in a.members:
            assert f.max_divergence() <= 1e-12 and np.all(f.coefficients[:, 0, 0] == 0)

    def test_single_member_is_normalized(self, grid16):
        fam = random_orthonormal_family(grid16, 1, seed=0)
        assert fam.members[0].norm() == pytest.approx(1.0, rel=1e-14)

    def test_too_many_members(self, grid16):
        dim = band_dimension(grid16, 2)
        random_orthonormal_family(grid16, dim, seed=0, band_limit=2)
        with pytest.raises(ValueError):
            random_orthonormal_family(grid16, dim + 1, seed=0, band_limit=2)

    def test_rejects_non_orthonormal(self, grid16):
        c = np.stack([random_field(grid16, 0).coefficients, random_field(grid16, 0).coefficients])
        with pytest.raises(ValueError):
            OrthonormalFamily.from_coefficients(c, grid16)


class TestLadyzhenskaya:
    def test_single_mode_closed_form(self, grid32):
        for k in ((1, 0), (2, 1)):
            u = normalized_mode(grid32, k)
            kk = math.hypot(*k)
            assert ladyzhenskaya_ratio(u) == pytest.approx(math.sqrt(1.5) / (2 * math.pi * kk), rel=1e-12)

    @given(st.floats(1e-6, 1e6))
    def test_amplitude_invariance(self, lam):
        u = random_field(Grid(16), 3)
        assert ladyzhenskaya_ratio(lam * u) == pytest.approx(ladyzhenskaya_ratio(u), rel=1e-12)

    def test_box_rescaling_invariance(self, grid32):
        u = random_field(grid32, 4)
        v = SpectralVectorField(u.coefficients, Grid(32, box_length=0.3), True)
        assert ladyzhenskaya_ratio(v) == pytest.approx(ladyzhenskaya_ratio(u), rel=1e-12)

    def test_zero_field(self, grid16):
        with pytest.raises(ValueError):
            ladyzhenskaya_ratio(SpectralVectorField.zeros(grid16))

    def test_trials(self, grid16):
        rep = ladyzhenskaya_trials(grid16, trials=20)
        assert 0 < rep.empirical_constant < 1 and rep.min_slack == 0.0


class TestOrthogonality:
    def test_single_mode_advecting(self, grid32):
        u = single_mode(grid32, (1, 2))
        r1, _ = orthogonality_residuals(u, random_field(grid32, 1, band=8))
        assert r1 <= 1e-12

    @given(st.integers(0, 2**31))
    def test_random_solenoidal(self, seed):
        grid = Grid(32)
        u = random_field(grid, seed, band=10)
        r1, r2 = orthogonality_residuals(u, u)
        assert r1 <= 1e-11 and r2 <= 1e-11
        r1, _ = orthogonality_residuals(u, random_field(grid, seed + 1, band=10))
        assert r1 <= 1e-11

    def test_compressible_input_tracks_divergence(self, grid32, rng):
        c = rng.standard_normal((2, 32, 32)) + 1j * rng.standard_normal((2, 32, 32))
        u = SpectralVectorField(grid32.symmetrize(c * grid32.band_mask(6)), grid32)
        v = random_field(grid32, 2, band=6)
        a, b = advection_pairing(u, v), divergence_pairing(u, v)
        assert abs(a) > 1e-3
        assert abs(a - b) <= 1e-11 * abs(b)

    def test_trials(self, grid16):
        rep = orthogonality_trials(grid16, trials=20)
        assert rep.min_slack >= -1e-11


class TestInterpolation:
    @given(st.integers(0, 2**31), st.floats(0, 1))
    def test_slacks_nonnegative(self, seed, s):
        a, b = interpolation_slacks(random_field(Grid(16), seed), s)
        assert a >= -1e-13 and b >= -1e-13

    def test_endpoints_saturate(self, grid16):
        u = random_field(grid16, 0)
        for s in (0.0, 1.0):
            a, b = interpolation_slacks(u, s)
            assert abs(a) <= 1e-14 and abs(b) <= 1e-14

    def test_range(self, grid16):
        with pytest.raises(ValueError):
            interpolation_slacks(random_field(grid16, 0), 1.5)

    def test_trials(self, grid16):
        assert interpolation_trials(grid16, trials=30).min_slack >= -1e-13


class TestReports:
    def test_validation(self):
        with pytest.raises(ValueError):
            IneqTrialReport(0, 0.0)
        with pytest.raises(ValueError):
            IneqTrialReport(3, math.nan)

    def test_verify_all(self):
        res = verify_all(trials=3, n=16, seed=0)
        assert set(res) == {"pointwise", "lieb_thirring", "ladyzhenskaya", "orthogonality", "interpolation"}
        assert res["pointwise"]["trials"] == 3000
        assert res["lieb_thirring"]["bound"] == LIEB_THIRRING_BOUND
        assert all(math.isfinite(r["min_slack"]) for r in res.values())
