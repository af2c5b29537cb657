import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigenwave.grid import (
    Grid2D,
    GridError,
    Model,
    ScalarField,
    clamp_model,
    relative_error,
    slowness_to_speed,
    speed_to_slowness,
)


def field(grid, values):
    return ScalarField(grid, np.asarray(values, dtype=float))


class TestGrid2D:
    def test_validation(self):
        with pytest.raises(GridError):
            Grid2D(nx=2, nz=5, hx=1.0, hz=1.0)
        with pytest.raises(GridError):
            Grid2D(nx=5, nz=5, hx=0.0, hz=1.0)
        with pytest.raises(GridError):
            Grid2D(nx=5, nz=5, hx=1.0, hz=-2.0)

    @given(
        nx=st.integers(3, 40),
        nz=st.integers(3, 40),
        ix=st.integers(0, 39),
        iz=st.integers(0, 39),
    )
    def test_index_bijection(self, nx, nz, ix, iz):
        ix, iz = ix % nx, iz % nz
        g = Grid2D(nx=nx, nz=nz, hx=1.0, hz=2.0)
        assert g.unflatten(g.flatten(ix, iz)) == (ix, iz)

    def test_x_fastest_ordering(self):
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        assert g.flatten(1, 0) == 1
        assert g.flatten(0, 1) == 4
        assert g.flatten(3, 2) == 11

    def test_contains(self):
        g = Grid2D(nx=5, nz=4, hx=10.0, hz=10.0, x0=100.0, z0=0.0)
        assert g.contains(100.0, 0.0)
        assert g.contains(140.0, 30.0)
        assert not g.contains(99.0, 0.0)
        assert not g.contains(100.0, 31.0)


class TestScalarField:
    def test_length_check(self):
        g = Grid2D(nx=3, nz=3, hx=1.0, hz=1.0)
        with pytest.raises(GridError):
            ScalarField(g, np.zeros(8))

    def test_rejects_nonfinite(self):
        g = Grid2D(nx=3, nz=3, hx=1.0, hz=1.0)
        vals = np.zeros(9)
        vals[4] = np.nan
        with pytest.raises(GridError):
            ScalarField(g, vals)

    def test_accepts_2d_nz_nx(self):
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        arr = np.arange(12.0).reshape(3, 4)
        f = ScalarField(g, arr)
        assert f.values[5] == arr[1, 1]
        assert np.array_equal(f.as_2d(), arr)

    def test_immutable(self):
        g = Grid2D(nx=3, nz=3, hx=1.0, hz=1.0)
        f = ScalarField(g, np.zeros(9))
        with pytest.raises(ValueError):
            f.values[0] = 1.0

    def test_digest_changes_with_values_and_grid(self):
        g = Grid2D(nx=3, nz=3, hx=1.0, hz=1.0)
        a = ScalarField(g, np.zeros(9))
        b = ScalarField(g, np.ones(9))
        c = ScalarField(Grid2D(nx=3, nz=3, hx=2.0, hz=1.0), np.zeros(9))
        assert a.digest() != b.digest()
        assert a.digest() != c.digest()
        assert a.digest() == ScalarField(g, np.zeros(9)).digest()


class TestRelativeError:
    def test_identity_is_zero(self):
        g = Grid2D(nx=4, nz=4, hx=1.0, hz=1.0)
        f = field(g, np.linspace(1, 2, 16))
        assert relative_error(f, f) == 0.0

    def test_constant_fields(self):
        g = Grid2D(nx=5, nz=3, hx=2.0, hz=1.0)
        assert relative_error(field(g, np.full(15, 2.0)), field(g, np.full(15, 1.0))) == pytest.approx(50.0)

    def test_matches_two_loop_oracle(self):
        rng = np.random.default_rng(42)
        g = Grid2D(nx=8, nz=8, hx=1.0, hz=1.0)
        a = rng.random(64) + 0.5
        b = rng.random(64)
        # independent brute-force norm computation
        num = 0.0
        den = 0.0
        for iz in range(8):
            for ix in range(8):
                i = iz * 8 + ix
                num += (a[i] - b[i]) ** 2
                den += a[i] ** 2
        expected = 100.0 * np.sqrt(num) / np.sqrt(den)
        assert relative_error(field(g, a), field(g, b)) == pytest.approx(expected, rel=1e-13)

    @given(scale=st.floats(-1e6, 1e6).filter(lambda a: abs(a) > 1e-6), seed=st.integers(0, 100))
    @settings(max_examples=25)
    def test_scale_covariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        a = rng.random(12) + 0.5
        b = rng.random(12)
        e1 = relative_error(field(g, a), field(g, b))
        e2 = relative_error(field(g, scale * a), field(g, scale * b))
        assert e2 == pytest.approx(e1, rel=1e-9)

    def test_nonnegative_and_zero_iff_equal(self):
        rng = np.random.default_rng(3)
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        a = rng.random(12) + 0.5
        b = a.copy()
        b[5] += 1e-9
        assert relative_error(field(g, a), field(g, b)) > 0.0

    def test_errors(self):
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        g2 = Grid2D(nx=3, nz=4, hx=1.0, hz=1.0)
        with pytest.raises(GridError):
            relative_error(field(g, np.ones(12)), field(g2, np.ones(12)))
        with pytest.raises(GridError):
            relative_error(field(g, np.zeros(12)), field(g, np.ones(12)))


class TestSpeedSlowness:
    def test_1500(self):
        g = Grid2D(nx=3, nz=3, hx=1.0, hz=1.0)
        m = speed_to_slowness(field(g, np.full(9, 1500.0)))
        assert m.m[0] == pytest.approx(1.0 / 1500.0 ** 2, rel=1e-15)

    def test_4500(self):
        g = Grid2D(nx=3, nz=3, hx=1.0, hz=1.0)
        m = speed_to_slowness(field(g, np.full(9, 4500.0)))
        assert m.m[0] == pytest.approx(1.0 / 4500.0 ** 2, rel=1e-15)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        g = Grid2D(nx=5, nz=4, hx=1.0, hz=1.0)
        c = field(g, 1500.0 + 3000.0 * rng.random(20))
        back = slowness_to_speed(speed_to_slowness(c).field)
        np.testing.assert_allclose(back.values, c.values, rtol=4e-16)

    def test_nonpositive_rejected(self):
        g = Grid2D(nx=3, nz=3, hx=1.0, hz=1.0)
        vals = np.full(9, 100.0)
        vals[2] = 0.0
        with pytest.raises(GridError):
            speed_to_slowness(field(g, vals))
        with pytest.raises(GridError):
            Model(field(g, np.full(9, -1.0)), 10, 100)


class TestClampModel:
    def test_no_clamp_inside_bounds(self):
        g = Grid2D(nx=3, nz=3, hx=1.0, hz=1.0)
        m = speed_to_slowness(field(g, np.full(9, 2000.0)))
        clamped, n = clamp_model(m.field, 1000.0, 4000.0)
        assert n == 0
        np.testing.assert_array_equal(clamped.m, m.m)

    def test_clamps_and_counts(self):
        g = Grid2D(nx=3, nz=3, hx=1.0, hz=1.0)
        speeds = np.full(9, 2000.0)
        speeds[0] = 500.0   # too slow -> m too large
        speeds[1] = 9000.0  # too fast -> m too small
        m = speed_to_slowness(field(g, speeds))
        clamped, n = clamp_model(m.field, 1000.0, 4000.0)
        assert n == 2
        c = slowness_to_speed(clamped.field).values
        assert c[0] == pytest.approx(1000.0)
        assert c[1] == pytest.approx(4000.0)
        assert np.all(c >= 1000.0 - 1e-9) and np.all(c <= 4000.0 + 1e-9)
