import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigenwave.diffusion import (
    DiffusionError,
    DiffusionSpec,
    ETA_KINDS,
    GradientNorms,
    assemble_diffusion,
    eval_eta,
    gradient_norms,
    lift_m0,
)
from eigenwave.grid import Grid2D, ScalarField


def field(grid, values):
    return ScalarField(grid, np.asarray(values, dtype=float))


def brute_force_gradient(f):
    """Two-loop central/one-sided gradient magnitude, independent of numpy.gradient."""
    g = f.grid
    arr = f.as_2d()
    mag = np.zeros_like(arr)
    for iz in range(g.nz):
        for ix in range(g.nx):
            if ix == 0:
                dx = (arr[iz, 1] - arr[iz, 0]) / g.hx
            elif ix == g.nx - 1:
                dx = (arr[iz, -1] - arr[iz, -2]) / g.hx
            else:
                dx = (arr[iz, ix + 1] - arr[iz, ix - 1]) / (2 * g.hx)
            if iz == 0:
                dz = (arr[1, ix] - arr[0, ix]) / g.hz
            elif iz == g.nz - 1:
                dz = (arr[-1, ix] - arr[-2, ix]) / g.hz
            else:
                dz = (arr[iz + 1, ix] - arr[iz - 1, ix]) / (2 * g.hz)
            mag[iz, ix] = np.hypot(dx, dz)
    return mag.reshape(-1)


class TestGradientNorms:
    def test_constant_field_flag(self):
        g = Grid2D(nx=5, nz=4, hx=1.0, hz=1.0)
        norms = gradient_norms(field(g, np.full(20, 3.0)))
        assert norms.is_constant
        assert norms.gamma1 == 0.0 and norms.gamma2 == 0.0
        assert np.all(norms.ngrad1.values == 0.0)
        assert np.all(norms.ngrad2.values == 0.0)

    def test_linear_in_x_normalizes_to_one(self):
        g = Grid2D(nx=6, nz=5, hx=2.0, hz=3.0)
        xg, _ = np.meshgrid(g.xs(), g.zs())
        norms = gradient_norms(field(g, 0.7 * xg))
        assert norms.gamma1 == pytest.approx(0.7, rel=1e-13)
        np.testing.assert_allclose(norms.ngrad1.values, 1.0, rtol=1e-13)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(17)
        g = Grid2D(nx=8, nz=8, hx=1.5, hz=0.5)
        f = field(g, rng.standard_normal(64))
        norms = gradient_norms(f)
        mag = brute_force_gradient(f)
        np.testing.assert_allclose(norms.ngrad1.values, mag / mag.max(), rtol=1e-12)
        np.testing.assert_allclose(norms.ngrad2.values, (mag / mag.max()) ** 2, rtol=1e-12)
        # the normalized square peaks at exactly 1 at the argmax
        i = int(np.argmax(mag))
        assert norms.ngrad2.values[i] == pytest.approx(1.0)
        assert norms.ngrad2.values.max() == pytest.approx(1.0)

    def test_bounds(self):
        rng = np.random.default_rng(18)
        g = Grid2D(nx=7, nz=7, hx=1.0, hz=1.0)
        norms = gradient_norms(field(g, rng.standard_normal(49)))
        for arr in (norms.ngrad1.values, norms.ngrad2.values):
            assert np.all(arr >= 0.0) and np.all(arr <= 1.0)


def make_norms(grid, v1):
    v1 = np.asarray(v1, dtype=float)
    return GradientNorms(
        ngrad1=ScalarField(grid, v1),
        ngrad2=ScalarField(grid, v1 * v1),
        gamma1=1.0,
        gamma2=1.0,
        is_constant=False,
    )


class TestEvalEta:
    def test_eta9_is_one(self):
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        rng = np.random.default_rng(0)
        norms = make_norms(g, rng.random(12))
        out = eval_eta(DiffusionSpec("eta9"), norms)
        assert np.all(out.values == 1.0)

    def test_eta1_limits(self):
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        norms = make_norms(g, np.full(12, 0.5))  # nonzero gradient everywhere
        hi = eval_eta(DiffusionSpec("eta1", 1e12), norms).values
        lo = eval_eta(DiffusionSpec("eta1", 1e-12), norms).values
        np.testing.assert_allclose(hi, 1.0, rtol=1e-10)
        assert np.all(lo < 1e-10)

    def test_eta3_at_matching_beta(self):
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        beta = 0.37
        v1 = np.full(12, np.sqrt(beta))  # ngrad2 == beta
        out = eval_eta(DiffusionSpec("eta3", beta), make_norms(g, v1))
        np.testing.assert_allclose(out.values, 1.0 / (2.0 * beta), rtol=1e-13)

    def test_eta4_eta8_threshold(self):
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        v1 = np.full(12, 0.5)
        v1[3] = 0.0  # raw gradient below threshold at one node
        norms = make_norms(g, v1)
        for kind in ("eta4", "eta8"):
            out = eval_eta(DiffusionSpec(kind, 2.0), norms)
            assert out.values[3] == 1.0
            assert np.all(out.values > 0.0)

    def test_eta8_is_inverse_gradient(self):
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        out = eval_eta(DiffusionSpec("eta8"), make_norms(g, np.full(12, 0.25)))
        np.testing.assert_allclose(out.values, 4.0)

    def test_constant_model_gives_positive_eta_for_all_kinds(self):
        g = Grid2D(nx=5, nz=4, hx=1.0, hz=1.0)
        norms = gradient_norms(field(g, np.full(20, 2.0)))
        for kind in ETA_KINDS:
            out = eval_eta(DiffusionSpec(kind, 0.7), norms)
            assert np.all(out.values > 0.0), kind

    @given(
        kind=st.sampled_from(ETA_KINDS),
        beta=st.floats(1e-7, 1e6),
        seed=st.integers(0, 50),
    )
    @settings(max_examples=60, deadline=None)
    def test_positivity_property(self, kind, beta, seed):
        rng = np.random.default_rng(seed)
        g = Grid2D(nx=5, nz=4, hx=1.0, hz=1.0)
        norms = gradient_norms(field(g, rng.standard_normal(20)))
        out = eval_eta(DiffusionSpec(kind, beta), norms)
        assert np.all(out.values > 0.0)

    def test_two_sided_decay_kinds(self):
        # eta3, eta6, eta7 vanish in both scaling limits
        g = Grid2D(nx=4, nz=3, hx=1.0, hz=1.0)
        norms = make_norms(g, np.full(12, 0.5))
        for kind in ("eta3", "eta6", "eta7"):
            lo = eval_eta(DiffusionSpec(kind, 1e-10), norms).values
            hi = eval_eta(DiffusionSpec(kind, 1e10), norms).values
            assert np.all(lo < 1e-8), kind
            assert np.all(hi < 1e-8), kind

    def test_invalid_spec(self):
        with pytest.raises(DiffusionError):
            DiffusionSpec("eta1", 0.0)
        with pytest.raises(DiffusionError):
            DiffusionSpec("eta42", 1.0)
        DiffusionSpec("eta9", -1.0)  # beta ignored for eta9


def dense_diffusion_reference(eta):
    """Loop-based interior assembly of -div(eta grad) with face averages."""
    g = eta.grid
    e = eta.as_2d()
    mx, mz = g.nx - 2, g.nz - 2
    A = np.zeros((mx * mz, mx * mz))
    ihx2, ihz2 = 1.0 / g.hx**2, 1.0 / g.hz**2
    for jz in range(mz):
        for jx in range(mx):
            iz, ix = jz + 1, jx + 1
            row = jz * mx + jx
            ce = 0.5 * (e[iz, ix] + e[iz, ix + 1]) * ihx2
            cw = 0.5 * (e[iz, ix] + e[iz, ix - 1]) * ihx2
            cs = 0.5 * (e[iz, ix] + e[iz + 1, ix]) * ihz2
            cn = 0.5 * (e[iz, ix] + e[iz - 1, ix]) * ihz2
            A[row, row] = ce + cw + cs + cn
            if jx + 1 < mx:
                A[row, row + 1] = -ce
            if jx - 1 >= 0:
                A[row, row - 1] = -cw
            if jz + 1 < mz:
                A[row, row + mx] = -cs
            if jz - 1 >= 0:
                A[row, row - mx] = -cn
    return A


class TestAssembleDiffusion:
    def test_constant_eta_is_laplacian(self):
        g = Grid2D(nx=6, nz=5, hx=2.0, hz=4.0)
        op = assemble_diffusion(field(g, np.ones(30)))
        A = op.matrix.toarray()
        mx = g.nx - 2
        row = 1 * mx + 2  # interior of the interior
        assert A[row, row] == pytest.approx(2.0 / 4.0 + 2.0 / 16.0)
        assert A[row, row + 1] == pytest.approx(-1.0 / 4.0)
        assert A[row, row + mx] == pytest.approx(-1.0 / 16.0)

    def test_exact_symmetry(self):
        rng = np.random.default_rng(23)
        g = Grid2D(nx=9, nz=9, hx=1.0, hz=1.5)
        op = assemble_diffusion(field(g, rng.random(81) + 0.1))
        A = op.matrix.toarray()
        assert np.max(np.abs(A - A.T)) == 0.0

    def test_matches_dense_reference_7x7(self):
        rng = np.random.default_rng(24)
        g = Grid2D(nx=7, nz=7, hx=1.25, hz=0.75)
        eta = field(g, rng.random(49) + 0.2)
        A = assemble_diffusion(eta).matrix.toarray()
        R = dense_diffusion_reference(eta)
        # identical formulas, summation order may differ by one rounding
        np.testing.assert_allclose(A, R, rtol=1e-14, atol=1e-15)

    def test_positive_definite(self):
        rng = np.random.default_rng(25)
        g = Grid2D(nx=8, nz=6, hx=1.0, hz=1.0)
        op = assemble_diffusion(field(g, rng.random(48) + 0.05))
        w = np.linalg.eigvalsh(op.matrix.toarray())
        assert w.min() > 0.0

    def test_nonpositive_eta_rejected(self):
        g = Grid2D(nx=4, nz=4, hx=1.0, hz=1.0)
        vals = np.ones(16)
        vals[5] = 0.0
        with pytest.raises(DiffusionError):
            assemble_diffusion(field(g, vals))


class TestLift:
    def test_constant_boundary_gives_constant(self):
        rng = np.random.default_rng(31)
        g = Grid2D(nx=7, nz=6, hx=1.0, hz=1.0)
        eta = field(g, rng.random(42) + 0.1)
        m = field(g, np.full(42, 4.2))
        m0 = lift_m0(m, eta)
        np.testing.assert_allclose(m0.values, 4.2, rtol=1e-12)

    def test_discrete_harmonic_polynomial(self):
        # x^2 - z^2 has exactly zero 5-point Laplacian on a square-spacing grid
        g = Grid2D(nx=9, nz=9, hx=2.0, hz=2.0)
        xg, zg = np.meshgrid(g.xs(), g.zs())
        poly = (xg**2 - zg**2).reshape(-1)
        m0 = lift_m0(field(g, poly), field(g, np.ones(81)))
        np.testing.assert_allclose(m0.values, poly, rtol=1e-10, atol=1e-8)

    def test_matches_dense_solve_oracle(self):
        rng = np.random.default_rng(32)
        g = Grid2D(nx=15, nz=15, hx=1.0, hz=1.0)
        eta = field(g, rng.random(225) + 0.1)
        m = field(g, rng.standard_normal(225))
        m0 = lift_m0(m, eta)
        # fully independent dense path: loop-built matrix and boundary rhs
        A = dense_diffusion_reference(eta)
        e = eta.as_2d()
        m2 = m.as_2d()
        mx, mz = g.nx - 2, g.nz - 2
        rhs = np.zeros(mx * mz)
        ihx2, ihz2 = 1.0 / g.hx**2, 1.0 / g.hz**2
        for jz in range(mz):
            for jx in range(mx):
                iz, ix = jz + 1, jx + 1
                row = jz * mx + jx
                if ix == 1:
                    rhs[row] += 0.5 * (e[iz, ix] + e[iz, 0]) * ihx2 * m2[iz, 0]
                if ix == g.nx - 2:
                    rhs[row] += 0.5 * (e[iz, ix] + e[iz, -1]) * ihx2 * m2[iz, -1]
                if iz == 1:
                    rhs[row] += 0.5 * (e[iz, ix] + e[0, ix]) * ihz2 * m2[0, ix]
                if iz == g.nz - 2:
                    rhs[row] += 0.5 * (e[iz, ix] + e[-1, ix]) * ihz2 * m2[-1, ix]
        interior = np.linalg.solve(A, rhs)
        inner2d = m0.as_2d()[1:-1, 1:-1].reshape(-1)
        np.testing.assert_allclose(inner2d, interior, atol=1e-8)

    def test_boundary_values_preserved(self):
        rng = np.random.default_rng(33)
        g = Grid2D(nx=6, nz=5, hx=1.0, hz=1.0)
        m = field(g, rng.standard_normal(30))
        m0 = lift_m0(m, field(g, np.ones(30)))
        xg, zg = np.meshgrid(np.arange(6), np.arange(5))
        inner = (xg.ravel() > 0) & (xg.ravel() < 5) & (zg.ravel() > 0) & (zg.ravel() < 4)
        np.testing.assert_array_equal(m0.values[~inner], m.values[~inner])
