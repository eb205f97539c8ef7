import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from scbf.errors import DegenerateSet, OutOfDomain
from scbf.grid import (
    BOUNDARY,
    EXTERIOR,
    INTERIOR,
    GridSpec,
    ImplicitSet,
    ScalarField,
    classify_nodes,
    gradient_at,
    hessian_at,
    interpolate,
    read_field,
    sup_norm,
    write_field,
)


def grid2d(counts=(11, 21)):
    return GridSpec([-1.0, -2.0], [1.0, 2.0], counts)


class TestSupNorm:
    def test_constant_field(self):
        spec = grid2d()
        assert sup_norm(ScalarField(spec, np.full(spec.size, 0.5))) == 0.5

    def test_zero_field(self):
        spec = grid2d()
        assert sup_norm(ScalarField(spec, np.zeros(spec.size))) == 0.0

    def test_sign_symmetry(self):
        spec = GridSpec([0.0], [1.0], [3])
        assert sup_norm(ScalarField(spec, [-3.0, 1.0, 2.0])) == 3.0

    @given(st.integers(0, 2**32 - 1), st.floats(-100, 100), st.floats(-100, 100))
    @settings(max_examples=25, deadline=None)
    def test_norm_axioms(self, seed, a, b):
        spec = GridSpec([0.0], [1.0], [7])
        rng = np.random.default_rng(seed)
        u = ScalarField(spec, rng.normal(size=7))
        v = ScalarField(spec, rng.normal(size=7))
        # absolute homogeneity
        assert sup_norm(ScalarField(spec, a * u.values)) == pytest.approx(
            abs(a) * sup_norm(u), rel=1e-12, abs=1e-12
        )
        # triangle inequality
        s = ScalarField(spec, u.values + v.values)
        assert sup_norm(s) <= sup_norm(u) + sup_norm(v) + 1e-12


class TestInterpolate:
    def test_node_exactness(self):
        spec = grid2d((5, 7))
        rng = np.random.default_rng(0)
        f = ScalarField(spec, rng.normal(size=spec.size))
        nodes = spec.nodes()
        for k in [0, 3, spec.size // 2, spec.size - 1]:
            assert interpolate(f, nodes[k]) == pytest.approx(f.values[k], abs=1e-12)

    def test_linearity_1d(self):
        spec = GridSpec([0.0], [1.0], [3])
        f = ScalarField(spec, [0.0, 0.5, 1.0])
        assert interpolate(f, [0.25]) == pytest.approx(0.25)

    def test_cell_center_symmetry(self):
        spec = GridSpec([0.0, 0.0], [1.0, 1.0], [3, 3])
        vals = np.zeros((3, 3))
        vals[1, :] = [0.0, 0.0, 0.0]
        vals[0, :] = [0.0, 0.0, 0.0]
        # cell with corners 0,0,1,1 around (0.25, 0.25)
        vals[0, 0] = 0.0
        vals[0, 1] = 0.0
        vals[1, 0] = 1.0
        vals[1, 1] = 1.0
        f = ScalarField(spec, vals.ravel())
        assert interpolate(f, [0.25, 0.25]) == pytest.approx(0.5)

    def test_out_of_domain(self):
        spec = grid2d()
        f = ScalarField(spec, np.zeros(spec.size))
        with pytest.raises(OutOfDomain):
            interpolate(f, [1.5, 0.0])

    def test_periodic_wrap(self):
        spec = GridSpec([0.0], [1.0], [4], periodic=[True])
        f = ScalarField(spec, [1.0, 2.0, 3.0, 4.0])
        assert interpolate(f, [1.0]) == pytest.approx(1.0)   # wraps to 0
        assert interpolate(f, [-0.125]) == pytest.approx(2.5)  # between last and first

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_monotone_bounds_random(self, seed):
        rng = np.random.default_rng(seed)
        spec = grid2d((6, 5))
        f = ScalarField(spec, rng.normal(size=spec.size))
        x = np.array([
            rng.uniform(spec.lower[0], spec.upper[0]),
            rng.uniform(spec.lower[1], spec.upper[1]),
        ])
        val = interpolate(f, x)
        assert f.values.min() - 1e-12 <= val <= f.values.max() + 1e-12

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_node_exactness_random(self, seed):
        rng = np.random.default_rng(seed)
        spec = GridSpec([0.0, -1.0], [2.0, 1.0], (5, 4), periodic=[False, True])
        f = ScalarField(spec, rng.normal(size=spec.size))
        k = int(rng.integers(spec.size))
        assert interpolate(f, spec.nodes()[k]) == pytest.approx(f.values[k], abs=1e-10)


class TestDerivatives:
    def test_linear_field(self):
        spec = grid2d((9, 9))
        nodes = spec.nodes()
        f = ScalarField(spec, nodes[:, 0])
        x = np.array([0.3, 0.4])
        assert_allclose(gradient_at(f, x), [1.0, 0.0], atol=1e-12)
        assert_allclose(hessian_at(f, x), np.zeros((2, 2)), atol=1e-12)

    def test_quadratic_exactness(self):
        spec = GridSpec([-1.0], [1.0], [21])  # h = 0.1
        nodes = spec.nodes()
        f = ScalarField(spec, nodes[:, 0] ** 2)
        H = hessian_at(f, np.array([0.35]))
        assert H[0, 0] == pytest.approx(2.0, abs=1e-10)

    def test_sine_gradient_order(self):
        # [DERIVED] central difference of sin at 0: error bounded by 2 h^2
        spec = GridSpec([-1.0], [1.0], [41])
        h = spec.spacing[0]
        nodes = spec.nodes()
        f = ScalarField(spec, np.sin(nodes[:, 0]))
        g = gradient_at(f, np.array([0.0]))[0]
        assert abs(g - 1.0) <= 2.0 * h * h

    def test_cross_derivative(self):
        spec = GridSpec([-1.0, -1.0], [1.0, 1.0], (11, 11))
        nodes = spec.nodes()
        f = ScalarField(spec, nodes[:, 0] * nodes[:, 1])
        H = hessian_at(f, np.array([0.1, -0.2]))
        assert H[0, 1] == pytest.approx(1.0, abs=1e-10)
        assert H[1, 0] == H[0, 1]

    def test_hessian_symmetric(self):
        rng = np.random.default_rng(3)
        spec = grid2d((8, 8))
        f = ScalarField(spec, rng.normal(size=spec.size))
        H = hessian_at(f, np.array([0.17, 0.71]))
        assert_allclose(H, H.T)


class TestClassify:
    def test_box_counts(self):
        spec = GridSpec([0.0, 0.0], [1.0, 1.0], (5, 5))
        cls = classify_nodes(spec, ImplicitSet("box"))
        assert (cls == INTERIOR).sum() == 9
        assert (cls == BOUNDARY).sum() == 16

    def test_disk_obstacle(self):
        spec = GridSpec([-2.0, -2.0], [2.0, 2.0], (21, 21))
        nodes = spec.nodes()
        sdf = ScalarField(spec, 1.0 - np.hypot(nodes[:, 0], nodes[:, 1]))
        cls = classify_nodes(spec, ImplicitSet("sdf", sdf))
        inside_obstacle = np.hypot(nodes[:, 0], nodes[:, 1]) < 1.0
        assert np.all(cls[inside_obstacle] == EXTERIOR)
        # ring of boundary nodes around the obstacle
        assert (cls == BOUNDARY).sum() > 4 * 20  # box shell plus obstacle ring

    def test_degenerate(self):
        spec = GridSpec([0.0], [1.0], [5])
        sdf = ScalarField(spec, np.full(5, 1.0))
        with pytest.raises((DegenerateSet, ValueError)):
            classify_nodes(spec, ImplicitSet("sdf", sdf))

    def test_periodic_dim_has_no_shell(self):
        spec = GridSpec([0.0, 0.0], [1.0, 1.0], (5, 8), periodic=[False, True])
        cls = classify_nodes(spec, ImplicitSet("box")).reshape(5, 8)
        assert np.all(cls[0, :] == BOUNDARY)
        assert np.all(cls[-1, :] == BOUNDARY)
        assert np.all(cls[1:-1, :] == INTERIOR)


class TestFieldFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        spec = GridSpec([-1.0, 0.0], [1.0, 3.0], (6, 5), periodic=[False, True])
        f = ScalarField(spec, rng.normal(size=spec.size))
        p1 = tmp_path / "a.fld"
        p2 = tmp_path / "b.fld"
        write_field(f, p1)
        g = read_field(p1)
        write_field(g, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert g.spec == spec
        assert np.array_equal(g.values, f.values)

    def test_rejects_non_finite(self):
        spec = GridSpec([0.0], [1.0], [3])
        with pytest.raises(ValueError):
            ScalarField(spec, [0.0, np.nan, 1.0])

    def test_header_errors(self, tmp_path):
        bad = tmp_path / "bad.fld"
        bad.write_text("not a field\n")
        with pytest.raises(ValueError):
            read_field(bad)


class TestGridSpec:
    def test_invariants(self):
        with pytest.raises(ValueError):
            GridSpec([0.0], [0.0], [5])
        with pytest.raises(ValueError):
            GridSpec([0.0], [1.0], [2])

    def test_periodic_excludes_endpoint(self):
        spec = GridSpec([0.0], [1.0], [4], periodic=[True])
        assert spec.spacing[0] == pytest.approx(0.25)
        assert spec.coordinates(0)[-1] == pytest.approx(0.75)

    def test_spacing_nonperiodic(self):
        spec = GridSpec([0.0], [1.0], [5])
        assert spec.spacing[0] == pytest.approx(0.25)
        assert spec.coordinates(0)[-1] == pytest.approx(1.0)
