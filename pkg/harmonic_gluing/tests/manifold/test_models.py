import numpy as np
import pytest

from harmonic_gluing.errors import ConfigParse, OutOfInjectivityRadius, VectorTooLong
from harmonic_gluing.manifold import (
    ChartModel,
    FlatTorus,
    RoundSphere,
    TargetPoint,
    load_model,
)


def test_torus_straight_lines():
    torus = FlatTorus(dimension=2, periods=[1.0, 1.0])
    end = torus.exp(TargetPoint.single([0.1, 0.2]), np.array([[0.3, 0.0]]))
    np.testing.assert_allclose(end.coords, [[0.4, 0.2]], atol=1e-15)


def test_torus_log_is_wrapped_subtraction():
    torus = FlatTorus(dimension=2, periods=[1.0, 1.0])
    v = torus.log(TargetPoint.single([0.0, 0.0]), TargetPoint.single([0.25, 0.9]))
    np.testing.assert_allclose(v, [[0.25, -0.1]], atol=1e-12)


def test_torus_transport_and_curvature_are_trivial():
    torus = FlatTorus(dimension=3, periods=[1.0, 2.0, 3.0])
    point = TargetPoint.single([0.1, 0.2, 0.3])
    u = np.array([[1.0, -2.0, 0.5]])
    np.testing.assert_array_equal(torus.parallel_transport(point, np.array([[0.2, 0.1, 0.0]]), u), u)
    np.testing.assert_array_equal(torus.curvature(point, u, 2 * u, -u), np.zeros((1, 3)))
    assert np.all(torus.christoffel(point.coords, point.charts) == 0.0)


def test_torus_log_beyond_injectivity():
    torus = FlatTorus(dimension=2, periods=[1.0, 1.0], injectivity_bound=0.2)
    with pytest.raises(OutOfInjectivityRadius):
        torus.log(TargetPoint.single([0.0, 0.0]), TargetPoint.single([0.3, 0.0]))


def test_exp_of_zero_vector():
    sphere = RoundSphere()
    point = TargetPoint.single([0.3, -0.2])
    end = sphere.exp(point, np.zeros((1, 2)))
    np.testing.assert_allclose(end.coords, point.coords, atol=1e-14)


def test_sphere_quarter_turn_from_north_pole_reaches_equator():
    sphere = RoundSphere()
    north = TargetPoint.single([0.0, 0.0], chart=1)
    # the metric at the chart origin is 4δ, so these components have length π/2
    end = sphere.exp(north, np.array([[np.pi / 4, 0.0]]))
    ambient = sphere.to_ambient(end)
    assert abs(ambient[0, -1]) < 1e-12
    assert abs(abs(ambient[0, 0]) - 1.0) < 1e-12


def test_sphere_exp_matches_ode():
    sphere = RoundSphere()
    point = TargetPoint.single([0.2, 0.1])
    v = np.array([[0.3, -0.25]])
    closed = sphere.exp(point, v)
    ode = sphere.exp_ode(point, v)
    np.testing.assert_allclose(
        sphere.express(ode, closed.charts, near=closed.coords), closed.coords, atol=1e-8
    )


def test_sphere_vector_too_long():
    sphere = RoundSphere()
    with pytest.raises(VectorTooLong):
        sphere.exp(TargetPoint.single([0.0, 0.0]), np.array([[2.0, 0.0]]))


def test_sphere_log_exp_round_trip():
    rng = np.random.default_rng(0)
    sphere = RoundSphere()
    ambient = rng.normal(size=(100, 3))
    ambient /= np.linalg.norm(ambient, axis=1)[:, None]
    point = sphere.from_ambient(ambient)
    raw = rng.normal(size=(100, 2))
    lengths = sphere.norm(point, raw)
    v = raw * (rng.uniform(0.0, 0.49 * np.pi, size=100) / lengths)[:, None]
    back = sphere.log(point, sphere.exp(point, v))
    assert np.max(sphere.norm(point, back - v)) < 1e-8


def test_equator_transport_is_the_closed_form_rotation():
    sphere = RoundSphere()
    start = sphere.from_ambient(np.array([[1.0, 0.0, 0.0]]))
    east = sphere.vector_from_ambient(start, np.array([[0.0, 1.0, 0.0]]))
    v_dir = east * (0.5 * np.pi / sphere.norm(start, east))[:, None]
    moved = sphere.parallel_transport(start, v_dir, east)
    end = sphere.exp(start, v_dir)
    np.testing.assert_allclose(sphere.to_ambient(end), [[0.0, 1.0, 0.0]], atol=1e-12)
    np.testing.assert_allclose(sphere.vector_to_ambient(end, moved), [[-1.0, 0.0, 0.0]], atol=1e-12)
    np.testing.assert_allclose(sphere.norm(end, moved), sphere.norm(start, east), rtol=1e-12)
    ode = sphere.transport_ode(start, v_dir, east)
    jac = sphere.transition_jacobian(sphere.exp_ode(start, v_dir).coords, start.charts, end.charts)
    np.testing.assert_allclose(np.einsum("mij,mj->mi", jac, ode), moved, atol=1e-7)


def test_curvature_closed_form_against_finite_differences():
    rng = np.random.default_rng(1)
    sphere = RoundSphere()
    point = TargetPoint(rng.uniform(-0.8, 0.8, size=(20, 2)), np.zeros(20))
    X, Y, Z = (rng.normal(size=(20, 2)) for _ in range(3))
    closed = sphere.curvature(point, X, Y, Z)
    fd = super(RoundSphere, sphere).curvature(point, X, Y, Z)
    np.testing.assert_allclose(fd, closed, atol=1e-6)
    np.testing.assert_allclose(sphere.curvature(point, X, X, Z), 0.0, atol=1e-14)


def test_d_exp_at_zero_is_identity():
    sphere = RoundSphere()
    point = TargetPoint.single([0.4, -0.3])
    xi_prime = np.array([[0.2, 0.7]])
    _, derivative = sphere.d_exp(point, np.zeros((1, 2)), xi_prime)
    np.testing.assert_allclose(derivative, xi_prime, atol=1e-8)


def test_torus_derivative_maps_are_trivial():
    torus = FlatTorus(dimension=2)
    point = TargetPoint.single([0.3, 0.3])
    xi, xi_prime, eta = (np.array([[0.1, -0.05]]), np.array([[0.4, 0.2]]), np.array([[1.0, 2.0]]))
    vector, handle = torus.d_exp_and_d_transport(point, xi, xi_prime)
    np.testing.assert_allclose(vector.components, xi_prime, atol=1e-9)
    np.testing.assert_allclose(handle(eta), 0.0, atol=1e-9)


def test_chart_model_reproduces_the_sphere():
    chart = ChartModel(dimension=2, injectivity_bound=1.0, table="round-sphere")
    sphere = RoundSphere()
    point = TargetPoint.single([0.1, 0.2])
    v = np.array([[0.15, -0.1]])
    np.testing.assert_allclose(chart.exp(point, v).coords, sphere.exp(point, v).coords, atol=1e-8)
    np.testing.assert_allclose(chart.log(point, sphere.exp(point, v)), v, atol=1e-7)


def test_chart_model_needs_injectivity_bound():
    with pytest.raises(AssertionError):
        ChartModel(dimension=2, table="flat")


def test_load_model_from_descriptor():
    model = load_model({"target": {"kind": "flat-torus", "dimension": 3, "periods": [2.0]}})
    assert isinstance(model, FlatTorus)
    np.testing.assert_array_equal(model.periods, [2.0, 2.0, 2.0])
    assert model.injectivity_bound == 1.0


def test_load_model_errors(tmp_path):
    with pytest.raises(ConfigParse):
        load_model({"kind": "hyperbolic-plane"})
    missing = tmp_path / "missing.toml"
    with pytest.raises(ConfigParse, match="missing.toml"):
        load_model(str(missing))
