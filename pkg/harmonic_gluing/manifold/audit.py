from typing import List

import numpy as np

from ..report.records import InvariantCheck
from .base import TargetModel, TargetPoint
from .sphere import RoundSphere
from .torus import FlatTorus


def random_points(model: TargetModel, rng: np.random.Generator, count: int) -> TargetPoint:
    n = model.dimension
    if isinstance(model, RoundSphere):
        ambient = rng.normal(size=(count, n + 1))
        ambient *= model.radius / np.linalg.norm(ambient, axis=1)[:, None]
        return model.from_ambient(ambient)
    if isinstance(model, FlatTorus):
        return TargetPoint(rng.uniform(0.0, 1.0, size=(count, n)) * model.periods, np.zeros(count))
    lower, upper = model.chart_boxes[0]
    half = 0.1 * np.minimum(np.abs(lower), np.abs(upper))
    return TargetPoint(rng.uniform(-1.0, 1.0, size=(count, n)) * half, np.zeros(count))


def random_vectors(
    model: TargetModel, point: TargetPoint, rng: np.random.Generator, max_length: float
) -> np.ndarray:
    raw = rng.normal(size=point.coords.shape)
    lengths = model.norm(point, raw)
    target = rng.uniform(0.05, 1.0, size=len(point)) * max_length
    return raw * (target / np.where(lengths > 0, lengths, 1.0))[:, None]


def transport_isometry(
    model: TargetModel, rng: np.random.Generator, samples: int = 100, max_length: float = 1.0
) -> InvariantCheck:
    """Largest change of `⟨u, w⟩` under parallel transport over random geodesics."""
    point = random_points(model, rng, samples)
    length = min(max_length, 0.9 * model.injectivity_bound)
    v_dir = random_vectors(model, point, rng, length)
    u = rng.normal(size=point.coords.shape)
    w = rng.normal(size=point.coords.shape)
    end = model.exp(point, v_dir)
    pu = model.parallel_transport(point, v_dir, u)
    pw = model.parallel_transport(point, v_dir, w)
    drift = np.abs(model.inner(end, pu, pw) - model.inner(point, u, w))
    return InvariantCheck(
        "transport_isometry", float(drift.max()), 1e-7, producer="parallel_transport"
    )


def exp_log_round_trip(
    model: TargetModel, rng: np.random.Generator, samples: int = 100
) -> InvariantCheck:
    point = random_points(model, rng, samples)
    v = random_vectors(model, point, rng, min(0.9 * model.injectivity_bound, 2.0))
    back = model.log(point, model.exp(point, v))
    error = model.norm(point, back - v)
    return InvariantCheck("exp_log_round_trip", float(error.max()), 1e-7, producer="log_map")


def geodesic_speed(
    model: TargetModel, rng: np.random.Generator, samples: int = 50
) -> InvariantCheck:
    point = random_points(model, rng, samples)
    v = random_vectors(model, point, rng, min(0.9 * model.injectivity_bound, 1.0))
    drift = model.geodesic_speed_drift(point, v)
    return InvariantCheck("geodesic_speed_drift", float(drift.max()), 1e-7, producer="exp_map")


def curvature_symmetries(
    model: TargetModel, rng: np.random.Generator, samples: int = 100
) -> List[InvariantCheck]:
    point = random_points(model, rng, samples)
    X, Y, Z, W = (rng.normal(size=point.coords.shape) for _ in range(4))
    rxy = model.curvature(point, X, Y, Z)
    ryx = model.curvature(point, Y, X, Z)
    rxy_w = model.curvature(point, X, Y, W)
    scale = max(1.0, float(np.abs(rxy).max()))
    antisymmetry = np.abs(rxy + ryx).max() / scale
    skew = np.abs(model.inner(point, rxy, W) + model.inner(point, rxy_w, Z)).max() / scale
    return [
        InvariantCheck("curvature_antisymmetry", float(antisymmetry), 1e-6, producer="curvature_apply"),
        InvariantCheck("curvature_skew_adjoint", float(skew), 1e-6, producer="curvature_apply"),
    ]


def metric_report(
    model: TargetModel, rng: np.random.Generator, samples: int = 100
) -> List[InvariantCheck]:
    point = random_points(model, rng, samples)
    h = model.metric(point.coords, point.charts)
    gamma = model.christoffel(point.coords, point.charts)
    smallest = np.linalg.eigvalsh(0.5 * (h + np.swapaxes(h, 1, 2)))[:, 0].min()
    asymmetry = max(
        float(np.abs(h - np.swapaxes(h, 1, 2)).max()),
        float(np.abs(gamma - np.swapaxes(gamma, 2, 3)).max()),
    )
    return [
        InvariantCheck("metric_min_eigenvalue", float(smallest), 0.0, ">=", producer="metric"),
        InvariantCheck("metric_christoffel_symmetry", asymmetry, 1e-12, producer="christoffel"),
    ]


def sphere_closed_form_vs_ode(
    model: RoundSphere, rng: np.random.Generator, samples: int = 50
) -> List[InvariantCheck]:
    """Compare the great-circle formulas against the integrated geodesic system."""
    point = random_points(model, rng, samples)
    v = random_vectors(model, point, rng, 0.25 * np.pi * model.radius)
    u = rng.normal(size=point.coords.shape)
    closed = model.exp(point, v)
    ode = model.geodesic_ode(point, v, carry=u[:, None, :])
    ode_end = model.express(ode.endpoint, closed.charts, near=closed.coords)
    exp_error = np.abs(ode_end - closed.coords).max()
    jac = model.transition_jacobian(ode.endpoint.coords, point.charts, closed.charts)
    ode_transport = np.einsum("mij,mj->mi", jac, ode.transported[:, 0, :])
    transport_error = np.abs(ode_transport - model.parallel_transport(point, v, u)).max()
    X, Y, Z = (rng.normal(size=point.coords.shape) for _ in range(3))
    fd_curvature = super(RoundSphere, model).curvature(point, X, Y, Z)
    curvature_error = np.abs(fd_curvature - model.curvature(point, X, Y, Z)).max()
    return [
        InvariantCheck("sphere_exp_vs_ode", float(exp_error), 1e-8, producer="exp_map"),
        InvariantCheck("sphere_transport_vs_ode", float(transport_error), 1e-8, producer="parallel_transport"),
        InvariantCheck("sphere_curvature_vs_fd", float(curvature_error), 1e-6, producer="curvature_apply"),
    ]


def d_exp_order(model: TargetModel, point: TargetPoint, xi: np.ndarray, xi_prime: np.ndarray, steps=(2e-2, 1e-2, 5e-3)) -> float:
    """Observed order of the centered-difference derivative of `exp` (Richardson)."""
    estimates = [model.d_exp(point, xi, xi_prime, step=h)[1] for h in steps]
    coarse = np.abs(estimates[0] - estimates[1]).max()
    fine = np.abs(estimates[1] - estimates[2]).max()
    if fine == 0.0:
        return np.inf
    return float(np.log(coarse / fine) / np.log(steps[0] / steps[1]))


def d_exp_bound(model: TargetModel, rng: np.random.Generator, samples: int = 50, radius: float = 1.0) -> float:
    """Empirical `c₁ = max |E_p(ξ)|` over `|ξ| ≤ radius`, probed along random directions."""
    point = random_points(model, rng, samples)
    xi = random_vectors(model, point, rng, min(radius, 0.9 * model.injectivity_bound))
    xi_prime = random_vectors(model, point, rng, 1.0)
    base, derivative = model.d_exp(point, xi, xi_prime)
    ratio = model.norm(base, derivative) / np.maximum(model.norm(point, xi_prime), 1e-300)
    return float(ratio.max())


def geometry_audit(model: TargetModel, seed: int = 0, samples: int = 100) -> List[InvariantCheck]:
    """Run every geometry invariant on `model` and return the checks."""
    rng = np.random.default_rng(seed)
    checks = metric_report(model, rng, samples)
    checks.append(transport_isometry(model, rng, samples))
    checks.append(exp_log_round_trip(model, rng, samples))
    checks.append(geodesic_speed(model, rng, max(10, samples // 2)))
    checks.extend(curvature_symmetries(model, rng, samples))
    if isinstance(model, RoundSphere):
        checks.extend(sphere_closed_form_vs_ode(model, rng, max(10, samples // 2)))
        point = TargetPoint.single([0.2, -0.1])
        order = d_exp_order(model, point, np.array([[0.3, 0.2]]), np.array([[0.1, 0.4]]))
        checks.append(InvariantCheck("d_exp_fd_order", order, 1.9, ">=", producer="d_exp_and_d_transport"))
        c1 = d_exp_bound(model, rng, max(10, samples // 2))
        checks.append(
            InvariantCheck("d_exp_bound", c1, 1.0 + 1e-4, producer="d_exp_and_d_transport", note="c1 over |xi| <= 1")
        )
    return checks
