import unittest

from harmonic_gluing.manifold import FlatTorus, RoundSphere, geometry_audit


class SphereAuditTestCase(unittest.TestCase):
    def __init__(self, methodName: str = "runTest") -> None:
        super().__init__(methodName)
        self.checks = {check.name: check for check in geometry_audit(RoundSphere(), seed=3, samples=40)}

    def test_all_checks_pass(self) -> None:
        failed = [check.line() for check in self.checks.values() if not check.passed]
        self.assertEqual(failed, [])

    def test_closed_forms_audited(self) -> None:
        for name in ("sphere_exp_vs_ode", "sphere_transport_vs_ode", "sphere_curvature_vs_fd"):
            self.assertIn(name, self.checks)

    def test_derivative_order(self) -> None:
        self.assertGreaterEqual(self.checks["d_exp_fd_order"].value, 1.9)
        self.assertGreater(self.checks["d_exp_bound"].value, 0.0)


class TorusAuditTestCase(unittest.TestCase):
    def __init__(self, methodName: str = "runTest") -> None:
        super().__init__(methodName)
        self.checks = geometry_audit(FlatTorus(dimension=2, periods=[1.0, 1.0]), seed=0, samples=40)

    def test_all_checks_pass(self) -> None:
        self.assertTrue(all(check.passed for check in self.checks))

    def test_transport_is_exact(self) -> None:
        drift = next(check for check in self.checks if check.name == "transport_isometry")
        self.assertLess(drift.value, 1e-12)
