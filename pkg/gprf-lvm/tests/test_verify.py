import numpy as np
import pytest

from gprf.verify import (
    CheckResult, central_difference, check_bcm_equivalence, check_bethe_zero, check_degenerate_identities,
    check_gradients, check_precision_quadratic_form, check_tree_exactness, relative_error, run_suite
)


class TestHelpers:
    def test_central_difference_of_quadratic(self):
        x = np.array([[1.0, -2.0], [0.5, 3.0]])
        grad = central_difference(lambda z: float(np.sum(z ** 2)), x)
        np.testing.assert_allclose(grad, 2.0 * x, rtol=1e-8)

    def test_relative_error(self):
        assert relative_error(np.ones(4), np.ones(4)) == 0.0
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
        assert relative_error(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == pytest.approx(1.0)


class TestChecks:
    def test_tree_exactness(self):
        result = check_tree_exactness()
        assert isinstance(result, CheckResult)
        assert result.passed, result

    def test_precision_quadratic_form(self):
        result = check_precision_quadratic_form()
        assert result.name == 'precision_quadratic_form'
        assert result.passed, result

    def test_injected_fault_is_caught(self):
        result = check_precision_quadratic_form(inject_fault=True)
        assert not result.passed
        assert result.residual > result.tolerance

    def test_bethe_zero(self):
        assert all(r.passed for r in check_bethe_zero())

    def test_bcm_equivalence(self):
        assert check_bcm_equivalence().passed

    def test_degenerate_identities(self):
        results = check_degenerate_identities()
        assert len(results) == 3
        assert all(r.passed for r in results), results

    def test_gradients(self):
        results = check_gradients()
        assert [r.name for r in results] == [
            'gradient_kernel_hyper', 'gradient_kernel_input', 'gradient_gprf_x', 'gradient_gprf_theta',
            'gradient_map_objective', 'gradient_full_gp',
        ]
        assert all(r.passed for r in results), results


@pytest.mark.slow
class TestRunSuite:
    def test_all_pass_and_repeat_exactly(self):
        first = run_suite(seed=0)
        second = run_suite(seed=0)
        assert len(first) == 13
        assert all(r.passed for r in first)
        assert [r.residual for r in first] == [r.residual for r in second]

    def test_fault_fails_only_precision_check(self):
        failed = [r.name for r in run_suite(inject_fault=True) if not r.passed]
        assert failed == ['precision_quadratic_form']
