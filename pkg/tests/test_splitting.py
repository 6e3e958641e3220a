"""Operator splitting: coefficient builders, the step loop, composition,
the forcing method, steppers, and the coefficient file format."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from chronos import diagnostics as diag
from chronos.core import OdeSystem, PartitionedOdeSystem, ToleranceSpec
from chronos.diagnostics import ChronosError
from chronos.erk import erk_step, get_table
from chronos.splitting import (ErkStepper, FlowStepper, ForcingMethod,
                               SplittingCoefficients, compose, default_methods,
                               forcing_step, lie_trotter, load_coefficients,
                               parallel, save_coefficients, splitting_evolve,
                               splitting_step, stepper_from_erk, strang, suzuki3)


class TestCoefficientBuilders:
    def test_lie_trotter_layout(self):
        m = lie_trotter(2)
        assert (m.r, m.s, m.n_partitions) == (1, 1, 2)
        np.testing.assert_array_equal(m.alpha, [1.0])
        np.testing.assert_array_equal(m.beta[0, 1, :], [1.0, 1.0])

    def test_strang_2_layout(self):
        m = strang(2)
        assert (m.r, m.s) == (1, 2)
        np.testing.assert_array_equal(m.beta[0, :, 0], [0.0, 0.5, 1.0])
        np.testing.assert_array_equal(m.beta[0, :, 1], [0.0, 1.0, 1.0])

    def test_parallel_2_layout(self):
        m = parallel(2)
        assert m.r == 3
        np.testing.assert_array_equal(m.alpha, [1.0, 1.0, -1.0])
        # method 1 evolves only partition 1, method 2 only partition 2,
        # method 3 nothing
        np.testing.assert_array_equal(m.beta[0, 1, :], [1.0, 0.0])
        np.testing.assert_array_equal(m.beta[1, 1, :], [0.0, 1.0])
        np.testing.assert_array_equal(m.beta[2, 1, :], [0.0, 0.0])

    @pytest.mark.parametrize("builder", [lie_trotter, strang, parallel, suzuki3])
    @pytest.mark.parametrize("P", [2, 3, 4])
    def test_invariants_hold(self, builder, P):
        m = builder(P)
        m.validate()

    def test_composed_methods_pass_invariants(self):
        y4 = compose(strang(3), "triple_jump")
        y4.validate()
        q4 = compose(strang(3), "quintuple_jump")
        q4.validate()
        y6 = compose(y4, "triple_jump")
        y6.validate()
        assert (y4.order, q4.order, y6.order) == (4, 4, 6)

    def test_triple_jump_weights(self):
        g = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
        assert g == pytest.approx(1.35120719195966, abs=1e-11)
        assert 1.0 - 2.0 * g == pytest.approx(-1.70241438391932, abs=1e-11)
        m = compose(strang(2), "triple_jump")
        # chunk offsets recover weights summing to 1
        assert m.beta[0, -1, :] == pytest.approx(1.0)

    def test_partition_count_validation(self):
        for builder in (lie_trotter, strang, parallel, suzuki3):
            with pytest.raises(ChronosError):
                builder(1)

    def test_compose_rejects_odd_order(self):
        with pytest.raises(ChronosError):
            compose(lie_trotter(2), "triple_jump")

    def test_invalid_tensors_rejected(self):
        with pytest.raises(ChronosError):  # beta[:,0,:] nonzero
            SplittingCoefficients("bad", [1.0], np.ones((1, 2, 2)), order=1)
        beta = np.zeros((1, 2, 2))
        beta[0, 1, :] = 0.5  # alpha-weighted end times not 1
        with pytest.raises(ChronosError):
            SplittingCoefficients("bad", [1.0], beta, order=1)


class TestSplittingStep:
    def test_lie_trotter_exact_steppers(self):
        s1 = FlowStepper(lambda ta, tb, y: y + (tb - ta))
        s2 = FlowStepper(lambda ta, tb, y: y)
        y = splitting_step(lie_trotter(2), [s1, s2], 0.0, np.array([0.0]), 0.5)
        assert y[0] == pytest.approx(0.5, abs=0)

    def test_strang_matrix_exponential_order(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        B = np.array([[0.0, 0.0], [1.0, 0.0]])
        sA = FlowStepper(lambda ta, tb, y: expm((tb - ta) * A) @ y)
        sB = FlowStepper(lambda ta, tb, y: expm((tb - ta) * B) @ y)
        y0 = np.array([1.0, 0.4])
        exact = expm(A + B) @ y0
        errors = []
        ns = [4, 8, 16, 32]
        for n in ns:
            y = splitting_evolve(strang(2), [sA, sB], 0.0, 1.0, y0, n)
            errors.append(np.linalg.norm(y - exact))
        slope = np.polyfit(np.log(1.0 / np.array(ns)), np.log(errors), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.2)

    @pytest.mark.parametrize("name,order", [("lie-trotter", 1), ("strang", 2),
                                            ("suzuki3", 3), ("yoshida4", 4),
                                            ("yoshida6", 6)])
    def test_default_methods_converge_at_order(self, name, order):
        # 2-partition noncommuting linear system with exact flows
        A = np.array([[0.0, 1.0], [-0.3, 0.0]])
        B = np.array([[0.0, 0.0], [1.0, -0.2]])
        steppers = [FlowStepper(lambda ta, tb, y: expm((tb - ta) * A) @ y),
                    FlowStepper(lambda ta, tb, y: expm((tb - ta) * B) @ y)]
        methods = default_methods(2)
        y0 = np.array([1.0, 0.4])
        exact = expm(A + B) @ y0
        errors = []
        ns = [4, 8, 16, 32]
        for n in ns:
            y = splitting_evolve(methods[name], steppers, 0.0, 1.0, y0, n)
            errors.append(np.linalg.norm(y - exact) + 1e-16)
        slope = np.polyfit(np.log(1.0 / np.array(ns)), np.log(errors), 1)[0]
        assert slope == pytest.approx(order, abs=0.35)

    def test_parallel_exact_for_constant_rhs(self):
        c1, c2 = np.array([0.3]), np.array([-0.7])
        p1 = FlowStepper(lambda ta, tb, y: y + (tb - ta) * c1)
        p2 = FlowStepper(lambda ta, tb, y: y + (tb - ta) * c2)
        y = splitting_step(parallel(2), [p1, p2], 0.0, np.array([1.0]), 0.8)
        assert y[0] == pytest.approx(1.0 + 0.8 * (0.3 - 0.7), rel=1e-15)

    def test_single_active_partition_reproduces_flow(self):
        # all partitions but one identically zero: machine-precision match
        flow = FlowStepper(lambda ta, tb, y: y * math.exp(-0.5 * (tb - ta)))
        idle = FlowStepper(lambda ta, tb, y: y)
        y0 = np.array([2.0])
        for m in default_methods(2).values():
            got = splitting_step(m, [flow, idle], 0.0, y0, 0.3)
            assert got[0] == pytest.approx(2.0 * math.exp(-0.15), rel=1e-14)

    def test_zero_width_subintegrations_skip_rhs(self):
        calls = {"n": 0}

        def rhs(t, y):
            calls["n"] += 1
            return np.zeros(1)

        system = OdeSystem(1, rhs)
        steppers = [ErkStepper(get_table("rk4"), system),
                    ErkStepper(get_table("rk4"), system)]
        # strang(2): partition 2's stage-2 window is zero width -> the
        # full step costs exactly 3 subintegrations x 4 stages
        splitting_step(strang(2), steppers, 0.0, np.ones(1), 0.25)
        assert calls["n"] == 3 * 4

    def test_stepper_failure_reports_indices(self):
        def boom(ta, tb, y):
            raise diag.default_context().fail(
                diag.ERR_CALLBACK_FAILURE, "inner failure", "boom", "test")

        steppers = [FlowStepper(lambda ta, tb, y: y), FlowStepper(boom)]
        with pytest.raises(ChronosError) as excinfo:
            splitting_step(lie_trotter(2), steppers, 0.0, np.ones(1), 0.1)
        message = excinfo.value.err.message
        assert "partition 2" in message and "stage 1" in message


class TestErkStepper:
    def test_fixed_single_substep_equals_erk_step(self):
        system = OdeSystem(1, lambda t, y: y)
        stepper = stepper_from_erk(get_table("rk4"), system, substeps=1)
        got = stepper.evolve(0.0, 0.3, np.ones(1))
        want, _, _ = erk_step(get_table("rk4"), system, 0.0, np.ones(1), 0.3)
        np.testing.assert_array_equal(got, want)

    def test_adaptive_matches_exponential(self):
        system = OdeSystem(1, lambda t, y: y)
        stepper = stepper_from_erk(get_table("dopri5"), system,
                                   tol=ToleranceSpec(1e-10, 1e-12))
        got = stepper.evolve(0.0, 1.0, np.ones(1))
        assert abs(got[0] - math.e) <= 1e-8

    def test_backward_interval(self):
        system = OdeSystem(1, lambda t, y: y)
        fixed = stepper_from_erk(get_table("rk4"), system, substeps=4)
        got = fixed.evolve(1.0, 0.0, np.array([math.e]))
        assert got[0] == pytest.approx(1.0, rel=1e-4)  # rk4 truncation at h=1/4
        adaptive = stepper_from_erk(get_table("dopri5"), system,
                                    tol=ToleranceSpec(1e-10, 1e-12))
        got = adaptive.evolve(1.0, 0.0, np.array([math.e]))
        assert got[0] == pytest.approx(1.0, rel=1e-8)

    def test_adaptive_requires_embedding(self):
        system = OdeSystem(1, lambda t, y: y)
        with pytest.raises(ChronosError):
            stepper_from_erk(get_table("rk4"), system, tol=ToleranceSpec(1e-6, 1e-9))

    def test_forcing_changes_rhs(self):
        system = OdeSystem(1, lambda t, y: np.zeros(1))
        stepper = stepper_from_erk(get_table("rk4"), system)
        stepper.set_forcing(np.array([2.0]))
        got = stepper.evolve(0.0, 0.5, np.zeros(1))
        assert got[0] == pytest.approx(1.0, rel=1e-14)
        stepper.set_forcing(None)
        got = stepper.evolve(0.0, 0.5, np.zeros(1))
        assert got[0] == 0.0


class TestForcingMethod:
    def test_constant_partition1_reconstructed_exactly(self):
        sys1 = OdeSystem(1, lambda t, y: np.array([0.25]))
        sys2 = OdeSystem(1, lambda t, y: np.zeros(1))
        s1 = stepper_from_erk(get_table("rk4"), sys1)
        s2 = stepper_from_erk(get_table("rk4"), sys2)
        y = forcing_step([s1, s2], 0.0, np.array([2.0]), 0.4)
        assert y[0] == pytest.approx(2.0 + 0.4 * 0.25, rel=1e-15)

    def test_zero_partition1_reduces_to_partition2(self):
        sys1 = OdeSystem(1, lambda t, y: np.zeros(1))
        sys2 = OdeSystem(1, lambda t, y: -y)
        s1 = stepper_from_erk(get_table("rk4"), sys1)
        s2 = stepper_from_erk(get_table("rk4"), sys2)
        got = forcing_step([s1, s2], 0.0, np.ones(1), 0.2)
        alone, _, _ = erk_step(get_table("rk4"), sys2, 0.0, np.ones(1), 0.2)
        assert got[0] == pytest.approx(alone[0], rel=1e-14)

    def test_requires_forcing_support(self):
        s1 = FlowStepper(lambda ta, tb, y: y)
        s2 = FlowStepper(lambda ta, tb, y: y)
        with pytest.raises(ChronosError):
            ForcingMethod([s1, s2])

    def test_lotka_volterra_first_order(self):
        # split into linear and nonlinear parts; inner order-2 ERK steppers
        def linear(t, y):
            return np.array([1.5 * y[0], -3.0 * y[1]])

        def nonlinear(t, y):
            return np.array([-y[0] * y[1], y[0] * y[1]])

        total = OdeSystem(2, lambda t, y: linear(t, y) + nonlinear(t, y))
        ref = stepper_from_erk(get_table("dopri5"), total,
                               tol=ToleranceSpec(1e-12, 1e-13))
        y_ref = ref.evolve(0.0, 2.0, np.ones(2))
        errors = []
        ns = [16, 32, 64, 128]
        for n in ns:
            s1 = stepper_from_erk(get_table("heun2"), OdeSystem(2, linear),
                                  substeps=1)
            s2 = stepper_from_erk(get_table("heun2"), OdeSystem(2, nonlinear),
                                  substeps=1)
            y = ForcingMethod([s1, s2]).evolve(0.0, 2.0, np.ones(2), n)
            errors.append(np.linalg.norm(y - y_ref))
        slope = np.polyfit(np.log(2.0 / np.array(ns)), np.log(errors), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.2)


class TestCoefficientFiles:
    def test_roundtrip(self, tmp_path):
        m = compose(strang(3), "triple_jump")
        path = tmp_path / "coeffs.txt"
        save_coefficients(m, path)
        loaded = load_coefficients(path)
        np.testing.assert_array_equal(loaded.alpha, m.alpha)
        np.testing.assert_array_equal(loaded.beta, m.beta)
        assert loaded.order == m.order

    def test_header_format(self, tmp_path):
        path = tmp_path / "coeffs.txt"
        save_coefficients(strang(2), path)
        header = path.read_text().splitlines()[0]
        assert header == "1 2 2 2"

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 2 2 2\n0.5 0.5\n")
        with pytest.raises(ChronosError):
            load_coefficients(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ChronosError):
            load_coefficients(tmp_path / "nope.txt")
