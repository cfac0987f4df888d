# -*- coding: utf-8 -*-
""" Unit tests for Carleman Module

"""

import unittest

import numpy as np

from pycarleman import carleman as cm
from pycarleman import grid as gr
from pycarleman import operators as op
from pycarleman.errors import CarlemanError, ValidationError
from pycarleman.forward import ResidualReport, manufactured_problem, residual_check, solve_forward, zero_series
from pycarleman.weights import build_psi_phi0, build_weights

class BasicTests(unittest.TestCase):
    omega = ((0.3, 0.7), (0.3, 0.7))
    omega0 = ((0.4, 0.6), (0.4, 0.6))
    s_list = [1.0, 2.0, 4.0, 8.0]
    clean = ResidualReport(momentum=np.zeros(16), divergence=np.zeros(17), relative=np.zeros(16))

    def square(self, cells=16, T=2.0, time_steps=16):
        grid = gr.build_grid((1.0, 1.0), cells, T, time_steps)
        return gr.build_subdomains(grid, self.omega, self.omega0)

    def test_lemma1_on_solver_output(self):
        grid = self.square()
        case = manufactured_problem("stokes-pulse", grid)
        sol = solve_forward(case.problem)
        residuals = residual_check(sol, case.problem)
        ws = build_weights(grid)
        sides = cm.lemma1_sides(sol.v, case.problem.F, ws, 1.0, residuals=residuals)
        self.assertGreater(sides.lhs, 0.0)
        self.assertGreater(sides.rhs, 0.0)
        self.assertGreater(sides.ratio, 0.0)
        self.assertEqual(set(sides.flags["lhs_terms"]), {"gradient", "rot", "mass"})
        self.assertIn("projection_delta", sides.flags)
        lhs, rhs = sides
        self.assertEqual((lhs, rhs), (sides.lhs, sides.rhs))

    def test_lemma1_refuses_failed_residuals(self):
        grid = self.square()
        case = manufactured_problem("stokes-pulse", grid)
        ws = build_weights(grid)
        failed = ResidualReport(momentum=np.ones(16), divergence=np.zeros(17), relative=np.ones(16))
        with self.assertRaises(CarlemanError):
            cm.lemma1_sides(case.exact.v, case.problem.F, ws, 1.0, residuals=failed)
        with self.assertRaises(CarlemanError):
            cm.lemma1_sides(case.exact.v, case.problem.F, ws, 1.0, residuals=None)
        with self.assertRaises(ValidationError):
            cm.lemma1_sides(case.exact.v, case.problem.F, ws, 0.0, residuals=self.clean)
        with self.assertRaises(ValidationError):
            cm.lemma1_sides(case.exact.v, case.problem.F, ws, 1.0, m=-1, residuals=self.clean)

    def test_lemma1_zero_input(self):
        grid = self.square()
        zero = zero_series(grid)
        sides = cm.lemma1_sides(zero, zero, build_weights(grid), 2.0, residuals=self.clean, project_source=False)
        self.assertEqual(sides.lhs, 0.0)
        self.assertEqual(sides.rhs, 0.0)
        self.assertIsNone(sides.ratio)

    def test_projection_of_sources(self):
        grid = self.square()
        case = manufactured_problem("stokes-pulse", grid)
        projected, delta = cm.project_series(case.problem.F)
        self.assertEqual(projected.count, case.problem.F.count)
        self.assertGreater(delta, 0.0)
        _, second = cm.project_series(projected)
        self.assertLess(second, 1e-6 * max(delta, 1.0))

    def test_mshift_transform(self):
        grid = self.square()
        ws = build_weights(grid)
        v = manufactured_problem("stokes-pulse", grid).exact.v
        self.assertIs(cm.mshift_transform(v, 0, ws), v)
        w = cm.mshift_transform(v, 1, ws)
        self.assertEqual(w.count, v.count - 2)
        self.assertAlmostEqual(w.start, grid.dt)
        ell = float(ws.ell(grid.t0))
        np.testing.assert_allclose(w.values[0][grid.t0_index - 1], v.values[0][grid.t0_index] * ell ** -4)
        rate = cm.mshift_rate(ws, 2, grid.times)
        self.assertEqual(rate.shape, grid.times.shape)
        with self.assertRaises(ValidationError):
            cm.mshift_transform(v, 1.5, ws)

    def test_mshift_consistency(self):
        grid = self.square()
        ws = build_weights(grid)
        case = manufactured_problem("stokes-pulse", grid)
        sol = solve_forward(case.problem)
        result = cm.mshift_consistency(sol.v, case.problem.F, ws, 1.0, 1,
                                       residuals=residual_check(sol, case.problem))
        self.assertTrue(result["passed"])
        self.assertTrue(result["lower"] <= result["lhs_ratio"] * (1 + 1e-9))
        self.assertTrue(result["lhs_ratio"] <= result["upper"] * (1 + 1e-9))

    def test_lemma1_is_quadratic(self):
        grid = self.square()
        case = manufactured_problem("stokes-pulse", grid)
        sol = solve_forward(case.problem)
        residuals = residual_check(sol, case.problem)
        ws = build_weights(grid)
        base = cm.lemma1_sides(sol.v, case.problem.F, ws, 2.0, residuals=residuals, project_source=False)
        tripled = cm.lemma1_sides(sol.v.scaled(3.0), case.problem.F.scaled(3.0), ws, 2.0,
                                  residuals=residuals, project_source=False)
        self.assertAlmostEqual(tripled.lhs / base.lhs, 9.0, places=9)
        self.assertAlmostEqual(tripled.rhs / base.rhs, 9.0, places=9)
        self.assertAlmostEqual(tripled.ratio, base.ratio, places=9)

    def test_lemma2_is_quadratic(self):
        grid = self.square(32)
        sw = build_psi_phi0(grid, 1.0, 1.0)
        w = cm.lemma2_bump_family(grid, 3, 1)[0]
        base = cm.lemma2_sides(w, sw, 4.0)
        tripled = cm.lemma2_sides(w.scaled(3.0), sw, 4.0)
        self.assertAlmostEqual(tripled.lhs / base.lhs, 9.0, places=9)
        self.assertAlmostEqual(tripled.rhs / base.rhs, 9.0, places=9)

    def test_lemma3_is_linear(self):
        grid = self.square()
        ws = build_weights(grid)
        g = gr.scalar_field(grid, gr.node(2), np.ones(gr.lattice_shape(grid, gr.node(2))))
        base = cm.lemma3_sides(g, ws, 2.0)
        tripled = cm.lemma3_sides(g.scaled(3.0), ws, 2.0)
        self.assertAlmostEqual(tripled.lhs / base.lhs, 3.0, places=9)
        self.assertAlmostEqual(tripled.rhs / base.rhs, 3.0, places=9)

    def test_lemma3_ratios_level_off(self):
        grid = self.square()
        ws = build_weights(grid)
        stag = gr.node(2)
        one = gr.scalar_field(grid, stag, np.ones(gr.lattice_shape(grid, stag)))
        box = gr.scalar_field(grid, stag, grid.mask("omega0", stag).astype(np.float64))
        s_list = [1.0, 2.0, 4.0, 8.0, 16.0]
        ratios = {}
        for name, g in (("one", one), ("box", box)):
            ratios[name] = [cm.lemma3_sides(g, ws, s).ratio for s in s_list]
            self.assertTrue(all(np.isfinite(r) and r > 0 for r in ratios[name]))
            for before, after in zip(ratios[name][1:], ratios[name][2:]):
                self.assertLessEqual(after, cm.GROWTH_TOLERANCE * before)
        gap = [abs(b - o) / o for b, o in zip(ratios["box"], ratios["one"])]
        self.assertLess(gap[-1], gap[0])

    def test_mshift_rate_identity(self):
        # dw/dt - phi_hat^(1/2) dv/dt - q phi_hat w is a second order time stencil error
        errors = []
        for steps in (32, 64):
            grid = self.square(16, 2.0, steps)
            ws = build_weights(grid)
            v = manufactured_problem("stokes-pulse", grid).exact.v
            w = cm.mshift_transform(v, 1, ws)
            dv = op.time_derivative(v).values[0]
            dw = op.time_derivative(w).values[0]
            window = np.arange(steps // 4, 3 * steps // 4 + 1)
            spread = (slice(None), np.newaxis, np.newaxis)
            phi_hat = ws.phi_hat(v.times[window])[spread]
            q = cm.mshift_rate(ws, 1, v.times[window])[spread]
            shifted = window - 1
            residual = dw[shifted] - np.sqrt(phi_hat) * dv[window] - q * phi_hat * w.values[0][shifted]
            errors.append(float(np.max(np.abs(residual))) / float(np.max(np.abs(dw[shifted]))))
        self.assertGreater(errors[0], 0.0)
        self.assertGreater(errors[0] / errors[1], 3.0)

    def test_lemma2_bump_family(self):
        grid = self.square(32)
        sw = build_psi_phi0(grid, 1.0, 1.0)
        family = cm.lemma2_bump_family(grid, 11, 3)
        self.assertEqual(len(family), 3)
        for w in family:
            for value, stag in zip(w.values, w.stags):
                self.assertTrue(np.all(value[grid.mask("omega", stag)] == 0.0))
                self.assertTrue(np.all(value[grid.mask("collar", stag)] == 0.0))
            lhs, rhs = cm.lemma2_sides(w, sw, 2.0)
            self.assertGreater(lhs, 0.0)
            self.assertGreater(rhs, 0.0)
        again = cm.lemma2_bump_family(grid, 11, 3)
        np.testing.assert_array_equal(family[0].values[0], again[0].values[0])

    def test_lemma2_solenoidal_family(self):
        grid = self.square(32)
        sw = build_psi_phi0(grid, 1.0, 1.0)
        w = cm.lemma2_bump_family(grid, 5, 1, solenoidal=True)[0]
        sides = cm.lemma2_sides(w, sw, 1.0)
        self.assertTrue(sides.flags["solenoidal"])

    def test_lemma2_refusals(self):
        grid = self.square(32)
        sw = build_psi_phi0(grid, 1.0, 1.0)
        inside = gr.Field(grid, gr.faces(2), tuple(gr.bump(grid, stag, (0.5, 0.5), 0.1) for stag in gr.faces(2)))
        with self.assertRaises(CarlemanError):
            cm.lemma2_sides(inside, sw, 1.0)
        w = cm.lemma2_bump_family(grid, 1, 1)[0]
        with self.assertRaises(CarlemanError):
            cm.lemma2_sides(w, sw, 1000.0)
        with self.assertRaises(ValidationError):
            cm.bump_radius(self.square(16))

    def test_lemma3(self):
        grid = self.square()
        ws = build_weights(grid)
        g = gr.scalar_field(grid, gr.node(2), np.ones(gr.lattice_shape(grid, gr.node(2))))
        sides = cm.lemma3_sides(g, ws, 1.0)
        self.assertGreater(sides.lhs, 0.0)
        self.assertGreater(sides.rhs, 0.0)
        self.assertFalse(sides.flags["negative_input"])
        flipped = cm.lemma3_sides(g.scaled(-1.0), ws, 1.0)
        self.assertTrue(flipped.flags["negative_input"])
        self.assertAlmostEqual(flipped.lhs, sides.lhs)
        with self.assertRaises(ValidationError):
            cm.lemma3_sides(g, ws, 0.5)

    def test_s_sweep_fits_constant(self):
        report = cm.s_sweep(lambda s: cm.Sides(2.0, 1.0), self.s_list, "lemma3", workers=2)
        self.assertEqual([row.s for row in report.rows], self.s_list)
        self.assertEqual(report.constant, 2.0)
        self.assertEqual(report.threshold, 1.0)
        self.assertFalse(report.degenerate)
        self.assertEqual(len(report.as_rows()), 4)
        self.assertEqual(report.summary()["rows"], 4)

    def test_s_sweep_threshold_after_growth(self):
        ratios = {1.0: 1.0, 2.0: 2.0, 4.0: 2.05, 8.0: 2.0}
        report = cm.s_sweep(lambda s: cm.Sides(ratios[s], 1.0), self.s_list, "lemma1", m=0)
        self.assertEqual(report.threshold, 2.0)
        self.assertEqual(report.constant, 2.05)

    def test_s_sweep_degenerate_and_invalid(self):
        report = cm.s_sweep(lambda s: cm.Sides(0.0, 0.0), self.s_list, "lemma2")
        self.assertTrue(report.degenerate)
        self.assertIsNone(report.constant)
        self.assertEqual(report.as_rows()[0]["ratio"], "")
        with self.assertRaises(ValidationError):
            cm.s_sweep(lambda s: cm.Sides(1.0, 1.0), [1.0, 2.0, 4.0], "lemma3")
        with self.assertRaises(ValidationError):
            cm.s_sweep(lambda s: cm.Sides(1.0, 1.0), [1.0, 4.0, 2.0, 8.0], "lemma3")
        with self.assertRaises(ValidationError):
            cm.s_sweep(lambda s: cm.Sides(1.0, 1.0), self.s_list, "lemma4")

    def test_calibration_and_holdout(self):
        reports = [cm.s_sweep(lambda s, c=c: cm.Sides(c, 1.0), self.s_list, "lemma2") for c in (1.0, 1.5)]
        constant, threshold = cm.calibrate_constant(reports)
        self.assertEqual((constant, threshold), (1.5, 1.0))
        held = [cm.s_sweep(lambda s: cm.Sides(1.7, 1.0), self.s_list, "lemma2")]
        self.assertTrue(cm.check_holdout(held, constant, threshold, 1.2)["passed"])
        self.assertFalse(cm.check_holdout(held, constant, threshold, 1.1)["passed"])
        degenerate = [cm.s_sweep(lambda s: cm.Sides(0.0, 0.0), self.s_list, "lemma2")]
        with self.assertRaises(ValidationError):
            cm.calibrate_constant(degenerate)

    def test_calibrate_and_hold(self):
        calibration = [cm.s_sweep(lambda s, c=c: cm.Sides(c, 1.0), self.s_list, "lemma1") for c in (1.0, 1.2, 1.5)]
        held = [cm.s_sweep(lambda s, c=c: cm.Sides(c, 1.0), self.s_list, "lemma1") for c in (1.1, 1.6, 1.9)]
        result = cm.calibrate_and_hold(calibration, held, 1.3)
        self.assertEqual(result["calibration_size"], 3)
        self.assertEqual(result["holdout_size"], 3)
        self.assertEqual(result["constant"], 1.5)
        self.assertAlmostEqual(result["holdout"]["limit"], 1.95)
        self.assertEqual(result["holdout"]["worst"], 1.9)
        self.assertTrue(result["holdout"]["passed"])
        failing = [cm.s_sweep(lambda s: cm.Sides(2.0, 1.0), self.s_list, "lemma1")]
        self.assertFalse(cm.calibrate_and_hold(calibration, failing, 1.3)["holdout"]["passed"])
        with self.assertRaises(ValidationError):
            cm.calibrate_and_hold(calibration, [], 1.3)

if __name__ == "__main__":
    unittest.main()
