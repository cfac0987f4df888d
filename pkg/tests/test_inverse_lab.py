# -*- coding: utf-8 -*-
""" Unit tests for Inverse Lab Module

"""

import unittest

import numpy as np

from pycarleman import grid as gr
from pycarleman import inverse_lab as lab
from pycarleman.errors import InadmissibleError, ValidationError
from pycarleman.forward import manufactured_problem, solve_forward

class BasicTests(unittest.TestCase):
    omega = ((0.3, 0.7), (0.3, 0.7))
    omega0 = ((0.4, 0.6), (0.4, 0.6))

    def square(self, cells=32, T=1.0, time_steps=16):
        grid = gr.build_grid((1.0, 1.0), cells, T, time_steps)
        return gr.build_subdomains(grid, self.omega, self.omega0)

    def test_sampled_source_is_admissible(self):
        grid = self.square()
        source = lab.sample_admissible(grid, 3)
        self.assertEqual(source.id, "seed-0003")
        self.assertTrue(source.admissible)
        self.assertEqual(lab.failed_clauses(source.certificate), [])
        self.assertAlmostEqual(source.sigma, 0.9 * 5.0)
        self.assertAlmostEqual(lab.time_ratio(source.F), source.sigma, places=6)
        again = lab.sample_admissible(grid, 3)
        np.testing.assert_array_equal(source.F.values[0], again.F.values[0])
        self.assertTrue(source.scaled(-2.0).admissible)

    def test_other_profiles(self):
        grid = self.square()
        for profile in ("gaussian", "oscillating"):
            source = lab.sample_admissible(grid, 1, M=3.0, profile=profile)
            self.assertTrue(source.admissible)
            self.assertLessEqual(source.certificate["time_bound"]["residual"], 3.0 * (1 + 1e-9))
        with self.assertRaises(ValidationError):
            lab.sample_admissible(grid, 1, profile="square")

    def test_infeasible_bound_names_smallest_m(self):
        grid = self.square()
        with self.assertRaises(InadmissibleError) as context:
            lab.sample_admissible(grid, 1, M=1.0, sigma=2.0)
        self.assertIn("needs M >= 2", str(context.exception))

    def test_support_box_checks(self):
        grid = self.square()
        with self.assertRaises(InadmissibleError):
            lab.check_support_box(grid, ((0.2, 0.5), (0.2, 0.5)))
        with self.assertRaises(InadmissibleError):
            lab.check_support_box(grid, ((0.0, 0.25), (0.1, 0.9)))
        box = lab.check_support_box(grid, ((0.0625, 0.3), (0.0625, 0.9375)))
        self.assertEqual(box, lab.default_support_box(grid))

    def test_certificate_catches_violations(self):
        grid = self.square()
        source = lab.sample_admissible(grid, 2)
        strict = lab.check_admissible(source.F, 0.1)
        self.assertEqual(lab.failed_clauses(strict), ["time_bound"])
        blob = [gr.bump(grid, stag, (0.5, 0.5), 0.1) for stag in gr.faces(2)]
        spread = (slice(None), np.newaxis, np.newaxis)
        polluted = source.F.with_values([v + np.ones(grid.time_steps + 1)[spread] * b
                                         for v, b in zip(source.F.values, blob)])
        failed = lab.failed_clauses(lab.check_admissible(polluted, 5.0))
        self.assertIn("support_omega", failed)

    def test_data_norm_of_zero_velocity(self):
        grid = self.square()
        zero = lab.zero_template(grid)
        sol = solve_forward(zero)
        self.assertEqual(lab.data_norm(sol.v), 0.0)
        with self.assertRaises(ValidationError):
            lab.data_norm(sol.v, window=0.6)

    def test_stability_experiment(self):
        grid = self.square()
        sources = [lab.sample_admissible(grid, seed) for seed in (2, 1)]
        result = lab.stability_experiment(sources, workers=2)
        self.assertEqual([row.source_id for row in result.rows], ["seed-0001", "seed-0002"])
        for row in result.rows:
            self.assertFalse(row.failed)
            self.assertGreater(row.ratio, 0.0)
            self.assertTrue(np.isfinite(row.ratio))
            self.assertEqual(set(row.as_dict()), {"source_id", "source_norm", "data_norm", "ratio", "iterations",
                                                 "max_divergence", "failed", "degenerate", "message"})
        self.assertEqual(result.summary["used"], 2)
        self.assertGreaterEqual(result.summary["spread"], 1.0)
        windowed = lab.stability_experiment(sources, window=2 * grid.dt)
        self.assertEqual(len(windowed.rows), 2)

    def test_stability_ratio_ignores_amplitude(self):
        grid = self.square()
        sources = [lab.sample_admissible(grid, seed) for seed in (1, 2)]
        base = lab.stability_experiment(sources)
        doubled = lab.stability_experiment([source.scaled(2.0) for source in sources])
        rows = {row.source_id: row for row in base.rows}
        self.assertEqual(set(rows), {row.source_id for row in doubled.rows})
        for row in doubled.rows:
            self.assertAlmostEqual(row.ratio / rows[row.source_id].ratio, 1.0, delta=1e-6)
            self.assertAlmostEqual(row.source_norm, 2.0 * rows[row.source_id].source_norm,
                                   delta=1e-9 * row.source_norm)

    def test_stability_experiment_contracts(self):
        grid = self.square()
        source = lab.sample_admissible(grid, 1)
        with self.assertRaises(ValidationError) as context:
            lab.stability_experiment([source])
        self.assertIn("need ≥ 2 sources", str(context.exception))
        strict = lab.AdmissibleSource(id="strict", F=source.F, M=0.1,
                                      certificate=lab.check_admissible(source.F, 0.1))
        with self.assertRaises(InadmissibleError):
            lab.stability_experiment([source, strict])

    def test_summary_of_rows(self):
        rows = [lab.StabilityRow("a", ratio=2.0), lab.StabilityRow("b", ratio=4.0),
                lab.StabilityRow("c", failed=True), lab.StabilityRow("d", degenerate=True)]
        summary = lab.summarize(rows)
        self.assertEqual(summary["used"], 2)
        self.assertEqual(summary["max_ratio"], 4.0)
        self.assertEqual(summary["median_ratio"], 3.0)
        self.assertEqual(summary["failed"], ["c"])
        self.assertEqual(summary["degenerate"], ["d"])

    def test_obstruction(self):
        grid = self.square()
        report = lab.obstruction_demo(grid)
        self.assertEqual(report["failed_clauses"], ["divergence"])
        self.assertGreater(report["source_norm"], 0.0)
        self.assertLessEqual(report["data_norm"], 1e-6 * report["source_norm"])
        self.assertLess(report["velocity_max"], 1e-7)
        self.assertLess(report["pressure_error"], 1e-6)
        with self.assertRaises(ValidationError):
            lab.obstruction_demo(grid, lab.obstruction_source(grid, (0.05, 0.5), 0.1))
        empty = lab.obstruction_demo(grid, lab.obstruction_source(grid, amplitude=0.0))
        self.assertTrue(empty["degenerate"])

    def test_example_ii(self):
        cube = gr.build_grid((1.0, 1.0, 1.0), 8, 2.0, 8)
        r, f = lab.example_ii_case(cube)
        report = lab.example_ii_check(r, f)
        self.assertLess(report["identity_residual"], 1e-10)
        self.assertLess(report["rot_r_t0"], 1e-12)
        self.assertLess(report["rot_f"], 1e-10)
        self.assertAlmostEqual(report["min_r3"], 2.0)
        self.assertTrue(report["chain_holds"])
        self.assertTrue(report["certificate_passed"])
        self.assertAlmostEqual(report["time_ratio"], 0.5, places=10)
        with self.assertRaises(ValidationError):
            lab.example_ii_case(self.square())

    def test_example_i(self):
        grid = gr.build_grid((1.0, 1.0), 8, 2.0, 8)
        R, f = lab.example_i_case(grid)
        report = lab.example_i_check(R, f, grid)
        self.assertTrue(report["applicable"])
        self.assertTrue(report["holds"])
        self.assertTrue(report["interpretation"])
        self.assertAlmostEqual(report["min_det"], 2.25)
        self.assertAlmostEqual(report["ratio"], 1.0 / 3.0, places=10)
        singular = np.zeros_like(R)
        singular_report = lab.example_i_check(singular, f, grid)
        self.assertFalse(singular_report["applicable"])
        self.assertIsNone(singular_report["implied_M"])

    def test_rot_source_identity(self):
        grid = self.square(16)
        case = manufactured_problem("oseen-pulse", grid)
        sol = solve_forward(case.problem)
        report = lab.rot_source_identity_check(sol, case.problem)
        self.assertGreater(report["rot_source"], 0.0)
        self.assertAlmostEqual(report["identity_residual"], report["momentum_rot_residual"],
                               delta=1e-6 * report["rot_source"])

    def test_rot_source_identity_refines(self):
        relative = []
        for cells, steps in ((16, 16), (32, 32)):
            grid = self.square(cells, 1.0, steps)
            case = manufactured_problem("oseen-pulse", grid)
            report = lab.rot_source_identity_check(solve_forward(case.problem), case.problem)
            relative.append(report["identity_residual"] / report["rot_source"])
        self.assertLess(relative[1], relative[0])

    def test_recentre(self):
        grid = self.square(16)
        case = manufactured_problem("stokes-decay", grid)
        fresh, series = lab.recentre(case.exact.v, grid, grid.t0_index, 4)
        self.assertEqual(series.count, 9)
        self.assertEqual(fresh.time_steps, 8)
        self.assertAlmostEqual(fresh.t0, 4 * grid.dt)
        np.testing.assert_array_equal(series.values[0][4], case.exact.v.values[0][grid.t0_index])
        with self.assertRaises(ValidationError):
            lab.recentre(case.exact.v, grid, 2, 4)

    def test_stability_curve(self):
        grid = self.square()
        curve = lab.stability_curve(grid, "M", [2.0, 4.0], [1, 2])
        self.assertEqual([point["value"] for point in curve], [2.0, 4.0])
        self.assertTrue(all(point["max_ratio"] > 0 for point in curve))
        with self.assertRaises(ValidationError):
            lab.stability_curve(grid, "lambda", [1.0], [1, 2])

if __name__ == "__main__":
    unittest.main()
