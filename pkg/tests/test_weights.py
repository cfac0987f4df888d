# -*- coding: utf-8 -*-
""" Unit tests for Weights Module

"""

import unittest

import numpy as np

from pycarleman import grid as gr
from pycarleman import weights as wt
from pycarleman.errors import CertificateError, ValidationError

class BasicTests(unittest.TestCase):
    omega = ((0.3, 0.7), (0.3, 0.7))
    omega0 = ((0.4, 0.6), (0.4, 0.6))

    def square(self, cells=16, omega=None, omega0=None, T=2.0, time_steps=16):
        grid = gr.build_grid((1.0, 1.0), cells, T, time_steps)
        return gr.build_subdomains(grid, omega or self.omega, omega0 or self.omega0)

    def test_analytic_eta_has_one_central_critical_point(self):
        ws = wt.build_weights(self.square())
        points = ws.certificate.critical_points
        self.assertEqual(len(points), 1)
        np.testing.assert_allclose(points[0][1], (0.5, 0.5), atol=1e-12)
        self.assertGreater(ws.certificate.min_gradient, 0.0)
        self.assertAlmostEqual(ws.eta_max, 1.0)
        self.assertTrue(ws.certificate.as_dict()["corners_excluded"])

    def test_poisson_eta_is_certified(self):
        ws = wt.build_weights(self.square(), method="poisson")
        for _, x in ws.certificate.critical_points:
            self.assertTrue(0.4 <= x[0] <= 0.6 and 0.4 <= x[1] <= 0.6)
        self.assertAlmostEqual(ws.eta_max, 1.0)
        self.assertTrue(np.all(ws.eta[0] == 0.0))

    def test_offcentre_core_is_rejected(self):
        grid = self.square(32, ((0.05, 0.3), (0.05, 0.3)), ((0.1, 0.2), (0.1, 0.2)))
        with self.assertRaises(CertificateError) as context:
            wt.build_weights(grid)
        self.assertIn("outside omega0", str(context.exception))
        with self.assertRaises(ValidationError):
            wt.build_weights(self.square(), method="spline")

    def test_ell_profile(self):
        ell = wt.build_ell(2.0)
        self.assertAlmostEqual(float(ell(0.25)), 0.25)
        self.assertAlmostEqual(float(ell(0.3)), float(ell(1.7)), places=12)
        self.assertAlmostEqual(float(ell(1.0)), 1.0)
        self.assertEqual(float(ell(0.0)), 0.0)
        times = np.arange(41) * 0.05
        values = ell(times)
        self.assertTrue(np.all(np.delete(values, 20) < 1.0))
        self.assertTrue(np.all(np.diff(values[:21]) > 0))
        np.testing.assert_allclose(ell.derivative(np.array([0.1, 1.9])), [1.0, -1.0])

    def test_ell_peak_validation(self):
        with self.assertRaises(ValidationError):
            wt.build_ell(2.0, 0.5)
        with self.assertRaises(ValidationError):
            wt.build_ell(2.0, 0.8)
        self.assertEqual(wt.build_ell(2.0, 1.5).peak, 1.5)
        with self.assertRaises(ValidationError):
            wt.build_ell(2.0)(2.5)

    def test_weight_identities(self):
        grid = self.square()
        ws = wt.build_weights(grid, lam=1.5)
        stag = gr.node(2)
        times = grid.times[1:-1]
        phi = ws.phi(stag, times)
        ell = ws.ell(times)[:, np.newaxis, np.newaxis]
        np.testing.assert_allclose(phi * ell ** 8, np.broadcast_to(np.exp(1.5 * ws.eta), phi.shape), rtol=1e-12)
        self.assertTrue(np.all(ws.alpha(stag, times) < 0))
        evaluators = wt.eval_weights(ws, 2.0)
        self.assertTrue(np.all(evaluators.exp2salpha(stag, grid.times[:1]) == 0.0))
        np.testing.assert_allclose(evaluators.phi_hat_power(2, times), ws.phi_hat(times) ** 2)
        with self.assertRaises(ValidationError):
            wt.eval_weights(ws, 0.0)

    def test_carleman_factor_decreases_with_s(self):
        grid = self.square()
        ws = wt.build_weights(grid)
        stag = gr.centre(2)
        low = ws.carleman_factor(1.0, 0, 0, stag, grid.times)
        high = ws.carleman_factor(2.0, 0, 0, stag, grid.times)
        alive = low > 0
        self.assertTrue(alive.any())
        self.assertTrue(np.all(high[alive] < low[alive]))
        self.assertTrue(np.all(np.isfinite(ws.carleman_factor(50.0, 3, 3, stag, grid.times))))
        self.assertGreater(wt.weighted_mass(ws, 1.0, 1), 0.0)

    def test_weight_equivalence(self):
        ws = wt.build_weights(self.square(), lam=2.0)
        c_low, c_high = wt.check_weight_equivalence(ws)
        self.assertAlmostEqual(c_high, 1.0, places=12)
        self.assertAlmostEqual(c_low, np.exp(-2.0), places=10)
        flat = wt.build_weights(self.square(), lam=0.0)
        self.assertEqual(wt.check_weight_equivalence(flat), (1.0, 1.0))

    def test_dalpha_bound(self):
        bounds = [wt.check_dalpha_bound(wt.build_weights(self.square(cells))) for cells in (16, 32)]
        self.assertTrue(all(np.isfinite(b) and b > 0 for b in bounds))
        self.assertLess(abs(bounds[0] - bounds[1]), 0.1 * bounds[1])
        flat = wt.build_weights(self.square(), lam=0.0)
        self.assertEqual(wt.check_dalpha_bound(flat), 0.0)

    def test_stationary_weight(self):
        grid = self.square()
        sw = wt.build_psi_phi0(grid, 1.0, 1.0)
        self.assertTrue(np.all(sw.phi0(gr.node(2)) >= np.exp(1.0) * (1 - 1e-12)))
        self.assertTrue(np.all(sw.psi_on(gr.centre(2)) >= 1.0))
        rescaling = wt.lemma2_rescaling(sw, 3.0)
        self.assertAlmostEqual(rescaling["rescaled_s"], 3.0 * np.exp(1.0))
        self.assertLess(rescaling["mismatch"], 1e-12)

    def test_stationary_weight_in_corner_is_rejected(self):
        grid = self.square(32, ((0.0, 0.3), (0.0, 0.3)), ((0.1, 0.2), (0.1, 0.2)))
        with self.assertRaises(CertificateError):
            wt.build_psi_phi0(grid, 1.0, 1.0)

    def test_regular_weight(self):
        grid = self.square()
        d = np.ones(gr.lattice_shape(grid, gr.node(2)))
        weight = wt.build_regular_weight(grid, d, 1.0, 2.0)
        values = weight.values(grid.times)
        self.assertAlmostEqual(float(values[grid.t0_index].max()), np.exp(1.0))
        self.assertTrue(np.all(values[0] < values[grid.t0_index]))
        with self.assertRaises(ValidationError):
            wt.build_regular_weight(grid, d, 1.0, 0.0)

if __name__ == "__main__":
    unittest.main()
