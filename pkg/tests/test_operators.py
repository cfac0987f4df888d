# -*- coding: utf-8 -*-
""" Unit tests for Operators Module

"""

import unittest

import numpy as np
import sympy as sym

from pycarleman import grid as gr
from pycarleman import operators as op
from pycarleman.errors import StaggeringError, ValidationError

class BasicTests(unittest.TestCase):

    def square(self, cells=32, T=1.0, time_steps=16):
        grid = gr.build_grid((1.0, 1.0), cells, T, time_steps)
        return gr.build_subdomains(grid, ((0.3, 0.7), (0.3, 0.7)), ((0.4, 0.6), (0.4, 0.6)))

    def face_field(self, grid, exprs, bc="none"):
        x, y = sym.symbols("x y")
        values = []
        for expr, stag in zip(exprs, gr.faces(2)):
            fn = sym.lambdify((x, y), expr, "numpy")
            mesh = grid.mesh(stag)
            values.append(np.broadcast_to(fn(*mesh), mesh[0].shape).astype(np.float64))
        return gr.Field(grid, gr.faces(2), tuple(values), bc)

    def test_divergence_of_gradient_is_laplacian(self):
        grid = self.square()
        x, y = grid.mesh(gr.centre(2))
        u = gr.scalar_field(grid, gr.centre(2), np.cos(np.pi * x) * np.sin(2 * np.pi * y) + x * y, "neumann")
        composed = op.divergence(op.gradient(u))
        direct = op.laplacian(u)
        np.testing.assert_allclose(composed.values[0], direct.values[0], rtol=1e-12, atol=1e-9)

    def test_laplacian_of_quadratic(self):
        grid = self.square()
        x, _ = grid.mesh(gr.node(2))
        lap = op.laplacian(gr.scalar_field(grid, gr.node(2), x ** 2))
        np.testing.assert_allclose(lap.values[0][1:-1, 1:-1], 2.0, atol=1e-6)

    def test_constant_field_has_no_divergence(self):
        grid = self.square()
        v = gr.Field(grid, gr.faces(2), tuple(np.ones(gr.lattice_shape(grid, s)) for s in gr.faces(2)))
        self.assertEqual(op.divergence(v).max_abs(), 0.0)

    def test_rot_of_gradient_vanishes(self):
        grid = self.square()
        x, y = grid.mesh(gr.centre(2))
        psi = gr.scalar_field(grid, gr.centre(2), np.sin(3 * x) * np.exp(y), "neumann")
        curl = op.rot(op.gradient(psi))
        self.assertEqual(curl.stags, (gr.node(2),))
        np.testing.assert_allclose(curl.values[0][1:-1, 1:-1], 0.0, atol=1e-8)

    def test_rot_of_rigid_rotation(self):
        grid = self.square()
        v = self.face_field(grid, [-sym.Symbol("y"), sym.Symbol("x")])
        np.testing.assert_allclose(op.rot(v).values[0], 2.0, atol=1e-10)

    def test_rot_rot_identity(self):
        x, y = sym.symbols("x y")
        w = [sym.sin(sym.pi * x) * sym.sin(2 * sym.pi * y), sym.cos(sym.pi * x) * sym.sin(sym.pi * y)]
        g = sym.diff(w[1], x) - sym.diff(w[0], y)
        exact = [sym.diff(g, y), -sym.diff(g, x)]
        errors = []
        for cells in (16, 32):
            grid = self.square(cells)
            field = self.face_field(grid, w)
            rotrot = op.curl_potential(op.rot(field))
            lap = op.laplacian(field)
            grad_div = op.gradient(op.divergence(field))
            reference = self.face_field(grid, exact)
            worst, identity = 0.0, 0.0
            for k, stag in enumerate(gr.faces(2)):
                keep = ~grid.mask("collar", stag)
                residual = rotrot.values[k] + lap.values[k] - grad_div.values[k]
                identity = max(identity, float(np.max(np.abs(residual[keep]))))
                worst = max(worst, float(np.max(np.abs(rotrot.values[k] - reference.values[k])[keep])))
            self.assertLess(identity, 1e-8 * max(1.0, lap.max_abs()))
            errors.append(worst)
        self.assertTrue(3.4 <= errors[0] / errors[1] <= 4.6)

    def test_staggering_mismatch(self):
        grid = self.square()
        u = gr.zero_field(grid, (gr.centre(2),))
        with self.assertRaises(StaggeringError):
            op.divergence(u)
        with self.assertRaises(StaggeringError):
            op.rot(u)
        mixed = gr.Field(grid, (gr.centre(2), gr.centre(2)),
                         (np.zeros((32, 32)), np.zeros((32, 32))))
        with self.assertRaises(StaggeringError):
            op.divergence(mixed)
        with self.assertRaises(StaggeringError):
            op.curl_potential(u)

    def test_curl_potential_is_solenoidal(self):
        grid = self.square()
        q = gr.scalar_field(grid, gr.node(2), gr.bump(grid, gr.node(2), (0.5, 0.5), 0.3))
        v = op.curl_potential(q)
        self.assertEqual(v.stags, gr.faces(2))
        self.assertLess(op.divergence(v).max_abs(), 1e-10 * v.max_abs() / grid.h_min)

    def test_projection_keeps_solenoidal_fields(self):
        grid = self.square()
        q = gr.scalar_field(grid, gr.node(2), gr.bump(grid, gr.node(2), (0.5, 0.5), 0.3))
        v = op.curl_potential(q)
        v = gr.Field(grid, v.stags, v.values, "dirichlet")
        projected = op.leray_project(v)
        for a, b in zip(v.values, projected.values):
            np.testing.assert_allclose(a, b, atol=1e-10 * v.max_abs())

    def test_projection_removes_gradients(self):
        grid = self.square()
        psi = gr.scalar_field(grid, gr.centre(2), gr.bump(grid, gr.centre(2), (0.5, 0.5), 0.3), "neumann")
        grad = op.gradient(psi)
        projected = op.leray_project(gr.Field(grid, grad.stags, grad.values, "dirichlet"))
        self.assertLess(projected.max_abs(), 1e-7 * grad.max_abs())

    def test_projection_of_random_field(self):
        grid = self.square()
        rng = np.random.default_rng(7)
        values = []
        for k, stag in enumerate(gr.faces(2)):
            value = rng.standard_normal(gr.lattice_shape(grid, stag))
            index = [slice(None)] * 2
            index[k] = [0, -1]
            value[tuple(index)] = 0.0
            values.append(value)
        v = gr.Field(grid, gr.faces(2), tuple(values), "dirichlet")
        projected = op.leray_project(v)
        self.assertLess(op.divergence(projected).max_abs(), 1e-9 * v.max_abs() / grid.h_min)
        self.assertLessEqual(op.l2_norm(projected), op.l2_norm(v) * (1 + 1e-12))
        twice = op.leray_project(projected)
        for a, b in zip(projected.values, twice.values):
            np.testing.assert_allclose(a, b, atol=1e-7 * v.max_abs())

    def test_projection_needs_zero_walls(self):
        grid = self.square()
        v = gr.Field(grid, gr.faces(2), tuple(np.ones(gr.lattice_shape(grid, s)) for s in gr.faces(2)))
        with self.assertRaises(ValidationError):
            op.leray_project(v)

    def test_time_derivative(self):
        dt = 0.1
        t = np.arange(11) * dt
        values = (t ** 2)[:, np.newaxis] * np.ones((11, 3))
        np.testing.assert_allclose(op.time_derivative_array(values, dt, 1)[:, 0], 2 * t, atol=1e-10)
        np.testing.assert_allclose(op.time_derivative_array(values, dt, 2)[:, 0], 2.0, atol=1e-8)
        with self.assertRaises(ValidationError):
            op.time_derivative_array(values, dt, 3)

    def test_sobolev_norms(self):
        grid = self.square(T=1.0, time_steps=40)
        stag = gr.centre(2)
        x, y = grid.mesh(stag)
        snapshot = gr.scalar_field(grid, stag, np.sin(np.pi * x) * np.sin(np.pi * y))
        l2 = op.sobolev_norm(snapshot, op.NormSpec(0, "L2", "domain", "fixed"))
        self.assertAlmostEqual(l2, 0.5, delta=1e-3)
        spread = (slice(None), np.newaxis, np.newaxis)
        values = grid.times[spread] * np.ones((41,) + gr.lattice_shape(grid, stag))
        series = gr.TimeSeriesField(grid, (stag,), (values,), grid.dt)
        norm = op.sobolev_norm(series, op.NormSpec(1, "L2", "domain"))
        self.assertAlmostEqual(norm, np.sqrt(1.0 / 3.0 + 1.0), delta=1e-3)
        zero = series.with_values([np.zeros_like(values)])
        self.assertEqual(op.sobolev_norm(zero, op.NormSpec(2, "H2", "omega")), 0.0)
        self.assertLess(op.sobolev_norm(series, op.NormSpec(1, "L2", "omega")), norm)

    def test_norm_spec_validation(self):
        with self.assertRaises(ValidationError):
            op.NormSpec(1, "L2", "domain", "fixed")
        with self.assertRaises(ValidationError):
            op.NormSpec(0, "H3")
        with self.assertRaises(ValidationError):
            op.NormSpec(3, "L2")

if __name__ == "__main__":
    unittest.main()
