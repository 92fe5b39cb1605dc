import logging
import math
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from breathers.dual import DualProblem
from breathers.exceptions import ConfigurationError, ReconstructionError
from breathers.fields import FrequencyLattice, SpaceGrid, TimeFourierField, pointwise_cube
from breathers.materials import build_kernels, build_nonlinear_weight, step_weight_thm12
from breathers.operators import assemble_operator, build_frequency_operator
from breathers.reconstruction import (
    assemble_fields,
    dual_chain_defect,
    kernel_truncation_estimate,
    maxwell_residuals,
    nonlinear_polarization,
    primal_residual,
    reconstruct_w,
    second_derivative_check,
    wave_residual,
)

logging.disable(logging.CRITICAL)

T = 2 * math.pi


class ReconstructionTestCase(SimpleTestCase):
    def setUp(self):
        self.grid = SpaceGrid(-1.875, 2.125, 81)
        self.lattice = FrequencyLattice.odd(T, 3)
        self.V = step_weight_thm12(T, 2.0, 0.25, 1.0).sample(self.grid)
        g1 = {'kind': 'cosabs-g1', 'profile': {'kind': 'constant', 'value': 0.2}}
        self.kernels = build_kernels(T, {'kind': 'triangular-nu'}, g1, self.grid.nodes, 9)
        self.weight = build_nonlinear_weight({'periodic': {'kind': 'constant', 'value': 1.0}}, self.grid.nodes)
        self.op = assemble_operator(self.grid, self.lattice, self.V, self.kernels, self.weight)
        bump = 0.3 * np.exp(-self.grid.nodes ** 2)
        bump[[0, -1]] = 0.0
        self.u = TimeFourierField.from_modes(self.grid, self.lattice, {1: bump, 3: -0.2 * bump})

    def test_polarization_one_pads(self):
        """Test w = u on the lattice up to 3 k_max"""
        wave = reconstruct_w(self.u, 1, self.kernels, self.weight, self.V)
        self.assertEqual(wave.lattice.modes, (1, 3, 5, 7, 9))
        self.assertTrue(np.array_equal(wave.w.mode(3), self.u.mode(3)))
        self.assertTrue(np.all(wave.w.mode(7) == 0))

    def test_polarization_one_residuals_agree(self):
        """Test the wave residual equals the primal residual when omega^2 k^2 N_hat_k is constant"""
        wave = reconstruct_w(self.u, 1, self.kernels, self.weight, self.V)
        self.assertAlmostEqual(
            wave_residual(wave, self.kernels, self.weight, self.V), primal_residual(self.op, self.u), places=10
        )

    def test_polarization_two_active(self):
        """Test w_k = u_k / N_hat_k on the active set"""
        wave = reconstruct_w(self.u, 2, self.kernels, self.weight, self.V, allow_uncertified=True)
        self.assertTrue(np.allclose(wave.w.mode(1), self.u.mode(1) / -4.0))
        self.assertTrue(np.allclose(wave.w.mode(3), self.u.mode(3) / (-4.0 / 9)))

    def test_polarization_two_non_resonant(self):
        """Test L_k w_k = omega^2 k^2 h (u^3)_k at every non-resonant frequency"""
        wave = reconstruct_w(self.u, 2, self.kernels, self.weight, self.V, allow_uncertified=True)
        cube = pointwise_cube(self.u)
        for k in (5, 7, 9):
            fk = build_frequency_operator(k, self.grid, self.V, self.kernels)
            lhs = fk.apply(wave.w.mode(k)[1:-1])
            rhs = fk.lam * cube.mode(k)[1:-1]
            self.assertLess(np.linalg.norm(lhs - rhs), 1e-10 * np.linalg.norm(rhs))

    def test_polarization_two_wave_equation(self):
        """Test the polarization 2 nonlinear term is h (N*w)^3"""
        wave = reconstruct_w(self.u, 2, self.kernels, self.weight, self.V, allow_uncertified=True)
        p_nl = nonlinear_polarization(wave, self.kernels, self.weight)
        inner = pointwise_cube(self.u).multiply_space(self.weight.physical)
        self.assertTrue(np.allclose(p_nl.mode(7), inner.mode(7)))

    def test_uncertified_refused(self):
        """Test polarization 2 without a certificate for the non-resonant range raises"""
        with self.assertRaises(ReconstructionError):
            reconstruct_w(self.u, 2, self.kernels, self.weight, self.V)

    def test_unknown_polarization(self):
        """Test polarization other than 1 or 2 raises"""
        with self.assertRaises(ConfigurationError):
            reconstruct_w(self.u, 3, self.kernels, self.weight, self.V)

    def test_truncation_estimate(self):
        """Test the dropped frequencies of the cubic term are reported"""
        wave = reconstruct_w(self.u, 1, self.kernels, self.weight, self.V)
        estimate = kernel_truncation_estimate(wave, self.kernels, self.weight)
        self.assertEqual(estimate['dropped_frequencies'], [5, 7, 9])
        self.assertGreater(estimate['relative'], 0.0)

    def test_second_derivative_keys(self):
        """Test both stencil defects are reported"""
        check = second_derivative_check(self.u, self.kernels, self.weight, self.V)
        self.assertEqual(set(check), {'stencil_defect', 'fourth_order_defect'})

    def test_dual_chain(self):
        """Test v = h^(3/4) u^3 is reproduced from its own primal"""
        problem = DualProblem.build(self.op)
        v = problem.dual_from_primal(self.u)
        self.assertLess(dual_chain_defect(v, self.u, self.weight, problem.n_samples), 1e-12)

    def test_zero_primal_residual(self):
        """Test the zero field has zero residual"""
        self.assertEqual(primal_residual(self.op, TimeFourierField.zeros(self.grid, self.lattice)), 0.0)


class FieldAssemblyTestCase(SimpleTestCase):
    def setUp(self):
        self.grid = SpaceGrid(-1.875, 2.125, 81)
        lattice = FrequencyLattice.odd(T, 3)
        self.V = step_weight_thm12(T, 2.0, 0.25, 1.0).sample(self.grid)
        self.kernels = build_kernels(T, {'kind': 'triangular-nu'}, None, self.grid.nodes, 9)
        self.weight = build_nonlinear_weight({'periodic': {'kind': 'constant', 'value': 1.0}}, self.grid.nodes)
        bump = 0.3 * np.sin(np.pi * (self.grid.nodes - self.grid.x_min) / self.grid.length)
        self.u = TimeFourierField.from_modes(self.grid, lattice, {1: bump, 3: 0.1 * bump})
        self.zero = TimeFourierField.zeros(self.grid, lattice)

    def fields(self, u, mu0=1.0):
        wave = reconstruct_w(u, 1, self.kernels, self.weight, self.V)
        return assemble_fields(wave, 2.0, (21, 16), self.kernels, self.weight, self.V, mu0=mu0)

    def test_zero_fields(self):
        """Test the zero profile gives identically zero fields and residuals"""
        fields = self.fields(self.zero)
        for values in fields.samples.values():
            self.assertTrue(np.all(values == 0))
        residuals = maxwell_residuals(fields)
        self.assertEqual(residuals['faraday'], 0.0)
        self.assertEqual(residuals['div_B'], 0.0)
        self.assertEqual(residuals['ampere'], 0.0)

    def test_sample_shape(self):
        """Test fields are sampled on the requested subset of nodes and phases"""
        fields = self.fields(self.u)
        self.assertEqual(fields.samples['E_y'].shape, (21, 16))
        self.assertEqual(len(fields.x), 21)
        self.assertAlmostEqual(fields.phase[1], T / 16)

    def test_staggered_identities(self):
        """Test Faraday's law and div B hold to rounding on the staggered grid"""
        residuals = maxwell_residuals(self.fields(self.u))
        self.assertLess(residuals['faraday'], 1e-10)
        self.assertLess(residuals['div_B'], 1e-10)
        self.assertEqual(residuals['div_D'], 0.0)

    def test_div_d_detects_longitudinal_displacement(self):
        """Test a nonzero D_x profile shows up in the div D residual"""
        fields = self.fields(self.u)
        coeffs = dict(fields.coeffs)
        coeffs['D_x'] = np.outer(np.ones(len(fields.lattice.modes)), self.grid.nodes ** 2)
        residuals = maxwell_residuals(replace(fields, coeffs=coeffs))
        self.assertGreater(residuals['div_D'], 1e-3)

    def test_magnetic_energy_balance(self):
        """Test H . dB/dt averages to zero over a period"""
        residuals = maxwell_residuals(self.fields(self.u))
        self.assertAlmostEqual(residuals['poynting']['H_dot_dB'], 0.0, places=12)

    def test_constitutive_scaling(self):
        """Test H = B / mu0 and eps0 = 1 / mu0"""
        fields = self.fields(self.u, mu0=2.0)
        self.assertEqual(fields.eps0, 0.5)
        self.assertTrue(np.allclose(fields.coeffs['H_x'], fields.coeffs['B_x'] / 2.0))
        self.assertTrue(np.allclose(fields.coeffs['B_x'], -fields.coeffs['E_y'] / 2.0))
