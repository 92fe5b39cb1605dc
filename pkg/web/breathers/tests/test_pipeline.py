import logging
import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from breathers.fields import FrequencyLattice, SpaceGrid, TimeFourierField
from breathers.outputs import read_coefficients, read_json, read_trace, write_coefficients
from breathers.pipeline import _solver_weight, residual_limits, transfer
from breathers.serializers import load_config

from .utils import small_config, write_config

logging.disable(logging.CRITICAL)

T = 2 * math.pi


class PipelineCommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.stdout = StringIO()

    def config(self, name='config.json', **sections):
        return write_config(self.root, small_config(**sections), name)


class BandsCommandTestCase(PipelineCommandTestCase):
    def test_bands_certified(self):
        """Test bands writes its artifacts and certifies the active frequencies"""
        out = self.root / 'bands'
        call_command('bands', config=str(self.config()), out=str(out), stdout=self.stdout)
        self.assertTrue((out / 'bands.csv').exists())
        payload = read_json(out / 'bands.json')
        self.assertEqual(payload['uncertified'], [])
        self.assertAlmostEqual(payload['certificate']['fitted']['delta'], 5 / 9, places=5)
        self.assertEqual(payload['assumptions']['A6']['status'], 'holds')
        self.assertIn('config_hash', payload['meta'])
        self.assertIn('Certified frequencies: 1, 3', self.stdout.getvalue())

    def test_constant_medium_exit_code(self):
        """Test a shipped gapless medium, named without its directory, exits with the certification code"""
        out = self.root / 'flat'
        with self.assertRaises(CommandError) as cm:
            call_command('bands', config='constant-V.json', out=str(out), stdout=self.stdout)
        self.assertEqual(cm.exception.returncode, 2)
        self.assertTrue((out / 'bands.json').exists())

    def test_invalid_config_exit_code(self):
        """Test a rejected config exits with the configuration code"""
        path = self.config(material={'weight': {'kind': 'step-thm12', 'theta': 0.5, 'X': 1.0}})
        with self.assertRaises(CommandError) as cm:
            call_command('bands', config=str(path), out=str(self.root), stdout=self.stdout)
        self.assertEqual(cm.exception.returncode, 4)

    def test_missing_config_exit_code(self):
        """Test a missing config file exits with the configuration code"""
        with self.assertRaises(CommandError) as cm:
            call_command('bands', config=str(self.root / 'none.json'), stdout=self.stdout)
        self.assertEqual(cm.exception.returncode, 4)


class SolveCommandTestCase(PipelineCommandTestCase):
    def test_solve_then_verify(self):
        """Test a solve converges and verify reproduces its residuals"""
        path = self.config()
        out = self.root / 'solve'
        call_command('solve', config=str(path), out=str(out), stdout=self.stdout)

        for name in ('solution.csv', 'dual.csv', 'wave.csv', 'fields.csv', 'plotdata.csv',
                     'residuals.json', 'report.json', 'trace.jsonl'):
            self.assertTrue((out / name).exists(), name)
        report = read_json(out / 'report.json')
        self.assertTrue(report['converged'])
        self.assertGreater(report['J'], report['lower_bound'])
        self.assertLess(report['residuals']['faraday'], 1e-10)
        self.assertLess(report['residuals']['div_B'], 1e-10)
        self.assertTrue(read_trace(out / 'trace.jsonl'))

        u, meta = read_coefficients(out / 'solution.csv')
        self.assertEqual(u.lattice.modes, (1, 3))
        self.assertEqual(meta['config_hash'], report['meta']['config_hash'])

        call_command('verify', config=str(path), solution=str(out), stdout=self.stdout)
        verify = read_json(out / 'verify.json')
        self.assertTrue(verify['converged'])
        self.assertLess(verify['stored_difference'], 1e-12)

    def test_sublattice_solve(self):
        """Test --sublattice 3 yields a solution of minimal period T/3"""
        out = self.root / 'sub'
        call_command('solve', config=str(self.config()), out=str(out), sublattice=3, stdout=self.stdout)
        report = read_json(out / 'report.json')
        self.assertEqual(report['sublattice_m'], 3)
        self.assertEqual(report['diagnostics']['support'], [3])
        self.assertAlmostEqual(report['diagnostics']['minimal_period'], T / 3)

    def test_bad_sublattice(self):
        """Test an even sublattice index is a configuration error"""
        with self.assertRaises(CommandError) as cm:
            call_command('solve', config=str(self.config()), out=str(self.root), sublattice=2, stdout=self.stdout)
        self.assertEqual(cm.exception.returncode, 4)

    def test_verify_other_config(self):
        """Test verify refuses a solution produced from another config"""
        out = self.root / 'solve'
        call_command('solve', config=str(self.config()), out=str(out), stdout=self.stdout)
        other = self.config('other.json', output={'n_phase': 32})
        with self.assertRaises(CommandError) as cm:
            call_command('verify', config=str(other), solution=str(out), stdout=self.stdout)
        self.assertEqual(cm.exception.returncode, 4)


    def test_verify_refine_and_double_domain(self):
        """Test verify --refine 2 --double-domain re-solves on both discretizations"""
        path = self.config()
        out = self.root / 'solve'
        call_command('solve', config=str(path), out=str(out), stdout=self.stdout)
        call_command('verify', config=str(path), solution=str(out), refine=2, double_domain=True, stdout=self.stdout)
        verify = read_json(out / 'verify.json')
        self.assertEqual(verify['refine']['k_max'], 7)
        self.assertEqual(verify['refine']['n_points'], 321)
        self.assertIn('J', verify['refine'])
        self.assertEqual(verify['double_domain']['n_points'], 321)
        self.assertLess(verify['double_domain']['x_min'], -1.875)
        self.assertIn('J', verify['double_domain'])
        self.assertIn('Doubled-domain energy change', self.stdout.getvalue())

    def test_verify_tampered_solution(self):
        """Test a stored profile nudged by 1e-3 at one node fails verification"""
        path = self.config()
        out = self.root / 'solve'
        call_command('solve', config=str(path), out=str(out), stdout=self.stdout)
        u, meta = read_coefficients(out / 'solution.csv')
        coeffs = np.array(u.coeffs)
        coeffs[0, u.grid.n_points // 2] += 1e-3
        write_coefficients(out / 'solution.csv', u.with_coeffs(coeffs), meta)
        with self.assertRaises(CommandError) as cm:
            call_command('verify', config=str(path), solution=str(out), stdout=self.stdout)
        self.assertEqual(cm.exception.returncode, 3)
        verify = read_json(out / 'verify.json')
        self.assertFalse(verify['converged'])
        for name in ('chain', 'primal', 'wave', 'ampere'):
            self.assertGreater(verify['residuals'][name], verify['limits'][name], name)


class ShippedConfigTestCase(PipelineCommandTestCase):
    def solve(self, name):
        out = self.root / name
        call_command('solve', config=name, out=str(out), stdout=self.stdout)
        report = read_json(out / 'report.json')
        self.assertTrue(report['converged'])
        for key, limit in report['limits'].items():
            self.assertLessEqual(report['residuals'][key], limit, key)
        return report

    def test_negative_h(self):
        """Test the shipped negative nonlinearity config converges within every residual limit"""
        report = self.solve('negative-h.json')
        self.assertGreater(report['J'], 0.0)

    def test_halfspace(self):
        """Test the shipped interface medium converges within every residual limit"""
        report = self.solve('thm13.json')
        self.assertIsInstance(report['bands']['point_spectrum'], list)

    def test_second_polarization(self):
        """Test the shipped polarization 2 config converges within every residual limit"""
        report = self.solve('pol2.json')
        self.assertEqual(report['polarization'], 2)

class PipelineHelperTestCase(SimpleTestCase):
    def test_transfer_zero_outside(self):
        """Test a profile moved to a wider grid vanishes outside its old domain"""
        grid = SpaceGrid(0.0, 1.0, 11)
        lattice = FrequencyLattice.odd(T, 1)
        u = TimeFourierField.from_modes(grid, lattice, {1: np.ones(11)})
        wide = grid.extended(5, 5)
        moved = transfer(u, wide, FrequencyLattice.odd(T, 3))
        self.assertEqual(moved.lattice.modes, (1, 3))
        self.assertTrue(np.allclose(moved.mode(1)[5:16], 1.0))
        self.assertTrue(np.all(moved.mode(1)[:5] == 0))
        self.assertTrue(np.all(moved.mode(3) == 0))

    def test_residual_limits(self):
        """Test construction residuals are held to rounding and the rest to the config tolerance"""
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        config = load_config(write_config(tmp.name, small_config(solver={'residual_tol': 1e-8})))
        limits = residual_limits(config)
        self.assertEqual(limits['wave'], 1e-8)
        self.assertEqual(limits['faraday'], 1e-10)
        self.assertEqual(limits['dual'], 1e-6)

    def test_negative_h_orientation(self):
        """Test a negative nonlinearity is solved with the operator orientation flipped"""
        config = load_config(settings.BREATHER_CONFIG_DIR / 'negative-h.json')
        weight = _solver_weight(config)
        self.assertEqual((weight.sign, weight.operator_sign), (1, -1))
