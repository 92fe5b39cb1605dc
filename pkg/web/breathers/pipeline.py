"""Orchestration of the bands, solve and verify runs.

Residual tables are computed by one function from the stored dual and primal
coefficients, so a verify straight after a solve reproduces the solve's numbers.
"""
import logging
import math
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .dual import DualProblem, negate_h_transform, newton_polish, solve_dual
from .exceptions import CertificationError, ConfigurationError, ConvergenceError
from .fields import (
    FrequencyLattice,
    TimeFourierField,
    decay_rate,
    inner_mass_fraction,
    l2_norm,
    minimal_period,
    support,
    tail_ratio,
)
from .materials import assumption_params, verify_assumptions
from .operators import assemble_operator, estimate_W1_norm
from .outputs import (
    config_hash,
    provenance,
    read_coefficients,
    read_json,
    write_bands,
    write_coefficients,
    write_fields,
    write_json,
    write_plotdata,
    write_trace,
)
from .reconstruction import (
    assemble_fields,
    dual_chain_defect,
    kernel_truncation_estimate,
    maxwell_residuals,
    primal_from_dual,
    primal_residual,
    reconstruct_w,
    second_derivative_check,
    wave_residual,
)
from .serializers import lattice_extent
from .spectrum import certify_gaps, compute_bands, confirm_point_spectrum, point_spectrum_estimate

logger = logging.getLogger(__name__)

CONSTRUCTION_TOL = 1e-10


def certify(config, lattice):
    """Band certificate for the active and non-resonant frequencies plus hypothesis verdicts"""
    grid = config.grid
    medium = config.step_weight
    V = config.V
    bc = compute_bands(medium, lattice_extent(config), config.discretization['band_resolution'])
    checks = []
    if medium.is_halfspace:
        windows = bc.gap_windows()
        eigenvalues = point_spectrum_estimate(V, grid, windows)
        checks = confirm_point_spectrum(medium, grid, eigenvalues, windows)
        bc = replace(bc, point_spectrum=eigenvalues)
    bc = certify_gaps(bc, lattice)
    bc = certify_gaps(bc, lattice, tilde=True)
    params = assumption_params(config.kernels, bc, V, lattice.k_max, config.material['beta'])
    verdicts = verify_assumptions(config.kernels, params, bc, V, config.weight, medium, grid)
    summary = {
        'active_frequencies': list(lattice.modes),
        'uncertified': bc.uncertified(),
        'uncertified_non_resonant': bc.uncertified(tilde=True),
        'assumptions': verdicts,
        'assumption_params': asdict(params),
        'violations': params.violations(),
        'point_spectrum_checks': checks,
    }
    return bc, summary


def run_bands(config, out_dir):
    lattice = config.lattice()
    bc, summary = certify(config, lattice)
    write_bands(out_dir, bc, summary, provenance(config, command='bands'))
    bad = bc.uncertified()
    if bad:
        raise CertificationError(bad)
    logger.info(f"Certified frequencies {list(lattice.modes)}")
    return bc, summary


def _active_lattice(config, sublattice):
    base = config.lattice()
    if not sublattice or sublattice == base.sublattice_m:
        return base
    if sublattice % base.sublattice_m:
        raise ConfigurationError(
            f"--sublattice {sublattice} is not a multiple of the configured sublattice_m={base.sublattice_m}"
        )
    return base.restricted(sublattice)


def _solver_weight(config):
    weight = config.weight
    if not weight.solver_ready:
        logger.info("Solving the transformed problem (-h, -W)")
        weight = negate_h_transform(weight)
    return weight


@dataclass(frozen=True, eq=False)
class Evaluation:
    wave: object
    fields: object
    table: dict
    limits: dict
    diagnostics: dict

    @property
    def within_limits(self):
        return all(self.table[name] <= limit for name, limit in self.limits.items())


def residual_limits(config):
    solver = config.data['solver']
    tol = solver['residual_tol']
    return {
        'dual': solver['tol_grad'],
        'identity': solver['tol_id'],
        'chain': tol,
        'primal': tol,
        'wave': tol,
        'ampere': tol,
        'faraday': CONSTRUCTION_TOL,
        'div_B': CONSTRUCTION_TOL,
        'div_D': CONSTRUCTION_TOL,
    }


def evaluate_solution(config, op, v, u, weight, bc, n_samples, allow_uncertified=False):
    """Residual table (dual, primal, wave, Maxwell) and diagnostics for a stored solution"""
    kernels = config.kernels
    V = config.V
    params = config.solver_params()
    problem = DualProblem(op, v.lattice, n_samples, params.time_reversal_symmetric)
    a, b, _ = problem.forms(v)
    energy = 0.75 * a - 0.5 * b
    _, grad_norm = problem.gradient(v)

    wave = reconstruct_w(u, config.polarization, kernels, weight, V, bc, allow_uncertified)
    out = config.output
    fields = assemble_fields(wave, config.material['c'], (out['n_x'], out['n_phase']), kernels, weight, V)
    maxwell = maxwell_residuals(fields)

    table = {
        'dual': grad_norm,
        'identity': abs(energy - 0.25 * a) / abs(energy) if energy != 0 else float('inf'),
        'chain': dual_chain_defect(v, u, weight, n_samples),
        'primal': primal_residual(op, u),
        'wave': wave_residual(wave, kernels, weight, V),
        'faraday': maxwell['faraday'],
        'div_B': maxwell['div_B'],
        'div_D': maxwell['div_D'],
        'ampere': maxwell['ampere'],
    }
    quotient = b / a ** 1.5 if a > 0 else float('nan')
    diagnostics = {
        'J': energy,
        'nehari_quotient': quotient,
        'nehari_level': 0.25 / quotient ** 2 if quotient > 0 else float('nan'),
        'minimal_period': minimal_period(u),
        'support': list(support(u)),
        'tail_ratio': tail_ratio(u),
        'decay_rate': decay_rate(u),
        'inner_mass_fraction': inner_mass_fraction(wave.w),
        'second_derivative': second_derivative_check(u, kernels, weight, V),
        'kernel_truncation': kernel_truncation_estimate(wave, kernels, weight),
        'poynting': maxwell['poynting'],
    }
    return Evaluation(wave, fields, table, residual_limits(config), diagnostics)


def _write_solution(config, out, meta, u, v, evaluation, n_samples, trace=None, report=None):
    files = set(config.output['files'])
    stamp = {**meta, 'n_samples': n_samples, 'polarization': config.polarization}
    # verify needs both coefficient files
    write_coefficients(out / 'solution.csv', u, stamp)
    write_coefficients(out / 'dual.csv', v, stamp)
    if 'wave' in files:
        write_coefficients(out / 'wave.csv', evaluation.wave.w, stamp)
    if 'fields' in files:
        write_fields(out / 'fields.csv', evaluation.fields, meta)
    if 'plotdata' in files:
        write_plotdata(out / 'plotdata.csv', u, evaluation.wave.w, config.output['n_phase'], meta)
    if 'residuals' in files:
        write_json(out / 'residuals.json', {'residuals': evaluation.table, 'limits': evaluation.limits}, meta)
    if 'trace' in files and trace is not None:
        write_trace(out / 'trace.jsonl', trace, meta)
    if 'report' in files and report is not None:
        write_json(out / 'report.json', report, meta)


def run_solve(config, out_dir, sublattice=None, allow_uncertified=False):
    """Certify, assemble, solve, reconstruct and write every artifact; raises after writing on failure"""
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lattice = _active_lattice(config, sublattice)
    meta = provenance(config, command='solve', sublattice_m=lattice.sublattice_m, allow_uncertified=allow_uncertified)

    bc, summary = certify(config, lattice)
    bad = bc.uncertified()
    if bad:
        if not allow_uncertified:
            write_bands(out, bc, summary, meta)
            raise CertificationError(bad)
        logger.warning(f"Continuing with uncertified frequencies {bad}")
    certified_at = time.perf_counter()

    weight = _solver_weight(config)
    params = config.solver_params()
    op = assemble_operator(config.grid, lattice, config.V, config.kernels, weight)
    margins = {k: gap['margin'] for k, gap in bc.gaps_at.items()}
    trace = []
    result = solve_dual(op, params, margins, trace)
    solved_at = time.perf_counter()

    state = result.state
    n_samples = result.problem.n_samples
    profile = primal_from_dual(state.v, weight, op, n_samples)
    evaluation = evaluate_solution(config, op, state.v, profile.u, weight, bc, n_samples, allow_uncertified)
    converged = state.converged and profile.consistent and evaluation.within_limits

    report = {
        'converged': converged,
        'polarization': config.polarization,
        'sublattice_m': lattice.sublattice_m,
        'bands': {
            'gaps_at': {str(k): g for k, g in bc.gaps_at.items()},
            'tilde_gaps_at': {str(k): g for k, g in bc.tilde_gaps_at.items()},
            'fitted': bc.fitted,
            'fitted_tilde': bc.fitted_tilde,
            'point_spectrum': bc.point_spectrum,
        },
        **summary,
        'c_mp': result.path.level,
        'J': state.energy,
        'lower_bound': result.lower_bound,
        'norm_K': result.norm_K,
        'W1_estimate': estimate_W1_norm(op),
        'residuals': evaluation.table,
        'limits': evaluation.limits,
        'diagnostics': evaluation.diagnostics,
        'solver': {
            'stage': state.stage,
            'iterations': state.iteration,
            'anchor_k': state.anchor_k,
            'grad_norm': state.grad_norm,
            'identity_defect': state.identity_defect,
            'converged': state.converged,
            'candidate_energies': [s.energy for s in result.candidates],
            'primal_recovery_discrepancy': profile.discrepancy,
            'n_samples': n_samples,
            'conditions': {str(k): c for k, c in op.conditions().items()},
        },
        'timing': {
            'certify': certified_at - started,
            'solve': solved_at - certified_at,
            'total': time.perf_counter() - started,
        },
    }
    _write_solution(config, out, meta, profile.u, state.v, evaluation, n_samples, trace, report)
    if not converged:
        failed = [name for name, limit in evaluation.limits.items() if not evaluation.table[name] <= limit]
        raise ConvergenceError(
            f"Run did not converge (solver converged: {state.converged}, residuals above limits: {failed})"
        )
    logger.info(f"Breather found: J = {state.energy:.10g}, minimal period {evaluation.diagnostics['minimal_period']:.6g}")
    return report


def transfer(u, grid, lattice):
    """Interpolate u onto grid (zero outside its old domain) and zero-pad onto lattice"""
    x_old = u.grid.nodes
    x_new = grid.nodes
    coeffs = np.array([
        np.interp(x_new, x_old, row.real, left=0.0, right=0.0) + 1j * np.interp(x_new, x_old, row.imag, left=0.0, right=0.0)
        for row in u.coeffs
    ]).reshape(u.lattice.n_modes, grid.n_points)
    return TimeFourierField(grid, u.lattice, coeffs).on_lattice(lattice)


def _resolve(config, lattice, u0, allow_uncertified):
    """Certify, assemble and Newton-polish u0 on another discretization"""
    bc, _ = certify(config, lattice)
    weight = _solver_weight(config)
    params = config.solver_params()
    op = assemble_operator(config.grid, lattice, config.V, config.kernels, weight)
    u = newton_polish(op, u0, params)
    if u is None:
        logger.warning("Polish on the new discretization collapsed; evaluating the transferred profile")
        u = u0
    problem = DualProblem.build(op, params.oversampling, params.time_reversal_symmetric)
    v = problem.dual_from_primal(u)
    evaluation = evaluate_solution(config, op, v, u, weight, bc, problem.n_samples, allow_uncertified)
    return u, evaluation


def _relative_change(new, old):
    scale = l2_norm(old)
    return l2_norm(new - old) / scale if scale > 0 else 0.0


def refine_check(config, u, base, factor, allow_uncertified=False):
    """Refine n_points and k_max by factor, re-polish, compare residuals and the solution"""
    k_new = factor * config.k_max
    if k_new % 2 == 0:
        k_new += 1
    fine = config.with_discretization(n_points=factor * (config.grid.n_points - 1) + 1, k_max=k_new)
    lattice = FrequencyLattice.odd(
        u.lattice.period, k_new, u.lattice.sublattice_m, support=fine.kernels.is_supported
    )
    u_fine, evaluation = _resolve(fine, lattice, transfer(u, fine.grid, lattice), allow_uncertified)
    coarse = TimeFourierField(u.grid, lattice, u_fine.coeffs[:, ::factor]).on_lattice(u.lattice)
    return {
        'n_points': fine.grid.n_points,
        'k_max': k_new,
        'residuals': evaluation.table,
        'wave_ratio': evaluation.table['wave'] / base.table['wave'] if base.table['wave'] > 0 else float('inf'),
        'solution_change': _relative_change(coarse, u),
        'J': evaluation.diagnostics['J'],
    }


def double_domain_check(config, u, base, allow_uncertified=False):
    """Re-solve on a domain about twice as long with the same dx, walls moved by whole cells"""
    grid = config.grid
    medium = config.step_weight
    half = (grid.n_points - 1) // 2
    per_right = max(1, int(round(medium.period / grid.dx)))
    per_left = max(1, int(round(medium.left_period / grid.dx)))
    left = per_left * math.ceil(half / per_left)
    right = per_right * math.ceil(half / per_right)
    wide_grid = grid.extended(left, right)
    wide = config.with_discretization(x_min=wide_grid.x_min, x_max=wide_grid.x_max, n_points=wide_grid.n_points)
    u_wide, evaluation = _resolve(wide, u.lattice, transfer(u, wide.grid, u.lattice), allow_uncertified)
    window = TimeFourierField(u.grid, u.lattice, u_wide.coeffs[:, left:left + grid.n_points])
    j_old = base.diagnostics['J']
    j_new = evaluation.diagnostics['J']
    return {
        'x_min': wide.grid.x_min,
        'x_max': wide.grid.x_max,
        'n_points': wide.grid.n_points,
        'residuals': evaluation.table,
        'J': j_new,
        'energy_change': abs(j_new - j_old) / abs(j_old) if j_old else float('inf'),
        'solution_change': _relative_change(window, u),
        'outside_mass': 1.0 - (l2_norm(window) / l2_norm(u_wide)) ** 2 if l2_norm(u_wide) > 0 else 0.0,
    }


def run_verify(config, solution_dir, refine=None, double_domain=False):
    """Recompute all residuals for stored coefficients, optionally on refined or doubled discretizations"""
    src = Path(solution_dir)
    u, meta = read_coefficients(src / 'solution.csv')
    v, _ = read_coefficients(src / 'dual.csv')
    expected = config_hash(config.data)
    if meta.get('config_hash') != expected:
        raise ConfigurationError(
            f"Solution in {src} was produced from config hash {meta.get('config_hash')}, not {expected}"
        )
    if u.grid != config.grid or v.grid != config.grid:
        raise ConfigurationError(f"Solution grid in {src} does not match the config discretization")

    allow = bool(meta.get('allow_uncertified', False))
    n_samples = int(meta['n_samples'])
    bc, _ = certify(config, u.lattice)
    weight = _solver_weight(config)
    op = assemble_operator(config.grid, u.lattice, config.V, config.kernels, weight)
    evaluation = evaluate_solution(config, op, v, u, weight, bc, n_samples, allow)

    report = {
        'converged': evaluation.within_limits,
        'residuals': evaluation.table,
        'limits': evaluation.limits,
        'diagnostics': evaluation.diagnostics,
    }
    stored = src / 'residuals.json'
    if stored.exists():
        previous = read_json(stored)['residuals']
        report['stored_difference'] = max(abs(evaluation.table[k] - previous[k]) for k in evaluation.table)
    if refine:
        report['refine'] = refine_check(config, u, evaluation, refine, allow)
    if double_domain:
        report['double_domain'] = double_domain_check(config, u, evaluation, allow)
    write_json(src / 'verify.json', report, provenance(config, command='verify'))
    if not report['converged']:
        failed = [name for name, limit in evaluation.limits.items() if not evaluation.table[name] <= limit]
        raise ConvergenceError(f"Stored solution fails its residual limits: {failed}")
    return report
