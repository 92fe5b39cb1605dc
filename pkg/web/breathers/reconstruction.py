"""Primal profile, wave profile for both polarization laws, electromagnetic fields
and their residual diagnostics.

Kernels enter the nonlinear terms truncated to the active set: N_hat_k is
taken as zero for k outside it, so the discrete wave equation closes on the
lattice of odd multiples of m up to 3 k_max.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ReconstructionError
from .fields import (
    MultiplierSymbol,
    TimeFourierField,
    analyze_samples,
    apply_multiplier,
    evaluate_field,
    l2_norm,
    pointwise_cube,
)
from .operators import apply_W, build_frequency_operator, parallel_map, solve_W

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PrimalProfile:
    u: TimeFourierField
    discrepancy: float
    consistent: bool


def primal_from_dual(v, weight, op, n_samples, tol=1e-6):
    """u = W^-1 h^(1/4) Pi v, cross-checked against h^(-1/4) v^(1/3)"""
    u = solve_W(op, v.on_lattice(op.lattice).multiply_space(weight.quarter))
    root = analyze_samples(np.cbrt(evaluate_field(v, n_samples)), v.grid, v.lattice)
    direct = root.multiply_space(1.0 / weight.quarter)
    scale = l2_norm(u)
    discrepancy = l2_norm(direct - u.on_lattice(v.lattice)) / scale if scale > 0 else 0.0
    consistent = discrepancy <= tol
    if not consistent:
        logger.warning(f"Primal recovery inconsistent: relative discrepancy {discrepancy:.3e}")
    return PrimalProfile(u, discrepancy, consistent)


def _relative(residual, reference):
    r = l2_norm(residual)
    s = l2_norm(reference)
    if s == 0.0:
        return 0.0 if r == 0.0 else float('inf')
    return r / s


def primal_residual(op, u):
    """||W u - h Pi[u^3]|| relative to ||h Pi[u^3]||"""
    rhs = pointwise_cube(u, restrict=True).multiply_space(op.h_quarter ** 4)
    return _relative(apply_W(op, u) - rhs, rhs)


def dual_chain_defect(v, u, weight, n_samples):
    """||v - h^(3/4) u^3|| relative to ||v||"""
    samples = evaluate_field(u, n_samples) ** 3 * (weight.h_values ** 0.75)[:, None]
    rebuilt = analyze_samples(samples, v.grid, v.lattice)
    return _relative(v - rebuilt, v)


@dataclass(frozen=True, eq=False)
class WaveProfile:
    w: TimeFourierField
    polarization: int
    active: object

    @property
    def lattice(self):
        return self.w.lattice


def reconstruct_w(u, polarization, kernels, weight, V, bandcert=None, allow_uncertified=False):
    """w = u for polarization 1; (N*)^-1 u plus non-resonant L_k inversions for polarization 2"""
    active = u.lattice
    extended = active.extended(3)
    if polarization == 1:
        return WaveProfile(u.on_lattice(extended), 1, active)
    if polarization != 2:
        raise ConfigurationError(f"Polarization must be 1 or 2, got {polarization}")

    non_resonant = [k for k in extended.modes if k not in active]
    if bandcert is None:
        bad = list(non_resonant)
    else:
        bad = [k for k in non_resonant if not bandcert.tilde_gaps_at.get(k, {}).get('certified', False)]
    if bad and not allow_uncertified:
        raise ReconstructionError(bad)
    if bad:
        logger.warning(f"Inverting L_k at uncertified frequencies {bad}")

    coeffs = np.zeros((extended.n_modes, u.grid.n_points), dtype=complex)
    for k in active.modes:
        coeffs[extended.index(k)] = u.mode(k) / kernels.n(k)

    cube = pointwise_cube(u)
    h = weight.physical

    def solve(k):
        fk = build_frequency_operator(k, u.grid, V, kernels)
        out = np.zeros(u.grid.n_points, dtype=complex)
        out[1:-1] = fk.solve(fk.lam * h[1:-1] * cube.mode(k)[1:-1])
        return out

    for k, row in zip(non_resonant, parallel_map(solve, non_resonant)):
        coeffs[extended.index(k)] = row
    logger.info(f"Polarization 2 wave built with {len(non_resonant)} non-resonant frequencies")
    return WaveProfile(TimeFourierField(u.grid, extended, coeffs), 2, active)


def _inner_field(wave, kernels):
    """The field entering the cubic term: w for polarization 1, N*w for polarization 2, both on the active set"""
    z = wave.w.on_lattice(wave.active)
    if wave.polarization == 1:
        return z
    factors = np.array([kernels.n(k) for k in wave.active.modes])
    return z.with_coeffs(z.coeffs * factors[:, None])


def nonlinear_polarization(wave, kernels, weight):
    """P_NL on the extended lattice: h N*(w^3) (polarization 1) or h (N*w)^3 (polarization 2)"""
    cube = pointwise_cube(_inner_field(wave, kernels)).multiply_space(weight.physical)
    cube = cube.on_lattice(wave.lattice)
    if wave.polarization == 2:
        return cube
    factors = np.array([kernels.n(k) if k in wave.active else 0.0 for k in wave.lattice.modes])
    return cube.with_coeffs(cube.coeffs * factors[:, None])


def _wave_terms(wave, kernels, weight, V):
    """(A_k w_k, omega^2 k^2 P_NL_k) per frequency"""
    w = wave.w
    ks = list(w.lattice.modes)

    def row(item):
        i, k = item
        fk = build_frequency_operator(k, w.grid, V, kernels, factorized=False)
        out = np.zeros(w.grid.n_points, dtype=complex)
        out[1:-1] = fk.apply(w.coeffs[i, 1:-1])
        return out

    linear = np.array(parallel_map(row, enumerate(ks))).reshape(w.coeffs.shape)
    p_nl = nonlinear_polarization(wave, kernels, weight)
    lam = (w.lattice.omega * np.array(ks, dtype=float)) ** 2
    forcing = p_nl.coeffs * lam[:, None]
    forcing[:, [0, -1]] = 0.0
    return w.with_coeffs(linear), w.with_coeffs(forcing)


def wave_residual(wave, kernels, weight, V):
    """Relative residual of the scalar wave equation on interior nodes"""
    linear, forcing = _wave_terms(wave, kernels, weight, V)
    reference = forcing if l2_norm(forcing) > 0 else linear
    return _relative(linear - forcing, reference)


def kernel_truncation_estimate(wave, kernels, weight):
    """Size of what the truncated kernel drops, relative to what it keeps"""
    if wave.polarization == 1:
        cube = pointwise_cube(wave.w.on_lattice(wave.active)).multiply_space(weight.physical)
        dropped = [k for k in cube.lattice.modes if k not in wave.active]
        kept = [kernels.n(k) * cube.mode(k) for k in wave.active.modes]
        lost = [kernels.n(k) * cube.mode(k) for k in dropped]
    else:
        dropped = [k for k in wave.lattice.modes if k not in wave.active]
        kept = [kernels.n(k) * wave.w.mode(k) for k in wave.active.modes]
        lost = [kernels.n(k) * wave.w.mode(k) for k in dropped]
    weights = wave.w.grid.weights
    kept_norm = np.sqrt(sum(2 * weights @ np.abs(c) ** 2 for c in kept))
    lost_norm = np.sqrt(sum(2 * weights @ np.abs(c) ** 2 for c in lost)) if lost else 0.0
    return {
        'relative': float(lost_norm / kept_norm) if kept_norm > 0 else 0.0,
        'dropped_frequencies': dropped,
        'convention': 'N_hat truncated to the active set',
    }


def second_derivative_check(u, kernels, weight, V):
    """d2u/dx2 from the equation against the compact and a fourth-order stencil"""
    grid = u.grid
    cube = pointwise_cube(u, restrict=True).multiply_space(weight.physical)
    omega = u.lattice.omega
    formula = np.zeros_like(u.coeffs)
    for i, k in enumerate(u.lattice.modes):
        lam = (omega * k) ** 2
        formula[i] = -lam * (V * u.coeffs[i] + kernels.g_hat(k) * u.coeffs[i] + kernels.n(k) * cube.coeffs[i])
    c = u.coeffs
    dx2 = grid.dx ** 2
    compact = (c[:, 2:] - 2 * c[:, 1:-1] + c[:, :-2]) / dx2
    fourth = (-c[:, 4:] + 16 * c[:, 3:-1] - 30 * c[:, 2:-2] + 16 * c[:, 1:-3] - c[:, :-4]) / (12 * dx2)

    def rel(a, b):
        s = np.linalg.norm(b)
        return float(np.linalg.norm(a - b) / s) if s > 0 else 0.0

    return {
        'stencil_defect': rel(compact, formula[:, 1:-1]),
        'fourth_order_defect': rel(fourth, formula[:, 2:-2]) if grid.n_points > 4 else float('nan'),
    }


@dataclass(frozen=True, eq=False)
class EMFieldSet:
    """Sampled fields over (x, phase) plus their coefficients.

    B_z and H_z coefficients live on the midpoints between grid nodes.
    """
    x: np.ndarray
    phase: np.ndarray
    samples: dict
    coeffs: dict
    lattice: object
    dx: float
    c: float
    mu0: float
    eps0: float = field(default=1.0)


def _forward(a, dx):
    return (a[:, 1:] - a[:, :-1]) / dx


def _to_nodes(a):
    out = np.empty((a.shape[0], a.shape[1] + 1), dtype=a.dtype)
    out[:, 0] = a[:, 0]
    out[:, -1] = a[:, -1]
    out[:, 1:-1] = 0.5 * (a[:, :-1] + a[:, 1:])
    return out


def assemble_fields(wave, c, samples, kernels, weight, V, mu0=1.0):
    """E = w e_y, B = -(w/c, 0, dW/dx), H = B/mu0, D = eps0 (E + P) with W the time antiderivative"""
    eps0 = 1.0 / mu0
    w = wave.w
    grid = w.grid
    lattice = w.lattice
    W = apply_multiplier(w, MultiplierSymbol.inverse_derivative(lattice))
    e = w.coeffs
    bx = -e / c
    bz = -_forward(W.coeffs, grid.dx)
    g0 = np.asarray(V) - 1.0 + 1.0 / c ** 2
    memory = np.array([kernels.g_hat(k) for k in lattice.modes])
    linear = e * g0[None, :] + memory * e
    p = linear + nonlinear_polarization(wave, kernels, weight).coeffs
    d = eps0 * (e + p)
    coeffs = {
        'E_y': e, 'W': W.coeffs, 'B_x': bx, 'B_z': bz, 'H_x': bx / mu0, 'H_z': bz / mu0,
        'D_x': np.zeros_like(e), 'D_y': d, 'D_z': np.zeros_like(bz),
    }

    n_x, n_phase = samples
    idx = np.unique(np.round(np.linspace(0, grid.n_points - 1, min(n_x, grid.n_points))).astype(int))
    sampled = {}
    for name in ('E_y', 'B_x', 'B_z', 'H_x', 'H_z', 'D_y'):
        values = coeffs[name] if coeffs[name].shape[1] == grid.n_points else _to_nodes(coeffs[name])
        sampled[name] = evaluate_field(TimeFourierField(grid, lattice, values), n_phase)[idx]
    phase = np.arange(n_phase) * lattice.period / n_phase
    return EMFieldSet(grid.nodes[idx], phase, sampled, coeffs, lattice, grid.dx, c, mu0, eps0)


def _norm(a, dx):
    return float(np.sqrt(2.0 * dx * np.sum(np.abs(a) ** 2)))


def _ratio(residual, reference, dx):
    r = _norm(residual, dx)
    s = _norm(reference, dx)
    if s == 0.0:
        return 0.0 if r == 0.0 else float('inf')
    return r / s


def maxwell_residuals(fields):
    """Relative residuals of the four Maxwell equations under the traveling-wave reduction"""
    co = fields.coeffs
    dx = fields.dx
    iwk = 1j * fields.lattice.omega * np.array(fields.lattice.modes, dtype=float)[:, None]
    dt = lambda a: iwk * a
    dz = lambda a: -iwk * a / fields.c

    faraday_x = -dz(co['E_y']) + dt(co['B_x'])
    faraday_z = _forward(co['E_y'], dx) + dt(co['B_z'])
    f_res = np.hypot(_norm(faraday_x, dx), _norm(faraday_z, dx))
    f_ref = np.hypot(_norm(dt(co['B_x']), dx), _norm(dt(co['B_z']), dx))

    div_b = _forward(co['B_x'], dx) + dz(co['B_z'])
    div_d = _forward(co['D_x'], dx) + dz(co['D_z'])

    curl_h = dz(co['H_x'])[:, 1:-1] - _forward(co['H_z'], dx)
    dt_d = dt(co['D_y'])[:, 1:-1]

    e_dot = 2.0 * dx * float(np.sum((co['E_y'] * np.conj(dt(co['D_y']))).real))
    h_dot = 2.0 * dx * float(
        np.sum((co['H_x'] * np.conj(dt(co['B_x']))).real) + np.sum((co['H_z'] * np.conj(dt(co['B_z']))).real)
    )
    poynting_scale = _norm(co['E_y'], dx) * _norm(dt(co['D_y']), dx) + _norm(co['H_x'], dx) * _norm(dt(co['B_x']), dx)

    return {
        'faraday': float(f_res / f_ref) if f_ref > 0 else 0.0,
        'div_B': _ratio(div_b, _forward(co['B_x'], dx), dx),
        'div_D': _ratio(div_d, dz(co['D_y']), dx),
        'ampere': _ratio(curl_h - dt_d, dt_d, dx),
        'poynting': {
            'E_dot_dD': e_dot,
            'H_dot_dB': h_dot,
            'balance': abs(e_dot + h_dot) / poynting_scale if poynting_scale > 0 else 0.0,
        },
    }
