"""Material data: step weights V, memory kernels N and G, the nonlinear weight h,
and the hypothesis checks run before a solve.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

QUADRATURE_POINTS = 2048
JUMP_TOL = 1e-9
EVEN_TOL = 1e-8
ZERO_TOL = 1e-13
DECAY_TOL = 1e-3


def _cell_lookup(x, lengths, values, origin=0.0):
    """Periodic piecewise-constant values; a point on a jump gets the mean of both sides"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lengths = np.asarray(lengths, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(values)
    period = lengths.sum()
    edges = np.concatenate(([0.0], np.cumsum(lengths)))
    p = np.mod(x - origin, period)
    idx = np.clip(np.searchsorted(edges, p, side='right') - 1, 0, n - 1)
    out = values[idx]
    dist = np.abs(p[:, None] - edges[None, :])
    j = dist.argmin(axis=1)
    on_jump = dist[np.arange(len(p)), j] <= JUMP_TOL * max(period, 1.0)
    both_sides = 0.5 * (values[(j - 1) % n] + values[j % n])
    return np.where(on_jump, both_sides, out)


def _cell_jumps(lengths, values, origin, x_min, x_max):
    period = float(np.sum(lengths))
    edges = np.concatenate(([0.0], np.cumsum(lengths)[:-1]))
    jumps = []
    for i, e in enumerate(edges):
        if values[i - 1] == values[i]:
            continue
        first = math.floor((x_min - origin - e) / period)
        last = math.ceil((x_max - origin - e) / period)
        for j in range(first, last + 1):
            x = origin + e + j * period
            if x_min - JUMP_TOL <= x <= x_max + JUMP_TOL:
                jumps.append(x)
    return jumps


@dataclass(frozen=True)
class StepWeight:
    """V(x) = baseline + g0(x) with g0 piecewise constant.

    pieces are (length, g0) pairs over one cell starting at x = 0. In half-space
    mode, pieces describe x > 0 and left_pieces the cell repeated on x < 0.
    """
    pieces: tuple
    baseline: float = 0.0
    mode: str = 'periodic'
    left_pieces: tuple = ()
    kind: str = 'steps'

    def __post_init__(self):
        pieces = tuple((float(length), float(g0)) for length, g0 in self.pieces)
        left = tuple((float(length), float(g0)) for length, g0 in self.left_pieces)
        object.__setattr__(self, 'pieces', pieces)
        object.__setattr__(self, 'left_pieces', left)
        if self.mode not in ('periodic', 'halfspace'):
            raise ConfigurationError(f"Unknown weight mode '{self.mode}'")
        if not pieces:
            raise ConfigurationError("A step weight needs at least one piece")
        if self.mode == 'halfspace' and not left:
            raise ConfigurationError("A half-space weight needs a left cell")
        for length, _ in pieces + left:
            if not length > 0:
                raise ConfigurationError(f"Piece lengths must be positive, got {length}")
        v_min = min(self.baseline + g0 for _, g0 in pieces + left)
        if not v_min > 0:
            raise ConfigurationError(
                f"V must be positive everywhere, got min V = {v_min:.6g}; "
                f"essinf g0 must exceed 1/c^2 - 1"
            )

    @property
    def is_halfspace(self):
        return self.mode == 'halfspace'

    @property
    def period(self):
        return sum(length for length, _ in self.pieces)

    @property
    def left_period(self):
        if not self.is_halfspace:
            return self.period
        return sum(length for length, _ in self.left_pieces)

    def cell(self, side='plus'):
        """(lengths, V values) of one period cell"""
        pieces = self.left_pieces if side == 'minus' and self.is_halfspace else self.pieces
        lengths = np.array([length for length, _ in pieces])
        values = np.array([self.baseline + g0 for _, g0 in pieces])
        return lengths, values

    def cells(self):
        if self.is_halfspace:
            return {'minus': self.cell('minus'), 'plus': self.cell('plus')}
        return {'plus': self.cell('plus')}

    def phases(self, side='plus'):
        """sqrt(V_i) * length_i per piece; omega times this is the phase at lambda = omega^2"""
        lengths, values = self.cell(side)
        return np.sqrt(values) * lengths

    @property
    def min_value(self):
        return min(float(values.min()) for _, values in self.cells().values())

    @property
    def max_value(self):
        return max(float(values.max()) for _, values in self.cells().values())

    def evaluate(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.is_halfspace:
            return _cell_lookup(x, *self.cell('plus'))
        lengths_p, values_p = self.cell('plus')
        lengths_m, values_m = self.cell('minus')
        out = np.where(x >= 0, _cell_lookup(x, lengths_p, values_p), _cell_lookup(x, lengths_m, values_m))
        at_origin = np.abs(x) <= JUMP_TOL * max(self.period, 1.0)
        out[at_origin] = 0.5 * (values_m[-1] + values_p[0])
        return out

    def sample(self, grid):
        return self.evaluate(grid.nodes)

    def discontinuities(self, x_min, x_max):
        """Sorted jump positions of V inside [x_min, x_max]"""
        if not self.is_halfspace:
            return sorted(_cell_jumps(*self.cell('plus'), 0.0, x_min, x_max))
        jumps = [x for x in _cell_jumps(*self.cell('plus'), 0.0, x_min, x_max) if x > JUMP_TOL]
        jumps += [x for x in _cell_jumps(*self.cell('minus'), 0.0, x_min, x_max) if x < -JUMP_TOL]
        _, values_p = self.cell('plus')
        _, values_m = self.cell('minus')
        if values_m[-1] != values_p[0] and x_min <= 0.0 <= x_max:
            jumps.append(0.0)
        return sorted(jumps)


def step_weight_thm12(T, c, theta, X, orders=(1, 1)):
    """Two-piece periodic weight whose pieces each carry a quarter period of phase at omega"""
    m, n = (int(o) for o in orders)
    if m < 1 or n < 1 or m % 2 == 0 or n % 2 == 0:
        raise ConfigurationError(f"Step orders must be positive odd integers, got {orders}")
    if not 0 < theta < 1:
        raise ConfigurationError(f"theta must lie in (0, 1), got {theta}")
    if not (T > 0 and X > 0 and c > 0):
        raise ConfigurationError("T, X and c must be positive")
    if theta == 0.5 and m == n:
        raise ConfigurationError("theta = 1/2 gives a constant weight and no spectral gap opens")
    v1 = m ** 2 * T ** 2 / (16 * theta ** 2 * X ** 2)
    v2 = n ** 2 * T ** 2 / (16 * (1 - theta) ** 2 * X ** 2)
    baseline = 1.0 - 1.0 / c ** 2
    return StepWeight(
        ((theta * X, v1 - baseline), ((1 - theta) * X, v2 - baseline)),
        baseline=baseline,
        kind='step-thm12',
    )


def step_weight_thm13(T, c, theta_minus, X_minus, theta_plus, X_plus):
    for theta in (theta_minus, theta_plus):
        if not 0 < theta < 0.5:
            raise ConfigurationError(f"Half-space theta must lie in (0, 1/2), got {theta}")
    left = step_weight_thm12(T, c, theta_minus, X_minus)
    right = step_weight_thm12(T, c, theta_plus, X_plus)
    return StepWeight(
        right.pieces,
        baseline=right.baseline,
        mode='halfspace',
        left_pieces=left.pieces,
        kind='halfspace-thm13',
    )


def step_weight_from_pieces(pieces, c):
    """Periodic weight from user (length, V) pieces"""
    baseline = 1.0 - 1.0 / c ** 2
    return StepWeight(tuple((length, value - baseline) for length, value in pieces), baseline=baseline)


def nu_hat_triangular(T, k):
    """Fourier coefficient of the periodized kernel dist(t, TZ) on [0, T]"""
    k = abs(int(k))
    if k == 0:
        return T * T / 4
    if k % 2 == 0:
        return 0.0
    # agrees with Simpson quadrature of the defining cosine integral, -4 at k=1 and -4/9 at k=3 for T=2pi
    return -T * T / (k * k * math.pi ** 2)


def g_hat_cosabs(T, k):
    """Frequency factor of the periodized kernel cos(wt)|cos(wt)| on [0, T]"""
    k = abs(int(k))
    if k % 2 == 0:
        return 0.0
    n = (k - 1) // 2
    return 4 * T * (-1) ** n / ((4 * k - k ** 3) * math.pi)


def periodize(samples, period, span_periods, points=QUADRATURE_POINTS):
    """T * sum_j f(t + jT) on points + 1 uniform nodes of [0, T]"""
    samples = np.asarray(samples, dtype=float)
    t_source = np.linspace(0.0, span_periods * period, len(samples))
    t = np.linspace(0.0, period, points + 1)
    total = np.zeros_like(t)
    for j in range(span_periods):
        total += np.interp(t + j * period, t_source, samples, right=0.0)
    total[-1] = total[0]
    return period * total


def fourier_coefficient(values, period, k):
    """Haar-normalized coefficient of uniform samples on [0, T] (both ends included)"""
    values = np.asarray(values)
    t = np.linspace(0.0, period, len(values))
    omega = 2 * math.pi / period
    return complex(simpson(values * np.exp(-1j * omega * k * t), x=t) / period)


def _tabulated_coefficients(samples, period, span_periods, ks, label):
    values = periodize(samples, period, span_periods)
    coeffs = {k: fourier_coefficient(values, period, k) for k in ks}
    scale = max((abs(c) for c in coeffs.values()), default=0.0)
    worst = max((abs(c.imag) for c in coeffs.values()), default=0.0)
    if worst > EVEN_TOL * max(scale, 1.0):
        raise ConfigurationError(
            f"Periodized {label} kernel is not even in time (imaginary coefficient {worst:.3e})"
        )
    return {k: c.real for k, c in coeffs.items()}


def evaluate_profile(spec, x):
    """Sample a profile spec ({'kind': constant|gaussian|sech|steps, ...}) at x"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    kind = spec.get('kind', 'constant')
    if kind == 'constant':
        return np.full_like(x, float(spec.get('value', 1.0)))
    amplitude = float(spec.get('amplitude', 1.0))
    center = float(spec.get('center', 0.0))
    width = float(spec.get('width', 1.0))
    if kind == 'gaussian':
        return amplitude * np.exp(-((x - center) / width) ** 2)
    if kind == 'sech':
        return amplitude / np.cosh((x - center) / width)
    if kind == 'steps':
        pieces = spec['pieces']
        lengths = [p[0] for p in pieces]
        values = [p[1] for p in pieces]
        return _cell_lookup(x, lengths, values, float(spec.get('origin', 0.0)))
    raise ConfigurationError(f"Unknown profile kind '{kind}'")


def fit_power_law(ks, values):
    """Exponent a and best constants with |v_k| ~ k^-a: (a, sup |v|k^a, inf |v|k^a)"""
    ks = np.asarray(ks, dtype=float)
    mags = np.abs(np.asarray(values, dtype=float))
    keep = mags > 0
    if keep.sum() < 2:
        return float('nan'), float('nan'), float('nan')
    a = -np.polyfit(np.log(ks[keep]), np.log(mags[keep]), 1)[0]
    scaled = mags[keep] * ks[keep] ** a
    return float(a), float(scaled.max()), float(scaled.min())


@dataclass(frozen=True, eq=False)
class KernelCoefficients:
    """N_hat_k and the factorization G_hat_k(x) = g_factor_k * g1_profile(x)"""
    period: float
    n_hat: dict
    g_factor: dict
    g1_profile: np.ndarray
    nu_kind: str = 'triangular-nu'
    g1_kind: str = 'cosabs-g1'

    @property
    def omega(self):
        return 2 * math.pi / self.period

    @property
    def k_limit(self):
        return max(self.n_hat)

    def n(self, k):
        try:
            return self.n_hat[abs(k)]
        except KeyError:
            raise ConfigurationError(f"Kernel coefficients not computed for k={k}")

    def g(self, k):
        return self.g_factor.get(abs(k), 0.0)

    def g_hat(self, k):
        return self.g(k) * self.g1_profile

    @property
    def has_memory(self):
        return bool(np.any(self.g1_profile)) and any(v != 0.0 for v in self.g_factor.values())

    def is_supported(self, k):
        scale = max(abs(v) for v in self.n_hat.values())
        return abs(self.n(k)) > ZERO_TOL * scale

    def decay(self, k_max):
        """(alpha, C, c): |N_hat_k| between c k^-alpha and C k^-alpha for odd k <= k_max"""
        ks = [k for k in range(1, k_max + 1, 2) if self.is_supported(k)]
        return fit_power_law(ks, [self.n(k) for k in ks])


def build_kernels(period, nu_spec, g1_spec, nodes, k_limit):
    """Kernel coefficients for odd k <= k_limit from validated kernel specs"""
    ks = list(range(1, k_limit + 1, 2))
    nu_kind = nu_spec.get('kind', 'triangular-nu')
    if nu_kind == 'triangular-nu':
        n_hat = {k: nu_hat_triangular(period, k) for k in ks}
    elif nu_kind == 'tabulated':
        n_hat = _tabulated_coefficients(
            nu_spec['samples'], period, nu_spec.get('span_periods', 1), ks, 'nu'
        )
    else:
        raise ConfigurationError(f"Unknown nu kernel kind '{nu_kind}'")

    g1_kind = g1_spec.get('kind', 'none') if g1_spec else 'none'
    if g1_kind == 'none':
        g_factor = {k: 0.0 for k in ks}
        profile = np.zeros(len(nodes))
    else:
        profile = evaluate_profile(g1_spec.get('profile', {'kind': 'constant', 'value': 1.0}), nodes)
        if g1_kind == 'cosabs-g1':
            g_factor = {k: g_hat_cosabs(period, k) for k in ks}
        elif g1_kind == 'tabulated':
            g_factor = _tabulated_coefficients(
                g1_spec['samples'], period, g1_spec.get('span_periods', 1), ks, 'g1'
            )
        else:
            raise ConfigurationError(f"Unknown g1 kernel kind '{g1_kind}'")

    logger.debug(f"Kernel coefficients built up to k={k_limit} ({nu_kind}, {g1_kind})")
    return KernelCoefficients(period, n_hat, g_factor, profile, nu_kind, g1_kind)


@dataclass(frozen=True, eq=False)
class NonlinearWeight:
    """h over the grid, stored as positive magnitudes.

    The equation solved is operator_sign * W u = sign * h_values * Pi[u^3], so the
    physical coefficient is operator_sign * sign * h_values.
    """
    h_values: np.ndarray
    sign: int = 1
    operator_sign: int = 1
    h_per: np.ndarray = None
    h_loc: np.ndarray = None

    def __post_init__(self):
        h = np.array(self.h_values, dtype=float)
        if not np.all(h > 0):
            raise ConfigurationError(
                f"h must be strictly positive on the grid (min {h.min():.3e}); "
                f"use sign = -1 for a negative nonlinearity"
            )
        if self.sign not in (1, -1) or self.operator_sign not in (1, -1):
            raise ConfigurationError("sign and operator_sign must be +1 or -1")
        h.flags.writeable = False
        object.__setattr__(self, 'h_values', h)

    @property
    def physical(self):
        return self.operator_sign * self.sign * self.h_values

    @property
    def quarter(self):
        return self.h_values ** 0.25

    @property
    def solver_ready(self):
        return self.sign == 1


def build_nonlinear_weight(h_spec, nodes):
    parts = {}
    for key in ('periodic', 'localized'):
        if h_spec.get(key):
            parts[key] = evaluate_profile(h_spec[key], nodes)
    if not parts:
        raise ConfigurationError("h needs a periodic or a localized profile")
    h_per = parts.get('periodic')
    h_loc = parts.get('localized')
    if h_loc is not None and np.any(h_loc < 0):
        raise ConfigurationError("The localized part of h must be nonnegative")
    total = sum(parts.values())
    return NonlinearWeight(
        total,
        sign=int(h_spec.get('sign', 1)),
        operator_sign=int(h_spec.get('operator_sign', 1)),
        h_per=h_per,
        h_loc=h_loc,
    )


def _is_periodic(values, grid, period, rel_tol=1e-10):
    shift = period / grid.dx
    s = int(round(shift))
    if abs(shift - s) > 1e-9 or s < 1 or s >= grid.n_points:
        return False
    scale = max(float(np.abs(values).max()), 1.0)
    return float(np.abs(values[s:] - values[:-s]).max()) <= rel_tol * scale


def _decays_at_ends(values, rel_tol=DECAY_TOL):
    peak = float(np.abs(values).max())
    return peak == 0.0 or max(abs(values[0]), abs(values[-1])) <= rel_tol * peak


def geometry_verdict(weight, step_weight, grid):
    """Periodic h (with the medium's period) or periodic plus localized nonnegative h"""
    if step_weight.is_halfspace:
        ok = weight.h_per is None and _decays_at_ends(weight.h_values)
        return {
            'status': 'holds' if ok else 'fails',
            'witness': {'variant': 'localized', 'end_ratio': _end_ratio(weight.h_values)},
            'message': 'h must decay at both ends for a half-space medium',
        }
    period = step_weight.period
    per_ok = weight.h_per is None or _is_periodic(weight.h_per, grid, period)
    loc_zero = weight.h_loc is None or not np.any(weight.h_loc)
    if per_ok and loc_zero:
        return {'status': 'holds', 'witness': {'variant': 'periodic'}, 'message': 'h is periodic'}
    if per_ok and weight.h_loc is not None and _decays_at_ends(weight.h_loc):
        return {
            'status': 'holds',
            'witness': {'variant': 'periodic+localized', 'end_ratio': _end_ratio(weight.h_loc)},
            'message': 'h is a periodic part plus a nonnegative localized part',
        }
    return {
        'status': 'fails',
        'witness': {'periodic_part_ok': per_ok},
        'message': 'h is neither periodic with the medium nor periodic plus a decaying localized part',
    }


def _end_ratio(values):
    peak = float(np.abs(values).max())
    return 0.0 if peak == 0.0 else float(max(abs(values[0]), abs(values[-1])) / peak)


@dataclass(frozen=True)
class AssumptionParams:
    alpha: float
    beta: float
    gamma: float
    delta: float
    d: float
    gamma_tilde: float
    delta_tilde: float
    d_tilde: float
    s_lower: float

    def violations(self):
        found = []
        if not self.alpha > 1:
            found.append(f"alpha={self.alpha:.4g} must exceed 1")
        if not 0.5 <= self.beta < 2:
            found.append(f"beta={self.beta:.4g} must lie in [1/2, 2)")
        if not self.gamma <= 1:
            found.append(f"gamma={self.gamma:.4g} must not exceed 1")
        if not 0 <= self.d < self.delta:
            found.append(f"d={self.d:.4g} must lie in [0, delta={self.delta:.4g})")
        if not 0 <= self.d_tilde < self.delta_tilde:
            found.append(f"d_tilde={self.d_tilde:.4g} must lie in [0, delta_tilde={self.delta_tilde:.4g})")
        return found


def perturbation_constants(kc, V, ks, gamma):
    """Smallest d_k with |G_hat_k(x)| <= d_k V(x) / (omega^2 k^(2-gamma)) over the grid"""
    ratio = float(np.max(np.abs(kc.g1_profile) / V)) if len(V) else 0.0
    omega2 = kc.omega ** 2
    return {k: abs(kc.g(k)) * ratio * omega2 * k ** (2 - gamma) for k in ks}


def _tail_threshold(ks, ok):
    """Smallest k0 in ks with every k >= k0 passing; None when the largest k fails"""
    k0 = None
    for k in sorted(ks, reverse=True):
        if not ok[k]:
            break
        k0 = k
    return k0


def _suggested_sublattice(k0):
    m = max(1, int(k0))
    return m if m % 2 else m + 1


def assumption_params(kc, bc, V, k_max, beta=0.5):
    """Constants of the gap and coefficient hypotheses derived from kernels and bands"""
    alpha, _, _ = kc.decay(k_max)
    s_lower, _, _ = kc.decay(3 * k_max)
    fit = bc.fitted
    fit_tilde = bc.fitted_tilde
    active = [k for k in bc.gaps_at]
    tilde = [k for k in bc.tilde_gaps_at]
    d_k = perturbation_constants(kc, V, active, fit['gamma'])
    d_tilde_k = perturbation_constants(kc, V, tilde, fit_tilde['gamma'])
    return AssumptionParams(
        alpha=alpha,
        beta=beta,
        gamma=fit['gamma'],
        delta=fit['delta'],
        d=max(d_k.values(), default=0.0),
        gamma_tilde=fit_tilde['gamma'],
        delta_tilde=fit_tilde['delta'],
        d_tilde=max(d_tilde_k.values(), default=0.0),
        s_lower=s_lower,
    )


def verify_assumptions(kc, ap, bc, V, weight=None, step_weight=None, grid=None):
    """Per-hypothesis verdicts: holds, holds-for-large-k (with k0 and a sublattice) or fails"""
    report = {}

    if weight is not None:
        report['A1'] = {
            'status': 'holds',
            'witness': {'min_abs_h': float(weight.h_values.min()), 'sign': int(weight.operator_sign * weight.sign)},
            'message': 'h is bounded away from zero' if weight.operator_sign * weight.sign > 0
            else 'h is negative; solved through (h, W) -> (-h, -W)',
        }

    k_max = max(bc.gaps_at) if bc.gaps_at else 1
    alpha, c_upper, _ = kc.decay(k_max)
    report['A2'] = {
        'status': 'holds' if alpha > 1 else 'fails',
        'witness': {'alpha': alpha, 'C': c_upper},
        'message': f"|N_hat_k| <= {c_upper:.4g} k^-{alpha:.4g}",
    }

    v_min = float(np.min(V))
    report['A3'] = {
        'status': 'holds' if v_min > 0 else 'fails',
        'witness': {'min_V': v_min},
        'message': 'V is positive' if v_min > 0 else 'V is not positive',
    }

    report['A4'] = _gap_verdict(bc.gaps_at, ap.delta, ap.gamma, len(bc.point_spectrum))
    a5 = ap.alpha + ap.gamma - 2
    report['A5'] = {
        'status': 'holds' if a5 > ap.beta and 0.5 <= ap.beta < 2 else 'fails',
        'witness': {'alpha+gamma-2': a5, 'beta': ap.beta},
        'message': f"alpha + gamma - 2 = {a5:.4g} against beta = {ap.beta:.4g}",
    }

    report['A6'] = _perturbation_verdict(kc, V, list(bc.gaps_at), ap.gamma, ap.delta, 'd')

    tilde = _gap_verdict(bc.tilde_gaps_at, ap.delta_tilde, ap.gamma_tilde, len(bc.point_spectrum))
    pert = _perturbation_verdict(kc, V, list(bc.tilde_gaps_at), ap.gamma_tilde, ap.delta_tilde, 'd_tilde')
    _, _, c_lower = kc.decay(3 * k_max)
    order = {'holds': 0, 'holds-for-large-k': 1, 'fails': 2}
    worst = max((tilde, pert), key=lambda v: order[v['status']])
    report['A7'] = {
        'status': worst['status'],
        'witness': {
            'gaps': tilde['witness'],
            'perturbation': pert['witness'],
            's': ap.s_lower,
            'c': c_lower,
        },
        'message': f"non-resonant range: {worst['message']}",
        'required_for': 'polarization 2',
    }
    for key in ('k0', 'suggested_sublattice'):
        if key in worst:
            report['A7'][key] = worst[key]

    if weight is not None and step_weight is not None and grid is not None:
        report['A8'] = geometry_verdict(weight, step_weight, grid)

    for name, verdict in report.items():
        if verdict['status'] != 'holds':
            logger.warning(f"Hypothesis {name}: {verdict['status']} ({verdict['message']})")
    return report


def _gap_verdict(gaps_at, delta, gamma, n_points):
    ks = sorted(gaps_at)
    ok = {k: bool(gaps_at[k]['certified']) for k in ks}
    bad = [k for k in ks if not ok[k]]
    witness = {'delta': delta, 'gamma': gamma, 'point_eigenvalues': n_points}
    if not bad and delta > 0 and gamma <= 1:
        return {'status': 'holds', 'witness': witness, 'message': f"margins >= {delta:.4g} k^{gamma:.4g}"}
    k0 = _tail_threshold(ks, ok)
    if bad and k0 is not None:
        return {
            'status': 'holds-for-large-k',
            'witness': witness,
            'message': f"uncertified frequencies {bad}",
            'k0': k0,
            'suggested_sublattice': _suggested_sublattice(k0),
        }
    return {'status': 'fails', 'witness': witness, 'message': f"uncertified frequencies {bad}"}


def _perturbation_verdict(kc, V, ks, gamma, delta, label):
    d_k = perturbation_constants(kc, V, ks, gamma)
    d = max(d_k.values(), default=0.0)
    witness = {label: d, 'delta': delta, 'ratio': d / delta if delta > 0 else float('inf')}
    if d < delta:
        return {'status': 'holds', 'witness': witness, 'message': f"{label} = {d:.4g} < delta = {delta:.4g}"}
    ok = {k: d_k[k] < delta for k in ks}
    k0 = _tail_threshold(ks, ok)
    if k0 is not None:
        return {
            'status': 'holds-for-large-k',
            'witness': witness,
            'message': f"{label} < delta only for k >= {k0}",
            'k0': k0,
            'suggested_sublattice': _suggested_sublattice(k0),
        }
    return {'status': 'fails', 'witness': witness, 'message': f"{label} = {d:.4g} >= delta = {delta:.4g}"}
