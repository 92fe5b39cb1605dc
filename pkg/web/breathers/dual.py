"""Dual functional J(v) = 3/4 int |v|^(4/3) - 1/2 <Kv, v> and the search for its
mountain-pass critical points.

The dual variable lives on the collocation lattice: every odd multiple of m
below M/2, with M time samples. Coefficients and antiperiodic samples are in
bijection there, so J and its gradient are evaluated exactly on samples.
"""
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov

from .exceptions import ConfigurationError, UsageError
from .fields import (
    TimeFourierField,
    analyze_samples,
    collocation_samples,
    evaluate_field,
    inner_product_l2,
    integrate_samples,
    l2_norm,
    minimal_period,
    pointwise_cube,
    support,
)
from .materials import NonlinearWeight
from .operators import apply_K, band_eigenpair, norm_K, parallel_map, positive_side, solve_W

logger = logging.getLogger(__name__)

MIN_STEP = 1e-12
ANCHOR_FACTOR = 3 ** 1.5


@dataclass(frozen=True)
class SolverParams:
    tol_grad: float = 1e-6
    tol_id: float = 1e-6
    path_nodes: int = 21
    path_tol: float = 1e-3
    max_iterations: int = 2000
    stagnation_sweeps: int = 50
    fixed_point_iterations: int = 500
    newton_polish: bool = True
    newton_iterations: int = 50
    time_reversal_symmetric: bool = True
    anchor_count: int = 1
    perturbation: float = 0.25
    seed: int = 0
    armijo: float = 1e-4
    oversampling: int = 32

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in (data or {}).items() if k in names})


def dual_sample_count(op, oversampling=32):
    return collocation_samples(op.lattice.k_max, op.lattice.sublattice_m, oversampling)


@dataclass(frozen=True, eq=False)
class RidgePoint:
    """Maximizer of J along the ray through direction"""
    direction: object
    scale: float
    a: float
    b: float

    @property
    def v(self):
        return self.direction * self.scale

    @property
    def energy(self):
        return 0.25 * self.a ** 3 / self.b ** 2

    @property
    def anchor_scale(self):
        return ANCHOR_FACTOR * self.scale


@dataclass(frozen=True, eq=False)
class DualProblem:
    op: object
    lattice: object
    n_samples: int
    symmetric: bool = True

    @classmethod
    def build(cls, op, oversampling=32, symmetric=True):
        n = dual_sample_count(op, oversampling)
        return cls(op, op.lattice.collocation(n), n, symmetric)

    @property
    def grid(self):
        return self.op.grid

    @property
    def h_values(self):
        return self.op.h_quarter ** 4

    def project(self, f):
        f = f.on_lattice(self.lattice)
        return f.real_part() if self.symmetric else f

    def forms(self, v):
        """(int |v|^(4/3), <Kv, v>, Kv)"""
        samples = evaluate_field(v, self.n_samples)
        a = integrate_samples(self.grid, np.abs(samples) ** (4.0 / 3.0))
        kv = apply_K(self.op, v)
        return a, inner_product_l2(kv, v), kv

    def energy(self, v):
        a, b, _ = self.forms(v)
        return 0.75 * a - 0.5 * b

    def gradient(self, v):
        """J'(v) = v^(1/3) - Kv and its norm relative to v^(1/3)"""
        samples = evaluate_field(v, self.n_samples)
        root = analyze_samples(np.cbrt(samples), self.grid, v.lattice)
        g = root - apply_K(self.op, v)
        scale = l2_norm(root)
        return g, (l2_norm(g) / scale if scale > 0 else 0.0)

    def fixed_point_image(self, v):
        """(Kv)^3 on the collocation samples"""
        samples = evaluate_field(apply_K(self.op, v), self.n_samples)
        return analyze_samples(samples ** 3, self.grid, v.lattice)

    def ridge(self, r):
        a, b, _ = self.forms(r)
        if not (a > 0 and b > 0):
            return None
        return RidgePoint(r, (a / b) ** 1.5, a, b)

    def dual_from_primal(self, u):
        """v = h^(3/4) u^3 sampled on the collocation lattice"""
        samples = evaluate_field(u, self.n_samples) ** 3
        return self.project(
            analyze_samples(samples * (self.h_values ** 0.75)[:, None], self.grid, self.lattice)
        )

    def primal_from_dual(self, v):
        """u = W^-1 h^(1/4) Pi v on the active lattice"""
        return solve_W(self.op, v.on_lattice(self.op.lattice).multiply_space(self.op.h_quarter))


def eval_J(op, v, n_samples=None):
    n = n_samples or dual_sample_count(op)
    return DualProblem(op, v.lattice, n).energy(v)


def eval_J_prime(op, v, n_samples=None):
    n = n_samples or dual_sample_count(op)
    return DualProblem(op, v.lattice, n).gradient(v)[0]


@dataclass(frozen=True, eq=False)
class MountainPassPath:
    """Discrete path from 0 to an anchor with J <= 0, J known at every node"""
    nodes: tuple
    energies: tuple

    def __post_init__(self):
        if self.energies[-1] > 0:
            raise UsageError(f"Path anchor has positive energy {self.energies[-1]:.6g}")
        if not self.level > 0:
            raise UsageError(f"Path level must be positive, got {self.level:.6g}")

    @property
    def anchor(self):
        return self.nodes[-1]

    @property
    def peak(self):
        return int(np.argmax(self.energies))

    @property
    def level(self):
        return max(self.energies)

    def with_node(self, index, node, energy):
        nodes = list(self.nodes)
        energies = list(self.energies)
        nodes[index] = node
        energies[index] = energy
        return MountainPassPath(tuple(nodes), tuple(energies))


def evaluate_path(problem, nodes):
    """J at every node, one node per worker"""
    nodes = tuple(nodes)
    return MountainPassPath(nodes, tuple(parallel_map(problem.energy, nodes)))


def initial_path(problem, anchor, n_nodes):
    """Straight segment from 0 to the anchor"""
    n_nodes = max(n_nodes, 3)
    return evaluate_path(problem, [anchor * (i / (n_nodes - 1)) for i in range(n_nodes)])


def _segment_lengths(path):
    """Steps between consecutive nodes in L2 distance and energy, both normalized"""
    scale_x = l2_norm(path.anchor) or 1.0
    scale_e = path.level
    return [
        math.hypot(l2_norm(b - a) / scale_x, (eb - ea) / scale_e)
        for a, b, ea, eb in zip(path.nodes, path.nodes[1:], path.energies, path.energies[1:])
    ]


def _resample(nodes, lengths, count):
    """count + 1 nodes equally spaced along the polyline, both ends kept"""
    s = np.concatenate([[0.0], np.cumsum(lengths)])
    out = [nodes[0]]
    for target in np.linspace(0.0, s[-1], count + 1)[1:-1]:
        j = min(int(np.searchsorted(s, target, side='right')) - 1, len(nodes) - 2)
        span = s[j + 1] - s[j]
        frac = (target - s[j]) / span if span > 0 else 0.0
        out.append(nodes[j] * (1 - frac) + nodes[j + 1] * frac)
    out.append(nodes[-1])
    return out


def reparametrize(problem, path):
    """Respace the nodes to equal steps in (distance, energy); the peak node stays put"""
    n = len(path.nodes)
    peak = path.peak
    lengths = _segment_lengths(path)
    left, right = sum(lengths[:peak]), sum(lengths[peak:])
    if left + right == 0:
        return path
    n_left = min(max(int(round((n - 1) * left / (left + right))), 1), n - 2)
    nodes = (
        _resample(path.nodes[:peak + 1], lengths[:peak], n_left)
        + _resample(path.nodes[peak:], lengths[peak:], n - 1 - n_left)[1:]
    )
    return evaluate_path(problem, nodes)


@dataclass(frozen=True, eq=False)
class DualState:
    v: object
    energy: float
    grad_norm: float
    iteration: int
    identity_defect: float = float('nan')
    converged: bool = False
    stage: str = 'path'
    anchor_k: int = None

    @property
    def norm(self):
        return l2_norm(self.v)


@dataclass(frozen=True, eq=False)
class Anchor:
    k: int
    v: object
    energy: float
    margin: float


def _finish(problem, v, iteration, stage, params, anchor_k):
    a, b, _ = problem.forms(v)
    energy = 0.75 * a - 0.5 * b
    _, gn = problem.gradient(v)
    defect = abs(energy - 0.25 * a) / abs(energy) if energy != 0 else float('inf')
    converged = gn <= params.tol_grad and defect <= params.tol_id and energy > 0
    return DualState(v, energy, gn, iteration, defect, converged, stage, anchor_k)


def _record(trace, iteration, energy, gn, level, stage):
    if trace is not None:
        trace.append({'iter': iteration, 'J': energy, 'grad_norm': gn, 'level': level, 'stage': stage})


def _descent_step(problem, ridge, g, params, tau):
    """Armijo step of a ridge point along (Kv)^3 - v, falling back to -J'; (None, tau) when neither descends"""
    v = ridge.v
    gnorm = l2_norm(g)
    directions = [problem.project(problem.fixed_point_image(v) - v)]
    if gnorm > 0:
        directions.append(problem.project(g * (-l2_norm(v) / gnorm)))
    for d in directions:
        slope = inner_product_l2(g, d)
        if not slope < 0:
            continue
        step = tau
        while step >= MIN_STEP:
            trial = problem.ridge(v + d * step)
            if trial is not None and trial.energy <= ridge.energy + params.armijo * step * slope:
                return trial, step
            step *= 0.5
    return None, tau


def _path_stage(problem, path, ridge, params, trace):
    """Deform the path: lift its peak node onto the ridge, move it by an Armijo step, respace the nodes"""
    tau = 0.5
    best_gn = float('inf')
    since_best = 0
    iteration = 0
    gn = float('inf')
    for iteration in range(params.max_iterations):
        peak = path.peak
        lifted = problem.ridge(path.nodes[peak])
        if lifted is None:
            logger.warning(f"Peak node {peak} has <Kv, v> <= 0 at sweep {iteration}")
            break
        ridge = lifted
        g, gn = problem.gradient(ridge.v)
        _record(trace, iteration, ridge.energy, gn, path.level, 'path')
        if gn <= params.path_tol:
            break
        if gn < best_gn * (1 - 1e-12):
            best_gn, since_best = gn, 0
        else:
            since_best += 1
            if since_best >= params.stagnation_sweeps:
                logger.warning(f"Path stage stagnated at grad_norm {gn:.3e} after {iteration} sweeps")
                break

        trial, step = _descent_step(problem, ridge, g, params, tau)
        if trial is None:
            logger.warning(f"No descent step found at sweep {iteration}, grad_norm {gn:.3e}")
            break
        tau = min(2 * step, 1.0)
        ridge = trial
        path = reparametrize(problem, path.with_node(peak, trial.v, trial.energy))
    return ridge, path, iteration, gn


def _fixed_point_stage(problem, ridge, params, trace, start):
    """Damped v <- (1 - tau) v + tau (Kv)^3 with ridge rescaling, kept while ||J'|| decreases"""
    tau = 1.0
    v = ridge.v
    _, gn = problem.gradient(v)
    iteration = start
    for iteration in range(start, start + params.fixed_point_iterations):
        if gn <= params.tol_grad:
            break
        image = problem.project(problem.fixed_point_image(v))
        step = tau
        accepted = False
        while step >= MIN_STEP:
            trial = problem.ridge(v * (1 - step) + image * step)
            if trial is not None:
                _, trial_gn = problem.gradient(trial.v)
                if trial_gn < gn:
                    ridge, v, gn = trial, trial.v, trial_gn
                    tau = min(2 * step, 1.0)
                    accepted = True
                    break
            step *= 0.5
        _record(trace, iteration, ridge.energy, gn, ridge.energy, 'fixed-point')
        if not accepted:
            break
    return ridge, iteration, gn


def newton_polish(op, u0, params):
    """Newton-Krylov on u = W^-1 h Pi[u^3]; None when the iterate collapses"""
    h = op.h_quarter ** 4
    symmetric = params.time_reversal_symmetric
    n_modes, n_points = u0.coeffs.shape
    size = n_modes * (n_points - 2)

    def pack(u):
        c = u.coeffs[:, 1:-1]
        return c.real.ravel() if symmetric else np.concatenate([c.real.ravel(), c.imag.ravel()])

    def unpack(x):
        coeffs = np.zeros((n_modes, n_points), dtype=complex)
        interior = x if symmetric else x[:size] + 1j * x[size:]
        coeffs[:, 1:-1] = np.reshape(interior, (n_modes, n_points - 2))
        return u0.with_coeffs(coeffs)

    def residual(x):
        u = unpack(x)
        return pack(u - solve_W(op, pointwise_cube(u, restrict=True).multiply_space(h)))

    x0 = pack(u0)
    f_tol = 1e-3 * params.tol_grad * max(float(np.abs(x0).max()), np.finfo(float).tiny)
    try:
        x = newton_krylov(residual, x0, method='lgmres', f_tol=f_tol, maxiter=params.newton_iterations)
    except NoConvergence as e:
        x = e.args[0]
        logger.warning(f"Newton-Krylov polish stopped after {params.newton_iterations} iterations")
    u = unpack(x)
    if l2_norm(u) < 0.5 * l2_norm(u0):
        logger.warning("Newton-Krylov polish collapsed towards zero; result discarded")
        return None
    return u


def mountain_pass_search(op, anchor, params, trace=None, problem=None, anchor_k=None):
    """Path deformation, fixed-point refinement and Newton polish from one anchor"""
    problem = problem or DualProblem.build(op, params.oversampling, params.time_reversal_symmetric)
    start = problem.project(anchor)
    ridge = problem.ridge(start)
    if ridge is None:
        raise ConfigurationError("Anchor has <Kv, v> <= 0; it does not start a mountain-pass path")
    path = initial_path(problem, start, params.path_nodes)
    logger.info(f"Mountain-pass path of {len(path.nodes)} nodes from anchor, level {path.level:.6g}")

    ridge, path, iteration, gn = _path_stage(problem, path, ridge, params, trace)
    logger.info(f"Path deformed to level {path.level:.6g} after {iteration} sweeps")
    stage = 'path'
    if gn > params.tol_grad:
        ridge, iteration, gn = _fixed_point_stage(problem, ridge, params, trace, iteration + 1)
        stage = 'fixed-point'
    v = ridge.v

    if params.newton_polish:
        u = newton_polish(op, problem.primal_from_dual(v), params)
        if u is not None:
            candidate = problem.dual_from_primal(u)
            _, candidate_gn = problem.gradient(candidate)
            if candidate_gn < gn:
                v, gn = candidate, candidate_gn
                stage = 'newton'
            else:
                logger.warning(f"Newton polish did not improve grad_norm ({candidate_gn:.3e} >= {gn:.3e})")

    state = _finish(problem, v, iteration, stage, params, anchor_k)
    _record(trace, iteration + 1, state.energy, state.grad_norm, path.level, stage)
    if state.converged:
        logger.info(f"Converged at J = {state.energy:.10g} (grad_norm {state.grad_norm:.3e}, stage {stage})")
    else:
        logger.warning(
            f"Not converged: grad_norm {state.grad_norm:.3e}, identity defect {state.identity_defect:.3e}"
        )
    return state, path


def anchor_candidates(problem, params, margins=None):
    """Positive directions of K from eigenvectors next to omega^2 k^2, ranked by ridge energy"""
    op = problem.op
    margins = margins or {}
    bases = {}
    for k in op.lattice.modes:
        fk = op[k]
        pair = band_eigenpair(fk, op.V, positive_side(fk))
        if pair is None:
            continue
        profile = np.zeros(op.grid.n_points)
        profile[1:-1] = pair[1]
        weighted = fk.factor * fk.apply(profile[1:-1])
        values = np.zeros(op.grid.n_points)
        values[1:-1] = weighted / op.h_quarter[1:-1]
        base = problem.project(_single_mode(problem, k, values))
        norm = l2_norm(base)
        if norm > 0:
            bases[k] = base / norm

    rng = np.random.default_rng(params.seed)
    anchors = []
    for k, base in bases.items():
        v = base
        for other, extra in bases.items():
            if other != k:
                v = v + extra * (params.perturbation * rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0]))
        ridge = problem.ridge(v)
        if ridge is None:
            continue
        anchors.append(Anchor(k, ridge.direction * ridge.anchor_scale, ridge.energy, margins.get(k, 0.0)))
    anchors.sort(key=lambda a: (a.energy, -a.margin))
    return anchors


def _single_mode(problem, k, values):
    return TimeFourierField.from_modes(problem.grid, problem.lattice, {k: values})


def find_anchor(op, params=None, margins=None):
    params = params or SolverParams()
    problem = DualProblem.build(op, params.oversampling, params.time_reversal_symmetric)
    anchors = anchor_candidates(problem, params, margins)
    if not anchors:
        raise ConfigurationError(
            "No direction with <Kv, v> > 0 among the active frequencies; "
            "the dual method does not apply on this discretization"
        )
    return anchors[0].v


def select_ground_state(states):
    """Lowest-energy converged state; ties broken by norm, then first supported frequency"""
    pool = [s for s in states if s.converged and s.energy > 0] or [s for s in states if s.energy > 0]
    if not pool:
        return None

    def key(state):
        ks = support(state.v)
        return (float(f"{state.energy:.10g}"), state.norm, ks[0] if ks else 0)

    return min(pool, key=key)


def mountain_pass_lower_bound(problem, k_norm):
    """mu_min / (4 ||K||^2): a floor for the energy of every nonzero critical point"""
    if not k_norm > 0:
        return float('inf')
    mu_min = float(problem.grid.weights.min()) / problem.n_samples
    return mu_min / (4 * k_norm ** 2)


@dataclass(frozen=True, eq=False)
class DualResult:
    state: DualState
    candidates: list
    path: MountainPassPath
    problem: DualProblem
    lower_bound: float
    norm_K: float
    trace: list = field(default_factory=list)

    @property
    def primal(self):
        return self.problem.primal_from_dual(self.state.v)

    @property
    def nehari_quotient(self):
        a, b, _ = self.problem.forms(self.state.v)
        return b / a ** 1.5 if a > 0 else float('nan')

    @property
    def minimal_period(self):
        return minimal_period(self.primal)

    @property
    def support(self):
        return support(self.primal)


def solve_dual(op, params=None, margins=None, trace=None):
    """Mountain-pass search from the best anchors and ground-state selection"""
    params = params or SolverParams()
    trace = [] if trace is None else trace
    problem = DualProblem.build(op, params.oversampling, params.time_reversal_symmetric)
    anchors = anchor_candidates(problem, params, margins)
    if not anchors:
        raise ConfigurationError(
            "No direction with <Kv, v> > 0 among the active frequencies; "
            "the dual method does not apply on this discretization"
        )
    logger.info(f"{len(anchors)} anchor(s) available, searching from {min(params.anchor_count, len(anchors))}")
    results = []
    for anchor in anchors[:params.anchor_count]:
        results.append(mountain_pass_search(op, anchor.v, params, trace, problem, anchor.k))
    states = [state for state, _ in results]
    ground = select_ground_state(states) or min(states, key=lambda s: s.grad_norm)
    path = results[states.index(ground)][1]
    k_norm = norm_K(op)
    lower = mountain_pass_lower_bound(problem, k_norm)
    if ground.energy < lower:
        logger.warning(f"Energy {ground.energy:.6g} is below the lower bound {lower:.6g}")
    return DualResult(ground, states, path, problem, lower, k_norm, trace)


def sublattice_solve(op, m, params=None, margins=None, trace=None):
    """Search restricted to frequencies divisible by m (T/(2m)-antiperiodic solutions)"""
    restricted = op.restricted(m)
    logger.info(f"Sublattice m={m}: active frequencies {list(restricted.lattice.modes)}")
    return solve_dual(restricted, params, margins, trace)


def negate_h_transform(weight):
    """(h, W) -> (-h, -W); applying it twice gives back the input"""
    if not isinstance(weight, NonlinearWeight):
        raise UsageError("negate_h_transform expects a NonlinearWeight")
    return NonlinearWeight(
        weight.h_values,
        sign=-weight.sign,
        operator_sign=-weight.operator_sign,
        h_per=weight.h_per,
        h_loc=weight.h_loc,
    )
