"""Frequency-diagonal discretization of the effective operator W = W0 + W1 and of
K = h^(1/4) W^-1 h^(1/4) Pi.

For odd k the operator acts on the coefficient u_k(x) as s_k * A_k with
A_k = -D2 - omega^2 k^2 V - omega^2 k^2 G_hat_k, s_k = 1/(omega^2 k^2 N_hat_k),
homogeneous Dirichlet conditions at both walls.
"""
import atexit
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from scipy import sparse
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs, eigsh, onenormest, splu
from scipy.sparse.linalg import norm as sparse_norm

from .exceptions import ConfigurationError, SingularOperatorError, UsageError
from .fields import TimeFourierField, inner_product_l2

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e14
DENSE_LIMIT = 4000
ARPACK_MAXITER = 500

# Thread pool for per-frequency maps
_executor = None
_executor_lock = threading.Lock()
_worker = threading.local()


def thread_count():
    try:
        return settings.BREATHER_THREADS
    except (ImproperlyConfigured, AttributeError):
        return max(1, int(os.getenv('BREATHER_THREADS', str(os.cpu_count() or 1))))


def get_executor():
    global _executor
    with _executor_lock:
        if _executor is None:
            _executor = ThreadPoolExecutor(max_workers=thread_count())
    return _executor


def _shutdown_executor():
    global _executor
    with _executor_lock:
        if _executor is not None:
            _executor.shutdown(wait=False)
            _executor = None


atexit.register(_shutdown_executor)


def _in_worker(func):
    def call(item):
        _worker.active = True
        try:
            return func(item)
        finally:
            _worker.active = False
    return call


def parallel_map(func, items):
    """Map over the shared pool; calls made from inside a worker run inline"""
    items = list(items)
    if len(items) <= 1 or thread_count() == 1 or getattr(_worker, 'active', False):
        return [func(item) for item in items]
    return list(get_executor().map(_in_worker(func), items))


@dataclass(frozen=True, eq=False)
class FrequencyOperator:
    """A_k on interior nodes, its symbol factor and a cached LU factorization"""
    k: int
    omega: float
    n_hat: float
    dx: float
    diag0: np.ndarray
    g_term: np.ndarray
    orientation: int = 1
    lu: object = None
    condition: float = float('nan')

    @property
    def lam(self):
        return (self.omega * self.k) ** 2

    @property
    def diag(self):
        return self.diag0 - self.g_term

    @property
    def size(self):
        return len(self.diag0)

    @property
    def scale(self):
        if self.n_hat == 0:
            raise ConfigurationError(f"N_hat vanishes at k={self.k}; the frequency is outside the admissible support")
        return 1.0 / (self.lam * self.n_hat)

    @property
    def factor(self):
        """o * s_k, the scalar multiplying A_k"""
        return self.orientation * self.scale

    def matrix(self, memory=True):
        off = np.full(self.size - 1, -1.0 / self.dx ** 2)
        diag = self.diag if memory else self.diag0
        return sparse.diags([off, diag, off], [-1, 0, 1], format='csc')

    @cached_property
    def _matrix(self):
        return self.matrix()

    def apply(self, x):
        return self._matrix @ x

    def solve(self, b):
        """A_k x = b with one step of iterative refinement"""
        if self.lu is None:
            raise UsageError(f"Operator for k={self.k} was not factorized")
        b = np.asarray(b)
        rhs = np.column_stack([b.real, b.imag]) if np.iscomplexobj(b) else b
        x = self.lu.solve(rhs)
        x = x + self.lu.solve(rhs - self._matrix @ x)
        if np.iscomplexobj(b):
            return x[:, 0] + 1j * x[:, 1]
        return x


def factorize(fk):
    A = fk.matrix()
    try:
        lu = splu(A)
    except RuntimeError as e:
        logger.error(f"Factorization failed for k={fk.k}: {str(e)}")
        raise SingularOperatorError(fk.k, float('inf'))
    inverse = LinearOperator(A.shape, matvec=lu.solve, rmatvec=lu.solve, dtype=float)
    condition = float(sparse_norm(A, 1) * onenormest(inverse))
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularOperatorError(fk.k, condition)
    return replace(fk, lu=lu, condition=condition)


def build_frequency_operator(k, grid, V, kernels, orientation=1, factorized=True):
    lam = (kernels.omega * k) ** 2
    dx = grid.dx
    fk = FrequencyOperator(
        k=k,
        omega=kernels.omega,
        n_hat=kernels.n(k),
        dx=dx,
        diag0=2.0 / dx ** 2 - lam * np.asarray(V)[1:-1],
        g_term=lam * kernels.g_hat(k)[1:-1],
        orientation=orientation,
    )
    return factorize(fk) if factorized else fk


@dataclass(frozen=True, eq=False)
class EffectiveOperator:
    grid: object
    lattice: object
    per_k: dict
    h_quarter: np.ndarray
    V: np.ndarray
    orientation: int = 1

    def __getitem__(self, k):
        return self.per_k[k]

    def check_field(self, u):
        if u.grid != self.grid:
            raise UsageError("Field and operator live on different space grids")
        if u.lattice != self.lattice:
            raise UsageError("Field and operator live on different frequency lattices")

    def restricted(self, m):
        """Operator on the sublattice of multiples of m, sharing the factorizations"""
        lattice = self.lattice.restricted(m)
        return replace(self, lattice=lattice, per_k={k: self.per_k[k] for k in lattice.modes})

    def conditions(self):
        return {k: fk.condition for k, fk in self.per_k.items()}


def assemble_operator(grid, lattice, V, kernels, weight):
    """Factorize A_k for every active k in parallel"""
    unsupported = [k for k in lattice.modes if not kernels.is_supported(k)]
    if unsupported:
        raise ConfigurationError(f"N_hat vanishes at active frequencies {unsupported}")
    orientation = weight.operator_sign
    operators = parallel_map(
        lambda k: build_frequency_operator(k, grid, V, kernels, orientation), lattice.modes
    )
    op = EffectiveOperator(
        grid=grid,
        lattice=lattice,
        per_k=dict(zip(lattice.modes, operators)),
        h_quarter=weight.quarter,
        V=np.asarray(V, dtype=float),
        orientation=orientation,
    )
    worst = max(op.conditions().values(), default=0.0)
    logger.info(f"Assembled {lattice.n_modes} frequency operator(s), worst condition {worst:.3e}")
    return op


def _per_mode(op, f, func):
    op.check_field(f)

    def row(item):
        i, k = item
        out = np.zeros(op.grid.n_points, dtype=complex)
        out[1:-1] = func(op.per_k[k], f.coeffs[i, 1:-1])
        return out

    rows = parallel_map(row, enumerate(op.lattice.modes))
    return f.with_coeffs(np.array(rows).reshape(f.coeffs.shape))


def apply_W(op, u):
    return _per_mode(op, u, lambda fk, x: fk.factor * fk.apply(x))


def apply_W0(op, u):
    return _per_mode(op, u, lambda fk, x: fk.factor * (fk.matrix(memory=False) @ x))


def apply_W1(op, u):
    return _per_mode(op, u, lambda fk, x: -fk.factor * fk.g_term * x)


def solve_W(op, f):
    return _per_mode(op, f, lambda fk, b: fk.solve(b) / fk.factor)


def apply_K(op, v):
    """h^(1/4) W^-1 h^(1/4) on the active set, embedded back on v's lattice"""
    if v.grid != op.grid:
        raise UsageError("Field and operator live on different space grids")
    restricted = v.on_lattice(op.lattice).multiply_space(op.h_quarter)
    return solve_W(op, restricted).multiply_space(op.h_quarter).on_lattice(v.lattice)


def _dominant(matvec, n, dense, symmetric, label):
    """Largest-magnitude eigenvalue through ARPACK, dense fallback on small problems"""
    if n < 8:
        return float(np.abs(np.linalg.eigvalsh(dense()) if symmetric else np.linalg.eigvals(dense())).max())
    operator = LinearOperator((n, n), matvec=lambda x: matvec(np.ravel(x)), dtype=float)
    solver = eigsh if symmetric else eigs
    try:
        values = solver(operator, k=1, which='LM', v0=np.ones(n), maxiter=ARPACK_MAXITER, return_eigenvectors=False)
        return float(np.abs(values).max())
    except ArpackNoConvergence as e:
        if len(e.eigenvalues):
            estimate = float(np.abs(e.eigenvalues).max())
        else:
            x = np.ones(n)
            estimate = float(abs(x @ matvec(x)) / (x @ x))
        logger.warning(f"ARPACK did not converge for {label}; last estimate {estimate:.6g}")
        return estimate


def estimate_W1_norm(op, method='arnoldi'):
    """Spectral radius of W0^-1 W1, maximized over the active frequencies"""
    def radius(fk):
        if not np.any(fk.g_term):
            return 0.0
        A0 = fk.matrix(memory=False)
        n = fk.size
        if method == 'dense':
            if n > DENSE_LIMIT:
                raise UsageError(f"Dense W1 estimate refused above {DENSE_LIMIT} interior nodes")
            return float(np.abs(np.linalg.eigvals(np.linalg.solve(A0.toarray(), np.diag(fk.g_term)))).max())
        lu0 = splu(A0)
        return _dominant(
            lambda x: lu0.solve(fk.g_term * x),
            n,
            lambda: np.linalg.solve(A0.toarray(), np.diag(fk.g_term)),
            symmetric=False,
            label=f"W0^-1 W1 at k={fk.k}",
        )

    if not any(np.any(fk.g_term) for fk in op.per_k.values()):
        return 0.0
    return max(parallel_map(radius, op.per_k.values()))


def w1_form_norm(op):
    """|W1| measured in the form-domain norm |W0|, via dense eigendecomposition of A_k0"""
    norms = []
    for fk in op.per_k.values():
        if fk.size > DENSE_LIMIT:
            raise UsageError(f"|W0| diagnostic refused above {DENSE_LIMIT} interior nodes")
        if not np.any(fk.g_term):
            norms.append(0.0)
            continue
        lam, Q = np.linalg.eigh(fk.matrix(memory=False).toarray())
        scale = 1.0 / np.sqrt(np.abs(lam))
        B = scale[:, None] * (Q.T @ (fk.g_term[:, None] * Q)) * scale[None, :]
        norms.append(float(np.abs(np.linalg.eigvalsh(B)).max()))
    return max(norms, default=0.0)


def norm_K(op):
    """Spectral norm of K under the discrete space-time inner product"""
    hq = op.h_quarter[1:-1]

    def block(fk):
        return _dominant(
            lambda x: hq * fk.solve(hq * x) / fk.factor,
            fk.size,
            lambda: hq[:, None] * np.linalg.inv(fk.matrix().toarray()) * hq[None, :] / fk.factor,
            symmetric=True,
            label=f"K at k={fk.k}",
        )

    return max(parallel_map(block, op.per_k.values()), default=0.0)


def band_eigenpair(fk, V, side):
    """Eigenpair of (-D2 - omega^2 k^2 G_hat) phi = lambda V phi nearest omega^2 k^2 from one side"""
    v = np.asarray(V)[1:-1]
    dx2 = fk.dx ** 2
    d = (2.0 / dx2 - fk.g_term) / v
    e = -1.0 / (dx2 * np.sqrt(v[:-1] * v[1:]))
    values = eigh_tridiagonal(d, e, eigvals_only=True)
    above = int(np.searchsorted(values, fk.lam, side='right'))
    i = above if side == 'above' else above - 1
    if not 0 <= i < len(values):
        return None
    lam, y = eigh_tridiagonal(d, e, select='i', select_range=(i, i))
    return float(lam[0]), y[:, 0] / np.sqrt(v)


def positive_side(fk):
    """Side of omega^2 k^2 where the quadratic form of W is positive"""
    return 'above' if fk.factor > 0 else 'below'


def sign_witnesses(op, k):
    """Single-mode v with <Kv, v> of either sign, from eigenvectors on both sides of omega^2 k^2"""
    fk = op[k]
    witnesses = {}
    for side in ('above', 'below'):
        pair = band_eigenpair(fk, op.V, side)
        if pair is None:
            continue
        lam, phi = pair
        profile = np.zeros(op.grid.n_points)
        profile[1:-1] = phi
        u = TimeFourierField.from_modes(op.grid, op.lattice, {k: profile})
        v = apply_W(op, u).multiply_space(1.0 / op.h_quarter)
        form = inner_product_l2(apply_K(op, v), v)
        witnesses['plus' if form > 0 else 'minus'] = {'v': v, 'lambda': lam, 'form': form, 'side': side}
    return witnesses
