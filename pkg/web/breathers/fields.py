"""Space grid, odd-frequency lattice and space-time Fourier fields.

A real field w(x, t) with T/2-antiperiodic time dependence is stored through
its positive odd Fourier coefficients; the negative ones follow by
conjugation, so reality holds by construction.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property, reduce

import numpy as np

from .exceptions import ConfigurationError, UsageError

logger = logging.getLogger(__name__)

OMEGA_TOL = 1e-14


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform grid on [x_min, x_max] with trapezoid quadrature"""
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise UsageError(f"n_points must be an integer >= 3, got {self.n_points}")
        if not self.x_min < self.x_max:
            raise UsageError(f"x_min must be smaller than x_max, got [{self.x_min}, {self.x_max}]")
        object.__setattr__(self, 'n_points', int(self.n_points))

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def length(self):
        return self.x_max - self.x_min

    @property
    def n_interior(self):
        return self.n_points - 2

    @cached_property
    def nodes(self):
        x = np.linspace(self.x_min, self.x_max, self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self):
        w = np.full(self.n_points, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        w.flags.writeable = False
        return w

    def integrate(self, values):
        """Trapezoid rule along the first axis"""
        return self.weights @ np.asarray(values)

    def node_index(self, x, tol=1e-9):
        """Index of the node sitting at x, None when x falls between nodes"""
        pos = (x - self.x_min) / self.dx
        j = int(round(pos))
        if 0 <= j < self.n_points and abs(pos - j) <= tol:
            return j
        return None

    def refined(self, factor):
        return SpaceGrid(self.x_min, self.x_max, factor * (self.n_points - 1) + 1)

    def extended(self, left_nodes, right_nodes):
        dx = self.dx
        return SpaceGrid(
            self.x_min - left_nodes * dx,
            self.x_max + right_nodes * dx,
            self.n_points + left_nodes + right_nodes,
        )


def collocation_samples(k_max, sublattice_m=1, oversampling=32):
    """Smallest multiple of 4m that is at least oversampling*k_max + 1"""
    block = 4 * sublattice_m
    return block * math.ceil((oversampling * k_max + 1) / block)


@dataclass(frozen=True)
class FrequencyLattice:
    """Ordered set of positive odd frequencies, all divisible by sublattice_m"""
    period: float
    k_max: int
    modes: tuple
    sublattice_m: int = 1

    def __post_init__(self):
        if not self.period > 0:
            raise UsageError(f"Period must be positive, got {self.period}")
        if self.k_max < 1 or self.k_max % 2 == 0:
            raise UsageError(f"k_max must be a positive odd integer, got {self.k_max}")
        if self.sublattice_m < 1 or self.sublattice_m % 2 == 0:
            raise UsageError(f"sublattice_m must be a positive odd integer, got {self.sublattice_m}")
        modes = tuple(int(k) for k in self.modes)
        for k in modes:
            if k <= 0 or k % 2 == 0 or k > self.k_max or k % self.sublattice_m:
                raise UsageError(
                    f"Frequency {k} is not a positive odd multiple of {self.sublattice_m} below k_max={self.k_max}"
                )
        if list(modes) != sorted(set(modes)):
            raise UsageError("Frequencies must be strictly increasing")
        object.__setattr__(self, 'modes', modes)
        if abs(self.omega * self.period - 2 * math.pi) > OMEGA_TOL * 2 * math.pi:
            raise UsageError("omega*T deviates from 2*pi")

    @classmethod
    def odd(cls, period, k_max, sublattice_m=1, support=None):
        modes = tuple(
            k for k in range(sublattice_m, k_max + 1, 2 * sublattice_m)
            if support is None or support(k)
        )
        return cls(period, k_max, modes, sublattice_m)

    @property
    def omega(self):
        return 2 * math.pi / self.period

    @property
    def n_modes(self):
        return len(self.modes)

    @cached_property
    def _positions(self):
        return {k: i for i, k in enumerate(self.modes)}

    def __contains__(self, k):
        return k in self._positions

    def index(self, k):
        return self._positions[k]

    def extended(self, factor=3):
        """All odd multiples of m up to factor*k_max"""
        return FrequencyLattice.odd(self.period, factor * self.k_max, self.sublattice_m)

    def restricted(self, m):
        if m < 1 or m % 2 == 0:
            raise ConfigurationError(f"Sublattice index must be a positive odd integer, got {m}")
        modes = tuple(k for k in self.modes if k % m == 0)
        if not modes:
            raise ConfigurationError(
                f"No supported frequency is a multiple of m={m} up to k_max={self.k_max}"
            )
        return FrequencyLattice(self.period, self.k_max, modes, m)

    def collocation(self, n_samples):
        """Odd multiples of m below n_samples/2, in bijection with antiperiodic samples"""
        if n_samples % (4 * self.sublattice_m):
            raise UsageError(f"{n_samples} samples is not a multiple of 4m={4 * self.sublattice_m}")
        return FrequencyLattice.odd(self.period, n_samples // 2 - self.sublattice_m, self.sublattice_m)


@dataclass(frozen=True, eq=False)
class TimeFourierField:
    """Coefficients u_k(x) for k in lattice.modes, shape (n_modes, n_points)"""
    grid: SpaceGrid
    lattice: FrequencyLattice
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=complex)
        expected = (self.lattice.n_modes, self.grid.n_points)
        if coeffs.shape != expected:
            raise UsageError(f"Coefficient array has shape {coeffs.shape}, expected {expected}")
        coeffs.flags.writeable = False
        object.__setattr__(self, 'coeffs', coeffs)

    @classmethod
    def zeros(cls, grid, lattice):
        return cls(grid, lattice, np.zeros((lattice.n_modes, grid.n_points), dtype=complex))

    @classmethod
    def from_modes(cls, grid, lattice, modes):
        coeffs = np.zeros((lattice.n_modes, grid.n_points), dtype=complex)
        for k, values in modes.items():
            coeffs[lattice.index(k)] = values
        return cls(grid, lattice, coeffs)

    def mode(self, k):
        return self.coeffs[self.lattice.index(k)]

    def with_coeffs(self, coeffs):
        return TimeFourierField(self.grid, self.lattice, coeffs)

    def _check_compatible(self, other):
        if self.grid != other.grid:
            raise UsageError("Fields live on different space grids")
        if self.lattice != other.lattice:
            raise UsageError("Fields live on different frequency lattices")

    def __add__(self, other):
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.with_coeffs(self.coeffs / scalar)

    def multiply_space(self, profile):
        """Pointwise multiplication by a real function of x"""
        return self.with_coeffs(self.coeffs * np.asarray(profile)[None, :])

    def on_lattice(self, lattice):
        """Restrict or zero-pad onto another lattice with the same period"""
        if lattice == self.lattice:
            return self
        coeffs = np.zeros((lattice.n_modes, self.grid.n_points), dtype=complex)
        for i, k in enumerate(lattice.modes):
            if k in self.lattice:
                coeffs[i] = self.coeffs[self.lattice.index(k)]
        return TimeFourierField(self.grid, lattice, coeffs)

    def real_part(self):
        """Projection onto fields even in time (real coefficients)"""
        return self.with_coeffs(self.coeffs.real)

    def mode_norms(self):
        return np.sqrt(2.0 * (np.abs(self.coeffs) ** 2) @ self.grid.weights)

    def max_abs(self):
        return float(np.abs(self.coeffs).max()) if self.coeffs.size else 0.0


def _half_spectrum(f, n_samples):
    """rfft-layout spectrum of the samples of f, modes above n_samples/2 folded back"""
    spectrum = np.zeros((f.grid.n_points, n_samples // 2 + 1), dtype=complex)
    for k, c in zip(f.lattice.modes, f.coeffs):
        r = k % n_samples
        if r == 0 or 2 * r == n_samples:
            # self-conjugate bins only see the cosine part
            spectrum[:, r] += 2 * n_samples * c.real
        elif 2 * r < n_samples:
            spectrum[:, r] += n_samples * c
        else:
            spectrum[:, n_samples - r] += n_samples * np.conj(c)
    return spectrum


def evaluate_field(f, t_samples):
    """Samples w(x_i, t_j) at t_j = j*T/t_samples, shape (n_points, t_samples)"""
    if t_samples < 1:
        raise UsageError(f"t_samples must be >= 1, got {t_samples}")
    if f.lattice.n_modes == 0:
        return np.zeros((f.grid.n_points, t_samples))
    return np.fft.irfft(_half_spectrum(f, t_samples), n=t_samples, axis=1)


def analyze_samples(samples, grid, lattice):
    """Discrete Fourier coefficients of uniform time samples on the given lattice"""
    samples = np.asarray(samples, dtype=float)
    n_t = samples.shape[1]
    if n_t <= 2 * lattice.k_max:
        raise UsageError(f"{n_t} time samples cannot resolve frequencies up to {lattice.k_max}")
    if lattice.n_modes == 0:
        return TimeFourierField.zeros(grid, lattice)
    spectrum = np.fft.rfft(samples, axis=1) / n_t
    return TimeFourierField(grid, lattice, spectrum[:, list(lattice.modes)].T)


def integrate_samples(grid, samples):
    """Space-time integral of samples under the Haar-normalized time measure"""
    return float(grid.integrate(np.asarray(samples).mean(axis=1)))


def inner_product_l2(f, g, weight=None):
    f._check_compatible(g)
    w = f.grid.weights
    if weight is not None:
        weight = np.asarray(weight, dtype=float)
        if weight.shape != (f.grid.n_points,):
            raise UsageError(f"Weight has shape {weight.shape}, expected ({f.grid.n_points},)")
        w = w * weight
    return 2.0 * float(np.sum((f.coeffs * np.conj(g.coeffs)).real @ w))


def l2_norm(f, weight=None):
    return math.sqrt(max(inner_product_l2(f, f, weight), 0.0))


def pointwise_cube(f, k_buffer=None, restrict=False):
    """Exact coefficients of w^3 by alias-free time collocation"""
    k_max = f.lattice.k_max
    if k_buffer is None:
        k_buffer = 3 * k_max
    if k_buffer < 3 * k_max:
        raise UsageError(
            f"k_buffer={k_buffer} is below 3*k_max={3 * k_max}; the cube would alias"
        )
    samples = evaluate_field(f, 2 * k_buffer + 2)
    lattice = f.lattice if restrict else f.lattice.extended(3)
    return analyze_samples(samples ** 3, f.grid, lattice)


@dataclass(frozen=True, eq=False)
class MultiplierSymbol:
    """Fourier multiplier in time; negative k follow by conjugation"""
    values: dict

    @classmethod
    def from_function(cls, lattice, func):
        return cls({k: complex(func(k)) for k in lattice.modes})

    @classmethod
    def identity(cls, lattice):
        return cls.from_function(lattice, lambda k: 1.0)

    @classmethod
    def derivative(cls, lattice, order=1):
        omega = lattice.omega
        return cls.from_function(lattice, lambda k: (1j * omega * k) ** order)

    @classmethod
    def inverse_derivative(cls, lattice):
        omega = lattice.omega
        return cls.from_function(lattice, lambda k: 1.0 / (1j * omega * k))

    @classmethod
    def fractional(cls, lattice, s):
        omega = lattice.omega
        return cls.from_function(lattice, lambda k: abs(omega * k) ** s)

    def __mul__(self, other):
        keys = self.values.keys() & other.values.keys()
        return MultiplierSymbol({k: self.values[k] * other.values[k] for k in sorted(keys)})


def apply_multiplier(f, m):
    missing = [k for k in f.lattice.modes if k not in m.values]
    if missing:
        raise ConfigurationError(f"Multiplier symbol is undefined for frequencies {missing}")
    factors = np.array([m.values[k] for k in f.lattice.modes], dtype=complex)
    return f.with_coeffs(f.coeffs * factors[:, None])


def support(f, rel_tol=1e-8):
    norms = f.mode_norms()
    if norms.size == 0 or norms.max() == 0.0:
        return ()
    return tuple(k for k, n in zip(f.lattice.modes, norms) if n > rel_tol * norms.max())


def minimal_period(f, rel_tol=1e-8):
    """T/g with g the gcd of the supported frequencies"""
    ks = support(f, rel_tol)
    if not ks:
        return f.lattice.period
    return f.lattice.period / reduce(math.gcd, ks)


def tail_ratio(f):
    """Norm of the highest stored mode relative to the full norm"""
    total = l2_norm(f)
    if total == 0.0:
        return 0.0
    return float(f.mode_norms()[-1] / total)


def decay_rate(f):
    """Log-log decay exponent of the mode norms, nan with fewer than two live modes"""
    norms = f.mode_norms()
    if norms.size == 0:
        return float('nan')
    keep = norms > 1e-14 * norms.max() if norms.max() > 0 else np.zeros_like(norms, dtype=bool)
    if keep.sum() < 2:
        return float('nan')
    ks = np.asarray(f.lattice.modes, dtype=float)[keep]
    slope = np.polyfit(np.log(ks), np.log(norms[keep]), 1)[0]
    return float(-slope)


def inner_mass_fraction(f):
    """Share of the L2 mass inside the inner half of the domain"""
    density = (np.abs(f.coeffs) ** 2).sum(axis=0)
    total = f.grid.integrate(density)
    if total == 0.0:
        return 1.0
    x = f.grid.nodes
    quarter = 0.25 * f.grid.length
    inner = (x >= f.grid.x_min + quarter) & (x <= f.grid.x_max - quarter)
    return float(f.grid.integrate(np.where(inner, density, 0.0)) / total)
