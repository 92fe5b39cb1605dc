"""Band structure of L = -(1/V) d^2/dx^2 for step weights and gap certification."""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .exceptions import BandResolutionError, UsageError

logger = logging.getLogger(__name__)

BAND_TOL = 1e-12
EDGE_XTOL = 1e-10
MAX_REFINEMENTS = 3
DECAY_FACTOR = 1e3
DOUBLING_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MonodromyEvaluator:
    """Transfer matrices of -phi'' = lambda V phi across one period cell"""
    lengths: np.ndarray
    values: np.ndarray

    @classmethod
    def from_weight(cls, weight, side='plus'):
        lengths, values = weight.cell(side)
        return cls(lengths, values)

    @property
    def period(self):
        return float(np.sum(self.lengths))

    def matrices(self, lam):
        """Monodromy matrices, shape (len(lam), 2, 2)"""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if np.any(lam < 0):
            raise UsageError("lambda must be nonnegative; L is a nonnegative operator")
        out = np.broadcast_to(np.eye(2), (len(lam), 2, 2)).copy()
        for length, value in zip(self.lengths, self.values):
            s = np.sqrt(lam * value)
            phi = s * length
            c = np.cos(phi)
            piece = np.empty_like(out)
            piece[:, 0, 0] = c
            piece[:, 0, 1] = length * np.sinc(phi / np.pi)
            piece[:, 1, 0] = -s * np.sin(phi)
            piece[:, 1, 1] = c
            out = piece @ out
        return out

    def discriminant(self, lam):
        m = self.matrices(lam)
        return m[:, 0, 0] + m[:, 1, 1]

    def determinant(self, lam):
        return np.linalg.det(self.matrices(lam))


def discriminant(weight, lam, side='plus'):
    """Trace of the monodromy matrix; lambda lies in a band iff |value| <= 2"""
    values = MonodromyEvaluator.from_weight(weight, side).discriminant(lam)
    return float(values[0]) if np.ndim(lam) == 0 else values


@dataclass(frozen=True, eq=False)
class BandCertificate:
    bands: list
    lambda_max: float
    band_sets: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)
    gaps_at: dict = field(default_factory=dict)
    tilde_gaps_at: dict = field(default_factory=dict)
    point_spectrum: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    fitted_tilde: dict = field(default_factory=dict)

    def gap_windows(self):
        """Open gaps between consecutive bands below lambda_max"""
        windows = []
        lower = 0.0
        for lo, hi in self.bands:
            if lo > lower:
                windows.append((lower, lo))
            lower = hi
        if lower < self.lambda_max:
            windows.append((lower, self.lambda_max))
        return windows

    def uncertified(self, tilde=False):
        gaps = self.tilde_gaps_at if tilde else self.gaps_at
        return [k for k, gap in sorted(gaps.items()) if not gap['certified']]

    def margin(self, k):
        return self.gaps_at[k]['margin']

    def to_dict(self):
        return {
            'lambda_max': self.lambda_max,
            'bands': [list(b) for b in self.bands],
            'band_sets': {side: [list(b) for b in bands] for side, bands in self.band_sets.items()},
            'band_widths': band_widths(self.bands),
            'gaps_at': {str(k): v for k, v in self.gaps_at.items()},
            'tilde_gaps_at': {str(k): v for k, v in self.tilde_gaps_at.items()},
            'point_spectrum': list(self.point_spectrum),
            'fitted': self.fitted,
            'fitted_tilde': self.fitted_tilde,
        }


def _unresolved_windows(ev, lam, disc):
    inside = np.abs(disc) <= 2 + BAND_TOL
    mid = 0.5 * (lam[:-1] + lam[1:])
    mid_inside = np.abs(ev.discriminant(mid)) <= 2 + BAND_TOL
    same = inside[:-1] == inside[1:]
    hidden = same & (mid_inside != inside[:-1])
    crossed = ~inside[:-1] & ~inside[1:] & (np.sign(disc[:-1]) != np.sign(disc[1:]))
    idx = np.flatnonzero(hidden | crossed)
    return [(float(lam[i]), float(lam[i + 1])) for i in idx]


def _cell_bands(ev, lambda_max, resolution):
    for attempt in range(MAX_REFINEMENTS + 1):
        n = resolution * 2 ** attempt
        lam = np.linspace(0.0, math.sqrt(lambda_max), n + 1) ** 2
        disc = ev.discriminant(lam)
        unresolved = _unresolved_windows(ev, lam, disc)
        if not unresolved:
            break
        logger.info(f"Band scan at resolution {n} left {len(unresolved)} window(s) unresolved, refining")
    else:
        raise BandResolutionError(unresolved[0])

    inside = np.abs(disc) <= 2 + BAND_TOL
    bands = []
    start = 0.0 if inside[0] else None
    for i in np.flatnonzero(inside[:-1] != inside[1:]):
        outside = i + 1 if inside[i] else i
        target = 2.0 if disc[outside] > 0 else -2.0
        edge = brentq(lambda x: ev.discriminant(x)[0] - target, lam[i], lam[i + 1], xtol=EDGE_XTOL)
        if inside[i]:
            bands.append((start, edge))
            start = None
        else:
            start = edge
    if start is not None:
        bands.append((start, float(lambda_max)))
    return bands, (lam, disc)


def _merge(intervals):
    merged = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def compute_bands(weight, lambda_max, resolution=4000):
    """Bands of L below lambda_max; a half-space weight yields the union of both cells' bands"""
    if not lambda_max > 0:
        raise UsageError(f"lambda_max must be positive, got {lambda_max}")
    band_sets = {}
    samples = {}
    for side in weight.cells():
        ev = MonodromyEvaluator.from_weight(weight, side)
        band_sets[side], samples[side] = _cell_bands(ev, lambda_max, resolution)
    bands = _merge([b for bands in band_sets.values() for b in bands])
    logger.info(f"Located {len(bands)} band(s) below lambda = {lambda_max:.6g}")
    return BandCertificate(bands=bands, lambda_max=float(lambda_max), band_sets=band_sets, samples=samples)


def _locate(bc, lam_k):
    lower = 0.0
    for lo, hi in bc.bands:
        if lo <= lam_k <= hi:
            return None
        if lam_k < lo:
            return lower, lo
        lower = hi
    return lower, bc.lambda_max


def _fit_margins(margins):
    """delta for gamma = 1, plus a log-log fitted gamma capped at 1"""
    ks = sorted(k for k, m in margins.items() if m > 0)
    if not ks:
        return {'gamma': 1.0, 'delta': 0.0, 'slope': float('nan'), 'gamma_loglog': 1.0, 'delta_loglog': 0.0}
    delta = min(margins[k] / k for k in ks)
    if len(ks) >= 2:
        slope = float(np.polyfit(np.log(ks), np.log([margins[k] for k in ks]), 1)[0])
    else:
        slope = 1.0
    gamma_loglog = min(slope, 1.0)
    delta_loglog = min(margins[k] / k ** gamma_loglog for k in ks)
    return {
        'gamma': 1.0,
        'delta': float(delta),
        'slope': slope,
        'gamma_loglog': gamma_loglog,
        'delta_loglog': float(delta_loglog),
    }


def certify_gaps(bc, lattice, tilde=False):
    """Gap and margin of omega^2 k^2 for the active set, or for every odd k <= 3 k_max when tilde"""
    if tilde:
        ks = list(range(lattice.sublattice_m, 3 * lattice.k_max + 1, 2 * lattice.sublattice_m))
    else:
        ks = list(lattice.modes)
    omega2 = lattice.omega ** 2
    gaps = {}
    for k in ks:
        lam_k = omega2 * k * k
        located = _locate(bc, lam_k) if lam_k < bc.lambda_max else None
        if located is None:
            gaps[k] = {'lambda': lam_k, 'lower': None, 'upper': None, 'margin': 0.0, 'certified': False}
            continue
        lower, upper = located
        margin = min(lam_k - lower, upper - lam_k)
        for p in bc.point_spectrum:
            margin = min(margin, abs(lam_k - p))
        gaps[k] = {
            'lambda': lam_k,
            'lower': lower,
            'upper': upper,
            'margin': float(margin),
            'certified': bool(margin > 0),
        }
    fitted = _fit_margins({k: g['margin'] for k, g in gaps.items()})
    bad = [k for k, g in gaps.items() if not g['certified']]
    label = 'non-resonant' if tilde else 'active'
    if bad:
        logger.warning(f"Uncertified {label} frequencies: {bad}")
    else:
        logger.info(f"All {len(ks)} {label} frequencies certified, delta = {fitted['delta']:.4g}")
    if tilde:
        return replace(bc, tilde_gaps_at=gaps, fitted_tilde=fitted)
    return replace(bc, gaps_at=gaps, fitted=fitted)


def _dirichlet_matrix(V, dx):
    """Symmetric tridiagonal form of -(1/V) D2 after the substitution y = sqrt(V) phi"""
    v = np.asarray(V[1:-1], dtype=float)
    diag = 2.0 / (dx * dx * v)
    off = -1.0 / (dx * dx * np.sqrt(v[:-1] * v[1:]))
    return diag, off


def point_spectrum_estimate(V, grid, gap_windows):
    """Isolated eigenvalues inside the gap windows with eigenvectors localized away from the walls"""
    V = np.asarray(V, dtype=float)
    diag, off = _dirichlet_matrix(V, grid.dx)
    root_v = np.sqrt(V[1:-1])
    edge = max(3, grid.n_interior // 20)
    found = []
    for lo, hi in gap_windows:
        if not hi > lo:
            continue
        values, vectors = eigh_tridiagonal(diag, off, select='v', select_range=(lo, hi))
        for lam, y in zip(values, vectors.T):
            phi = np.abs(y / root_v)
            peak_at = int(phi.argmax())
            boundary = max(phi[:edge].max(), phi[-edge:].max())
            if edge <= peak_at < len(phi) - edge and phi[peak_at] >= DECAY_FACTOR * boundary:
                found.append(float(lam))
    if found:
        logger.info(f"Point spectrum candidates in gaps: {found}")
    return sorted(found)


def confirm_point_spectrum(weight, grid, eigenvalues, gap_windows):
    """Recompute on a domain doubled with the same spacing; each eigenvalue must move < 1e-6"""
    if not eigenvalues:
        return []
    pad = (grid.n_points - 1) // 2
    doubled = grid.extended(pad, pad)
    again = point_spectrum_estimate(weight.sample(doubled), doubled, gap_windows)
    checks = []
    for lam in eigenvalues:
        shift = min((abs(lam - other) for other in again), default=float('inf'))
        checks.append({'lambda': lam, 'shift': shift, 'confirmed': shift < DOUBLING_TOL})
    return checks


def band_widths(bands):
    """Width per band index, for the quadratic band-growth diagnostic"""
    return [{'index': i, 'lower': lo, 'upper': hi, 'width': hi - lo} for i, (lo, hi) in enumerate(bands)]
