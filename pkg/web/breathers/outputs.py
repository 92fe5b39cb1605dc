"""CSV and JSON artifacts, each stamped with the config hash and package versions."""
import hashlib
import json
import logging
from pathlib import Path

import django
import numpy as np
import rest_framework
import scipy
from django.core.serializers.json import DjangoJSONEncoder

from . import __version__
from .exceptions import ConfigurationError
from .fields import FrequencyLattice, SpaceGrid, TimeFourierField, evaluate_field

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


class ArrayJSONEncoder(DjangoJSONEncoder):
    """JSON encoder that also accepts numpy scalars and arrays"""

    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, complex):
            return [o.real, o.imag]
        return super().default(o)


def config_hash(data):
    """SHA-256 of the canonical sorted-key JSON of a validated config"""
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'), cls=ArrayJSONEncoder)
    return hashlib.sha256(canonical.encode()).hexdigest()


def versions():
    return {
        'breathers': __version__,
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'django': django.get_version(),
        'djangorestframework': rest_framework.VERSION,
    }


def provenance(config, **extra):
    return {'config_hash': config_hash(config.data), 'config_source': config.source, 'versions': versions(), **extra}


def _ensure_dir(out_dir):
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path, payload, meta):
    path = Path(path)
    path.write_text(json.dumps({'meta': meta, **payload}, indent=2, cls=ArrayJSONEncoder))
    logger.info(f"Wrote {path}")
    return path


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"Missing artifact {path}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Artifact {path} is not valid JSON: {str(e)}")


def _write_csv(path, columns, rows, meta):
    header = json.dumps(meta, cls=ArrayJSONEncoder) + '\n' + ','.join(columns)
    np.savetxt(path, rows, delimiter=',', header=header, fmt=FLOAT_FORMAT)
    logger.info(f"Wrote {path} ({len(rows)} rows)")
    return Path(path)


def _read_csv(path, columns):
    path = Path(path)
    try:
        with path.open() as handle:
            meta = json.loads(handle.readline().lstrip('#').strip())
            names = handle.readline().lstrip('#').strip().split(',')
    except FileNotFoundError:
        raise ConfigurationError(f"Missing artifact {path}")
    except json.JSONDecodeError:
        raise ConfigurationError(f"Artifact {path} has no metadata header")
    if names != columns:
        raise ConfigurationError(f"Artifact {path} has columns {names}, expected {columns}")
    rows = np.loadtxt(path, delimiter=',', comments='#', ndmin=2)
    return meta, rows


FIELD_COLUMNS = ['x', 'k', 're', 'im']


def write_coefficients(path, f, meta):
    """One row per (x, k): the complex coefficient of mode k at node x"""
    x = np.repeat(f.grid.nodes, f.lattice.n_modes)
    k = np.tile(np.asarray(f.lattice.modes, dtype=float), f.grid.n_points)
    c = f.coeffs.T.ravel()
    lattice_meta = {
        'period': f.lattice.period,
        'k_max': f.lattice.k_max,
        'sublattice_m': f.lattice.sublattice_m,
        'modes': list(f.lattice.modes),
        'x_min': f.grid.x_min,
        'x_max': f.grid.x_max,
        'n_points': f.grid.n_points,
    }
    return _write_csv(path, FIELD_COLUMNS, np.column_stack([x, k, c.real, c.imag]), {**meta, 'lattice': lattice_meta})


def read_coefficients(path):
    """(field, metadata) from a coefficient CSV"""
    meta, rows = _read_csv(path, FIELD_COLUMNS)
    try:
        info = meta['lattice']
        grid = SpaceGrid(info['x_min'], info['x_max'], info['n_points'])
        lattice = FrequencyLattice(info['period'], info['k_max'], tuple(info['modes']), info['sublattice_m'])
    except KeyError as e:
        raise ConfigurationError(f"Artifact {path} is missing lattice metadata {str(e)}")
    if rows.shape[0] != grid.n_points * lattice.n_modes:
        raise ConfigurationError(
            f"Artifact {path} holds {rows.shape[0]} rows, expected {grid.n_points * lattice.n_modes}"
        )
    ks = rows[:, 1].reshape(grid.n_points, lattice.n_modes)
    if not np.array_equal(ks[0], np.asarray(lattice.modes, dtype=float)):
        raise ConfigurationError(f"Artifact {path} frequency column does not match its lattice")
    coeffs = (rows[:, 2] + 1j * rows[:, 3]).reshape(grid.n_points, lattice.n_modes).T
    return TimeFourierField(grid, lattice, coeffs), meta


BAND_COLUMNS = ['side', 'index', 'lower', 'upper', 'width']


def write_bands(out_dir, bc, report, meta):
    out = _ensure_dir(out_dir)
    rows = []
    for side_index, (side, bands) in enumerate(sorted(bc.band_sets.items())):
        for i, (lo, hi) in enumerate(bands):
            rows.append([side_index, i, lo, hi, hi - lo])
    _write_csv(out / 'bands.csv', BAND_COLUMNS, np.array(rows).reshape(-1, 5), {**meta, 'sides': sorted(bc.band_sets)})
    write_json(out / 'bands.json', {'certificate': bc.to_dict(), **report}, meta)


EM_COLUMNS = ['x', 'phase', 'E_y', 'B_x', 'B_z', 'H_x', 'H_z', 'D_y']


def write_fields(path, fields, meta):
    xx, pp = np.meshgrid(fields.x, fields.phase, indexing='ij')
    columns = [xx.ravel(), pp.ravel()] + [fields.samples[name].ravel() for name in EM_COLUMNS[2:]]
    extra = {'c': fields.c, 'mu0': fields.mu0, 'eps0': fields.eps0, 'period': fields.lattice.period}
    return _write_csv(path, EM_COLUMNS, np.column_stack(columns), {**meta, **extra})


def write_plotdata(path, u, w, n_phase, meta):
    """Heatmap-ready samples of the primal profile u and the wave profile w"""
    xx, pp = np.meshgrid(u.grid.nodes, np.arange(n_phase) * u.lattice.period / n_phase, indexing='ij')
    rows = np.column_stack([
        xx.ravel(),
        pp.ravel(),
        evaluate_field(u, n_phase).ravel(),
        evaluate_field(w, n_phase).ravel(),
    ])
    return _write_csv(path, ['x', 'phase', 'u', 'w'], rows, meta)


def write_trace(path, trace, meta):
    path = Path(path)
    with path.open('w') as handle:
        handle.write(json.dumps({'meta': meta}, cls=ArrayJSONEncoder) + '\n')
        for entry in trace:
            handle.write(json.dumps(entry, cls=ArrayJSONEncoder) + '\n')
    logger.info(f"Wrote {path} ({len(trace)} entries)")
    return path


def read_trace(path):
    lines = Path(path).read_text().splitlines()
    return [json.loads(line) for line in lines[1:] if line.strip()]
