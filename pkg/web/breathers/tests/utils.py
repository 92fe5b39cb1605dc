import copy
import json
import math
from pathlib import Path

SMALL_CONFIG = {
    'material': {
        'T': 2 * math.pi,
        'c': 2.0,
        'weight': {'kind': 'step-thm12', 'theta': 0.25, 'X': 1.0},
        'nu': {'kind': 'triangular-nu'},
        'g1': {'kind': 'cosabs-g1', 'profile': {'kind': 'constant', 'value': 0.2}},
        'h': {'periodic': {'kind': 'constant', 'value': 1.0}, 'sign': 1},
        'polarization': 1,
    },
    'discretization': {
        'x_min': -1.875,
        'x_max': 2.125,
        'n_points': 161,
        'k_max': 3,
    },
    'solver': {'anchor_count': 1},
    'output': {'n_x': 41, 'n_phase': 16},
}


def small_config(**sections):
    """Two-piece medium on four cells; sections replace or extend the top-level blocks"""
    data = copy.deepcopy(SMALL_CONFIG)
    for name, block in sections.items():
        data[name] = {**data.get(name, {}), **block}
    return data


def write_config(directory, data, name='config.json'):
    path = Path(directory) / name
    path.write_text(json.dumps(data))
    return path
