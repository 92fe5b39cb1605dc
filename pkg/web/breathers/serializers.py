import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from rest_framework import serializers

from .dual import SolverParams
from .exceptions import ConfigurationError
from .fields import FrequencyLattice, SpaceGrid
from .materials import (
    build_kernels,
    build_nonlinear_weight,
    step_weight_from_pieces,
    step_weight_thm12,
    step_weight_thm13,
)

logger = logging.getLogger(__name__)

WEIGHT_KINDS = ['step-thm12', 'halfspace-thm13', 'steps']
PROFILE_KINDS = ['constant', 'gaussian', 'sech', 'steps']
OUTPUT_FILES = ['solution', 'wave', 'fields', 'plotdata', 'residuals', 'report', 'trace']


def _odd(value, label):
    if value < 1 or value % 2 == 0:
        raise serializers.ValidationError(f"{label} must be a positive odd integer")
    return value


class ProfileSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=PROFILE_KINDS, default='constant')
    value = serializers.FloatField(required=False)
    amplitude = serializers.FloatField(required=False)
    center = serializers.FloatField(required=False)
    width = serializers.FloatField(required=False)
    origin = serializers.FloatField(required=False)
    pieces = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2),
        required=False,
    )

    def validate_width(self, value):
        if value <= 0:
            raise serializers.ValidationError("Profile width must be greater than zero")
        return value

    def validate(self, attrs):
        if attrs['kind'] == 'steps':
            pieces = attrs.get('pieces')
            if not pieces:
                raise serializers.ValidationError("A steps profile needs pieces [[length, value], ...]")
            if any(length <= 0 for length, _ in pieces):
                raise serializers.ValidationError("Profile piece lengths must be greater than zero")
        return attrs


class WeightSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=WEIGHT_KINDS)
    theta = serializers.FloatField(required=False)
    X = serializers.FloatField(required=False)
    orders = serializers.ListField(child=serializers.IntegerField(), min_length=2, max_length=2, required=False)
    theta_minus = serializers.FloatField(required=False)
    X_minus = serializers.FloatField(required=False)
    theta_plus = serializers.FloatField(required=False)
    X_plus = serializers.FloatField(required=False)
    pieces = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2),
        required=False,
    )

    def validate_orders(self, value):
        for order in value:
            _odd(order, "Step order")
        return value

    def validate(self, attrs):
        required = {
            'step-thm12': ['theta', 'X'],
            'halfspace-thm13': ['theta_minus', 'X_minus', 'theta_plus', 'X_plus'],
            'steps': ['pieces'],
        }[attrs['kind']]
        missing = [name for name in required if name not in attrs]
        if missing:
            raise serializers.ValidationError(f"Weight kind '{attrs['kind']}' needs {missing}")
        if attrs['kind'] == 'step-thm12':
            theta = attrs['theta']
            orders = attrs.get('orders', [1, 1])
            if not 0 < theta < 1:
                raise serializers.ValidationError("theta must lie in (0, 1)")
            if theta == 0.5 and orders[0] == orders[1]:
                raise serializers.ValidationError(
                    "theta = 1/2 makes V constant and closes every gap; pick theta != 1/2 or unequal orders"
                )
        return attrs


class KernelSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=['triangular-nu', 'cosabs-g1', 'tabulated', 'none'])
    samples = serializers.ListField(child=serializers.FloatField(), required=False, min_length=3)
    span_periods = serializers.IntegerField(required=False, min_value=1)
    profile = ProfileSerializer(required=False)

    def validate(self, attrs):
        if attrs['kind'] == 'tabulated' and 'samples' not in attrs:
            raise serializers.ValidationError("A tabulated kernel needs samples")
        return attrs


class NonlinearitySerializer(serializers.Serializer):
    periodic = ProfileSerializer(required=False)
    localized = ProfileSerializer(required=False)
    sign = serializers.ChoiceField(choices=[1, -1], default=1)

    def validate(self, attrs):
        if 'periodic' not in attrs and 'localized' not in attrs:
            raise serializers.ValidationError("h needs a periodic or a localized profile")
        return attrs


class MaterialSerializer(serializers.Serializer):
    T = serializers.FloatField()
    c = serializers.FloatField()
    weight = WeightSerializer()
    nu = KernelSerializer()
    g1 = KernelSerializer(required=False)
    h = NonlinearitySerializer()
    polarization = serializers.ChoiceField(choices=[1, 2], default=1)
    beta = serializers.FloatField(default=0.5)

    def validate_T(self, value):
        if value <= 0:
            raise serializers.ValidationError("Period T must be greater than zero")
        return value

    def validate_c(self, value):
        if value <= 0:
            raise serializers.ValidationError("Speed c must be greater than zero")
        return value

    def validate_nu(self, value):
        if value['kind'] not in ('triangular-nu', 'tabulated'):
            raise serializers.ValidationError("nu must be 'triangular-nu' or 'tabulated'")
        return value

    def validate_g1(self, value):
        if value['kind'] not in ('cosabs-g1', 'tabulated', 'none'):
            raise serializers.ValidationError("g1 must be 'cosabs-g1', 'tabulated' or 'none'")
        return value

    def validate(self, attrs):
        try:
            build_step_weight(attrs)
        except ConfigurationError as e:
            raise serializers.ValidationError({'weight': str(e)})
        return attrs


class DiscretizationSerializer(serializers.Serializer):
    x_min = serializers.FloatField()
    x_max = serializers.FloatField()
    n_points = serializers.IntegerField(min_value=3)
    k_max = serializers.IntegerField()
    sublattice_m = serializers.IntegerField(default=1)
    oversampling = serializers.IntegerField(default=32, min_value=4)
    band_resolution = serializers.IntegerField(default=4000, min_value=100)

    def validate_k_max(self, value):
        return _odd(value, "k_max")

    def validate_sublattice_m(self, value):
        return _odd(value, "sublattice_m")

    def validate(self, attrs):
        if attrs['x_min'] >= attrs['x_max']:
            raise serializers.ValidationError("x_min must be smaller than x_max")
        if attrs['sublattice_m'] > attrs['k_max']:
            raise serializers.ValidationError("sublattice_m cannot exceed k_max")
        return attrs


class SolverSerializer(serializers.Serializer):
    tol_grad = serializers.FloatField(default=SolverParams.tol_grad, min_value=0)
    tol_id = serializers.FloatField(default=SolverParams.tol_id, min_value=0)
    path_nodes = serializers.IntegerField(default=SolverParams.path_nodes, min_value=3)
    path_tol = serializers.FloatField(default=SolverParams.path_tol, min_value=0)
    max_iterations = serializers.IntegerField(default=SolverParams.max_iterations, min_value=1)
    stagnation_sweeps = serializers.IntegerField(default=SolverParams.stagnation_sweeps, min_value=1)
    fixed_point_iterations = serializers.IntegerField(default=SolverParams.fixed_point_iterations, min_value=0)
    newton_polish = serializers.BooleanField(default=SolverParams.newton_polish)
    newton_iterations = serializers.IntegerField(default=SolverParams.newton_iterations, min_value=1)
    time_reversal_symmetric = serializers.BooleanField(default=SolverParams.time_reversal_symmetric)
    anchor_count = serializers.IntegerField(default=SolverParams.anchor_count, min_value=1)
    perturbation = serializers.FloatField(default=SolverParams.perturbation, min_value=0)
    seed = serializers.IntegerField(default=SolverParams.seed, min_value=0)
    residual_tol = serializers.FloatField(default=1e-6, min_value=0)


class OutputSerializer(serializers.Serializer):
    directory = serializers.CharField(default='out')
    files = serializers.ListField(
        child=serializers.ChoiceField(choices=OUTPUT_FILES), default=lambda: list(OUTPUT_FILES)
    )
    n_x = serializers.IntegerField(default=201, min_value=2)
    n_phase = serializers.IntegerField(default=64, min_value=4)


class RunConfigSerializer(serializers.Serializer):
    material = MaterialSerializer()
    discretization = DiscretizationSerializer()
    solver = SolverSerializer(default=dict)
    output = OutputSerializer(default=dict)

    def validate(self, attrs):
        material = attrs['material']
        disc = attrs['discretization']
        grid = SpaceGrid(disc['x_min'], disc['x_max'], disc['n_points'])
        V = build_step_weight(material)
        misplaced = [x for x in V.discontinuities(grid.x_min, grid.x_max) if grid.node_index(x) is None]
        if misplaced:
            raise serializers.ValidationError({
                'discretization': f"Discontinuities of V at {misplaced[:5]} do not fall on grid nodes; "
                                  f"choose x_min and n_points so that dx divides the piece lengths"
            })
        try:
            h = build_nonlinear_weight(material['h'], grid.nodes)
        except ConfigurationError as e:
            raise serializers.ValidationError({'material': str(e)})
        if h.sign == -1:
            logger.info("Negative nonlinearity requested; the solver works on (-h, -W)")
        return attrs


def build_step_weight(material):
    spec = material['weight']
    T = material['T']
    c = material['c']
    if spec['kind'] == 'step-thm12':
        return step_weight_thm12(T, c, spec['theta'], spec['X'], tuple(spec.get('orders', (1, 1))))
    if spec['kind'] == 'halfspace-thm13':
        return step_weight_thm13(T, c, spec['theta_minus'], spec['X_minus'], spec['theta_plus'], spec['X_plus'])
    return step_weight_from_pieces(spec['pieces'], c)


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated run configuration and the objects built from it"""
    data: dict
    source: str = ''
    overrides: dict = field(default_factory=dict)

    @property
    def material(self):
        return self.data['material']

    @property
    def discretization(self):
        return self.data['discretization']

    @property
    def output(self):
        return self.data['output']

    @property
    def polarization(self):
        return int(self.material['polarization'])

    @cached_property
    def grid(self):
        d = self.discretization
        return SpaceGrid(d['x_min'], d['x_max'], d['n_points'])

    @cached_property
    def step_weight(self):
        return build_step_weight(self.material)

    @cached_property
    def V(self):
        return self.step_weight.sample(self.grid)

    @cached_property
    def weight(self):
        return build_nonlinear_weight(self.material['h'], self.grid.nodes)

    @property
    def k_max(self):
        return self.discretization['k_max']

    @property
    def sublattice_m(self):
        return self.discretization['sublattice_m']

    @cached_property
    def kernels(self):
        return build_kernels(
            self.material['T'], self.material['nu'], self.material.get('g1'), self.grid.nodes, 3 * self.k_max
        )

    def lattice(self):
        kernels = self.kernels
        return FrequencyLattice.odd(self.material['T'], self.k_max, self.sublattice_m, support=kernels.is_supported)

    def solver_params(self):
        return SolverParams.from_dict({**self.data['solver'], 'oversampling': self.discretization['oversampling']})

    def with_discretization(self, **changes):
        """Copy with discretization entries replaced (refinement, domain doubling, sublattice)"""
        data = json.loads(json.dumps(self.data))
        data['discretization'].update(changes)
        return RunConfig(data, self.source, {**self.overrides, **changes})

    def to_json(self):
        return json.dumps(self.data, sort_keys=True, separators=(',', ':'))


def validate_config(data):
    serializer = RunConfigSerializer(data=data)
    serializer.is_valid(raise_exception=True)
    return serializer


def load_config(path):
    """Read and validate a JSON run configuration"""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"Config file {path} does not exist")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file {path} is not valid JSON: {str(e)}")
    serializer = validate_config(data)
    config = RunConfig(json.loads(json.dumps(serializer.data)), str(path))
    logger.info(f"Loaded config {path} (polarization {config.polarization}, k_max {config.k_max})")
    return config


def lattice_extent(config):
    """Largest lambda the band scan must cover: omega^2 (3 k_max)^2 with headroom"""
    omega = 2 * np.pi / config.material['T']
    return 1.2 * (omega * 3 * config.k_max) ** 2
