"""
Run configuration: one JSON document per batch run.

Physical SQUID quantities carry explicit units ({"value": 1e-13, "unit": "F"});
dimensionless groups are always derived from them, never read. Every
validation failure raises ConfigError naming the offending key.
"""

import copy
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from app.physics.constants import FLUX_QUANTUM

logger = logging.getLogger(__name__)

MODELS = ('duffing_pair', 'squid_pair', 'single_mode_test')
UNRAVELLINGS = ('qsd', 'jumps', 'lindblad_oracle')
FRAMES = ('bias', 'lab')

SQUID_UNITS = {
    'C': ('F',),
    'L': ('H',),
    'R': ('ohm',),
    'I_c': ('A',),
    'I_d': ('A',),
    'omega_d': ('rad/s',),
    'Phi_x': ('Phi0', 'Wb'),
}

DUFFING_DEFAULTS = {'beta': 1.0, 'g': 0.3, 'gamma': 0.125, 'mu': 0.2}
SINGLE_MODE_DEFAULTS = {
    'zeta': 0.1,
    'drive_amplitude': 0.0,
    'drive_frequency': 1.0,
    'kerr': 0.0,
    'damping_correction': True,
}
SQUID_EXTRAS = {'mu': 0.2, 'scale': {'a': 1.0, 'b': 1.0}}

CAPACITANCE_SWEEP = 'capacitance'
DEFAULT_OUTPUT_DIR = 'output'
MAX_SEED = 2 ** 64 - 1


class ConfigError(ValueError):
    """Invalid run configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class Branch:
    """Labelled initial condition (one plotted series)."""
    label: str
    initial_state: Tuple[complex, ...]


@dataclass(frozen=True)
class Sweep:
    """Parameter path and the values it takes."""
    path: str
    values: Tuple[float, ...]


@dataclass(frozen=True)
class EnsemblePoint:
    """
    One ensemble to execute: a branch at one sweep value.

    Attributes:
        label: Unique label, used for checkpoint keys and directory names
        series: Branch label
        sweep_parameter: Swept path (None without a sweep)
        sweep_value: Value at this point (None without a sweep)
        params: Model parameters with the sweep value applied
        initial_state: Coherent amplitude per mode
    """
    label: str
    series: str
    sweep_parameter: Optional[str]
    sweep_value: Optional[float]
    params: Dict[str, Any]
    initial_state: Tuple[complex, ...]


@dataclass
class RunConfig:
    """
    Validated run configuration.

    Attributes:
        name: Run name (output subdirectory)
        model: 'duffing_pair', 'squid_pair' or 'single_mode_test'
        unravelling: 'qsd', 'jumps' or 'lindblad_oracle'
        params: Model parameters (SQUID quantities keep their unit records)
        n_levels: Fock truncation per mode
        dt: Step in drive periods
        t_span: (start, end) in drive periods
        record_every: Steps between recorded points
        n_trajectories: Ensemble size per point
        seed: 64-bit run seed
        transient_fraction: Leading fraction of each trajectory excluded from means
        settle_tolerance: Relative settling tolerance
        frame: SQUID frame, 'bias' or 'lab'
        initial_state: Default coherent amplitudes per mode
        branches: Optional labelled initial conditions
        sweep: Optional parameter sweep
        keep_trajectories: Keep per-trajectory records after the ensemble finishes
        output_dir: Root output directory
        source: Raw document the config was parsed from
    """
    name: str
    model: str
    unravelling: str
    params: Dict[str, Any]
    n_levels: int
    dt: float
    t_span: Tuple[float, float]
    record_every: int
    n_trajectories: int
    seed: int
    transient_fraction: float = 0.25
    settle_tolerance: float = 0.01
    frame: str = 'bias'
    initial_state: Tuple[complex, ...] = ()
    branches: Tuple[Branch, ...] = ()
    sweep: Optional[Sweep] = None
    keep_trajectories: bool = True
    output_dir: str = DEFAULT_OUTPUT_DIR
    source: Dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def n_modes(self) -> int:
        return 1 if self.model == 'single_mode_test' else 2

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.name

    def fingerprint(self) -> str:
        """SHA-256 over everything that determines the numbers (not the output location)."""
        document = {k: v for k, v in self.source.items() if k not in ('output_dir', 'keep_trajectories')}
        document['seed'] = self.seed
        canonical = json.dumps(document, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def ensemble_points(self) -> List[EnsemblePoint]:
        """Expand branches x sweep values into ensembles, in execution order."""
        branches = self.branches or (Branch(self.name, self.initial_state),)
        values = self.sweep.values if self.sweep else (None,)
        points = []
        for branch in branches:
            for value in values:
                params = self.params if value is None else apply_sweep_value(self, self.sweep.path, value)
                if value is None:
                    label = branch.label
                else:
                    label = f"{branch.label}__{self.sweep.path}={sweep_value_text(value)}"
                points.append(EnsemblePoint(
                    label=_safe_label(label),
                    series=branch.label,
                    sweep_parameter=self.sweep.path if self.sweep else None,
                    sweep_value=value,
                    params=params,
                    initial_state=branch.initial_state,
                ))
        return points


def _safe_label(label: str) -> str:
    return ''.join(c if c.isalnum() or c in '._=-' else '_' for c in label)


def sweep_value_text(value: float) -> str:
    """Shortest text that round-trips to ``value`` ('1' rather than '1.0')."""
    text = repr(float(value))
    return text[:-2] if text.endswith('.0') else text


# ============================================================================
# Field parsers
# ============================================================================

def _require(document: Dict, key: str, path: str = '') -> Any:
    if key not in document:
        raise ConfigError(f"{path}{key}", "missing required key")
    return document[key]


def _as_int(value: Any, key: str, minimum: int = None, maximum: int = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(key, f"must be <= {maximum}, got {value}")
    return value


def _as_float(value: Any, key: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(key, f"must be finite, got {value}")
    if positive and not value > 0:
        raise ConfigError(key, f"must be positive, got {value}")
    return value


def _as_choice(value: Any, key: str, choices: Tuple[str, ...]) -> str:
    if value not in choices:
        raise ConfigError(key, f"must be one of {', '.join(choices)}, got {value!r}")
    return value


def _as_amplitudes(value: Any, key: str, n_modes: int) -> Tuple[complex, ...]:
    if not isinstance(value, list) or len(value) != n_modes:
        raise ConfigError(key, f"expected a list of {n_modes} amplitude(s), got {value!r}")
    amplitudes = []
    for i, entry in enumerate(value):
        if isinstance(entry, list) and len(entry) == 2:
            amplitudes.append(complex(_as_float(entry[0], f"{key}[{i}]"), _as_float(entry[1], f"{key}[{i}]")))
        else:
            amplitudes.append(complex(_as_float(entry, f"{key}[{i}]"), 0.0))
    return tuple(amplitudes)


def parse_quantity(value: Any, key: str, units: Tuple[str, ...]) -> float:
    """
    Read a {"value": x, "unit": u} record and return the SI value.

    Flux given in Phi0 is converted to webers.

    Raises:
        ConfigError: On a bare number, a missing field or a wrong unit
    """
    if not isinstance(value, dict):
        raise ConfigError(key, f"expected {{\"value\": ..., \"unit\": \"{units[0]}\"}}, got {value!r}")
    number = _as_float(_require(value, 'value', f"{key}."), f"{key}.value")
    unit = _require(value, 'unit', f"{key}.")
    if unit not in units:
        raise ConfigError(f"{key}.unit", f"expected {' or '.join(units)}, got {unit!r}")
    if unit == 'Phi0':
        return number * FLUX_QUANTUM
    return number


def _parse_params(model: str, raw: Any) -> Dict[str, Any]:
    if not isinstance(raw, dict):
        raise ConfigError('params', f"expected an object, got {raw!r}")

    if model == 'squid_pair':
        params = copy.deepcopy(SQUID_EXTRAS)
        for name, units in SQUID_UNITS.items():
            value = _require(raw, name, 'params.')
            parse_quantity(value, f"params.{name}", units)
            params[name] = copy.deepcopy(value)
        if 'mu' in raw:
            params['mu'] = _as_float(raw['mu'], 'params.mu')
        if 'scale' in raw:
            scale = raw['scale']
            if not isinstance(scale, dict):
                raise ConfigError('params.scale', f"expected {{\"a\": ..., \"b\": ...}}, got {scale!r}")
            for factor in ('a', 'b'):
                if factor in scale:
                    params['scale'][factor] = _as_float(scale[factor], f"params.scale.{factor}", positive=True)
        allowed = set(SQUID_UNITS) | set(SQUID_EXTRAS)
    else:
        defaults = DUFFING_DEFAULTS if model == 'duffing_pair' else SINGLE_MODE_DEFAULTS
        params = dict(defaults)
        for name, value in raw.items():
            if name not in defaults:
                continue
            if isinstance(defaults[name], bool):
                if not isinstance(value, bool):
                    raise ConfigError(f"params.{name}", f"expected true or false, got {value!r}")
                params[name] = value
            else:
                params[name] = _as_float(value, f"params.{name}")
        allowed = set(defaults)

    for name in raw:
        if name not in allowed:
            raise ConfigError(f"params.{name}", f"unknown parameter for model {model}")
    return params


def _parse_sweep(raw: Any, config: RunConfig) -> Sweep:
    if not isinstance(raw, dict):
        raise ConfigError('sweep', f"expected {{\"path\": ..., \"values\": [...]}}, got {raw!r}")
    path = _require(raw, 'path', 'sweep.')
    values = _require(raw, 'values', 'sweep.')
    if not isinstance(values, list) or not values:
        raise ConfigError('sweep.values', "expected a non-empty list")
    sweep = Sweep(path=path, values=tuple(_as_float(v, f"sweep.values[{i}]") for i, v in enumerate(values)))
    texts = [sweep_value_text(v) for v in sweep.values]
    if len(set(texts)) != len(texts):
        repeated = sorted({t for t in texts if texts.count(t) > 1})
        raise ConfigError('sweep.values', f"values must be distinct, repeated: {', '.join(repeated)}")
    for value in sweep.values:
        apply_sweep_value(config, path, value)
    return sweep


def apply_sweep_value(config: RunConfig, path: str, value: float) -> Dict[str, Any]:
    """
    Return a copy of ``config.params`` with ``path`` set to ``value``.

    Paths are 'params.<name>', 'params.scale.a', 'params.scale.b' or, for the
    SQUID pair, 'capacitance': rescale the ring (b = 1) to the given
    capacitance in farads, keeping every dimensionless RSJ group fixed.

    Raises:
        ConfigError: If the path does not exist for the model or the value is invalid
    """
    params = copy.deepcopy(config.params)
    if path == CAPACITANCE_SWEEP:
        if config.model != 'squid_pair':
            raise ConfigError('sweep.path', "capacitance sweeps need model squid_pair")
        if not value > 0:
            raise ConfigError('sweep.values', f"capacitance must be positive, got {value}")
        base = parse_quantity(params['C'], 'params.C', SQUID_UNITS['C'])
        params['scale'] = dict(params['scale'], a=value / base)
        return params

    parts = path.split('.')
    if parts[0] != 'params' or len(parts) < 2:
        raise ConfigError('sweep.path', f"unknown parameter path {path!r}")
    name = parts[1]
    if name not in params:
        raise ConfigError('sweep.path', f"parameter {name!r} does not exist for model {config.model}")

    if name == 'scale':
        if len(parts) != 3 or parts[2] not in ('a', 'b'):
            raise ConfigError('sweep.path', f"unknown parameter path {path!r}")
        if not value > 0:
            raise ConfigError('sweep.values', f"scale factors must be positive, got {value}")
        params['scale'] = dict(params['scale'], **{parts[2]: value})
    elif len(parts) != 2:
        raise ConfigError('sweep.path', f"unknown parameter path {path!r}")
    elif isinstance(params[name], dict):
        params[name] = dict(params[name], value=value)
    elif isinstance(params[name], bool):
        raise ConfigError('sweep.path', f"cannot sweep boolean parameter {name!r}")
    else:
        params[name] = value
    return params


# ============================================================================
# Loading
# ============================================================================

def parse_config(document: Dict[str, Any], default_output_dir: str = DEFAULT_OUTPUT_DIR,
                 seed_override: Optional[int] = None) -> RunConfig:
    """
    Validate a configuration document.

    Args:
        document: Parsed JSON object
        default_output_dir: Used when the document has no output_dir
        seed_override: --seed from the command line

    Returns:
        RunConfig

    Raises:
        ConfigError: On any invalid or missing key
    """
    if not isinstance(document, dict):
        raise ConfigError('<root>', "configuration must be a JSON object")

    model = _as_choice(_require(document, 'model'), 'model', MODELS)
    unravelling = _as_choice(document.get('unravelling', 'qsd'), 'unravelling', UNRAVELLINGS)
    n_modes = 1 if model == 'single_mode_test' else 2

    t_span_raw = _require(document, 't_span')
    if isinstance(t_span_raw, list) and len(t_span_raw) == 2:
        t_span = (_as_float(t_span_raw[0], 't_span[0]'), _as_float(t_span_raw[1], 't_span[1]'))
    else:
        t_span = (0.0, _as_float(t_span_raw, 't_span'))
    if not t_span[1] > t_span[0]:
        raise ConfigError('t_span', f"end must be after start, got {list(t_span)}")

    seed = seed_override if seed_override is not None else _require(document, 'seed')
    seed = _as_int(seed, 'seed', 0, MAX_SEED)

    transient_fraction = _as_float(document.get('transient_fraction', 0.25), 'transient_fraction')
    if not 0.0 <= transient_fraction < 1.0:
        raise ConfigError('transient_fraction', f"must be in [0, 1), got {transient_fraction}")

    keep = document.get('keep_trajectories', True)
    if not isinstance(keep, bool):
        raise ConfigError('keep_trajectories', f"expected true or false, got {keep!r}")

    name = document.get('name', model)
    if not isinstance(name, str) or not name:
        raise ConfigError('name', f"expected a non-empty string, got {name!r}")

    initial_state = _as_amplitudes(document.get('initial_state', [0.0] * n_modes), 'initial_state', n_modes)

    config = RunConfig(
        name=_safe_label(name),
        model=model,
        unravelling=unravelling,
        params=_parse_params(model, _require(document, 'params')),
        n_levels=_as_int(_require(document, 'n_levels'), 'n_levels', 2),
        dt=_as_float(document.get('dt', 1e-3), 'dt', positive=True),
        t_span=t_span,
        record_every=_as_int(document.get('record_every', 1), 'record_every', 1),
        n_trajectories=_as_int(document.get('n_trajectories', 1), 'n_trajectories', 1),
        seed=seed,
        transient_fraction=transient_fraction,
        settle_tolerance=_as_float(document.get('settle_tolerance', 0.01), 'settle_tolerance', positive=True),
        frame=_as_choice(document.get('frame', 'bias'), 'frame', FRAMES),
        initial_state=initial_state,
        keep_trajectories=keep,
        output_dir=str(document.get('output_dir') or default_output_dir),
        source=copy.deepcopy(document),
    )

    if 'branches' in document:
        raw_branches = document['branches']
        if not isinstance(raw_branches, list) or not raw_branches:
            raise ConfigError('branches', "expected a non-empty list")
        branches = []
        for i, raw in enumerate(raw_branches):
            if not isinstance(raw, dict):
                raise ConfigError(f"branches[{i}]", "expected {\"label\": ..., \"initial_state\": [...]}")
            label = _require(raw, 'label', f"branches[{i}].")
            if not isinstance(label, str) or not label:
                raise ConfigError(f"branches[{i}].label", f"expected a non-empty string, got {label!r}")
            amplitudes = _as_amplitudes(_require(raw, 'initial_state', f"branches[{i}]."),
                                        f"branches[{i}].initial_state", n_modes)
            branches.append(Branch(_safe_label(label), amplitudes))
        if len({b.label for b in branches}) != len(branches):
            raise ConfigError('branches', "branch labels must be unique")
        config.branches = tuple(branches)

    if 'sweep' in document:
        config.sweep = _parse_sweep(document['sweep'], config)

    known = {
        'name', 'model', 'unravelling', 'params', 'n_levels', 'dt', 't_span', 'record_every',
        'n_trajectories', 'seed', 'transient_fraction', 'settle_tolerance', 'frame',
        'initial_state', 'branches', 'sweep', 'keep_trajectories', 'output_dir',
    }
    for key in document:
        if key not in known:
            raise ConfigError(key, "unknown configuration key")

    return config


def load_config(path: str, default_output_dir: str = DEFAULT_OUTPUT_DIR,
                seed_override: Optional[int] = None) -> RunConfig:
    """
    Load and validate a JSON run configuration.

    Raises:
        ConfigError: If the file cannot be read or any key is invalid
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except FileNotFoundError:
        raise ConfigError('<file>', f"no such file: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError('<file>', f"invalid JSON at line {e.lineno}: {e.msg}")

    config = parse_config(document, default_output_dir, seed_override)
    logger.debug(f"Loaded config {config.name} from {path}")
    return config
