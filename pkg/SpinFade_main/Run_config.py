### SpinFade, leakage of collective spin states under inhomogeneous coupling
### Run configuration: JSON run configs validated against configparser defaults
### Version: 1.0
#######################################################################################################################################################################################
#######################################################################################################################################################################################

import os
import json
import math
import configparser
from dataclasses import asdict, dataclass, fields
from typing import List, Optional

import psutil

from Ensemble_model import DickeLabel
from Overlap_engines import ENGINE_IDS, resolve_engine_id

COMMANDS = ('sample', 'overlap', 'leakage', 'halflife', 'fit-kappa', 'fit-rabi',
            'm-profile', 'offdiag', 'revival', 'selftest')
CASES = ('dephasing', 'rabi')
THREADS_ENV = 'SPINFADE_THREADS'
DEFAULTS_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'config', 'spinfade_defaults.ini')

############################################################################ EXCEPTION CLASSES  #######################################################################################

class ConfigError(Exception):
    """Exception class for malformed run configs, carrying the offending key or the line and column"""
    def __init__(self, message="Run config could not be validated", key=None, line=None, col=None):
        self.message = message
        self.key = key
        self.line = line
        self.col = col
        super().__init__(self.message)

############################################################################ DEFAULTS  #######################################################################################

def read_defaults(path: str = DEFAULTS_FILE) -> configparser.ConfigParser:
    config = configparser.ConfigParser()
    if not config.read(path):
        raise ConfigError(f'defaults file not found: {path}')
    return config

def _ini_list(config, section, key) -> list:
    return [float(v) for v in json.loads(config[section][key])]

@dataclass
class RunConfig:
    command: str
    n_atoms: Optional[int]
    fields: Optional[List[List[float]]]
    mean: List[float]
    sigma: List[float]
    seed: int
    m: Optional[float]
    m_prime: Optional[float]
    state: Optional[List[List[float]]]
    t_min: float
    t_max: Optional[float]
    points: Optional[int]
    times: Optional[List[float]]
    engine: str
    draws: int
    budget: float
    threads: int
    out_dir: str
    j: float
    j_values: List[float]
    m_values: Optional[List[float]]
    m_fractions: List[float]
    sigma_values: List[float]
    b_z: float
    b_r: float
    sigma_r: float
    delta_m: int
    case: str
    tolerance: float
    include_adjacent: bool

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @property
    def is_longitudinal(self) -> bool:
        if self.fields is not None:
            return all(f[0] == 0.0 and f[1] == 0.0 for f in self.fields)
        return self.mean[0] == 0.0 and self.mean[1] == 0.0 and self.sigma[0] == 0.0 and self.sigma[1] == 0.0

    ### threads = 0 means one worker per physical core
    def resolved_threads(self) -> int:
        if self.threads == 0:
            return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
        return self.threads

def default_dict(config: configparser.ConfigParser = None) -> dict:
    config = config or read_defaults()
    run, exp = config['Run'], config['Experiment']
    return {'command': run['command'], 'n_atoms': None, 'fields': None,
            'mean': _ini_list(config, 'Experiment', 'mean'), 'sigma': _ini_list(config, 'Experiment', 'sigma'),
            'seed': run.getint('seed'), 'm': None, 'm_prime': None, 'state': None,
            't_min': config['Grid'].getfloat('t_min'), 't_max': None, 'points': None, 'times': None,
            'engine': run['engine'], 'draws': run.getint('draws'), 'budget': run.getfloat('budget'),
            'threads': run.getint('threads'), 'out_dir': config['Paths']['out_dir'],
            'j': exp.getfloat('j'), 'j_values': _ini_list(config, 'Experiment', 'j_values'), 'm_values': None,
            'm_fractions': _ini_list(config, 'Experiment', 'm_fractions'),
            'sigma_values': _ini_list(config, 'Experiment', 'sigma_values'),
            'b_z': exp.getfloat('b_z'), 'b_r': exp.getfloat('b_r'), 'sigma_r': exp.getfloat('sigma_r'),
            'delta_m': exp.getint('delta_m'), 'case': exp['case'], 'tolerance': run.getfloat('tolerance'),
            'include_adjacent': exp.getboolean('include_adjacent')}

############################################################################ VALIDATION  #######################################################################################

def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)

def _as_float(key, v, positive=False, nonneg=False) -> float:
    if not _is_number(v):
        raise ConfigError(f"'{key}' must be a finite number, got {v!r}", key=key)
    if positive and v <= 0:
        raise ConfigError(f"'{key}' must be positive, got {v!r}", key=key)
    if nonneg and v < 0:
        raise ConfigError(f"'{key}' must be non-negative, got {v!r}", key=key)
    return float(v)

def _as_int(key, v, minimum=None, maximum=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"'{key}' must be an integer, got {v!r}", key=key)
    if minimum is not None and v < minimum:
        raise ConfigError(f"'{key}' must be >= {minimum}, got {v!r}", key=key)
    if maximum is not None and v > maximum:
        raise ConfigError(f"'{key}' must be <= {maximum}, got {v!r}", key=key)
    return int(v)

def _as_floats(key, v, length=None, **kw) -> List[float]:
    if not isinstance(v, list) or (length is not None and len(v) != length):
        size = f'{length} numbers' if length else 'a list of numbers'
        raise ConfigError(f"'{key}' must be {size}, got {v!r}", key=key)
    return [_as_float(key, x, **kw) for x in v]

def _reject_duplicates(pairs):
    obj = {}
    for k, v in pairs:
        if k in obj:
            raise ConfigError(f"duplicate key '{k}'", key=k)
        obj[k] = v
    return obj

### Grid ends where a 1/(sigma sqrt J) decay has long passed, else a fixed fallback
def _auto_t_max(cfg: dict, grid) -> float:
    n_atoms = cfg['n_atoms']
    if cfg['fields'] is not None:
        cols = list(zip(*cfg['fields']))
        spread = max(math.sqrt(sum((x - sum(c) / len(c))**2 for x in c) / len(c)) for c in cols)
    else:
        spread = max(cfg['sigma'])
    if spread > 0 and n_atoms:
        return grid.getfloat('grid_span') / (spread * math.sqrt(n_atoms / 2))
    return grid.getfloat('fallback_t_max')

def validate(raw: dict, defaults: configparser.ConfigParser = None) -> RunConfig:

    defaults = defaults or read_defaults()
    if not isinstance(raw, dict):
        raise ConfigError('run config must be a JSON object')

    unknown = sorted(set(raw) - set(RunConfig.keys()))
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'", key=unknown[0])

    cfg = default_dict(defaults)
    cfg.update({k: v for k, v in raw.items()})

    if cfg['command'] not in COMMANDS:
        raise ConfigError(f"'command' must be one of {COMMANDS}, got {cfg['command']!r}", key='command')
    if cfg['engine'] not in ENGINE_IDS:
        raise ConfigError(f"'engine' must be one of {ENGINE_IDS}, got {cfg['engine']!r}", key='engine')
    if cfg['case'] not in CASES:
        raise ConfigError(f"'case' must be one of {CASES}, got {cfg['case']!r}", key='case')
    if not isinstance(cfg['out_dir'], str) or not cfg['out_dir']:
        raise ConfigError("'out_dir' must be a non-empty string", key='out_dir')
    if not isinstance(cfg['include_adjacent'], bool):
        raise ConfigError("'include_adjacent' must be true or false", key='include_adjacent')

    cfg['mean'] = _as_floats('mean', cfg['mean'], 3)
    cfg['sigma'] = _as_floats('sigma', cfg['sigma'], 3, nonneg=True)
    cfg['seed'] = _as_int('seed', cfg['seed'], 0, 2**64 - 1)
    cfg['draws'] = _as_int('draws', cfg['draws'], 1)
    cfg['threads'] = _as_int('threads', cfg['threads'], 0)
    cfg['delta_m'] = _as_int('delta_m', cfg['delta_m'])
    for key in ('budget', 'tolerance', 'j', 'b_r', 'sigma_r'):
        cfg[key] = _as_float(key, cfg[key], positive=True)
    for key in ('b_z', 't_min'):
        cfg[key] = _as_float(key, cfg[key])
    for key in ('j_values', 'sigma_values'):
        cfg[key] = _as_floats(key, cfg[key], positive=True)
    cfg['m_fractions'] = _as_floats('m_fractions', cfg['m_fractions'])

    if cfg['fields'] is not None:
        if not isinstance(cfg['fields'], list) or not cfg['fields']:
            raise ConfigError("'fields' must be a non-empty list of [bx, by, bz]", key='fields')
        cfg['fields'] = [_as_floats('fields', f, 3) for f in cfg['fields']]
        if cfg['n_atoms'] is not None and cfg['n_atoms'] != len(cfg['fields']):
            raise ConfigError(f"'n_atoms' = {cfg['n_atoms']!r} does not match {len(cfg['fields'])} fields", key='n_atoms')
        cfg['n_atoms'] = len(cfg['fields'])
    if cfg['n_atoms'] is not None:
        cfg['n_atoms'] = _as_int('n_atoms', cfg['n_atoms'], 1)

    ## Labels default to the M nearest zero
    for key in ('m', 'm_prime'):
        if cfg[key] is not None:
            cfg[key] = _as_float(key, cfg[key])
            if cfg['n_atoms'] is not None and abs(2 * cfg[key] - round(2 * cfg[key])) > 1e-9:
                raise ConfigError(f"'{key}' must be a half-integer, got {cfg[key]!r}", key=key)
    if cfg['m'] is None and cfg['n_atoms'] is not None:
        cfg['m'] = DickeLabel.nearest(cfg['n_atoms'], 0.0).m
    if cfg['m_prime'] is None and cfg['m'] is not None:
        cfg['m_prime'] = cfg['m']

    if cfg['state'] is not None:
        if not isinstance(cfg['state'], list) or not cfg['state']:
            raise ConfigError("'state' must be a non-empty list of [M, re, im]", key='state')
        cfg['state'] = [_as_floats('state', term, 3) for term in cfg['state']]

    if cfg['m_values'] is not None:
        cfg['m_values'] = _as_floats('m_values', cfg['m_values'])
    elif cfg['command'] == 'm-profile':
        cfg['m_values'] = [f * cfg['j'] for f in _ini_list(defaults, 'Experiment', 'profile_fractions')]

    ## Engine selection
    transverse = not RunConfig(**cfg).is_longitudinal
    if cfg['engine'] == 'dephasing' and transverse and cfg['command'] in ('overlap', 'leakage', 'halflife', 'revival'):
        raise ConfigError("'engine' dephasing needs zero transverse means and sigmas", key='engine')
    if cfg['engine'] == 'dephasing' and (cfg['command'] in ('fit-rabi', 'offdiag')
                                         or (cfg['command'] == 'm-profile' and cfg['case'] == 'rabi')):
        raise ConfigError(f"'engine' dephasing cannot run the transverse {cfg['command']} experiment", key='engine')
    if cfg['command'] == 'revival' and transverse:
        raise ConfigError("'revival' needs a longitudinal ensemble, transverse means or sigmas given", key='sigma' if cfg['fields'] is None else 'fields')
    resolved_engine = resolve_engine_id(cfg['engine'], not transverse)

    ## Grid
    grid = defaults['Grid']
    if cfg['times'] is not None:
        cfg['times'] = _as_floats('times', cfg['times'], nonneg=True)
        if not cfg['times'] or any(b <= a for a, b in zip(cfg['times'], cfg['times'][1:])):
            raise ConfigError("'times' must be a non-empty strictly increasing list", key='times')
    if cfg['t_max'] is None and cfg['command'] in ('overlap', 'leakage', 'halflife', 'revival'):
        cfg['t_max'] = _auto_t_max(cfg, grid)
    if cfg['t_max'] is not None:
        cfg['t_max'] = _as_float('t_max', cfg['t_max'], positive=True)
        if cfg['t_max'] <= cfg['t_min']:
            raise ConfigError("'t_max' must exceed 't_min'", key='t_max')
    if cfg['points'] is None:
        if cfg['command'] == 'revival':
            cfg['points'] = grid.getint('revival_points')
        elif cfg['command'] in ('overlap', 'leakage', 'halflife'):
            cfg['points'] = grid.getint('dephasing_points' if resolved_engine == 'dephasing' else 'general_points')
    if cfg['points'] is not None:
        cfg['points'] = _as_int('points', cfg['points'], 3)

    if cfg['command'] in ('overlap', 'leakage', 'halflife', 'revival', 'sample') and cfg['n_atoms'] is None:
        raise ConfigError(f"'{cfg['command']}' needs 'n_atoms' or 'fields'", key='n_atoms')
    if cfg['command'] == 'leakage' and cfg['state'] is None:
        raise ConfigError("'leakage' needs a 'state'", key='state')

    return RunConfig(**cfg)

def parse_config(text: str, defaults: configparser.ConfigParser = None) -> RunConfig:
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as e:
        raise ConfigError(f'syntax error: {e.msg} at line {e.lineno}, column {e.colno}', line=e.lineno, col=e.colno)
    return validate(raw, defaults)


### CLI flags and the thread environment variable override the raw config before validation
def apply_overrides(raw: dict, command=None, seed=None, out=None, engine=None, threads=None, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    raw = dict(raw)
    if command is not None:
        raw['command'] = command
    if seed is not None:
        raw['seed'] = seed
    if out is not None:
        raw['out_dir'] = out
    if engine is not None:
        raw['engine'] = engine
    if threads is not None:
        raw['threads'] = threads
    elif environ.get(THREADS_ENV):
        try:
            raw['threads'] = int(environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f'{THREADS_ENV} must be an integer, got {environ[THREADS_ENV]!r}', key='threads')
    return raw

### Config bytes must be UTF-8, a bad byte is a syntax error at its line and column
def decode_config(data: bytes) -> str:
    try:
        return data.decode('utf-8')
    except UnicodeDecodeError as e:
        head = data[:e.start]
        line = head.count(b'\n') + 1
        col = e.start - (head.rfind(b'\n') + 1) + 1
        raise ConfigError(f'syntax error: invalid UTF-8 byte at line {line}, column {col}', line=line, col=col)

def load_config(text, defaults: configparser.ConfigParser = None, **overrides) -> RunConfig:
    if isinstance(text, bytes):
        text = decode_config(text)
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f'syntax error: {e.msg} at line {e.lineno}, column {e.colno}', line=e.lineno, col=e.colno)
    if not isinstance(raw, dict):
        raise ConfigError('run config must be a JSON object')
    return validate(apply_overrides(raw, **overrides), defaults)
