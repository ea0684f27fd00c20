import json

import pytest

from Run_config import ConfigError, RunConfig, apply_overrides, load_config, parse_config


def test_minimal_config_fills_defaults():
    config = parse_config('{"command": "overlap", "n_atoms": 2}')
    assert config.draws == 16
    assert config.engine == 'auto'
    assert config.m == 0.0 and config.m_prime == 0.0
    assert config.t_max == 10.0
    assert config.points == 2048
    assert config.seed == 0 and config.threads == 1
    assert set(json.loads(config.to_json())) == set(RunConfig.keys())


def test_transverse_ensemble_uses_general_grid():
    config = parse_config('{"command": "overlap", "n_atoms": 8, "mean": [1, 1, 0], "sigma": [0.1, 0.1, 0]}')
    assert config.points == 256
    assert config.t_max == pytest.approx(8.0 / (0.1 * 2.0))


def test_dephasing_with_transverse_sigma_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config('{"command": "overlap", "n_atoms": 4, "engine": "dephasing", "sigma": [0.1, 0, 0]}')
    assert err.value.key == 'engine'


def test_round_trip():
    text = '{"command": "halflife", "n_atoms": 9, "m": 0.5, "sigma": [0, 0, 0.01], "seed": 12345678901234567890}'
    config = parse_config(text)
    again = parse_config(config.to_json())
    assert again == config
    assert again.to_json() == config.to_json()


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config('{"command": "overlap", "n_atoms": 2, "n_atom": 3}')
    assert err.value.key == 'n_atom'


def test_syntax_error_position():
    with pytest.raises(ConfigError) as err:
        parse_config('{\n  "command": "overlap",\n  "n_atoms": }')
    assert err.value.line == 3
    assert err.value.col is not None


def test_invalid_utf8_reports_position():
    with pytest.raises(ConfigError) as err:
        load_config(b'{\n  "command": "overlap",\n  "note": "\xe9t\xe9"}', environ={})
    assert (err.value.line, err.value.col) == (3, 12)
    assert load_config('{"command": "sample", "n_atoms": 2}'.encode('utf-8'), environ={}).n_atoms == 2


@pytest.mark.parametrize("text,key", [
    ('{"command": "overlap", "n_atoms": true}', 'n_atoms'),
    ('{"command": "overlap", "n_atoms": 2, "m": 0.25}', 'm'),
    ('{"command": "overlap", "n_atoms": 2, "seed": -1}', 'seed'),
    ('{"command": "overlap", "n_atoms": 2, "times": [0, 1, 1]}', 'times'),
    ('{"command": "overlap", "fields": [[0, 0, 1]], "n_atoms": 2}', 'n_atoms'),
    ('{"command": "leakage", "n_atoms": 2}', 'state'),
    ('{"command": "revival", "n_atoms": 2, "mean": [1, 0, 0]}', 'sigma'),
    ('{"command": "fit-rabi", "engine": "dephasing"}', 'engine'),
    ('{"command": "teleport"}', 'command'),
    ('{"command": "halflife", "n_atoms": 4, "points": 1}', 'points'),
    ('{"command": "overlap", "n_atoms": 4, "points": 2}', 'points'),
    ('{"command": "overlap"}', 'n_atoms'),
])
def test_semantic_errors_name_key(text, key):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.key == key


def test_duplicate_keys_rejected():
    with pytest.raises(ConfigError):
        parse_config('{"command": "overlap", "n_atoms": 2, "n_atoms": 3}')


def test_fields_set_atom_count():
    config = parse_config('{"command": "overlap", "fields": [[0, 0, 1], [0, 0, 2], [0, 0, 3]]}')
    assert config.n_atoms == 3
    assert config.m == 0.5
    assert config.fields == [[0.0, 0.0, 1.0], [0.0, 0.0, 2.0], [0.0, 0.0, 3.0]]


def test_m_profile_values_default_to_fractions():
    config = parse_config('{"command": "m-profile", "j": 100}')
    assert config.m_values[0] == -100.0 and config.m_values[-1] == 100.0


def test_overrides_and_environment():
    config = load_config('{"command": "overlap", "n_atoms": 4}', seed=7, out='elsewhere',
                         environ={'SPINFADE_THREADS': '3'})
    assert config.seed == 7 and config.out_dir == 'elsewhere' and config.threads == 3
    config = load_config('{"command": "overlap", "n_atoms": 4}', threads=2, environ={'SPINFADE_THREADS': '3'})
    assert config.threads == 2
    with pytest.raises(ConfigError):
        apply_overrides({}, environ={'SPINFADE_THREADS': 'many'})


def test_command_flag_overrides_config():
    config = load_config('{"command": "overlap", "n_atoms": 4}', command='sample', environ={})
    assert config.command == 'sample'


def test_auto_threads_resolve_to_cores():
    config = load_config('{"command": "overlap", "n_atoms": 4, "threads": 0}', environ={})
    assert config.resolved_threads() >= 1
