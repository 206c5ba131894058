import pytest

from pmemprims.config import DEFAULTS, crash_mode, get_config_path, load_config, merge_config


def test_defaults_without_any_file():
    config = load_config()
    assert config == DEFAULTS
    assert config is not DEFAULTS
    assert config['bench']['working_set'] == 10 * 2 ** 30
    assert config['flush']['dirty_threshold_single'] == 112


def test_explicit_file_overrides_defaults(tmp_path):
    path = tmp_path / 'pmemprims.yaml'
    path.write_text("crash:\n  samples: 50\n  seed: 9\ndevice:\n  backend: real\n")
    config = load_config(path)
    assert config['crash']['samples'] == 50
    assert config['device']['backend'] == 'real'
    assert config['crash']['cap'] == 2 ** 20


def test_environment_and_home_lookup(tmp_path, monkeypatch):
    assert get_config_path() is None

    home = tmp_path / 'home'
    home.mkdir()
    (home / '.pmemprims.yaml').write_text("bench:\n  ops: 7\n")
    assert load_config()['bench']['ops'] == 7

    env_file = tmp_path / 'env.yaml'
    env_file.write_text("bench:\n  ops: 11\n")
    monkeypatch.setenv('PMEMPRIMS_CONFIG', str(env_file))
    assert load_config()['bench']['ops'] == 11

    monkeypatch.setenv('PMEMPRIMS_CONFIG', str(tmp_path / 'missing.yaml'))
    with pytest.raises(FileNotFoundError):
        load_config()


def test_missing_explicit_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / 'nope.yaml')


@pytest.mark.parametrize('overrides', [
    {'network': {}},
    {'crash': {'rounds': 1}},
    {'crash': {'samples': 'many'}},
    {'crash': {'samples': True}},
    {'bench': {'ops': -5}},
    {'device': {'backend': 'fpga'}},
    {'device': {'cache_line_size': 128}},
    {'flush': [1, 2]},
    ['not', 'a', 'mapping'],
])
def test_bad_overrides(overrides):
    with pytest.raises(ValueError):
        merge_config(overrides)


def test_invalid_yaml(tmp_path):
    path = tmp_path / 'broken.yaml'
    path.write_text("crash: [unclosed\n")
    with pytest.raises(ValueError):
        load_config(path)


def test_crash_mode_from_config():
    config = merge_config({'crash': {'samples': 40, 'seed': 2, 'cap': 1000}})
    assert crash_mode(config).kind == 'exhaustive'
    assert crash_mode(config).cap == 1000
    sampled = crash_mode(config, sampled=True)
    assert (sampled.samples, sampled.seed) == (40, 2)
