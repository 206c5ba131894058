import pytest
from click.testing import CliRunner

from pmemprims import __version__
from pmemprims.bench import CSV_COLUMNS
from pmemprims.cli import cli


@pytest.fixture
def runner():
    return CliRunner()


def test_version(runner):
    result = runner.invoke(cli, ['--version'])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_help_lists_commands(runner):
    result = runner.invoke(cli, ['--help'])
    assert result.exit_code == 0
    for command in ('bench', 'check', 'fixture', 'reference'):
        assert command in result.output


def test_bench_writes_identical_csv_files(runner, tmp_path):
    args = ['bench', 'log', '--backend', 'sim', '--algo', 'zero', '--algo', 'classic',
            '--entry-size', '64', '--entry-size', '128', '--ops', '50', '--seed', '3']
    first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
    assert runner.invoke(cli, args + ['--out', str(first)]).exit_code == 0
    assert runner.invoke(cli, args + ['--out', str(second)]).exit_code == 0

    text = first.read_text()
    assert text == second.read_text()
    lines = text.splitlines()
    assert lines[0] == ','.join(CSV_COLUMNS)
    assert len(lines) == 5
    assert lines[1].startswith('log,zero,1,64,,,,,,1,')


def test_bench_to_stdout(runner):
    result = runner.invoke(cli, ['bench', 'flush', '--backend', 'sim', '--algo', 'cow', '--dirty', '1', '--ops', '2'])
    assert result.exit_code == 0
    assert 'flush,cow,1,1,' in result.output


@pytest.mark.parametrize('args', [
    ['bench', 'bandwidth', '--backend', 'sim'],
    ['bench', 'log', '--entry-size', '40'],
    ['bench', 'log', '--threads', '64'],
    ['bench', 'ycsb', '--threads', '2'],
    ['bench', 'flush', '--algo', 'rewrite'],
    ['bench', 'teleport'],
])
def test_bench_rejects_invalid_specs(runner, args):
    result = runner.invoke(cli, args)
    assert result.exit_code == 2


def test_bench_uses_the_config_backend(runner, tmp_path):
    config = tmp_path / 'config.yaml'
    config.write_text("device:\n  backend: real\n")
    # latency needs the real backend, which the config selects
    result = runner.invoke(cli, ['--config', str(config), 'bench', 'latency', '--pattern', 'same',
                                 '--ops', '20', '--working-set', '65536', '--path', str(tmp_path / 'run')])
    assert result.exit_code == 0, result.output
    assert 'latency,streaming,1,same,' in result.output


def test_bad_config_is_a_usage_error(runner, tmp_path):
    config = tmp_path / 'config.yaml'
    config.write_text("crash:\n  rounds: 3\n")
    result = runner.invoke(cli, ['--config', str(config), 'reference'])
    assert result.exit_code == 2
    assert 'unknown config key: crash.rounds' in result.output


def test_reference_table(runner):
    result = runner.invoke(cli, ['reference'])
    assert result.exit_code == 0
    assert 'bandwidth' in result.output


def test_check_log(runner):
    result = runner.invoke(cli, ['check', 'log', '--algo', 'zero', '--sizes', '0,7,64,65,200'])
    assert result.exit_code == 0
    assert result.output.strip().splitlines()[-1].endswith('failed=0')


def test_check_log_dumps_nothing_when_every_image_recovers(runner, tmp_path):
    out = tmp_path / 'failures'
    result = runner.invoke(cli, ['check', 'log', '--algo', 'classic', '--sizes', '7,65', '--dump-failures', str(out)])
    assert result.exit_code == 0
    assert not out.exists()


def test_check_log_rejects_bad_sizes(runner):
    result = runner.invoke(cli, ['check', 'log', '--algo', 'zero', '--sizes', '7,x'])
    assert result.exit_code == 2


def test_check_flush(runner):
    result = runner.invoke(cli, ['check', 'flush', '--page-size', '256', '--samples', '5', '--alternating'])
    assert result.exit_code == 0
    assert 'failed=0' in result.output


def test_fixture_recover_check(runner):
    result = runner.invoke(cli, ['fixture', 'recover', 'timeline_final.yaml', '--check'])
    assert result.exit_code == 0
    assert 'fill a2' in result.output
    assert 'Recovery matches the expected state' in result.output


def test_fixture_recover_log(runner):
    result = runner.invoke(cli, ['fixture', 'recover', 'zero_log_3.yaml'])
    assert result.exit_code == 0
    assert '0303' in result.output


def test_fixture_recover_reports_mismatches(runner, tmp_path):
    fixture = tmp_path / 'wrong.yaml'
    fixture.write_text(
        "capacity: 256\n"
        "kind: log\n"
        "params: {algo: zero, region: [0, 256]}\n"
        "expect: {next_lsn: 2}\n"
    )
    result = runner.invoke(cli, ['fixture', 'recover', str(fixture), '--check'])
    assert result.exit_code == 1
    assert 'next lsn 1, expected 2' in result.output


def test_fixture_recover_missing_file(runner, tmp_path):
    result = runner.invoke(cli, ['fixture', 'recover', str(tmp_path / 'nope.yaml')])
    assert result.exit_code == 2


def test_fixture_recover_malformed_file(runner, tmp_path):
    fixture = tmp_path / 'bad.yaml'
    fixture.write_text("capacity: 256\nkind: tape\n")
    result = runner.invoke(cli, ['fixture', 'recover', str(fixture)])
    assert result.exit_code == 2
