"""pmemprims CLI commands

Benchmarks, crash-consistency checks and fixture recovery for the
persistent-memory logging and page-flush primitives.
"""

import logging
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from pmemprims import __version__, bench as bench_module, fixtures, scenarios
from pmemprims.config import crash_mode, load_config
from pmemprims.crash_checker import CrashMode, EnumerationCapExceeded
from pmemprims.page_flush import CorruptionError
from pmemprims.pmem_model import Backend
from pmemprims.wal import Algorithm

BACKENDS = {'sim': Backend.SIMULATED, 'simulated': Backend.SIMULATED, 'real': Backend.REAL}

stderr = Console(stderr=True)


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format='%(message)s',
        handlers=[RichHandler(console=stderr, show_path=False)],
    )
    logging.getLogger('pmemprims').setLevel(logging.DEBUG if verbose else logging.WARNING)


@click.group()
@click.version_option(version=__version__, prog_name='pmemprims')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='YAML config file')
@click.option('-v', '--verbose', is_flag=True, help='Debug logging')
@click.pass_context
def cli(ctx, config_path, verbose):
    """Persistent-memory logging and page-flush primitives

    Common commands:
      pmemprims bench log --backend sim       Structural costs of log appends
      pmemprims bench flush --backend real    Time page flushes on a file
      pmemprims check log --algo zero         Crash-check a log algorithm
      pmemprims fixture recover FILE          Recover a device image fixture
    """
    _setup_logging(verbose)
    try:
        ctx.obj = {'config': load_config(config_path)}
    except (FileNotFoundError, ValueError) as e:
        raise click.UsageError(str(e))


@cli.command()
@click.argument('experiment', type=click.Choice(bench_module.EXPERIMENTS))
@click.option('--backend', type=click.Choice(sorted(BACKENDS)), help='real (timed) or sim (structural counters)')
@click.option('--threads', type=int, multiple=True, help='Worker count; repeat to sweep')
@click.option('--adjacent-lines', type=int, multiple=True, help='Lines per access (bandwidth); repeat to sweep')
@click.option('--flavor', default='streaming', show_default=True,
              type=click.Choice(bench_module.BANDWIDTH_FLAVORS), help='Store flavor')
@click.option('--pattern', multiple=True, type=click.Choice(bench_module.LATENCY_PATTERNS),
              help='Latency access pattern; repeat to sweep')
@click.option('--algo', multiple=True, help='Log or flush algorithm; repeat to compare')
@click.option('--entry-size', type=int, multiple=True, help='Log payload bytes; repeat to sweep')
@click.option('--aligned', is_flag=True, help='Cache-line aligned log entries')
@click.option('--dance-k', type=int, default=64, show_default=True, help='Size fields of header-dance')
@click.option('--dirty', type=int, multiple=True, help='Dirty lines per flush; repeat to sweep')
@click.option('--ops', type=int, help='Operations per sweep point')
@click.option('--seed', type=int, help='Random seed')
@click.option('--working-set', type=int, help='Bytes touched by bandwidth/latency runs')
@click.option('--pages', type=int, default=8, show_default=True, help='Pages per flush worker')
@click.option('--path', type=click.Path(file_okay=False), help='Directory for real-backend files')
@click.option('--out', type=click.Path(dir_okay=False), help='CSV output file (default: stdout)')
@click.pass_context
def bench(ctx, experiment, backend, threads, adjacent_lines, flavor, pattern, algo, entry_size,
          aligned, dance_k, dirty, ops, seed, working_set, pages, path, out):
    """Run a benchmark sweep and write CSV

    Examples:
        pmemprims bench log --backend sim --algo zero --algo classic --ops 1000
        pmemprims bench flush --backend sim --dirty 1 --dirty 128
        pmemprims bench bandwidth --backend real --threads 4 --working-set 1073741824
    """
    config = ctx.obj['config']
    spec = bench_module.BenchSpec(
        experiment=experiment,
        backend=BACKENDS[backend] if backend else Backend(config['device']['backend']),
        threads=tuple(threads) or (1,),
        adjacent_lines=tuple(adjacent_lines),
        flavor=flavor,
        pattern=tuple(pattern),
        algo=tuple(algo),
        entry_size=tuple(entry_size),
        aligned=aligned,
        dance_k=dance_k,
        dirty=tuple(dirty),
        ops=config['bench']['ops'] if ops is None else ops,
        seed=config['bench']['seed'] if seed is None else seed,
        working_set=working_set or config['bench']['working_set'],
        page_size=config['flush']['page_size'],
        pages=pages,
        dirty_threshold_single=config['flush']['dirty_threshold_single'],
        dirty_threshold_multi=config['flush']['dirty_threshold_multi'],
        path=Path(path) if path else None,
    )
    try:
        spec.validate()
    except ValueError as e:
        raise click.UsageError(str(e))

    try:
        results = bench_module.run(spec)
    except Exception as e:
        click.echo(f"Error running {experiment} benchmark: {e}", err=True)
        raise click.Abort()

    if out is None:
        bench_module.write_csv(results, click.get_text_stream('stdout'))
        return
    with open(out, 'w', newline='') as f:
        bench_module.write_csv(results, f)
    click.echo(f"✓ Wrote {len(results)} rows to {out}", err=True)


@cli.command()
def reference():
    """Show the shipped hardware reference magnitudes"""
    table = Table(title='Hardware reference')
    for column in ('experiment', 'series', 'param', 'value', 'unit', 'note'):
        table.add_column(column)
    for row in bench_module.load_reference():
        table.add_row(*(row[c] for c in ('experiment', 'series', 'param', 'value', 'unit', 'note')))
    Console().print(table)


@cli.group()
def check():
    """Crash-consistency checks

    Runs a workload on the simulated device, enumerates (or samples) the
    durable images at every crash point and verifies recovery.
    """
    pass


def _finish_report(ctx, report, dump_dir=None) -> None:
    click.echo(report.to_text(), nl=False)
    if dump_dir and report.failures:
        paths = scenarios.dump_failures(report, dump_dir)
        click.echo(f"Wrote {len(paths)} failing images to {dump_dir}", err=True)
    if not report.ok:
        ctx.exit(1)


def _parse_sizes(value: str):
    try:
        return tuple(int(part) for part in value.split(',') if part.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")


@check.command('log')
@click.option('--algo', required=True, type=click.Choice([a.value for a in Algorithm]), help='Log algorithm')
@click.option('--aligned', is_flag=True, help='Cache-line aligned entries')
@click.option('--dance-k', type=int, default=4, show_default=True, help='Size fields of header-dance')
@click.option('--flavor', type=click.Choice(['streaming', 'plain']), default='streaming', show_default=True)
@click.option('--sizes', default='0,7,64,65,200', show_default=True, help='Payload sizes, comma-separated')
@click.option('--sampled', is_flag=True, help='Sample images instead of enumerating them')
@click.option('--dump-failures', 'dump_dir', type=click.Path(file_okay=False), help='Write failing images as fixtures')
@click.pass_context
def check_log(ctx, algo, aligned, dance_k, flavor, sizes, sampled, dump_dir):
    """Crash-check appends of one log algorithm

    Prints one line per failing image and a checked=/failed= summary.
    Exits 1 when any image fails.
    """
    mode = crash_mode(ctx.obj['config'], sampled)
    try:
        report = scenarios.check_log(algo, _parse_sizes(sizes), aligned=aligned, dance_k=dance_k,
                                     flavor=flavor, mode=mode)
    except EnumerationCapExceeded as e:
        raise click.ClickException(f"{e}; rerun with --sampled")
    except ValueError as e:
        raise click.UsageError(str(e))
    _finish_report(ctx, report, dump_dir)


@check.command('flush')
@click.option('--page-size', type=int, default=512, show_default=True, help='Page size in bytes')
@click.option('--alternating', is_flag=True, help='Two flushers micro-logging the same page')
@click.option('--samples', type=int, help='Images per crash point (default: crash.samples)')
@click.option('--seed', type=int, help='Seed for pages and sampling (default: crash.seed)')
@click.option('--flavor', type=click.Choice(['streaming', 'plain']), default='streaming', show_default=True)
@click.option('--dump-failures', 'dump_dir', type=click.Path(file_okay=False), help='Write failing images as fixtures')
@click.pass_context
def check_flush(ctx, page_size, alternating, samples, seed, flavor, dump_dir):
    """Crash-check a sequence of page flushes

    Default sequence: four flushes over two pages mixing CoW and micro
    logs. Images are sampled per crash point.
    """
    config = ctx.obj['config']
    mode = crash_mode(config, sampled=True)
    if samples is not None or seed is not None:
        mode = CrashMode.sampled(samples or mode.samples, mode.seed if seed is None else seed, cap=mode.cap)
    steps = scenarios.alternating_flush_steps() if alternating else None
    try:
        report = scenarios.check_flush(steps, page_size=page_size, mode=mode, seed=mode.seed, flavor=flavor)
    except ValueError as e:
        raise click.UsageError(str(e))
    _finish_report(ctx, report, dump_dir)


@cli.group()
def fixture():
    """Device image fixtures"""
    pass


@fixture.command('recover')
@click.argument('file')
@click.option('--check', 'verify', is_flag=True, help="Compare against the fixture's expect block")
def fixture_recover(file, verify):
    """Recover a YAML image fixture and print what survives

    FILE may also name a fixture shipped with pmemprims, for example
    timeline_final.yaml.
    """
    try:
        image = fixtures.load_fixture(file)
        recovery = fixtures.recover_fixture(image)
    except FileNotFoundError as e:
        raise click.BadParameter(str(e), param_hint='FILE')
    except (ValueError, KeyError) as e:
        raise click.UsageError(f"Invalid fixture {file}: {e}")
    except CorruptionError as e:
        click.echo(f"Error: {e}", err=True)
        raise click.Abort()

    console = Console()
    if recovery.kind == 'log':
        table = Table(title=f"{image.name}: {len(recovery.entries)} entries, next lsn {recovery.next_lsn}")
        table.add_column('lsn', justify='right')
        table.add_column('bytes', justify='right')
        table.add_column('payload')
        for entry in recovery.entries:
            table.add_row(str(entry.lsn), str(len(entry.payload)), entry.payload[:32].hex())
    else:
        table = Table(title=f"{image.name}: {len(recovery.directory)} pages")
        for column in ('pid', 'slot', 'pvn'):
            table.add_column(column, justify='right')
        table.add_column('image')
        for pid, entry in recovery.directory.items():
            uniform = len(set(entry.image)) == 1
            summary = f"fill {entry.image[:1].hex()}" if uniform else entry.image[:16].hex() + '…'
            table.add_row(str(pid), str(entry.slot), str(entry.pvn), summary)
    console.print(table)

    if verify:
        problems = fixtures.check_expectation(image, recovery)
        for problem in problems:
            click.echo(f"❌ {problem}", err=True)
        if problems:
            raise click.ClickException(f"{len(problems)} mismatches in {file}")
        click.echo("✓ Recovery matches the expected state")


def main():
    """Entry point for console_scripts"""
    cli()


if __name__ == '__main__':
    main()
