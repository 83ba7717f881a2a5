import argparse
import json
import os
import sys
from pathlib import Path

import rich.console
from rich.logging import RichHandler

from . import __version__, settings
from .campaign import PRESETS, CampaignSpec, parse_campaign, preset_spec, run_campaign
from .core import display
from .core.config import emit_config, parse_config
from .core.exceptions import IntersimError
from .core.sim import STRATEGIES, ScenarioConfig, run_scenario
from .loggers import DEBUG, install_handler, set_level

parser = argparse.ArgumentParser(description='Intersection manager simulator')
parser.add_argument('-v', '--version', action='version', version=__version__)
parser.add_argument(
    '-c',
    '--config',
    type=str,
    help='path to a JSON settings file (default: ~/.intersim_conf.json)',
)
parser.add_argument(
    '--python-traceback',
    action='store_true',
    help="Show the Python traceback when an error stops the program",
)
sub = parser.add_subparsers(dest='command', required=True)

p_run = sub.add_parser('run', help='run a single scenario')
p_run.add_argument('scenario', nargs='?', help='scenario file (defaults apply when omitted)')
p_run.add_argument('--strategy', choices=STRATEGIES)
p_run.add_argument('--seed', type=int)
p_run.add_argument('--cavs', type=int)
p_run.add_argument('-o', '--output', type=str, help='directory for the run tables')
p_run.add_argument('--emit-config', action='store_true', help='print the resolved scenario and exit')

p_campaign = sub.add_parser('campaign', help='run a campaign file')
p_campaign.add_argument('spec', help='scenario file with a [campaign] section')
p_campaign.add_argument('-o', '--output', type=str, default='results')
p_campaign.add_argument('-j', '--jobs', type=int, default=1)

p_presets = sub.add_parser('presets', help='run a named experiment')
p_presets.add_argument('name', nargs='?', choices=list(PRESETS), help='omit to list the presets')
p_presets.add_argument('--strategy', choices=STRATEGIES, action='append', help='restrict to a strategy (repeatable)')
p_presets.add_argument('--seed', type=int, default=0)
p_presets.add_argument('--cavs', type=int)
p_presets.add_argument('-o', '--output', type=str, default='results')
p_presets.add_argument('-j', '--jobs', type=int, default=1)


def update_settings(path):
    config = json.load(path.open())
    if 'debug' in config:
        settings.debug = config['debug']
    if 'lp_backend' in config:
        settings.lp_backend = config['lp_backend']
    if 'dump_dir' in config:
        settings.dump_dir = config['dump_dir']
    if 'color_scheme' in config:
        settings.color_theme.update(config['color_scheme'])


def output_dir(arg):
    return Path(os.environ.get(settings.output_env_var) or arg)


def _override(config: ScenarioConfig, args):
    kw = {k: getattr(args, k) for k in ('strategy', 'seed', 'cavs') if getattr(args, k) is not None}
    if kw:
        config = config.replace(**kw)
        config.validate()
    return config


def _run(args, console):
    config = parse_config(args.scenario) if args.scenario else ScenarioConfig()
    config = _override(config, args)
    if args.emit_config:
        console.print(emit_config(config), markup=False, highlight=False)
        return 0
    if args.output or os.environ.get(settings.output_env_var):
        spec = CampaignSpec(((config, 1),), output_dir(args.output))
        status, merged = run_campaign(spec)
        reports = list(merged.values())
    else:
        _trace, report = run_scenario(config)
        reports = [report]
        status = 0 if report.is_safe else 1
    console.print(display.summary_table(reports))
    for r in reports:
        if r.traveled_distances:
            console.print(display.cdf_preview(r))
        console.print(display.status_line(r))
    return status


def _campaign(spec, console):
    status, merged = run_campaign(spec)
    console.print(display.summary_table(list(merged.values())))
    for r in merged.values():
        console.print(display.status_line(r))
    console.print(f'outputs written to {spec.output_dir}')
    return status


def main(argv=None):
    args = parser.parse_args(argv)
    console = rich.console.Console(stderr=False)
    if sys.stderr.isatty():
        install_handler(RichHandler(show_path=False))

    if args.config:
        update_settings(Path(args.config))
    else:
        config_path = Path.home() / '.intersim_conf.json'
        if config_path.exists():
            update_settings(config_path)
    if settings.debug:
        set_level(DEBUG)

    error_code = 0
    try:
        if args.command == 'run':
            error_code = _run(args, console)
        elif args.command == 'campaign':
            error_code = _campaign(parse_campaign(args.spec, output_dir(args.output), args.jobs), console)
        elif args.name is None:
            for name, (_, reps, tables) in PRESETS.items():
                console.print(f'{name}: {reps} repetitions per strategy, tables: {", ".join(tables) or "summary only"}')
        else:
            strategies = tuple(args.strategy) if args.strategy else STRATEGIES
            spec = preset_spec(args.name, output_dir(args.output), args.cavs, args.seed, strategies, args.jobs)
            error_code = _campaign(spec, console)
    except IntersimError as e:
        display.print_exception(console, e)
        error_code = 2
        if args.python_traceback:
            raise
    except KeyboardInterrupt:
        print("Interrupted (Ctrl+C)")
        error_code = 130

    return error_code


if __name__ == '__main__':
    sys.exit(main())
