#!/usr/bin/env python3

import sys
import json
import argparse


SUBCOMMANDS = {
    'critical-points': 'Locate and classify the zeros of the tilted drift',
    'morse-graph': 'Trace unstable manifolds into the Morse edge list',
    'hstar': 'Graph exponent h* from the minimal rooted spanning tree',
    'theorem5': 'Cycle-tree flux exponent for an edge-list graph',
    'tree-stationary': 'Stationary law of a finite chain by the matrix-tree formula',
    'merge-tree': 'h* from the sublevel merge tree on the cover',
    'action-min': 'Minimise the discrete action between two cover points',
    'fp-flux': 'Stationary Fokker-Planck flux over tilt and noise lists',
    'sde-flux': 'Monte-Carlo flux from Euler-Maruyama paths',
    'asymptotics': 'Flux exponents against h*(c) over a sweep',
    'nr-demo': 'Negative-resistance check: F(c2) < F(c1) for c1 < c2',
    'measure-heights': 'Invariant-measure ball masses against vertex heights',
}


def check_prerequisites():
    """Initial check for prerequisites before importing other modules."""
    try:
        from fluxlab.PrerequisitesManager import PrerequisitesManager
        manager = PrerequisitesManager()
        return manager.verify_environment()
    except ImportError as e:
        print(f"\n❌ Error importing PrerequisitesManager: {str(e)}")
        return False
    except Exception as e:
        print(f"\n❌ Unexpected error during prerequisites check: {str(e)}")
        return False


def _float_list(text):
    return [float(v) for v in text.replace(',', ' ').split()]


def _point(text):
    return _float_list(text)


def parse_arguments(argv=None):
    parser = argparse.ArgumentParser(
        prog='flux-lab',
        description='Small-noise flux toolkit for diffusions on flat tori',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    Graph exponent of the negative-resistance field at zero tilt:
    $ python flux_lab.py hstar --preset nr2006 --c 0

    Cycle-tree exponent of a hand-built graph:
    $ python flux_lab.py theorem5 --edges tests/data/crst_counterexample.csv

    Fokker-Planck flux sweep on a 256x256 grid:
    $ python flux_lab.py fp-flux --preset nr2006 --c-list 0.1,0.2 --eps-list 0.5,0.4 --grid 256

    Replay a previous run:
    $ python flux_lab.py --manifest results/manifest.json
        """
    )

    parser.add_argument('--config', type=str, default='./config.json',
                        help='Path to configuration file (default: ./config.json)')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'],
                        default=None, help='Set logging level (overrides config file setting)')
    parser.add_argument('--jobs', type=int, default=None,
                        help='Worker threads for sweeps (FLUXLAB_JOBS overrides)')
    parser.add_argument('--output', type=str, default=None,
                        help='Output directory (overrides config file setting)')
    parser.add_argument('--manifest', type=str, default=None,
                        help='Replay the inputs recorded in a previous manifest.json')
    parser.add_argument('--no-progress', action='store_true',
                        help='Disable the sweep progress panel')

    subparsers = parser.add_subparsers(dest='subcommand')
    for name, help_text in SUBCOMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        _add_subcommand_arguments(name, sub)

    args = parser.parse_args(argv)
    if args.subcommand is None and args.manifest is None:
        parser.error('a subcommand or --manifest is required')
    return args


def _add_potential_arguments(sub):
    group = sub.add_mutually_exclusive_group()
    group.add_argument('--preset', type=str, help='Named potential (nr2006, cos1d, cos2d, twowell, zero)')
    group.add_argument('--potential', type=str, help='JSON file with a potential spec')
    sub.add_argument('--c', type=float, help='Tilt magnitude')
    sub.add_argument('--direction', type=_float_list, help='Tilt direction, e.g. "1,0"')


def _add_subcommand_arguments(name, sub):
    if name in ('theorem5', 'tree-stationary'):
        sub.add_argument('--edges', type=str, help='Edge-list CSV')
        if name == 'theorem5':
            sub.add_argument('--root', type=str, help='Also report the RST rooted here')
            sub.add_argument('--sign', choices=['+', '-'], help='Also report the CRST of this sign')
        else:
            sub.add_argument('--chain', type=str, help='Transition-probability CSV')
        return

    _add_potential_arguments(sub)
    sub.add_argument('--grid', type=int, help='Grid cells per axis')

    if name == 'merge-tree':
        sub.add_argument('--window-periods', type=int, help='Initial window in periods')
        sub.add_argument('--barcode', action='store_true', help='Also export the PH0 barcode')
    elif name == 'action-min':
        sub.add_argument('--start', type=_point, help='Start point on the cover, e.g. "1.2,0.5"')
        sub.add_argument('--end', type=_point, help='End point on the cover')
        sub.add_argument('--T', type=float, help='Single time horizon')
        sub.add_argument('--T-list', dest='T_list', type=_float_list, help='Time horizons to sweep')
        sub.add_argument('--knots', dest='knots_n', type=int, help='Knots per path')
    elif name in ('fp-flux', 'asymptotics', 'nr-demo'):
        sub.add_argument('--c-list', dest='c_list', type=_float_list, help='Tilt magnitudes')
        sub.add_argument('--eps-list', dest='eps_list', type=_float_list, help='Noise intensities')
        sub.add_argument('--eps', type=float, help='Single noise intensity')
        sub.add_argument('--form', type=str, help='dx, dy, or a custom covector "a,b"')
        if name == 'fp-flux':
            sub.add_argument('--dump', action='store_true', help='Dump density and current binaries')
        if name == 'asymptotics':
            sub.add_argument('--compare', action='store_true', help='Add merge-tree h* to the sweep')
        if name == 'nr-demo':
            sub.add_argument('--c1', type=float, help='Smaller tilt')
            sub.add_argument('--c2', type=float, help='Larger tilt')
    elif name == 'sde-flux':
        sub.add_argument('--eps', type=float, help='Noise intensity')
        sub.add_argument('--dt', type=float, help='Time step')
        sub.add_argument('--T', type=float, help='Horizon')
        sub.add_argument('--batch', type=int, help='Independent paths')
        sub.add_argument('--seed', type=int, help='Root seed')
        sub.add_argument('--form', type=str, help='dx, dy, or a custom covector "a,b"')
        sub.add_argument('--compare', action='store_true', help='Compare with the Fokker-Planck flux')
    elif name == 'measure-heights':
        sub.add_argument('--eps', type=float, help='Noise intensity')
        sub.add_argument('--r', type=float, help='Ball radius around each vertex')


GLOBAL_KEYS = {'config', 'log_level', 'jobs', 'output', 'manifest', 'no_progress', 'preset', 'potential'}


def build_run_config(args):
    """Turn parsed arguments into a RunConfig; only options that were given are kept."""
    run_config = {k: v for k, v in vars(args).items()
                  if k not in GLOBAL_KEYS and v is not None and v is not False}
    if getattr(args, 'preset', None):
        run_config['potential'] = {'preset': args.preset}
    elif getattr(args, 'potential', None):
        from fluxlab.Errors import InputError
        try:
            with open(args.potential, 'r') as f:
                run_config['potential'] = json.load(f)
        except FileNotFoundError:
            raise InputError(f"Potential file not found: {args.potential}")
        except json.JSONDecodeError as e:
            raise InputError(f"Invalid JSON in potential file: {e}")
    form = run_config.get('form')
    if form is not None and form not in ('dx', 'dy'):
        run_config['form'] = _float_list(form)
    if args.subcommand == 'action-min' and 'T' in run_config:
        run_config.setdefault('T_list', [])
        run_config['T_list'] = [run_config.pop('T')] + run_config['T_list']
    if args.jobs is not None:
        run_config['jobs'] = args.jobs
    if args.output is not None:
        run_config['output_directory'] = args.output
    return run_config


def main(argv=None):
    print("\nFlux Lab: small-noise fluxes on flat tori")
    print("=========================================\n")

    args = parse_arguments(argv)

    if not check_prerequisites():
        print("\n❌ Prerequisites check failed. Please resolve the issues before proceeding.")
        return 2

    try:
        from fluxlab import ConfigurationManager, LogManager, RunManager
        from fluxlab.Errors import FluxLabError
        from fluxlab.OutputManager import load_manifest
    except ImportError as e:
        print(f"\n❌ Error importing fluxlab: {str(e)}")
        return 2

    try:
        config_manager = ConfigurationManager(args.config)

        if args.log_level:
            config_manager.config['logging']['log_level'] = args.log_level

        logging_config = config_manager.config['logging']
        log_manager = LogManager(
            log_path=config_manager.get_log_path(),
            log_level=logging_config['log_level'],
            log_format=logging_config['log_format'],
            max_log_size_mb=logging_config['max_log_size_mb'],
            backup_count=logging_config['backup_count']
        )
        logger = log_manager.get_logger()

        if args.manifest:
            run_config = dict(load_manifest(args.manifest)['inputs'])
            if args.output is not None:
                run_config['output_directory'] = args.output
            logger.info(f"Replaying {args.manifest}")
        else:
            run_config = build_run_config(args)

        logger.info(f"Starting flux-lab {run_config.get('subcommand')}")
        run_manager = RunManager(config_manager, logger, progress=not args.no_progress)
        result = run_manager.run(run_config)

        print(result['summary'])
        print(f"\n✅ {run_config.get('subcommand')} completed; manifest at {result['manifest']}")
        return 0

    except KeyboardInterrupt:
        print("\n⚠️ Operation cancelled by user")
        return 3
    except FluxLabError as e:
        print(f"\n❌ {e.name}: {e.message}")
        for key, value in e.context.items():
            print(f"   {key}: {value}")
        if 'logger' in locals():
            logger.error(e.describe())
        return e.exit_code
    except Exception as e:
        print(f"\n❌ Error: {str(e)}")
        if 'logger' in locals():
            logger.error(f"Unhandled exception: {str(e)}", exc_info=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
