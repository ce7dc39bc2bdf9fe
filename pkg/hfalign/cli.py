"""
Hierarchical forecasting with loss-multiplier alignment.

Usage:
  hfalign run --config=<file> [--frame=<frame>] [--grid=<grid>] [--threads=<n>]
                              [--seed=<n>] [--out=<dir>] [--verbose]
  hfalign sweep --config=<file> [--frame=<frame>] [--grid=<grid>] [--threads=<n>]
                                [--seed=<n>] [--out=<dir>] [--verbose]
  hfalign report <run_dir> [--compare=<dir>...] [--verbose]
  hfalign synth --out=<dir> [--seed=<n>] [--items=<n>] [--stores=<n>] [--days=<n>]
                            [--intermittency=<p>] [--verbose]
  hfalign --help

Options:
  --config=<file>       TOML pipeline configuration.
  --frame=<frame>       Held-out frame, validation or evaluation.
  --grid=<grid>         Multipliers, "start:stop:step" or "a,b,c".
  --threads=<n>         Worker processes for per-store and per-multiplier training.
  --seed=<n>            Root seed; for synth the generator seed, 7 when absent.
  --out=<dir>           Output directory.
  --compare=<dir>       Another run directory, rendered side by side.
  --items=<n>           Synthetic items per store. [default: 20]
  --stores=<n>          Synthetic stores. [default: 2]
  --days=<n>            Synthetic observed days. [default: 400]
  --intermittency=<p>   Probability of a zero sale. [default: 0.6]
  --verbose             Log at DEBUG level.
  --help                Display usage.

Exit status is 0 on success, 2 for configuration errors, 3 for data errors and
4 for training errors.
"""
# std imports
import sys
import logging

# 3rd party
import docopt

# local
from .config import load_config
from .pipeline import cmd_run, cmd_sweep, cmd_synth, cmd_report
from .exceptions import ConfigError, HfalignError

log = logging.getLogger(__name__)

_logfmt = '%(levelname)s %(filename)s:%(lineno)d %(message)s'


def _number(opts, key, kind):
    value = opts[key]
    if value is None:
        return None
    try:
        return kind(value)
    except ValueError as err:
        raise ConfigError(f'{key}: expected {kind.__name__}, got {value!r}') from err


def validate_args(opts):
    """Validate and convert options provided by docopt parsing."""
    opts['--threads'] = _number(opts, '--threads', int)
    opts['--seed'] = _number(opts, '--seed', int)
    for key in ('--items', '--stores', '--days'):
        opts[key] = _number(opts, key, int)
    opts['--intermittency'] = _number(opts, '--intermittency', float)
    return opts


def main(argv=None):
    """Program entry point, returns the exit status."""
    try:
        opts = docopt.docopt(__doc__, argv=argv)
    except docopt.DocoptExit as err:
        print(err, file=sys.stderr)
        return ConfigError.exit_code
    logging.basicConfig(level='DEBUG' if opts['--verbose'] else 'INFO', format=_logfmt,
                        force=True)
    try:
        opts = validate_args(opts)
        if opts['synth']:
            seed = 7 if opts['--seed'] is None else opts['--seed']
            cmd_synth(opts['--out'], seed, opts['--items'], opts['--stores'], opts['--days'],
                      opts['--intermittency'])
        elif opts['report']:
            print(cmd_report(opts['<run_dir>'], opts['--compare']), end='')
        else:
            config = load_config(opts['--config'], frame=opts['--frame'], seed=opts['--seed'],
                                 threads=opts['--threads'], out=opts['--out'],
                                 grid=opts['--grid'])
            if opts['run']:
                cmd_run(config)
            else:
                cmd_sweep(config)
    except HfalignError as err:
        log.error('%s', err)
        return err.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
