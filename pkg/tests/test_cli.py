"""Tests for the ``hfalign`` command line."""
# std imports
import os
import sys
import subprocess

# 3rd party
import pandas as pd
import pytest

# local
from hfalign.cli import main, validate_args


def test_synth(tmp_path):
    """synth writes the three M5 files."""
    # given,
    out = str(tmp_path / 'data')

    # exercise,
    status = main(['synth', f'--out={out}', '--items=3', '--stores=1', '--days=80'])

    # verify.
    assert status == 0
    sales = pd.read_csv(os.path.join(out, 'sales_train_evaluation.csv'))
    assert len(sales) == 3
    assert sales.columns[-1] == 'd_80'
    assert os.path.exists(os.path.join(out, 'calendar.csv'))
    assert os.path.exists(os.path.join(out, 'sell_prices.csv'))


def test_run_and_report(quick_config, capsys):
    """run succeeds and report prints the tables."""
    # exercise,
    status = main(['run', f'--config={quick_config}', '--seed=4'])
    out = os.path.join(os.path.dirname(quick_config), 'run')
    report_status = main(['report', out])

    # verify.
    assert status == 0
    assert report_status == 0
    assert 'Alignment curve' in capsys.readouterr().out


def test_bad_option_value(quick_config):
    """A non-numeric thread count is a configuration error."""
    # exercise, verify.
    assert main(['run', f'--config={quick_config}', '--threads=many']) == 2


def test_bad_grid(quick_config):
    """A grid outside (0, 2] is a configuration error."""
    # exercise, verify.
    assert main(['run', f'--config={quick_config}', '--grid=0.5,3.0']) == 2


def test_unknown_command(capsys):
    """Usage errors exit with the configuration status."""
    # exercise,
    status = main(['frobnicate'])

    # verify.
    assert status == 2
    assert 'Usage' in capsys.readouterr().err


def test_missing_config(tmp_path):
    """An unreadable configuration file is a configuration error."""
    # exercise, verify.
    assert main(['run', f'--config={tmp_path / "absent.toml"}']) == 2


def test_report_not_a_run(tmp_path):
    """Reporting on a directory without a run is a data error."""
    # exercise, verify.
    assert main(['report', str(tmp_path)]) == 3


def test_malformed_sales(quick_config, tmp_path):
    """Corrupt input files exit with the data status."""
    # given,
    data = str(tmp_path / 'data')
    main(['synth', f'--out={data}', '--items=3', '--stores=1', '--days=80'])
    sales = os.path.join(data, 'sales_train_evaluation.csv')
    frame = pd.read_csv(sales)
    frame.loc[1, 'd_5'] = 'x'
    frame.to_csv(sales, index=False)
    with open(quick_config, 'a', encoding='utf8') as fout:
        fout.write(f'\n[data]\nsales = "{sales}"\n'
                   f'calendar = "{os.path.join(data, "calendar.csv")}"\n'
                   f'prices = "{os.path.join(data, "sell_prices.csv")}"\n')

    # exercise, verify.
    assert main(['run', f'--config={quick_config}']) == 3


def test_validate_args_converts():
    """Numeric options are converted, absent ones stay None."""
    # given,
    opts = {'--threads': '2', '--seed': None, '--items': '5', '--stores': '1',
            '--days': '90', '--intermittency': '0.5'}

    # exercise,
    opts = validate_args(opts)

    # verify.
    assert opts['--threads'] == 2
    assert opts['--seed'] is None
    assert opts['--intermittency'] == 0.5


@pytest.mark.skipif(sys.platform == 'win32', reason='posix paths')
def test_module_entry_point(tmp_path):
    """``python -m hfalign.cli`` runs the same program."""
    # given,
    env = {**os.environ, 'PYTHONPATH': os.path.dirname(os.path.dirname(__file__))}

    # exercise,
    proc = subprocess.run([sys.executable, '-m', 'hfalign.cli', 'synth',
                           f'--out={tmp_path}', '--items=2', '--stores=1', '--days=60'],
                          env=env, capture_output=True, text=True, check=False)

    # verify.
    assert proc.returncode == 0, proc.stderr
    assert os.path.exists(tmp_path / 'calendar.csv')
