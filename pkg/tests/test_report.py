"""Tests for the plain-text report tables."""
# 3rd party
import pytest

# local
from hfalign.report import Table, pad, curve_table, level_table, display_width, render_report


def _doc(wrmsse_total=0.5, lambda_star=1.0):
    return {
        'frame': 'validation', 'seed': 0, 'lambda_star': lambda_star,
        'neighborhood': [0.9, 1.0, 1.1], 'wrmsse_total': wrmsse_total,
        'levels': [{'level': 1, 'label': 'Total', 'n_series': 1, 'mean_error': -0.25,
                    'mae': 1.0, 'rmse': 1.5, 'rmsse': 0.5, 'wrmsse': 0.5},
                   {'level': 2, 'label': 'State', 'n_series': 2, 'mean_error': 0.0,
                    'mae': 0.5, 'rmse': 0.75, 'rmsse': None, 'wrmsse': 0.25}],
        'alignment': {'grid': [0.9, 1.0, 1.1], 'objective': [3.0, 1.0, None]},
    }


@pytest.mark.parametrize('text,expected', [('abc', 3), ('店舗', 4), ('é', 1)])
def test_display_width(text, expected):
    """Wide characters take two cells, combining marks none."""
    # exercise, verify.
    assert display_width(text) == expected


def test_display_width_control_characters():
    """Unprintable text falls back to its length."""
    # exercise, verify.
    assert display_width('a\x07b') == 3


def test_pad():
    """Padding counts display cells."""
    # exercise, verify.
    assert pad('店', 4) == '店  '
    assert pad(7, 3, 'right') == '  7'
    assert pad('toolong', 3) == 'toolong'


def test_table_widths():
    """Column widths cover header and every row."""
    # exercise,
    table = Table(['A', 'BB'], [['店舗', 'x']], [False, True])

    # verify.
    assert table.widths == [4, 2]
    assert table.rule == '----  --'
    assert table.align == ['left', 'right']


def test_level_table_single_run():
    """One row per level plus the total, missing values as dashes."""
    # exercise,
    table = level_table([('run', _doc())])

    # verify.
    assert table.header[:4] == ['LEVEL', 'AGGREGATION', 'SERIES', 'MEAN ERROR']
    assert table.rows[0][:4] == ['1', 'Total', '1', '-0.2500']
    assert table.rows[1][6] == '-'
    assert table.rows[-1][1] == 'Total WRMSSE'
    assert table.rows[-1][-1] == '0.5000'


def test_level_table_compare():
    """Compared runs add a labelled group of metric columns each."""
    # exercise,
    table = level_table([('a', _doc()), ('b', _doc(wrmsse_total=0.75))])

    # verify.
    assert 'WRMSSE a' in table.header
    assert 'WRMSSE b' in table.header
    assert table.rows[-1][-1] == '0.7500'


def test_curve_marks():
    """The selected multiplier is starred and its neighbors marked."""
    # exercise,
    table = curve_table([('run', _doc())])

    # verify.
    assert [row[0] for row in table.rows] == ['0.90', '1.00', '1.10']
    assert table.rows[0][1] == '3.0000 +'
    assert table.rows[1][1] == '1.0000 *'
    assert table.rows[2][1] == '- +'


def test_curve_union_of_grids():
    """Runs over different grids show a dash where a multiplier was not evaluated."""
    # given,
    other = _doc()
    other['alignment'] = {'grid': [1.0, 1.2], 'objective': [2.0, 1.0]}
    other['lambda_star'] = 1.2
    other['neighborhood'] = [1.0, 1.2]

    # exercise,
    table = curve_table([('a', _doc()), ('b', other)])

    # verify.
    assert [row[0] for row in table.rows] == ['0.90', '1.00', '1.10', '1.20']
    assert table.rows[0][2] == '-'
    assert table.rows[3][2] == '1.0000 *'


def test_render_aligned():
    """Every table line of a section has the same display width."""
    # given,
    doc = _doc()
    doc['levels'][1]['label'] = '州'

    # exercise,
    text = render_report([('run', doc)])

    # verify.
    assert text.startswith('run run: frame validation, seed 0, lambda* 1.00, '
                           'neighborhood 0.9, 1.0, 1.1\n')
    lines = text.splitlines()
    start = lines.index('Forecast errors by level') + 1
    section = lines[start:start + 5]
    assert len({display_width(line.rstrip()) for line in section}) == 1
    assert text.endswith('\n')
