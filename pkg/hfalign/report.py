"""
Plain-text rendering of run reports.

Tables are rendered by a jinja2 template; cells are padded by their display
width in terminal cells, so level labels holding wide characters still line
up.
"""
from __future__ import annotations

# std imports
from typing import Sequence

# 3rd party
import jinja2
from wcwidth import wcswidth

METRIC_COLUMNS = (('mean_error', 'MEAN ERROR'), ('mae', 'MAE'), ('rmse', 'RMSE'),
                  ('rmsse', 'RMSSE'), ('wrmsse', 'WRMSSE'))


def display_width(text: str) -> int:
    """Terminal cells occupied by ``text``; unprintable characters count as one."""
    width = wcswidth(text)
    return len(text) if width < 0 else width


def pad(text, width: int, align: str = 'left') -> str:
    """Pad ``text`` with spaces to ``width`` display cells."""
    text = str(text)
    fill = ' ' * max(0, width - display_width(text))
    return fill + text if align == 'right' else text + fill


def _number(value, digits: int = 4) -> str:
    if value is None:
        return '-'
    if isinstance(value, int):
        return str(value)
    return f'{value:.{digits}f}'


JINJA_ENV = jinja2.Environment(
    loader=jinja2.PackageLoader('hfalign', 'templates'),
    keep_trailing_newline=True,
    trim_blocks=True,
    lstrip_blocks=True)
JINJA_ENV.filters['pad'] = pad


class Table:
    """Header and body rows of string cells with computed column widths."""

    def __init__(self, header: Sequence[str], rows: Sequence[Sequence[str]],
                 right: Sequence[bool]):
        self.header = list(header)
        self.rows = [list(row) for row in rows]
        self.align = ['right' if flag else 'left' for flag in right]
        self.widths = [max(display_width(cell) for cell in column)
                       for column in zip(self.header, *self.rows)]

    @property
    def rule(self) -> str:
        return '  '.join('-' * width for width in self.widths)


def level_table(runs: Sequence[tuple[str, dict]]) -> Table:
    """Per-level metrics, one group of metric columns per run."""
    multi = len(runs) > 1
    header = ['LEVEL', 'AGGREGATION', 'SERIES']
    for name, _ in runs:
        header += [f'{label} {name}' if multi else label for _, label in METRIC_COLUMNS]
    first = runs[0][1]
    rows = []
    for idx, level in enumerate(first['levels']):
        row = [str(level['level']), level['label'], str(level['n_series'])]
        for _, doc in runs:
            other = doc['levels'][idx] if idx < len(doc['levels']) else {}
            row += [_number(other.get(key)) for key, _ in METRIC_COLUMNS]
        rows.append(row)
    total = ['', 'Total WRMSSE', '']
    for _, doc in runs:
        total += [''] * (len(METRIC_COLUMNS) - 1) + [_number(doc['wrmsse_total'])]
    rows.append(total)
    return Table(header, rows, [True, False, True] + [True] * (len(header) - 3))


def curve_table(runs: Sequence[tuple[str, dict]]) -> Table:
    """Alignment RMSE per multiplier; a run that skipped a multiplier shows ``-``."""
    grid = sorted({lam for _, doc in runs for lam in doc['alignment']['grid']})
    lookups = [dict(zip(doc['alignment']['grid'], doc['alignment']['objective']))
               for _, doc in runs]
    header = ['LAMBDA'] + [f'ALIGNMENT RMSE {name}' if len(runs) > 1 else 'ALIGNMENT RMSE'
                           for name, _ in runs]
    rows = []
    for lam in grid:
        row = [f'{lam:.2f}']
        for (_, doc), lookup in zip(runs, lookups):
            mark = ' *' if lam == doc['lambda_star'] else (
                ' +' if lam in doc['neighborhood'] else '')
            row.append(_number(lookup.get(lam)) + mark)
        rows.append(row)
    return Table(header, rows, [True] * len(header))


def render_report(runs: Sequence[tuple[str, dict]]) -> str:
    """
    Render one or more run reports side by side.

    :param runs: ``(name, report document)`` pairs; the first run's levels
        define the rows.
    :rtype: str
    """
    template = JINJA_ENV.get_template('report.txt.j2')
    return template.render(runs=[{'name': name, **doc} for name, doc in runs],
                           levels=level_table(runs), curve=curve_table(runs))
