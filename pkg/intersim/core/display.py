import math

import rich.console
import rich.markup
import rich.table
import rich.text

from intersim.settings import Display as DisplaySettings
from intersim.settings import color_theme

from .exceptions import ConfigError, IntersimError
from .metrics import MetricsReport, empirical_cdf


def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x):
            return '-'
        return f'{x:.4g}'
    return str(x)


def _rich_table(title, rows, colors=True):
    if not rows:
        return rich.text.Text(f'{title} (empty)')

    table = rich.table.Table(title=rich.text.Text(title, style=color_theme['header'] if colors else None))
    for k, v in rows[0].items():
        kw = {}
        if isinstance(v, (int, float)):
            kw['justify'] = 'right'
        if colors:
            if isinstance(v, (int, float)):
                kw['style'] = color_theme['number']
            elif k == 'strategy':
                kw['style'] = color_theme['strategy']
            else:
                kw['style'] = color_theme['text']
        table.add_column(k, **kw)

    for r in rows[: DisplaySettings.MAX_TABLE_ROWS]:
        table.add_row(*[rich.markup.escape(_fmt(x)) for x in r.values()])
    if len(rows) > DisplaySettings.MAX_TABLE_ROWS:
        table.add_row(*['...' for _ in rows[0]])
    return table


def summary_table(reports, colors=True):
    rows = []
    for report in reports:
        s = report.summary()
        rows.append(
            {
                'strategy': s['strategy'],
                'runs': s['runs'],
                'cavs': s['cavs_completed'],
                'reopt/cav': s['mean_reoptimizations'],
                'downlinks': s['total_downlinks'],
                'gas proxy': s['gas_proxy'],
                'dist p50': s['distance_p50'],
                'dist p95': s['distance_p95'],
                'min same-lane': s['min_same_lane_distance'],
                'min crossing': s['min_crossing_distance'],
                'extensions': s['extensions'],
                'violations': report.violations,
            }
        )
    return _rich_table('strategies', rows, colors)


def cdf_preview(report: MetricsReport, colors=True):
    rows = [
        {'fraction': q, 'distance': x}
        for x, q in empirical_cdf(report.traveled_distances, DisplaySettings.CDF_PREVIEW_POINTS)
    ]
    return _rich_table(f'traveled distance CDF ({report.strategy})', rows, colors)


def status_line(report: MetricsReport):
    if report.is_safe:
        return rich.text.Text(f'{report.strategy}: safe', style=color_theme['ok'])
    return rich.text.Text(f'{report.strategy}: {report.violations} safety violations', style=color_theme['error'])


def print_exception(console, e: IntersimError):
    if isinstance(e, ConfigError) and e.text_ref is not None:
        for line in e.text_ref.get_pinpoint_text(rich=True):
            console.print(line)
        console.print()
        head = f'{type(e).__name__}: {e.field}: ' if e.field else f'{type(e).__name__}: '
        console.print(rich.text.Text(head + e.message, style=color_theme['error']))
        return
    console.print(rich.text.Text(str(e), style=color_theme['error']))


def print_to_string(x):
    console = rich.console.Console(color_system=None, width=160)
    with console.capture() as capture:
        console.print(x)
    return capture.get()
