import time
from contextlib import contextmanager
from pathlib import Path

import runtype
from rich.text import Text

from . import settings

mut_dataclass = runtype.dataclass(check_types=settings.typecheck, frozen=False)
dataclass = runtype.dataclass(check_types=settings.typecheck)


class Benchmark:
    "Accumulates wall-clock time per named section"

    def __init__(self):
        self.total = {}
        self.calls = {}

    @contextmanager
    def measure(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.total[name] = self.total.get(name, 0.0) + time.perf_counter() - start
            self.calls[name] = self.calls.get(name, 0) + 1

    def merge(self, other: 'Benchmark'):
        for name, total in other.total.items():
            self.total[name] = self.total.get(name, 0.0) + total
            self.calls[name] = self.calls.get(name, 0) + other.calls[name]

    def as_dict(self):
        return {
            name: {'seconds': round(total, 6), 'calls': self.calls[name]}
            for name, total in sorted(self.total.items())
        }


class TextPos:
    __slots__ = 'char_index', 'line', 'column'

    def __init__(self, char_index, line, column):
        self.char_index = char_index
        self.line = line
        self.column = column


class TextRange:
    __slots__ = 'start', 'end'

    def __init__(self, start, end):
        self.start = start
        self.end = end


@mut_dataclass
class TextReference:
    "A location inside a scenario file, used to pinpoint configuration errors"

    text: str
    source_file: str
    ref: TextRange

    def line_text(self):
        pos = self.ref.start.char_index
        before = self.text[:pos].rsplit('\n', 1)[-1]
        after = self.text[pos:].split('\n', 1)[0]
        return before.replace('\t', '    '), after.replace('\t', '    ')

    def get_pinpoint_text(self, rich=False):
        before, after = self.line_text()
        width = max(1, min(len(after), self.ref.end.char_index - self.ref.start.char_index))
        marker = ' ' * len(before) + '^' * width
        start = self.ref.start
        header = "file '%s' line %d, column %d" % (
            Path(self.source_file).name,
            start.line,
            start.column,
        )
        if rich:
            return [f"  [red]~~~[/red] {header}", Text(before + after), Text(marker)]
        return f"  ~~~ {header}:\n{before}{after}\n{marker}\n"

    def __repr__(self):
        return '<text-ref line %d>' % self.ref.start.line
