"""Scenario files: a small key/value format with [sections].

    strategy = "event"
    cavs = 40

    [planner]
    horizon = 112
    epsilon = 1e-5

    [noise]
    sigma0 = [[0.6, 0.18],
              [0.18, 0.06]]

Omitted keys keep their defaults. Every error points at the offending line.
"""
import math
from ast import literal_eval
from pathlib import Path

import numpy as np
from lark import Lark, Transformer, UnexpectedInput, UnexpectedToken, v_args

from intersim.utils import TextPos, TextRange, TextReference, dataclass

from .dynamics import check_psd
from .event import THRESHOLD_EPSILON, THRESHOLD_ONE_MINUS_EPSILON
from .exceptions import ConfigError, ConfigSyntaxError, ValidationError
from .geometry import IntersectionGeometry
from .planner import PlannerConfig
from .sim import STRATEGIES, NoiseConfig, ScenarioConfig

MATRIX = 'matrix'
PAIR = 'pair'
STRLIST = 'strlist'

SCHEMA = {
    (): {
        'strategy': str,
        'cavs': int,
        'seed': int,
        'inter_arrival': float,
        'speed_range': PAIR,
        'lp_backend': str,
    },
    ('geometry',): {
        'pre_danger_radius': float,
        'danger_radius': float,
        'lane_width': float,
        'half_length': float,
        'safety_gap': float,
    },
    ('planner',): {
        'horizon': int,
        'dt': float,
        'a_min': float,
        'a_max': float,
        'v_min': float,
        'v_max': float,
        'jerk': float,
        'epsilon': float,
        'gamma': float,
        'beta': float,
        'big_m': float,
    },
    ('noise',): {
        'sigma0': MATRIX,
        'process_noise': MATRIX,
        'gps_std': float,
        'enabled': bool,
        'occupancy_threshold': str,
    },
}

CHOICES = {
    'strategy': STRATEGIES,
    'lp_backend': ('simplex', 'highs'),
    'noise.occupancy_threshold': (THRESHOLD_EPSILON, THRESHOLD_ONE_MINUS_EPSILON),
}

POSITIVE = {
    'inter_arrival',
    'geometry.pre_danger_radius',
    'geometry.danger_radius',
    'geometry.lane_width',
    'geometry.half_length',
    'planner.horizon',
    'planner.dt',
    'planner.jerk',
    'planner.gamma',
    'planner.beta',
    'planner.big_m',
}
NON_NEGATIVE = {'cavs', 'seed', 'geometry.safety_gap', 'noise.gps_std'}


# -- parsing --


class Postlexer:
    "Drops newlines inside brackets, so lists may span lines"

    def process(self, stream):
        depth = 0
        for token in stream:
            if not (depth and token.type == '_NL'):
                yield token
            if token.type == 'LSQB':
                depth += 1
            elif token.type == 'RSQB':
                depth -= 1

    @property
    def always_accept(self):
        return ('_NL',)


parser = Lark.open(
    'scenario.lark',
    rel_to=__file__,
    parser='lalr',
    postlex=Postlexer(),
    propagate_positions=True,
)


def make_text_reference(text, source_file, meta):
    ref = TextRange(
        TextPos(meta.start_pos, meta.line, meta.column),
        TextPos(meta.end_pos, meta.end_line, meta.end_column),
    )
    return TextReference(text, str(source_file), ref)


@dataclass
class Entry:
    section: tuple
    key: str
    value: object
    text_ref: TextReference


@dataclass
class SectionHeader:
    path: tuple
    text_ref: TextReference


class ScenarioTransformer(Transformer):
    def __init__(self, text, source_file):
        super().__init__()
        self.code_ref = text, source_file

    def start(self, items):
        return items

    @v_args(meta=True)
    def section(self, meta, children):
        (path,) = children
        return SectionHeader(path, make_text_reference(*self.code_ref, meta))

    def dotted(self, names):
        return tuple(str(n) for n in names)

    @v_args(meta=True)
    def assignment(self, meta, children):
        key, value = children
        return Entry((), str(key), value, make_text_reference(*self.code_ref, meta))

    def list(self, items):
        return list(items)

    def number(self, children):
        (tok,) = children
        try:
            return int(tok)
        except ValueError:
            return float(tok)

    def string(self, children):
        (tok,) = children
        return literal_eval(str(tok))

    def true(self, _):
        return True

    def false(self, _):
        return False

    def inf(self, children):
        (tok,) = children
        return float(tok)


def parse_entries(text: str, source_file='<string>', schema=None):
    "Parses scenario text into a list of Entry, each tagged with its section"
    schema = SCHEMA if schema is None else schema
    try:
        tree = parser.parse(text + '\n')
    except UnexpectedInput as e:
        pos = TextPos(e.pos_in_stream, e.line, e.column)
        ref = TextReference(text, str(source_file), TextRange(pos, pos))
        if isinstance(e, UnexpectedToken):
            if e.token.type == '$END':
                msg = "file ended unexpectedly"
            else:
                msg = "unexpected token %r" % str(e.token)
        else:
            msg = "unexpected character %r" % text[e.pos_in_stream]
        raise ConfigSyntaxError.make(msg, text_ref=ref)

    items = ScenarioTransformer(text, source_file).transform(tree)
    section = ()
    entries = []
    for item in items:
        if isinstance(item, SectionHeader):
            if item.path not in schema:
                raise ConfigError.make(f"unknown section [{'.'.join(item.path)}]", text_ref=item.text_ref)
            section = item.path
        else:
            entries.append(item.replace(section=section))
    return entries


# -- validation --


def _field_name(section, key):
    return '.'.join(section + (key,))


def _coerce(field, kind, value, ref):
    def fail(expected):
        raise ConfigError.make(f"expected {expected}, got {value!r}", field=field, text_ref=ref)

    if kind is bool:
        if not isinstance(value, bool):
            fail('true or false')
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            fail('an integer')
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail('a number')
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            fail('a string')
        return value
    if kind == PAIR:
        if not (isinstance(value, list) and len(value) == 2):
            fail('a list of two numbers')
        return tuple(_coerce(field, float, v, ref) for v in value)
    if kind == STRLIST:
        if not (isinstance(value, list) and all(isinstance(v, str) for v in value)):
            fail('a list of strings')
        return tuple(value)
    if kind == MATRIX:
        if not (isinstance(value, list) and len(value) == 2 and all(isinstance(r, list) and len(r) == 2 for r in value)):
            fail('a 2x2 matrix')
        return np.array([[_coerce(field, float, v, ref) for v in row] for row in value])
    raise AssertionError(kind)


def _check_single(field, value, ref):
    def fail(msg):
        raise ConfigError.make(msg, field=field, text_ref=ref)

    if field in CHOICES and value not in CHOICES[field]:
        fail(f"must be one of {', '.join(CHOICES[field])}")
    if field in POSITIVE and not value > 0:
        fail("must be positive")
    if field in NON_NEGATIVE and not value >= 0:
        fail("must not be negative")
    if isinstance(value, float) and math.isnan(value):
        fail("must be a number")
    if field == 'planner.epsilon' and not 0 < value < 1:
        fail("must lie in (0, 1)")
    if field == 'speed_range' and not 0 <= value[0] <= value[1]:
        fail("must be [low, high] with 0 <= low <= high")


def collect_values(entries, schema):
    "Type-checked values per section, plus the text reference of every given field"
    values = {section: {} for section in schema}
    refs = {}
    for e in entries:
        field = _field_name(e.section, e.key)
        keys = schema[e.section]
        if e.key not in keys:
            raise ConfigError.make("unknown key", field=field, text_ref=e.text_ref)
        if field in refs:
            raise ConfigError.make("key given twice", field=field, text_ref=e.text_ref)
        value = _coerce(field, keys[e.key], e.value, e.text_ref)
        _check_single(field, value, e.text_ref)
        values[e.section][e.key] = value
        refs[field] = e.text_ref
    return values, refs


def build_config(entries, default_ref=None) -> ScenarioConfig:
    values, refs = collect_values(entries, SCHEMA)

    geometry = IntersectionGeometry(**values[('geometry',)])
    planner = PlannerConfig(**values[('planner',)])

    def fail(field, msg):
        raise ConfigError.make(msg, field=field, text_ref=refs.get(field, default_ref))

    if not geometry.danger_radius < geometry.pre_danger_radius:
        fail('geometry.danger_radius', f"must be below pre_danger_radius ({geometry.pre_danger_radius})")
    if not planner.a_min <= planner.a_max:
        fail('planner.a_min', f"must not exceed a_max ({planner.a_max})")
    if not planner.v_min <= planner.v_max:
        fail('planner.v_min', f"must not exceed v_max ({planner.v_max})")

    noise_values = values[('noise',)]
    for key in ('sigma0', 'process_noise'):
        if key in noise_values:
            m = noise_values[key]
            diag = np.diag(m)
            if np.any(diag < 0) or m[0, 1] != m[1, 0]:
                fail('noise.' + key, "must be symmetric with a non-negative diagonal")
    noise = NoiseConfig(**noise_values)
    try:
        check_psd(noise.process_block(planner.dt), 'process noise')
    except ValidationError as e:
        fail('noise.process_noise', e.message)

    config = ScenarioConfig(geometry=geometry, planner=planner, noise=noise, **values[()])
    try:
        config.validate()
    except ValidationError as e:
        fail('', e.message)
    return config


def parse_config_text(text: str, source_file='<string>') -> ScenarioConfig:
    entries = parse_entries(text, source_file)
    pos = TextPos(0, 1, 1)
    return build_config(entries, TextReference(text, str(source_file), TextRange(pos, pos)))


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError.make(f"cannot read {path}: {e.strerror}")
    return parse_config_text(text, path)


# -- emission --


def _format(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return repr(value)
    if isinstance(value, str):
        return '"%s"' % value.replace('\\', '\\\\').replace('"', '\\"')
    if isinstance(value, (list, tuple, np.ndarray)):
        return '[' + ', '.join(_format(v) for v in value) + ']'
    raise TypeError(f"cannot emit {type(value).__name__}")


def emit_config(config: ScenarioConfig) -> str:
    "Writes a scenario file that parses back to the same config"
    objects = {(): config, ('geometry',): config.geometry, ('planner',): config.planner, ('noise',): config.noise}
    lines = []
    for section, schema in SCHEMA.items():
        if section:
            lines += ['', '[%s]' % '.'.join(section)]
        obj = objects[section]
        for key in schema:
            value = getattr(obj, key)
            if value is None:
                continue
            lines.append(f'{key} = {_format(value)}')
    return '\n'.join(lines) + '\n'
