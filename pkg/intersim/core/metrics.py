"""Run metrics: raw samples, merging, and the tables derived from them.

Reports keep raw samples rather than summaries, so merging reports from
several runs is lossless and every table can be recomputed from the per-run
files.
"""
import json
import math
from typing import List, Optional

import numpy as np

from intersim.utils import mut_dataclass

from .exceptions import ValidationError

SAMPLE_FIELDS = (
    'traveled_distances',
    'min_distance_same_lane',
    'min_distance_crossing',
    'accel_diff_pre_danger',
    'accel_diff_danger',
    'reoptimizations',
    'downlinks',
)

COUNT_FIELDS = (
    'runs',
    'cavs_entered',
    'cavs_exited',
    'deferred_arrivals',
    'extensions',
    'slack_violations',
    'plan_conflicts',
    'truth_conflicts',
    'same_lane_violations',
)


@mut_dataclass
class MetricsReport:
    strategy: str
    traveled_distances: list = None
    min_distance_same_lane: list = None
    min_distance_crossing: list = None
    accel_diff_pre_danger: list = None
    accel_diff_danger: list = None
    reoptimizations: list = None  # per completed CAV
    downlinks: list = None  # per completed CAV
    runs: int = 1
    cavs_entered: int = 0
    cavs_exited: int = 0
    deferred_arrivals: int = 0
    extensions: int = 0
    slack_violations: int = 0
    plan_conflicts: int = 0
    truth_conflicts: int = 0
    same_lane_violations: int = 0
    solver_seconds: float = 0.0

    def __post_init__(self):
        for name in SAMPLE_FIELDS:
            if getattr(self, name) is None:
                setattr(self, name, [])

    def merge(self, other: 'MetricsReport') -> 'MetricsReport':
        strategy = self.strategy if self.strategy == other.strategy else 'mixed'
        kw = {name: list(getattr(self, name)) + list(getattr(other, name)) for name in SAMPLE_FIELDS}
        kw.update({name: getattr(self, name) + getattr(other, name) for name in COUNT_FIELDS})
        return MetricsReport(strategy, solver_seconds=self.solver_seconds + other.solver_seconds, **kw)

    @classmethod
    def merge_all(cls, reports: List['MetricsReport'], strategy: Optional[str] = None) -> 'MetricsReport':
        if not reports:
            return cls(strategy or 'none', runs=0)
        res = reports[0]
        for r in reports[1:]:
            res = res.merge(r)
        return res

    # -- derived statistics --

    @property
    def violations(self) -> int:
        return self.slack_violations + self.plan_conflicts + self.truth_conflicts + self.same_lane_violations

    @property
    def is_safe(self) -> bool:
        return self.violations == 0

    @property
    def accel_diffs(self):
        return self.accel_diff_pre_danger + self.accel_diff_danger

    @property
    def gas_proxy(self) -> float:
        diffs = self.accel_diffs
        return float(np.mean(diffs)) if diffs else math.nan

    @property
    def mean_reoptimizations(self) -> float:
        return float(np.mean(self.reoptimizations)) if self.reoptimizations else math.nan

    @property
    def total_downlinks(self) -> int:
        return int(sum(self.downlinks))

    def distance_quantile(self, q: float) -> float:
        if not self.traveled_distances:
            return math.nan
        return float(np.quantile(self.traveled_distances, q))

    def summary(self) -> dict:
        return {
            'strategy': self.strategy,
            'runs': self.runs,
            'cavs_completed': len(self.traveled_distances),
            'mean_reoptimizations': self.mean_reoptimizations,
            'total_downlinks': self.total_downlinks,
            'gas_proxy': self.gas_proxy,
            'distance_p05': self.distance_quantile(0.05),
            'distance_p50': self.distance_quantile(0.5),
            'distance_p95': self.distance_quantile(0.95),
            'min_same_lane_distance': min(self.min_distance_same_lane, default=math.nan),
            'min_crossing_distance': min(self.min_distance_crossing, default=math.nan),
            **{name: getattr(self, name) for name in COUNT_FIELDS},
            'solver_seconds': self.solver_seconds,
        }

    # -- serialization --

    def to_json(self) -> str:
        data = {'strategy': self.strategy, 'solver_seconds': self.solver_seconds}
        data.update({name: [float(x) for x in getattr(self, name)] for name in SAMPLE_FIELDS})
        data.update({name: int(getattr(self, name)) for name in COUNT_FIELDS})
        return json.dumps(data)

    @classmethod
    def from_json(cls, text: str) -> 'MetricsReport':
        data = json.loads(text)
        unknown = set(data) - set(SAMPLE_FIELDS) - set(COUNT_FIELDS) - {'strategy', 'solver_seconds'}
        if unknown:
            raise ValidationError.make(f"unknown metrics fields: {', '.join(sorted(unknown))}")
        for name in ('reoptimizations', 'downlinks'):
            data[name] = [int(x) for x in data.get(name, [])]
        return cls(**data)


def empirical_cdf(samples, points: Optional[int] = None):
    """(value, fraction <= value) rows, one per sample or `points` evenly spaced quantiles"""
    xs = np.sort(np.asarray(samples, dtype=float))
    if not len(xs):
        return []
    if points is None:
        return [(float(x), (i + 1) / len(xs)) for i, x in enumerate(xs)]
    qs = np.linspace(0, 1, points)
    return [(float(np.quantile(xs, q)), float(q)) for q in qs]


def histogram(samples, bins=20, upper=None):
    "(bin_low, bin_high, count) rows"
    xs = np.asarray(samples, dtype=float)
    if not len(xs):
        return []
    hi = upper if upper is not None else max(float(xs.max()), 1e-9)
    counts, edges = np.histogram(xs, bins=bins, range=(0.0, hi))
    return [(float(lo), float(h), int(c)) for lo, h, c in zip(edges[:-1], edges[1:], counts)]


def cdf_dominates(better, worse, upto=0.95, tol=1e-9) -> bool:
    "True when `better`'s CDF stays at or below `worse`'s on quantiles up to `upto`"
    if not better or not worse:
        return False
    qs = np.linspace(0, upto, 96)
    return bool(np.all(np.quantile(better, qs) >= np.quantile(worse, qs) - tol))
