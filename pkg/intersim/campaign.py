"""Campaigns: many runs (strategies x seeds), merged into plot tables and a summary."""
import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import arrow

from intersim.core.config import SCHEMA, STRLIST, build_config, collect_values, parse_entries
from intersim.core.exceptions import ConfigError, IntersimError, ValidationError
from intersim.core.geometry import IntersectionGeometry
from intersim.core.metrics import MetricsReport, cdf_dominates, empirical_cdf, histogram
from intersim.core.planner import PlannerConfig
from intersim.core.sim import STRATEGIES, ScenarioConfig, run_scenario
from intersim.loggers import campaign_log
from intersim.utils import dataclass

TABLE_DISTANCE = 'distance'
TABLE_MIN_DISTANCE = 'min_distance'
TABLE_ACCEL = 'accel'
TABLES = (TABLE_DISTANCE, TABLE_MIN_DISTANCE, TABLE_ACCEL)

REFERENCE = {
    'mean_event_triggers': 8.786,
    'trigger_reduction': 0.922,
    'gas_proxy_event': 0.227,
    'gas_proxy_period': 0.254,
    'tail_gain_period_over_dm': 0.1226,
}

EXIT_OK = 0
EXIT_UNSAFE = 1
EXIT_ABORTED = 2

CAMPAIGN_SCHEMA = {'strategies': STRLIST, 'repetitions': int, 'tables': STRLIST}


@dataclass
class CampaignSpec:
    scenarios: tuple  # of (ScenarioConfig, repetitions)
    output_dir: Path
    tables: tuple = TABLES
    jobs: int = 1

    def validate(self):
        if not self.scenarios:
            raise ValidationError.make("a campaign needs at least one scenario")
        for _, reps in self.scenarios:
            if reps < 1:
                raise ValidationError.make("repetitions must be at least 1")
        unknown = set(self.tables) - set(TABLES)
        if unknown:
            raise ValidationError.make(f"unknown tables: {', '.join(sorted(unknown))}")
        if self.jobs < 1:
            raise ValidationError.make("jobs must be at least 1")

    def runs(self) -> List[ScenarioConfig]:
        res = []
        for config, reps in self.scenarios:
            res += [config.replace(seed=config.seed + rep) for rep in range(reps)]
        return res


def _desk(strategy, cavs=500, seed=0):
    return ScenarioConfig(strategy=strategy, cavs=cavs, seed=seed, lp_backend='highs')


def _smoke(strategy, cavs=6, seed=0):
    return ScenarioConfig(
        strategy=strategy,
        cavs=cavs,
        seed=seed,
        geometry=IntersectionGeometry(pre_danger_radius=60.0, danger_radius=30.0),
        planner=PlannerConfig(horizon=24),
    )


PRESETS = {
    # name: (scenario factory, repetitions, tables)
    'distance-cdf': (_desk, 5, (TABLE_DISTANCE,)),
    'min-distance-cdf': (_desk, 5, (TABLE_MIN_DISTANCE,)),
    'accel-hist': (_desk, 5, (TABLE_ACCEL,)),
    'triggers': (_desk, 5, ()),
    'smoke': (_smoke, 1, TABLES),
}


def preset_spec(name, output_dir, cavs=None, seed=0, strategies=STRATEGIES, jobs=1) -> CampaignSpec:
    try:
        factory, reps, tables = PRESETS[name]
    except KeyError:
        raise ValidationError.make(f"unknown preset {name!r} (known: {', '.join(PRESETS)})")
    kw = {'seed': seed}
    if cavs is not None:
        kw['cavs'] = cavs
    scenarios = tuple((factory(s, **kw), reps) for s in strategies)
    return CampaignSpec(scenarios, Path(output_dir), tables, jobs)


def parse_campaign(path, output_dir, jobs=1) -> CampaignSpec:
    """A campaign file is a scenario file with an extra [campaign] section:

        [campaign]
        strategies = ["dm", "period", "event"]
        repetitions = 5
        tables = ["distance"]
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError.make(f"cannot read {path}: {e.strerror}")
    schema = {**SCHEMA, ('campaign',): CAMPAIGN_SCHEMA}
    entries = parse_entries(text, path, schema)
    campaign_entries = [e for e in entries if e.section == ('campaign',)]
    values, refs = collect_values(campaign_entries, {('campaign',): CAMPAIGN_SCHEMA})
    opts = values[('campaign',)]
    for name in opts.get('strategies', ()):
        if name not in STRATEGIES:
            raise ConfigError.make(f"unknown strategy {name!r}", field='campaign.strategies', text_ref=refs['campaign.strategies'])
    for name in opts.get('tables', ()):
        if name not in TABLES:
            raise ConfigError.make(f"unknown table {name!r}", field='campaign.tables', text_ref=refs['campaign.tables'])
    if opts.get('repetitions', 1) < 1:
        raise ConfigError.make("must be at least 1", field='campaign.repetitions', text_ref=refs['campaign.repetitions'])

    base = build_config([e for e in entries if e.section != ('campaign',)])
    strategies = opts.get('strategies') or (base.strategy,)
    reps = opts.get('repetitions', 1)
    scenarios = tuple((base.replace(strategy=s), reps) for s in strategies)
    return CampaignSpec(scenarios, Path(output_dir), opts.get('tables', TABLES), jobs)


# -- running --


@dataclass
class RunResult:
    label: str
    strategy: str
    report: Optional[MetricsReport]
    cav_rows: list
    seconds: float
    error: Optional[str] = None


def run_one(config: ScenarioConfig, label=None) -> RunResult:
    "Runs one scenario; errors come back as text so results can cross process boundaries"
    label = label or config.label
    start = arrow.utcnow()
    try:
        trace, report = run_scenario(config)
    except IntersimError as e:
        campaign_log.error("run %s aborted: %s", config.label, e)
        return RunResult(label, config.strategy, None, [], (arrow.utcnow() - start).total_seconds(), str(e))
    rows = [
        {
            'cav_id': rec.cav_id,
            'lane': rec.lane.name,
            'entry_slot': rec.entry_slot,
            'exit_slot': rec.exit_slot,
            'extensions': rec.extensions,
            'reoptimizations': rec.reoptimizations,
            'downlinks': rec.downlinks,
            'traveled_distance': rec.horizon_distance,
        }
        for rec in trace.cavs
    ]
    return RunResult(label, config.strategy, report, rows, (arrow.utcnow() - start).total_seconds())


def _write_csv(path: Path, header, rows):
    with path.open('w', newline='') as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _json_number(x):
    return None if isinstance(x, float) and not math.isfinite(x) else x


def acceptance_checks(merged: dict) -> dict:
    "Strategy comparisons reported alongside the scalar summaries"
    res = {}
    dm, period, event = (merged.get(s) for s in STRATEGIES)
    if period and event and period.reoptimizations and event.reoptimizations:
        res['trigger_reduction'] = 1 - event.mean_reoptimizations / period.mean_reoptimizations
        res['downlink_reduction'] = 1 - event.total_downlinks / max(period.total_downlinks, 1)
        res['event_downlinks_equal_triggers'] = event.total_downlinks == sum(event.reoptimizations)
        res['event_gas_below_period'] = event.gas_proxy < period.gas_proxy
    if dm and period and dm.traveled_distances and period.traveled_distances:
        res['tail_gain_period_over_dm'] = period.distance_quantile(0.95) / dm.distance_quantile(0.95) - 1
        res['period_dominates_dm'] = cdf_dominates(period.traveled_distances, dm.traveled_distances)
    if dm and event and dm.traveled_distances and event.traveled_distances:
        res['event_dominates_dm'] = cdf_dominates(event.traveled_distances, dm.traveled_distances)
    return res


def write_outputs(spec: CampaignSpec, results: List[RunResult], merged: dict, exit_status: int):
    out = spec.output_dir
    (out / 'runs').mkdir(parents=True, exist_ok=True)

    for r in results:
        if r.report is not None:
            (out / 'runs' / f'{r.label}.metrics.json').write_text(r.report.to_json())
        header = list(r.cav_rows[0]) if r.cav_rows else ['cav_id']
        _write_csv(out / 'runs' / f'{r.label}.cavs.csv', header, [list(row.values()) for row in r.cav_rows])

    for strategy, report in merged.items():
        if TABLE_DISTANCE in spec.tables:
            _write_csv(out / f'distance_cdf_{strategy}.csv', ['distance', 'fraction'], empirical_cdf(report.traveled_distances))
        if TABLE_MIN_DISTANCE in spec.tables:
            for kind, samples in (('same_lane', report.min_distance_same_lane), ('crossing', report.min_distance_crossing)):
                _write_csv(out / f'min_distance_cdf_{strategy}_{kind}.csv', ['distance', 'fraction'], empirical_cdf(samples))
        if TABLE_ACCEL in spec.tables:
            for zone, samples in (('pre_danger', report.accel_diff_pre_danger), ('danger', report.accel_diff_danger)):
                _write_csv(out / f'accel_hist_{strategy}_{zone}.csv', ['bin_low', 'bin_high', 'count'], histogram(samples))

    summary = {
        'created': arrow.utcnow().isoformat(),
        'exit_status': exit_status,
        'strategies': {s: {k: _json_number(v) for k, v in rep.summary().items()} for s, rep in merged.items()},
        'checks': {k: _json_number(v) for k, v in acceptance_checks(merged).items()},
        'reference': REFERENCE,
        'failed_runs': {r.label: r.error for r in results if r.error},
        'run_seconds': {r.label: round(r.seconds, 3) for r in results},
    }
    (out / 'summary.json').write_text(json.dumps(summary, indent=2, sort_keys=True))


def run_campaign(spec: CampaignSpec):
    """Executes every run of the campaign and writes its outputs.

    Returns (exit status, merged reports per strategy). The status is nonzero
    when any run broke a safety rule or aborted.
    """
    spec.validate()
    configs = spec.runs()
    labels = [c.label for c in configs]
    if len(set(labels)) != len(labels):
        labels = [f'{i:03d}-{label}' for i, label in enumerate(labels)]
    campaign_log.info("campaign: %d runs into %s", len(configs), spec.output_dir)

    if spec.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(run_one, configs, labels))
    else:
        results = [run_one(c, label) for c, label in zip(configs, labels)]

    merged = {}
    for strategy in dict.fromkeys(c.strategy for c in configs):
        reports = [r.report for r in results if r.strategy == strategy and r.report is not None]
        merged[strategy] = MetricsReport.merge_all(reports, strategy)

    if any(r.error for r in results):
        status = EXIT_ABORTED
    elif not all(rep.is_safe for rep in merged.values()):
        status = EXIT_UNSAFE
    else:
        status = EXIT_OK

    write_outputs(spec, results, merged, status)
    return status, merged
