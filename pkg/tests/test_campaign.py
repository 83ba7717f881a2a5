import csv
import json
import tempfile
from pathlib import Path
from types import SimpleNamespace
from unittest.mock import patch

from intersim.__main__ import main
from intersim.campaign import (
    EXIT_ABORTED,
    EXIT_OK,
    EXIT_UNSAFE,
    PRESETS,
    TABLE_DISTANCE,
    TABLES,
    CampaignSpec,
    acceptance_checks,
    parse_campaign,
    preset_spec,
    run_campaign,
)
from intersim.core.config import parse_config
from intersim.core.exceptions import ConfigError, SimulationAborted, ValidationError
from intersim.core.metrics import MetricsReport
from intersim.core.sim import DM, EVENT, PERIOD, STRATEGIES

from .common import IntersimTests
from .test_sim import quiet, tiny_scenario

CAMPAIGN_FILE = '''
cavs = 0
seed = 7

[campaign]
strategies = ["dm", "event"]
repetitions = 2
tables = ["distance"]
'''


def read_csv(path):
    with path.open() as f:
        return list(csv.reader(f))


class CampaignTests(IntersimTests):
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.out = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()


class TestSpec(CampaignTests):
    def test_runs(self):
        spec = CampaignSpec(((tiny_scenario(DM, seed=3), 2), (tiny_scenario(EVENT), 1)), self.out)
        self.assertEqual([c.label for c in spec.runs()], ['dm-seed3', 'dm-seed4', 'event-seed0'])

    def test_validate(self):
        config = tiny_scenario()
        for spec in [
            CampaignSpec((), self.out),
            CampaignSpec(((config, 0),), self.out),
            CampaignSpec(((config, 1),), self.out, tables=('pie',)),
            CampaignSpec(((config, 1),), self.out, jobs=0),
        ]:
            self.assertRaises(ValidationError, spec.validate)

    def test_presets(self):
        spec = preset_spec('smoke', self.out, cavs=2, seed=4)
        self.assertEqual([c.strategy for c, _ in spec.scenarios], list(STRATEGIES))
        self.assertEqual({(c.cavs, c.seed) for c, _ in spec.scenarios}, {(2, 4)})
        self.assertEqual(spec.tables, TABLES)

        spec = preset_spec('distance-cdf', self.out, strategies=(PERIOD,))
        ((config, reps),) = spec.scenarios
        self.assertEqual((config.cavs, config.lp_backend, reps), (500, 'highs', 5))
        self.assertEqual(spec.tables, (TABLE_DISTANCE,))

        for name in PRESETS:
            preset_spec(name, self.out).validate()
        self.assertRaises(ValidationError, preset_spec, 'figure-9', self.out)

    def test_campaign_file(self):
        path = self.out / 'campaign.conf'
        path.write_text(CAMPAIGN_FILE)
        spec = parse_campaign(path, self.out / 'results', jobs=3)
        self.assertEqual(spec.tables, (TABLE_DISTANCE,))
        self.assertEqual(spec.jobs, 3)
        self.assertEqual([c.label for c in spec.runs()], ['dm-seed7', 'dm-seed8', 'event-seed7', 'event-seed8'])
        self.assertEqual({c.cavs for c in spec.runs()}, {0})

        path.write_text('cavs = 2\n')
        spec = parse_campaign(path, self.out)
        self.assertEqual([c.label for c in spec.runs()], ['period-seed0'])
        self.assertEqual(spec.tables, TABLES)

    def test_example_files(self):
        scenarios = Path(__file__).parent.parent / 'scenarios'
        config = parse_config(scenarios / 'desk.conf')
        self.assertEqual((config.strategy, config.cavs, config.lp_backend), (EVENT, 500, 'highs'))

        spec = parse_campaign(scenarios / 'smoke-campaign.conf', self.out)
        self.assertEqual(len(spec.runs()), 6)
        self.assertEqual(spec.tables, TABLES)

    def test_campaign_file_errors(self):
        path = self.out / 'campaign.conf'
        for text, field in [
            ('[campaign]\nstrategies = ["fifo"]\n', 'campaign.strategies'),
            ('[campaign]\ntables = ["pie"]\n', 'campaign.tables'),
            ('[campaign]\nrepetitions = 0\n', 'campaign.repetitions'),
            ('[campaign]\nrepeats = 2\n', 'campaign.repeats'),
            ('[campaign]\nrepetitions = 2\n[planner]\nhorizon = -1\n', 'planner.horizon'),
        ]:
            path.write_text(text)
            with self.assertRaises(ConfigError) as cm:
                parse_campaign(path, self.out)
            self.assertEqual(cm.exception.field, field)

        self.assertRaises(ConfigError, parse_campaign, self.out / 'missing.conf', self.out)


class TestRun(CampaignTests):
    def test_zero_cavs(self):
        spec = CampaignSpec(tuple((tiny_scenario(s, cavs=0), 1) for s in STRATEGIES), self.out)
        status, merged = run_campaign(spec)
        self.assertEqual(status, EXIT_OK)
        self.assertEqual(list(merged), list(STRATEGIES))

        for s in STRATEGIES:
            self.assertTrue((self.out / 'runs' / f'{s}-seed0.metrics.json').exists())
            self.assertEqual(read_csv(self.out / 'runs' / f'{s}-seed0.cavs.csv'), [['cav_id']])
            self.assertEqual(read_csv(self.out / f'distance_cdf_{s}.csv'), [['distance', 'fraction']])
            for kind in ('same_lane', 'crossing'):
                self.assertTrue((self.out / f'min_distance_cdf_{s}_{kind}.csv').exists())
            for zone in ('pre_danger', 'danger'):
                self.assertEqual(read_csv(self.out / f'accel_hist_{s}_{zone}.csv'), [['bin_low', 'bin_high', 'count']])

        summary = json.loads((self.out / 'summary.json').read_text())
        self.assertEqual(summary['exit_status'], EXIT_OK)
        self.assertEqual(summary['failed_runs'], {})
        self.assertEqual(set(summary['strategies']), set(STRATEGIES))
        self.assertIsNone(summary['strategies'][DM]['gas_proxy'])
        self.assertEqual(summary['strategies'][DM]['runs'], 1)

    def test_lone_cav(self):
        spec = CampaignSpec(((tiny_scenario(EVENT, cavs=1, noise=quiet()), 1),), self.out, tables=(TABLE_DISTANCE,))
        status, merged = run_campaign(spec)
        self.assertEqual(status, EXIT_OK)
        self.assertEqual(len(merged[EVENT].traveled_distances), 1)

        with (self.out / 'runs' / 'event-seed0.cavs.csv').open() as f:
            (row,) = list(csv.DictReader(f))
        self.assertEqual(row['cav_id'], '0')
        self.assertEqual(int(row['downlinks']), int(row['reoptimizations']))

        again = MetricsReport.from_json((self.out / 'runs' / 'event-seed0.metrics.json').read_text())
        self.assertEqual(again.traveled_distances, merged[EVENT].traveled_distances)

        self.assertEqual(len(read_csv(self.out / 'distance_cdf_event.csv')), 2)
        self.assertFalse((self.out / 'accel_hist_event_danger.csv').exists())

    def test_duplicate_labels(self):
        config = tiny_scenario(DM, cavs=0)
        run_campaign(CampaignSpec(((config, 1), (config, 1)), self.out))
        self.assertTrue((self.out / 'runs' / '000-dm-seed0.cavs.csv').exists())
        self.assertTrue((self.out / 'runs' / '001-dm-seed0.cavs.csv').exists())

    def test_aborted(self):
        def fail(config):
            raise SimulationAborted.make('planner gave up')

        with patch('intersim.campaign.run_scenario', fail):
            status, merged = run_campaign(CampaignSpec(((tiny_scenario(PERIOD), 1),), self.out))
        self.assertEqual(status, EXIT_ABORTED)
        self.assertEqual(merged[PERIOD].runs, 0)
        self.assertFalse((self.out / 'runs' / 'period-seed0.metrics.json').exists())
        summary = json.loads((self.out / 'summary.json').read_text())
        self.assertIn('planner gave up', summary['failed_runs']['period-seed0'])

    def test_unsafe(self):
        def unsafe(config):
            return SimpleNamespace(cavs=[]), MetricsReport(config.strategy, truth_conflicts=1)

        with patch('intersim.campaign.run_scenario', unsafe):
            status, _ = run_campaign(CampaignSpec(((tiny_scenario(DM), 1),), self.out))
        self.assertEqual(status, EXIT_UNSAFE)

    def test_acceptance_checks(self):
        merged = {
            DM: MetricsReport(DM, traveled_distances=[10.0, 20.0, 30.0]),
            PERIOD: MetricsReport(PERIOD, traveled_distances=[20.0, 30.0, 40.0], reoptimizations=[10, 10], downlinks=[10, 10], accel_diff_danger=[0.3]),
            EVENT: MetricsReport(EVENT, traveled_distances=[20.0, 30.0, 40.0], reoptimizations=[1, 2], downlinks=[1, 2], accel_diff_danger=[0.2]),
        }
        checks = acceptance_checks(merged)
        self.assertAlmostEqual(checks['trigger_reduction'], 0.85)
        self.assertAlmostEqual(checks['downlink_reduction'], 0.85)
        self.assertTrue(checks['event_downlinks_equal_triggers'])
        self.assertTrue(checks['event_gas_below_period'])
        self.assertTrue(checks['period_dominates_dm'])
        self.assertTrue(checks['event_dominates_dm'])
        self.assertGreater(checks['tail_gain_period_over_dm'], 0)

        self.assertEqual(acceptance_checks({DM: MetricsReport(DM)}), {})


class TestCommandLine(CampaignTests):
    def test_presets_listing(self):
        self.assertEqual(main(['presets']), 0)

    def test_emit_config(self):
        self.assertEqual(main(['run', '--emit-config', '--cavs', '3', '--strategy', 'dm']), 0)

    def test_run_file(self):
        path = self.out / 'scenario.conf'
        path.write_text('cavs = 0\nstrategy = "event"\n')
        self.assertEqual(main(['run', str(path)]), 0)
        self.assertEqual(main(['run', str(path), '-o', str(self.out / 'results')]), 0)
        self.assertTrue((self.out / 'results' / 'summary.json').exists())

    def test_errors(self):
        path = self.out / 'scenario.conf'
        path.write_text('[geometry]\ndanger_radius = 400\n')
        self.assertEqual(main(['run', str(path)]), 2)
        self.assertEqual(main(['run', str(self.out / 'missing.conf')]), 2)
        self.assertEqual(main(['run', '--cavs', '-1', '--emit-config']), 2)
