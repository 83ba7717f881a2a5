from unittest import TestCase

import numpy as np

from intersim import settings
from intersim.core.dynamics import (
    CavState,
    MotionModel,
    clip_correlation,
    default_process_noise,
    embed_axis_block,
)
from intersim.core.geometry import IntersectionGeometry
from intersim.core.planner import PlannerConfig, PlanningCav, PlanningContext, TrajectoryPlan
from intersim.core.sim import SIGMA0_STATED

DT = 0.5
SIGMA0_BLOCK = clip_correlation(SIGMA0_STATED)

# A scaled-down intersection, so that CAVs reach the danger zone within a few slots
SMALL_GEOMETRY = IntersectionGeometry(pre_danger_radius=40.0, danger_radius=20.0)


def noisy_model(dt=DT, axis=0):
    return MotionModel.double_integrator(dt, embed_axis_block(default_process_noise(dt), axis))


def planning_context(horizon=8, geometry=SMALL_GEOMETRY, **config):
    planner = PlannerConfig(horizon=horizon, **config)
    model = noisy_model(planner.dt)
    return PlanningContext.build(geometry, planner, model, embed_axis_block(SIGMA0_BLOCK, 0))


def make_cav(cav_id, lane, position, speed, slot=0, horizon=8, last_control=0.0, entry_slot=None):
    state = CavState.from_vector(lane.to_vector(position, speed), timestamp=slot)
    entry = slot if entry_slot is None else entry_slot
    return PlanningCav(cav_id, lane, state, entry, slot + horizon, last_control)


class IntersimTests(TestCase):
    lp_backend = 'simplex'

    def setUp(self):
        self._backend = settings.lp_backend
        settings.lp_backend = self.lp_backend

    def tearDown(self):
        settings.lp_backend = self._backend

    def assertArrayAlmostEqual(self, a, b, atol=1e-9, rtol=0.0):
        np.testing.assert_allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=rtol, atol=atol)


def make_plan(cav_id, lane, first_slot, means, speeds=None, axis=1.0, variance=0.1, dt=DT):
    "A hand-written plan, for tests that only need positions over time"
    n = len(means)
    speeds = np.zeros(n) if speeds is None else np.asarray(speeds, dtype=float)
    return TrajectoryPlan(
        cav_id,
        lane,
        first_slot,
        dt,
        np.asarray(means, dtype=float),
        speeds,
        np.zeros(n),
        np.full(n, axis),
        np.full(n, variance),
        np.zeros(n, dtype=int),
        np.zeros(n),
        0.0,
        0,
    )
