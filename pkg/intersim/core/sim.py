"""Closed-loop simulation of the intersection.

One run admits CAVs at the pre-danger boundary, lets each one filter its own
GPS readings, asks the intersection manager for controls according to the
chosen strategy, and applies those controls to the noisy ground truth.
"""
import math
from collections import deque
from typing import Dict, List, Optional

import numpy as np

from intersim.context import context
from intersim.loggers import sim_log
from intersim.utils import Benchmark, dataclass, mut_dataclass

from .dynamics import (
    MotionModel,
    check_psd,
    clip_correlation,
    default_process_noise,
    embed_axis_block,
    sample_gaussian,
)
from .estimation import KalmanFilterState, init_filter, kf_predict, kf_update, sample_measurement
from .event import HOLD, REOPTIMIZE, TRACK, EventState, occupancy_threshold, step_event_logic
from .exceptions import IntersimError, SimulationAborted, ValidationError
from .geometry import IntersectionGeometry, Lane
from .metrics import MetricsReport
from .planner import (
    PlannerConfig,
    PlanningCav,
    PlanningContext,
    TrajectoryPlan,
    compute_crossing_order,
    count_plan_conflicts,
    extend_plan,
    plan_avoid_dm,
    plan_avoid_period,
    plan_car_follow,
    project_plan,
)

DM = 'dm'
PERIOD = 'period'
EVENT = 'event'
STRATEGIES = (DM, PERIOD, EVENT)

SIGMA0_STATED = np.array([[0.6, 0.2], [0.2, 0.06]])


@dataclass
class NoiseConfig:
    sigma0: np.ndarray = None  # 2x2 (position, velocity) block on the travel axis
    process_noise: np.ndarray = None  # 2x2 block; None means the default for dt
    gps_std: float = 1.0
    enabled: bool = True
    occupancy_threshold: str = 'epsilon'

    def __post_init__(self):
        if self.sigma0 is None:
            object.__setattr__(self, 'sigma0', clip_correlation(SIGMA0_STATED))
        else:
            sigma0 = np.asarray(self.sigma0, dtype=float)
            repaired = clip_correlation(sigma0)
            if not np.array_equal(repaired, sigma0):
                sim_log.warning(
                    "initial covariance cross term %.4g exceeds sqrt(var_p * var_v); clipped to %.4g",
                    sigma0[0, 1],
                    repaired[0, 1],
                )
            object.__setattr__(self, 'sigma0', repaired)
        if self.process_noise is not None:
            object.__setattr__(self, 'process_noise', np.asarray(self.process_noise, dtype=float))

    def process_block(self, dt: float):
        return default_process_noise(dt) if self.process_noise is None else self.process_noise

    def validate(self, dt: float):
        check_psd(self.sigma0, 'sigma0')
        check_psd(self.process_block(dt), 'process noise')
        if self.gps_std < 0:
            raise ValidationError.make("gps_std must be non-negative")
        occupancy_threshold(0.5, self.occupancy_threshold)


@dataclass
class ScenarioConfig:
    strategy: str = PERIOD
    cavs: int = 500
    seed: int = 0
    inter_arrival: float = 2.0
    speed_range: tuple = (0.0, 14.0)
    lp_backend: Optional[str] = None  # None follows settings.lp_backend
    geometry: IntersectionGeometry = None
    planner: PlannerConfig = None
    noise: NoiseConfig = None

    def __post_init__(self):
        for name, cls in (('geometry', IntersectionGeometry), ('planner', PlannerConfig), ('noise', NoiseConfig)):
            if getattr(self, name) is None:
                object.__setattr__(self, name, cls())
        object.__setattr__(self, 'speed_range', tuple(float(x) for x in self.speed_range))

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError.make(f"strategy must be one of {', '.join(STRATEGIES)}, got {self.strategy!r}")
        if self.cavs < 0:
            raise ValidationError.make("cavs must be non-negative")
        if not self.inter_arrival > 0:
            raise ValidationError.make("inter_arrival must be positive")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi:
            raise ValidationError.make(f"invalid speed range {self.speed_range}")
        if self.lp_backend not in (None, 'simplex', 'highs'):
            raise ValidationError.make(f"unknown lp backend {self.lp_backend!r}")
        self.geometry.validate()
        self.planner.validate()
        self.noise.validate(self.planner.dt)

    @property
    def label(self):
        return f'{self.strategy}-seed{self.seed}'


@dataclass
class Arrival:
    cav_id: int
    time: float  # seconds
    lane: str
    speed: float

    def slot(self, dt: float) -> int:
        return int(math.floor(self.time / dt + 1e-9))


def generate_arrivals(config: ScenarioConfig, rng: np.random.Generator) -> List[Arrival]:
    "Poisson arrivals at the pre-danger boundary, with lane and speed drawn uniformly"
    n = config.cavs
    gaps = rng.exponential(config.inter_arrival, size=n)
    lanes = rng.integers(0, len(config.geometry.lanes), size=n)
    speeds = rng.uniform(*config.speed_range, size=n)
    times = np.cumsum(gaps)
    names = [lane.name for lane in config.geometry.lanes]
    return [Arrival(i, float(times[i]), names[lanes[i]], float(speeds[i])) for i in range(n)]


def braking_distance(speed: float, config: PlannerConfig) -> float:
    "Distance covered by a jerk-limited stop from cruising"
    dist = 0.0
    a = 0.0
    v = max(speed, 0.0)
    while v > 0:
        a = max(config.a_min, a - config.jerk)
        nv = max(0.0, v + a * config.dt)
        dist += config.dt * (v + nv) / 2
        v = nv
    return dist


def admissible(speed: float, leader_position: Optional[float], ctx: PlanningContext) -> bool:
    """Whether a CAV may enter at `speed` behind a lane leader at `leader_position`.

    The newcomer must be able to stop at least d_min plus both pre-danger
    ellipse axes behind where the leader is now.
    """
    if leader_position is None:
        return True
    geo = ctx.geometry
    stop = -geo.pre_danger_radius + braking_distance(speed, ctx.config)
    return stop + geo.d_min + 2 * ctx.base_axis <= leader_position


def step_truth(true_vector, applied_control, model: MotionModel, rng: Optional[np.random.Generator]):
    "One step of the motion model, with process noise drawn from the model when rng is given"
    nxt = model.step(np.asarray(true_vector, dtype=float), applied_control)
    if rng is not None:
        nxt = nxt + sample_gaussian(model.process_noise, rng)
    return nxt


@mut_dataclass
class CavRecord:
    cav_id: int
    lane: Lane
    entry_slot: int
    end_slot: int
    truth: np.ndarray
    filter: KalmanFilterState
    last_control: float = 0.0
    plan: Optional[TrajectoryPlan] = None
    needs_plan: bool = False
    extensions: int = 0
    reoptimizations: int = 0
    downlinks: int = 0
    horizon_distance: Optional[float] = None
    exit_slot: Optional[int] = None

    def planning_view(self) -> PlanningCav:
        return PlanningCav(self.cav_id, self.lane, self.filter.belief, self.entry_slot, self.end_slot, self.last_control)

    def truth_scalar(self):
        return self.lane.to_scalar(self.truth)


@dataclass
class SlotRecord:
    slot: int
    cav_id: int
    lane: str
    position: float
    speed: float
    estimate: float
    control: float
    zone: str
    action: str


@mut_dataclass
class SimulationTrace:
    label: str
    records: list = None
    population: list = None  # (slot, entered, exited, in flight)
    cavs: list = None  # finished CavRecords

    def __post_init__(self):
        self.records = self.records or []
        self.population = self.population or []
        self.cavs = self.cavs or []

    def for_cav(self, cav_id) -> List[SlotRecord]:
        return [r for r in self.records if r.cav_id == cav_id]

    @property
    def slots(self):
        return sorted({r.slot for r in self.records})


class Simulation:
    def __init__(self, config: ScenarioConfig):
        config.validate()
        self.config = config
        cfg = config.planner
        noise = config.noise
        block = noise.process_block(cfg.dt)
        self.models = {
            axis: MotionModel.double_integrator(cfg.dt, embed_axis_block(block, axis)) for axis in (0, 1)
        }
        self.ctx = PlanningContext.build(config.geometry, cfg, self.models[0], embed_axis_block(noise.sigma0, 0))
        self.threshold = occupancy_threshold(cfg.epsilon, noise.occupancy_threshold)

        arrival_seed, noise_seed = np.random.SeedSequence(config.seed).spawn(2)
        self.arrivals = deque(generate_arrivals(config, np.random.default_rng(arrival_seed)))
        self.rng = np.random.default_rng(noise_seed) if noise.enabled else None

        self.waiting: Dict[str, deque] = {lane.name: deque() for lane in config.geometry.lanes}
        self.active: Dict[int, CavRecord] = {}
        self.events: Dict[int, EventState] = {}
        self.report = MetricsReport(config.strategy)
        self.trace = SimulationTrace(config.label)
        self.bench = Benchmark()
        self._same_lane_min: Dict[tuple, float] = {}
        self._crossing_min: Dict[tuple, float] = {}
        self._deferred = set()
        self.slot = 0

    # -- arrivals --

    def _lane_leader_position(self, lane: Lane) -> Optional[float]:
        positions = [c.truth_scalar()[0] for c in self.active.values() if c.lane.name == lane.name]
        return min(positions) if positions else None

    def _admit(self):
        dt = self.config.planner.dt
        while self.arrivals and self.arrivals[0].slot(dt) <= self.slot:
            arr = self.arrivals.popleft()
            self.waiting[arr.lane].append(arr)

        geo = self.config.geometry
        for lane_name, queue in self.waiting.items():
            lane = geo.lane(lane_name)
            while queue:
                arr = queue[0]
                if not admissible(arr.speed, self._lane_leader_position(lane), self.ctx):
                    if arr.cav_id not in self._deferred:
                        self._deferred.add(arr.cav_id)
                        self.report.deferred_arrivals += 1
                        sim_log.debug("slot %d: deferring cav %d on %s", self.slot, arr.cav_id, lane_name)
                    break
                queue.popleft()
                self._enter(arr, lane)

    def _enter(self, arr: Arrival, lane: Lane):
        geo, noise = self.config.geometry, self.config.noise
        truth = lane.to_vector(-geo.pre_danger_radius, arr.speed)
        sigma0 = embed_axis_block(noise.sigma0, lane.axis)
        kf = init_filter(truth, sigma0, noise.gps_std if noise.enabled else 0.0, self.slot, self.rng)
        end = self.slot + self.config.planner.horizon
        self.active[arr.cav_id] = CavRecord(arr.cav_id, lane, self.slot, end, truth, kf, needs_plan=True)
        self.report.cavs_entered += 1

    # -- strategies --

    def _commit(self, rec: CavRecord, plan: TrajectoryPlan, preds):
        rec.plan = plan
        rec.needs_plan = False
        rec.reoptimizations += 1
        rec.downlinks += 1
        if not plan.is_safe:
            self.report.slack_violations += 1
        self.report.plan_conflicts += count_plan_conflicts(plan, preds, self.config.geometry)

    def _run_period(self, order, cavs):
        committed = {}
        controls = {}
        for cav_id in order:
            preds = [committed[p] for p in order.predecessors(cav_id)]
            with self.bench.measure('plan'):
                plan = plan_avoid_period(cavs[cav_id], self.slot, order, committed, self.ctx)
            committed[cav_id] = plan
            self._commit(self.active[cav_id], plan, preds)
            controls[cav_id] = (plan.control_at(self.slot), REOPTIMIZE)
        return controls

    def _run_dm(self, order, cavs):
        """Plans new arrivals once; everything else replays its committed controls.

        An extended horizon continues the committed plan at its terminal speed.
        When that continuation would not leave the danger zone, the CAV is
        replanned, and so is every CAV after it in the crossing order.
        """
        committed = {cid: self.active[cid].plan for cid in order if self.active[cid].plan is not None}
        controls = {}
        cascade = False
        for cav_id in order:
            rec = self.active[cav_id]
            action = HOLD
            if rec.needs_plan and rec.plan is not None and not cascade:
                extended = extend_plan(rec.plan, rec.end_slot, self.ctx)
                if extended.means[-1] > self.config.geometry.danger_radius:
                    rec.plan = committed[cav_id] = extended
                    rec.needs_plan = False
                    sim_log.debug("slot %d: cav %d continues at %.2f m/s", self.slot, cav_id, extended.speeds[-1])
                else:
                    cascade = True
                    sim_log.info(
                        "slot %d: cav %d stalls in the danger zone; replanning it and its followers", self.slot, cav_id
                    )
            if rec.needs_plan or rec.plan is None or cascade:
                preds = [committed[p] for p in order.predecessors(cav_id)]
                with self.bench.measure('plan'):
                    plan = plan_avoid_dm(cavs[cav_id], self.slot, order, committed, self.ctx)
                committed[cav_id] = plan
                self._commit(rec, plan, preds)
                action = REOPTIMIZE
            controls[cav_id] = (rec.plan.control_at(self.slot), action)
        return controls

    def _run_event(self, order, cavs):
        view = {}
        for cav_id in order:
            state = self.events.get(cav_id)
            if state is not None and state.plan is not None:
                proj = project_plan(state.plan, cavs[cav_id], self.slot, self.ctx)
                view[cav_id] = proj if proj is not None else state.plan

        produced = {}

        def replan(cav: PlanningCav, current):
            preds = [current[p] for p in order.predecessors(cav.cav_id)]
            with self.bench.measure('plan'):
                plan = plan_avoid_period(cav, self.slot, order, current, self.ctx)
            produced[cav.cav_id] = (plan, preds)
            return plan

        forced = [cid for cid in order if self.active[cid].needs_plan]
        actions = step_event_logic(
            cavs, order, self.events, view, self.slot, self.config.geometry, self.config.planner,
            self.threshold, replan, forced=forced,
        )

        controls = {}
        for cav_id in order:
            rec = self.active[cav_id]
            state = self.events[cav_id]
            action = actions[cav_id]
            if action == REOPTIMIZE:
                plan, preds = produced[cav_id]
                self._commit(rec, plan, preds)
                u = plan.control_at(self.slot)
            elif action == TRACK:
                means, speeds = state.targets(self.slot, rec.end_slot)
                same_lane = [view[p] for p in order.predecessors(cav_id) if p in view and view[p].lane == rec.lane.name]
                with self.bench.measure('follow'):
                    follow = plan_car_follow(
                        cavs[cav_id], self.slot, means, speeds, same_lane[-1] if same_lane else None, self.ctx
                    )
                if not follow.is_safe:
                    self.report.slack_violations += 1
                u = follow.control_at(self.slot)
            else:
                u = state.plan.control_at(self.slot)
            controls[cav_id] = (u, action)
        return controls

    # -- bookkeeping --

    def _record_distances(self):
        geo = self.config.geometry
        recs = list(self.active.values())
        by_lane = {}
        for rec in recs:
            by_lane.setdefault(rec.lane.name, []).append(rec)
        for lane_recs in by_lane.values():
            lane_recs.sort(key=lambda r: -r.truth_scalar()[0])
            for lead, follow in zip(lane_recs, lane_recs[1:]):
                gap = lead.truth_scalar()[0] - follow.truth_scalar()[0]
                key = (lead.cav_id, follow.cav_id)
                self._same_lane_min[key] = min(self._same_lane_min.get(key, math.inf), gap)
                if gap < geo.d_min:
                    self.report.same_lane_violations += 1
                    sim_log.warning("slot %d: cavs %d/%d only %.2f m apart", self.slot, lead.cav_id, follow.cav_id, gap)

        for i, a in enumerate(recs):
            for b in recs[i + 1 :]:
                if not a.lane.crosses(b.lane):
                    continue
                key = tuple(sorted((a.cav_id, b.cav_id)))
                dist = float(np.hypot(*(a.truth[:2] - b.truth[:2])))
                self._crossing_min[key] = min(self._crossing_min.get(key, math.inf), dist)
                area_a = geo.collision_area(a.lane, b.lane)
                area_b = geo.collision_area(b.lane, a.lane)
                pa, pb = a.truth_scalar()[0], b.truth_scalar()[0]
                if area_a[0] < pa < area_a[1] and area_b[0] < pb < area_b[1]:
                    self.report.truth_conflicts += 1
                    sim_log.warning("slot %d: cavs %d/%d share a collision area", self.slot, a.cav_id, b.cav_id)

    def _finish(self, rec: CavRecord):
        rec.exit_slot = self.slot + 1
        self.report.cavs_exited += 1
        if rec.horizon_distance is not None:
            self.report.traveled_distances.append(rec.horizon_distance)
        self.report.reoptimizations.append(rec.reoptimizations)
        self.report.downlinks.append(rec.downlinks)
        self.trace.cavs.append(rec)
        del self.active[rec.cav_id]
        self.events.pop(rec.cav_id, None)

    def step(self):
        "Advances the simulation by one slot"
        geo, cfg = self.config.geometry, self.config.planner
        self._admit()

        for rec in self.active.values():
            z = rec.truth[:2]
            if self.rng is not None:
                z = sample_measurement(z, rec.filter.measurement_noise, self.rng)
            rec.filter = kf_update(rec.filter, z)

        cavs = {cid: rec.planning_view() for cid, rec in self.active.items()}
        if self.config.strategy == EVENT:
            known = {cid: s.plan for cid, s in self.events.items() if s.plan is not None}
        else:
            known = {cid: rec.plan for cid, rec in self.active.items() if rec.plan is not None}
        order = compute_crossing_order(known, list(cavs.values()), self.slot, cfg)

        dispatch = {PERIOD: self._run_period, DM: self._run_dm, EVENT: self._run_event}[self.config.strategy]
        controls = dispatch(order, cavs) if len(order) else {}

        for cav_id in order:
            rec = self.active[cav_id]
            u, action = controls[cav_id]
            u = min(max(u, cfg.a_min), cfg.a_max)
            before = rec.truth_scalar()[0]
            if self.slot > rec.entry_slot:
                diffs = self.report.accel_diff_danger if geo.zone(before) != 'pre_danger' else self.report.accel_diff_pre_danger
                diffs.append(abs(u - rec.last_control))
            model = self.models[rec.lane.axis]
            rec.truth = step_truth(rec.truth, rec.lane.embed_control(u), model, self.rng)
            rec.filter = kf_predict(rec.filter, rec.lane.embed_control(u), model)
            rec.last_control = u
            pos, speed = rec.truth_scalar()
            est = rec.lane.to_scalar(rec.filter.belief.vector)[0]
            self.trace.records.append(SlotRecord(self.slot, cav_id, rec.lane.name, pos, speed, est, u, geo.zone(before), action))
            if self.slot + 1 == rec.entry_slot + cfg.horizon:
                rec.horizon_distance = pos + geo.pre_danger_radius

        self._record_distances()

        for rec in list(self.active.values()):
            if self.slot + 1 < rec.end_slot:
                continue
            est = rec.lane.to_scalar(rec.filter.belief.vector)[0]
            if est > geo.danger_radius:
                self._finish(rec)
            else:
                rec.end_slot += cfg.horizon
                rec.extensions += 1
                rec.needs_plan = True
                self.report.extensions += 1
                sim_log.info("slot %d: cav %d still at %.1f m, horizon extended to slot %d", self.slot, rec.cav_id, est, rec.end_slot)

        entered, exited = self.report.cavs_entered, self.report.cavs_exited
        assert entered == exited + len(self.active)
        self.trace.population.append((self.slot, entered, exited, len(self.active)))
        self.slot += 1

    @property
    def done(self):
        return not self.arrivals and not self.active and not any(self.waiting.values())

    def slot_limit(self) -> int:
        cfg = self.config.planner
        last_arrival = self.arrivals[-1].slot(cfg.dt) if self.arrivals else 0
        return last_arrival + 20 * cfg.horizon + 2 * self.config.cavs

    def run(self):
        limit = self.slot_limit()
        with context(run=self.config.label, lp_backend=self.config.lp_backend):
            sim_log.info("run %s: %d cavs", self.config.label, self.config.cavs)
            while not self.done:
                if self.slot >= limit:
                    raise SimulationAborted.make(f"run did not drain after {limit} slots")
                with context(slot=self.slot):
                    try:
                        self.step()
                    except SimulationAborted:
                        raise
                    except IntersimError as e:
                        raise SimulationAborted.make(f"slot {self.slot}: {e}", cause=e)

        self.report.min_distance_same_lane = sorted(self._same_lane_min.values())
        self.report.min_distance_crossing = sorted(self._crossing_min.values())
        self.report.solver_seconds = sum(self.bench.total.values())
        sim_log.info(
            "run %s: %d exited, %d extensions, %d violations",
            self.config.label,
            self.report.cavs_exited,
            self.report.extensions,
            self.report.violations,
        )
        return self.trace, self.report


def run_scenario(config: ScenarioConfig):
    "Runs one scenario to completion; returns (SimulationTrace, MetricsReport)"
    return Simulation(config).run()
