"""Trajectory planning for the intersection manager.

Builds and solves the receding-horizon MILP that plans one CAV against the
committed plans of every CAV ahead of it in the crossing order, the plan-once
variant of the same problem, and the local tracking LP (Car-Follow).

All planning happens in lane coordinates: a scalar position along the travel
direction, with the intersection center at 0.
"""
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from intersim.loggers import planner_log
from intersim.utils import dataclass, mut_dataclass

from .dynamics import CavState, MotionModel, UncertaintyProfile, uncertainty_profile
from .exceptions import DomainError, InputLengthError, OrderingViolation, ValidationError
from .geometry import IntersectionGeometry, Lane
from .milp import GE, LE, MAXIMIZE, MINIMIZE, LinExpr, MilpModel, add_absolute_value_term, solve_or_raise

SLACK_TOL = 1e-6


@dataclass
class PlannerConfig:
    horizon: int = 112
    dt: float = 0.5
    a_min: float = -3.0
    a_max: float = 3.0
    v_min: float = 0.0
    v_max: float = 14.0
    jerk: float = 1.0
    epsilon: float = 1e-5
    gamma: float = 1e-6
    beta: float = 1e-5
    big_m: float = 1e5

    def validate(self):
        if self.horizon < 1:
            raise ValidationError.make("horizon must be at least one slot")
        if not self.dt > 0:
            raise ValidationError.make("dt must be positive")
        if not self.a_min <= self.a_max:
            raise ValidationError.make("a_min must not exceed a_max")
        if not self.v_min <= self.v_max:
            raise ValidationError.make("v_min must not exceed v_max")
        if not self.jerk > 0:
            raise ValidationError.make("jerk must be positive")
        if not 0 < self.epsilon < 1:
            raise ValidationError.make("epsilon must lie in (0, 1)")
        if not (self.gamma > 0 and self.beta > 0 and self.big_m > 0):
            raise ValidationError.make("gamma, beta and big_m must be positive")


@dataclass
class PlanningContext:
    "Everything a plan depends on besides the CAVs themselves; built once per run"

    geometry: IntersectionGeometry
    config: PlannerConfig
    model: MotionModel
    profile: UncertaintyProfile

    @classmethod
    def build(cls, geometry, config, model: MotionModel, sigma0):
        """sigma0 is the planner's worst-case 4x4 covariance, embedded on axis 0.

        The ellipse sizes do not depend on which axis a lane uses.
        """
        geometry.validate()
        config.validate()
        profile = uncertainty_profile(sigma0, model, config.epsilon, 2 * config.horizon + 1)
        return cls(geometry, config, model, profile)

    @property
    def base_axis(self) -> float:
        return self.profile.axis(0)


@dataclass
class PlanningCav:
    cav_id: int
    lane: Lane
    state: CavState
    entry_slot: int
    end_slot: int
    last_control: float = 0.0


@dataclass
class TrajectoryPlan:
    cav_id: int
    lane: str
    first_slot: int  # slot of means[0]; controls start one slot earlier
    dt: float
    means: np.ndarray
    speeds: np.ndarray
    accelerations: np.ndarray
    axes: np.ndarray
    variances: np.ndarray
    entry_flags: np.ndarray
    slacks: np.ndarray
    objective_value: float
    entry_slot: int
    kind: str = 'period'

    def __len__(self):
        return len(self.means)

    @property
    def last_slot(self):
        return self.first_slot + len(self.means) - 1

    @property
    def first_control(self) -> float:
        return float(self.accelerations[0])

    @property
    def max_slack(self) -> float:
        return float(np.max(self.slacks)) if len(self.slacks) else 0.0

    @property
    def is_safe(self) -> bool:
        return self.max_slack <= SLACK_TOL

    def _clamp(self, slot):
        return min(max(slot - self.first_slot, 0), len(self.means) - 1)

    def mean_at(self, slot: int) -> float:
        "Planned position, extrapolated at the boundary speed outside the plan"
        if slot > self.last_slot:
            return float(self.means[-1] + self.speeds[-1] * self.dt * (slot - self.last_slot))
        if slot < self.first_slot:
            return float(self.means[0] - self.speeds[0] * self.dt * (self.first_slot - slot))
        return float(self.means[slot - self.first_slot])

    def speed_at(self, slot: int) -> float:
        return float(self.speeds[self._clamp(slot)])

    def axis_at(self, slot: int) -> float:
        return float(self.axes[self._clamp(slot)])

    def variance_at(self, slot: int) -> float:
        return float(self.variances[self._clamp(slot)])

    def control_at(self, slot: int) -> float:
        "Acceleration applied during `slot`; zero once the plan is exhausted"
        k = slot - (self.first_slot - 1)
        if 0 <= k < len(self.accelerations):
            return float(self.accelerations[k])
        return 0.0

    def crossing_slot(self) -> float:
        "Slot at which the planned mean passes the intersection center"
        past = np.flatnonzero(self.means >= 0)
        if len(past):
            k = int(past[0])
            if k > 0:
                return self.first_slot + k
            # already past the center: estimate backwards
            step = max(self.speeds[0] * self.dt, 1e-9)
            return self.first_slot - math.ceil(self.means[0] / step)
        step = self.speeds[-1] * self.dt
        if step <= 1e-9:
            return math.inf
        return self.last_slot + math.ceil(-self.means[-1] / step)

    def check(self, config: PlannerConfig, tol=1e-6) -> List[str]:
        problems = []
        if np.any(np.diff(self.entry_flags) < 0):
            problems.append('entry flags decrease')
        if np.any(self.slacks < -tol):
            problems.append('negative slack')
        if len(self.accelerations) > 1 and np.max(np.abs(np.diff(self.accelerations))) > config.jerk + tol:
            problems.append('jerk limit exceeded')
        if np.any(self.accelerations < config.a_min - tol) or np.any(self.accelerations > config.a_max + tol):
            problems.append('acceleration out of bounds')
        return problems


@dataclass
class CrossingOrder:
    cav_ids: tuple
    crossing_slots: dict

    def __iter__(self):
        return iter(self.cav_ids)

    def __len__(self):
        return len(self.cav_ids)

    def position(self, cav_id) -> int:
        return self.cav_ids.index(cav_id)

    def predecessors(self, cav_id) -> tuple:
        return self.cav_ids[: self.position(cav_id)]


@mut_dataclass
class PlanningProblem:
    "A built MILP plus the handles needed to read a plan back out of its solution"

    model: MilpModel
    cav: PlanningCav
    slot: int
    accelerations: list
    positions: list
    speeds: list
    slacks: list
    entry_flags: list
    kind: str


# -- kinematics --


@dataclass
class KinematicOperators:
    """Affine maps from n decision accelerations to positions/speeds at slots 1..n"""

    pos_const: np.ndarray
    pos_coef: np.ndarray  # lower triangular (n, n)
    vel_const: np.ndarray
    vel_coef: np.ndarray

    def position_expr(self, k, a_vars) -> LinExpr:
        row = self.pos_coef[k]
        return LinExpr({a_vars[i].index: row[i] for i in range(k + 1)}, self.pos_const[k])

    def speed_expr(self, k, a_vars) -> LinExpr:
        row = self.vel_coef[k]
        return LinExpr({a_vars[i].index: row[i] for i in range(k + 1)}, self.vel_const[k])

    def rollout(self, accelerations):
        a = np.asarray(accelerations, dtype=float)
        return self.pos_const + self.pos_coef @ a, self.vel_const + self.vel_coef @ a


def kinematic_operators(p0: float, v0: float, n: int, model: MotionModel) -> KinematicOperators:
    phi, gamma = model.axis_block(0)
    s0 = np.array([p0, v0])
    powers = [np.eye(2)]
    for _ in range(n):
        powers.append(powers[-1] @ phi)
    const = np.array([powers[k + 1] @ s0 for k in range(n)]).reshape(n, 2)
    g = np.array([powers[j] @ gamma for j in range(n)]).reshape(n, 2)
    coef = np.zeros((n, n, 2))
    for k in range(n):
        for i in range(k + 1):
            coef[k, i] = g[k - i]
    return KinematicOperators(const[:, 0], coef[:, :, 0], const[:, 1], coef[:, :, 1])


def reachable_positions(p0: float, v0: float, n: int, config: PlannerConfig):
    "Lower and upper envelopes of the position at slots 1..n under the speed and acceleration bounds"
    dt = config.dt
    lo = np.zeros(n)
    hi = np.zeros(n)
    p_lo = p_hi = p0
    v_lo = v_hi = v0
    for k in range(n):
        nv_hi = min(config.v_max, v_hi + config.a_max * dt)
        nv_lo = max(config.v_min, v_lo + config.a_min * dt)
        p_hi += dt * (v_hi + nv_hi) / 2
        p_lo += dt * (v_lo + nv_lo) / 2
        v_hi, v_lo = nv_hi, nv_lo
        hi[k], lo[k] = p_hi, p_lo
    return lo, hi


def initial_condition(cav: PlanningCav, config: PlannerConfig):
    "Lane position and speed of the estimate, with the speed clamped into its bounds"
    p0, v0 = cav.lane.to_scalar(cav.state.vector)
    clamped = min(max(v0, config.v_min), config.v_max)
    if clamped != v0:
        planner_log.debug("cav %s: estimated speed %.3f clamped to %.3f", cav.cav_id, v0, clamped)
    return p0, clamped


def effective_axis(base_axes: Sequence[float], entry_flags: Sequence[int]) -> float:
    """Ellipse major axis at the last slot of `entry_flags` (one flag per slot since omega).

    Pre-danger slots keep base_axes[0]; after entering the danger zone at slot m,
    the axis is base_axes[t - m + 1].
    """
    flags = np.asarray(entry_flags, dtype=float)
    if np.any(np.diff(flags) < 0):
        raise ValidationError.make("danger-entry flags must be non-decreasing")
    base = np.asarray(base_axes, dtype=float)
    L = len(flags)
    if L + 1 > len(base):
        raise InputLengthError.make(f"{L} flags need {L + 1} base axes, got {len(base)}")
    res = base[0]
    for i, b in enumerate(flags):
        if b:
            res -= b * (base[L - 1 - i] - base[L - i])
    return float(res)


def _axes_from_flags(profile: UncertaintyProfile, flags):
    "Per-slot axes and variances for rounded entry flags"
    axes = np.zeros(len(flags))
    variances = np.zeros(len(flags))
    entered = np.flatnonzero(np.asarray(flags) > 0.5)
    entry = entered[0] if len(entered) else None
    for k in range(len(flags)):
        n = 0 if entry is None or k < entry else k - entry + 1
        axes[k] = profile.axis(n)
        variances[k] = profile.variance(n)
    return axes, variances


def entry_flags_for(means, geometry: IntersectionGeometry, tol=SLACK_TOL) -> np.ndarray:
    "Danger-zone flags of a position sequence: 1 from the first slot past the danger boundary on"
    inside = np.asarray(means, dtype=float) > -geometry.danger_radius + tol
    return np.maximum.accumulate(inside).astype(int)


def _axis_expression(profile: UncertaintyProfile, b_vars, k) -> LinExpr:
    expr = LinExpr(constant=profile.axis(0))
    for m in range(k + 1):
        step = profile.axis(k - m + 1) - profile.axis(k - m)
        if step:
            expr.add(b_vars[m], step)
    return expr


# -- crossing order --


def earliest_crossing_slot(cav: PlanningCav, slot: int, config: PlannerConfig, limit=10000) -> float:
    "Crossing slot of an unconstrained jerk-limited ramp to full speed"
    p, v = initial_condition(cav, config)
    if p >= 0:
        return slot
    a = cav.last_control
    for k in range(1, limit):
        a = min(config.a_max, a + config.jerk)
        nv = min(config.v_max, v + a * config.dt)
        p += config.dt * (v + nv) / 2
        v = nv
        if p >= 0:
            return slot + k
    return math.inf


def compute_crossing_order(plans: Dict[int, TrajectoryPlan], cavs: Sequence[PlanningCav], slot: int, config: PlannerConfig) -> CrossingOrder:
    """Sorts CAVs by the slot their previous plan crosses the center.

    CAVs without a plan (new arrivals) come after every planned CAV, sorted by
    their unconstrained earliest crossing slot.
    """
    planned = []
    arrivals = []
    slots = {}
    for cav in cavs:
        plan = plans.get(cav.cav_id)
        if plan is not None:
            slots[cav.cav_id] = plan.crossing_slot()
            planned.append((slots[cav.cav_id], cav.entry_slot, cav.cav_id))
        else:
            slots[cav.cav_id] = earliest_crossing_slot(cav, slot, config)
            arrivals.append((slots[cav.cav_id], cav.entry_slot, cav.cav_id))
    ids = [k[-1] for k in sorted(planned)] + [k[-1] for k in sorted(arrivals)]
    return CrossingOrder(tuple(ids), slots)


def _predecessor_plans(cav: PlanningCav, order: CrossingOrder, committed: Dict[int, TrajectoryPlan]):
    res = []
    for pid in order.predecessors(cav.cav_id):
        if pid not in committed:
            raise OrderingViolation.make(f"cav {cav.cav_id} is planned before its predecessor {pid}")
        res.append(committed[pid])
    return res


def _frontal_predecessor(cav: PlanningCav, preds: List[TrajectoryPlan]) -> Optional[TrajectoryPlan]:
    same_lane = [p for p in preds if p.lane == cav.lane.name]
    return same_lane[-1] if same_lane else None


# -- AVOID-PERIOD / AVOID-DM --


def build_avoid_period(
    cav: PlanningCav,
    slot: int,
    order: CrossingOrder,
    committed: Dict[int, TrajectoryPlan],
    ctx: PlanningContext,
    kind='period',
) -> PlanningProblem:
    """Builds the MILP that plans `cav` from the estimate at `slot` up to its horizon end.

    Decision variables are the accelerations applied during slots slot..end-1;
    positions and speeds are affine in them.
    """
    cfg, geo, profile = ctx.config, ctx.geometry, ctx.profile
    n = cav.end_slot - slot
    if n < 1:
        raise DomainError.make(f"cav {cav.cav_id}: horizon ended at slot {cav.end_slot}, now {slot}")
    preds = _predecessor_plans(cav, order, committed)
    M = cfg.big_m

    p0, v0 = initial_condition(cav, cfg)
    kin = kinematic_operators(p0, v0, n, ctx.model)
    model = MilpModel(f'{kind}_cav{cav.cav_id}_slot{slot}', MAXIMIZE)

    a = [model.add_var(f'a{k}', cfg.a_min, cfg.a_max) for k in range(n)]
    pos = [kin.position_expr(k, a) for k in range(n)]
    vel = [kin.speed_expr(k, a) for k in range(n)]

    for k in range(n):
        model.add_constraint(vel[k], GE, cfg.v_min, f'vmin{k}')
        model.add_constraint(vel[k], LE, cfg.v_max, f'vmax{k}')

    # smoothness: hard within the plan, softened against the previously applied control
    link = model.add_var('jerk_link', 0.0)
    model.add_constraint(a[0] - link, LE, cav.last_control + cfg.jerk, 'jerk_link_up')
    model.add_constraint(a[0] + link, GE, cav.last_control - cfg.jerk, 'jerk_link_down')
    model.add_objective(link, -M)
    add_absolute_value_term(model, a[0] - cav.last_control, cfg.beta, name='dacc0')
    for k in range(1, n):
        model.add_constraint(a[k] - a[k - 1], LE, cfg.jerk, f'jerk_up{k}')
        model.add_constraint(a[k] - a[k - 1], GE, -cfg.jerk, f'jerk_down{k}')
        add_absolute_value_term(model, a[k] - a[k - 1], cfg.beta, name=f'dacc{k}')

    # danger-zone entry; binaries the reachable envelopes already decide are fixed
    lo_env, hi_env = reachable_positions(p0, v0, n, cfg)
    b = []
    for k in range(n):
        if hi_env[k] <= -geo.danger_radius:
            bounds = (0.0, 0.0)
        elif lo_env[k] > -geo.danger_radius:
            bounds = (1.0, 1.0)
        else:
            bounds = (0.0, 1.0)
        b.append(model.add_var(f'b{k}', *bounds, binary=True))
        model.add_constraint(pos[k] - M * b[k], LE, -geo.danger_radius, f'danger{k}')
        if k:
            model.add_constraint(b[k] - b[k - 1], GE, 0.0, f'entry_monotone{k}')
    alpha = [_axis_expression(profile, b, k) for k in range(n)]

    xi = [model.add_var(f'xi{k}', 0.0) for k in range(n)]

    model.add_objective(pos[-1])
    for k in range(n):
        model.add_objective(pos[k], cfg.gamma)
        model.add_objective(xi[k], -M)

    front = _frontal_predecessor(cav, preds)
    if front is not None:
        for k in range(n):
            t = slot + 1 + k
            rhs = front.axis_at(t) + geo.d_min - front.mean_at(t)
            model.add_constraint(-pos[k] - alpha[k] + xi[k], GE, rhs, f'front{k}')

    for pred in preds:
        other = geo.lane(pred.lane)
        if not other.crosses(cav.lane):
            continue
        area_i = geo.collision_area(other, cav.lane)
        lo_j, hi_j = geo.collision_area(cav.lane, other)
        window = []
        for k in range(n):
            t = slot + 1 + k
            extent = pred.axis_at(t) + geo.half_length + geo.safety_gap
            mu = pred.mean_at(t)
            if mu + extent >= area_i[0] and mu - extent <= area_i[1]:
                window.append(k)
        if not window:
            continue
        # 1: cav passes the area before pred, 0: after
        can_pass_first = hi_env[window[0]] - profile.axis(0) >= hi_j
        y = model.add_var(f'first_vs{pred.cav_id}', 0.0, 1.0 if can_pass_first else 0.0, binary=True)
        for k in window:
            model.add_constraint(pos[k] + alpha[k] - M * y - xi[k], LE, lo_j, f'after{pred.cav_id}_{k}')
            model.add_constraint(pos[k] - alpha[k] - M * y + xi[k], GE, hi_j - M, f'before{pred.cav_id}_{k}')

    return PlanningProblem(model, cav, slot, a, pos, vel, xi, b, kind)


def _extract(problem: PlanningProblem, ctx: PlanningContext) -> TrajectoryPlan:
    sol = solve_or_raise(problem.model)
    acc = np.array([sol[v] for v in problem.accelerations])
    means = np.array([sol[e] for e in problem.positions])
    speeds = np.array([sol[e] for e in problem.speeds])
    slacks = np.maximum(np.array([sol[v] for v in problem.slacks]), 0.0) if problem.slacks else np.zeros(len(acc))
    if problem.entry_flags:
        flags = np.array([int(round(sol[v])) for v in problem.entry_flags])
        # latest entry the positions allow; later entry only shrinks the axes, so the solution stays feasible
        flags = np.minimum(flags, entry_flags_for(means, ctx.geometry))
        axes, variances = _axes_from_flags(ctx.profile, flags)
    else:
        flags = np.zeros(len(acc), dtype=int)
        axes = np.full(len(acc), ctx.profile.axis(0))
        variances = np.full(len(acc), ctx.profile.variance(0))
    cav = problem.cav
    plan = TrajectoryPlan(
        cav.cav_id,
        cav.lane.name,
        problem.slot + 1,
        ctx.config.dt,
        means,
        speeds,
        acc,
        axes,
        variances,
        flags,
        slacks,
        sol.objective_value,
        cav.entry_slot,
        problem.kind,
    )
    if not plan.is_safe:
        planner_log.warning(
            "cav %s (%s, slot %d): plan needs slack %.4g m", cav.cav_id, problem.kind, problem.slot, plan.max_slack
        )
    return plan


def plan_avoid_period(cav, slot, order, committed, ctx: PlanningContext) -> TrajectoryPlan:
    problem = build_avoid_period(cav, slot, order, committed, ctx)
    plan = _extract(problem, ctx)
    planner_log.debug("cav %s slot %d: u0=%.3f objective=%.6g", cav.cav_id, slot, plan.first_control, plan.objective_value)
    return plan


def plan_avoid_dm(cav, slot, order, committed, ctx: PlanningContext) -> TrajectoryPlan:
    "The AVOID-PERIOD model solved once at entry; the whole control sequence is committed"
    problem = build_avoid_period(cav, slot, order, committed, ctx, kind='dm')
    return _extract(problem, ctx)


# -- Car-Follow --


def build_car_follow(
    cav: PlanningCav,
    slot: int,
    target_means,
    target_speeds,
    predecessor: Optional[TrajectoryPlan],
    ctx: PlanningContext,
) -> PlanningProblem:
    cfg, geo = ctx.config, ctx.geometry
    n = cav.end_slot - slot
    target_means = np.asarray(target_means, dtype=float)
    target_speeds = np.asarray(target_speeds, dtype=float)
    if n < 1:
        raise DomainError.make(f"cav {cav.cav_id}: nothing left to track at slot {slot}")
    if len(target_means) != n or len(target_speeds) != n:
        raise InputLengthError.make(
            f"cav {cav.cav_id}: {n} slots to track but targets have {len(target_means)}/{len(target_speeds)} entries"
        )

    p0, v0 = initial_condition(cav, cfg)
    kin = kinematic_operators(p0, v0, n, ctx.model)
    model = MilpModel(f'follow_cav{cav.cav_id}_slot{slot}', MINIMIZE)
    a = [model.add_var(f'a{k}', cfg.a_min, cfg.a_max) for k in range(n)]
    pos = [kin.position_expr(k, a) for k in range(n)]
    vel = [kin.speed_expr(k, a) for k in range(n)]
    xi = [model.add_var(f'xi{k}', 0.0) for k in range(n)]

    for k in range(n):
        model.add_constraint(vel[k], GE, cfg.v_min, f'vmin{k}')
        model.add_constraint(vel[k], LE, cfg.v_max, f'vmax{k}')
        add_absolute_value_term(model, pos[k] - target_means[k], 1.0, name=f'epos{k}')
        add_absolute_value_term(model, vel[k] - target_speeds[k], cfg.dt, name=f'evel{k}')
        model.add_objective(xi[k], cfg.big_m)

    if predecessor is not None:
        own_axis = ctx.base_axis
        for k in range(n):
            t = slot + 1 + k
            rhs = own_axis + predecessor.axis_at(t) + geo.d_min - predecessor.mean_at(t)
            model.add_constraint(-pos[k] + xi[k], GE, rhs, f'front{k}')

    return PlanningProblem(model, cav, slot, a, pos, vel, xi, [], 'follow')


def plan_car_follow(cav, slot, target_means, target_speeds, predecessor, ctx) -> TrajectoryPlan:
    problem = build_car_follow(cav, slot, target_means, target_speeds, predecessor, ctx)
    return _extract(problem, ctx)


# -- projections and safety audit --


def project_plan(plan: TrajectoryPlan, cav: PlanningCav, slot: int, ctx: PlanningContext) -> Optional[TrajectoryPlan]:
    """Rolls the remaining controls of a committed plan forward from a fresh estimate.

    Returns None when the plan has no controls left after `slot`.
    """
    start = slot - (plan.first_slot - 1)
    controls = plan.accelerations[max(start, 0) :]
    n = min(len(controls), cav.end_slot - slot)
    if n < 1:
        return None
    controls = controls[:n]
    p0, v0 = cav.lane.to_scalar(cav.state.vector)
    means, speeds = kinematic_operators(p0, v0, n, ctx.model).rollout(controls)
    inside = np.maximum.accumulate(means > -ctx.geometry.danger_radius)
    if p0 > -ctx.geometry.danger_radius:
        inside[:] = True
    flags = inside.astype(int)
    axes, variances = _axes_from_flags(ctx.profile, flags)
    return plan.replace(
        first_slot=slot + 1,
        means=means,
        speeds=speeds,
        accelerations=np.array(controls, dtype=float),
        axes=axes,
        variances=variances,
        entry_flags=flags,
        slacks=np.zeros(n),
        kind='projection',
    )


def extend_plan(plan: TrajectoryPlan, end_slot: int, ctx: PlanningContext) -> TrajectoryPlan:
    """Continues a plan at its terminal speed, with zero acceleration, up to `end_slot`.

    The appended positions are the ones `mean_at` already extrapolates past the
    plan's end, so plans committed against the original are still valid against
    the continuation. Axes keep growing from the original danger-zone entry.
    """
    extra = end_slot - plan.last_slot
    if extra < 1:
        return plan
    steps = np.arange(1, extra + 1)
    tail = plan.means[-1] + plan.speeds[-1] * plan.dt * steps
    means = np.concatenate([plan.means, tail])
    flags = np.maximum.accumulate(np.concatenate([plan.entry_flags, entry_flags_for(tail, ctx.geometry)]))
    axes, variances = _axes_from_flags(ctx.profile, flags)
    return plan.replace(
        means=means,
        speeds=np.concatenate([plan.speeds, np.full(extra, plan.speeds[-1])]),
        accelerations=np.concatenate([plan.accelerations, np.zeros(extra)]),
        axes=axes,
        variances=variances,
        entry_flags=flags.astype(int),
        slacks=np.concatenate([plan.slacks, np.zeros(extra)]),
        kind='extension',
    )


def ellipse_conflict(first: TrajectoryPlan, second: TrajectoryPlan, slot: int, geo: IntersectionGeometry) -> bool:
    """True when, at `slot`, both CAVs claim a shared collision area.

    `first` precedes `second` in the crossing order. It claims the area with its
    inflated extent; `second` claims it with its ellipse.
    """
    lane_i, lane_j = geo.lane(first.lane), geo.lane(second.lane)
    if not lane_i.crosses(lane_j):
        return False
    area_i = geo.collision_area(lane_i, lane_j)
    area_j = geo.collision_area(lane_j, lane_i)
    ext_i = first.axis_at(slot) + geo.half_length + geo.safety_gap
    mu_i = first.mean_at(slot)
    mu_j, ax_j = second.mean_at(slot), second.axis_at(slot)
    i_in = mu_i + ext_i >= area_i[0] and mu_i - ext_i <= area_i[1]
    j_in = mu_j + ax_j > area_j[0] + SLACK_TOL and mu_j - ax_j < area_j[1] - SLACK_TOL
    return i_in and j_in


def count_plan_conflicts(plan: TrajectoryPlan, predecessors: Sequence[TrajectoryPlan], geo: IntersectionGeometry, tol=1e-6) -> int:
    "Slots of `plan` where it breaks a separation rule against the plans it was made after"
    conflicts = 0
    same_lane = [p for p in predecessors if p.lane == plan.lane]
    front = same_lane[-1] if same_lane else None
    for slot in range(plan.first_slot, plan.last_slot + 1):
        if front is not None:
            gap = front.mean_at(slot) - plan.mean_at(slot)
            if gap < front.axis_at(slot) + plan.axis_at(slot) + geo.d_min - tol:
                conflicts += 1
                continue
        if any(ellipse_conflict(p, plan, slot, geo) for p in predecessors):
            conflicts += 1
    return conflicts
