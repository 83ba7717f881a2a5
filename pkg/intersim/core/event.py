"""Event-triggered replanning.

A CAV in the pre-danger zone is only replanned by the intersection manager
when the crossing area it waits for frees up earlier than last seen, or when
the CAV ahead of it in its lane has progressed further. Otherwise it tracks
its last plan locally with Car-Follow. In the danger zone it holds.
"""
import math
from typing import Callable, Dict, Optional, Sequence

from intersim.loggers import event_log
from intersim.utils import dataclass, mut_dataclass

from .dynamics import gaussian_interval_probability
from .exceptions import ValidationError
from .geometry import IntersectionGeometry
from .planner import CrossingOrder, PlannerConfig, PlanningCav, TrajectoryPlan, initial_condition

REOPTIMIZE = 'reoptimize'
TRACK = 'track'
HOLD = 'hold'

FREE = -math.inf  # no predecessor occupies any shared area

THRESHOLD_EPSILON = 'epsilon'
THRESHOLD_ONE_MINUS_EPSILON = 'one_minus_epsilon'


def occupancy_threshold(epsilon: float, mode=THRESHOLD_EPSILON) -> float:
    if mode == THRESHOLD_EPSILON:
        return epsilon
    if mode == THRESHOLD_ONE_MINUS_EPSILON:
        return 1 - epsilon
    raise ValidationError.make(f"unknown occupancy threshold mode {mode!r}")


@mut_dataclass
class EventState:
    occupancy: float = math.inf
    mark: float = -math.inf
    plan: Optional[TrajectoryPlan] = None
    reoptimizations: int = 0

    def commit(self, decision: 'Decision', plan: TrajectoryPlan):
        self.occupancy = decision.occupancy
        self.mark = decision.mark
        self.plan = plan
        self.reoptimizations += 1

    def targets(self, slot: int, end_slot: int):
        "Planned means and speeds for slots slot+1 .. end_slot"
        slots = range(slot + 1, end_slot + 1)
        return [self.plan.mean_at(t) for t in slots], [self.plan.speed_at(t) for t in slots]

    def entered_danger(self, slot: int) -> bool:
        plan = self.plan
        if plan is None or slot < plan.first_slot:
            return False
        return bool(plan.entry_flags[min(slot - plan.first_slot, len(plan.entry_flags) - 1)])


@dataclass
class Decision:
    action: str
    occupancy: float  # values to store if the action is a reoptimization
    mark: float


def occupancy(
    cav: PlanningCav,
    predecessors: Sequence[TrajectoryPlan],
    slot: int,
    until_slot: float,
    geo: IntersectionGeometry,
    threshold: float,
) -> float:
    """Latest future slot, up to `until_slot`, in which a predecessor occupies a shared collision area.

    A slot counts as occupied when the predecessor's location mass along its
    lane over the area exceeds `threshold`. Returns FREE when no slot does.
    """
    latest = FREE
    for pred in predecessors:
        other = geo.lane(pred.lane)
        if not other.crosses(cav.lane):
            continue
        area = geo.collision_area(other, cav.lane)
        last = min(until_slot, pred.last_slot)
        t = slot + 1
        while t <= last:
            mass = gaussian_interval_probability(pred.mean_at(t), pred.variance_at(t), area)
            if mass > threshold and t > latest:
                latest = t
            t += 1
    return latest


def predecessor_mark(plan: Optional[TrajectoryPlan]) -> float:
    "Rear edge of the predecessor's ellipse at the end of its horizon; +inf without a predecessor"
    if plan is None:
        return math.inf
    return float(plan.means[-1] - plan.axes[-1])


def decide_action(state: EventState, in_danger: bool, occ: float, mark: float, force=False) -> Decision:
    if force:
        return Decision(REOPTIMIZE, min(state.occupancy, occ), max(state.mark, mark))
    if in_danger:
        return Decision(HOLD, state.occupancy, state.mark)
    if occ < state.occupancy:
        return Decision(REOPTIMIZE, occ, max(state.mark, mark))
    # the progress trigger only applies while no crossing area is being waited on
    if not math.isfinite(state.occupancy) and mark > state.mark:
        return Decision(REOPTIMIZE, min(state.occupancy, occ), mark)
    return Decision(TRACK, state.occupancy, state.mark)


def step_event_logic(
    cavs: Dict[int, PlanningCav],
    order: CrossingOrder,
    states: Dict[int, EventState],
    view: Dict[int, TrajectoryPlan],
    slot: int,
    geo: IntersectionGeometry,
    config: PlannerConfig,
    threshold: float,
    replan: Callable[[PlanningCav, Dict[int, TrajectoryPlan]], TrajectoryPlan],
    forced=(),
) -> Dict[int, str]:
    """Decides, in crossing order, what every CAV does this slot.

    `view` holds the manager's current picture of every committed plan and is
    updated in place with plans produced here. `replan` runs the receding
    horizon optimization for one CAV against that view.
    """
    actions = {}
    for cav_id in order:
        cav = cavs[cav_id]
        state = states.setdefault(cav_id, EventState())
        preds = [view[p] for p in order.predecessors(cav_id) if p in view]

        own = view.get(cav_id)
        until = own.crossing_slot() if own is not None else cav.end_slot
        occ = occupancy(cav, preds, slot, min(until, cav.end_slot), geo, threshold)

        same_lane = [p for p in preds if p.lane == cav.lane.name]
        mark = predecessor_mark(same_lane[-1] if same_lane else None)

        p0, _ = initial_condition(cav, config)
        in_danger = p0 >= -geo.danger_radius or state.entered_danger(slot)
        decision = decide_action(state, in_danger, occ, mark, force=cav_id in forced or state.plan is None)

        if decision.action == REOPTIMIZE:
            plan = replan(cav, view)
            state.commit(decision, plan)
            view[cav_id] = plan
            event_log.debug("slot %d cav %s: reoptimize (occupancy %s, mark %s)", slot, cav_id, occ, mark)
        actions[cav_id] = decision.action
    return actions
