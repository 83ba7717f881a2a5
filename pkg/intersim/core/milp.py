"""Mixed-integer linear programs over continuous and binary variables.

Models are built with `Variable` handles and `LinExpr` arithmetic, then solved
by a depth-first branch-and-bound whose LP relaxations go to HiGHS through scipy
or to the built-in simplex (see `settings.lp_backend`).
"""
import math
from numbers import Real
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from intersim import settings
from intersim.context import context
from intersim.loggers import solver_log
from intersim.utils import dataclass

from . import simplex
from .exceptions import ModelError, SolverError, UnsoundLinearization
from .simplex import EQ, GE, INFEASIBLE, ITERATION_LIMIT, LE, OPTIMAL, UNBOUNDED

MAXIMIZE = 'max'
MINIMIZE = 'min'

RELATIONS = (LE, GE, EQ)


@dataclass
class Tolerances:
    feasibility: float = 1e-6
    integrality: float = 1e-6
    gap: float = 1e-6
    node_limit: int = 20000

    @classmethod
    def from_settings(cls):
        return cls(
            settings.feasibility_tol,
            settings.integrality_tol,
            settings.optimality_gap,
            settings.node_limit,
        )


class LinExpr:
    "Sparse affine expression: sum(coef * var) + constant"

    __slots__ = 'terms', 'constant'

    def __init__(self, terms: Optional[Dict[int, float]] = None, constant: float = 0.0):
        self.terms = dict(terms or {})
        self.constant = float(constant)

    @classmethod
    def of(cls, x):
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, Variable):
            return cls({x.index: 1.0})
        if isinstance(x, Real):
            return cls(constant=x)
        raise TypeError(f"cannot use {type(x).__name__} in a linear expression")

    def copy(self):
        return LinExpr(self.terms, self.constant)

    def add(self, other, coef=1.0):
        "In-place self += coef * other"
        other = LinExpr.of(other)
        for k, v in other.terms.items():
            self.terms[k] = self.terms.get(k, 0.0) + coef * v
        self.constant += coef * other.constant
        return self

    def __add__(self, other):
        return self.copy().add(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy().add(other, -1.0)

    def __rsub__(self, other):
        return LinExpr.of(other).copy().add(self, -1.0)

    def __mul__(self, k):
        if not isinstance(k, Real):
            raise TypeError("expressions can only be scaled by numbers")
        return LinExpr({i: v * k for i, v in self.terms.items()}, self.constant * k)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def value(self, x) -> float:
        return self.constant + sum(v * x[i] for i, v in self.terms.items())

    def __repr__(self):
        return f'LinExpr({self.terms}, {self.constant})'


@dataclass
class Variable:
    index: int
    name: str
    lower: float
    upper: float
    binary: bool = False

    def __add__(self, other):
        return LinExpr.of(self) + other

    __radd__ = __add__

    def __sub__(self, other):
        return LinExpr.of(self) - other

    def __rsub__(self, other):
        return LinExpr.of(other) - self

    def __mul__(self, k):
        return LinExpr.of(self) * k

    __rmul__ = __mul__

    def __neg__(self):
        return LinExpr.of(self) * -1.0


@dataclass
class Constraint:
    name: str
    terms: dict
    relation: str
    rhs: float

    def activity(self, x) -> float:
        return sum(v * x[i] for i, v in self.terms.items())

    def violation(self, x) -> float:
        act = self.activity(x)
        if self.relation == LE:
            return max(0.0, act - self.rhs)
        if self.relation == GE:
            return max(0.0, self.rhs - act)
        return abs(act - self.rhs)


class MilpModel:
    def __init__(self, name='model', sense=MAXIMIZE):
        if sense not in (MAXIMIZE, MINIMIZE):
            raise ModelError.make(f"unknown objective sense {sense!r}")
        self.name = name
        self.sense = sense
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective = LinExpr()

    def add_var(self, name, lower=0.0, upper=math.inf, binary=False) -> Variable:
        if binary and not (0 <= lower <= upper <= 1):
            raise ModelError.make(f"binary variable {name} has bounds [{lower}, {upper}] outside [0, 1]")
        if lower > upper:
            raise ModelError.make(f"variable {name} has empty bounds [{lower}, {upper}]")
        var = Variable(len(self.variables), name, float(lower), float(upper), binary)
        self.variables.append(var)
        return var

    def add_constraint(self, expr, relation, rhs=0.0, name=None) -> Constraint:
        if relation not in RELATIONS:
            raise ModelError.make(f"unknown relation {relation!r}")
        expr = LinExpr.of(expr)
        for i in expr.terms:
            if not 0 <= i < len(self.variables):
                raise ModelError.make(f"constraint references undeclared variable #{i}")
        terms = {i: v for i, v in expr.terms.items() if v != 0.0}
        c = Constraint(name or f'c{len(self.constraints)}', terms, relation, float(rhs) - expr.constant)
        self.constraints.append(c)
        return c

    def add_objective(self, expr, weight=1.0):
        self.objective.add(expr, weight)

    @property
    def binaries(self):
        return [v for v in self.variables if v.binary]

    def fix(self, var: Variable, value: float):
        "Narrows a variable to a single value (used to pre-decide binaries)"
        self.variables[var.index] = var.replace(lower=float(value), upper=float(value))

    def standard_form(self):
        """Arrays for  min c.x  s.t. rows, with the sense folded into c.

        Returns (c, A, senses, b, lower, upper, binary_indices)
        """
        n = len(self.variables)
        sign = -1.0 if self.sense == MAXIMIZE else 1.0
        c = np.zeros(n)
        for i, v in self.objective.terms.items():
            c[i] = sign * v
        A = np.zeros((len(self.constraints), n))
        for r, con in enumerate(self.constraints):
            for i, v in con.terms.items():
                A[r, i] = v
        senses = np.array([con.relation for con in self.constraints], dtype=object)
        b = np.array([con.rhs for con in self.constraints], dtype=float)
        lower = np.array([v.lower for v in self.variables], dtype=float)
        upper = np.array([v.upper for v in self.variables], dtype=float)
        binaries = np.array([v.index for v in self.variables if v.binary], dtype=int)
        return c, A, senses, b, lower, upper, binaries

    def check(self, x, tol=None) -> List[str]:
        "Names of constraints and bounds violated by the value vector x"
        tol = settings.feasibility_tol if tol is None else tol
        bad = [c.name for c in self.constraints if c.violation(x) > tol]
        for v in self.variables:
            if x[v.index] < v.lower - tol or x[v.index] > v.upper + tol:
                bad.append(f'bound:{v.name}')
        return bad

    def dump(self) -> str:
        "LP-format text, for debugging"

        def fmt(terms, constant=0.0):
            parts = []
            for i, v in sorted(terms.items()):
                sign = '-' if v < 0 else '+'
                parts.append(f'{sign} {abs(v):.12g} {self.variables[i].name}')
            if constant:
                parts.append(f"{'-' if constant < 0 else '+'} {abs(constant):.12g}")
            text = ' '.join(parts) or '0'
            return text[2:] if text.startswith('+ ') else text

        lines = ['\\ ' + self.name, 'Maximize' if self.sense == MAXIMIZE else 'Minimize']
        lines.append(' obj: ' + fmt(self.objective.terms, self.objective.constant))
        lines.append('Subject To')
        for c in self.constraints:
            lines.append(f' {c.name}: {fmt(c.terms)} {c.relation} {c.rhs:.12g}')
        lines.append('Bounds')
        for v in self.variables:
            lo = '-inf' if v.lower == -math.inf else f'{v.lower:.12g}'
            hi = '+inf' if v.upper == math.inf else f'{v.upper:.12g}'
            lines.append(f' {lo} <= {v.name} <= {hi}')
        if self.binaries:
            lines.append('Binaries')
            lines.append(' ' + ' '.join(v.name for v in self.binaries))
        lines.append('End')
        return '\n'.join(lines) + '\n'

    def __repr__(self):
        return f'<MilpModel {self.name}: {len(self.variables)} vars, {len(self.constraints)} rows>'


def add_absolute_value_term(model: MilpModel, expr, weight: float, name=None) -> Variable:
    """Adds weight*|expr| as a penalty, through z >= expr, z >= -expr.

    The penalty is subtracted under maximization and added under minimization.
    """
    if weight < 0:
        raise UnsoundLinearization.make(
            f"|expr| with weight {weight} would reward the auxiliary variable; it cannot be linearized"
        )
    name = name or f'abs{len(model.variables)}'
    z = model.add_var(name, 0.0, math.inf)
    expr = LinExpr.of(expr)
    model.add_constraint(z - expr, GE, 0.0, name=f'{name}_pos')
    model.add_constraint(z + expr, GE, 0.0, name=f'{name}_neg')
    model.add_objective(z, -weight if model.sense == MAXIMIZE else weight)
    return z


@dataclass
class MilpSolution:
    status: str
    x: object = None  # np.ndarray
    objective_value: float = None
    root_bound: float = None
    nodes: int = 0
    incumbents: list = None  # objective after each improvement, in model sense
    names: list = None

    @property
    def values(self) -> dict:
        if self.x is None:
            return {}
        return dict(zip(self.names, map(float, self.x)))

    def __getitem__(self, item):
        if isinstance(item, Variable):
            return float(self.x[item.index])
        return LinExpr.of(item).value(self.x)

    @property
    def is_optimal(self):
        return self.status == OPTIMAL


def _highs_relaxation(c, A, senses, b, lower, upper):
    from scipy.optimize import linprog

    le = senses == LE
    ge = senses == GE
    eq = senses == EQ
    A_ub = np.vstack([A[le], -A[ge]])
    b_ub = np.concatenate([b[le], -b[ge]])
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u) for l, u in zip(lower, upper)]
    res = linprog(
        c,
        A_ub=A_ub if len(A_ub) else None,
        b_ub=b_ub if len(b_ub) else None,
        A_eq=A[eq] if eq.any() else None,
        b_eq=b[eq] if eq.any() else None,
        bounds=bounds,
        method='highs',
    )
    status = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, INFEASIBLE)
    if status != OPTIMAL:
        return simplex.LpResult(status)
    return simplex.LpResult(OPTIMAL, np.asarray(res.x), float(res.fun), None, int(res.nit))


def _relax(c, A, senses, b, lower, upper, tol: Tolerances, backend):
    if backend == 'highs':
        return _highs_relaxation(c, A, senses, b, lower, upper)
    if backend != 'simplex':
        raise ModelError.make(f"unknown LP backend {backend!r}")
    return simplex.solve_lp(c, A, senses, b, lower, upper, feas_tol=tol.feasibility)


def solve(model: MilpModel, tolerances: Optional[Tolerances] = None, backend=None) -> MilpSolution:
    """Depth-first branch-and-bound on the model's binaries.

    Branches on the most fractional binary (lowest index on ties), exploring
    the side nearest to the relaxation value first.
    """
    tol = tolerances or Tolerances.from_settings()
    backend = backend or context.get('lp_backend') or settings.lp_backend
    c, A, senses, b, lower, upper, binaries = model.standard_form()
    sign = -1.0 if model.sense == MAXIMIZE else 1.0
    const = model.objective.constant
    names = [v.name for v in model.variables]

    def to_model_sense(obj):
        return sign * obj + const

    root = _relax(c, A, senses, b, lower, upper, tol, backend)
    if root.status != OPTIMAL:
        solver_log.debug("%s: root relaxation %s", model.name, root.status)
        return MilpSolution(root.status, nodes=1, incumbents=[], names=names)

    best_x = None
    best_obj = math.inf
    incumbents = []
    nodes = 0
    hit_limit = False

    stack = [(lower, upper, root)]
    while stack:
        if nodes >= tol.node_limit:
            hit_limit = True
            break
        lo, hi, res = stack.pop()
        if res is None:
            res = _relax(c, A, senses, b, lo, hi, tol, backend)
        nodes += 1
        if res.status == ITERATION_LIMIT:
            hit_limit = True
            continue
        if res.status != OPTIMAL:
            continue
        if res.objective >= best_obj - tol.gap:
            continue

        x = res.x
        if len(binaries):
            vals = x[binaries]
            frac = np.minimum(vals - np.floor(vals), np.ceil(vals) - vals)
            frac[np.abs(vals - np.round(vals)) <= tol.integrality] = 0.0
        else:
            frac = np.zeros(0)

        if not len(frac) or frac.max() == 0.0:
            best_x = x.copy()
            if len(binaries):
                best_x[binaries] = np.round(best_x[binaries])
            best_obj = res.objective
            incumbents.append(to_model_sense(best_obj))
            continue

        k = int(binaries[int(np.argmax(frac))])  # argmax returns the lowest index on ties
        down_hi = hi.copy()
        down_hi[k] = 0.0
        up_lo = lo.copy()
        up_lo[k] = 1.0
        down = (lo, down_hi, None)
        up = (up_lo, hi, None)
        if x[k] >= 0.5:
            stack += [down, up]
        else:
            stack += [up, down]

    if best_x is None:
        status = ITERATION_LIMIT if hit_limit else INFEASIBLE
        return MilpSolution(status, None, None, to_model_sense(root.objective), nodes, incumbents, names)

    status = ITERATION_LIMIT if hit_limit else OPTIMAL
    return MilpSolution(
        status,
        best_x,
        to_model_sense(float(c @ best_x)),
        to_model_sense(root.objective),
        nodes,
        incumbents,
        names,
    )


def solve_or_raise(model: MilpModel, tolerances=None) -> MilpSolution:
    "Like solve(), but anything short of optimal is a SolverError carrying the model"
    sol = solve(model, tolerances)
    if sol.status != OPTIMAL:
        dump = model.dump()
        if settings.dump_dir:
            path = Path(settings.dump_dir) / f'{model.name}.lp'
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(dump)
            solver_log.warning("wrote failed model to %s", path)
        raise SolverError.make(f"{model.name}: solver returned {sol.status}", status=sol.status, model_dump=dump)
    return sol
