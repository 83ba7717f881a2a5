import functools
import itertools
import math
import time

import numpy as np
from parameterized import parameterized, parameterized_class
from scipy.optimize import linprog

from intersim.context import context
from intersim.core.exceptions import ModelError, SolverError, UnsoundLinearization
from intersim.core.milp import (
    EQ,
    GE,
    LE,
    MAXIMIZE,
    MINIMIZE,
    LinExpr,
    MilpModel,
    add_absolute_value_term,
    solve,
    solve_or_raise,
)
from intersim.core.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, lagrangian_bound, solve_lp
from intersim.loggers import test_log

from .common import IntersimTests


def random_lp(seed, m=6, n=5):
    "A feasible, bounded LP with mixed row senses, in solve_lp's argument order"
    rng = np.random.default_rng(seed)
    A = rng.uniform(-2, 2, (m, n))
    lower = rng.uniform(-3, 0, n)
    upper = lower + rng.uniform(0.5, 4, n)
    x0 = lower + rng.uniform(0, 1, n) * (upper - lower)
    senses = np.array([LE, GE, LE, EQ, GE, LE][:m], dtype=object)
    act = A @ x0
    b = np.where(senses == LE, act + rng.uniform(0, 1, m), np.where(senses == GE, act - rng.uniform(0, 1, m), act))
    c = rng.uniform(-1, 1, n)
    return c, A, senses, b, lower, upper


def scipy_lp(c, A, senses, b, lower, upper):
    le, ge, eq = senses == LE, senses == GE, senses == EQ
    res = linprog(
        c,
        A_ub=np.vstack([A[le], -A[ge]]),
        b_ub=np.concatenate([b[le], -b[ge]]),
        A_eq=A[eq] if eq.any() else None,
        b_eq=b[eq] if eq.any() else None,
        bounds=list(zip(lower, upper)),
        method='highs',
    )
    return res


class TestSimplex(IntersimTests):
    @parameterized.expand([(seed,) for seed in range(12)])
    def test_matches_reference(self, seed):
        lp = random_lp(seed)
        res = solve_lp(*lp)
        ref = scipy_lp(*lp)
        self.assertEqual(res.status, OPTIMAL)
        self.assertEqual(ref.status, 0)
        self.assertAlmostEqual(res.objective, ref.fun, places=6)

    @parameterized.expand([(seed,) for seed in range(12)])
    def test_duality_certificate(self, seed):
        lp = random_lp(seed)
        res = solve_lp(*lp)
        bound = lagrangian_bound(*lp, res.duals)
        self.assertAlmostEqual(bound, res.objective, places=6)

        # any multipliers give a lower bound
        y = np.random.default_rng(seed).uniform(-1, 1, len(lp[3]))
        y[lp[2] == LE] = -np.abs(y[lp[2] == LE])
        y[lp[2] == GE] = np.abs(y[lp[2] == GE])
        self.assertLessEqual(lagrangian_bound(*lp, y), res.objective + 1e-9)

    def test_infeasible(self):
        # x <= 1 and x >= 2
        A = np.array([[1.0], [1.0]])
        res = solve_lp([1.0], A, np.array([LE, GE], dtype=object), [1.0, 2.0], [-np.inf], [np.inf])
        self.assertEqual(res.status, INFEASIBLE)
        self.assertEqual(solve_lp([1.0], np.zeros((0, 1)), [], [], [2.0], [1.0]).status, INFEASIBLE)

    def test_unbounded(self):
        A = np.array([[1.0, -1.0]])
        res = solve_lp([-1.0, 0.0], A, np.array([LE], dtype=object), [1.0], [0.0, 0.0], [np.inf, np.inf])
        self.assertEqual(res.status, UNBOUNDED)

    def test_degenerate(self):
        # many constraints through the same vertex
        n = 4
        rows = [np.eye(n)[i] for i in range(n)] + [np.ones(n)] * 8 + [np.arange(1, n + 1)] * 4
        A = np.array(rows, dtype=float)
        b = np.array([1.0] * n + [n] * 8 + [10.0] * 4)
        senses = np.array([LE] * len(rows), dtype=object)
        res = solve_lp(-np.ones(n), A, senses, b, np.zeros(n), np.full(n, np.inf))
        self.assertEqual(res.status, OPTIMAL)
        self.assertAlmostEqual(res.objective, -n)


def random_milp(seed, binaries=3, continuous=2, rows=4):
    rng = np.random.default_rng(seed)
    model = MilpModel(f'random{seed}', MAXIMIZE if seed % 2 else MINIMIZE)
    xs = [model.add_var(f'x{i}', 0.0, rng.uniform(1, 5)) for i in range(continuous)]
    ys = [model.add_var(f'y{i}', 0.0, 1.0, binary=True) for i in range(binaries)]
    point = np.concatenate([[rng.uniform(0, v.upper) for v in xs], rng.integers(0, 2, binaries)])
    for r in range(rows):
        coef = rng.uniform(-3, 3, continuous + binaries)
        expr = LinExpr({i: coef[i] for i in range(len(coef))})
        act = float(coef @ point)
        if r % 2:
            model.add_constraint(expr, LE, act + rng.uniform(0, 1))
        else:
            model.add_constraint(expr, GE, act - rng.uniform(0, 1))
    for v in xs + ys:
        model.add_objective(v, rng.uniform(-2, 2))
    return model


def brute_force(model: MilpModel):
    "Best objective over every assignment of the binaries, continuous part by scipy"
    c, A, senses, b, lower, upper, binaries = model.standard_form()
    best = math.inf
    for combo in itertools.product((0.0, 1.0), repeat=len(binaries)):
        lo, hi = lower.copy(), upper.copy()
        lo[binaries] = hi[binaries] = combo
        res = scipy_lp(c, A, senses, b, lo, hi)
        if res.status == 0:
            best = min(best, res.fun)
    sign = -1.0 if model.sense == MAXIMIZE else 1.0
    return sign * best + model.objective.constant


@functools.lru_cache(maxsize=None)
def enumerated_optimum(seed):
    return brute_force(random_milp(seed, *oracle_size(seed)))


def oracle_size(seed):
    "Binaries, continuous variables and rows of the seed-th oracle instance: up to 8 and 12"
    return 1 + seed % 8, 1 + (5 * seed) % 12, 10


@parameterized_class(('name', 'lp_backend'), [('Simplex', 'simplex'), ('Highs', 'highs')])
class TestBranchAndBound(IntersimTests):
    def test_random_instances(self):
        elapsed = 0.0
        for seed in range(100):
            model = random_milp(seed, *oracle_size(seed))
            start = time.perf_counter()
            sol = solve(model)
            elapsed += time.perf_counter() - start
            self.assertEqual(sol.status, OPTIMAL, model.dump())
            self.assertAlmostEqual(sol.objective_value, enumerated_optimum(seed), delta=1e-6)
            self.assertEqual(model.check(sol.x), [])
            for v in model.binaries:
                self.assertIn(sol[v], (0.0, 1.0))
        test_log.info("%s: 100 oracle instances solved in %.2fs", self.lp_backend, elapsed)
        self.assertLessEqual(elapsed, 10.0)

    def test_root_bound(self):
        model = random_milp(4)
        sol = solve(model)
        if model.sense == MAXIMIZE:
            self.assertGreaterEqual(sol.root_bound, sol.objective_value - 1e-7)
        else:
            self.assertLessEqual(sol.root_bound, sol.objective_value + 1e-7)
        self.assertAlmostEqual(sol.incumbents[-1], sol.objective_value)

    def test_knapsack(self):
        m = MilpModel('knapsack', MAXIMIZE)
        weights = [5, 4, 3, 2]
        values = [10, 7, 5, 3]
        ys = [m.add_var(f'take{i}', binary=True, upper=1.0) for i in range(4)]
        m.add_constraint(sum((w * y for w, y in zip(weights, ys)), LinExpr()), LE, 9)
        for v, y in zip(values, ys):
            m.add_objective(y, v)
        sol = solve(m)
        self.assertAlmostEqual(sol.objective_value, 17.0)
        self.assertEqual([sol[y] for y in ys], [1.0, 1.0, 0.0, 0.0])

    def test_infeasible_raises(self):
        m = MilpModel('broken')
        y = m.add_var('y', 0.0, 1.0, binary=True)
        m.add_constraint(y, GE, 0.4)
        m.add_constraint(y, LE, 0.6)
        self.assertEqual(solve(m).status, INFEASIBLE)
        with self.assertRaises(SolverError) as cm:
            solve_or_raise(m)
        self.assertEqual(cm.exception.status, INFEASIBLE)
        self.assertIn('Binaries', cm.exception.model_dump)

    def test_context_backend(self):
        m = random_milp(2)
        with context(lp_backend='highs'):
            a = solve(m)
        b = solve(m, backend='simplex')
        self.assertAlmostEqual(a.objective_value, b.objective_value, places=6)


class TestModel(IntersimTests):
    def test_expressions(self):
        m = MilpModel('expr')
        x = m.add_var('x', -1, 1)
        y = m.add_var('y')
        e = x + 2 * y - 3
        self.assertEqual(e.terms, {0: 1.0, 1: 2.0})
        self.assertEqual(e.constant, -3.0)
        self.assertEqual(e.value([1.0, 2.0]), 2.0)
        self.assertEqual((5 - x).value([1.0, 0.0]), 4.0)
        self.assertEqual((-e).constant, 3.0)
        self.assertRaises(TypeError, lambda: x * y)

    def test_bad_models(self):
        m = MilpModel('bad')
        self.assertRaises(ModelError, MilpModel, 'x', 'maybe')
        self.assertRaises(ModelError, m.add_var, 'b', 0.0, 2.0, True)
        self.assertRaises(ModelError, m.add_var, 'e', 1.0, 0.0)
        x = m.add_var('x')
        self.assertRaises(ModelError, m.add_constraint, x, '<', 1.0)
        self.assertRaises(ModelError, m.add_constraint, LinExpr({3: 1.0}), LE, 1.0)

    def test_absolute_value(self):
        m = MilpModel('abs', MINIMIZE)
        x = m.add_var('x', -5, 5)
        m.add_constraint(x, GE, -2)
        add_absolute_value_term(m, x + 1, 1.0)
        sol = solve(m)
        self.assertAlmostEqual(sol[x], -1.0)
        self.assertAlmostEqual(sol.objective_value, 0.0)

        self.assertRaises(UnsoundLinearization, add_absolute_value_term, m, x, -1.0)

    @parameterized.expand([(seed,) for seed in range(20)])
    def test_absolute_value_grid(self, seed):
        # the grid holds the bounds and the kink, so its best point is the exact optimum
        rng = np.random.default_rng(seed)
        lo, hi = float(rng.integers(-10, 0)), float(rng.integers(1, 10))
        c = round(float(rng.uniform(lo - 2, hi + 2)), 2)
        w, q = rng.uniform(0.5, 3), rng.uniform(-1, 1)
        sense = MAXIMIZE if seed % 2 else MINIMIZE

        m = MilpModel(f'abs_grid{seed}', sense)
        x = m.add_var('x', lo, hi)
        m.add_objective(x, q)
        add_absolute_value_term(m, x - c, w)
        sol = solve(m)

        grid = np.linspace(lo, hi, int(round((hi - lo) * 100)) + 1)
        if sense == MINIMIZE:
            best = np.min(w * np.abs(grid - c) + q * grid)
        else:
            best = np.max(q * grid - w * np.abs(grid - c))
        self.assertEqual(sol.status, OPTIMAL)
        self.assertAlmostEqual(sol.objective_value, best, delta=1e-6)

    def test_dump_and_check(self):
        m = MilpModel('dumped', MAXIMIZE)
        x = m.add_var('x', 0, 4)
        y = m.add_var('y', binary=True, upper=1.0)
        m.add_constraint(x - 3 * y, LE, 1, 'link')
        m.add_objective(x, 2.0)
        text = m.dump()
        self.assertIn('Maximize', text)
        self.assertIn(' link: 1 x - 3 y <= 1', text)
        self.assertIn(' 0 <= x <= 4', text)
        self.assertIn('Binaries\n y', text)
        self.assertTrue(text.endswith('End\n'))

        self.assertEqual(m.check([2.0, 0.0]), ['link'])
        self.assertEqual(m.check([-1.0, 0.0]), ['bound:x'])
        self.assertEqual(m.check([4.0, 1.0]), [])

    def test_fix(self):
        m = random_milp(6)
        y = m.binaries[0]
        m.fix(y, 1.0)
        sol = solve(m)
        if sol.is_optimal:
            self.assertEqual(sol[y], 1.0)
