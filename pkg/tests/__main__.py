import sys
import unittest
import logging
logging.basicConfig(level=logging.INFO)

from .test_dynamics import *
from .test_estimation import *
from .test_milp import *
from .test_planner import *
from .test_event import *
from .test_metrics import *
from .test_config import *
from .test_sim import *
from .test_campaign import *

minimal = [
    TestMotionModel,
    TestMean,
    TestCovariance,
    TestKalmanFilter,
    TestSimplex,
    TestBranchAndBound_0_Simplex,
    TestModel,
    TestAvoidPeriod,
    TestDecisions,
    TestParse,
    TestErrors,
]

full = minimal + [
    TestEllipse,
    TestProbabilities,
    TestBranchAndBound_1_Highs,
    TestEffectiveAxis,
    TestKinematics,
    TestCrossingOrder,
    TestPlans,
    TestProjectionAndFollow,
    TestOccupancy,
    TestEventState,
    TestStepLogic,
    TestReport,
    TestTables,
    TestDisplay,
    TestArrivals,
    TestAdmission,
    TestTruth,
    TestConfig,
    TestSimulation,
    TestDecisionMaking,
    TestCollisionRate,
    TestModelsPerAxis,
    TestSpec,
    TestRun,
    TestCommandLine,
]

TESTS_SUITES = {
    'minimal': minimal,
    'full': full,
}

def run_test_suite(suit):
    tests = TESTS_SUITES[suit]
    suite = unittest.TestSuite()
    for t in tests:
        suite.addTests(unittest.defaultTestLoader.loadTestsFromTestCase(t))
    result = unittest.TextTestRunner().run(suite)
    return result.wasSuccessful()

if __name__ == '__main__':
    try:
        ok = run_test_suite(sys.argv[1])
    except (LookupError, IndexError):
        unittest.main()
    else:
        sys.exit(0 if ok else 1)
