from logging import (
    CRITICAL,
    DEBUG,
    ERROR,
    INFO,
    WARN,
    Formatter,
    Handler,
    StreamHandler,
    basicConfig,
    getLogger,
)

basicConfig(level=INFO, format="(%(levelname)s) %(name)s -- %(message)s")

sh = StreamHandler()
sh.setFormatter(Formatter('(%(levelname)s) %(name)s -- %(message)s'))

_loggers = []


def make_logger(name, level):
    logger = getLogger(name)
    logger.propagate = False
    logger.setLevel(level)
    logger.addHandler(sh)
    _loggers.append(logger)
    return logger


def set_level(level):
    for logger in _loggers:
        logger.setLevel(level)


def install_handler(handler: Handler):
    "Replaces the shared handler on every intersim logger (used by the CLI for rich output)"
    global sh
    for logger in _loggers:
        logger.removeHandler(sh)
        logger.addHandler(handler)
    sh = handler


solver_log = make_logger('milp', WARN)
planner_log = make_logger('planner', WARN)
event_log = make_logger('event', WARN)
sim_log = make_logger('sim', INFO)
campaign_log = make_logger('campaign', INFO)
test_log = make_logger('tests', ERROR)
