debug = False
typecheck = False  # not sys.flags.optimize

# LP relaxations inside branch-and-bound: "highs" (scipy) or "simplex" (built-in, the checked reference)
lp_backend = 'highs'

feasibility_tol = 1e-6
integrality_tol = 1e-6
optimality_gap = 1e-6
node_limit = 20000

# Failed solver models are written here as LP text, if set
dump_dir = None

output_env_var = 'INTERSIM_OUTPUT_DIR'

color_theme = {
    'text': '#c0c0c0',
    'header': 'bold #0060f0',
    'number': '#40f0f0',
    'strategy': 'bold #f0f0f0',
    'ok': '#40f040',
    'error': '#f04040',
}

update_color_theme = {}


class Display:
    CDF_PREVIEW_POINTS = 11
    MAX_TABLE_ROWS = 64


try:
    from .local_settings import *
except ImportError:
    pass


color_theme.update(update_color_theme)
