from .campaign import CampaignSpec, preset_spec, run_campaign
from .core.config import emit_config, parse_config, parse_config_text
from .core.exceptions import IntersimError
from .core.sim import ScenarioConfig, run_scenario

__version__ = "0.1.0"
