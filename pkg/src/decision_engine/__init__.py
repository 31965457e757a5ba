"""Rule-driven decision engine for provisioning computing resources.

Channels of sources, transforms, rules and publishers run decision cycles
over a versioned, archived data space. The ``stdlib`` subpackage supplies
the provisioning plugins and ``sim`` a simulated hybrid facility to run
them against.
"""

from .config import ValidationProblem, load_config, parse_config, validate_config
from .dataspace import ArchiveRecord, DataProduct, DataSpace, read_archive
from .framework import Channel, ChannelState, CycleOutcome, Engine, assemble_channel
from .model import ChannelConfig, EngineConfig, ModuleSpec, SourceProxyBinding
from .plugins import PluginRegistry

__version__ = "0.1.0"

__all__ = [
    "ArchiveRecord",
    "Channel",
    "ChannelConfig",
    "ChannelState",
    "CycleOutcome",
    "DataProduct",
    "DataSpace",
    "Engine",
    "EngineConfig",
    "ModuleSpec",
    "PluginRegistry",
    "SourceProxyBinding",
    "ValidationProblem",
    "assemble_channel",
    "load_config",
    "parse_config",
    "read_archive",
    "validate_config",
]
