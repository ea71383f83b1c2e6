__version__ = "0.1"

from .errors import (
    HalographError,
    StlParseError,
    SchemaError,
    ChecksumError,
    ConfigError,
    HaloDepthError,
    NonFiniteError,
)
from .geometry import *
from .pointcloud import *
from .graph import *
from .partition import *
from .gnn import *
from .stencil import *
from .config import PipelineConfig, load_config
