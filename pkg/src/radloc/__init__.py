"""Anderson models on random radial trees through half-line transfer cocycles."""
from .model import (
    EnvironmentWord,
    InvalidDistribution,
    SingleGenDistribution,
    SiteParams,
    sample_word,
    tree_geometry,
)

__version__ = "0.1.0"
