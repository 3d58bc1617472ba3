"""Performance analysis of d-ary tree random access with successive interference cancellation."""
from .splitmodel import CriOutcome, SplitDistribution, fair, make_split_distribution, parse_distribution, pbi

__version__ = "0.1.0"

__all__ = [
    "CriOutcome",
    "SplitDistribution",
    "fair",
    "make_split_distribution",
    "parse_distribution",
    "pbi",
    "__version__",
]
