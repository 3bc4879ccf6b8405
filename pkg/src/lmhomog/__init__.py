"""Homogeneity tests for regional frequency analysis based on L-moments.

The parametric HW test and five resampling tests (permutation,
bootstrap, centered bootstrap and two Polya-urn variants) share the same
V statistic built from at-site L-CV matrices.
"""

from .errors import *  # noqa: F401,F403
from .parametric import hw_test
from .resampling import np_test
from .statistic import Region, v_statistic

__all__ = ["Region", "v_statistic", "hw_test", "np_test"]
__version__ = "0.1.0"
