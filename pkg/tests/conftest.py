import sys
from pathlib import Path

import pytest

# make the oracle helpers importable from every test module
sys.path.insert(0, str(Path(__file__).parent))

from tempertune.targets import WitchsHat


@pytest.fixture(scope="session")
def concave_params() -> WitchsHat:
    """The hard-to-sample peak: the mean-energy curve is concave on [0, 1]."""
    return WitchsHat(a=1e-4, b=9.5e3)


@pytest.fixture(scope="session")
def convex_params() -> WitchsHat:
    """The easy wide peak: the mean-energy curve is convex on [0, 1]."""
    return WitchsHat(a=0.5, b=7.5e8)
