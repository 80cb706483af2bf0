import warnings

import pytest

from loopsoup.loopmeasure import LengthTable


@pytest.fixture(scope="session")
def table3_big():
    """d=3 length table deep enough for series extrapolation oracles."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return LengthTable(3, 16384, validate=False)


@pytest.fixture(scope="session")
def table5_big():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return LengthTable(5, 8192, validate=False)


@pytest.fixture(scope="session")
def table3_small():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return LengthTable(3, 8, validate=False)
