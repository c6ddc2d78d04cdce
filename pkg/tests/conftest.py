import pytest

from wdmrx.physparams import FiberParams


@pytest.fixture
def fiber():
    """Reference single-span link used throughout the tests."""
    return FiberParams(span_length=150.0, attenuation_db=0.25, gamma=1.27,
                       n_span=1, symbol_rate=1e10, photon_energy=1.28e-19,
                       noise_figure_db=6.0)
