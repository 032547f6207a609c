import platform

import numpy as np
import pytest

from thinlayer._fpenv import flush_subnormals
from thinlayer.errors import InsufficientBoundStates, InvalidConfig, ThinLayerError


@pytest.mark.skipif(platform.machine() not in ("x86_64", "AMD64"), reason="x86 control register only")
def test_flush_subnormals_scoped():
    tiny = np.array([1e-310])
    assert (tiny * 1.0)[0] == 1e-310
    with flush_subnormals():
        assert (tiny * 1.0)[0] == 0.0
    assert (tiny * 1.0)[0] == 1e-310


def test_flush_subnormals_restores_on_error():
    tiny = np.array([1e-310])
    with pytest.raises(RuntimeError):
        with flush_subnormals():
            raise RuntimeError("boom")
    assert (tiny * 1.0)[0] == 1e-310


def test_error_hierarchy():
    err = InsufficientBoundStates(3, 1, 0.0)
    assert isinstance(err, ThinLayerError)
    assert (err.requested, err.found, err.edge) == (3, 1, 0.0)
    assert issubclass(InvalidConfig, ValueError)
