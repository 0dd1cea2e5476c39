import numpy as np
import pytest

from quadricfit.manifold import as_spd, so3_exp
from quadricfit.quadric import RtsState


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_spd(rng, scale=1.0):
    a = rng.normal(size=(3, 3))
    return as_spd(a @ a.T + scale * np.eye(3))


def random_rotation(rng):
    return so3_exp(rng.normal(size=3))


def random_rts(rng, t_scale=2.0):
    return RtsState(
        random_rotation(rng),
        rng.normal(size=3) * t_scale,
        rng.uniform(0.3, 2.5, size=3),
    )


def random_sym(rng, scale=1.0):
    a = rng.normal(size=(3, 3)) * scale
    return 0.5 * (a + a.T)
