import numpy as np
import pytest

from hill4bp.connections import DEFAULT_WINDOWS, build_channel
from hill4bp.dynamics import DEFAULT_MU, ModelParams
from hill4bp.integrator import IntegratorConfig
from hill4bp.orbits import continue_family
from hill4bp.scattering import build_chart

X_STARS = (0.615, 0.62, 0.625, 0.63)
# theta nodes every 0.01 covering [0, 1] and all diffusion windows
THETA_GRID = np.round(np.linspace(-2.0, 1.2, 321), 12)


class Pipeline:
    """Lazily built family, channels and charts shared by the whole session."""

    def __init__(self):
        self.params = ModelParams(DEFAULT_MU)
        self.cfg = IntegratorConfig(max_time=40.0)
        self._family = None
        self._channels = {}
        self._charts = {}

    @property
    def family(self):
        if self._family is None:
            self._family = continue_family((0.615, 0.63), 0.005, "L1", self.params, self.cfg)
        return self._family

    def orbit(self, x_star):
        return self.family.nearest(x_star)

    def channel(self, label):
        if label not in self._channels:
            self._channels[label] = build_channel(self.family, label, DEFAULT_WINDOWS[label], self.cfg)
        return self._channels[label]

    def connection(self, label, x_star):
        return self.channel(label).connection(x_star)

    def chart(self, label):
        if label not in self._charts:
            self._charts[label] = build_chart(self.channel(label), theta_grid=THETA_GRID, params=self.params)
        return self._charts[label]


@pytest.fixture(scope="session")
def pipeline():
    return Pipeline()


@pytest.fixture(scope="session")
def params(pipeline):
    return pipeline.params


@pytest.fixture(scope="session")
def cfg(pipeline):
    return pipeline.cfg
