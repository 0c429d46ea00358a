import pytest

from hsicnoma.model import SystemConfig


def make_cfg(M=5, m=1, n=5, beta=1 / 3, snr_db=20.0, ratio=5.0, R_m=0.2):
    return SystemConfig.from_snr_db(M, m, n, beta, snr_db, ratio, R_m)


@pytest.fixture
def cfg_factory():
    return make_cfg
