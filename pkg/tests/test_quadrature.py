import math

import numpy as np
import pytest
from scipy import integrate

from hsicnoma.closed_form import DerivedConstants, derive_constants, ptilde_closed
from hsicnoma.errors import ConfigError, DomainError
from hsicnoma.model import Region, SystemConfig
from hsicnoma.quadrature import (
    integrate_region,
    joint_order_stat_pdf,
    order_stat_pdf,
    pdf_normalization,
    ptilde_quadrature,
    region_masses,
    region_specs,
)
from hsicnoma.sampling import SamplerSpec, mc_probability

from conftest import make_cfg


class TestDensity:
    @pytest.mark.parametrize("M", range(2, 9))
    def test_normalization(self, M):
        for i in range(1, M):
            for j in range(i + 1, M + 1):
                assert abs(pdf_normalization(M, i, j) - 1.0) <= 1e-9, (M, i, j)

    def test_two_user_form(self):
        for x, y in [(0.1, 0.3), (0.0, 2.0), (1.5, 1.5)]:
            assert joint_order_stat_pdf(2, 1, 2, x, y) == pytest.approx(2 * math.exp(-x - y))

    @pytest.mark.parametrize("M,i,j", [(5, 1, 5), (5, 2, 4), (6, 3, 4)])
    def test_marginal(self, M, i, j):
        for y in (0.2, 1.0, 3.0):
            val = integrate.quad(lambda x: joint_order_stat_pdf(M, i, j, x, y), 0, y,
                                 epsabs=1e-14, epsrel=1e-12)[0]
            assert val == pytest.approx(order_stat_pdf(M, j, y), rel=1e-8)

    @pytest.mark.parametrize("args", [(5, 3, 2, 0.1, 0.2), (5, 1, 6, 0.1, 0.2),
                                      (5, 1, 2, 0.5, 0.2), (5, 1, 2, -0.1, 0.2)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            joint_order_stat_pdf(*args)


class TestRegions:
    def test_empty_p11_above_kappa1(self):
        cfg = make_cfg(m=1, n=5, R_m=1.0, ratio=4.0)
        assert cfg.eta > derive_constants(cfg).kappa1
        spec = region_specs(cfg)[Region.P11]
        assert integrate_region(cfg, spec).value <= 1e-10

    def test_p22_vanishes_with_rate(self):
        masses = [region_masses(make_cfg(m=2, n=5, R_m=r, snr_db=10.0))[Region.P22].value
                  for r in (1e-2, 1e-4, 1e-6)]
        assert masses[0] > masses[1] > masses[2]
        assert masses[2] < 1e-6

    def test_sum_at_most_one(self):
        for kw in (dict(snr_db=0.0, beta=0.05), dict(m=5, n=1, snr_db=0.0, beta=0.06)):
            assert ptilde_quadrature(make_cfg(**kw)).value <= 1.0 + 1e-10

    def test_tol_range(self):
        cfg = make_cfg()
        with pytest.raises(ConfigError):
            integrate_region(cfg, region_specs(cfg)[Region.P22], tol=1e-2)


class TestPtilde:
    def test_vanishing_beta(self):
        assert ptilde_quadrature(make_cfg(beta=1e-6)).value == pytest.approx(1.0, abs=1e-8)

    def test_finite_at_singular_breakpoint(self):
        beta = 1 / 3
        cfg = make_cfg(m=2, n=5, R_m=1.0, ratio=(1 - beta) / beta**2, snr_db=10.0)
        est = ptilde_quadrature(cfg)
        assert 0.0 < est.value < 1.0
        mc = mc_probability(cfg, "HSIC", SamplerSpec(seed=17, n_samples=10**6))
        assert mc.within(est.value, 3.0)

    @pytest.mark.parametrize("snr_db", [10.0, 20.0, 30.0])
    def test_fig1a_matches_closed_form(self, snr_db):
        cfg = make_cfg(snr_db=snr_db)
        assert ptilde_quadrature(cfg).value == pytest.approx(ptilde_closed(cfg).value, rel=1e-6)
