import math

import pytest

from hsicnoma.closed_form import (
    TABLES,
    RegimeClass,
    Table,
    classify_regime,
    closed_form_parts,
    derive_constants,
    phi_kernel,
    ptilde_closed,
    ptilde_closed_m_gt_n,
    ptilde_closed_m_lt_n,
    term_value,
)
from hsicnoma.errors import DomainError, SingularRegimeError
from hsicnoma.model import SystemConfig
from hsicnoma.quadrature import ptilde_quadrature
from hsicnoma.sampling import SamplerSpec, mc_probability

from conftest import make_cfg

# (m, n, R_m) per table: eps branch for I/III needs eps_m > beta/(1-beta) = 1/2 at beta = 1/3
TABLE_CASES = {
    Table.I: (2, 5, 1.0),
    Table.II: (2, 5, 0.2),
    Table.III: (5, 2, 1.0),
    Table.IV: (5, 2, 0.2),
}


def cfg_at_eta(m, n, R_m, eta, rho_n=20.0, beta=1 / 3, M=5):
    return SystemConfig(M=M, m=m, n=n, beta=beta, rho_n=rho_n, rho_m=rho_n / eta, R_m=R_m)


class TestConstants:
    def test_unit_rate(self):
        k = derive_constants(make_cfg(R_m=1.0))
        assert k.eps_m == pytest.approx(1.0)
        assert k.kappa1 == pytest.approx(1.5)
        assert k.kappa2 == pytest.approx(9.0)
        assert k.breakpoints == pytest.approx((1.5, 3.0, 6.0, 9.0))

    def test_low_rate(self):
        k = derive_constants(make_cfg(R_m=0.2))
        assert k.eps_m == pytest.approx(0.148698, abs=1e-6)
        assert k.kappa1 == pytest.approx(10.0875, abs=1e-4)
        assert k.kappa3 == pytest.approx(13.0875, abs=1e-4)
        assert k.kappa2 == pytest.approx(26.175, abs=1e-3)

    def test_omega3(self):
        cfg = SystemConfig(M=5, m=1, n=5, beta=1 / 3, rho_n=100.0, rho_m=20.0, R_m=0.2)
        assert derive_constants(cfg).omega3 == pytest.approx(0.03)

    @pytest.mark.parametrize("beta", [0.01, 0.1, 1 / 3, 0.49])
    @pytest.mark.parametrize("R_m", [0.05, 0.5, 3.0])
    def test_kappa_identity(self, beta, R_m):
        k = derive_constants(make_cfg(beta=beta, R_m=R_m))
        assert k.kappa3 == pytest.approx(k.kappa1 + 1 / beta, rel=4 * 2.2e-16)

    def test_singular_flag(self):
        beta = 1 / 3
        k = derive_constants(cfg_at_eta(2, 5, 1.0, (1 - beta) / beta**2))
        assert "omega4" in k.singular

    def test_prefactors(self):
        k = derive_constants(make_cfg(m=2, n=5))
        assert k.c_mn == math.factorial(5) / (1 * 2 * 1)
        assert k.chat_mn is None
        assert k.c_p(0) == 1 and k.c_p(1) == -2 and k.c_p(2) == 1
        assert k.c_l(0) == 1


class TestRegime:
    def test_table_ii_column1(self):
        r = classify_regime(make_cfg(m=1, n=5, R_m=0.2, ratio=5.0))
        assert (r.table, r.column, r.eps_branch) == (Table.II, 1, False)

    def test_table_i_column4(self):
        r = classify_regime(make_cfg(m=2, n=5, R_m=1.0, ratio=7.0))
        assert (r.table, r.column) == (Table.I, 4)

    def test_table_iii_right_edge_inclusive(self):
        r = classify_regime(cfg_at_eta(5, 2, 1.0, 3.0))
        assert (r.table, r.column) == (Table.III, 2)
        assert r.label == "III/2"

    def test_eps_tie_goes_to_le_branch(self):
        # beta/(1-beta) = 1/3 when beta = 1/4; R_m = log2(4/3) gives eps_m = 1/3
        cfg = make_cfg(beta=0.25, R_m=math.log2(4 / 3))
        k = derive_constants(cfg)
        if k.eps_m == pytest.approx(1 / 3, rel=1e-15) and k.eps_m <= 0.25 / 0.75:
            assert classify_regime(cfg).table is Table.II

    def test_all_columns_reachable(self):
        for table, (m, n, R_m) in TABLE_CASES.items():
            k = derive_constants(cfg_at_eta(m, n, R_m, 1.0))
            edges = (0.0,) + k.breakpoints + (2 * k.breakpoints[-1],)
            for col in range(1, len(edges)):
                eta = 0.5 * (edges[col - 1] + edges[col]) if col < len(edges) - 1 else edges[-1]
                r = classify_regime(cfg_at_eta(m, n, R_m, eta))
                assert (r.table, r.column) == (table, col)
            assert len(TABLES[table]) == len(k.breakpoints) + 1


class TestPhi:
    def test_values(self):
        assert phi_kernel(0.0, 1.0, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-15)
        assert phi_kernel(0.4, 0.4, 3.0) == 0.0
        assert phi_kernel(0.3, 0.7, 1e-15) == pytest.approx(0.4, rel=1e-12)
        assert phi_kernel(0.0, 2.0, -1.0) == pytest.approx(math.exp(2) - 1)


class TestClosedForm:
    @pytest.mark.parametrize("snr_db", [10.0, 20.0, 30.0])
    def test_fig1a_vs_quadrature(self, snr_db):
        cfg = make_cfg(snr_db=snr_db)
        assert ptilde_closed_m_lt_n(cfg).value == pytest.approx(ptilde_quadrature(cfg).value, rel=1e-6)

    def test_fig1b_vs_quadrature(self):
        cfg = make_cfg(m=5, n=1, snr_db=20.0)
        assert ptilde_closed_m_gt_n(cfg).value == pytest.approx(ptilde_quadrature(cfg).value, rel=1e-6)

    @pytest.mark.parametrize("table", list(Table))
    def test_every_column_vs_quadrature(self, table):
        m, n, R_m = TABLE_CASES[table]
        k = derive_constants(cfg_at_eta(m, n, R_m, 1.0))
        edges = (0.0,) + k.breakpoints
        etas = [0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])] + [1.5 * edges[-1]]
        for col, eta in enumerate(etas, 1):
            cfg = cfg_at_eta(m, n, R_m, eta)
            assert classify_regime(cfg).column == col
            assert ptilde_closed(cfg).value == pytest.approx(
                ptilde_quadrature(cfg).value, rel=1e-6), (table, col)

    def test_last_column_has_no_p21(self):
        k = derive_constants(cfg_at_eta(2, 5, 1.0, 1.0))
        cfg = cfg_at_eta(2, 5, 1.0, 1.2 * k.kappa2)
        assert classify_regime(cfg).column == 5
        assert closed_form_parts(cfg)["P21"] == 0.0

    @pytest.mark.parametrize("table", list(Table))
    def test_column_continuity(self, table):
        # left column just below each edge vs right column just above; two of the
        # Table I/III edges sit on a zero denominator, so no edge is evaluated exactly
        m, n, R_m = TABLE_CASES[table]
        k = derive_constants(cfg_at_eta(m, n, R_m, 1.0))
        for col, edge in enumerate(k.breakpoints, 1):
            below = cfg_at_eta(m, n, R_m, edge * (1 - 1e-10))
            above = cfg_at_eta(m, n, R_m, edge * (1 + 1e-10))
            assert classify_regime(below).column == col
            assert classify_regime(above).column == col + 1
            left = ptilde_closed(below, check_singular=False).value
            right = ptilde_closed(above, check_singular=False).value
            assert right == pytest.approx(left, rel=1e-8), (table, col)

    def test_same_point_columns_agree(self):
        m, n, R_m = TABLE_CASES[Table.II]
        k = derive_constants(cfg_at_eta(m, n, R_m, 1.0))
        for col, edge in enumerate(k.breakpoints, 1):
            cfg = cfg_at_eta(m, n, R_m, edge)
            left = ptilde_closed(cfg, regime=RegimeClass(Table.II, col, False)).value
            right = ptilde_closed(cfg, regime=RegimeClass(Table.II, col + 1, False)).value
            assert right == pytest.approx(left, rel=1e-8), col

    def test_singular_raises(self):
        beta = 1 / 3
        with pytest.raises(SingularRegimeError):
            ptilde_closed(cfg_at_eta(2, 5, 1.0, (1 - beta) / beta**2))

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            ptilde_closed_m_lt_n(make_cfg(m=5, n=1))
        with pytest.raises(DomainError):
            ptilde_closed_m_gt_n(make_cfg(m=1, n=5))
        with pytest.raises(DomainError):
            term_value(make_cfg(m=5, n=1), "T1")

    def test_flags(self):
        est = ptilde_closed(make_cfg())
        assert est.flags == ("table=II", "column=1")
        assert est.stderr == 0.0

    def test_deep_tail_precision(self):
        cfg = make_cfg(M=6, m=1, n=6, snr_db=45.0)
        cf = ptilde_closed(cfg).value
        assert 0.0 < cf < 1e-15
        assert cf == pytest.approx(ptilde_quadrature(cfg).value, rel=1e-6)

    @pytest.mark.parametrize("kw", [dict(m=2, n=5, R_m=1.0, ratio=7.0), dict(m=5, n=2, R_m=1.0, ratio=2.0)])
    def test_vs_monte_carlo(self, kw):
        cfg = make_cfg(snr_db=10.0, **kw)
        mc = mc_probability(cfg, "HSIC", SamplerSpec(seed=31, n_samples=10**7))
        assert mc.within(ptilde_closed(cfg).value, 3.0)
