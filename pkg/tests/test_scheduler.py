"""Parameter schedules: LogNum arithmetic, blocks, audits, serialization."""

import math
from fractions import Fraction

import numpy as np
import pytest

from convint import scheduler as schd
from convint.scheduler import LogNum


# ------------------------------------------------------------------- LogNum

def test_lognum_round_trip_and_arithmetic():
    x = LogNum.of(12345)
    assert float(x) == pytest.approx(12345.0, rel=1e-12)
    y = (x * x) / LogNum.of(5)
    assert abs(float(y) - 12345 ** 2 / 5) < 1e-6 * float(y)
    big = LogNum.of(10) ** 5000
    assert big.log10 == pytest.approx(5000.0)
    assert big > LogNum.of(10) ** 4999
    assert (big ** 0.5).log10 == pytest.approx(2500.0)


def test_lognum_exact_integers():
    x = LogNum.of(10 ** 8) ** Fraction(1, 4)
    assert x.is_integer()
    assert float(x) == 100.0


def test_iroot():
    assert schd.iroot(10 ** 8, 4) == (100, True)
    assert schd.iroot(10 ** 8, 3)[1] is False


# ------------------------------------------------------------------ schedule

def test_build_validation():
    with pytest.raises(ValueError):
        schd.build("4d-additive", 10, 2, 0.25, 2.0)
    with pytest.raises(ValueError):
        schd.build("2d-additive", 1, 2, 0.25, 2.0)
    with pytest.raises(ValueError):
        schd.build("2d-additive", 10, 1, 0.25, 2.0)
    with pytest.raises(ValueError):
        schd.build("2d-additive", 10, 2, 0.25, 2.0, m=1.5)
    with pytest.raises(ValueError):
        schd.build("3d-additive", 10, 2, 0.25, 2.0, m=0.5)
    with pytest.raises(ValueError):  # eta outside ((1-m*)/16, (1-m*)/8]
        schd.build("2d-additive", 10, 2, 0.25, 2.0, eta=Fraction(1, 4))


def test_lambda_delta_ladder():
    s = schd.build("2d-additive", 10, 2, 0.25, 2.0)
    assert float(s.lam(0)) == 10.0
    assert float(s.lam(1)) == 100.0
    assert float(s.lam(2)) == 10000.0
    assert float(s.delta(1)) == pytest.approx(100.0 ** -0.5)


def test_block_formulas_2d_exact():
    # a = 10^4 is a perfect 4th power, so with eta = 1/8 (m = 1/2) the
    # exponents r = 1/4, sigma = -3/4, mu = 1/2 land on integers at q = 0
    s = schd.build("2d-additive", 10 ** 4, 2, 1e-3, 2.0, m=0.5)
    blk = s.block(0)
    assert float(blk.lam) == 1e8
    assert float(blk.r) == 100.0
    assert float(blk.lam * blk.sigma) == pytest.approx(100.0)
    assert float(blk.mu) == pytest.approx(1e4)


def test_block_integrality_hard_error():
    s = schd.build("2d-additive", 10, 2, 0.25, 2.0)  # 10^(1/4) not integral
    with pytest.raises(ValueError):
        s.block(0)


def test_overrides_win():
    ov = {"lam": 10, "sigma": 0.5, "r": 1, "mu": 10.0}
    s = schd.build("2d-additive", 10, 2, 0.25, 2.0,
                   block_overrides={0: ov}, l_overrides={0: 0.01})
    blk = s.block(0)
    assert (blk.lam, blk.sigma, blk.r, blk.mu) == (10, 0.5, 1, 10.0)
    assert s.l(0) == 0.01


def test_M0_envelopes():
    s = schd.build("2d-additive", 10, 2, 0.25, 2.0)
    assert s.M0(0.0) == pytest.approx(16.0)
    assert s.M0(0.3) == pytest.approx(16.0 * math.exp(2.4))
    sm = schd.build("2d-multiplicative", 10, 2, 0.25, 2.0)
    assert sm.M0(0.0) == pytest.approx(math.exp(4.0))
    assert sm.m_L() == pytest.approx(math.sqrt(3) * 2 ** 0.25
                                     * math.exp(2 ** 0.25 / 2))


def test_config_round_trip():
    s = schd.build("2d-multiplicative", 10, 2, 0.25, 1.05, c_R=1e-3, m=0.5,
                   block_overrides={0: {"lam": 10, "sigma": 0.5, "r": 1,
                                        "mu": 24.0}},
                   l_overrides={0: 0.0025})
    d = s.to_config()
    s2 = schd.from_config(d)
    assert s2.to_config() == d
    assert s2.eta == s.eta
    assert float(s2.block(0).mu) == 24.0


def test_config_big_a():
    s = schd.build("2d-additive", 10 ** 60, 2, 1e-4, 100.0)
    d = s.to_config()
    s2 = schd.from_config(d)
    assert s2.a == s.a


# --------------------------------------------------------------------- audit

def test_audit_reports_desk_preset_infeasible():
    s = schd.build("2d-additive", 10, 2, 0.25, 1.3,
                   block_overrides={0: {"lam": 10, "sigma": 0.5, "r": 1,
                                        "mu": 10.0}},
                   l_overrides={0: 1e-2})
    rep = schd.audit(s, 0)
    assert not rep.feasible
    assert rep.summary == "desk-scale (identities only)"
    d = rep.rows[0].as_dict()
    assert set(d) == {"predicate", "lhs_log10", "rhs_log10", "relation", "pass"}
    assert str(rep)  # renders a table


def test_scan_finds_feasible_triple():
    out = schd.scan_feasible(m=0.5, L=100.0)
    assert out is not None
    sched, reports = out
    assert all(r.feasible for r in reports)
    assert sched.b * sched.alpha > 16.0
    assert sched.alpha > 96.0 * sched.beta * sched.b
    # the witness respects every audited inequality at q = 0, 1, 2
    assert [r.q for r in reports] == [0, 1, 2]
