import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divctl.errors import DegenerateRegime, InconsistentGross, RangeError
from divctl.params import (
    GrossBlock,
    ModelParams,
    RegimeTag,
    classify_regime,
    crossover_levels,
    derive_constants,
    drift_vol_ratio,
    normalize_orientation,
    validate,
)

from .conftest import figure_params

FIG2 = figure_params("figure2")


def test_figure2_accepted():
    assert validate(FIG2) is FIG2


@pytest.mark.parametrize(
    "field,value",
    [("rho", 1.0), ("rho", -1.0), ("sigma1", 0.0), ("sigma2", -1.0), ("beta", 0.0), ("cbar1", 0.0), ("a", 1.5), ("mu1", math.nan)],
)
def test_range_errors_name_the_field(field, value):
    with pytest.raises(RangeError) as exc:
        validate(replace(FIG2, **{field: value}))
    assert exc.value.field == field


def test_gross_block_consistency():
    ok = replace(FIG2, gross=GrossBlock(tilde_mu1=8.0, tilde_mu2=4.0, kappa1=0.5, kappa2=0.5))
    assert validate(ok) is ok
    bad = replace(FIG2, gross=GrossBlock(tilde_mu1=8.0, tilde_mu2=4.0, kappa1=0.5, kappa2=0.6))
    with pytest.raises(InconsistentGross) as exc:
        validate(bad)
    assert exc.value.field == "mu2"


def test_figure2_constants():
    c = derive_constants(FIG2)
    assert c.N1 == pytest.approx(10.6, abs=1e-12)
    assert c.N2 == pytest.approx(12.04, abs=1e-12)
    assert c.N3 == pytest.approx(4.8182, abs=1e-4)
    assert c.N4 == pytest.approx(3.1537, abs=1e-4)
    assert c.gamma1 == pytest.approx(0.1196, abs=1e-4)
    assert c.w1 == pytest.approx(0.5763, abs=1e-4)
    assert c.w2 == pytest.approx(1.4086, abs=1e-4)
    assert c.gamma2_plus == pytest.approx(0.1005, abs=1e-4)
    assert c.gamma2_minus == pytest.approx(-3.1561, abs=1e-4)
    assert c.gamma3_plus == pytest.approx(0.1626, abs=1e-4)
    assert c.gamma3_minus == pytest.approx(-1.9499, abs=1e-4)
    assert c.gamma4_minus == pytest.approx(-0.5084, abs=1e-4)
    assert c.M == pytest.approx(c.N1 * FIG2.beta / (c.N2 - c.N1), rel=1e-14)


def test_constants_oracle_from_primitives():
    # Independent arithmetic straight from the primitive inputs.
    p = FIG2
    n1 = (p.mu1 * p.sigma2) ** 2 + (p.mu2 * p.sigma1) ** 2 - 2 * p.rho * p.mu1 * p.mu2 * p.sigma1 * p.sigma2
    n2 = n1 + 2 * p.beta * (1 - p.rho**2) * p.sigma1**2 * p.sigma2**2
    c = derive_constants(p)
    assert c.N1 == pytest.approx(n1, rel=1e-14)
    assert c.N2 == pytest.approx(n2, rel=1e-14)
    assert c.N2 - c.N1 == pytest.approx(1.44, rel=1e-13)
    w1 = (1 - c.gamma1) * (1 - p.rho**2) * p.sigma1**2 * p.sigma2 / (p.mu1 * p.sigma2 - p.rho * p.mu2 * p.sigma1)
    assert c.w1 == pytest.approx(w1, rel=1e-13)


def test_v_limit_is_exact():
    c = derive_constants(FIG2)
    assert c.v_limit == (FIG2.a * FIG2.cbar1 + (1 - FIG2.a) * FIG2.cbar2) / FIG2.beta


def test_regimes():
    assert drift_vol_ratio(FIG2) == pytest.approx(4 / 3)
    assert classify_regime(FIG2).tag is RegimeTag.MAIN
    r5 = classify_regime(figure_params("figure5"))
    assert r5.tag is RegimeTag.FULL_REINSURANCE_LINE1
    p5 = figure_params("figure5")
    assert r5.N1 == pytest.approx(p5.mu2**2)
    assert r5.N2 == pytest.approx(p5.mu2**2 + 2 * p5.beta * p5.sigma2**2)
    assert classify_regime(figure_params("figure6")).tag is RegimeTag.MAIN


def test_regime_ties_go_to_full_reinsurance():
    # ratio exactly equal to rho
    p = replace(FIG2, mu1=1.8)  # (1.8/2)/(1.5/1) = 0.6
    assert drift_vol_ratio(p) == pytest.approx(0.6)
    assert classify_regime(replace(p, rho=drift_vol_ratio(p))).tag is RegimeTag.FULL_REINSURANCE_LINE1
    q = replace(FIG2, rho=0.5, mu1=6.0)  # ratio 2 = 1/rho
    assert classify_regime(q).tag is RegimeTag.FULL_REINSURANCE_LINE2


def test_degenerate_crossover_level():
    # mu1*sigma2 = rho*mu2*sigma1 makes w1 undefined.
    p = ModelParams(mu1=1.2, mu2=2.0, sigma1=1.0, sigma2=1.0, rho=0.6, beta=0.5, a=0.3, cbar1=3, cbar2=2)
    with pytest.raises(DegenerateRegime):
        crossover_levels(p, 0.1)


def test_orientation_identity_and_flip():
    q, o = normalize_orientation(FIG2)
    assert (o.lines_swapped, o.weight_flipped) == (False, False)
    assert q == FIG2
    flipped = replace(FIG2.swapped(), a=0.7)
    q, o = normalize_orientation(flipped)
    assert o.weight_flipped
    for name in ("mu1", "mu2", "sigma1", "sigma2", "cbar1", "cbar2", "rho", "beta"):
        assert getattr(q, name) == getattr(FIG2, name)
    assert q.a == pytest.approx(0.3, abs=1e-15)
    q, o = normalize_orientation(replace(FIG2, a=0.5))
    assert not o.weight_flipped


params_strategy = st.builds(
    ModelParams,
    mu1=st.floats(0.1, 10),
    mu2=st.floats(0.1, 10),
    sigma1=st.floats(0.1, 5),
    sigma2=st.floats(0.1, 5),
    rho=st.floats(-0.95, 0.95),
    beta=st.floats(0.05, 2),
    a=st.floats(0.01, 0.99),
    cbar1=st.floats(0.1, 10),
    cbar2=st.floats(0.1, 10),
)


@settings(max_examples=300, deadline=None)
@given(params_strategy)
def test_sign_pattern_and_normalization(p):
    q, o = normalize_orientation(p)
    assert q.a <= 0.5
    regime = classify_regime(q)
    c = derive_constants(q, regime)
    assert c.N2 > c.N1 > 0
    assert 0 < c.gamma1 < 1
    assert c.gamma2_minus < 0 < c.gamma2_plus
    assert c.gamma3_minus < 0 < c.gamma3_plus
    assert c.gamma3_minus < c.gamma4_minus < 0
    assert c.gamma3_theorem3 < 0
    if regime.tag is RegimeTag.MAIN:
        assert 0 < c.w1 <= c.w2 * (1 + 1e-12)
        gap = 2 * q.beta * (1 - q.rho**2) * q.sigma1**2 * q.sigma2**2
        assert c.N2 - c.N1 == pytest.approx(gap, rel=1e-9)
        ratio = q.sigma1 * (q.mu2 * q.sigma1 - q.rho * q.mu1 * q.sigma2) / (q.sigma2 * (q.mu1 * q.sigma2 - q.rho * q.mu2 * q.sigma1))
        if not o.lines_swapped:
            assert c.w1 / c.w2 == pytest.approx(ratio, rel=1e-9)
            assert 0 < ratio <= 1 + 1e-12
