import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divctl.errors import DomainError, PreconditionError
from divctl.solver import solve
from divctl.strategy import (
    InjectionKind,
    Region,
    controls_arrays,
    controls_at,
    injection_on_hit,
    region_in_frame,
    region_of,
)

NAMES = ["figure2", "figure3", "figure4", "figure5", "figure6"]


def test_figure2_control_table(fig2):
    w0, w2 = fig2.w0, fig2.constants.w2
    x = 0.3
    d = controls_at(fig2, x)
    assert d.as_tuple() == pytest.approx((1 - x / w0, 1 - x / w2, 0, 0), abs=1e-14)
    plateau = 1 - w0 / w2
    assert plateau == pytest.approx(0.5909, abs=1e-4)
    assert controls_at(fig2, 0.6).as_tuple() == pytest.approx((0, plateau, 0, 0), abs=1e-14)
    assert controls_at(fig2, 1.0).as_tuple() == pytest.approx((0, plateau, 0, 2.0), abs=1e-14)
    assert controls_at(fig2, 3.0).as_tuple() == pytest.approx((0, plateau, 3.0, 2.0), abs=1e-14)


def test_dividends_paid_at_thresholds(fig2):
    assert controls_at(fig2, fig2.u1).c2 == 2.0
    assert controls_at(fig2, fig2.u2).c1 == 3.0
    below = np.nextafter(fig2.u1, 0)
    assert controls_at(fig2, below).c2 == 0.0


def test_figure4_constant_reinsurance_above_u2(fig4):
    d = controls_at(fig4, 2.0)
    assert d.theta1 == pytest.approx(0.0864, abs=1e-4)
    assert d.theta2 == pytest.approx(0.6263, abs=1e-4)
    g1, w1 = fig4.constants.gamma1, fig4.constants.w1
    assert d.theta1 == pytest.approx(1 + (1 - g1) / (w1 * fig4.gamma3), rel=1e-12)


def test_figure5_line1_fully_reinsured(policies):
    pol = policies["figure5"]
    t1, _, _, _ = controls_arrays(pol, np.linspace(0, 5, 200))
    assert np.all(t1 == 1.0)


@pytest.mark.parametrize("name", NAMES)
def test_reinsurance_monotone_and_continuous(policies, name):
    pol = policies[name]
    if name == "figure3":
        # Under the published closure theta overshoots its plateau just below w0.
        pol = solve(pol.params, closure="consistent")
    xs = np.linspace(0, pol.u2 + 1, 3001)
    t1, t2, c1, c2 = controls_arrays(pol, xs)
    for t in (t1, t2):
        assert np.all((0 <= t) & (t <= 1))
        assert np.all(np.diff(t) <= 1e-12)
    assert np.all(np.diff(c1) >= 0) and np.all(np.diff(c2) >= 0)
    assert controls_at(pol, 0.0).as_tuple()[:2] == (1.0, 1.0)


def test_swapped_labels_follow_the_lines(fig2):
    flipped = solve(replace(fig2.params.swapped(), a=0.7))
    for x in (0.3, 0.6, 1.0, 3.0):
        d, e = controls_at(fig2, x), controls_at(flipped, x)
        assert (e.theta1, e.theta2, e.c1, e.c2) == pytest.approx((d.theta2, d.theta1, d.c2, d.c1), abs=1e-12)


def test_region_examples(fig2):
    u1, u2 = fig2.u1, fig2.u2
    assert region_of(fig2, 1.0, 0.2) is Region.A4
    assert region_of(fig2, 0.0, 2.0) is Region.A1
    assert region_of(fig2, 1.6, 0.0) is Region.A2
    assert region_of(fig2, 0.1, 0.1) is Region.A7
    assert region_of(fig2, 0.0, 0.6) is Region.A5
    assert region_of(fig2, 0.6, 0.0) is Region.A6
    assert region_of(fig2, 0.1, 1.0) is Region.A3
    assert (u1, u2) == fig2.deltas[1:]
    with pytest.raises(DomainError):
        region_of(fig2, -0.1, 0.5)


def test_injection_examples(fig2):
    act = injection_on_hit(fig2, 0.0, 2.0, hit_line=1)
    assert act.kind is InjectionKind.TRANSFER_TO_LINE1
    assert act.amount == pytest.approx(2.0 - fig2.u2, abs=1e-14)
    assert round(act.amount, 2) == 0.51
    assert act.post == pytest.approx((2.0 - fig2.u2, fig2.u2))
    act = injection_on_hit(fig2, 1.6, 0.0, hit_line=2)
    assert act.kind is InjectionKind.TRANSFER_TO_LINE2
    assert round(act.amount, 2) == 0.11
    assert act.post == pytest.approx((fig2.u2, 1.6 - fig2.u2))


def test_injection_in_a7(fig2):
    assert injection_on_hit(fig2, 0.0, 0.3, hit_line=1).kind is InjectionKind.RUIN
    act = injection_on_hit(fig2, -0.01, 0.3, hit_line=1, a7_rule="reflect")
    assert act.kind is InjectionKind.TRANSFER_TO_LINE1
    assert act.amount == pytest.approx(0.01)
    assert act.post == pytest.approx((0.0, 0.29))


def test_injection_preconditions(fig2):
    with pytest.raises(PreconditionError):
        injection_on_hit(fig2, 0.5, 0.5, hit_line=1)
    with pytest.raises(PreconditionError):
        injection_on_hit(fig2, 0.0, 0.5, hit_line=3)
    assert injection_on_hit(fig2, 0.0, 0.0, hit_line=1).kind is InjectionKind.RUIN


def _region_conditions(d, x1, x2):
    # Literal region table, evaluated without short-circuiting.
    d0, d1, d2 = d
    s = x1 + x2
    return {
        Region.A1: x1 >= 0 and x2 > d2,
        Region.A2: x1 > 0 and 0 <= x2 <= d2 and s > d2,
        Region.A3: x1 >= 0 and d1 < x2 <= d2 and s <= d2,
        Region.A4: x1 > 0 and 0 <= x2 <= d1 and d1 < s <= d2,
        Region.A5: x1 >= 0 and d0 < x2 <= d1 and s <= d1,
        Region.A6: x1 > 0 and 0 <= x2 <= d0 and d0 < s <= d1,
        Region.A7: x1 >= 0 and x2 >= 0 and s <= d0,
    }


@settings(max_examples=300, deadline=None)
@given(
    st.floats(0, 2),
    st.floats(0, 2),
    st.floats(0, 2),
    st.floats(0, 5),
    st.floats(0, 5),
)
def test_region_partition(a, b, c, x1, x2):
    d = tuple(sorted((a, b, c)))
    hits = [r for r, ok in _region_conditions(d, x1, x2).items() if ok]
    assert len(hits) == 1
    assert region_in_frame(d, x1, x2) is hits[0]


@pytest.mark.parametrize("name", NAMES)
def test_injection_preserves_aggregate(policies, name):
    pol = policies[name]
    rng = np.random.default_rng(3)
    for total in rng.uniform(0, pol.u2 + 2, 300):
        for line in (1, 2):
            state = (-1e-3, total) if line == 1 else (total, -1e-3)
            for rule in ("ruin", "reflect"):
                act = injection_on_hit(pol, *state, hit_line=line, a7_rule=rule)
                if act.kind is InjectionKind.RUIN:
                    continue
                assert sum(act.post) == pytest.approx(sum(state), abs=1e-12)
                assert min(act.post) >= -1e-15
                assert act.post[line - 1] >= 0
                assert math.isfinite(act.amount) and act.amount >= 0
