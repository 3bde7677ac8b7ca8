"""Optimal controls: reinsurance, dividends and capital injection.

Reinsurance and dividend rates depend only on the aggregate surplus. The
injection rule needs the individual reserves: the quadrant is split into
seven regions by the levels ``(delta0, delta1, delta2)`` and, when one line
hits zero, the other line tops it up so that the rescuer keeps exactly the
level of the region it was in.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, PreconditionError
from .solver import Scenario, SolvedPolicy, chi_inverse, chi_prime


@dataclass(frozen=True)
class ControlDecision:
    """Ceded proportions and dividend rates, in the caller's line labels."""

    theta1: float
    theta2: float
    c1: float
    c2: float

    def as_tuple(self) -> tuple:
        return self.theta1, self.theta2, self.c1, self.c2


class Region(str, Enum):
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"
    A5 = "A5"
    A6 = "A6"
    A7 = "A7"


class InjectionKind(str, Enum):
    TRANSFER_TO_LINE1 = "TransferToLine1"
    TRANSFER_TO_LINE2 = "TransferToLine2"
    RUIN = "Ruin"
    NONE = "None"


@dataclass(frozen=True)
class InjectionAction:
    """Outcome of a hit: the transfer (if any) and the post-transfer reserves."""

    kind: InjectionKind
    amount: float
    post: tuple[float, float]


# ---------------------------------------------------------------------------
# reinsurance and dividends


def _normalized_controls(policy: SolvedPolicy, x: np.ndarray):
    c = policy.constants
    p = policy.normalized
    g1 = c.gamma1
    levels = np.array(policy.line_levels)
    # Effective "retention level" r(x): theta_i = 1 - r(x) / w_i.
    r = np.empty_like(x)
    s = policy.scenario
    if s is Scenario.T1:
        r[:] = np.minimum(x, policy.w0)
    else:
        low = x < policy.u1
        r[low] = x[low]
        upper = policy.w0 if s is Scenario.T2 else policy.u2
        mid = (~low) & (x < upper)
        if np.any(mid):
            r[mid] = (1 - g1) * np.asarray(chi_prime(chi_inverse(x[mid], policy), policy))
        high = x >= upper
        if s is Scenario.T2:
            r[high] = c.w1
        else:
            r[high] = -(1 - g1) / policy.gamma3
    # Dividing (not multiplying by 1/w) makes theta exactly 0 when r equals w.
    theta = 1.0 - r[:, None] / levels[None, :]
    theta = np.clip(theta, 0.0, 1.0)
    div2 = np.where(x >= policy.u1, p.cbar2, 0.0)
    div1 = np.where(x >= policy.u2, p.cbar1, 0.0)
    return theta[:, 0], theta[:, 1], div1, div2


def controls_arrays(policy: SolvedPolicy, x):
    """Vectorized controls: four arrays ``(theta1, theta2, c1, c2)`` in caller labels."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(~(x >= 0)):
        raise DomainError("controls need x >= 0")
    t1, t2, d1, d2 = _normalized_controls(policy, x)
    o = policy.orientation
    if o.lines_swapped:
        t1, t2 = t2, t1
    if o.weight_flipped:
        t1, t2, d1, d2 = t2, t1, d2, d1
    return t1, t2, d1, d2


def controls_at(policy: SolvedPolicy, x: float) -> ControlDecision:
    """Optimal ``(theta1, theta2, c1, c2)`` at aggregate surplus ``x``.

    Dividends are paid at the thresholds themselves.
    """
    t1, t2, d1, d2 = controls_arrays(policy, x)
    return ControlDecision(float(t1[0]), float(t2[0]), float(d1[0]), float(d2[0]))


# ---------------------------------------------------------------------------
# regions and capital injection


def _to_dividend_frame(policy: SolvedPolicy, x1: float, x2: float) -> tuple[float, float]:
    if policy.orientation.weight_flipped:
        return x2, x1
    return x1, x2


def region_in_frame(deltas, x1: float, x2: float) -> Region:
    """Region label for reserves already in the dividend-normalized frame."""
    d0, d1, d2 = deltas
    s = x1 + x2
    if x1 >= 0 and x2 > d2:
        return Region.A1
    if x1 > 0 and 0 <= x2 <= d2 and s > d2:
        return Region.A2
    if x1 >= 0 and d1 < x2 <= d2 and s <= d2:
        return Region.A3
    if x1 > 0 and 0 <= x2 <= d1 and d1 < s <= d2:
        return Region.A4
    if x1 >= 0 and d0 < x2 <= d1 and s <= d1:
        return Region.A5
    if x1 > 0 and 0 <= x2 <= d0 and d0 < s <= d1:
        return Region.A6
    if x1 >= 0 and x2 >= 0 and s <= d0:
        return Region.A7
    raise DomainError(f"({x1}, {x2}) is outside the nonnegative quadrant")


def region_of(policy: SolvedPolicy, x1: float, x2: float) -> Region:
    """Injection region of the reserve pair ``(x1, x2)`` given in caller labels.

    >>> from divctl.params import ModelParams
    >>> from divctl.solver import solve
    >>> region_of(solve(ModelParams(4, 2, 1.5, 1, 0.6, 0.5, 0.3, 3, 2)), 1.0, 0.2).value
    'A4'
    """
    if not (x1 >= 0 and x2 >= 0):
        raise DomainError("region_of needs nonnegative reserves")
    y1, y2 = _to_dividend_frame(policy, x1, x2)
    return region_in_frame(policy.deltas, y1, y2)


_RESCUE_LEVEL = {Region.A1: 2, Region.A3: 1, Region.A5: 0, Region.A2: 2, Region.A4: 1, Region.A6: 0}


def injection_on_hit(
    policy: SolvedPolicy, x1: float, x2: float, hit_line: int, a7_rule: str = "ruin"
) -> InjectionAction:
    """Transfer prescribed when line ``hit_line`` reaches zero.

    The region is read off the post-hit state, where the hit line sits at
    zero and the other line holds the whole aggregate ``x1 + x2``. In the
    odd regions a line-1 hit is rescued and in the even regions a line-2 hit
    is; the rescuing line keeps the region's level ``delta_k`` and the hit
    line receives the rest. Slightly negative reserves (discrete-time
    overshoot) are accepted.

    In ``A7`` the default ``a7_rule="ruin"`` ends the problem. With
    ``a7_rule="reflect"`` the other line instead transfers just enough to
    bring the hit line back to zero, so ruin happens only when the aggregate
    is exhausted.
    """
    if hit_line not in (1, 2):
        raise PreconditionError(f"hit_line must be 1 or 2, got {hit_line!r}")
    if a7_rule not in ("ruin", "reflect"):
        raise PreconditionError(f"unknown a7_rule {a7_rule!r}")
    hit_value = x1 if hit_line == 1 else x2
    if not hit_value <= 0:
        raise PreconditionError(f"line {hit_line} is not at or below zero ({hit_value})")
    total = x1 + x2
    if total <= 0:
        return InjectionAction(InjectionKind.RUIN, 0.0, (x1, x2))
    flipped = policy.orientation.weight_flipped
    frame_hit = (3 - hit_line) if flipped else hit_line
    clamped = (0.0, total) if frame_hit == 1 else (total, 0.0)
    region = region_in_frame(policy.deltas, *clamped)
    if region is Region.A7:
        if a7_rule == "ruin":
            return InjectionAction(InjectionKind.RUIN, 0.0, (x1, x2))
        keep = total
    else:
        odd = region in (Region.A1, Region.A3, Region.A5)
        if odd != (frame_hit == 1):
            return InjectionAction(InjectionKind.RUIN, 0.0, (x1, x2))
        keep = policy.deltas[_RESCUE_LEVEL[region]]
    rescued = total - keep
    if rescued < 0:
        return InjectionAction(InjectionKind.RUIN, 0.0, (x1, x2))
    other = x2 if hit_line == 1 else x1
    amount = other - keep
    post = (rescued, keep) if hit_line == 1 else (keep, rescued)
    if amount <= 0:
        return InjectionAction(InjectionKind.NONE, 0.0, post)
    kind = InjectionKind.TRANSFER_TO_LINE1 if hit_line == 1 else InjectionKind.TRANSFER_TO_LINE2
    return InjectionAction(kind, float(amount), post)
