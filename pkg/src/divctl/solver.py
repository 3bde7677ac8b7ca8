"""Closed-form solution of the two-line dividend and reinsurance problem.

The value depends on the reserves only through the aggregate surplus ``x``.
Three orderings of the switching points can occur:

* ``T1_W0First``: ``w0 <= u1 <= u2``. Below ``w0`` both lines reinsure, then
  the reinsurance pair plateaus and dividends switch on at ``u1`` and ``u2``.
* ``T2_W0Middle``: ``u1 < w0 <= u2``. The larger-weight line starts paying
  dividends while reinsurance is still decreasing.
* ``T3_NoW0``: ``w0 = inf``. Dividend caps are too small for reinsurance to
  ever drop to zero.

All formulas are evaluated on normalized inputs (``a <= 1/2`` and the line
that stops reinsuring first labelled 1) and mapped back through
:class:`~divctl.params.Orientation` at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import BracketError, DomainError, InternalOrderingError, Unsupported
from .params import (
    CorrelationRegime,
    DerivedConstants,
    ModelParams,
    Orientation,
    RegimeTag,
    classify_regime,
    derive_constants,
    normalize_orientation,
    validate,
)

BISECT_XTOL = 1e-13
INSET_RTOL = 1e-12
SNAP_ATOL = 1e-12
LOG_REST_MIN = -1e6
ROOT_TOL = 1e-12


class Scenario(str, Enum):
    T1 = "T1_W0First"
    T2 = "T2_W0Middle"
    T3 = "T3_NoW0"


@dataclass(frozen=True)
class SolvedPolicy:
    """Every switching point and coefficient of a solved problem.

    Fields that do not apply to the scenario are ``nan``. ``params`` holds
    the caller's inputs and ``normalized`` the relabelled inputs that all
    formulas are evaluated on.
    """

    scenario: Scenario
    w0: float
    u1: float
    u2: float
    alpha0: float
    alphaLB: float
    alphaUB: float
    alpha2_plus: float
    alpha2_minus: float
    alpha3_plus: float
    alpha3_minus: float
    alpha3: float
    lam: float
    k1: float
    k2: float
    K1: float
    K2: float
    gamma3: float
    anchor3: float
    deltas: tuple[float, float, float]
    constants: DerivedConstants
    orientation: Orientation
    regime: CorrelationRegime
    params: ModelParams
    normalized: ModelParams
    closure: str = "published"
    log_alpha3_plus: float = math.nan

    @property
    def switching_points(self) -> tuple[float, ...]:
        """Finite switching points in increasing order."""
        pts = {self.u1, self.u2}
        if math.isfinite(self.w0):
            pts.add(self.w0)
        return tuple(sorted(pts))

    @property
    def line_levels(self) -> tuple[float, float]:
        """Crossover levels ``(w, w)`` of normalized lines 1 and 2.

        ``1 - x / w`` is the unconstrained reinsurance below the first
        switching point; an infinite level pins that line at full reinsurance.
        """
        c = self.constants
        tag = self.regime.tag
        if tag is RegimeTag.FULL_REINSURANCE_LINE1:
            return math.inf, c.w1
        if tag is RegimeTag.FULL_REINSURANCE_LINE2:
            return c.w1, math.inf
        return c.w1, c.w2

    @property
    def tail_exponent(self) -> float:
        """Exponent of the final branch ``v_limit + (a/gamma) exp(gamma (x - u2))``."""
        if self.scenario is Scenario.T3:
            return self.gamma3
        return self.constants.gamma4_minus


# ---------------------------------------------------------------------------
# psi and its bracket


def _psi_parts(z, c: DerivedConstants, a: float):
    z = np.asarray(z, dtype=float)
    g3p, g3m, g4m = c.gamma3_plus, c.gamma3_minus, c.gamma4_minus
    rest = 1.0 - a - g3m * z
    arg = g3m * (g4m - g3m) * z / (rest * (g3p - g4m))
    if np.any(~(arg > 0)) or np.any(~(z < 0)):
        raise DomainError("psi/zeta evaluated where the log argument is not positive")
    zeta = np.log(arg) / (g3p - g3m)
    return z, rest, zeta


def _psi_from_rest(z, rest, zt, c: DerivedConstants, a: float):
    g3p, g3m = c.gamma3_plus, c.gamma3_minus
    return rest * np.exp(g3p * zt) + g3m * z * np.exp(g3m * zt) - a


def _psi_prime_from_rest(z, rest, zt, c: DerivedConstants, a: float):
    g3p, g3m = c.gamma3_plus, c.gamma3_minus
    ep, em = np.exp(g3p * zt), np.exp(g3m * zt)
    return g3m * (em - ep) + (1 - a) / (g3p - g3m) * (g3p / z * ep + g3m * g3m / rest * em)


def zeta(z, c: DerivedConstants, a: float):
    """Offset between the two dividend thresholds implied by ``alpha3_minus = z``."""
    _, _, out = _psi_parts(z, c, a)
    return out if out.ndim else float(out)


def psi(z, c: DerivedConstants, a: float):
    """Smooth-fit residual whose unique root on the bracket is ``alpha3_minus``.

    ``psi(z) = (1-a-g3m z) exp(g3p zeta) + g3m z exp(g3m zeta) - a``.
    """
    z, rest, zt = _psi_parts(z, c, a)
    out = _psi_from_rest(z, rest, zt, c, a)
    return out if out.ndim else float(out)


def psi_prime(z, c: DerivedConstants, a: float):
    """Analytic derivative of :func:`psi`."""
    z, rest, zt = _psi_parts(z, c, a)
    out = _psi_prime_from_rest(z, rest, zt, c, a)
    return out if out.ndim else float(out)


def _log_rest_terms(t: float, c: DerivedConstants, a: float):
    """``(z, rest, zeta)`` with ``rest = 1 - a - g3m z = exp(t)`` carried exactly."""
    g3p, g3m, g4m = c.gamma3_plus, c.gamma3_minus, c.gamma4_minus
    rest = math.exp(t)
    z = (1 - a - rest) / g3m
    zt = (math.log(g3m * (g4m - g3m) * z / (g3p - g4m)) - t) / (g3p - g3m)
    return z, rest, zt


def psi_of_log_rest(t: float, c: DerivedConstants, a: float) -> float:
    """``psi`` written in the coordinate ``t = ln(1 - a - g3m z)``.

    Near the left end of psi's domain ``1 - a - g3m z`` cancels
    catastrophically in ``z``; in ``t`` the same function stays well
    conditioned, so the root is located and checked here.
    """
    z, _, zt = _log_rest_terms(t, c, a)
    g3p, g3m = c.gamma3_plus, c.gamma3_minus
    return math.exp(t + g3p * zt) + g3m * z * math.exp(g3m * zt) - a


def _dpsi_dt(t: float, c: DerivedConstants, a: float) -> float:
    z, rest, zt = _log_rest_terms(t, c, a)
    g3p, g3m = c.gamma3_plus, c.gamma3_minus
    dz = -rest / g3m
    dzt = (dz / z - 1) / (g3p - g3m)
    return math.exp(t + g3p * zt) * (1 + g3p * dzt) + g3m * math.exp(g3m * zt) * (dz + z * g3m * dzt)


def psi_residual(policy: "SolvedPolicy") -> float:
    """``psi`` at the policy's root, evaluated from ``log_alpha3_plus`` without cancellation."""
    c, a = policy.constants, policy.normalized.a
    return psi_of_log_rest(policy.log_alpha3_plus + math.log(c.gamma3_plus), c, a)


def alpha_bounds(c: DerivedConstants, params: ModelParams) -> tuple[float, float, float]:
    """Return ``(alpha0, alphaLB, alphaUB)`` on normalized inputs."""
    a, beta, c2 = params.a, params.beta, params.cbar2
    g3p, g3m, g4m = c.gamma3_plus, c.gamma3_minus, c.gamma4_minus
    alpha0 = (1 - a) * g3p / (g3p - g3m) * (c.N3 / (2 * beta) - 1 / g3p - c2 / beta)
    alpha_ub = (1 - a) * (g3p - g4m) / (g3m * (g3p - g3m))
    alpha_lb = (1 - a) / g3m if c2 >= c.cap_threshold else alpha0
    return alpha0, alpha_lb, alpha_ub


def _inset(lo: float, hi: float) -> tuple[float, float]:
    return lo + INSET_RTOL * (1 + abs(lo)), hi - INSET_RTOL * (1 + abs(hi))


def solve_alpha3(bracket: tuple[float, float], c: DerivedConstants, a: float) -> tuple[float, float]:
    """Root of the increasing function ``psi`` inside ``bracket``.

    Returns ``(z, t)`` with ``t = ln(1 - a - g3m z)`` held separately, since
    ``1 - a - g3m z`` can be far below the resolution of ``z`` and even below
    the smallest float. The search runs in
    ``t = ln(rest)``, where ``psi`` is still increasing: bisection followed
    by Newton polish. If ``psi`` vanishes at the upper endpoint (which
    happens for ``a = 1/2``) that endpoint is returned.
    """
    lo0, hi0 = bracket
    if not lo0 < hi0:
        raise BracketError(f"empty bracket ({lo0}, {hi0})")
    g3m = c.gamma3_minus
    try:
        if abs(psi(hi0, c, a)) <= ROOT_TOL * (1 + abs(a)):
            return float(hi0), math.log(1 - a - g3m * hi0)
    except DomainError:
        pass
    lo, hi = _inset(lo0, hi0)
    # rest increases with z, so the bracket maps to [ln rest(lo), ln rest(hi)].
    t_lo = math.log(1 - a - g3m * lo)
    t_hi = math.log(1 - a - g3m * hi)
    f_lo = psi(lo, c, a)
    if f_lo >= 0 and 1 - a - g3m * lo0 <= (1 + abs(lo0)) * 1e-9:
        # The open lower end is where rest -> 0 and psi -> -a; walk down in t.
        while f_lo >= 0 and t_lo > LOG_REST_MIN:
            t_lo = max(2.0 * t_lo - 25.0, LOG_REST_MIN)
            f_lo = psi_of_log_rest(t_lo, c, a)
        if f_lo >= 0:
            raise Unsupported(f"no psi root with ln(1 - a - g3m z) above {LOG_REST_MIN}")
    f_hi = psi(hi, c, a)
    if not (f_lo < 0 < f_hi):
        raise BracketError(f"psi does not change sign on ({lo0}, {hi0}): {f_lo}, {f_hi}")
    while t_hi - t_lo > BISECT_XTOL:
        mid = 0.5 * (t_lo + t_hi)
        if not t_lo < mid < t_hi:
            break
        f_mid = psi_of_log_rest(mid, c, a)
        if f_mid == 0.0:
            t_lo = t_hi = mid
            break
        if f_mid < 0:
            t_lo = mid
        else:
            t_hi = mid
    t = 0.5 * (t_lo + t_hi)
    for _ in range(3):
        z, rest, zt = _log_rest_terms(t, c, a)
        f = psi_of_log_rest(t, c, a)
        if f == 0.0:
            break
        slope = _dpsi_dt(t, c, a)
        cand = t - f / slope
        if not t_lo - 1e-12 <= cand <= t_hi + 1e-12:
            break
        if abs(psi_of_log_rest(cand, c, a)) >= abs(f):
            break
        t = cand
    z, _, _ = _log_rest_terms(t, c, a)
    z = min(max(z, lo), hi)
    return float(z), float(t)


def solve_alpha3_minus(bracket: tuple[float, float], c: DerivedConstants, a: float) -> float:
    """Find the root ``alpha3_minus`` of ``psi`` strictly inside ``bracket``."""
    return solve_alpha3(bracket, c, a)[0]


def classify_scenario(c: DerivedConstants, params: ModelParams) -> Scenario:
    """Decide which of the three switching-point orderings applies.

    When ``cbar2`` alone reaches the cap threshold, ``psi(alpha0)`` lies
    below the left end of psi's domain where psi tends to ``-a``, so the
    first ordering applies.
    """
    if not 0.0 < params.a < 1.0:
        raise Unsupported(f"a={params.a} is outside (0, 1)")
    if params.cbar1 + params.cbar2 < c.cap_threshold:
        return Scenario.T3
    if params.cbar2 >= c.cap_threshold:
        return Scenario.T1
    alpha0, _, _ = alpha_bounds(c, params)
    return Scenario.T1 if psi(alpha0, c, params.a) <= 0 else Scenario.T2


# ---------------------------------------------------------------------------
# scenario solves


def _blank(**kw) -> dict:
    base = dict(
        alpha2_plus=math.nan,
        alpha2_minus=math.nan,
        alpha3_plus=math.nan,
        alpha3_minus=math.nan,
        alpha3=math.nan,
        lam=math.nan,
        k1=math.nan,
        k2=math.nan,
        K1=math.nan,
        K2=math.nan,
        gamma3=math.nan,
        anchor3=math.nan,
    )
    base.update(kw)
    return base


def _upper_threshold(c: DerivedConstants, u1: float, log_rest: float, a3m: float) -> float:
    # log_rest = ln(g3p * alpha3_plus)
    g3p, g3m, g4m = c.gamma3_plus, c.gamma3_minus, c.gamma4_minus
    gap = (math.log(a3m * g3m * (g4m - g3m) / (g3p - g4m)) - log_rest) / (g3p - g3m)
    # At a = 1/2 the ratio is 1 and round-off may leave a tiny negative gap.
    if -SNAP_ATOL < gap < 0:
        gap = 0.0
    return u1 + gap


def solve_T1(params: ModelParams, c: DerivedConstants) -> dict:
    """Switching points and coefficients when ``w0 <= u1 <= u2``."""
    a, beta, c2 = params.a, params.beta, params.cbar2
    g1 = c.gamma1
    g2p, g2m = c.gamma2_plus, c.gamma2_minus
    g3p, g3m = c.gamma3_plus, c.gamma3_minus
    alpha0, lb, ub = alpha_bounds(c, params)
    w0 = c.w1
    scale = w0 ** (g1 - 1) / (g2p - g2m)
    a2p = scale * (g1 - g2m * w0)
    a2m = scale * (g2p * w0 - g1)
    a3m, t = solve_alpha3((lb, ub), c, a)
    log_a3p = t - math.log(g3p)
    alpha3 = 1 / g3p + c2 / beta + (1 - g3m / g3p) * a3m / (1 - a)
    u1 = w0 + math.log(a2m * (g2m * alpha3 - 1) / (a2p * (1 - g2p * alpha3))) / (g2p - g2m)
    u2 = _upper_threshold(c, u1, t, a3m)
    s = u1 - w0
    lam = -(1 - a) / (g2p * g2m) / (math.exp(g2p * s) + math.exp(g2m * s))
    if not (w0 <= u1 * (1 + 1e-14) and u1 <= u2 * (1 + 1e-14)):
        raise InternalOrderingError(f"T1 ordering violated: w0={w0}, u1={u1}, u2={u2}")
    return dict(
        w0=w0,
        u1=u1,
        u2=u2,
        alpha0=alpha0,
        alphaLB=lb,
        alphaUB=ub,
        deltas=(w0, u1, u2),
        **_blank(
            alpha2_plus=a2p,
            alpha2_minus=a2m,
            alpha3_plus=math.exp(log_a3p),
            alpha3_minus=a3m,
            alpha3=alpha3,
            lam=lam,
            anchor3=u1,
        ),
        log_alpha3_plus=log_a3p,
    )


def solve_T2(params: ModelParams, c: DerivedConstants, closure: str = "published") -> dict:
    """Switching points and coefficients when ``u1 < w0 <= u2``.

    ``closure="published"`` uses the closed-form ``w0 = u1 + ln[...]``, in
    which the exponential branch above ``w0`` is positioned by requiring its
    slope to equal ``1 - a`` at ``u1``. That branch then does not meet the
    integral branch in value at ``w0``. ``closure="consistent"`` keeps every
    coefficient but places ``w0`` at ``chi(chi^{-1}(w0))`` and translates the
    exponential branch and ``u2`` by the same amount, which restores
    continuity of ``g``, ``g'`` and ``g''``.
    """
    if closure not in ("published", "consistent"):
        raise ValueError(f"unknown closure {closure!r}")
    a, beta, c2 = params.a, params.beta, params.cbar2
    N1, N2, N3 = c.N1, c.N2, c.N3
    g1, g3p, g3m = c.gamma1, c.gamma3_plus, c.gamma3_minus
    alpha0, lb, ub = alpha_bounds(c, params)
    if not psi(alpha0, c, a) > 0:
        raise BracketError("second ordering requires psi(alpha0) > 0")
    a3m, t = solve_alpha3(((1 - a) / g3m, alpha0), c, a)
    log_a3p = t - math.log(g3p)
    r = c.w1 / (g1 - 1)
    d = (math.log(g3m * a3m * (r * g3m - 1) / (1 - r * g3p)) - t) / (g3p - g3m)
    slope_w0 = math.exp(t + g3p * d) + g3m * a3m * math.exp(g3m * d)
    gap = N2 - N1
    B = c2 * gap / (N2 * beta)
    k1 = N1 * gap / (N2 * beta) * (N3 / (2 * N1) - c2 / N2) * slope_w0 ** (N2 / N1)
    k2 = B * (N1 / N2 + math.log(1 - a))
    u1 = k1 * (1 - a) ** (-N2 / N1) - B * math.log(1 - a) + k2
    w0 = u1 + d
    u2 = _upper_threshold(c, u1, t, a3m)
    anchor3 = u1
    if closure == "consistent":
        z_w0 = N1 / N2 * math.log(N1 * gap / (k1 * N2 * beta) * (N3 / (2 * N1) - c2 / N2))
        shift = k1 * math.exp(N2 / N1 * z_w0) + B * z_w0 + k2 - w0
        w0, u2, anchor3 = w0 + shift, u2 + shift, u1 + shift
    if not (u1 < w0 <= u2 * (1 + 1e-14)):
        raise InternalOrderingError(f"T2 ordering violated: u1={u1}, w0={w0}, u2={u2}")
    return dict(
        w0=w0,
        u1=u1,
        u2=u2,
        alpha0=alpha0,
        alphaLB=lb,
        alphaUB=ub,
        deltas=(u1, w0, u2),
        **_blank(
            alpha3_plus=math.exp(log_a3p),
            alpha3_minus=a3m,
            k1=k1,
            k2=k2,
            K1=(1 - a) * u1 ** (1 - g1) / g1,
            K2=(1 - a) * u1 / g1,
            anchor3=anchor3,
        ),
        log_alpha3_plus=log_a3p,
    )


def solve_T3(params: ModelParams, c: DerivedConstants) -> dict:
    """Switching points and coefficients when reinsurance never reaches zero."""
    a, beta, c1, c2 = params.a, params.beta, params.cbar1, params.cbar2
    N1, N2 = c.N1, c.N2
    g1 = c.gamma1
    if not 0.0 < a <= 0.5:
        raise Unsupported(f"a={a} must lie in (0, 1/2] after normalization")
    p = N2 / N1
    with np.errstate(under="raise", over="raise"):
        try:
            q = float(np.power(a / (1 - a), p))
            pa = float(np.power(a, -p))
        except FloatingPointError as exc:
            raise Unsupported(f"a={a} too small: (a/(1-a))^(N2/N1) is not representable") from exc
    if q == 0.0 or not math.isfinite(pa):
        raise Unsupported(f"a={a} too small: (a/(1-a))^(N2/N1) is not representable")
    gap = N2 - N1
    B1 = c1 * gap / (N2 * beta)
    B = c2 * gap / (N2 * beta)
    u1 = (1 - g1) * (B1 * q + B)
    u2 = u1 + c1 * N1 * gap / (N2 * N2 * beta) * (1 - q) - B * math.log(a / (1 - a))
    pb = (1 - a) ** (-p)
    den = pa - pb
    if den == 0.0:
        # a = 1/2: u1 = u2 and chi is pinned by its value and slope at -ln(1-a).
        k1 =(u1 / (1 - g1) - B) * N1 / N2 / pb
        k2 = u1 - k1 * pb + B * math.log(1 - a)
    else:
        k1 = (u2 - u1 + B * math.log(a / (1 - a))) / den
        k2 = (pa * (u1 + B * math.log(1 - a)) - pb * (u2 + B * math.log(a))) / den
    if not u1 <= u2 * (1 + 1e-14):
        raise InternalOrderingError(f"T3 ordering violated: u1={u1}, u2={u2}")
    return dict(
        w0=math.inf,
        u1=u1,
        u2=u2,
        alpha0=alpha_bounds(c, params)[0],
        alphaLB=math.nan,
        alphaUB=math.nan,
        deltas=(u1, u1, u2),
        **_blank(
            k1=k1,
            k2=k2,
            K1=(1 - a) * u1 ** (1 - g1) / g1,
            K2=(1 - a) * u1 / g1,
            gamma3=c.gamma3_theorem3,
        ),
    )


_SOLVERS = {Scenario.T1: solve_T1, Scenario.T2: solve_T2, Scenario.T3: solve_T3}


def _check_signs(policy: SolvedPolicy) -> None:
    s = policy.scenario
    bad = []
    if s is Scenario.T1:
        if not policy.lam > 0:
            bad.append("lam > 0")
        if not policy.alpha2_plus > 0 > policy.alpha2_minus:
            bad.append("alpha2_plus > 0 > alpha2_minus")
    # alpha3_plus may underflow to 0; its logarithm being finite is what makes it positive.
    if s in (Scenario.T1, Scenario.T2) and not (math.isfinite(policy.log_alpha3_plus) and 0 > policy.alpha3_minus):
        bad.append("alpha3_plus > 0 > alpha3_minus")
    if s in (Scenario.T2, Scenario.T3):
        if not policy.K1 > 0:
            bad.append("K1 > 0")
        if not policy.k1 >= 0:
            bad.append("k1 >= 0")
    if s is Scenario.T3 and not policy.gamma3 < 0:
        bad.append("gamma3 < 0")
    if bad:
        raise InternalOrderingError("coefficient sign check failed: " + ", ".join(bad))


def solve(params: ModelParams, closure: str = "published") -> SolvedPolicy:
    """Validate, normalize and solve; return the complete policy.

    ``closure`` selects how the second ordering positions ``w0`` (see
    :func:`solve_T2`); it has no effect on the other orderings.

    >>> p = solve(ModelParams(4, 2, 1.5, 1, 0.6, 0.5, 0.3, 3, 2))
    >>> p.scenario.value, round(p.w0, 2), round(p.u1, 2), round(p.u2, 2)
    ('T1_W0First', 0.58, 0.62, 1.49)
    """
    validate(params)
    if params.a in (0.0, 1.0):
        raise Unsupported(f"a={params.a}: the solver needs 0 < a < 1")
    normalized, orientation = normalize_orientation(params)
    regime = classify_regime(normalized)
    constants = derive_constants(normalized, regime)
    scenario = classify_scenario(constants, normalized)
    if scenario is Scenario.T2:
        fields = solve_T2(normalized, constants, closure)
    else:
        fields = _SOLVERS[scenario](normalized, constants)
    policy = SolvedPolicy(
        scenario=scenario,
        constants=constants,
        orientation=orientation,
        regime=regime,
        params=params,
        normalized=normalized,
        closure=closure,
        **fields,
    )
    _check_signs(policy)
    return policy


def perturbed(policy: SolvedPolicy, **changes) -> SolvedPolicy:
    """Copy of ``policy`` with some fields overwritten (for failure-injection tests)."""
    return replace(policy, **changes)


# ---------------------------------------------------------------------------
# change of variables for the integral branch


def _chi_terms(policy: SolvedPolicy) -> tuple[float, float, float, float]:
    c, p = policy.constants, policy.normalized
    if policy.scenario is Scenario.T1:
        raise DomainError("chi is only defined for the second and third orderings")
    B = p.cbar2 * (c.N2 - c.N1) / (c.N2 * p.beta)
    return policy.k1, c.N2 / c.N1, B, policy.k2


def chi(z, policy: SolvedPolicy):
    """``chi(z) = k1 exp((N2/N1) z) + B z + k2``: surplus where ``g' = exp(-z)``."""
    k1, r, B, k2 = _chi_terms(policy)
    z = np.asarray(z, dtype=float)
    out = k1 * np.exp(r * z) + B * z + k2
    return out if out.ndim else float(out)


def chi_prime(z, policy: SolvedPolicy):
    k1, r, B, _ = _chi_terms(policy)
    z = np.asarray(z, dtype=float)
    out = k1 * r * np.exp(r * z) + B
    return out if out.ndim else float(out)


def chi_inverse_bounds(policy: SolvedPolicy) -> tuple[float, float]:
    """Interval of ``z`` on which ``chi`` is inverted."""
    a = policy.normalized.a
    lo = -math.log(1 - a)
    if policy.scenario is Scenario.T3:
        return lo, -math.log(a)
    return lo, chi_inverse_at_w0(policy)


def chi_inverse_at_w0(policy: SolvedPolicy) -> float:
    """Closed-form ``chi^{-1}(w0)`` for the second ordering."""
    c, p = policy.constants, policy.normalized
    N1, N2 = c.N1, c.N2
    inner = N1 * (N2 - N1) / (policy.k1 * N2 * p.beta) * (c.N3 / (2 * N1) - p.cbar2 / N2)
    return N1 / N2 * math.log(inner)


def chi_inverse(y, policy: SolvedPolicy, tol: float = 1e-14, max_iter: int = 100):
    """Invert ``chi`` on the integral branch by safeguarded Newton iteration.

    ``y`` must lie in ``[u1, w0]`` (second ordering) or ``[u1, u2]`` (third).
    """
    y_arr = np.asarray(y, dtype=float)
    upper = policy.u2 if policy.scenario is Scenario.T3 else policy.w0
    span = 1e-12 * (1 + abs(upper))
    if np.any(~(y_arr >= policy.u1 - span)) or np.any(~(y_arr <= upper + span)):
        raise DomainError(f"chi_inverse needs y in [{policy.u1}, {upper}]")
    z_lo0, z_hi0 = chi_inverse_bounds(policy)
    # With the published closure w0 sits slightly beyond chi(chi^{-1}(w0)).
    while chi(z_hi0, policy) < upper:
        z_hi0 += 0.5 * (1 + abs(z_hi0))
    lo = np.full(y_arr.shape, z_lo0)
    hi = np.full(y_arr.shape, z_hi0)
    # chi is convex and increasing, so Newton from the right end never overshoots.
    z = hi.copy()
    for _ in range(max_iter):
        f = chi(z, policy) - y_arr
        lo = np.where(f < 0, z, lo)
        hi = np.where(f > 0, z, hi)
        step = f / chi_prime(z, policy)
        z_new = z - step
        outside = (z_new <= lo) | (z_new >= hi)
        z_new = np.where(outside, 0.5 * (lo + hi), z_new)
        done = np.abs(z_new - z) <= tol * (1 + np.abs(z))
        z = z_new
        if np.all(done):
            break
    z = np.clip(z, z_lo0, z_hi0)
    return z if z.ndim else float(z)
