"""Closed-form value function ``g`` of the aggregate surplus and its derivatives.

Branches are half-open ``[lower, upper)``; a point exactly on a switching
level is evaluated with the branch above it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .solver import Scenario, SolvedPolicy, chi_inverse, chi_prime


@dataclass(frozen=True)
class ValueTriple:
    """``g``, ``g'`` and ``g''`` at one surplus level (or arrays of them)."""

    g: float
    g_prime: float
    g_double_prime: float


def branch_names(policy: SolvedPolicy) -> tuple[str, ...]:
    """Names of the branches from the origin upward."""
    if policy.scenario is Scenario.T1:
        return ("power", "plateau", "dividend2", "tail")
    if policy.scenario is Scenario.T2:
        return ("power", "integral", "dividend2", "tail")
    return ("power", "integral", "tail")


def branch_edges(policy: SolvedPolicy) -> tuple[float, ...]:
    """Lower edges of the branches after the first one."""
    if policy.scenario is Scenario.T1:
        return (policy.w0, policy.u1, policy.u2)
    if policy.scenario is Scenario.T2:
        return (policy.u1, policy.w0, policy.u2)
    return (policy.u1, policy.u2)


def integral_branch(policy: SolvedPolicy, x):
    """``int_{u1}^{x} exp(-chi^{-1}(y)) dy`` via the change of variables ``y = chi(z)``.

    One inversion of ``chi`` per point; valid on ``[u1, w0]`` (second
    ordering) or ``[u1, u2]`` (third ordering).
    """
    c, p = policy.constants, policy.normalized
    a, N1, N2 = p.a, c.N1, c.N2
    x = np.asarray(x, dtype=float)
    z = np.asarray(chi_inverse(x, policy))
    B = p.cbar2 * (N2 - N1) / (N2 * p.beta)
    k1, k2, u1 = policy.k1, policy.k2, policy.u1
    A = k1 * N1 / (N2 - N1)
    upper = (A * np.exp(N2 / N1 * z) - B * (1 + z) + x - k2) * np.exp(-z)
    lower = (1 - a) * (A * (1 - a) ** (-N2 / N1) - B * (1 - math.log(1 - a)) + u1 - k2)
    out = upper - lower
    return out if out.ndim else float(out)


def _power(policy: SolvedPolicy, x):
    g1 = policy.constants.gamma1
    if policy.scenario is Scenario.T1:
        w0 = policy.w0
        scale = 2 * policy.lam * (1 - g1) / w0
        base = w0
    else:
        scale = policy.K2
        base = policy.u1
    with np.errstate(divide="ignore", invalid="ignore"):
        g = scale * (x / base) ** g1
        gp = np.where(x > 0, g1 * g / np.where(x > 0, x, 1.0), np.inf)
        gpp = np.where(x > 0, g1 * (g1 - 1) * g / np.where(x > 0, x * x, 1.0), -np.inf)
    return g, gp, gpp


def _plateau(policy: SolvedPolicy, x):
    c = policy.constants
    gp_, gm_ = c.gamma2_plus, c.gamma2_minus
    s = x - policy.w0
    ep, em = np.exp(gp_ * s), np.exp(gm_ * s)
    lam = policy.lam
    g = -lam * (gm_ * ep + gp_ * em)
    gp = -lam * gp_ * gm_ * (ep + em)
    gpp = -lam * gp_ * gm_ * (gp_ * ep + gm_ * em)
    return g, gp, gpp


def _integral(policy: SolvedPolicy, x):
    z = np.asarray(chi_inverse(x, policy))
    g = np.asarray(integral_branch(policy, x)) + policy.K2
    gp = np.exp(-z)
    gpp = -gp / np.asarray(chi_prime(z, policy))
    return g, gp, gpp


def _dividend2(policy: SolvedPolicy, x):
    c, p = policy.constants, policy.normalized
    gp_, gm_ = c.gamma3_plus, c.gamma3_minus
    t = x - policy.anchor3
    ap = np.exp(policy.log_alpha3_plus + gp_ * t)
    am = policy.alpha3_minus * np.exp(gm_ * t)
    g = ap + am + (1 - p.a) * p.cbar2 / p.beta
    return g, gp_ * ap + gm_ * am, gp_ * gp_ * ap + gm_ * gm_ * am


def _tail(policy: SolvedPolicy, x):
    gam = policy.tail_exponent
    a = policy.normalized.a
    e = np.exp(gam * (x - policy.u2))
    return a / gam * e + policy.constants.v_limit, a * e, a * gam * e


_BRANCHES = {
    "power": _power,
    "plateau": _plateau,
    "integral": _integral,
    "dividend2": _dividend2,
    "tail": _tail,
}


def eval_branch(policy: SolvedPolicy, name: str, x) -> ValueTriple:
    """Evaluate one named branch formula at ``x``, ignoring its domain.

    The integral branch still requires ``x`` inside its own interval.
    """
    x = np.asarray(x, dtype=float)
    g, gp, gpp = _BRANCHES[name](policy, x)
    if x.ndim == 0:
        return ValueTriple(float(g), float(gp), float(gpp))
    return ValueTriple(np.asarray(g), np.asarray(gp), np.asarray(gpp))


def branch_index(policy: SolvedPolicy, x):
    """Index into :func:`branch_names` of the branch containing ``x``."""
    edges = np.asarray([e for e in branch_edges(policy)])
    return np.searchsorted(edges, np.asarray(x, dtype=float), side="right")


def evaluate(policy: SolvedPolicy, x) -> ValueTriple:
    """Value ``g`` and its first two derivatives at aggregate surplus ``x``.

    Accepts a scalar or an array. At ``x = 0`` the derivatives are reported
    as ``+inf`` and ``-inf``.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr >= 0)):
        raise DomainError("value function needs x >= 0")
    flat = np.atleast_1d(x_arr).ravel()
    idx = np.atleast_1d(branch_index(policy, flat))
    g = np.empty_like(flat)
    gp = np.empty_like(flat)
    gpp = np.empty_like(flat)
    for k, name in enumerate(branch_names(policy)):
        mask = idx == k
        if not np.any(mask):
            continue
        bg, bgp, bgpp = _BRANCHES[name](policy, flat[mask])
        g[mask], gp[mask], gpp[mask] = bg, bgp, bgpp
    if x_arr.ndim == 0:
        return ValueTriple(float(g[0]), float(gp[0]), float(gpp[0]))
    shape = x_arr.shape
    return ValueTriple(g.reshape(shape), gp.reshape(shape), gpp.reshape(shape))


def value(policy: SolvedPolicy, x):
    """Just ``g(x)``."""
    return evaluate(policy, x).g
