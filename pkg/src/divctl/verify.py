"""Numerical checks of a solved policy against the HJB equation.

Everything here treats the closed form as a black box: residuals of the
generator at the proposed controls, a brute-force search over a control
lattice, smooth-fit gaps between adjacent branches, shape checks, and
finite-difference derivative checks.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .solver import SolvedPolicy
from .strategy import ControlDecision, _normalized_controls, controls_arrays
from .valuefn import branch_edges, branch_names, eval_branch, evaluate


def generator(policy: SolvedPolicy, x, theta1, theta2, c1, c2):
    """Apply the controlled generator to ``g`` at ``x`` (arrays broadcast).

    Both first partials equal ``g'`` and all second partials equal ``g''``
    because the value depends on the reserves only through their sum.
    """
    p = policy.params
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("the generator needs x > 0 (g'' is singular at the origin)")
    v = evaluate(policy, x)
    g, gp, gpp = np.asarray(v.g), np.asarray(v.g_prime), np.asarray(v.g_double_prime)
    r1 = 1.0 - np.asarray(theta1)
    r2 = 1.0 - np.asarray(theta2)
    c1 = np.asarray(c1)
    c2 = np.asarray(c2)
    drift = r1 * p.mu1 + r2 * p.mu2 - c1 - c2
    var = (p.sigma1 * r1) ** 2 + (p.sigma2 * r2) ** 2 + 2 * p.rho * p.sigma1 * p.sigma2 * r1 * r2
    return drift * gp + 0.5 * var * gpp - p.beta * g + p.a * c1 + (1 - p.a) * c2


def hjb_residual(policy: SolvedPolicy, x, decision: ControlDecision | None = None):
    """Generator applied to ``g`` at ``x`` under ``decision`` (default: the optimal controls)."""
    if decision is None:
        t1, t2, d1, d2 = controls_arrays(policy, x)
        out = generator(policy, x, t1, t2, d1, d2)
        return float(out[0]) if np.ndim(x) == 0 else out
    out = generator(policy, x, decision.theta1, decision.theta2, decision.c1, decision.c2)
    return float(out) if np.ndim(out) == 0 else out


def _lattice(policy: SolvedPolicy, grid_n: int):
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    t = np.linspace(0.0, 1.0, grid_n)
    t1, t2 = np.meshgrid(t, t, indexing="ij")
    p = policy.params
    divs = [(0.0, 0.0), (p.cbar1, 0.0), (0.0, p.cbar2), (p.cbar1, p.cbar2)]
    return t1.ravel(), t2.ravel(), divs


def bruteforce_scan(policy: SolvedPolicy, x: float, grid_n: int = 201) -> dict:
    """Best lattice value of the generator at ``x`` and where it is attained."""
    t1, t2, divs = _lattice(policy, grid_n)
    best = -math.inf
    arg = None
    for d1, d2 in divs:
        vals = generator(policy, np.full(t1.shape, x), t1, t2, d1, d2)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best = float(vals[k])
            arg = (float(t1[k]), float(t2[k]), d1, d2)
    return {"max": best, "argmax": arg, "at_optimum": float(hjb_residual(policy, x))}


def bruteforce_sup_check(policy: SolvedPolicy, x, grid_n: int = 201):
    """Lattice maximum of the generator minus its value at the closed-form controls.

    A correct optimum gives a value at most of the order of the squared grid
    spacing. Accepts a scalar or an array of points.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    t1, t2, divs = _lattice(policy, grid_n)
    p = policy.params
    v = evaluate(policy, xs)
    gp = np.asarray(v.g_prime)[:, None]
    gpp = np.asarray(v.g_double_prime)[:, None]
    g = np.asarray(v.g)[:, None]
    r1 = (1 - t1)[None, :]
    r2 = (1 - t2)[None, :]
    drift0 = r1 * p.mu1 + r2 * p.mu2
    var = (p.sigma1 * r1) ** 2 + (p.sigma2 * r2) ** 2 + 2 * p.rho * p.sigma1 * p.sigma2 * r1 * r2
    base = np.max(drift0 * gp + 0.5 * var * gpp, axis=1) - p.beta * g[:, 0]
    # Dividend terms do not interact with reinsurance: add the best pair.
    div_best = np.max(
        np.stack([-(d1 + d2) * gp[:, 0] + p.a * d1 + (1 - p.a) * d2 for d1, d2 in divs]), axis=0
    )
    out = base + div_best - np.asarray(hjb_residual(policy, xs))
    return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class GridSpec:
    """Grids and tolerances used by :func:`run_battery`."""

    n_residual: int = 500
    n_shape: int = 2000
    n_fd: int = 200
    bruteforce_n: int = 201
    fd_step: float = 1e-5
    fd_lower: float = 0.02
    tail_lengths: float = 30.0
    residual_tail_lengths: float = 5.0
    tol_closed: float = 1e-8
    tol_integral: float = 1e-6
    tol_bruteforce: float = 1e-3
    tol_fd_first: float = 1e-6
    tol_fd_second: float = 1e-4
    seed: int = 12345


@dataclass
class VerificationReport:
    """Outcome of :func:`run_battery`; ``passed`` is false if any check failed."""

    policy_hash: str
    scenario: str
    max_hjb_residual_at_optimum: float
    max_bruteforce_violation: float
    worst_bruteforce_x: float
    smooth_fit_gaps: dict
    slope_conditions: dict
    shape_flags: dict
    fd_max_rel_error: dict
    foc_max_error: float
    grid: dict
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def policy_hash(policy: SolvedPolicy) -> str:
    """Short digest of the inputs and switching points of ``policy``."""
    key = repr(
        (
            sorted(policy.params.to_dict().items(), key=lambda kv: kv[0]),
            policy.scenario.value,
            policy.closure,
            policy.w0,
            policy.u1,
            policy.u2,
        )
    )
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def _uses_integral(policy: SolvedPolicy, name: str) -> bool:
    return name == "integral"


def smooth_fit_gaps(policy: SolvedPolicy) -> dict:
    """Relative gaps in ``g, g', g''`` between adjacent branches at each switching point."""
    names = branch_names(policy)
    out = {}
    for i, edge in enumerate(branch_edges(policy)):
        left = eval_branch(policy, names[i], edge)
        right = eval_branch(policy, names[i + 1], edge)
        gaps = [
            abs(l - r) / (1 + abs(r))
            for l, r in (
                (left.g, right.g),
                (left.g_prime, right.g_prime),
                (left.g_double_prime, right.g_double_prime),
            )
        ]
        integral = _uses_integral(policy, names[i]) or _uses_integral(policy, names[i + 1])
        out[f"{names[i]}|{names[i + 1]}"] = {"at": float(edge), "gaps": gaps, "integral": integral}
    return out


def residual_grid(policy: SolvedPolicy, spec: GridSpec = GridSpec()) -> np.ndarray:
    """Evaluation points for residual and lattice checks."""
    x_max = policy.u2 + spec.residual_tail_lengths / abs(policy.tail_exponent)
    return np.linspace(0.0, x_max, spec.n_residual + 1)[1:]


def shape_grid(policy: SolvedPolicy, spec: GridSpec = GridSpec()) -> np.ndarray:
    x_max = policy.u2 + spec.tail_lengths / abs(policy.tail_exponent)
    return np.linspace(0.0, x_max, spec.n_shape + 1)[1:]


def _integral_mask(policy: SolvedPolicy, x: np.ndarray) -> np.ndarray:
    names = branch_names(policy)
    edges = np.asarray(branch_edges(policy))
    idx = np.searchsorted(edges, x, side="right")
    return np.array([names[k] == "integral" for k in idx], dtype=bool)


def foc_errors(policy: SolvedPolicy, x: np.ndarray) -> np.ndarray:
    """``|theta_i - (1 + (1-gamma1)/w_i * g'/g'')|`` where both proportions are interior.

    Elsewhere the entry is 0: with one proportion on the boundary the
    unconstrained formula does not describe the other one.
    """
    t1, t2, _, _ = _normalized_controls(policy, x)
    v = evaluate(policy, x)
    ratio = np.asarray(v.g_prime) / np.asarray(v.g_double_prime)
    g1 = policy.constants.gamma1
    err = np.zeros_like(x)
    interior = (t1 > 1e-9) & (t1 < 1 - 1e-9) & (t2 > 1e-9) & (t2 < 1 - 1e-9)
    for t, w in zip((t1, t2), policy.line_levels):
        cand = 1 + (1 - g1) / w * ratio
        err = np.maximum(err, np.where(interior, np.abs(t - cand), 0.0))
    return err


def run_battery(policy: SolvedPolicy, spec: GridSpec = GridSpec()) -> VerificationReport:
    """Run every check; failures are collected in the report, never raised."""
    failures = []
    p = policy.normalized

    gaps = smooth_fit_gaps(policy)
    for key, item in gaps.items():
        tol = spec.tol_integral if item["integral"] else spec.tol_closed
        if max(item["gaps"]) > tol:
            failures.append(f"smooth fit {key} at {item['at']:.6g}: gaps {item['gaps']}")

    slopes = {
        "u1": float(evaluate(policy, policy.u1).g_prime - (1 - p.a)),
        "u2": float(evaluate(policy, policy.u2).g_prime - p.a),
    }
    for key, val in slopes.items():
        if abs(val) > spec.tol_closed:
            failures.append(f"slope condition at {key}: {val:.3e}")

    xs = shape_grid(policy, spec)
    v = evaluate(policy, xs)
    g = np.asarray(v.g)
    flags = {
        "increasing": bool(np.all(np.asarray(v.g_prime) > 0)),
        "concave": bool(np.all(np.asarray(v.g_double_prime) < 0)),
        "below_limit": bool(np.all(g < policy.constants.v_limit)),
    }
    t1, t2, _, _ = controls_arrays(policy, xs)
    if policy.scenario.value == "T3_NoW0":
        flags["theta_positive"] = bool(np.all(t1 > 0) and np.all(t2 > 0))
    for key, ok in flags.items():
        if not ok:
            failures.append(f"shape check failed: {key}")

    rng = np.random.default_rng(spec.seed)
    h = spec.fd_step
    # Second differences lose about eps*|g|/h^2 to round-off, so sample where
    # the curvature is material: away from the origin and not in the tail.
    lo, hi = spec.fd_lower, policy.u2
    pts = []
    sw = np.asarray(policy.switching_points)
    while len(pts) < spec.n_fd:
        cand = rng.uniform(lo, hi)
        if np.all(np.abs(cand - sw) > 10 * h):
            pts.append(cand)
    pts = np.asarray(pts)
    gm, g0, gpl = (np.asarray(evaluate(policy, pts + s * h).g) for s in (-1, 0, 1))
    v0 = evaluate(policy, pts)
    fd1 = (gpl - gm) / (2 * h)
    fd2 = (gpl - 2 * g0 + gm) / (h * h)
    e1 = float(np.max(np.abs(fd1 - v0.g_prime) / np.abs(v0.g_prime)))
    err2 = np.abs(fd2 - v0.g_double_prime)
    e2 = float(np.max(err2 / np.abs(v0.g_double_prime)))
    # A second difference cannot beat the round-off of its three inputs.
    floor = 4 * np.finfo(float).eps * np.abs(g0) / (h * h)
    excess2 = float(np.max(err2 - spec.tol_fd_second * np.abs(v0.g_double_prime) - floor))
    fd = {"first": e1, "second": e2, "second_excess_over_tolerance": excess2}
    if e1 > spec.tol_fd_first:
        failures.append(f"finite-difference g' error {e1:.3e}")
    if excess2 > 0:
        failures.append(f"finite-difference g'' error {e2:.3e}")

    xr = residual_grid(policy, spec)
    res = np.abs(np.asarray(hjb_residual(policy, xr)))
    gr = np.asarray(evaluate(policy, xr).g)
    tol = np.where(_integral_mask(policy, xr), spec.tol_integral, spec.tol_closed) * (1 + gr)
    bad = res > tol
    if np.any(bad):
        k = int(np.argmax(res - tol))
        failures.append(f"HJB residual at optimum {res[k]:.3e} at x={xr[k]:.6g}")

    brute = bruteforce_sup_check(policy, xr, spec.bruteforce_n)
    kb = int(np.argmax(brute))
    if brute[kb] > spec.tol_bruteforce:
        failures.append(
            f"lattice beats the closed-form controls by {brute[kb]:.3e} at x={xr[kb]:.6g}"
        )

    foc = float(np.max(foc_errors(policy, xr)))
    if foc > 1e-6:
        failures.append(f"first-order condition mismatch {foc:.3e}")

    return VerificationReport(
        policy_hash=policy_hash(policy),
        scenario=policy.scenario.value,
        max_hjb_residual_at_optimum=float(np.max(res)),
        max_bruteforce_violation=float(brute[kb]),
        worst_bruteforce_x=float(xr[kb]),
        smooth_fit_gaps=gaps,
        slope_conditions=slopes,
        shape_flags=flags,
        fd_max_rel_error=fd,
        foc_max_error=foc,
        grid=asdict(spec),
        failures=failures,
    )
