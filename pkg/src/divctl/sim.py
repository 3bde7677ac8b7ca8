"""Monte Carlo simulation of the controlled two-line surplus process.

Paths are advanced by Euler-Maruyama steps. Controls are read from a
tabulated rule indexed by the aggregate surplus, dividends accrue with exact
per-step discounting, and a line that drops to zero is rescued by the other
line according to the rule's injection mode.

Normals come from a ziggurat sampler fed by the counter-based
Philox4x32-10 generator keyed by the seed, with the step and path index in
the counter. A path's outcome
therefore depends only on ``(seed, path_index)`` and not on how paths are
split across threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numba as nb
import numpy as np

from .errors import ConfigError, SimConfigError
from .params import ModelParams
from .solver import SolvedPolicy
from .strategy import controls_arrays

BLOCK_SIZE = 4096
TABLE_POINTS = 16385
TRUNCATION = 1e-4

# Injection modes understood by the kernel.
NO_INJECTION = 0
INJECT_A7_RUIN = 1
INJECT_A7_REFLECT = 2
FREE = 3  # no hit handling at all; reserves may go negative (sanity checks only)

_MODES = {
    "none": NO_INJECTION,
    "a7-ruin": INJECT_A7_RUIN,
    "a7-reflect": INJECT_A7_REFLECT,
    "free": FREE,
}


@dataclass(frozen=True)
class SimConfig:
    """Discretization and sampling settings.

    ``horizon=None`` picks the shortest horizon with
    ``exp(-beta T) <= 1e-4``.
    """

    dt: float = 5e-4
    n_paths: int = 200_000
    seed: int = 0
    x1_0: float = 0.5
    x2_0: float = 0.5
    horizon: float | None = None
    antithetic: bool = False

    def resolved_horizon(self, beta: float) -> float:
        return -math.log(TRUNCATION) / beta if self.horizon is None else self.horizon


def validate_config(config: SimConfig, beta: float) -> SimConfig:
    """Raise :class:`SimConfigError` unless ``config`` is usable for discount rate ``beta``."""
    if not (isinstance(config.n_paths, (int, np.integer)) and config.n_paths > 0):
        raise SimConfigError(f"n_paths must be a positive integer, got {config.n_paths!r}")
    if config.antithetic and config.n_paths % 2:
        raise SimConfigError("antithetic sampling needs an even n_paths")
    if not (config.dt > 0 and math.isfinite(config.dt)):
        raise SimConfigError(f"dt must be positive, got {config.dt!r}")
    dt_max = 1e-3 * min(1.0, 1.0 / beta)
    if config.dt > dt_max * (1 + 1e-12):
        raise SimConfigError(f"dt={config.dt} exceeds 1e-3*min(1, 1/beta)={dt_max}")
    if not (config.x1_0 >= 0 and config.x2_0 >= 0):
        raise SimConfigError("initial reserves must be nonnegative")
    if not 0 <= config.seed < 2**64:
        raise SimConfigError("seed must be a 64-bit unsigned integer")
    T = config.resolved_horizon(beta)
    if not (T > 0 and math.isfinite(T)):
        raise SimConfigError(f"horizon must be positive, got {T!r}")
    if math.exp(-beta * T) > TRUNCATION * (1 + 1e-12):
        raise SimConfigError(f"horizon {T} leaves truncation weight exp(-beta T) above {TRUNCATION}")
    return config


@dataclass(frozen=True)
class ControlRule:
    """A feedback rule in the caller's line labels.

    Reinsurance is tabulated on a uniform aggregate-surplus grid over
    ``[0, x_max]`` and held constant beyond it. Line ``i`` pays its maximal
    rate whenever the aggregate is at least ``threshold_i``.
    """

    name: str
    params: ModelParams
    x_max: float
    theta1: np.ndarray
    theta2: np.ndarray
    threshold1: float
    threshold2: float
    injection: str = "a7-reflect"
    deltas: tuple[float, float, float] = (0.0, 0.0, 0.0)
    region_swap: bool = False

    def __post_init__(self):
        if self.injection not in _MODES:
            raise ConfigError(f"unknown injection mode {self.injection!r}")
        t1 = np.asarray(self.theta1, dtype=float)
        t2 = np.asarray(self.theta2, dtype=float)
        if t1.shape != t2.shape or t1.ndim != 1 or t1.size < 2:
            raise ConfigError("theta tables must be 1-d arrays of equal length >= 2")
        if np.any((t1 < 0) | (t1 > 1) | (t2 < 0) | (t2 > 1)):
            raise ConfigError("theta tables must lie in [0, 1]")

    def with_(self, **changes) -> "ControlRule":
        return replace(self, **changes)


def rule_from_policy(
    policy: SolvedPolicy, injection: str = "a7-reflect", n_grid: int = TABLE_POINTS
) -> ControlRule:
    """Tabulate the closed-form controls of ``policy``.

    ``injection="a7-ruin"`` ends a path on any hit in region A7;
    the default instead reflects the hit line at zero there.
    """
    pts = policy.switching_points
    x_max = 1.25 * max(pts) + 1e-3
    xs = np.linspace(0.0, x_max, n_grid)
    t1, t2, _, _ = controls_arrays(policy, xs)
    # Normalized line 1 pays from u2 and line 2 from u1; a weight flip swaps them.
    threshold1, threshold2 = policy.u2, policy.u1
    if policy.orientation.weight_flipped:
        threshold1, threshold2 = threshold2, threshold1
    return ControlRule(
        name="optimal",
        params=policy.params,
        x_max=x_max,
        theta1=t1,
        theta2=t2,
        threshold1=threshold1,
        threshold2=threshold2,
        injection=injection,
        deltas=tuple(float(d) for d in policy.deltas),
        region_swap=policy.orientation.weight_flipped,
    )


def constant_rule(
    params: ModelParams,
    theta1: float,
    theta2: float,
    threshold1: float = math.inf,
    threshold2: float = math.inf,
    injection: str = "none",
    name: str = "constant",
    deltas=(0.0, 0.0, 0.0),
    region_swap: bool = False,
) -> ControlRule:
    """Rule with fixed reinsurance and threshold dividends."""
    return ControlRule(
        name=name,
        params=params,
        x_max=1.0,
        theta1=np.full(2, float(theta1)),
        theta2=np.full(2, float(theta2)),
        threshold1=threshold1,
        threshold2=threshold2,
        injection=injection,
        deltas=tuple(deltas),
        region_swap=region_swap,
    )


def comparison_rule(policy: SolvedPolicy, name: str) -> ControlRule:
    """A named deviation from the optimal rule of ``policy``."""
    base = rule_from_policy(policy)
    zeros = np.zeros_like(base.theta1)
    ones = np.ones_like(base.theta1)
    u2 = policy.u2
    changes = {
        "zero-reinsurance": dict(theta1=zeros, theta2=zeros),
        "full-reinsurance": dict(theta1=ones, theta2=ones),
        "always-max-dividends": dict(threshold1=0.0, threshold2=0.0),
        "dividends-after-2u2": dict(threshold1=2 * u2, threshold2=2 * u2),
        "no-injection": dict(injection="none"),
        "no-reinsurance-max-dividends": dict(
            theta1=zeros, theta2=zeros, threshold1=0.0, threshold2=0.0
        ),
    }
    if name not in changes:
        raise ConfigError(f"unknown comparison rule {name!r}; choose from {sorted(changes)}")
    return base.with_(name=name, **changes[name])


SUBOPTIMAL_PANEL = (
    "zero-reinsurance",
    "full-reinsurance",
    "always-max-dividends",
    "dividends-after-2u2",
    "no-injection",
)
COMPARISONS = SUBOPTIMAL_PANEL + ("no-reinsurance-max-dividends",)


def suboptimal_rules(policy: SolvedPolicy) -> list[ControlRule]:
    """The fixed comparison panel used to check that the solved policy dominates."""
    return [comparison_rule(policy, name) for name in SUBOPTIMAL_PANEL]


@dataclass(frozen=True)
class ValueEstimate:
    """Monte Carlo estimate of the discounted weighted dividends.

    With antithetic sampling the standard error is computed from the pair
    averages, which are the independent samples.
    """

    mean: float
    std_err: float
    n_paths: int
    ruin_fraction: float
    antithetic: bool = False

    def z_score(self, target: float) -> float:
        return (self.mean - target) / self.std_err if self.std_err > 0 else math.inf


# ---------------------------------------------------------------------------
# kernel


_MASK32 = np.uint64(0xFFFFFFFF)


@nb.njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32-10 block function; all words are uint64 holding 32-bit values."""
    for _ in range(10):
        p0 = np.uint64(0xD2511F53) * c0
        p1 = np.uint64(0xCD9E8D57) * c2
        n0 = (p1 >> np.uint64(32)) ^ c1 ^ k0
        n2 = (p0 >> np.uint64(32)) ^ c3 ^ k1
        c1 = p1 & _MASK32
        c3 = p0 & _MASK32
        c0 = n0
        c2 = n2
        k0 = (k0 + np.uint64(0x9E3779B9)) & _MASK32
        k1 = (k1 + np.uint64(0xBB67AE85)) & _MASK32
    return c0, c1, c2, c3


# Ziggurat tables (128 layers) for the standard normal density exp(-x^2/2).
_ZIG_R = 3.442619855899
_ZIG_V = 9.91256303526217e-3


def _ziggurat_tables(n: int = 128) -> tuple[np.ndarray, np.ndarray]:
    x = np.empty(n + 1)
    x[0] = _ZIG_V / math.exp(-0.5 * _ZIG_R * _ZIG_R)
    x[1] = _ZIG_R
    for i in range(2, n):
        x[i] = math.sqrt(-2.0 * math.log(_ZIG_V / x[i - 1] + math.exp(-0.5 * x[i - 1] ** 2)))
    x[n] = 0.0
    return x, x[1:] / x[:-1]


_ZIG_X, _ZIG_RATIO = _ziggurat_tables()
_TWO53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, inline="always")
def _words(step, path, ctr, k0, k1):
    """Two 64-bit words from the Philox block at counter ``(step, ctr, path)``."""
    q = np.uint64(path)
    a, b, c, d = philox4x32(
        np.uint64(step) & _MASK32, np.uint64(ctr), q & _MASK32, q >> np.uint64(32), k0, k1
    )
    return (a << np.uint64(32)) | b, (c << np.uint64(32)) | d


@nb.njit(cache=True, inline="always")
def _split(w):
    """Layer index from the low 7 bits, signed uniform in [-1, 1) from the top 53."""
    return np.int64(w & np.uint64(127)), 2.0 * (np.int64(w >> np.uint64(11)) * _TWO53) - 1.0


@nb.njit(cache=True, inline="always")
def _open_uniform(w):
    """Uniform in (0, 1] from the top 53 bits."""
    return (np.int64(w >> np.uint64(11)) + 1) * _TWO53


@nb.njit(cache=True)
def _ziggurat_slow(i, u, ctr, step, path, k0, k1):
    """Rejection branch of the ziggurat: wedge test, tail sampling and redraws.

    Extra randomness comes from further Philox blocks at counters ``ctr,
    ctr + 1, ...``, so the result stays a pure function of the key.
    """
    while True:
        if i == 0:
            while True:
                w0, w1 = _words(step, path, ctr, k0, k1)
                ctr += 1
                x = math.log(_open_uniform(w0)) / _ZIG_R
                y = math.log(_open_uniform(w1))
                if -2.0 * y >= x * x:
                    return x - _ZIG_R if u < 0 else _ZIG_R - x
        x = u * _ZIG_X[i]
        f0 = math.exp(-0.5 * (_ZIG_X[i] * _ZIG_X[i] - x * x))
        f1 = math.exp(-0.5 * (_ZIG_X[i + 1] * _ZIG_X[i + 1] - x * x))
        w0, w1 = _words(step, path, ctr, k0, k1)
        ctr += 1
        if f1 + _open_uniform(w0) * (f0 - f1) < 1.0:
            return x
        i, u = _split(w1)
        if abs(u) < _ZIG_RATIO[i]:
            return u * _ZIG_X[i]


@nb.njit(cache=True, inline="always")
def _normal_pair(step, path, k0, k1):
    """Two independent standard normals for ``(step, path)`` under key ``(k0, k1)``.

    Ziggurat sampling on Philox output: the counter holds the step, the path
    index and a draw counter, so every draw is a pure function of
    ``(seed, path, step)``. The first normal's rejections use draw counters
    from 1 upward and the second's from 2**31 upward.
    """
    w0, w1 = _words(step, path, 0, k0, k1)
    i, u = _split(w0)
    if abs(u) < _ZIG_RATIO[i]:
        z1 = u * _ZIG_X[i]
    else:
        z1 = _ziggurat_slow(i, u, 1, step, path, k0, k1)
    i, u = _split(w1)
    if abs(u) < _ZIG_RATIO[i]:
        z2 = u * _ZIG_X[i]
    else:
        z2 = _ziggurat_slow(i, u, 2147483648, step, path, k0, k1)
    return z1, z2


@nb.njit(cache=True)
def normals(steps, paths, seed):
    """Vectorized access to the kernel's draws, for testing and diagnostics."""
    k0 = np.uint64(seed) & _MASK32
    k1 = np.uint64(seed) >> np.uint64(32)
    n = steps.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        z1, z2 = _normal_pair(steps[i], paths[i], k0, k1)
        out[i, 0] = z1
        out[i, 1] = z2
    return out


@nb.njit(cache=True, fastmath=True, nogil=True)
def _run(
    seed, first_unit, n_units, per_unit, n_steps, x10, x20, tab, inv_dx, thr1, thr2,
    c1dt, c2dt, pay1, pay2, disc_w, edt, rho, rho2, mode, swap, d0, d1, d2,
):  # fmt: skip
    """Advance ``n_units`` sampling units of ``per_unit`` paths each.

    A unit is a single path, or an antithetic pair whose second path uses
    the negated draws of the first. Draws are keyed by the index of the
    unit's first path.
    """
    n = n_units * per_unit
    acc = np.zeros(n)
    ruin = np.full(n, -1, np.int64)
    x1 = np.full(n, x10)
    x2 = np.full(n, x20)
    alive = np.ones(n, np.bool_)
    nmax = tab.shape[0] - 1
    k0 = np.uint64(seed) & _MASK32
    k1 = np.uint64(seed) >> np.uint64(32)
    n_alive = n

    # Hits present at time zero are handled before the first step.
    for q in range(n):
        if mode != 3 and (x1[q] <= 0.0 or x2[q] <= 0.0):
            ok, y1, y2 = _on_hit(x1[q], x2[q], mode, swap, d0, d1, d2)
            x1[q] = y1
            x2[q] = y2
            if not ok:
                alive[q] = False
                ruin[q] = 0
                n_alive -= 1

    g1 = np.empty(n_units)
    g2 = np.empty(n_units)
    bad1 = np.zeros(n_units, np.bool_)
    bad2 = np.zeros(n_units, np.bool_)
    disc = disc_w
    for k in range(n_steps):
        if n_alive == 0:
            break
        # Fast ziggurat path for every unit; kept branch-free so it vectorizes.
        for u in range(n_units):
            w0, w1 = _words(k, (first_unit + u) * per_unit, 0, k0, k1)
            i, v = _split(w0)
            g1[u] = v * _ZIG_X[i]
            bad1[u] = abs(v) >= _ZIG_RATIO[i]
            i, v = _split(w1)
            g2[u] = v * _ZIG_X[i]
            bad2[u] = abs(v) >= _ZIG_RATIO[i]
        # Rare rejections, about 1% of draws.
        for u in range(n_units):
            if bad1[u] or bad2[u]:
                z1, z2 = _normal_pair(k, (first_unit + u) * per_unit, k0, k1)
                g1[u] = z1
                g2[u] = z2
        for u in range(n_units):
            base = u * per_unit
            z1 = g1[u]
            z2 = g2[u]
            for j in range(per_unit):
                q = base + j
                if not alive[q]:
                    continue
                sign = 1.0 - 2.0 * j
                e1 = sign * z1
                e2 = sign * (rho * z1 + rho2 * z2)
                xa = x1[q] + x2[q]
                pos = xa * inv_dx
                if pos < 0.0:
                    pos = 0.0
                if pos >= nmax:
                    pos = nmax - 1e-9
                i = int(pos)
                f = pos - i
                m1 = tab[i, 0] + tab[i, 4] * f
                m2 = tab[i, 1] + tab[i, 5] * f
                v1 = tab[i, 2] + tab[i, 6] * f
                v2 = tab[i, 3] + tab[i, 7] * f
                y1 = x1[q] + m1 + v1 * e1
                y2 = x2[q] + m2 + v2 * e2
                # Selects rather than branches: paths hover around the thresholds.
                s1 = 1.0 if xa >= thr1 else 0.0
                s2 = 1.0 if xa >= thr2 else 0.0
                y1 -= s1 * c1dt
                y2 -= s2 * c2dt
                acc[q] += disc * (s1 * pay1 + s2 * pay2)
                if mode != 3 and (y1 <= 0.0 or y2 <= 0.0):
                    ok, y1, y2 = _on_hit(y1, y2, mode, swap, d0, d1, d2)
                    if not ok:
                        alive[q] = False
                        ruin[q] = k + 1
                        n_alive -= 1
                x1[q] = y1
                x2[q] = y2
        disc *= edt
    return acc, ruin, x1, x2


@nb.njit(cache=True, nogil=True)
def _on_hit(y1, y2, mode, swap, d0, d1, d2):
    """Apply the injection rule after a step that left a line at or below zero."""
    x = y1 + y2
    if x <= 0.0 or mode == 0:
        return False, y1, y2
    # Work in the region frame, where line 1 carries weight a <= 1/2.
    if swap:
        r1, r2 = y2, y1
    else:
        r1, r2 = y1, y2
    # Line-1 rule first if both are non-positive (impossible with x > 0).
    hit1 = r1 <= 0.0
    if x <= d0:
        if mode == 1:
            return False, y1, y2
        keep = x
    elif x <= d1:
        keep = d0
    elif x <= d2:
        keep = d1
    else:
        keep = d2
    if hit1:
        r1, r2 = x - keep, keep
    else:
        r1, r2 = keep, x - keep
    if swap:
        return True, r2, r1
    return True, r1, r2


def _threads() -> int:
    raw = os.environ.get("DIVCTL_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise SimConfigError(f"DIVCTL_THREADS must be an integer, got {raw!r}") from None
    return max(1, os.cpu_count() or 1)


def _kernel_args(rule: ControlRule, config: SimConfig):
    p = rule.params
    dt = config.dt
    sq = math.sqrt(dt)
    r1 = 1.0 - np.asarray(rule.theta1, dtype=float)
    r2 = 1.0 - np.asarray(rule.theta2, dtype=float)
    base = np.stack([r1 * p.mu1 * dt, r2 * p.mu2 * dt, r1 * p.sigma1 * sq, r2 * p.sigma2 * sq], axis=1)
    # Each row also holds the increments to the next row, so one interpolation
    # touches a single 64-byte row.
    slope = np.vstack([np.diff(base, axis=0), np.zeros((1, 4))])
    tab = np.ascontiguousarray(np.hstack([base, slope]))
    inv_dx = (tab.shape[0] - 1) / rule.x_max
    disc_w = (1.0 - math.exp(-p.beta * dt)) / p.beta
    return (
        tab,
        inv_dx,
        float(rule.threshold1),
        float(rule.threshold2),
        p.cbar1 * dt,
        p.cbar2 * dt,
        p.a * p.cbar1,
        (1 - p.a) * p.cbar2,
        disc_w,
        math.exp(-p.beta * dt),
        p.rho,
        math.sqrt(1 - p.rho * p.rho),
        _MODES[rule.injection],
        bool(rule.region_swap),
        *(float(d) for d in rule.deltas),
    )


def _simulate(rule: ControlRule, config: SimConfig, first: int, count: int):
    """Simulate paths ``first .. first+count-1``; returns per-path arrays.

    Work is split into chunks of ``BLOCK_SIZE`` paths run on up to
    ``DIVCTL_THREADS`` threads. Chunking does not affect any draw.
    """
    p = rule.params
    validate_config(config, p.beta)
    n_steps = int(math.ceil(config.resolved_horizon(p.beta) / config.dt))
    args = _kernel_args(rule, config)
    per = 2 if config.antithetic else 1
    # Whole units covering the requested paths.
    u_first = first // per
    u_end = -(-(first + count) // per)
    chunk = BLOCK_SIZE // per
    jobs = [(u, min(chunk, u_end - u)) for u in range(u_first, u_end, chunk)]

    def run(job):
        u0, n_units = job
        return _run(
            config.seed, u0, n_units, per, n_steps, float(config.x1_0), float(config.x2_0), *args
        )

    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]
    lo = first - u_first * per
    out = []
    for k in range(4):
        arr = np.concatenate([part[k] for part in parts])
        out.append(arr[lo : lo + count])
    return tuple(out)


def simulate_paths(rule: ControlRule, config: SimConfig):
    """All paths of ``config``: ``(payoffs, ruin_times, x1_final, x2_final)``.

    Ruin times are ``nan`` for paths that survive to the horizon.
    """
    acc, ruin, x1, x2 = _simulate(rule, config, 0, config.n_paths)
    times = np.where(ruin >= 0, ruin * config.dt, np.nan)
    return acc, times, x1, x2


def simulate_path(rule: ControlRule, config: SimConfig, path_index: int):
    """Discounted dividends and ruin time (``None`` if censored) of one path."""
    if not 0 <= path_index:
        raise SimConfigError("path_index must be nonnegative")
    acc, ruin, _, _ = _simulate(rule, config, int(path_index), 1)
    t = None if ruin[0] < 0 else float(ruin[0] * config.dt)
    return float(acc[0]), t


def estimate_value(rule: ControlRule, config: SimConfig) -> ValueEstimate:
    """Mean discounted weighted dividends over ``config.n_paths`` paths."""
    acc, ruin, _, _ = _simulate(rule, config, 0, config.n_paths)
    n = acc.size
    samples = 0.5 * (acc[0::2] + acc[1::2]) if config.antithetic else acc
    m = samples.size
    # Summation order is fixed by path index, so thread count cannot change the result.
    mean = float(np.sum(samples) / m)
    se = float(np.std(samples, ddof=1) / math.sqrt(m)) if m > 1 else math.inf
    return ValueEstimate(
        mean=mean,
        std_err=se,
        n_paths=n,
        ruin_fraction=float(np.mean(ruin >= 0)),
        antithetic=config.antithetic,
    )


def correlated_increments(n: int, dt: float, rho: float, seed: int = 0, step: int = 0):
    """Brownian increments of paths ``0..n-1`` at one step, built as the kernel builds them."""
    z = normals(np.full(n, step, np.int64), np.arange(n, dtype=np.int64), seed)
    sq = math.sqrt(dt)
    return sq * z[:, 0], sq * (rho * z[:, 0] + math.sqrt(1 - rho * rho) * z[:, 1])
