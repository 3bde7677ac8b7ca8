"""Model inputs, derived constants, correlation regimes and line orientation.

The two business lines are diffusions with drift ``(1 - theta_i) * mu_i`` and
volatility ``(1 - theta_i) * sigma_i`` under proportional reinsurance
``theta_i``. Everything the closed-form solution needs is a function of the
nine primitive inputs held by :class:`ModelParams`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum

from .errors import DegenerateRegime, InconsistentGross, RangeError

GROSS_RTOL = 1e-12


@dataclass(frozen=True)
class GrossBlock:
    """Optional gross drift and loading per line; ``mu_i = kappa_i * tilde_mu_i``."""

    tilde_mu1: float
    tilde_mu2: float
    kappa1: float
    kappa2: float

    def swapped(self) -> "GrossBlock":
        return GrossBlock(self.tilde_mu2, self.tilde_mu1, self.kappa2, self.kappa1)


@dataclass(frozen=True)
class ModelParams:
    """Primitive inputs of the two-line control problem.

    Parameters
    ----------
    mu1, mu2 : float
        Adjusted drifts of the two lines.
    sigma1, sigma2 : float
        Volatilities.
    rho : float
        Correlation of the two Brownian drivers, in (-1, 1).
    beta : float
        Discount rate.
    a : float
        Weight of line-1 dividends in the objective; line 2 gets ``1 - a``.
    cbar1, cbar2 : float
        Maximal dividend rates.
    gross : GrossBlock, optional
        Gross drifts and loadings, checked against ``mu1`` and ``mu2``.
    """

    mu1: float
    mu2: float
    sigma1: float
    sigma2: float
    rho: float
    beta: float
    a: float
    cbar1: float
    cbar2: float
    gross: GrossBlock | None = None

    def swapped(self) -> "ModelParams":
        """Exchange the labels of the two lines, keeping the weight ``a``."""
        return replace(
            self,
            mu1=self.mu2,
            mu2=self.mu1,
            sigma1=self.sigma2,
            sigma2=self.sigma1,
            cbar1=self.cbar2,
            cbar2=self.cbar1,
            gross=None if self.gross is None else self.gross.swapped(),
        )

    def risk_swapped(self) -> "ModelParams":
        """Exchange only the risk data (drift, volatility, gross block)."""
        return replace(
            self,
            mu1=self.mu2,
            mu2=self.mu1,
            sigma1=self.sigma2,
            sigma2=self.sigma1,
            gross=None if self.gross is None else self.gross.swapped(),
        )

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "gross"}
        if self.gross is not None:
            out["gross"] = {f.name: getattr(self.gross, f.name) for f in fields(self.gross)}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        data = dict(data)
        gross = data.pop("gross", None)
        if gross is not None:
            gross = GrossBlock(**{k: float(v) for k, v in gross.items()})
        return cls(**{k: float(v) for k, v in data.items()}, gross=gross)


class RegimeTag(str, Enum):
    MAIN = "Main"
    FULL_REINSURANCE_LINE1 = "FullReinsuranceLine1"
    FULL_REINSURANCE_LINE2 = "FullReinsuranceLine2"


@dataclass(frozen=True)
class CorrelationRegime:
    """Regime tag plus the effective aggregate constants used downstream."""

    tag: RegimeTag
    N1: float
    N2: float
    N3: float
    N4: float

    @property
    def degenerate_line(self) -> int | None:
        """Index of the line that cedes all of its risk, if any."""
        if self.tag is RegimeTag.FULL_REINSURANCE_LINE1:
            return 1
        if self.tag is RegimeTag.FULL_REINSURANCE_LINE2:
            return 2
        return None


@dataclass(frozen=True)
class Orientation:
    """How the normalized problem relates to the caller's line labels.

    ``weight_flipped`` means every line-specific field was exchanged and the
    weight replaced by ``1 - a``. ``lines_swapped`` means that afterwards only
    the risk data (drift, volatility) was exchanged so that the line which
    stops reinsuring first is line 1. Dividend labels are unaffected by the
    second step because the value depends on the lines only through the
    aggregate surplus.
    """

    lines_swapped: bool = False
    weight_flipped: bool = False


@dataclass(frozen=True)
class DerivedConstants:
    """Aggregate constants and exponents of the closed-form solution.

    ``w1`` is the crossover level of the line that stops reinsuring first and
    ``w2`` that of the other line; ``w2`` is infinite when the other line
    cedes all of its risk.
    """

    N1: float
    N2: float
    N3: float
    N4: float
    gamma1: float
    w1: float
    w2: float
    M: float
    gamma2_plus: float
    gamma2_minus: float
    gamma3_plus: float
    gamma3_minus: float
    gamma4_minus: float
    gamma3_theorem3: float
    v_limit: float
    cap_threshold: float = field(default=math.nan)


def validate(params: ModelParams) -> ModelParams:
    """Check the structural ranges of ``params`` and return it unchanged.

    >>> validate(ModelParams(4, 2, 1.5, 1, 0.6, 0.5, 0.3, 3, 2)).rho
    0.6
    """
    for name in ("mu1", "mu2", "sigma1", "sigma2", "beta", "cbar1", "cbar2"):
        value = getattr(params, name)
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise RangeError(name, value, "must be a positive finite number")
    if not (math.isfinite(params.rho) and -1.0 < params.rho < 1.0):
        raise RangeError("rho", params.rho, "must lie in (-1, 1)")
    if not (math.isfinite(params.a) and 0.0 <= params.a <= 1.0):
        raise RangeError("a", params.a, "must lie in [0, 1]")
    g = params.gross
    if g is not None:
        for name in ("tilde_mu1", "tilde_mu2", "kappa1", "kappa2"):
            value = getattr(g, name)
            if not (math.isfinite(value) and value >= 0):
                raise RangeError(f"gross.{name}", value, "must be nonnegative")
        for i, (mu, kappa, tilde) in enumerate(
            ((params.mu1, g.kappa1, g.tilde_mu1), (params.mu2, g.kappa2, g.tilde_mu2)), 1
        ):
            if abs(mu - kappa * tilde) > GROSS_RTOL * abs(mu):
                raise InconsistentGross(
                    f"mu{i}", f"mu{i}={mu!r} differs from kappa{i}*tilde_mu{i}={kappa * tilde!r}"
                )
    return params


def drift_vol_ratio(params: ModelParams) -> float:
    """Return ``(mu1/mu2) / (sigma1/sigma2)``."""
    return (params.mu1 * params.sigma2) / (params.mu2 * params.sigma1)


def classify_regime(params: ModelParams) -> CorrelationRegime:
    """Decide whether both lines reinsure or one of them cedes everything.

    Ties at equality are assigned to the full-reinsurance regimes.
    """
    rho, beta = params.rho, params.beta
    r = drift_vol_ratio(params)
    if rho > 0 and rho >= r:
        mu, s = params.mu2, params.sigma2
        return CorrelationRegime(
            RegimeTag.FULL_REINSURANCE_LINE1, mu * mu, mu * mu + 2 * beta * s * s, mu, s * s
        )
    if rho > 0 and r * rho >= 1.0:
        mu, s = params.mu1, params.sigma1
        return CorrelationRegime(
            RegimeTag.FULL_REINSURANCE_LINE2, mu * mu, mu * mu + 2 * beta * s * s, mu, s * s
        )
    N1, N2, N3, N4 = _main_constants(params)
    return CorrelationRegime(RegimeTag.MAIN, N1, N2, N3, N4)


def _main_constants(params: ModelParams) -> tuple[float, float, float, float]:
    mu1, mu2, s1, s2 = params.mu1, params.mu2, params.sigma1, params.sigma2
    rho, beta = params.rho, params.beta
    d1 = mu1 * s2 - rho * mu2 * s1
    N1 = (mu1 * s2 - mu2 * s1) ** 2 + 2 * (1 - rho) * mu1 * mu2 * s1 * s2
    N2 = N1 + 2 * beta * (1 - rho * rho) * s1 * s1 * s2 * s2
    if d1 == 0.0:
        return N1, N2, math.nan, math.nan
    N3 = N1 / (s2 * d1)
    N4 = (1 - rho * rho) * s1 * s1 * s2 / d1 * N3
    return N1, N2, N3, N4


def crossover_levels(params: ModelParams, gamma1: float) -> tuple[float, float]:
    """Main-regime levels where each line's unconstrained reinsurance hits zero."""
    mu1, mu2, s1, s2, rho = params.mu1, params.mu2, params.sigma1, params.sigma2, params.rho
    d1 = mu1 * s2 - rho * mu2 * s1
    d2 = mu2 * s1 - rho * mu1 * s2
    if d1 == 0.0 or d2 == 0.0:
        raise DegenerateRegime("crossover level undefined: zero denominator")
    k = (1 - gamma1) * (1 - rho * rho)
    return k * s1 * s1 * s2 / d1, k * s1 * s2 * s2 / d2


def _exponents(N3: float, N4: float, beta: float, shift: float) -> tuple[float, float]:
    b = N3 - shift
    root = math.sqrt(b * b + 2 * beta * N4)
    # Stable pair: compute the larger-magnitude root first, the other via the product.
    if b >= 0:
        minus = (-b - root) / N4
        plus = -2 * beta / (N4 * minus)
    else:
        plus = (-b + root) / N4
        minus = -2 * beta / (N4 * plus)
    return plus, minus


def derive_constants(params: ModelParams, regime: CorrelationRegime | None = None) -> DerivedConstants:
    """Compute every constant the closed-form solution needs.

    ``params`` should already be normalized (see :func:`normalize_orientation`).
    """
    if regime is None:
        regime = classify_regime(params)
    N1, N2, N3, N4 = regime.N1, regime.N2, regime.N3, regime.N4
    beta, a, c1, c2 = params.beta, params.a, params.cbar1, params.cbar2
    gamma1 = 1.0 - N1 / N2
    if regime.tag is RegimeTag.MAIN:
        w1, w2 = crossover_levels(params, gamma1)
    else:
        w1, w2 = (1 - gamma1) * N4 / N3, math.inf
    g2p, g2m = _exponents(N3, N4, beta, 0.0)
    g3p, g3m = _exponents(N3, N4, beta, c2)
    _, g4m = _exponents(N3, N4, beta, c1 + c2)
    gap = N2 - N1
    return DerivedConstants(
        N1=N1,
        N2=N2,
        N3=N3,
        N4=N4,
        gamma1=gamma1,
        w1=w1,
        w2=w2,
        M=N1 * beta / gap,
        gamma2_plus=g2p,
        gamma2_minus=g2m,
        gamma3_plus=g3p,
        gamma3_minus=g3m,
        gamma4_minus=g4m,
        gamma3_theorem3=-N2 * beta / ((c1 + c2) * gap),
        v_limit=(a * c1 + (1 - a) * c2) / beta,
        cap_threshold=N3 * N2 / (2 * N1),
    )


def normalize_orientation(params: ModelParams) -> tuple[ModelParams, Orientation]:
    """Relabel lines so that ``a <= 1/2`` and, in the Main regime, ``w1 <= w2``.

    >>> p = ModelParams(2, 4, 1, 1.5, 0.6, 0.5, 0.7, 2, 3)
    >>> normalize_orientation(p)[1]
    Orientation(lines_swapped=False, weight_flipped=True)
    """
    flipped = params.a > 0.5
    out = replace(params.swapped(), a=1.0 - params.a) if flipped else params
    swapped = False
    regime = classify_regime(out)
    if regime.tag is RegimeTag.MAIN:
        w1, w2 = crossover_levels(out, 1.0 - regime.N1 / regime.N2)
        if w1 > w2:
            out = out.risk_swapped()
            swapped = True
    return out, Orientation(lines_swapped=swapped, weight_flipped=flipped)
