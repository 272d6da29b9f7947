"""Brush (Fiala) tire model and its cone-bounded relaxation.

The lateral force law is a cubic in ``tan(alpha)`` up to the full-sliding
angle and a constant sliding force beyond it. With the coefficients used here
the cubic peaks at exactly ``mu * Fz``; the price is a jump at ``alpha_sat``
of size ``mu * R_mu * Fz * (1 / k_mu - 1)`` (see ``sliding_jump``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidParameterError


@dataclass(frozen=True)
class TireParams:
    C: float  # cornering stiffness [N/rad]
    mu: float  # static friction coefficient
    R_mu: float  # dynamic / static friction ratio
    Fz: float  # normal load [N]

    def validate(self) -> None:
        if not (self.C > 0 and self.Fz > 0):
            raise InvalidParameterError(f"C and Fz must be positive, got C={self.C}, Fz={self.Fz}")
        if not (0 < self.mu <= 2):
            raise InvalidParameterError(f"mu must lie in (0, 2], got {self.mu}")
        if not (0 < self.R_mu <= 1):
            raise InvalidParameterError(f"R_mu must lie in (0, 1], got {self.R_mu}")


@dataclass(frozen=True)
class TireDerived:
    params: TireParams
    q: float
    k_mu: float
    a_coef: float
    b_coef: float
    c_coef: float
    alpha_sat: float
    F_sliding: float
    alpha_peak: float
    F_peak: float
    C_peak: float
    C_bar: float
    dC: float

    @property
    def C(self) -> float:
        return self.params.C

    @property
    def C_peak_approx(self) -> float:
        """Small-angle estimate ``k_mu * C / q`` of the peak secant slope."""
        return self.k_mu * self.params.C / self.q

    @property
    def sliding_jump(self) -> float:
        """|F| just inside alpha_sat minus |F| in full sliding."""
        p = self.params
        return p.mu * p.R_mu * p.Fz * (1.0 / self.k_mu - 1.0)


def derive(p: TireParams, alpha_peak: float | None = None, C_peak: float | None = None) -> TireDerived:
    """Compute every coefficient of the brush model for ``p``.

    ``alpha_peak`` and ``C_peak`` may be given explicitly to inject published
    values; otherwise the peak angle comes from the arctan formula and the peak
    slope from ``mu * Fz / alpha_peak``.
    """
    p.validate()
    C, mu, R, Fz = p.C, p.mu, p.R_mu, p.Fz
    q = 1.0 / (1.0 - 2.0 / 3.0 * R)
    k_mu = q - ((2.0 - R) / 3.0 - 1.0 / 9.0) * q * q
    a_coef = -C
    b_coef = k_mu * C**2 * (2.0 - R) / (3.0 * mu * Fz)
    c_coef = -(k_mu**2) * C**3 * (1.0 - 2.0 / 3.0 * R) / (3.0 * mu * Fz) ** 2
    alpha_sat = math.atan(3.0 * mu * Fz / (k_mu * C))
    F_sliding = -mu * R * Fz
    F_peak = mu * Fz

    if alpha_peak is None:
        alpha_peak = math.atan(q * mu * Fz / (k_mu * C))
    elif not (0 < alpha_peak < alpha_sat):
        raise InvalidParameterError(f"alpha_peak={alpha_peak} must lie in (0, alpha_sat={alpha_sat})")
    if C_peak is None:
        C_peak = F_peak / alpha_peak
    if not (0 < C_peak < C):
        raise InvalidParameterError(f"C_peak={C_peak} must lie in (0, C={C})")

    return TireDerived(
        params=p,
        q=q,
        k_mu=k_mu,
        a_coef=a_coef,
        b_coef=b_coef,
        c_coef=c_coef,
        alpha_sat=alpha_sat,
        F_sliding=F_sliding,
        alpha_peak=float(alpha_peak),
        F_peak=F_peak,
        C_peak=float(C_peak),
        C_bar=0.5 * (C + C_peak),
        dC=0.5 * (C - C_peak),
    )


def lateral_force(d: TireDerived, alpha):
    """Brush lateral force [N]; negative for positive slip. Accepts arrays."""
    alpha = np.asarray(alpha, dtype=float)
    f = np.tan(np.clip(alpha, -d.alpha_sat, d.alpha_sat))
    poly = d.a_coef * f + d.b_coef * np.abs(f) * f + d.c_coef * f**3
    sliding = d.F_sliding * np.sign(alpha)
    out = np.where(np.abs(alpha) <= d.alpha_sat, poly, sliding)
    return out if out.ndim else float(out)


def conic_bound_check(d: TireDerived, alpha):
    """Return the gain ``gamma`` with ``F(alpha) = -(C_bar + gamma * dC) * alpha``.

    The relaxation covers the tire curve iff ``|gamma| <= 1`` on the whole
    domain ``0 < |alpha| <= alpha_peak``.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha == 0):
        raise DomainError("gamma is undefined at alpha = 0")
    if np.any(np.abs(alpha) > d.alpha_peak):
        raise DomainError(f"|alpha| must not exceed alpha_peak={d.alpha_peak}")
    slope = -np.asarray(lateral_force(d, alpha)) / alpha
    gamma = (slope - d.C_bar) / d.dC
    return gamma if gamma.ndim else float(gamma)
