"""Distortion risk measures and their action on a standard normal variable.

A distortion function h maps [0, 1] onto [0, 1], is nondecreasing, and
satisfies h(0) = 0, h(1) = 1.  The induced risk measure of a random variable
Z is the Choquet integral of its survival function.  What the retention
solvers need is the scalar

    phi_h(Z) = integral over t in (0, 1) of Quantile_Z(1 - t) dh(t)

for standard normal Z: it replaces the plain normal quantile in the
normal-approximation objectives.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri

from .errors import DomainError, NumericalFailure

_KINDS = ("var", "es", "dualpower", "gini", "pht", "wang")

#: Reference pairs (p, standard normal quantile) used by the self-check.
REFERENCE_QUANTILES = (
    (0.5, 0.0),
    (0.75, 0.6744897501960817),
    (0.9, 1.2815515655446004),
    (0.95, 1.6448536269514722),
    (0.975, 1.959963984540054),
    (0.99, 2.3263478740408408),
)


def normal_quantile(p: float) -> float:
    """Standard normal quantile, valid for p strictly inside (0, 1)."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must be in (0, 1), got {p}")
    return float(ndtri(p))


def normal_cdf(x: float) -> float:
    return float(ndtr(x))


@dataclass(frozen=True)
class DistortionMeasure:
    """One member of the supported distortion family.

    kind: 'var', 'es', 'dualpower', 'gini', 'pht', or 'wang'
    param: risk level p for var/es, distortion parameter beta otherwise
    """

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown distortion kind {self.kind!r}")
        p = self.param
        if self.kind in ("var", "es") and not 0.0 < p < 1.0:
            raise DomainError(f"{self.kind} level must be in (0, 1), got {p}")
        if self.kind == "dualpower" and p < 1.0:
            raise DomainError(f"dual-power exponent must be >= 1, got {p}")
        if self.kind == "gini" and not 0.0 <= p <= 1.0:
            raise DomainError(f"gini parameter must be in [0, 1], got {p}")
        if self.kind == "pht" and not 0.0 <= p < 1.0:
            raise DomainError(f"pht parameter must be in [0, 1), got {p}")
        if self.kind == "wang" and p < 0.0:
            raise DomainError(f"wang parameter must be >= 0, got {p}")

    @classmethod
    def var(cls, p: float) -> "DistortionMeasure":
        return cls("var", p)

    @classmethod
    def es(cls, p: float) -> "DistortionMeasure":
        return cls("es", p)

    @classmethod
    def dual_power(cls, beta: float) -> "DistortionMeasure":
        return cls("dualpower", beta)

    @classmethod
    def gini(cls, beta: float) -> "DistortionMeasure":
        return cls("gini", beta)

    @classmethod
    def pht(cls, beta: float) -> "DistortionMeasure":
        return cls("pht", beta)

    @classmethod
    def wang(cls, beta: float) -> "DistortionMeasure":
        return cls("wang", beta)

    def h(self, s):
        """Distortion function evaluated at survival level s in [0, 1]."""
        scalar = np.asarray(s).ndim == 0
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any((s < 0.0) | (s > 1.0)):
            raise DomainError("distortion argument must lie in [0, 1]")
        b = self.param
        if self.kind == "var":
            out = (s >= b).astype(float)
        elif self.kind == "es":
            out = np.minimum(s / (1.0 - b), 1.0)
        elif self.kind == "dualpower":
            out = 1.0 - (1.0 - s) ** b
        elif self.kind == "gini":
            out = (1.0 + b) * s - b * s * s
        elif self.kind == "pht":
            out = s ** (1.0 - b)
        else:  # wang
            out = np.empty_like(s)
            inner = (s > 0.0) & (s < 1.0)
            out[inner] = ndtr(ndtri(s[inner]) + b)
            out[s <= 0.0] = 0.0
            out[s >= 1.0] = 1.0
        return float(out[0]) if scalar else out

    def h_prime(self, s):
        """Derivative of h on (0, 1); undefined for the var kind."""
        s = np.asarray(s, dtype=float)
        b = self.param
        if self.kind == "var":
            raise DomainError("var distortion has no density")
        if self.kind == "es":
            return np.where(s < 1.0 - b, 1.0 / (1.0 - b), 0.0)
        if self.kind == "dualpower":
            return b * (1.0 - s) ** (b - 1.0)
        if self.kind == "gini":
            return (1.0 + b) - 2.0 * b * s
        if self.kind == "pht":
            return (1.0 - b) * s ** (-b)
        z = ndtri(s)
        return np.exp(0.5 * z * z - 0.5 * (z + b) ** 2)

    def phi_normal(self) -> float:
        """phi_h of a standard normal variable (cached per measure)."""
        return _phi_normal_cached(self.kind, self.param)

    def describe(self) -> str:
        return f"{self.kind}:{self.param:g}"


@lru_cache(maxsize=256)
def _phi_normal_cached(kind: str, param: float) -> float:
    if kind == "var":
        return normal_quantile(param)
    if kind == "es":
        z = normal_quantile(param)
        return float(np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi) / (1.0 - param))
    if kind == "wang":
        # Choquet shift property: distorting a normal by wang(beta) moves
        # its mean by exactly beta.
        return float(param)
    return phi_normal_by_quadrature(DistortionMeasure(kind, param))


def phi_normal_by_quadrature(measure: DistortionMeasure) -> float:
    """phi_h(Z) as a Stieltjes integral against h', for smooth h.

    The integration variable t is substituted with the normal survival
    level t = P(Z > z), which turns the quantile factor into z and keeps
    the integrand smooth at both endpoints.
    """
    if measure.kind == "var":
        raise DomainError("var distortion is a pure jump; use the closed form")
    b = measure.param

    def integrand(z):
        dens = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        if measure.kind == "wang":
            # merge h' into the density so neither factor overflows
            return z * np.exp(-0.5 * (z - b) ** 2) / np.sqrt(2.0 * np.pi)
        if dens == 0.0:
            return 0.0
        s = ndtr(-z)
        if measure.kind == "es":
            hp = 1.0 / (1.0 - b) if s < 1.0 - b else 0.0
        elif measure.kind == "dualpower":
            hp = b * ndtr(z) ** (b - 1.0)
        elif measure.kind == "gini":
            hp = (1.0 + b) - 2.0 * b * s
        else:  # pht
            hp = (1.0 - b) * s ** (-b) if s > 0.0 else 0.0
        return z * hp * dens

    pieces = []
    if measure.kind == "es":
        # h' jumps at the var threshold; split the axis there
        zp = normal_quantile(b)
        pieces = [(-np.inf, zp), (zp, np.inf)]
    else:
        pieces = [(-np.inf, np.inf)]
    total = 0.0
    for a, c in pieces:
        value, abserr = integrate.quad(integrand, a, c, epsabs=1e-12,
                                       epsrel=1e-10, limit=300)
        if abserr > 1e-8 * max(1.0, abs(value)):
            raise NumericalFailure(
                f"phi quadrature for {measure.describe()} error {abserr:g}"
            )
        total += value
    return float(total)


def parse_measure(text: str) -> DistortionMeasure:
    """Parse 'kind:param' strings such as 'var:0.75' or 'wang:0.5'."""
    parts = text.strip().lower().split(":")
    if len(parts) != 2:
        raise DomainError(
            f"measure must look like 'var:0.75', got {text!r}"
        )
    kind, raw = parts
    try:
        param = float(raw)
    except ValueError:
        raise DomainError(f"measure parameter is not a number: {raw!r}") from None
    return DistortionMeasure(kind=kind, param=param)
