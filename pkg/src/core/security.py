"""
Security Analysis Module

Per-point and ensemble security quantities for the entanglement-based
protocol with post-selection and direct reconciliation:

- Bob's outcome density and error rate given Alice's announced magnitude
- Alice-Bob mutual information
- overlap of Eve's two conditional states and the Holevo bound (collective attack)
- Alice-Eve mutual information (individual attack)
- post-selection boundaries and ensemble averages
- a numeric Wigner-function oracle for the closed-form overlap

Units: quadratures are normalized to shot noise (N0 = 1). In these units a
pure Gaussian state with covariance diag(V, 1/V) peaks at 1/(2*pi) and state
overlaps are 4*pi * integral(W1 * W2). With N0 = 1/4 the same quantities
read 2/pi and pi * integral(W1 * W2).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize, special, stats

from src.core.gaussian_source import ChannelModel, SourceModel

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)

ENSEMBLE_ORDER = 96
BOUNDARY_Y_MAX = 20.0
BOUNDARY_XTOL = 1e-9

# Half-width of the overlap integration box, in standard deviations.
_OVERLAP_SPAN = 12.0
_ENSEMBLE_SPAN = 12.0


class Attack(str, Enum):
    COLLECTIVE = "collective"
    INDIVIDUAL = "individual"


class IntegrationError(RuntimeError):
    """Numeric quadrature did not reach the requested accuracy."""


def _out(x):
    """Return a plain float for 0-d results, the array otherwise."""
    return float(x) if np.ndim(x) == 0 else x


# ── Context ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SecurityContext:
    """Channel and source parameters a security evaluation depends on."""

    eta: float
    delta: float
    V: float
    attack: Attack = Attack.COLLECTIVE

    def __post_init__(self) -> None:
        if not (0.0 < self.eta <= 1.0):
            raise ValueError(f"Transmittivity must satisfy 0 < eta <= 1, got eta={self.eta}")
        if self.delta < 0.0:
            raise ValueError(f"Excess noise must be non-negative, got delta={self.delta}")
        if self.V < 1.0:
            raise ValueError(f"Source variance must satisfy V >= 1, got V={self.V}")
        if self.V_B_N <= 0.0:
            raise ValueError("Bob's noise variance must be positive")

    @classmethod
    def from_models(
        cls,
        source: SourceModel,
        channel: ChannelModel,
        attack: Attack = Attack.COLLECTIVE,
    ) -> SecurityContext:
        return cls(eta=channel.eta, delta=channel.delta, V=source.V, attack=Attack(attack))

    @property
    def V_s(self) -> float:
        return 1.0 / self.V

    @property
    def V_B_N(self) -> float:
        """Bob's noise variance: squeezed part, loss vacuum and excess noise."""
        return self.eta * self.V_s + 1.0 - self.eta + self.delta

    def with_attack(self, attack: Attack) -> SecurityContext:
        return replace(self, attack=Attack(attack))


# ── Entropies ───────────────────────────────────────────────────────

def binary_entropy(p):
    """h2(p) in bits, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    q = np.where(p < 1.0, p, 0.0)
    upper = np.where(p < 1.0, (1.0 - q) * np.log1p(-q), 0.0)
    return _out(-(special.xlogy(p, p) + upper) / LN2)


def _holevo_deficit(f):
    """1 - chi(f), accurate when f is small and chi is close to one."""
    f = np.asarray(f, dtype=float)
    g = np.where(f < 1.0, f, 0.0)
    lower = np.where(f < 1.0, (1.0 - g) * np.log1p(-g), 0.0)
    return np.clip(((1.0 + f) * np.log1p(f) + lower) / (2.0 * LN2), 0.0, 1.0)


def _individual_deficit(f):
    """1 - I_AE(f), written in d = 1 - sqrt(1 - f^2)."""
    f = np.asarray(f, dtype=float)
    s = np.sqrt((1.0 - f) * (1.0 + f))
    d = f * f / (1.0 + s)
    deficit = 0.5 * d - 0.5 * (2.0 - d) * np.log1p(-0.5 * d) / LN2 - 0.5 * special.xlogy(d, d) / LN2
    return np.clip(deficit, 0.0, 1.0)


def _check_unit_interval(name: str, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def _check_non_negative(name: str, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError(f"{name} must be non-negative")
    return arr


# ── Bob ─────────────────────────────────────────────────────────────

def bob_outcome_density(y_B, y_A, ctx: SecurityContext):
    """Gaussian density of Bob's outcome, mean sqrt(eta) y_A and variance V_B_N."""
    y_B = np.asarray(y_B, dtype=float)
    y_A = np.asarray(y_A, dtype=float)
    var = ctx.V_B_N
    dev = y_B - math.sqrt(ctx.eta) * y_A
    return _out(np.exp(-dev * dev / (2.0 * var)) / math.sqrt(2.0 * math.pi * var))


def bob_error_rate(y_A_abs, y_B_abs, ctx: SecurityContext):
    """p = 1 / [1 + exp(2 sqrt(eta) |y_A| |y_B| / V_B_N)]."""
    a = _check_non_negative("y_A_abs", y_A_abs)
    b = _check_non_negative("y_B_abs", y_B_abs)
    z = 2.0 * math.sqrt(ctx.eta) * a * b / ctx.V_B_N
    return _out(special.expit(-z))


def mutual_info_ab(p):
    """I_AB = 1 - h2(p) bits per symbol."""
    p = _check_unit_interval("p", p)
    return _out(1.0 - np.asarray(binary_entropy(p)))


# ── Eve ─────────────────────────────────────────────────────────────

def overlap_f(y_A_abs, ctx: SecurityContext):
    """Overlap of Eve's two conditional states, exp[-(1-eta) y_A^2 / (2 V_s)]."""
    a = _check_non_negative("y_A_abs", y_A_abs)
    return _out(np.exp(-(1.0 - ctx.eta) * a * a / (2.0 * ctx.V_s)))


def holevo(f):
    """chi = h2((1+f)/2), the entropy of Eve's average ancilla state.

    The two ancilla states are pure, so chi = S(rho_bar), whose eigenvalues
    are |c0|^2 = (1+f)/2 and |c1|^2 = (1-f)/2.
    """
    f = _check_unit_interval("f", f)
    return _out(1.0 - _holevo_deficit(f))


def eve_info_individual(f):
    """I_AE for an eavesdropper measuring each ancilla separately."""
    f = _check_unit_interval("f", f)
    return _out(1.0 - _individual_deficit(f))


# ── Point assessment ────────────────────────────────────────────────

@dataclass(frozen=True)
class PointAssessment:
    y_A_abs: float
    y_B_abs: float
    p: float
    f: float
    i_ab: float
    chi: float
    i_ae: float
    k_collective: float
    delta_i_individual: float

    def net(self, attack: Attack) -> float:
        return self.k_collective if Attack(attack) is Attack.COLLECTIVE else self.delta_i_individual


@dataclass
class PointAssessments:
    """Column-wise assessments for many points."""

    y_A_abs: np.ndarray
    y_B_abs: np.ndarray
    p: np.ndarray
    f: np.ndarray
    i_ab: np.ndarray
    chi: np.ndarray
    i_ae: np.ndarray
    k_collective: np.ndarray
    delta_i_individual: np.ndarray

    def __len__(self) -> int:
        return len(self.p)

    def net(self, attack: Attack) -> np.ndarray:
        return self.k_collective if Attack(attack) is Attack.COLLECTIVE else self.delta_i_individual

    def eve_info(self, attack: Attack) -> np.ndarray:
        return self.chi if Attack(attack) is Attack.COLLECTIVE else self.i_ae

    def subset(self, mask: np.ndarray) -> PointAssessments:
        return PointAssessments(**{name: getattr(self, name)[mask] for name in self.__dataclass_fields__})

    def __getitem__(self, i: int) -> PointAssessment:
        return PointAssessment(**{name: float(getattr(self, name)[i]) for name in self.__dataclass_fields__})


def assess_points(y_A_abs, y_B_abs, ctx: SecurityContext) -> PointAssessments:
    """Vectorized security quantities for arrays of announced magnitudes."""
    a = np.atleast_1d(_check_non_negative("y_A_abs", y_A_abs)).astype(float)
    b = np.atleast_1d(_check_non_negative("y_B_abs", y_B_abs)).astype(float)
    a, b = np.broadcast_arrays(a, b)

    p = np.asarray(bob_error_rate(a, b, ctx))
    f = np.asarray(overlap_f(a, ctx))
    h_p = np.asarray(binary_entropy(p))
    chi_deficit = _holevo_deficit(f)
    ae_deficit = _individual_deficit(f)

    return PointAssessments(
        y_A_abs=a.copy(),
        y_B_abs=b.copy(),
        p=p,
        f=f,
        i_ab=1.0 - h_p,
        chi=1.0 - chi_deficit,
        i_ae=1.0 - ae_deficit,
        k_collective=chi_deficit - h_p,
        delta_i_individual=ae_deficit - h_p,
    )


def point_assess(y_A_abs: float, y_B_abs: float, ctx: SecurityContext) -> PointAssessment:
    """All security quantities at one announced point; K = I_AB - chi, dI = I_AB - I_AE."""
    return assess_points(y_A_abs, y_B_abs, ctx)[0]


def net_rate(y_A_abs, y_B_abs, ctx: SecurityContext, attack: Optional[Attack] = None):
    """Net information rate under ``attack`` (defaults to the context's)."""
    attack = Attack(attack) if attack is not None else ctx.attack
    rates = assess_points(y_A_abs, y_B_abs, ctx).net(attack)
    if np.ndim(y_A_abs) == 0 and np.ndim(y_B_abs) == 0:
        return float(rates[0])
    return rates


def boundary(
    y_A_abs: float,
    ctx: SecurityContext,
    attack: Optional[Attack] = None,
    y_max: float = BOUNDARY_Y_MAX,
) -> Optional[float]:
    """Smallest |y_B| with a non-negative net rate at this |y_A|.

    The net rate grows monotonically with |y_B|, so bisection applies.
    Returns None when no |y_B| in [0, y_max] reaches a non-negative rate.
    """
    if y_A_abs <= 0:
        raise ValueError(f"Boundary needs y_A_abs > 0, got {y_A_abs}")
    attack = Attack(attack) if attack is not None else ctx.attack

    def rate(y_b: float) -> float:
        return net_rate(y_A_abs, y_b, ctx, attack)

    if rate(0.0) >= 0.0:
        return 0.0
    if rate(y_max) < 0.0:
        return None
    return float(optimize.bisect(rate, 0.0, y_max, xtol=BOUNDARY_XTOL))


# ── Ensembles ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class EnsembleRates:
    """Expected bits per symbol over the raw (unselected) data."""

    i_ab: float
    chi: float
    i_ae: float
    attack: Attack = Attack.COLLECTIVE

    @property
    def eve_info(self) -> float:
        return self.chi if self.attack is Attack.COLLECTIVE else self.i_ae

    @property
    def net(self) -> float:
        return self.i_ab - self.eve_info


def _legendre_panels(edges: np.ndarray, x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on consecutive panels along the last axis of ``edges``."""
    lo = edges[..., :-1, None]
    half = 0.5 * (edges[..., 1:, None] - lo)
    nodes = lo + half * (x + 1.0)
    weights = half * w
    shape = nodes.shape[:-2] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def ensemble_rates(ctx: SecurityContext, V: Optional[float] = None, order: int = ENSEMBLE_ORDER) -> EnsembleRates:
    """Average I_AB, chi and I_AE over Y_A ~ N(0, V - 1/V), Y_B | Y_A ~ N(sqrt(eta) Y_A, V_B_N).

    Per-point quantities are averaged (not evaluated at a representative
    point). They depend on |Y_A| and |Y_B| only and have a kink where
    either crosses zero, so the outer integral runs over Y_A >= 0 and the
    inner one is split at Y_B = 0. Each smooth piece gets ``order``
    Gauss-Legendre nodes.
    """
    if V is not None and V != ctx.V:
        ctx = replace(ctx, V=V)
    if ctx.V <= 1.0:
        raise ValueError(f"Ensemble averages need a modulated source, V > 1, got V={ctx.V}")
    x, w = leggauss(order)

    sigma_a = math.sqrt(ctx.V - 1.0 / ctx.V)
    sigma_b = math.sqrt(ctx.V_B_N)
    y_a, w_a = _legendre_panels(np.array([0.0, sigma_a, _ENSEMBLE_SPAN * sigma_a]), x, w)
    w_a = 2.0 * w_a * stats.norm.pdf(y_a, scale=sigma_a)

    mean_b = math.sqrt(ctx.eta) * y_a
    lo = mean_b - _ENSEMBLE_SPAN * sigma_b
    hi = mean_b + _ENSEMBLE_SPAN * sigma_b
    y_b, w_b = _legendre_panels(np.stack([lo, np.maximum(lo, 0.0), hi], axis=-1), x, w)
    w_b = w_b * stats.norm.pdf(y_b, loc=mean_b[:, None], scale=sigma_b)

    pts = assess_points(np.broadcast_to(y_a[:, None], y_b.shape).ravel(), np.abs(y_b).ravel(), ctx)
    flat = (w_a[:, None] * w_b).ravel()
    rates = EnsembleRates(
        i_ab=float(np.sum(flat * pts.i_ab)),
        chi=float(np.sum(flat * pts.chi)),
        i_ae=float(np.sum(flat * pts.i_ae)),
        attack=ctx.attack,
    )
    logger.debug(
        f"Ensemble rates (eta={ctx.eta}, delta={ctx.delta}, V={ctx.V:.3f}): "
        f"I_AB={rates.i_ab:.4f} chi={rates.chi:.4f} I_AE={rates.i_ae:.4f}"
    )
    return rates


@dataclass(frozen=True)
class EnsembleEstimate:
    """Monte-Carlo means with their standard errors."""

    i_ab: float
    chi: float
    i_ae: float
    i_ab_se: float
    chi_se: float
    i_ae_se: float
    samples: int


def ensemble_rates_mc(ctx: SecurityContext, n: int, seed: int) -> EnsembleEstimate:
    """Monte-Carlo cross-check of :func:`ensemble_rates`."""
    if n < 2:
        raise ValueError(f"Need at least two samples, got n={n}")
    rng = np.random.default_rng(seed)
    y_a = rng.normal(0.0, math.sqrt(ctx.V - 1.0 / ctx.V), size=n)
    y_b = math.sqrt(ctx.eta) * y_a + rng.normal(0.0, math.sqrt(ctx.V_B_N), size=n)
    pts = assess_points(np.abs(y_a), np.abs(y_b), ctx)
    return EnsembleEstimate(
        i_ab=float(pts.i_ab.mean()),
        chi=float(pts.chi.mean()),
        i_ae=float(pts.i_ae.mean()),
        i_ab_se=float(stats.sem(pts.i_ab)),
        chi_se=float(stats.sem(pts.chi)),
        i_ae_se=float(stats.sem(pts.i_ae)),
        samples=n,
    )


# ── Wigner oracle ───────────────────────────────────────────────────

@dataclass(frozen=True)
class WignerSpec:
    """Projected squeezed state: covariance diag(V, 1/V) around ``center``."""

    center: tuple[float, float]
    V: float

    def __post_init__(self) -> None:
        if self.V < 1.0:
            raise ValueError(f"Wigner variance parameter must satisfy V >= 1, got V={self.V}")


def _log_wigner(x, y, spec: WignerSpec):
    x0, y0 = spec.center
    dx = np.asarray(x, dtype=float) - x0
    dy = np.asarray(y, dtype=float) - y0
    return -math.log(2.0 * math.pi) - dx * dx / (2.0 * spec.V) - spec.V * dy * dy / 2.0


def wigner_density(pt, spec: WignerSpec):
    """Wigner function of the projected squeezed state at ``pt = (X, Y)``."""
    x, y = pt
    return _out(np.exp(_log_wigner(x, y, spec)))


def eve_state_specs(y_A_abs: float, ctx: SecurityContext) -> tuple[WignerSpec, WignerSpec]:
    """Eve's two conditional states, displaced to +/- sqrt(1-eta) y_A."""
    y0 = math.sqrt(1.0 - ctx.eta) * y_A_abs
    return WignerSpec(center=(0.0, y0), V=ctx.V), WignerSpec(center=(0.0, -y0), V=ctx.V)


def overlap_numeric(spec_plus: WignerSpec, spec_minus: WignerSpec) -> float:
    """|<Psi0|Psi1>|^2 = 4 pi * integral W(X, Y) W(X, -Y) dX dY, by 2-D quadrature.

    The integrand is rescaled by its peak value before integrating so that
    tiny overlaps keep their relative accuracy.
    """
    (x_p, y_p), (x_m, y_m) = spec_plus.center, spec_minus.center
    scale = max(1.0, abs(y_p))
    if spec_plus.V != spec_minus.V or x_p != x_m or abs(y_p + y_m) > 1e-12 * scale:
        raise ValueError("Overlap oracle needs two states that differ only by the sign of Y0")

    V = spec_plus.V
    mid_x, mid_y = x_p, 0.5 * (y_p + y_m)
    peak = float(_log_wigner(mid_x, mid_y, spec_plus) + _log_wigner(mid_x, mid_y, spec_minus))

    half_x = _OVERLAP_SPAN * math.sqrt(V / 2.0)
    half_y = _OVERLAP_SPAN * math.sqrt(1.0 / (2.0 * V))

    # log W+ + log W- - peak, expanded for scalar speed
    offset = -2.0 * math.log(2.0 * math.pi) - peak

    def integrand(y: float, x: float) -> float:
        dx = x - x_p
        return math.exp(offset - dx * dx / V - 0.5 * V * ((y - y_p) ** 2 + (y - y_m) ** 2))

    value, abserr = integrate.dblquad(
        integrand,
        mid_x - half_x, mid_x + half_x,
        mid_y - half_y, mid_y + half_y,
        epsabs=1e-13, epsrel=1e-11,
    )
    if not math.isfinite(value) or value <= 0.0 or abserr > 1e-8 * value:
        raise IntegrationError(
            f"Overlap quadrature failed (value={value}, error estimate={abserr}, V={V}, Y0={y_p})"
        )
    return 4.0 * math.pi * math.exp(peak) * value
