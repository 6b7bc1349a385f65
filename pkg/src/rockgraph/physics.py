"""Classical effective-medium models for two-phase isotropic elasticity.

Implements isotropic stiffness assembly and its Voigt-average inverse,
Voigt-Reuss and Hashin-Shtrikman bounds, a differential effective medium
(DEM) model with penny-crack inclusion geometry, and aspect-ratio fitting
against labeled samples. All moduli are in GPa, porosities are fractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError


@dataclass(frozen=True)
class ElasticModuli:
    """Bulk (k) and shear (mu) moduli in GPa; both finite and >= 0."""

    k: float
    mu: float

    def __post_init__(self):
        k, mu = float(self.k), float(self.mu)
        if not (math.isfinite(k) and math.isfinite(mu)):
            raise ValueError(f"moduli must be finite, got ({self.k}, {self.mu})")
        if k < 0 or mu < 0:
            raise ValueError(f"moduli must be >= 0, got ({self.k}, {self.mu})")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "mu", mu)


VACUUM = ElasticModuli(0.0, 0.0)


def isotropic_stiffness(m: ElasticModuli) -> np.ndarray:
    """6x6 Voigt stiffness matrix of an isotropic medium.

    Diagonal normal terms K + 4mu/3, off-diagonal normal terms K - 2mu/3,
    shear diagonal mu.
    """
    c = np.zeros((6, 6))
    lam = m.k - 2.0 * m.mu / 3.0
    c[:3, :3] = lam
    c[0, 0] = c[1, 1] = c[2, 2] = m.k + 4.0 * m.mu / 3.0
    c[3, 3] = c[4, 4] = c[5, 5] = m.mu
    return c


def voigt_average(c: np.ndarray) -> ElasticModuli:
    """Effective (K, mu) extracted from a 6x6 Voigt stiffness matrix.

    K  = [(C11+C22+C33) + 2(C12+C13+C23)] / 9
    mu = [(C11+C22+C33) - (C12+C23+C13) + 3(C44+C55+C66)] / 15

    The shear divisor 15 makes this the exact inverse of
    isotropic_stiffness for isotropic media.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (6, 6):
        raise ValueError(f"expected a 6x6 matrix, got shape {c.shape}")
    if not np.allclose(c, c.T, atol=1e-9):
        raise ValueError("stiffness matrix must be symmetric")
    diag = c[0, 0] + c[1, 1] + c[2, 2]
    off = c[0, 1] + c[0, 2] + c[1, 2]
    shear = c[3, 3] + c[4, 4] + c[5, 5]
    k = (diag + 2.0 * off) / 9.0
    mu = (diag - off + 3.0 * shear) / 15.0
    return ElasticModuli(k, mu)


def voigt_reuss_bounds(mineral: ElasticModuli, pore: ElasticModuli,
                       phi: float) -> tuple[ElasticModuli, ElasticModuli]:
    """Arithmetic (Voigt, upper) and harmonic (Reuss, lower) mixing bounds.

    Inputs
        mineral: solid-phase moduli in GPa
        pore: pore-fill moduli in GPa (vacuum allowed)
        phi: pore volume fraction (0-1)
    Returns
        (upper, lower) ElasticModuli pair
    """
    if not (0.0 <= phi <= 1.0):
        raise ValueError(f"phi must be in [0, 1], got {phi}")

    def _voigt(a, b):
        return (1.0 - phi) * a + phi * b

    def _reuss(a, b):
        if phi == 0.0:
            return a
        if phi == 1.0:
            return b
        if b == 0.0:
            return 0.0  # vacuum limit: harmonic mean collapses
        return 1.0 / ((1.0 - phi) / a + phi / b)

    upper = ElasticModuli(_voigt(mineral.k, pore.k), _voigt(mineral.mu, pore.mu))
    lower = ElasticModuli(_reuss(mineral.k, pore.k), _reuss(mineral.mu, pore.mu))
    return upper, lower


def hashin_shtrikman(mineral: ElasticModuli, pore: ElasticModuli,
                     phi: float) -> tuple[ElasticModuli, ElasticModuli]:
    """Hashin-Shtrikman bounds for a two-phase isotropic mixture.

    Inputs
        mineral: stiff-phase moduli in GPa
        pore: soft-phase moduli in GPa (vacuum allowed)
        phi: soft-phase volume fraction (0-1)
    Returns
        (upper, lower) ElasticModuli pair

    Singular terms for a vacuum pore are handled by their analytic limits:
    both lower bounds go to 0 for any phi > 0.
    """
    if not (0.0 <= phi <= 1.0):
        raise ValueError(f"phi must be in [0, 1], got {phi}")
    if phi == 0.0:
        return mineral, mineral
    if phi == 1.0:
        return pore, pore
    km, gm = mineral.k, mineral.mu
    kp, gp = pore.k, pore.mu

    if kp == km:
        k_hi = km
    else:
        k_hi = km + phi / (1.0 / (kp - km) + (1.0 - phi) / (km + 4.0 * gm / 3.0))
    if gp == gm:
        g_hi = gm
    else:
        g_hi = gm + phi / (
            1.0 / (gp - gm)
            + 2.0 * (1.0 - phi) * (km + 2.0 * gm) / (5.0 * gm * (km + 4.0 * gm / 3.0))
        )

    if kp + 4.0 * gp / 3.0 == 0.0:
        k_lo = 0.0  # vacuum pore limit
    elif km == kp:
        k_lo = kp
    else:
        k_lo = kp + (1.0 - phi) / (1.0 / (km - kp) + phi / (kp + 4.0 * gp / 3.0))
    if gp == 0.0:
        g_lo = 0.0  # vacuum or fluid pore limit
    elif gm == gp:
        g_lo = gp
    else:
        g_lo = gp + (1.0 - phi) / (
            1.0 / (gm - gp)
            + 2.0 * phi * (kp + 2.0 * gp) / (5.0 * gp * (kp + 4.0 * gp / 3.0))
        )
    return ElasticModuli(k_hi, g_hi), ElasticModuli(k_lo, g_lo)


def shear_factor(m: ElasticModuli) -> float:
    """Auxiliary shear factor mu*(3K + mu)/(3K + 4mu) of the host medium."""
    return m.mu * (3.0 * m.k + m.mu) / (3.0 * m.k + 4.0 * m.mu)


def penny_pq(background: ElasticModuli, inclusion: ElasticModuli,
             alpha: float) -> tuple[float, float]:
    """Geometric P and Q factors for a penny-shaped (oblate) inclusion.

    Inputs
        background: host moduli in GPa
        inclusion: inclusion moduli in GPa
        alpha: crack aspect ratio (0-1]
    Returns
        (P, Q) factors relating inclusion addition to moduli change
    """
    km, gm = background.k, background.mu
    ki, gi = inclusion.k, inclusion.mu
    beta = shear_factor(background)
    pab = math.pi * alpha * beta
    p = (km + 4.0 * gi / 3.0) / (ki + 4.0 * gi / 3.0 + pab)
    q = (1.0
         + 8.0 * gm / (4.0 * gi + math.pi * alpha * (gm + 2.0 * beta))
         + 2.0 * (ki + 2.0 * (gi + gm) / 3.0) / (ki + 4.0 * gi / 3.0 + pab)) / 5.0
    return p, q


@dataclass(frozen=True)
class DemParams:
    """Configuration for the incremental-inclusion (DEM) model.

    mineral: background matrix moduli in GPa (must be > 0)
    inclusion: pore-fill moduli in GPa (vacuum by default)
    aspect_ratio: penny-crack aspect ratio in (0, 1]
    rtol / max_step: adaptive integrator controls
    """

    mineral: ElasticModuli
    inclusion: ElasticModuli = VACUUM
    aspect_ratio: float = 0.25
    rtol: float = 1e-8
    max_step: float = field(default=np.inf)

    def __post_init__(self):
        if not (0.0 < self.aspect_ratio <= 1.0):
            raise ValueError(f"aspect_ratio must be in (0, 1], got {self.aspect_ratio}")
        if self.mineral.k <= 0 or self.mineral.mu <= 0:
            raise ValueError("mineral moduli must be positive")
        if not (self.rtol > 0):
            raise ValueError("rtol must be > 0")


def dem_moduli(params: DemParams, phi: float) -> ElasticModuli:
    """Effective moduli from incremental inclusion addition up to porosity phi.

    Integrates
        dK*/dy  = (K2 - K*)  P / (1 - y)
        dmu*/dy = (mu2 - mu*) Q / (1 - y)
    from y = 0 (pure mineral) to y = phi with an adaptive embedded
    Runge-Kutta pair, where P and Q are the penny-crack factors evaluated
    with the current effective medium as host. Results are clamped at >= 0.
    """
    if not (0.0 <= phi < 1.0):
        raise ValueError(f"phi must be in [0, 1), got {phi}")
    if phi == 0.0:
        return params.mineral
    ki, gi = params.inclusion.k, params.inclusion.mu
    alpha = params.aspect_ratio

    def rhs(y, state):
        k, mu = state
        p, q = penny_pq(ElasticModuli(max(k, 0.0), max(mu, 0.0)),
                        params.inclusion, alpha)
        return [(ki - k) * p / (1.0 - y), (gi - mu) * q / (1.0 - y)]

    sol = solve_ivp(rhs, (0.0, phi), [params.mineral.k, params.mineral.mu],
                    method="RK45", rtol=params.rtol, atol=1e-12,
                    max_step=params.max_step)
    if not sol.success:
        raise IntegrationError(
            f"DEM integration failed at phi={sol.t[-1]:.6g}: {sol.message}",
            last_phi=float(sol.t[-1]), last_state=tuple(sol.y[:, -1]),
        )
    k, mu = sol.y[:, -1]
    return ElasticModuli(max(float(k), 0.0), max(float(mu), 0.0))


def _r2(pred: np.ndarray, truth: np.ndarray) -> float:
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    ss_tot = float(((truth - truth.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("labels have zero variance, R^2 undefined")
    ss_res = float(((truth - pred) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class AspectRatioFit:
    alpha: float
    r2_k: float
    r2_mu: float


def fit_aspect_ratio(samples, alpha_grid, mineral: ElasticModuli,
                     inclusion: ElasticModuli = VACUUM,
                     rtol: float = 1e-8) -> AspectRatioFit:
    """Grid-search the aspect ratio maximizing mean R^2 of DEM predictions.

    Inputs
        samples: iterable of (phi, ElasticModuli) labeled pairs
        alpha_grid: candidate aspect ratios, each in (0, 1]
        mineral / inclusion: constituent moduli in GPa
    Returns
        AspectRatioFit with the winning alpha (ties go to the smaller one)
        and its per-modulus R^2 scores.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least 2 labeled samples")
    grid = sorted(float(a) for a in alpha_grid)
    if not grid:
        raise ValueError("alpha_grid must be nonempty")
    if grid[0] <= 0.0 or grid[-1] > 1.0:
        raise ValueError("alpha_grid values must lie in (0, 1]")
    phis = np.array([s[0] for s in samples], dtype=np.float64)
    truth_k = np.array([s[1].k for s in samples])
    truth_mu = np.array([s[1].mu for s in samples])
    if np.all(truth_k == truth_k[0]) or np.all(truth_mu == truth_mu[0]):
        raise ValueError("labels have zero variance, R^2 undefined")

    best = None
    for alpha in grid:
        params = DemParams(mineral=mineral, inclusion=inclusion,
                           aspect_ratio=alpha, rtol=rtol)
        preds = [dem_moduli(params, phi) for phi in phis]
        r2_k = _r2(np.array([p.k for p in preds]), truth_k)
        r2_mu = _r2(np.array([p.mu for p in preds]), truth_mu)
        score = 0.5 * (r2_k + r2_mu)
        if best is None or score > best[0]:
            best = (score, AspectRatioFit(alpha, r2_k, r2_mu))
    return best[1]
