"""Closed-form line solitons and their compact-support cut-offs.

For 2 < p < 6 the mass-mu minimizer of the line energy
    0.5 * int |u'|^2 - (1/p) * int |u|^p
is (up to sign and translation) the sech-power profile
    phi(x) = A * sech(b x)^s,    s = 2/(p-2),
which solves u'' + |u|^(p-2) u = lam u with
    lam = s^2 b^2,    A^(p-2) = lam * p / 2.
Everything here reduces to moments of sech powers,
    int_{-T}^{T} sech(y)^m dy = B(1/2, m/2) * I_{tanh^2 T}(1/2, m/2),
so masses, energies, Lagrangian sign points and the certified cut-off
energy gap are all evaluated without discretization. The unit-mass
multiplier is pinned by a scalar root-find on the closed-form mass curve
and scaled exactly to other masses via lam(mu) = lam(1) * mu^(2 beta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import beta as beta_fn, betainc


class SolitonRangeError(ValueError):
    """p outside the subcritical window (2, 6) or nonpositive mass."""


class MassBelowThresholdError(ValueError):
    """Cut-off construction attempted below its admissible mass."""


def _check_p(p: float):
    if not 2.0 < p < 6.0:
        raise SolitonRangeError(f"p must lie in (2, 6), got {p}")


def alpha_exponent(p: float) -> float:
    _check_p(p)
    return 2.0 / (6.0 - p)


def beta_exponent(p: float) -> float:
    _check_p(p)
    return (p - 2.0) / (6.0 - p)


def sech_moment(m: float, half_width: float | None = None) -> float:
    """Integral of sech(y)^m over [-T, T] (whole line when T is None)."""
    full = beta_fn(0.5, 0.5 * m)
    if half_width is None:
        return float(full)
    t = math.tanh(half_width)
    return float(full * betainc(0.5, 0.5 * m, t * t))


def _amplitude(p: float, lam: float) -> float:
    return (0.5 * p * lam) ** (1.0 / (p - 2.0))

def _width_rate(p: float, lam: float) -> float:
    return math.sqrt(lam) * (p - 2.0) / 2.0

def _mass_of_multiplier(p: float, lam: float) -> float:
    s = 2.0 / (p - 2.0)
    a = _amplitude(p, lam)
    return a * a / _width_rate(p, lam) * sech_moment(2.0 * s)


_unit_multiplier_cache: dict[float, float] = {}

def unit_multiplier(p: float) -> float:
    """Multiplier of the unit-mass soliton, from a root-find on the
    closed-form mass curve (monotone in lam for p < 6)."""
    _check_p(p)
    lam = _unit_multiplier_cache.get(p)
    if lam is None:
        lo, hi = 1e-8, 1.0
        while _mass_of_multiplier(p, lo) > 1.0:
            lo *= 0.125
        while _mass_of_multiplier(p, hi) < 1.0:
            hi *= 8.0
        lam = brentq(lambda t: _mass_of_multiplier(p, t) - 1.0, lo, hi,
                     xtol=1e-300, rtol=8.9e-16)
        _unit_multiplier_cache[p] = lam
    return lam


@dataclass(frozen=True)
class SolitonParams:
    """Constants of the mass-mu soliton; callable as the profile itself."""

    p: float
    mu: float
    alpha: float
    beta: float
    amplitude: float       # A
    width_rate: float      # b
    multiplier: float      # lam > 0
    unit_amplitude: float  # A at mu = 1
    unit_width_rate: float # b at mu = 1

    @property
    def sech_exponent(self) -> float:
        return 2.0 / (self.p - 2.0)

    def __call__(self, x):
        s = self.sech_exponent
        return self.amplitude * np.cosh(self.width_rate * np.asarray(x)) ** (-s)

    def derivative(self, x):
        x = np.asarray(x)
        s = self.sech_exponent
        b = self.width_rate
        return -self.amplitude * s * b * np.cosh(b * x) ** (-s) * np.tanh(b * x)

    def second_derivative(self, x):
        x = np.asarray(x)
        s = self.sech_exponent
        b = self.width_rate
        sech_s = np.cosh(b * x) ** (-s)
        sech_2 = np.cosh(b * x) ** (-2.0)
        return self.amplitude * b * b * s * (s * sech_s - (s + 1.0) * sech_s * sech_2)

    def ode_residual(self, x):
        """u'' + |u|^(p-2) u - lam u, identically zero for the soliton."""
        u = self(x)
        return self.second_derivative(x) + np.abs(u) ** (self.p - 2.0) * u \
            - self.multiplier * u

    def lagrangian_density(self, x):
        du = self.derivative(x)
        u = self(x)
        return 0.5 * du * du - np.abs(u) ** self.p / self.p

    def power_integral(self, q: float, half_width: float | None = None) -> float:
        """Integral of phi^q over [-T, T] (whole line when T is None)."""
        m = q * self.sech_exponent
        w = None if half_width is None else self.width_rate * half_width
        return self.amplitude ** q / self.width_rate * sech_moment(m, w)

    def gradient_sq_integral(self, half_width: float | None = None) -> float:
        """Integral of (phi')^2 over [-T, T]."""
        s = self.sech_exponent
        b = self.width_rate
        w = None if half_width is None else b * half_width
        m = 2.0 * s
        tanh_moment = sech_moment(m, w) - sech_moment(m + 2.0, w)
        return self.amplitude ** 2 * s * s * b * tanh_moment

    @property
    def mass(self) -> float:
        return self.power_integral(2.0)


def soliton_params(p: float, mu: float) -> SolitonParams:
    """Constants of the mass-mu line soliton."""
    _check_p(p)
    if mu <= 0:
        raise SolitonRangeError(f"mass must be positive, got {mu}")
    lam1 = unit_multiplier(p)
    beta = beta_exponent(p)
    lam = lam1 * mu ** (2.0 * beta)
    return SolitonParams(
        p=p,
        mu=mu,
        alpha=alpha_exponent(p),
        beta=beta,
        amplitude=_amplitude(p, lam),
        width_rate=_width_rate(p, lam),
        multiplier=lam,
        unit_amplitude=_amplitude(p, lam1),
        unit_width_rate=_width_rate(p, lam1),
    )


def soliton_energy(params: SolitonParams) -> float:
    """Line energy of the soliton (negative)."""
    kinetic = 0.5 * params.gradient_sq_integral()
    potential = params.power_integral(params.p) / params.p
    return kinetic - potential


def energy_conservation_residual(params: SolitonParams, x) -> np.ndarray:
    """0.5 |phi'|^2 + (1/p)|phi|^p - (lam/2)|phi|^2, identically zero."""
    du = params.derivative(x)
    u = params(x)
    return (0.5 * du * du + np.abs(u) ** params.p / params.p
            - 0.5 * params.multiplier * u * u)


def sign_point(params: SolitonParams) -> float:
    """The x > 0 where the Lagrangian density changes sign:
    density >= 0 iff |x| >= sign_point. Solves |phi_1(t)|^(p-2) = p lam / 4
    in closed form and scales by mu^-beta."""
    p = params.p
    lam1 = unit_multiplier(p)
    c1 = _amplitude(p, lam1)
    # phi_1^(p-2) = C^(p-2) sech^2(c_p t): threshold on sech^2.
    val = p * lam1 / (4.0 * c1 ** (p - 2.0))
    if not 0.0 < val < 1.0:
        raise SolitonRangeError("degenerate Lagrangian sign condition")
    x1 = math.acosh(1.0 / math.sqrt(val)) / _width_rate(p, lam1)
    return x1 * params.mu ** (-params.beta)


@dataclass(frozen=True)
class CutoffSoliton:
    """Mass-mu profile supported on [0, ell], built by chopping the
    soliton at tau = ell/2, taking the positive part and rescaling back
    to mass mu. `certified_gap` is the exact intermediate bound
    phi_mu(tau) * int_{-tau}^{tau} phi_mu^(p-1), which certifies
        energy(psi) <= soliton_energy + certified_gap < 0.
    """

    p: float
    mu: float
    ell: float
    tau: float
    inner: SolitonParams   # the mass-mu soliton being cut
    cut_value: float       # phi_mu(tau)
    v_mass: float          # squared L2 norm of (phi - cut)^+
    scale: float           # sqrt(mu) / ||v||
    certified_gap: float
    soliton_level: float   # energy of phi_mu
    energy_upper_bound: float  # soliton_level + certified_gap

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= self.ell)
        vals = np.where(
            inside,
            np.maximum(self.inner(x - self.tau) - self.cut_value, 0.0),
            0.0,
        )
        return self.scale * vals

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > 0.0) & (x < self.ell)
        return self.scale * np.where(inside, self.inner.derivative(x - self.tau), 0.0)

    @property
    def mass(self) -> float:
        return self.mu

    def energy_quadrature(self) -> float:
        """Line energy of the profile by adaptive quadrature (the profile
        is smooth strictly inside its support)."""
        from scipy.integrate import quad

        def density(x):
            d = self.derivative(x)
            u = self(x)
            return 0.5 * d * d - np.abs(u) ** self.p / self.p

        val, _ = quad(density, 0.0, self.ell, points=[self.tau], limit=200)
        return float(val)


def cutoff_soliton(p: float, mu: float, ell: float) -> CutoffSoliton:
    """Compact-support approximation of the mass-mu soliton on [0, ell].

    Requires the Lagrangian sign point to fit inside (sign_point <= ell/2)
    and the certified upper bound on the energy to be negative; otherwise
    the mass is below the admissible threshold for this support length.
    """
    if ell <= 0:
        raise SolitonRangeError(f"support length must be positive, got {ell}")
    params = soliton_params(p, mu)
    tau = 0.5 * ell
    xmu = sign_point(params)
    gap = float(params(tau)) * params.power_integral(p - 1.0, tau)
    level = soliton_energy(params)
    upper = level + gap
    if xmu > tau or upper >= 0.0:
        raise MassBelowThresholdError(
            f"mass {mu} is below the cut-off threshold for ell={ell} "
            f"(sign point {xmu:.6g} vs tau={tau:.6g}, bound {upper:.6g})"
        )
    cut = float(params(tau))
    v_mass = (params.power_integral(2.0, tau)
              - 2.0 * cut * params.power_integral(1.0, tau)
              + 2.0 * tau * cut * cut)
    return CutoffSoliton(
        p=p, mu=mu, ell=ell, tau=tau, inner=params,
        cut_value=cut, v_mass=v_mass,
        scale=math.sqrt(mu / v_mass),
        certified_gap=gap, soliton_level=level, energy_upper_bound=upper,
    )


def certified_gap(p: float, mu: float, ell: float) -> float:
    """The cut-off energy gap alone (no admissibility check)."""
    params = soliton_params(p, mu)
    tau = 0.5 * ell
    return float(params(tau)) * params.power_integral(p - 1.0, tau)


def _cutoff_admissible(p: float, mu: float, ell: float) -> bool:
    params = soliton_params(p, mu)
    tau = 0.5 * ell
    if sign_point(params) > tau:
        return False
    return soliton_energy(params) + certified_gap(p, mu, ell) < 0.0


def mass_threshold(p: float, ell: float, rel_tol: float = 1e-6) -> float:
    """Smallest mass (to `rel_tol` relative) admitting the cut-off
    construction on a support of length ell."""
    _check_p(p)
    if ell <= 0:
        raise SolitonRangeError(f"support length must be positive, got {ell}")
    beta = beta_exponent(p)
    x1 = sign_point(soliton_params(p, 1.0))
    mu_geom = (2.0 * x1 / ell) ** (1.0 / beta)  # sign point fits iff mu >= this
    if _cutoff_admissible(p, mu_geom, ell):
        return mu_geom
    lo, hi = mu_geom, max(mu_geom, 1e-6)
    while not _cutoff_admissible(p, hi, ell):
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("cut-off threshold search failed to bracket")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if _cutoff_admissible(p, mid, ell):
            hi = mid
        else:
            lo = mid
    return hi


def gn_line_ratio(p: float) -> float:
    """Gagliardo-Nirenberg ratio of the line soliton family,
    ||u||_p^p / (||u||_2^(p/2+1) ||u'||_2^(p/2-1)); scale-invariant, so a
    single number per p, realized with the unit-mass profile."""
    params = soliton_params(p, 1.0)
    num = params.power_integral(p)
    grad = params.gradient_sq_integral()
    return num / (params.mass ** ((p + 2.0) / 4.0) * grad ** ((p - 2.0) / 4.0))
