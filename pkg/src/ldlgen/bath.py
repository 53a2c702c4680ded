"""Reservoir description through its two energy densities.

The reservoir enters every in-scope formula only through the scalar
densities ``rho_eps(E)`` (``eps`` = 0, 1), their half-line Fourier
transform ``gamma_eps(E)`` and the thermal weight
``mu_inv(eps, E) = exp(-beta*E) * rho_eps(E)``.

``gamma`` is evaluated through the identity

    gamma(E) = pi*rho(E) + i * PV-integral of rho(E') / (E - E') dE'

which follows from the half-line time integral of the autocorrelation
with a vanishing convergence factor.  The principal value is computed by
singularity subtraction plus the analytic log term, so the real part is
exactly ``pi*rho(E)`` by construction.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import NumericError, ValidationError

GAMMA_QUAD_ABS_TOL = 1e-10
_EDGE_EPS = 1e-12
_MEMO_DECIMALS = 12


@dataclass(frozen=True)
class DensityProfile:
    """One spectral density rho(E) >= 0 with compact support [a, b].

    kind : "rect" (constant ``height``), "bump" (``amplitude*(E-a)*(b-E)``)
           or "table" (linear interpolation of sorted samples, endpoint
           values required to be 0 so rho is continuous).
    """

    kind: str
    a: float
    b: float
    height: float = 0.0
    amplitude: float = 0.0
    energies: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("rect", "bump", "table"):
            raise ValidationError(f"unknown density profile kind {self.kind!r}")
        if not self.a < self.b:
            raise ValidationError("profile support requires a < b")
        if self.kind == "rect" and self.height < 0:
            raise ValidationError("rect profile height must be >= 0")
        if self.kind == "bump" and self.amplitude < 0:
            raise ValidationError("bump profile amplitude must be >= 0")
        if self.kind == "table":
            e = np.asarray(self.energies, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if e.size < 2 or e.size != v.size:
                raise ValidationError("table profile needs matching energies/values, len >= 2")
            if np.any(np.diff(e) <= 0):
                raise ValidationError("table energies must be strictly increasing")
            if abs(e[0] - self.a) > 1e-12 or abs(e[-1] - self.b) > 1e-12:
                raise ValidationError("table energies must span [a, b]")
            if np.any(v < 0):
                raise ValidationError("table values must be >= 0")
            if v[0] != 0.0 or v[-1] != 0.0:
                raise ValidationError("table values must vanish at both support endpoints")

    @classmethod
    def rect(cls, a, b, height):
        return cls("rect", float(a), float(b), height=float(height))

    @classmethod
    def bump(cls, a, b, amplitude):
        return cls("bump", float(a), float(b), amplitude=float(amplitude))

    @classmethod
    def table(cls, energies, values):
        energies = tuple(float(e) for e in energies)
        values = tuple(float(v) for v in values)
        return cls("table", energies[0], energies[-1], energies=energies, values=values)

    @property
    def support(self):
        return (self.a, self.b)

    @property
    def continuous_at_edges(self):
        # rect jumps at its edges; bump and table vanish there by construction
        return self.kind != "rect"

    def breakpoints(self):
        """Interior points where rho is not smooth (table knots)."""
        if self.kind == "table":
            return [e for e in self.energies[1:-1]]
        return []

    def __call__(self, E):
        E = np.asarray(E, dtype=float)
        inside = (E >= self.a) & (E <= self.b)
        if self.kind == "rect":
            out = np.where(inside, self.height, 0.0)
        elif self.kind == "bump":
            out = np.where(inside, self.amplitude * (E - self.a) * (self.b - E), 0.0)
        else:
            out = np.where(inside, np.interp(E, self.energies, self.values), 0.0)
        if out.ndim == 0:
            return float(out)
        return out

    def norm_squared(self, n_nodes=400):
        """Integral of rho over its support (the squared form-factor norm)."""
        x, w = gauss_legendre_nodes(self.a, self.b, n_nodes)
        return float(np.dot(w, self(x)))

    def to_json(self):
        if self.kind == "rect":
            return {"kind": "rect", "a": self.a, "b": self.b, "height": self.height}
        if self.kind == "bump":
            return {"kind": "bump", "a": self.a, "b": self.b, "amplitude": self.amplitude}
        return {"kind": "table", "energies": list(self.energies), "values": list(self.values)}

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ValidationError("density profile must be an object with a 'kind' key")
        kind = obj["kind"]
        keys = set(obj.keys())
        if kind == "rect":
            if keys != {"kind", "a", "b", "height"}:
                raise ValidationError("rect profile takes exactly keys kind, a, b, height")
            return cls.rect(obj["a"], obj["b"], obj["height"])
        if kind == "bump":
            if keys != {"kind", "a", "b", "amplitude"}:
                raise ValidationError("bump profile takes exactly keys kind, a, b, amplitude")
            return cls.bump(obj["a"], obj["b"], obj["amplitude"])
        if kind == "table":
            if keys != {"kind", "energies", "values"}:
                raise ValidationError("table profile takes exactly keys kind, energies, values")
            return cls.table(obj["energies"], obj["values"])
        raise ValidationError(f"unknown density profile kind {kind!r}")


def gauss_legendre_nodes(a, b, n):
    """Gauss-Legendre nodes and weights mapped to [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@dataclass(frozen=True)
class EnergyGrid:
    """Uniform energy grid carrying trapezoid weights for the dE integrals."""

    e_min: float
    e_max: float
    points: int

    def __post_init__(self):
        if self.points < 16:
            raise ValidationError("energy grid needs at least 16 points")
        if not self.e_min < self.e_max:
            raise ValidationError("energy grid requires e_min < e_max")

    @property
    def nodes(self):
        return np.linspace(self.e_min, self.e_max, self.points)

    @property
    def spacing(self):
        return (self.e_max - self.e_min) / (self.points - 1)

    @property
    def weights(self):
        w = np.full(self.points, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def covers(self, a, b):
        return self.e_min <= a and b <= self.e_max

    def to_json(self):
        return {"min": self.e_min, "max": self.e_max, "points": self.points}


@dataclass(frozen=True)
class BathSpec:
    """The two interaction densities plus the quadrature grid."""

    rho0: DensityProfile
    rho1: DensityProfile
    grid: EnergyGrid

    def density(self, eps):
        if eps == 0:
            return self.rho0
        if eps == 1:
            return self.rho1
        raise ValidationError("density index must be 0 or 1")

    @property
    def support_gap(self):
        (a0, b0), (a1, b1) = self.rho0.support, self.rho1.support
        if b0 <= a1:
            return a1 - b0
        if b1 <= a0:
            return a0 - b1
        return -min(b0 - a1, b1 - a0)


def validate_bath(bath, beta):
    """Check nonnegativity, disjoint supports and grid coverage.

    Disjoint supports realize the requirement that the thermal
    cross-correlation of the two form factors vanishes at all times.
    Raises ValidationError on any violation, otherwise returns a report.
    """
    if beta <= 0:
        raise ValidationError("beta must be > 0")
    for eps in (0, 1):
        prof = bath.density(eps)
        a, b = prof.support
        sample = np.linspace(a, b, 1001)
        if np.any(prof(sample) < 0):
            raise ValidationError(f"rho{eps} takes negative values on its support")
    gap = bath.support_gap
    if gap <= 0:
        raise ValidationError(
            "supports of rho0 and rho1 overlap; the model requires disjoint "
            "energy supports so the thermal cross-correlation of the form "
            "factors vanishes for all times"
        )
    covered = all(bath.grid.covers(*bath.density(eps).support) for eps in (0, 1))
    if not covered:
        raise ValidationError("energy grid does not cover both density supports")
    return {
        "nonnegative": True,
        "disjoint_supports": True,
        "support_gap": gap,
        "grid_covers_supports": True,
        "grid": bath.grid.to_json(),
    }


def mu_inv(bath, eps, E, beta):
    """Reciprocal thermal density exp(-beta*E) * rho_eps(E).

    Only the reciprocal is ever needed; the density itself diverges off
    support and is never formed.
    """
    return math.exp(-beta * E) * bath.density(eps)(E)


def k_inner_product(bath, X, Y, omega, beta, n_nodes=None):
    """Inner product of rank-one operators |g_f><g_u| and |g_v><g_w|.

    X and Y are index pairs (f, u) and (v, w) with entries in {0, 1}.
    Evaluates 2*pi * delta_{f,v} * delta_{u,w} *
    integral of rho_f(E) * exp(-beta*(E-omega)) * rho_u(E-omega) dE
    by quadrature on the bath grid.
    """
    f, u = X
    v, w = Y
    if f != v or u != w:
        return 0.0 + 0.0j
    rho_f = bath.density(f)
    rho_u = bath.density(u)
    # trapezoid at the grid's spacing over the exact support overlap, so
    # discontinuous (rect) supports do not leak weight past their edges
    lo = max(rho_f.a, rho_u.a + omega)
    hi = min(rho_f.b, rho_u.b + omega)
    if lo >= hi:
        return 0.0 + 0.0j
    n = max(int(round((hi - lo) / bath.grid.spacing)) + 1, 16)
    E = np.linspace(lo, hi, n)
    wts = np.full(n, (hi - lo) / (n - 1))
    wts[0] *= 0.5
    wts[-1] *= 0.5
    integrand = rho_f(E) * np.exp(-beta * (E - omega)) * rho_u(E - omega)
    return complex(2.0 * math.pi * np.dot(wts, integrand))


class GammaTable:
    """Memoized evaluations of gamma_eps(E) for the two densities.

    Values are cached keyed by (eps, E rounded to 1e-12); the generator
    assembly re-requests gamma at O(grid x Bohr) points.  Entries are
    inserted under the interpreter lock, so concurrent read-only use after
    a single-threaded warm-up is safe.
    """

    def __init__(self, bath):
        self.bath = bath
        self._memo = {}

    def gamma(self, eps, E):
        key = (eps, round(float(E), _MEMO_DECIMALS))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        prof = self.bath.density(eps)
        value = complex(math.pi * prof(E), _pv_integral(prof, float(E)))
        self._memo[key] = value
        return value

    def __call__(self, eps, E):
        return self.gamma(eps, E)


def _pv_integral(prof, E):
    """PV integral of rho(E') / (E - E') dE' over the support of rho."""
    a, b = prof.support
    pts = [p for p in prof.breakpoints() if a < p < b]
    if E < a - _EDGE_EPS or E > b + _EDGE_EPS:
        val, _ = quad(lambda x: prof(x) / (E - x), a, b,
                      points=pts or None, limit=200,
                      epsabs=GAMMA_QUAD_ABS_TOL, epsrel=1e-10)
        return val

    at_edge = min(abs(E - a), abs(E - b)) <= _EDGE_EPS * (1.0 + abs(E))
    if at_edge and not prof.continuous_at_edges:
        raise NumericError(
            "gamma evaluated exactly at a rect support edge where the density "
            "jumps; the imaginary part diverges logarithmically there -- "
            "offset E away from the edge"
        )

    rho_E = prof(E)
    guard = 1e-9 * (1.0 + abs(E))
    h = 1e-7 * (b - a)
    lo = max(E - h, a)
    hi = min(E + h, b)
    slope = (prof(hi) - prof(lo)) / (hi - lo)

    def subtracted(x):
        dx = E - x
        if abs(dx) < guard:
            return -slope
        return (prof(x) - rho_E) / dx

    inner = sorted(set(pts + [E])) if a < E < b else (pts or None)
    val, _ = quad(subtracted, a, b, points=inner, limit=200,
                  epsabs=GAMMA_QUAD_ABS_TOL, epsrel=1e-10)
    if rho_E != 0.0:
        val += rho_E * math.log(abs((E - a) / (E - b)))
    return val
