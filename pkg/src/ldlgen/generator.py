"""Markovian generator assembly and the scattering-theory cross-checks.

The Heisenberg generator acts as

    Theta0(X) = Psi(X) - (1/2){Psi(1), X} + i[H, X]

with a completely positive part Psi(X) = sum_j w_j L_j^+ X L_j whose
weights are manifestly nonnegative: each is
2 * w_grid * exp(-beta E) rho_eps(E) * pi rho_eps'(E + omega), where the
last factor is Re gamma evaluated exactly from the density (never from
the principal-value quadrature), so Kraus positivity carries no PV noise.

The drift Gamma is assembled twice: directly from the diagonal R blocks,
and through the energy-resolved scattering components t^{eps,eps}(E)
(the partial thermal expectation of the one-particle scattering
operator, diagonally projected); the two routes must agree.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ValidationError
from .model import complex_matrix_from_json, complex_matrix_to_json

_PI = math.pi


def _support_nodes(bath, eps):
    """Grid nodes and trapezoid weights where rho_eps is nonzero."""
    prof = bath.density(eps)
    E = bath.grid.nodes
    w = bath.grid.weights
    rho = prof(E)
    mask = rho > 0
    return E[mask], w[mask], rho[mask]


def check_grid_coverage(spec, spectral):
    """The grid must cover each density support shifted by every Bohr frequency."""
    grid = spec.bath.grid
    missing = []
    for omega in spectral.bohr:
        for eps in (0, 1):
            a, b = spec.bath.density(eps).support
            if not grid.covers(a + omega, b + omega):
                missing.append((eps, float(omega)))
    if missing:
        detail = ", ".join(f"support of rho{e} shifted by {w:+g}" for e, w in missing)
        raise ValidationError(f"energy grid does not cover: {detail}")


def drift(tm):
    """Gamma = -sum_eps integral dE exp(-beta E) rho_eps(E) R^{eps,eps}_{0,0}(E)."""
    spec = tm.spec
    out = np.zeros((spec.dim, spec.dim), dtype=complex)
    for eps in (0, 1):
        nodes, wts, rho = _support_nodes(spec.bath, eps)
        for E, w, r in zip(nodes, wts, rho):
            mu = math.exp(-spec.beta * E) * r
            out -= (w * mu) * tm.r_coefficient(eps, eps, 0.0, 0.0, float(E))
    return out


def drift_from_t_operator(tm, diagonal_projection=True):
    """Gamma through the one-particle scattering components.

    Computes i * (thermal partial expectation of the scattering operator)
    = -sum_eps integral dE exp(-beta E) rho_eps(E) t^{eps,eps}(E) and
    projects onto the level diagonal.  With diagonal_projection=False the
    bare partial expectation is returned (for the single-Bohr-block
    special case it already equals the drift).
    """
    spec = tm.spec
    m = np.zeros((spec.dim, spec.dim), dtype=complex)
    for eps in (0, 1):
        nodes, wts, rho = _support_nodes(spec.bath, eps)
        for E, w, r in zip(nodes, wts, rho):
            mu = math.exp(-spec.beta * E) * r
            t_comp = np.zeros((spec.dim, spec.dim), dtype=complex)
            for omega in tm.bohr:
                t_comp += tm.r_coefficient(eps, eps, float(omega), 0.0, float(E))
            m -= (w * mu) * t_comp
    if not diagonal_projection:
        return m
    out = np.zeros_like(m)
    for _, proj in tm.spectral.levels:
        out += proj @ m @ proj
    return out


def theta_map(tm, X, eps1, eps2, omega1, omega2, E):
    """Structure map of the pre-averaged Heisenberg equation:

    X R^{e1,e2}_{w1,w2} + (R^{e2,e1}_{w2,w1})^+ X
      + 2 sum_{e,w} Re gamma_e(E+w) (R^{e,e1}_{w,w1})^+ X R^{e,e2}_{w,w2}
    """
    X = np.asarray(X, dtype=complex)
    r12 = tm.r_coefficient(eps1, eps2, omega1, omega2, E)
    r21 = tm.r_coefficient(eps2, eps1, omega2, omega1, E)
    out = X @ r12 + r21.conj().T @ X
    bath = tm.spec.bath
    for eps in (0, 1):
        for omega in tm.bohr:
            re_g = _PI * bath.density(eps)(E + float(omega))
            if re_g == 0.0:
                continue
            ra = tm.r_coefficient(eps, eps1, float(omega), omega1, E)
            rb = tm.r_coefficient(eps, eps2, float(omega), omega2, E)
            out += (2.0 * re_g) * (ra.conj().T @ X @ rb)
    return out


@dataclass
class GKSLGenerator:
    """Drift, effective Hamiltonian and weighted Kraus family.

    kraus holds (weight, operator) pairs realizing
    Psi(X) = sum_j weight_j operator_j^+ X operator_j.
    """

    drift: np.ndarray
    hamiltonian: np.ndarray
    kraus: list = field(repr=False)
    grid: object = None

    @property
    def dim(self):
        return self.hamiltonian.shape[0]

    @cached_property
    def psi_one(self):
        """Psi(1) = sum_j w_j L_j^+ L_j."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for w, L in self.kraus:
            out += w * (L.conj().T @ L)
        return out

    def psi(self, X):
        X = np.asarray(X, dtype=complex)
        out = np.zeros_like(X)
        for w, L in self.kraus:
            out += w * (L.conj().T @ X @ L)
        return out

    def apply(self, X):
        return apply_generator(self, X)

    def compressed(self, threshold=1e-12):
        """Equivalent generator whose Kraus family has at most dim^2 members.

        Eigendecomposes the Choi matrix of Psi and keeps eigenvalues above
        threshold * max eigenvalue; Psi, and hence the generator, is
        unchanged up to the truncation.
        """
        c = choi_matrix(self)
        evals, evecs = np.linalg.eigh(c)
        cut = threshold * max(float(evals.max()), 0.0) if evals.size else 0.0
        kraus = []
        for val, vec in zip(evals, evecs.T):
            if val > cut and val > 0.0:
                kraus.append((float(val), vec.reshape(self.dim, self.dim)))
        return GKSLGenerator(drift=self.drift, hamiltonian=self.hamiltonian,
                             kraus=kraus, grid=self.grid)

    def to_json(self):
        payload = {
            "dim": self.dim,
            "drift": complex_matrix_to_json(self.drift),
            "hamiltonian": complex_matrix_to_json(self.hamiltonian),
            "kraus": [
                {"weight": float(w), "operator": complex_matrix_to_json(L)}
                for w, L in self.kraus
            ],
        }
        if self.grid is not None:
            payload["grid"] = self.grid.to_json()
        return payload

    @classmethod
    def from_json(cls, obj):
        kraus = [
            (float(entry["weight"]), complex_matrix_from_json(entry["operator"], "kraus operator"))
            for entry in obj["kraus"]
        ]
        return cls(
            drift=complex_matrix_from_json(obj["drift"], "drift"),
            hamiltonian=complex_matrix_from_json(obj["hamiltonian"], "hamiltonian"),
            kraus=kraus,
        )


def build_generator(tm):
    """Assemble the GKSL generator by trapezoid quadrature over the grid.

    Kraus entries are indexed per (eps, eps', omega, grid node); zero
    weights are dropped.  H and Gamma come from the diagonal R blocks on
    the same nodes, so the Lindblad-form identities hold at the level of
    the discretized integrals, not merely in the continuum limit.
    """
    spec = tm.spec
    check_grid_coverage(spec, tm.spectral)
    d = spec.dim
    bath = spec.bath
    ham = np.zeros((d, d), dtype=complex)
    gamma_drift = np.zeros((d, d), dtype=complex)
    kraus = []
    for eps in (0, 1):
        nodes, wts, rho = _support_nodes(bath, eps)
        for E, w, r in zip(nodes, wts, rho):
            E = float(E)
            mu = math.exp(-spec.beta * E) * r
            r00 = tm.r_coefficient(eps, eps, 0.0, 0.0, E)
            ham += (w * mu) * (r00.conj().T - r00) / 2j
            gamma_drift -= (w * mu) * r00
            for eps_p in (0, 1):
                for omega in tm.bohr:
                    re_g = _PI * bath.density(eps_p)(E + float(omega))
                    if re_g <= 0.0:
                        continue
                    weight = 2.0 * w * mu * re_g
                    if weight <= 0.0:
                        continue
                    L = tm.r_coefficient(eps_p, eps, float(omega), 0.0, E)
                    if L.any():
                        kraus.append((float(weight), L))
    return GKSLGenerator(drift=gamma_drift, hamiltonian=ham, kraus=kraus,
                         grid=bath.grid)


def apply_generator(gen, X):
    """Theta0(X) = Psi(X) - (1/2){Psi(1), X} + i[H, X]."""
    X = np.asarray(X, dtype=complex)
    if X.shape != (gen.dim, gen.dim):
        raise ValidationError("operator dimension does not match the generator")
    p1 = gen.psi_one
    h = gen.hamiltonian
    return gen.psi(X) - 0.5 * (p1 @ X + X @ p1) + 1j * (h @ X - X @ h)


def dual_generator_matrix(gen):
    """Matrix of the Schroedinger-picture generator on row-major vec(rho):

    rho -> sum_j w_j L_j rho L_j^+ - (1/2){Psi(1), rho} - i[H, rho].

    With row-major vectorization the map rho -> A rho B has matrix
    kron(A, B^T).
    """
    d = gen.dim
    eye = np.eye(d)
    out = np.zeros((d * d, d * d), dtype=complex)
    for w, L in gen.kraus:
        out += w * np.kron(L, L.conj())
    p1 = gen.psi_one
    out -= 0.5 * (np.kron(p1, eye) + np.kron(eye, p1.T))
    h = gen.hamiltonian
    out -= 1j * (np.kron(h, eye) - np.kron(eye, h.T))
    return out


def heisenberg_generator_matrix(gen):
    """Matrix of Theta0 itself on row-major vec(X) (dual of the above)."""
    d = gen.dim
    eye = np.eye(d)
    out = np.zeros((d * d, d * d), dtype=complex)
    for w, L in gen.kraus:
        out += w * np.kron(L.conj().T, L.T)
    p1 = gen.psi_one
    out -= 0.5 * (np.kron(p1, eye) + np.kron(eye, p1.T))
    h = gen.hamiltonian
    out += 1j * (np.kron(h, eye) - np.kron(eye, h.T))
    return out


def choi_matrix(gen):
    """Choi matrix of the completely positive part Psi.

    C = sum_j w_j |vec L_j><vec L_j| (row-major vec), Hermitian and
    positive semidefinite whenever the assembled weights are nonnegative;
    its rank counts independent Kraus directions.
    """
    d = gen.dim
    c = np.zeros((d * d, d * d), dtype=complex)
    for w, L in gen.kraus:
        v = L.reshape(-1)
        c += w * np.outer(v, v.conj())
    return c
