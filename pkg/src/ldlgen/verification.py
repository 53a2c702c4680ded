"""Numerical checks of the scalar distributional limits and the identity suite.

The rescaled oscillatory kernel exp(i(t'-t)X/lambda^2)/lambda^2 is paired
against smooth test functions f(t) g(t') h(X) and compared with its
lambda -> 0 limit, 2 pi delta(t'-t) delta(X) (times the Kronecker factor
in the frequency labels); restricting t' < t yields the causal variant
whose energy kernel is the resolvent 1/(i(X - i0)), i.e. the pairing
pi h(0) - i PV(h/X).  The double time integral is computed in the
substituted variable u = (t'-t)/lambda^2, where the X quadrature
produces the Fourier transform of h: the Gaussian envelopes damp the
u integrand, so the cost is uniform in lambda.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .bath import gauss_legendre_nodes, validate_bath
from .errors import ValidationError
from .model import block_transfer


@dataclass(frozen=True)
class GaussianPacket:
    """poly(x - center) * exp(-(x - center)^2 / (2 sigma^2)); coeffs low-to-high."""

    center: float = 0.0
    sigma: float = 1.0
    coeffs: tuple = (1.0,)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        z = x - self.center
        poly = np.zeros_like(z)
        for c in reversed(self.coeffs):
            poly = poly * z + c
        out = poly * np.exp(-z * z / (2.0 * self.sigma ** 2))
        return float(out) if out.ndim == 0 else out

    def extent(self, n_sigma=10.0):
        pad = n_sigma * self.sigma
        return (self.center - pad, self.center + pad)


@dataclass
class LimitCheckReport:
    lambdas: list
    errors: list
    limit_value: complex
    monotone: bool
    values: list = field(default_factory=list)

    def __post_init__(self):
        if any(l2 >= l1 for l1, l2 in zip(self.lambdas, self.lambdas[1:])):
            raise ValidationError("lambdas must be strictly decreasing")
        if not all(math.isfinite(e) for e in self.errors):
            raise ValidationError("limit-check errors must be finite")


def _composite_gl(a, b, n_panels, nodes_per_panel=8):
    edges = np.linspace(a, b, n_panels + 1)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre_nodes(lo, hi, nodes_per_panel)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def _symmetric_u_grid(u_max, n_panels):
    """Panelled grid on [-u_max, u_max] built as a mirror pair, so the
    causal half-integral uses exactly the left half of the full grid."""
    x_r, w_r = _composite_gl(0.0, u_max, n_panels)
    x_l, w_l = -x_r[::-1], w_r[::-1]
    return (x_l, w_l), (x_r, w_r)


def _fourier_of_h(h, u):
    a, b = h.extent()
    x, w = _composite_gl(a, b, 48)
    hw = h(x) * w
    out = np.zeros(u.size, dtype=complex)
    for chunk in range(0, u.size, 512):
        sl = slice(chunk, chunk + 512)
        out[sl] = np.exp(1j * np.outer(u[sl], x)) @ hw
    return out


def _overlap_vector(f, g, lam, u, mismatch_freq=0.0):
    """G(u) = integral f(t) g(t + lam^2 u) [exp(i t' mismatch / lam^2)] dt
    with t' = t + lam^2 u; returned for every u node."""
    af, bf = f.extent()
    if mismatch_freq:
        rate = abs(mismatch_freq) / lam ** 2
        n_panels = max(64, int(rate * (bf - af) / (2.0 * math.pi) * 4.0))
    else:
        n_panels = 64
    t, wt = _composite_gl(af, bf, n_panels)
    ft = f(t) * wt
    out = np.empty(u.size, dtype=complex)
    for k, uk in enumerate(u):
        tp = t + lam ** 2 * uk
        vals = ft * g(tp)
        if mismatch_freq:
            vals = vals * np.exp(1j * (mismatch_freq / lam ** 2) * tp)
        out[k] = vals.sum()
    return out


def _product_integral(f, g):
    af, bf = f.extent()
    t, wt = _composite_gl(af, bf, 64)
    return float(np.dot(wt, f(t) * g(t)))


def _pv_over_x(h):
    """PV integral of h(X)/X over the real line by singularity subtraction."""
    a, b = h.extent()
    lim = max(abs(a), abs(b))
    x, w = _composite_gl(-lim, lim, 64)
    h0 = h(0.0)
    guard = 1e-12 * lim
    vals = np.where(np.abs(x) > guard, (h(x) - h0) / np.where(x == 0, 1.0, x), 0.0)
    return float(np.dot(w, vals))


def _u_extent(h):
    # Fourier transform of a Gaussian-times-polynomial of width sigma decays
    # on the scale 1/sigma
    return 18.0 / h.sigma


def check_delta_limit(f, g, h, omega_match, lambdas, mismatch=1.0):
    """Pair the rescaled kernel with f, g, h for each lambda and compare
    against 2 pi h(0) * integral f g (matching frequencies) or 0."""
    lambdas = [float(l) for l in lambdas]
    u_max = _u_extent(h)
    (ul, wl), (ur, wr) = _symmetric_u_grid(u_max, 160)
    u = np.concatenate([ul, ur])
    wu = np.concatenate([wl, wr])
    hhat = _fourier_of_h(h, u)
    target = 2.0 * math.pi * h(0.0) * _product_integral(f, g) if omega_match else 0.0
    values, errors = [], []
    for lam in lambdas:
        freq = 0.0 if omega_match else mismatch
        gvec = _overlap_vector(f, g, lam, u, mismatch_freq=freq)
        j = complex(np.dot(wu, gvec * hhat))
        values.append(j)
        errors.append(abs(j - target))
    monotone = all(e2 < e1 for e1, e2 in zip(errors, errors[1:]))
    return LimitCheckReport(lambdas=lambdas, errors=errors,
                            limit_value=complex(target), monotone=monotone,
                            values=values)


def check_causal_delta_limit(f, g, h, lambdas):
    """Same pairing restricted to the ordered half t' < t; the limit pairs
    h with the resolvent kernel: integral f g * (pi h(0) - i PV(h/X))."""
    lambdas = [float(l) for l in lambdas]
    u_max = _u_extent(h)
    (ul, wl), _ = _symmetric_u_grid(u_max, 160)
    hhat = _fourier_of_h(h, ul)
    target = _product_integral(f, g) * complex(math.pi * h(0.0), -_pv_over_x(h))
    values, errors = [], []
    for lam in lambdas:
        gvec = _overlap_vector(f, g, lam, ul)
        j = complex(np.dot(wl, gvec * hhat))
        values.append(j)
        errors.append(abs(j - target))
    monotone = all(e2 < e1 for e1, e2 in zip(errors, errors[1:]))
    return LimitCheckReport(lambdas=lambdas, errors=errors,
                            limit_value=target, monotone=monotone, values=values)


def default_test_functions():
    """The shipped unit-Gaussian test functions (f = g makes the time
    autocorrelation even, pinning the causal/full ratio at exactly 1/2)."""
    f = GaussianPacket(center=0.0, sigma=1.0)
    return f, f, GaussianPacket(center=0.0, sigma=1.0)


# -- identity suite -----------------------------------------------------------


def _check(name, residual, tolerance):
    return {
        "check": name,
        "residual": float(residual),
        "tolerance": float(tolerance),
        "pass": bool(residual <= tolerance),
    }


def _rel(diff, ref):
    return diff / max(ref, 1e-300)


def _identity_checks(tm, rng):
    from . import generator as gen_mod

    d = tm.dim
    checks = []
    supports = [tm.spec.bath.density(e).support for e in (0, 1)]
    energies = []
    for a, b in supports:
        energies.extend(np.linspace(a, b, 5)[1:-1])

    # block-column residual / transfer / Neumann / index-set stability
    res_solve, res_transfer, res_neumann, res_stability = 0.0, 0.0, 0.0, 0.0
    for eps in (0, 1):
        for wp in tm.bohr:
            for E in energies[::2]:
                col = tm.solve_column(eps, float(wp), float(E))
                res_solve = max(res_solve, tm.column_residual(col))
                for off, blk in zip(col.offsets, col.blocks_list):
                    comps = block_transfer(blk, tm.spectral)
                    stray = sum(np.linalg.norm(m) for w, m in comps.items()
                                if abs(w - off) > tm.spectral.tolerance)
                    res_transfer = max(res_transfer, stray)
                ncol = tm.neumann_column(eps, float(wp), float(E))
                if ncol.converged:
                    for b1, b2 in zip(col.blocks_list, ncol.blocks_list):
                        diff = np.linalg.norm(b1 - b2)
                        res_neumann = max(res_neumann, _rel(diff, np.linalg.norm(b1)))
        wide = tm.solve_column(eps, 0.0, float(energies[0]), index_depth=2)
        base = tm.solve_column(eps, 0.0, float(energies[0]))
        for off, blk in zip(base.offsets, base.blocks_list):
            j = int(np.argmin(np.abs(wide.offsets - off)))
            res_stability = max(res_stability, float(np.linalg.norm(blk - wide.blocks_list[j])))
    checks.append(_check("block_column_residual", res_solve, 1e-12))
    checks.append(_check("block_column_transfer", res_transfer, 1e-12))
    checks.append(_check("neumann_vs_direct", res_neumann, 1e-10))
    checks.append(_check("index_set_stability", res_stability, 1e-12))

    # series identities: partial closed-form sums against the solve route;
    # a divergent series leaves a large residual and fails the check honestly
    res_series = 0.0
    for E in energies[::2]:
        comps = tm.t_components(float(E))
        for pair, key in (("00", (0, 0)), ("01", (0, 1)),
                          ("10", (1, 0)), ("11", (1, 1))):
            sums, _ = tm.appendix_partial_sums(pair, float(E))
            res_series = max(res_series, float(np.linalg.norm(sums[-1] - comps[key])))
    checks.append(_check("appendix_series_identity", res_series, 1e-10))

    # level-diagonal projection of the same-index R blocks
    res_diag = 0.0
    projs = [p for _, p in tm.spectral.levels]
    for E in energies[::2]:
        for eps in (0, 1):
            for w in tm.bohr:
                r = tm.r_coefficient(eps, eps, float(w), 0.0, float(E))
                diag = sum(p @ r @ p for p in projs)
                if abs(w) > tm.spectral.tolerance:
                    res_diag = max(res_diag, float(np.linalg.norm(diag)))
                else:
                    res_diag = max(res_diag, float(np.linalg.norm(diag - r)))
    checks.append(_check("diagonal_projection", res_diag, 1e-10))

    # drift identities and the Lindblad structure
    gamma_direct = gen_mod.drift(tm)
    gamma_via_t = gen_mod.drift_from_t_operator(tm)
    checks.append(_check("drift_vs_t_operator",
                         np.linalg.norm(gamma_direct - gamma_via_t), 1e-10))
    comm = gamma_direct @ tm.spec.h_system - tm.spec.h_system @ gamma_direct
    checks.append(_check("drift_commutes_with_h_system", np.linalg.norm(comm), 1e-10))
    if tm.spectral.is_rwa:
        bare = gen_mod.drift_from_t_operator(tm, diagonal_projection=False)
        checks.append(_check("rwa_full_trace_drift",
                             np.linalg.norm(gamma_direct - bare), 1e-10))

    gen = gen_mod.build_generator(tm)
    checks.append(_check("hamiltonian_hermitian",
                         np.linalg.norm(gen.hamiltonian - gen.hamiltonian.conj().T), 1e-12))
    checks.append(_check("hamiltonian_from_drift",
                         np.linalg.norm(gen.hamiltonian - (gen.drift - gen.drift.conj().T) / 2j),
                         1e-10))
    checks.append(_check("unitality",
                         np.linalg.norm(gen.psi_one - (gen.drift + gen.drift.conj().T)), 1e-10))
    res_rec = 0.0
    nodes_cache = {}
    for _ in range(20):
        x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        x = x + x.conj().T
        direct = gen.apply(x)
        three_term = _three_term_generator(tm, x, nodes_cache)
        res_rec = max(res_rec, float(np.linalg.norm(direct - three_term)))
    checks.append(_check("lindblad_reconstruction", res_rec, 1e-12))
    choi = gen_mod.choi_matrix(gen)
    min_eig = float(np.linalg.eigvalsh(choi).min())
    norm_choi = float(np.linalg.norm(choi, 2))
    checks.append(_check("choi_positive", max(0.0, -min_eig), 1e-10 * norm_choi))
    return checks


def _three_term_generator(tm, X, cache):
    """Theta0(X) summed directly from the three-term structure map under
    the same quadrature (independent arithmetic path from the Kraus form)."""
    from . import generator as gen_mod

    spec = tm.spec
    out = np.zeros_like(np.asarray(X, dtype=complex))
    for eps in (0, 1):
        if eps not in cache:
            cache[eps] = gen_mod._support_nodes(spec.bath, eps)
        nodes, wts, rho = cache[eps]
        for E, w, r in zip(nodes, wts, rho):
            mu = math.exp(-spec.beta * E) * r
            out += (w * mu) * gen_mod.theta_map(tm, X, eps, eps, 0.0, 0.0, float(E))
    return out


def _limit_checks():
    f, g, h = default_test_functions()
    lambdas = [0.4, 0.2, 0.1]
    checks = []
    rep = check_delta_limit(f, g, h, True, lambdas)
    scale = abs(rep.limit_value)
    ratios_ok = all(e2 <= 0.5 * e1 for e1, e2 in zip(rep.errors, rep.errors[1:]))
    checks.append(_check("delta_limit_final_error", rep.errors[-1] / scale, 5e-2))
    checks.append(_check("delta_limit_decay", 0.0 if (rep.monotone and ratios_ok) else 1.0, 0.5))
    crep = check_causal_delta_limit(f, g, h, lambdas)
    cscale = abs(crep.limit_value)
    cratios_ok = all(e2 <= 0.5 * e1 for e1, e2 in zip(crep.errors, crep.errors[1:]))
    checks.append(_check("causal_limit_final_error", crep.errors[-1] / cscale, 5e-2))
    checks.append(_check("causal_limit_decay", 0.0 if (crep.monotone and cratios_ok) else 1.0, 0.5))
    ratio = abs(crep.values[-1] / rep.values[-1] - 0.5)
    checks.append(_check("causal_half_ratio", ratio, 1e-3))
    return checks


def run_identity_suite(tm, which="all"):
    """Run the named checks at their stated tolerances.

    Refuses to run (raises ValidationError) when the bath violates the
    disjoint-support technical condition.  Returns a report dict with one
    {check, residual, tolerance, pass} entry per check, sorted by name.
    """
    if which not in ("identities", "limits", "all"):
        raise ValidationError("suite must be one of identities, limits, all")
    validate_bath(tm.spec.bath, tm.spec.beta)
    rng = np.random.default_rng(12345)
    checks = []
    if which in ("identities", "all"):
        checks.extend(_identity_checks(tm, rng))
    if which in ("limits", "all"):
        checks.extend(_limit_checks())
    checks.sort(key=lambda c: c["check"])
    return {"checks": checks, "passed": all(c["pass"] for c in checks)}
