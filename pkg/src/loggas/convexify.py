"""Convexification machinery: reflected kernel R, quadratic form Q, circulant
spectrum, slow modes, penalty terms, and the convexified Hamiltonian H_nu.

Index conventions follow the reflection construction: the physical indices
are I = [1, N]; the doubled circle is I~ = [-N+1, N] taken modulo 2N, with
distance d(k, l) = |m(k - l)| where m(.) is the mod-2N representative in
[-N+1, N].  The kernel

    R_{k,l} = (1/N) eps^(2/3) / (d(k,l)^2 / N^2 + eps^2)

is circulant on the doubled circle;  Q is its reflection to I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dst
from scipy.linalg import eigh, null_space

from .equilibrium import EquilibriumMeasure, classical_locations, solve_equilibrium
from .errors import StoreError
from .potentials import Potential, convexity_lower_bound
from .sampler import SampleStore, _energy_grad_raw

__all__ = [
    "ConvexifyParams",
    "QForm",
    "SlowModes",
    "theta",
    "theta_prime",
    "theta_second",
    "build_r_row",
    "build_r_matrix",
    "circulant_spectrum",
    "localization_radius",
    "build_q",
    "slow_modes",
    "cosine_mode_matrix",
    "penalty_terms",
    "hamiltonian_nu",
    "hessian_nu",
    "check_operator_inequality",
    "verify_pairwise_bound",
    "calibrate_c1",
    "nu_energy_closure",
]


# ---------------------------------------------------------------------------
# the penalty profile theta
# ---------------------------------------------------------------------------

def theta(x):
    """theta(x) = (x-1)^2 for x > 1, (x+1)^2 for x < -1, 0 on [-1, 1]."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > 1.0, (x - 1.0) ** 2, 0.0) + np.where(x < -1.0, (x + 1.0) ** 2, 0.0)
    return out if out.ndim else float(out)


def theta_prime(x):
    x = np.asarray(x, dtype=float)
    out = np.where(x > 1.0, 2.0 * (x - 1.0), 0.0) + np.where(x < -1.0, 2.0 * (x + 1.0), 0.0)
    return out if out.ndim else float(out)


def theta_second(x):
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) > 1.0, 2.0, 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# reflected kernel and quadratic form
# ---------------------------------------------------------------------------

def _mod_representative(k, two_n: int):
    """m(k) in [-N+1, N] congruent to k mod 2N."""
    k = np.asarray(k)
    r = np.mod(k, two_n)
    return np.where(r > two_n // 2, r - two_n, r)


def build_r_row(n: int, epsilon: float) -> np.ndarray:
    """Generator row R_{0,j} for j = 0..2N-1 (circulant order)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must be in (0, 1]")
    j = np.arange(2 * n)
    d = np.abs(_mod_representative(j, 2 * n))
    return (epsilon ** (2.0 / 3.0) / ((d / n) ** 2 + epsilon**2)) / n


def build_r_matrix(row: np.ndarray) -> np.ndarray:
    """Full 2N x 2N symmetric circulant matrix from its generator row."""
    two_n = row.size
    idx = np.arange(two_n)
    return row[np.mod(idx[:, None] - idx[None, :], two_n)]


def circulant_spectrum(n: int, epsilon: float):
    """Eigenvalues nu_k = sum_j e^{i 2pi j k / 2N} R_{0,j} and Fourier modes.

    nu is returned in Fourier index order k = 0..2N-1; the top eigenvalue
    (the paper's nu_{2N}) sits at k = 0 and equals the row sum.  The second
    return value maps k to the normalized eigenvector u_k on the doubled
    index set [-N+1, N].
    """
    row = build_r_row(n, epsilon)
    nu = np.fft.fft(row).real  # generator is even, spectrum is real
    two_n = 2 * n

    def mode(k: int) -> np.ndarray:
        j = np.arange(-n + 1, n + 1)
        return np.exp(1j * 2.0 * math.pi * j * k / two_n) / math.sqrt(two_n)

    return nu, mode


def localization_radius(nu: np.ndarray, threshold: float) -> int:
    """Largest circle distance from {0 mod 2N} among indices with |nu_k| > s."""
    two_n = nu.size
    ks = np.nonzero(np.abs(nu) > threshold)[0]
    if ks.size == 0:
        return 0
    return int(np.max(np.minimum(ks, two_n - ks)))


@dataclass
class QForm:
    """Reflected kernel restricted to the physical indices."""

    n: int
    epsilon: float
    r_row: np.ndarray
    q: np.ndarray

    def form_operator(self) -> np.ndarray:
        """Matrix of v -> <v, Qv> = sum Q_ij (v_i - v_j)^2, i.e.
        2 diag(row sums) - 2 Q."""
        return 2.0 * np.diag(self.q.sum(axis=1)) - 2.0 * self.q


def build_q(n: int, epsilon: float) -> QForm:
    """Q_{i,j} = R_{i,j} + R_{1-i,j} + R_{i,1-j} + R_{1-i,1-j} on [1, N]^2."""
    row = build_r_row(n, epsilon)
    two_n = 2 * n
    i = np.arange(1, n + 1)

    def r_at(a, b):
        return row[np.mod(a[:, None] - b[None, :], two_n)]

    q = (r_at(i, i) + r_at(1 - i, i) + r_at(i, 1 - i) + r_at(1 - i, 1 - i))
    return QForm(n=n, epsilon=epsilon, r_row=row, q=q)


def reflection_extend(v: np.ndarray) -> np.ndarray:
    """v on [1, N] -> v~ on [-N+1, N] with v~_j = v_{1-j} for j <= 0,
    returned in the order j = -N+1, ..., 0, 1, ..., N."""
    return np.concatenate([v[::-1], v])


# ---------------------------------------------------------------------------
# slow modes
# ---------------------------------------------------------------------------

def cosine_mode_matrix(n: int, ell: int, include_zero_mode: bool) -> np.ndarray:
    """Rows are G_alpha = sqrt(2/N) cos(pi*alpha*(2k-1)/(2N)), k = 1..N,
    prefixed by the constant mode G_0 = 1/sqrt(N) when requested."""
    k = np.arange(1, n + 1)
    alphas = np.arange(1, ell + 1)
    g = np.sqrt(2.0 / n) * np.cos(math.pi * np.outer(alphas, 2 * k - 1) / (2.0 * n))
    if include_zero_mode:
        g = np.vstack([np.full((1, n), 1.0 / math.sqrt(n)), g])
    return g


@dataclass
class SlowModes:
    """Mode vectors G_alpha plus the generating functions g_alpha on R.

    For alpha >= 1, g_alpha'(x) = sqrt(2) cos(pi*alpha*F(x)) with F the
    equilibrium CDF held constant outside [A, B]; g_alpha is its exact
    antiderivative with g_alpha(A) = 0, represented by the cosine series of
    dg/dphi in the angular variable.  The optional zero mode is g_0(x) = x.
    """

    eq: EquilibriumMeasure
    n: int
    ell: int
    include_zero_mode: bool
    alphas: np.ndarray                  # the alpha >= 1 labels
    g_matrix: np.ndarray                # (n_modes, N) rows G_alpha
    series: np.ndarray = field(repr=False)   # (ell, K) sine coeffs of dg/dphi
    sup_g1: np.ndarray = None           # per alpha >= 1
    sup_g2: np.ndarray = None
    g_at_b: np.ndarray = None           # g_alpha(B) = sum_k c_k (1-(-1)^k)/k

    @property
    def n_modes(self) -> int:
        return self.g_matrix.shape[0]

    def c_of_ell(self, w: float) -> float:
        """C(ell) = 2(W+1) sum_alpha (|g''|^2 + |g'| |g''|), alpha = 1..ell."""
        return 2.0 * (w + 1.0) * float(
            np.sum(self.sup_g2**2 + self.sup_g1 * self.sup_g2)
        )

    # -- batched evaluators (rows ordered like g_matrix) --------------------

    def eval_g(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        eq = self.eq
        inside = (x >= eq.a) & (x <= eq.b)
        below = x < eq.a
        above = x > eq.b
        out = np.empty((self.alphas.size, x.size))
        phi = eq._phi_of_t(np.clip(x, eq.a, eq.b))
        k = np.arange(1, self.series.shape[1] + 1)
        cos_mat = np.cos(np.outer(k, phi[inside]))     # (K, m)
        for row, _ in enumerate(self.alphas):
            c_over_k = self.series[row] / k
            # g(phi) = sum_k c_k (1 - cos(k phi)) / k
            vals = np.sum(c_over_k) - c_over_k @ cos_mat
            col = np.empty(x.size)
            col[inside] = vals
            col[below] = math.sqrt(2.0) * (x[below] - eq.a)
            col[above] = (self.g_at_b[row]
                          + math.sqrt(2.0) * math.cos(math.pi * self.alphas[row])
                          * (x[above] - eq.b))
            out[row] = col
        if self.include_zero_mode:
            out = np.vstack([x[None, :], out])
        return out

    def eval_g1(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        f = self.eq.cdf(x)
        out = math.sqrt(2.0) * np.cos(math.pi * np.outer(self.alphas, f))
        if self.include_zero_mode:
            out = np.vstack([np.ones((1, x.size)), out])
        return out

    def eval_g2(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        f = self.eq.cdf(x)
        rho = np.asarray(self.eq.density(x))
        out = (-math.sqrt(2.0) * math.pi * self.alphas[:, None]
               * np.sin(math.pi * np.outer(self.alphas, f)) * rho[None, :])
        if self.include_zero_mode:
            out = np.vstack([np.zeros((1, x.size)), out])
        return out


def _g_at_b(series: np.ndarray) -> np.ndarray:
    k = np.arange(1, series.shape[1] + 1)
    weight = (1.0 - (-1.0) ** k) / k
    return series @ weight


def slow_modes(eq: EquilibriumMeasure, n: int, ell: int,
               include_zero_mode: bool = True, resolution: int = 4096) -> SlowModes:
    """Construct the slow modes for a solved equilibrium measure.

    The mode vectors use the exact half-integer cosine identity
    g_alpha'(gamma~_k) = sqrt(2) cos(pi*alpha*(2k-1)/(2N)), which holds by
    construction since F(gamma~_k) = (k - 1/2)/N.
    """
    if ell < 0 or (ell == 0 and not include_zero_mode):
        raise ValueError("need ell >= 1 or the zero mode")
    alphas = np.arange(1, ell + 1)
    g_matrix = cosine_mode_matrix(n, ell, include_zero_mode)

    # sine series of dg/dphi = sqrt(2) cos(pi*alpha*F(phi)) * delta*sin(phi):
    # the odd 2pi-periodic extension is smooth (F is odd around 0, and for
    # integer alpha the cosine factor is even around pi), so the
    # coefficients decay spectrally.
    m = resolution
    phi = np.linspace(0.0, math.pi, m + 1)[1:-1]
    f_phi = eq._cdf_phi(phi)
    dt_dphi = eq.halfwidth * np.sin(phi)
    series = np.empty((ell, m - 1))
    for row, alpha in enumerate(alphas):
        samples = math.sqrt(2.0) * np.cos(math.pi * alpha * f_phi) * dt_dphi
        series[row] = dst(samples, type=1) / m
    # truncate the common spectral tail
    keep = m - 1
    tail = np.max(np.abs(series), axis=0)
    nz = np.nonzero(tail > 1e-15 * max(1.0, float(tail.max())))[0]
    if nz.size:
        keep = min(m - 1, int(nz[-1]) + 2)
    series = series[:, :keep]

    grid = np.linspace(eq.a, eq.b, 4097)
    f_grid = eq.cdf(grid)
    rho_grid = np.asarray(eq.density(grid))
    sup_g1 = np.full(ell, math.sqrt(2.0))
    sup_g2 = np.array([
        float(np.max(np.abs(math.sqrt(2.0) * math.pi * alpha
                            * np.sin(math.pi * alpha * f_grid) * rho_grid)))
        for alpha in alphas
    ])
    return SlowModes(
        eq=eq, n=n, ell=ell, include_zero_mode=include_zero_mode,
        alphas=alphas, g_matrix=g_matrix, series=series,
        sup_g1=sup_g1, sup_g2=sup_g2,
        g_at_b=_g_at_b(series) if ell else np.zeros(0),
    )


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class ConvexifyParams:
    """Constants of the convexified measure.

    m defaults to (W+1)/c1 (the operator-inequality coupling), s to C(ell)
    and delta to 1/(2 C(ell)) once the modes are known.
    """

    epsilon: float
    ell: int
    c1: float
    w: float
    s: float | None = None
    m: float | None = None
    delta: float | None = None
    include_zero_mode: bool = True

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        if self.c1 <= 0 or self.w < 0:
            raise ValueError("c1 must be positive and w nonnegative")
        if self.m is None:
            self.m = (self.w + 1.0) / self.c1

    def resolve(self, modes: SlowModes) -> "ConvexifyParams":
        c_ell = modes.c_of_ell(self.w)
        if self.s is None:
            self.s = c_ell
        if self.delta is None:
            self.delta = 1.0 / (2.0 * c_ell) if c_ell > 0 else 1.0
        return self

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon, "ell": self.ell, "c1": self.c1,
            "w": self.w, "s": self.s, "m": self.m, "delta": self.delta,
            "include_zero_mode": self.include_zero_mode,
        }


# ---------------------------------------------------------------------------
# penalties and the convexified Hamiltonian
# ---------------------------------------------------------------------------

@dataclass
class PenaltyTerms:
    x_alpha: np.ndarray       # per-mode X_alpha (zero mode included if present)
    psi_s: float
    psi_pair: float
    value: float              # psi_s + psi_pair + (W+1) sum X_alpha^2
    grad: np.ndarray
    grad_psi_s: np.ndarray
    grad_psi_pair: np.ndarray
    grad_x_term: np.ndarray


def penalty_terms(lam: np.ndarray, gamma_tilde: np.ndarray,
                  params: ConvexifyParams, qform: QForm, modes: SlowModes,
                  gamma_g_sums: np.ndarray | None = None) -> PenaltyTerms:
    """X_alpha, psi^(s), pairwise psi, and their analytic gradients.

    lam must be sorted (the penalties pair lam_i with gamma~_i and weight
    pairs by Q_{ij}; the symmetrized extension sorts first).
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    if gamma_g_sums is None:
        gamma_g_sums = modes.eval_g(gamma_tilde).sum(axis=1)
    g_vals = modes.eval_g(lam)
    x_alpha = (g_vals.sum(axis=1) - gamma_g_sums) / math.sqrt(n)

    dev = lam - gamma_tilde
    u = params.s * float(dev @ dev) / n
    psi_s = n * theta(u)
    grad_psi_s = 2.0 * params.s * theta_prime(u) * dev

    diff = lam[:, None] - lam[None, :]
    a_mat = np.sqrt(params.c1 * n * qform.q)
    args = a_mat * diff
    th = theta(args)
    np.fill_diagonal(th, 0.0)
    psi_pair = float(np.sum(th)) / n
    tp = theta_prime(args)
    np.fill_diagonal(tp, 0.0)
    grad_psi_pair = 2.0 * np.sum(tp * a_mat, axis=1) / n

    g1_vals = modes.eval_g1(lam)
    w1 = params.w + 1.0
    grad_x_term = 2.0 * w1 * (x_alpha @ g1_vals) / math.sqrt(n)

    value = psi_s + psi_pair + w1 * float(x_alpha @ x_alpha)
    return PenaltyTerms(
        x_alpha=x_alpha, psi_s=psi_s, psi_pair=psi_pair, value=value,
        grad=grad_psi_s + grad_psi_pair + grad_x_term,
        grad_psi_s=grad_psi_s, grad_psi_pair=grad_psi_pair,
        grad_x_term=grad_x_term,
    )


def hamiltonian_nu(lam: np.ndarray, p: Potential, params: ConvexifyParams,
                   qform: QForm, modes: SlowModes, gamma_tilde: np.ndarray,
                   gamma_g_sums: np.ndarray | None = None):
    """H_nu = H + psi^(s) + sum_ij psi_ij + (W+1) sum_alpha X_alpha^2,
    so that d nu = (1/Z) e^{-beta N (H_nu - H)} d mu, with its gradient."""
    h, grad = _energy_grad_raw(p, np.asarray(lam, dtype=float))
    pen = penalty_terms(lam, gamma_tilde, params, qform, modes, gamma_g_sums)
    return h + pen.value, grad + pen.grad


def hessian_nu(lam: np.ndarray, p: Potential, params: ConvexifyParams,
               qform: QForm, modes: SlowModes, gamma_tilde: np.ndarray,
               gamma_g_sums: np.ndarray | None = None) -> np.ndarray:
    """Exact Hessian of H_nu at a nondegenerate sorted configuration."""
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    diff = lam[:, None] - lam[None, :]
    np.fill_diagonal(diff, 1.0)
    inv2 = 1.0 / diff**2
    np.fill_diagonal(inv2, 0.0)

    hess = -inv2 / n
    np.fill_diagonal(hess, p.v2(lam) / 2.0 + np.sum(inv2, axis=1) / n)

    # (W+1) sum_alpha X_alpha^2
    if gamma_g_sums is None:
        gamma_g_sums = modes.eval_g(gamma_tilde).sum(axis=1)
    x_alpha = (modes.eval_g(lam).sum(axis=1) - gamma_g_sums) / math.sqrt(n)
    g1 = modes.eval_g1(lam)
    g2 = modes.eval_g2(lam)
    w1 = params.w + 1.0
    hess += 2.0 * w1 * (g1.T @ g1) / n
    hess += np.diag(2.0 * w1 * ((x_alpha @ g2) / math.sqrt(n)))

    # pairwise penalties
    a_mat = np.sqrt(params.c1 * n * qform.q)
    ts = theta_second(a_mat * (lam[:, None] - lam[None, :]))
    np.fill_diagonal(ts, 0.0)
    block = 2.0 * params.c1 * qform.q * ts
    hess -= block
    hess += np.diag(block.sum(axis=1))

    # global confinement
    dev = lam - gamma_tilde
    u = params.s * float(dev @ dev) / n
    hess += np.diag(np.full(n, 2.0 * params.s * theta_prime(u)))
    hess += (4.0 * params.s**2 / n) * theta_second(u) * np.outer(dev, dev)
    return hess


# ---------------------------------------------------------------------------
# operator inequality and pairwise-bound calibration
# ---------------------------------------------------------------------------

@dataclass
class OperatorMarginReport:
    n: int
    epsilon: float
    ell: int
    m: float
    include_zero_mode: bool
    margin_full: float
    margin_complement: float


def check_operator_inequality(n: int, epsilon: float, ell: int, m: float,
                              include_zero_mode: bool = False) -> OperatorMarginReport:
    """Smallest eigenvalue of Q-form + M sum |G_alpha><G_alpha| minus M,
    on the full space and on the complement of the constant vector."""
    qform = build_q(n, epsilon)
    op = qform.form_operator()
    g = cosine_mode_matrix(n, ell, include_zero_mode)
    if g.size:
        op = op + m * (g.T @ g)
    eigs = eigh(op, eigvals_only=True)
    margin_full = float(eigs[0]) - m
    basis = null_space(np.ones((1, n)))
    eigs_c = eigh(basis.T @ op @ basis, eigvals_only=True)
    margin_complement = float(eigs_c[0]) - m
    return OperatorMarginReport(
        n=n, epsilon=epsilon, ell=ell, m=m, include_zero_mode=include_zero_mode,
        margin_full=margin_full, margin_complement=margin_complement,
    )


@dataclass
class PairwiseBoundReport:
    c1: float
    violation_fraction: float
    sample_fraction: float          # fraction of samples with any violation
    count: int
    pairs_per_sample: int
    worst_index_distances: list     # index distances ranked by violation count


def verify_pairwise_bound(store: SampleStore, qform: QForm, c1: float) -> PairwiseBoundReport:
    """Frequency of the rare event (lam_i - lam_j)^{-2} / N < c1 Q_{ij}."""
    if len(store) == 0:
        raise StoreError("empty sample store")
    n = store.n
    if qform.n != n:
        raise StoreError(f"QForm built for N={qform.n}, store has N={n}")
    iu = np.triu_indices(n, k=1)
    q_pairs = qform.q[iu]
    dist = (iu[1] - iu[0])
    violations = 0
    total = 0
    samples_hit = 0
    dist_counts = {}
    for lam in store.snapshots:
        diff2 = (lam[iu[0]] - lam[iu[1]]) ** 2
        bad = (1.0 / diff2) / n < c1 * q_pairs
        nbad = int(np.count_nonzero(bad))
        violations += nbad
        total += q_pairs.size
        if nbad:
            samples_hit += 1
            for d in dist[bad]:
                dist_counts[int(d)] = dist_counts.get(int(d), 0) + 1
    ranked = sorted(dist_counts.items(), key=lambda kv: -kv[1])[:5]
    return PairwiseBoundReport(
        c1=c1,
        violation_fraction=violations / total,
        sample_fraction=samples_hit / len(store),
        count=violations,
        pairs_per_sample=q_pairs.size,
        worst_index_distances=[d for d, _ in ranked],
    )


def calibrate_c1(store: SampleStore, qform: QForm,
                 pair_quantile: float = 1e-4,
                 sample_quantile: float = 0.005) -> float:
    """Largest c1 whose violation fraction stays below pair_quantile per
    (sample, pair) event; additionally capped so that at most a
    sample_quantile fraction of whole samples contain any violation."""
    if len(store) == 0:
        raise StoreError("empty sample store")
    n = store.n
    iu = np.triu_indices(n, k=1)
    q_pairs = qform.q[iu]
    ratios = np.empty((len(store), q_pairs.size))
    for s, lam in enumerate(store.snapshots):
        diff2 = (lam[iu[0]] - lam[iu[1]]) ** 2
        ratios[s] = 1.0 / (diff2 * n * q_pairs)
    c_pair = float(np.quantile(ratios.ravel(), pair_quantile, method="lower"))
    c_sample = float(np.quantile(ratios.min(axis=1), sample_quantile, method="lower"))
    return max(min(c_pair, c_sample), 1e-12)


# ---------------------------------------------------------------------------
# target closure for the sampler
# ---------------------------------------------------------------------------

def nu_energy_closure(p: Potential, n: int, options: dict):
    """(H_nu, grad) evaluator for raw (possibly unsorted) proposal vectors.

    The symmetrized extension sorts the configuration, evaluates the sorted
    energy, and maps the gradient back through the permutation.
    """
    eq = solve_equilibrium(p)
    gamma_tilde = classical_locations(eq, n).gamma_tilde
    opts = dict(options)
    params = ConvexifyParams(
        epsilon=float(opts.get("epsilon", 0.05)),
        ell=int(opts.get("ell", 12)),
        c1=float(opts.get("c1", 0.05)),
        w=float(opts.get("w", convexity_lower_bound(p))),
        s=opts.get("s"),
        m=opts.get("m"),
        include_zero_mode=bool(opts.get("include_zero_mode", True)),
    )
    qform = build_q(n, params.epsilon)
    modes = slow_modes(eq, n, params.ell, params.include_zero_mode)
    params.resolve(modes)
    gamma_g_sums = modes.eval_g(gamma_tilde).sum(axis=1)

    def energy_grad(lam):
        order = np.argsort(lam)
        lam_sorted = lam[order]
        h, grad = hamiltonian_nu(lam_sorted, p, params, qform, modes,
                                 gamma_tilde, gamma_g_sums)
        out = np.empty_like(grad)
        out[order] = grad
        return h, out

    energy_grad.params = params
    energy_grad.qform = qform
    energy_grad.modes = modes
    energy_grad.gamma_tilde = gamma_tilde
    return energy_grad
