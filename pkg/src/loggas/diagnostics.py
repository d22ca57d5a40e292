"""Statistical verdicts over sample stores: Stieltjes/loop-equation residuals,
rigidity, gap statistics, linear-statistic concentration, and mu/nu overlap.

Standard errors are autocorrelation-aware via batch means (20 batches).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import stats as sstats

from .convexify import ConvexifyParams, QForm, SlowModes, penalty_terms
from .equilibrium import ClassicalLocations, EquilibriumMeasure, _divided_difference_coeffs
from .errors import EmptyWindowError, StoreError
from .potentials import Potential
from .sampler import SampleStore

__all__ = [
    "StieltjesEstimate",
    "LoopReport",
    "RigidityReport",
    "GapReport",
    "LinStatReport",
    "OverlapReport",
    "BumpFunction",
    "empirical_stieltjes",
    "loop_residual",
    "rigidity_stats",
    "gap_statistics",
    "ks_two_sample",
    "linear_stat_fluct",
    "measure_overlap",
]

_N_BATCHES = 20


def _batch_means(values: np.ndarray, n_batches: int = _N_BATCHES) -> np.ndarray:
    """Means of contiguous batches (drops the remainder)."""
    m = len(values)
    nb = min(n_batches, m)
    size = m // nb
    trimmed = np.asarray(values)[: nb * size]
    return trimmed.reshape(nb, size).mean(axis=1)


def _batch_se(values: np.ndarray) -> float:
    bm = _batch_means(values)
    if len(bm) < 2:
        return float("inf")
    if np.iscomplexobj(bm):
        return math.sqrt(bm.real.var(ddof=1) + bm.imag.var(ddof=1)) / math.sqrt(len(bm))
    return float(bm.std(ddof=1) / math.sqrt(len(bm)))


# ---------------------------------------------------------------------------
# empirical Stieltjes transform
# ---------------------------------------------------------------------------

@dataclass
class StieltjesEstimate:
    z: complex
    m_hat: complex
    k_hat: complex
    se_m: float
    se_k: float
    count: int


def empirical_stieltjes(store: SampleStore, z: complex) -> StieltjesEstimate:
    """m_hat = mean of (1/N) sum 1/(z - lam_i); k_hat = E(X^2) - E(X)^2 of
    X = sum 1/(z - lam_i) (complex variance, no absolute values)."""
    z = complex(z)
    if z.imag == 0:
        raise ValueError("z must be off the real axis")
    if len(store) == 0:
        raise StoreError("empty sample store")
    lams = store.lambdas()
    n = store.n
    x = np.sum(1.0 / (z - lams), axis=1)
    m_hat = complex(np.mean(x) / n)
    k_hat = complex(np.mean(x**2) - np.mean(x) ** 2)
    nb = min(_N_BATCHES, len(x))
    k_batches = np.array([np.mean(b**2) - np.mean(b) ** 2
                          for b in np.array_split(x, nb)])
    if nb >= 2:
        se_k = math.sqrt(k_batches.real.var(ddof=1)
                         + k_batches.imag.var(ddof=1)) / math.sqrt(nb)
    else:
        se_k = float("inf")
    return StieltjesEstimate(
        z=z, m_hat=m_hat, k_hat=k_hat,
        se_m=_batch_se(x / n), se_k=se_k,
        count=len(store),
    )


# ---------------------------------------------------------------------------
# loop equation residual
# ---------------------------------------------------------------------------

@dataclass
class LoopPoint:
    z: complex
    m_hat: complex
    m_limit: complex
    k_hat: complex
    m_prime_hat: complex
    b_hat: complex
    s_value: complex
    c_hat: complex
    residual: complex
    residual_se: float


@dataclass
class LoopReport:
    """Residuals of the exact finite-N loop identity
    (m_N - m)^2 + s (m_N - m) + b_N + k_N/N^2 - (2/beta - 1) m_N'/N = 0,
    i.e. c_N = -k_N/N^2 + (2/beta - 1) m_N'/N (integration-by-parts sign)."""

    points: list
    rejected: list
    n: int
    beta: float
    count: int

    @property
    def csv_header(self):
        return ["re_z", "im_z", "re_residual", "im_residual", "abs_residual",
                "residual_se", "re_m_hat", "im_m_hat", "re_k_hat", "im_k_hat"]

    def csv_rows(self):
        for pt in self.points:
            yield [pt.z.real, pt.z.imag, pt.residual.real, pt.residual.imag,
                   abs(pt.residual), pt.residual_se, pt.m_hat.real, pt.m_hat.imag,
                   pt.k_hat.real, pt.k_hat.imag]


def _histogram_b_hat(lams: np.ndarray, dd: np.ndarray, eq: EquilibriumMeasure,
                     z: complex) -> complex:
    """b_N estimate: rho_1 by fixed-bin histogram (width 1/(2N)) integrated
    against the divided difference, minus the equilibrium part."""
    n = lams.shape[1]
    width = 1.0 / (2.0 * n)
    lo = min(float(lams.min()), eq.a) - width
    hi = max(float(lams.max()), eq.b) + width
    nbins = int(math.ceil((hi - lo) / width))
    counts, edges = np.histogram(lams.ravel(), bins=nbins, range=(lo, lo + nbins * width))
    centers = 0.5 * (edges[:-1] + edges[1:])
    mass = counts / (lams.shape[0] * n)
    emp = complex(np.sum(npoly.polyval(centers, dd) * mass))
    eq_part = complex(np.dot(dd, eq.moments(len(dd) - 1)))
    return emp - eq_part


def loop_residual(store: SampleStore, eq: EquilibriumMeasure, p: Potential,
                  z_grid) -> LoopReport:
    """Loop-equation residual with Monte Carlo standard errors on a z grid.

    Grid points with |Im z| < 1/N or within 0.05*(B-A) of a zero of r are
    rejected (reported, not raised).
    """
    if len(store) == 0:
        raise StoreError("empty sample store")
    lams = store.lambdas()
    n = store.n
    beta = store.beta
    dd_len = max(len(p.v1_coeffs) - 1, 1)
    r_roots = npoly.polyroots(eq.r_pow) if len(eq.r_pow) > 1 else np.array([])
    min_root_dist = 0.05 * (eq.b - eq.a)

    points, rejected = [], []
    for z in np.atleast_1d(np.asarray(z_grid, dtype=complex)):
        z = complex(z)
        if abs(z.imag) < 1.0 / n:
            rejected.append((z, "too close to the real axis"))
            continue
        if r_roots.size and np.min(np.abs(r_roots - z)) < min_root_dist:
            rejected.append((z, "too close to a zero of r"))
            continue
        x = np.sum(1.0 / (z - lams), axis=1)
        xp = -np.sum(1.0 / (z - lams) ** 2, axis=1)
        m_limit = eq.stieltjes_m(p, z)
        f = np.sqrt(z - eq.a) * np.sqrt(z - eq.b)
        s_val = -2.0 * complex(eq.r_eval(z)) * f
        dd = _divided_difference_coeffs(p.v1_coeffs, z)

        def residual_of(idx):
            xs = x[idx]
            xps = xp[idx]
            m_hat = np.mean(xs) / n
            k_hat = np.mean(xs**2) - np.mean(xs) ** 2
            mp_hat = np.mean(xps) / n
            b_hat = _histogram_b_hat(lams[idx], dd, eq, z)
            c_hat = -k_hat / n**2 + (2.0 / beta - 1.0) * mp_hat / n
            return ((m_hat - m_limit) ** 2 + s_val * (m_hat - m_limit)
                    + b_hat - c_hat), m_hat, k_hat, mp_hat, b_hat, c_hat

        all_idx = np.arange(len(store))
        res, m_hat, k_hat, mp_hat, b_hat, c_hat = residual_of(all_idx)
        batch_res = np.array([residual_of(idx)[0]
                              for idx in np.array_split(all_idx, min(_N_BATCHES, len(store)))])
        se = math.sqrt(batch_res.real.var(ddof=1) + batch_res.imag.var(ddof=1))
        se /= math.sqrt(len(batch_res))
        points.append(LoopPoint(z=z, m_hat=complex(m_hat), m_limit=m_limit,
                                k_hat=complex(k_hat), m_prime_hat=complex(mp_hat),
                                b_hat=b_hat, s_value=s_val, c_hat=complex(c_hat),
                                residual=complex(res), residual_se=se))
    return LoopReport(points=points, rejected=rejected, n=n, beta=beta,
                      count=len(store))


# ---------------------------------------------------------------------------
# rigidity
# ---------------------------------------------------------------------------

@dataclass
class RigidityReport:
    n: int
    count: int
    alpha_bulk: float
    bulk_lo: int                  # 1-based inclusive
    bulk_hi: int
    mean_dev: np.ndarray          # per index, full range
    std_dev: np.ndarray
    e_exponents: tuple
    thresholds: np.ndarray
    exceedance: np.ndarray        # per exponent, over bulk (sample, index) events
    bulk_median_abs_dev: float
    max_bulk_mean_abs: float

    @property
    def csv_header(self):
        return ["k", "mean_dev", "std_dev"]

    def csv_rows(self):
        for k in range(self.n):
            yield [k + 1, self.mean_dev[k], self.std_dev[k]]


def rigidity_stats(store: SampleStore, locs: ClassicalLocations,
                   alpha_bulk: float = 0.1,
                   e_exps: tuple = (0.1, 0.3, 0.5)) -> RigidityReport:
    """Per-index deviation moments and threshold exceedance over the bulk."""
    if len(store) == 0:
        raise StoreError("empty sample store")
    n = store.n
    if locs.n != n:
        raise StoreError(f"locations built for N={locs.n}, store has N={n}")
    lams = store.lambdas()
    dev = lams - locs.gamma[None, :]
    lo = max(int(math.ceil(alpha_bulk * n)), 1)
    hi = min(int(math.floor((1.0 - alpha_bulk) * n)), n)
    bulk = np.abs(dev[:, lo - 1: hi])
    thresholds = np.array([n ** (-1.0 + e) for e in e_exps])
    exceed = np.array([(bulk > t).mean() for t in thresholds])
    return RigidityReport(
        n=n, count=len(store), alpha_bulk=alpha_bulk, bulk_lo=lo, bulk_hi=hi,
        mean_dev=dev.mean(axis=0), std_dev=dev.std(axis=0, ddof=1),
        e_exponents=tuple(e_exps), thresholds=thresholds, exceedance=exceed,
        bulk_median_abs_dev=float(np.median(bulk)),
        max_bulk_mean_abs=float(np.max(np.abs(dev.mean(axis=0)[lo - 1: hi]))),
    )


# ---------------------------------------------------------------------------
# gap statistics
# ---------------------------------------------------------------------------

@dataclass
class GapReport:
    energy: float
    window_halfwidth: float
    k_exp: float
    rho_at_energy: float
    gaps: np.ndarray              # normalized by N * rho(E)
    dkw_alpha: float
    dkw_band: float

    @property
    def mean_gap(self) -> float:
        return float(self.gaps.mean())

    def ecdf(self, x):
        xs = np.sort(self.gaps)
        return np.searchsorted(xs, np.asarray(x), side="right") / xs.size

    @property
    def csv_header(self):
        return ["normalized_gap"]

    def csv_rows(self):
        for g in np.sort(self.gaps):
            yield [g]


def gap_statistics(store: SampleStore, eq: EquilibriumMeasure, energy: float,
                   k_exp: float = 0.5, dkw_alpha: float = 0.05) -> GapReport:
    """Nearest-neighbour gaps with left endpoint in [E-s, E+s], s = N^(k-1),
    normalized by N*rho(E) of the sampled ensemble's own equilibrium."""
    if not 0.0 < k_exp <= 0.5:
        raise ValueError("k_exp must lie in (0, 1/2]")
    margin = 0.05 * (eq.b - eq.a)
    if not eq.a + margin < energy < eq.b - margin:
        raise ValueError(f"energy {energy} is not in the open bulk")
    if len(store) == 0:
        raise StoreError("empty sample store")
    n = store.n
    s_win = n ** (k_exp - 1.0)
    rho_e = float(eq.density(energy))
    lams = store.lambdas()
    left = lams[:, :-1]
    gaps_all = np.diff(lams, axis=1)
    mask = (left >= energy - s_win) & (left <= energy + s_win)
    gaps = gaps_all[mask] * n * rho_e
    if gaps.size == 0:
        expected = len(store) * 2.0 * s_win * n * rho_e
        raise EmptyWindowError(
            f"no gaps with left endpoint in [{energy - s_win}, {energy + s_win}] "
            f"(expected about {expected:.2f})",
            expected_count=expected,
        )
    band = math.sqrt(math.log(2.0 / dkw_alpha) / (2.0 * gaps.size))
    return GapReport(energy=energy, window_halfwidth=s_win, k_exp=k_exp,
                     rho_at_energy=rho_e, gaps=gaps, dkw_alpha=dkw_alpha,
                     dkw_band=band)


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov sup-distance with asymptotic p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    res = sstats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# linear statistics
# ---------------------------------------------------------------------------

@dataclass
class BumpFunction:
    """C^2 bump h*(1-u^2)^3 with u = (x-center)/width, supported on
    [center-width, center+width]."""

    center: float
    width: float
    height: float = 1.0

    def __call__(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.width
        inside = np.abs(u) < 1.0
        out = np.zeros_like(u)
        out[inside] = self.height * (1.0 - u[inside] ** 2) ** 3
        return out

    def sup_norms(self):
        grid = np.linspace(self.center - self.width, self.center + self.width, 20001)
        h = grid[1] - grid[0]
        vals = self(grid)
        d1 = np.gradient(vals, h)
        d2 = np.gradient(d1, h)
        return float(np.max(np.abs(vals))), float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))


@dataclass
class LinStatReport:
    n: int
    count: int
    phi_center: float
    phi_width: float
    phi_height: float
    sup_norms: tuple
    target: float                 # N * int rho phi
    sample_mean: float
    variance: float
    thresholds: np.ndarray
    exceedance: np.ndarray

    @property
    def csv_header(self):
        return ["threshold", "exceedance"]

    def csv_rows(self):
        for t, e in zip(self.thresholds, self.exceedance):
            yield [t, e]


def linear_stat_fluct(store: SampleStore, eq: EquilibriumMeasure,
                      phi: BumpFunction, thresholds=None) -> LinStatReport:
    """Variance and tail exceedance of sum_i phi(lam_i) around N int rho phi."""
    if len(store) == 0:
        raise StoreError("empty sample store")
    lams = store.lambdas()
    n = store.n
    # int rho phi via the angular substitution (smooth integrand)
    nodes, weights = np.polynomial.legendre.leggauss(2000)
    theta_nodes = 0.5 * (nodes + 1.0) * math.pi
    ts = eq._t_of_phi(theta_nodes)
    integral = float(np.sum(weights * phi(ts) * eq._density_phi(theta_nodes)) * math.pi / 2.0)
    target = n * integral
    sums = phi(lams).sum(axis=1)
    if thresholds is None:
        thresholds = np.array([5.0, 10.0, 20.0]) * math.log(n)
    thresholds = np.asarray(thresholds, dtype=float)
    exceed = np.array([(np.abs(sums - target) > t).mean() for t in thresholds])
    return LinStatReport(
        n=n, count=len(store), phi_center=phi.center, phi_width=phi.width,
        phi_height=phi.height, sup_norms=phi.sup_norms(), target=target,
        sample_mean=float(sums.mean()), variance=float(sums.var(ddof=1)),
        thresholds=thresholds, exceedance=exceed,
    )


# ---------------------------------------------------------------------------
# measure overlap (mu vs nu)
# ---------------------------------------------------------------------------

@dataclass
class OverlapReport:
    count: int
    frac_psi_zero: float          # both theta penalties exactly zero
    frac_weight_one: float        # psi penalties zero AND x-exponent < 1e-12
    mean_x_exponent: float        # mean of beta*N*(W+1) sum X_a^2
    log_n_squared: float
    ess_ratio_full: float         # ESS of exp(-beta*N*(psi + x-term)) weights
    ess_ratio_psi: float          # ESS of exp(-beta*N*psi) weights
    x_exponents: np.ndarray = field(repr=False)
    psi_exponents: np.ndarray = field(repr=False)

    @property
    def csv_header(self):
        return ["sample", "psi_exponent", "x_exponent", "weight_full", "weight_psi"]

    def csv_rows(self):
        for i, (pe, xe) in enumerate(zip(self.psi_exponents, self.x_exponents)):
            yield [i, pe, xe, math.exp(-(pe + xe)), math.exp(-pe)]


def _ess_ratio(weights: np.ndarray) -> float:
    return float(weights.sum() ** 2 / (weights**2).sum() / weights.size)


def measure_overlap(store: SampleStore, gamma_tilde: np.ndarray,
                    params: ConvexifyParams, qform: QForm,
                    modes: SlowModes) -> OverlapReport:
    """Importance weights w = exp(-beta*N*(psi_s + psi_pair + (W+1) sum X^2))
    of mu-samples against nu, split into the theta part (exactly 1 in dead
    zones) and the slow-mode part (subexponential, O((log N)^2) exponent)."""
    if len(store) == 0:
        raise StoreError("empty sample store")
    n = store.n
    beta = store.beta
    gsums = modes.eval_g(gamma_tilde).sum(axis=1)
    w1 = params.w + 1.0
    x_exps = np.empty(len(store))
    psi_exps = np.empty(len(store))
    for i, lam in enumerate(store.snapshots):
        pen = penalty_terms(lam, gamma_tilde, params, qform, modes, gsums)
        x_exps[i] = beta * n * w1 * float(pen.x_alpha @ pen.x_alpha)
        psi_exps[i] = beta * n * (pen.psi_s + pen.psi_pair)
    w_full = np.exp(-(x_exps + psi_exps))
    w_psi = np.exp(-psi_exps)
    return OverlapReport(
        count=len(store),
        frac_psi_zero=float(np.mean(psi_exps == 0.0)),
        frac_weight_one=float(np.mean((psi_exps == 0.0) & (x_exps < 1e-12))),
        mean_x_exponent=float(x_exps.mean()),
        log_n_squared=math.log(n) ** 2,
        ess_ratio_full=_ess_ratio(w_full),
        ess_ratio_psi=_ess_ratio(w_psi),
        x_exponents=x_exps,
        psi_exponents=psi_exps,
    )
