"""Samplers for the log-gas measure, its truncated and convexified variants,
and the exact tridiagonal Gaussian reference ensemble."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import __version__
from .errors import SingularConfigurationError, StoreError, StuckChainError
from .potentials import Potential, parse_potential

__all__ = [
    "ParticleConfiguration",
    "ChainConfig",
    "SampleStore",
    "hamiltonian_and_grad",
    "mala_step",
    "run_chain",
    "sample_gaussian_beta",
    "gaussian_reference_store",
]

_STUCK_PATIENCE = 10_000


@dataclass
class ParticleConfiguration:
    """Strictly increasing point vector with its inverse temperature."""

    lam: np.ndarray
    beta: float

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.ndim != 1 or self.lam.size < 1:
            raise SingularConfigurationError("configuration must be a 1-d vector")
        if not np.all(np.isfinite(self.lam)):
            raise SingularConfigurationError("configuration has non-finite points")
        if np.any(np.diff(self.lam) <= 0):
            raise SingularConfigurationError("points must be strictly increasing")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def n(self) -> int:
        return self.lam.size


@dataclass
class ChainConfig:
    """Everything needed to reproduce a Markov chain run bit for bit."""

    potential: str
    n: int
    beta: float
    target: str = "mu"            # mu | nu | trunc
    kappa: float = 0.5
    steps: int = 10_000
    burn_in: int = 1_000
    thin: int = 10
    step_size: float | None = None   # default 0.05 / n
    seed: int = 0
    chains: int = 1
    convexify: dict | None = None    # parameters for the nu target

    def __post_init__(self):
        if self.steps <= self.burn_in or self.burn_in < 0:
            raise ValueError("need steps > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.target not in ("mu", "nu", "trunc"):
            raise ValueError(f"unknown target {self.target!r}")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")

    def resolved_step_size(self) -> float:
        return self.step_size if self.step_size is not None else 0.05 / self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["step_size"] = self.resolved_step_size()
        return d


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def _energy_grad_raw(p: Potential, lam: np.ndarray):
    """H and grad H of the symmetrized Hamiltonian at any pairwise-distinct
    vector; O(N^2) pairwise sums via numpy's pairwise-accumulation."""
    n = lam.size
    diff = lam[:, None] - lam[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise SingularConfigurationError("coincident points")
    h = float(np.sum(p.v(lam)) / 2.0)
    if n > 1:
        iu = np.triu_indices(n, k=1)
        h -= float(np.sum(np.log(np.abs(diff[iu]))) / n)
    inv = 1.0 / diff
    np.fill_diagonal(inv, 0.0)
    grad = p.v1(lam) / 2.0 - np.sum(inv, axis=1) / n
    return h, grad


def hamiltonian_and_grad(p: Potential, config: ParticleConfiguration):
    """H = sum V/2 - (1/N) sum_{i<j} log(lam_j - lam_i) and its gradient."""
    return _energy_grad_raw(p, config.lam)


# ---------------------------------------------------------------------------
# MALA kernel
# ---------------------------------------------------------------------------

@dataclass
class _ChainState:
    lam: np.ndarray
    energy: float
    grad: np.ndarray


def mala_step(state: _ChainState, rng, *, energy_grad, beta: float,
              step_size: float, lower=None, upper=None):
    """One Metropolis-adjusted Langevin step for the target exp(-beta*N*H).

    Proposals are re-sorted (legal under the symmetrized measure); any
    proposal with non-finite energy, coincident points, or points outside
    [lower, upper] is rejected in place, never raised.
    """
    lam, h, grad = state.lam, state.energy, state.grad
    n = lam.size
    bn = beta * n
    drift = 0.5 * step_size * bn
    noise = np.sqrt(step_size) * rng.standard_normal(n)
    prop = lam - drift * grad + noise
    if lower is not None and (np.min(prop) < lower or np.max(prop) > upper):
        return state, False
    try:
        h_prop, grad_prop = energy_grad(prop)
    except SingularConfigurationError:
        return state, False
    if not (np.isfinite(h_prop) and np.all(np.isfinite(grad_prop))):
        return state, False
    fwd = prop - lam + drift * grad
    bwd = lam - prop + drift * grad_prop
    log_alpha = -bn * (h_prop - h) + (fwd @ fwd - bwd @ bwd) / (2.0 * step_size)
    if np.log(rng.uniform()) < log_alpha:
        order = np.argsort(prop)
        return _ChainState(prop[order], h_prop, grad_prop[order]), True
    return state, False


# ---------------------------------------------------------------------------
# sample store
# ---------------------------------------------------------------------------

@dataclass
class SampleStore:
    """Metadata plus retained configurations, JSON-Lines persistable."""

    metadata: dict
    snapshots: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.metadata["config"]["n"])

    @property
    def beta(self) -> float:
        return float(self.metadata["config"]["beta"])

    def __len__(self):
        return len(self.snapshots)

    def lambdas(self) -> np.ndarray:
        if not self.snapshots:
            raise StoreError("empty sample store")
        return np.asarray(self.snapshots)

    def save_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps(self.metadata, sort_keys=True,
                                separators=(",", ":")) + "\n")
            for step, lam in zip(self.steps, self.snapshots):
                fh.write(json.dumps({"step": int(step),
                                     "lambda": [float(x) for x in lam]},
                                    separators=(",", ":")) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "SampleStore":
        with open(path) as fh:
            header = fh.readline()
            if not header:
                raise StoreError(f"{path}: empty store file")
            metadata = json.loads(header)
            snapshots, steps = [], []
            for line in fh:
                rec = json.loads(line)
                snapshots.append(np.asarray(rec["lambda"], dtype=float))
                steps.append(int(rec["step"]))
        return cls(metadata=metadata, snapshots=snapshots, steps=steps)


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------

def _chain_rng(seed: int, chain: int):
    # counter-based streams: distinct keys are independent and reproducible
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF,
                                                     chain]))


def _initial_configuration(p: Potential, n: int, rng) -> np.ndarray:
    from .equilibrium import classical_locations, solve_equilibrium

    eq = solve_equilibrium(p)
    start = classical_locations(eq, n).gamma_tilde.copy()
    jitter = 0.01 * (eq.b - eq.a) / max(n, 4)
    start = np.sort(start + jitter * rng.standard_normal(n))
    return start


def _make_target(cfg: ChainConfig, p: Potential):
    """Return (energy_grad, lower, upper) for the configured target."""
    if cfg.target == "mu":
        return (lambda lam: _energy_grad_raw(p, lam)), None, None
    if cfg.target == "trunc":
        from .equilibrium import solve_equilibrium

        eq = solve_equilibrium(p)
        return (lambda lam: _energy_grad_raw(p, lam)), eq.a - cfg.kappa, eq.b + cfg.kappa
    from .convexify import nu_energy_closure

    closure = nu_energy_closure(p, cfg.n, cfg.convexify or {})
    return closure, None, None


def run_chain(cfg: ChainConfig, jobs: int = 1) -> SampleStore:
    """Run cfg.chains independent MALA chains and merge them in chain order.

    Deterministic for a fixed config: each chain owns a Philox stream keyed
    by (seed, chain index), and burn-in step-size halving depends only on
    the stream.
    """
    p = parse_potential(cfg.potential)
    retained_per_chain = (cfg.steps - cfg.burn_in) // cfg.thin
    results = []
    if jobs > 1 and cfg.chains > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_single_chain, cfg, c)
                       for c in range(cfg.chains)]
            results = [f.result() for f in futures]
    else:
        results = [_run_single_chain(cfg, c) for c in range(cfg.chains)]

    metadata = {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg.to_dict()),
        "seed": cfg.seed,
        "version": __version__,
        "kind": "mcmc",
        "acceptance_rates": [round(r, 6) for _, _, r, _ in results],
        "final_step_sizes": [s for _, _, _, s in results],
        "retained_per_chain": retained_per_chain,
    }
    store = SampleStore(metadata=metadata)
    for snaps, steps, _, _ in results:
        store.snapshots.extend(snaps)
        store.steps.extend(steps)
    return store


def _run_single_chain(cfg: ChainConfig, chain_idx: int):
    p = parse_potential(cfg.potential)
    rng = _chain_rng(cfg.seed, chain_idx)
    energy_grad, lower, upper = _make_target(cfg, p)
    lam = _initial_configuration(p, cfg.n, rng)
    if lower is not None:
        lam = np.clip(lam, lower + 1e-9, upper - 1e-9)
        lam = np.sort(lam)
    h, grad = energy_grad(lam)
    state = _ChainState(lam, h, grad)
    step_size = cfg.resolved_step_size()

    snapshots, steps_at = [], []
    accepted = 0
    rejected_streak = 0
    window_accepts, window_count = 0, 0
    for step in range(1, cfg.steps + 1):
        state, ok = mala_step(state, rng, energy_grad=energy_grad, beta=cfg.beta,
                              step_size=step_size, lower=lower, upper=upper)
        accepted += ok
        rejected_streak = 0 if ok else rejected_streak + 1
        if rejected_streak >= _STUCK_PATIENCE:
            raise StuckChainError(
                f"chain {chain_idx}: no acceptance in {_STUCK_PATIENCE} steps"
            )
        if step <= cfg.burn_in:
            window_accepts += ok
            window_count += 1
            if window_count == 200:
                if window_accepts / window_count < 0.3:
                    step_size /= 2.0
                window_accepts, window_count = 0, 0
        elif (step - cfg.burn_in) % cfg.thin == 0:
            snapshots.append(state.lam.copy())
            steps_at.append(step)
    return snapshots, steps_at, accepted / cfg.steps, step_size


# ---------------------------------------------------------------------------
# exact Gaussian reference
# ---------------------------------------------------------------------------

def sample_gaussian_beta(n: int, beta: float, rng_or_seed=0) -> ParticleConfiguration:
    """One exact draw from the Gaussian beta-ensemble, rescaled so the law is
    the V(x) = x^2 log-gas (equilibrium support [-sqrt(2), sqrt(2)]).

    Tridiagonal model: diagonal N(0,1), off-diagonal chi_{beta*k}/sqrt(2)
    for k = n-1..1, eigenvalues scaled by 1/sqrt(beta*n).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    rng = (rng_or_seed if isinstance(rng_or_seed, np.random.Generator)
           else np.random.default_rng(rng_or_seed))
    diag = rng.standard_normal(n)
    if n > 1:
        dof = beta * np.arange(n - 1, 0, -1)
        off = np.sqrt(rng.chisquare(dof)) / np.sqrt(2.0)
        eigs = eigh_tridiagonal(diag, off, eigvals_only=True)
    else:
        eigs = diag
    lam = np.sort(eigs) / np.sqrt(beta * n)
    return ParticleConfiguration(lam=lam, beta=beta)


def gaussian_reference_store(n: int, beta: float, count: int, seed: int = 0) -> SampleStore:
    """Store of independent exact Gaussian-ensemble draws (no Markov chain)."""
    rng = np.random.default_rng(seed)
    config = {"potential": "quadratic", "n": n, "beta": beta,
              "target": "gaussian_reference", "count": count, "seed": seed}
    metadata = {
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "version": __version__,
        "kind": "gaussian_reference",
    }
    store = SampleStore(metadata=metadata)
    for i in range(count):
        store.snapshots.append(sample_gaussian_beta(n, beta, rng).lam)
        store.steps.append(i)
    return store
