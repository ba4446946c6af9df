"""Monte Carlo samplers for the joint eigenvalue density and chain diagnostics.

Two routes to the log-gas:

* `sample_log_gas`: random-scan single-site Metropolis targeting
  (β/2)[−n Σ V_t(λ_i) + Σ_{i≠j} log|λ_i−λ_j|], eigenvalues confined to σ_d,
  Gaussian proposals auto-tuned during burn-in only (detailed balance is
  preserved by freezing the step afterwards).  Fully deterministic given the
  master seed: chain c draws from SeedSequence(master_seed, spawn_key=(c,)),
  and chains are reduced in index order regardless of worker count.

* `sample_tridiagonal_gaussian`: independent exact draws for V = λ²/2 via
  the tridiagonal β-ensemble: diagonal N(0, 2/(βn)), off-diagonal
  χ_{β(n−k)}/√(βn), whose eigenvalue density is exactly the target (the
  rescaling folds the e^{−nβλ²/4} confinement into the matrix variance).
  Used as the ground-truth oracle for MCMC validation.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .equilibrium import compute_density, verify_one_cut
from .potential import Potential

TUNE_INTERVAL = 50          # sweeps between step-size adjustments during burn-in
TARGET_ACCEPTANCE = (0.3, 0.5)


class SamplerError(RuntimeError):
    pass


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    """Run parameters for the log-gas Metropolis sampler.

    Invariants: burnin < sweeps, step_size in (1e-6, 1); thinning is in units
    of sweeps (one sweep = n single-site update attempts).
    """

    n: int
    beta: int
    pot: Potential
    chains: int = 4
    sweeps: int = 2000
    burnin: int = 500
    thin: int = 1
    step_size: float = 0.5
    master_seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise SamplerError("n must be positive")
        if self.beta not in (1, 2):
            raise SamplerError("beta must be 1 or 2")
        if not (0 <= self.burnin < self.sweeps):
            raise SamplerError("require 0 <= burnin < sweeps")
        if not (1e-6 < self.step_size < 1):
            raise SamplerError("step_size must be in (1e-6, 1)")
        if self.chains < 1 or self.thin < 1:
            raise SamplerError("chains and thin must be positive")
        if self.master_seed < 0 or self.master_seed >= 2 ** 64:
            raise SamplerError("master_seed must fit in 64 bits")


@dataclass
class SampleBatch:
    """Thinned post-burn-in eigenvalue configurations (each sorted ascending)."""

    configs: np.ndarray               # (draws, n)
    n: int
    beta: int
    acceptance_rates: list
    step_sizes: list
    tau: float                        # integrated autocorrelation time of sum(lambda)
    ess: float
    seeds: list
    chain_index: np.ndarray = None    # chain of origin per draw
    sweep_index: np.ndarray = None

    @property
    def draws(self) -> int:
        return self.configs.shape[0]

    def linear_stat(self, fn) -> np.ndarray:
        return fn(self.configs).sum(axis=1)


def _chain_rng(master_seed: int, chain: int) -> np.random.Generator:
    """Documented per-chain stream: SeedSequence(master_seed) split by spawn key."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed,
                                                        spawn_key=(chain,)))


def _initial_configuration(pot: Potential, n: int, rng: np.random.Generator) -> np.ndarray:
    """Start from equilibrium-density quantiles (jittered), inside σ_d."""
    try:
        eq = compute_density(pot, grid_size=2001)
        cdf = np.cumsum(eq.density_values)
        cdf /= cdf[-1]
        qs = (np.arange(n) + 0.5) / n
        lam = np.interp(qs, cdf, eq.grid_points)
    except Exception:
        lam = np.linspace(-1.8, 1.8, n)
    lam = lam + rng.normal(0.0, 0.02 / math.sqrt(n), size=n)
    lo, hi = pot.sigma
    return np.clip(lam, lo + 1e-9, hi - 1e-9)


def _log_density_terms(lam: np.ndarray, pot: Potential, n: int, beta: int) -> float:
    diffs = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(diffs, 1.0)
    return float(beta * 0.5 * np.log(diffs).sum()
                 - 0.5 * n * beta * pot.value(lam).sum())


def _run_chain(cfg: SamplerConfig, chain: int):
    rng = _chain_rng(cfg.master_seed, chain)
    n, beta = cfg.n, cfg.beta
    pot = cfg.pot
    lo, hi = pot.sigma
    lam = _initial_configuration(pot, n, rng)
    if not np.isfinite(_log_density_terms(lam, pot, n, beta)):
        raise SamplerError("non-finite log-density at initialization")
    step = cfg.step_size
    half_nbeta = 0.5 * n * beta
    kept = []
    sweeps_kept = []
    accepted = 0
    attempted = 0
    tune_acc = 0
    tune_att = 0
    for sweep in range(cfg.sweeps):
        order = rng.permutation(n)
        deltas = rng.normal(0.0, step, size=n)
        logus = np.log(rng.random(n))
        for idx, dlt, logu in zip(order, deltas, logus):
            attempted += 1
            tune_att += 1
            cur = lam[idx]
            prop = cur + dlt
            if prop <= lo or prop >= hi:
                continue
            dcur = np.abs(lam - cur)
            dprop = np.abs(lam - prop)
            dcur[idx] = 1.0
            dprop[idx] = 1.0
            dlog = (beta * (np.log(dprop).sum() - np.log(dcur).sum())
                    - half_nbeta * (pot.value(prop) - pot.value(cur)))
            if dlog >= 0.0 or logu < dlog:
                lam[idx] = prop
                accepted += 1
                tune_acc += 1
        in_burnin = sweep < cfg.burnin
        if in_burnin and (sweep + 1) % TUNE_INTERVAL == 0 and tune_att > 0:
            rate = tune_acc / tune_att
            if rate < TARGET_ACCEPTANCE[0]:
                step = max(step * 0.7, 2e-6)
            elif rate > TARGET_ACCEPTANCE[1]:
                step = min(step * 1.4, 0.999)
            tune_acc = tune_att = 0
        if not in_burnin and (sweep - cfg.burnin) % cfg.thin == 0:
            kept.append(np.sort(lam))
            sweeps_kept.append(sweep)
    acc_rate = accepted / max(attempted, 1)
    return np.array(kept), np.array(sweeps_kept), acc_rate, step


def integrated_autocorr_time(series: np.ndarray) -> tuple:
    """Geyer initial-positive-sequence estimate of τ = 1 + 2Σρ_k.

    Returns (τ, reliable): τ saturates at len/2 and is flagged unreliable for
    degenerate inputs.
    """
    x = np.asarray(series, dtype=float)
    m = x.size
    if m < 4:
        return float("nan"), False
    c = x - x.mean()
    var = float(c @ c) / m
    if var <= 0:
        return float(m), False
    acf = np.correlate(c, c, "full")[m - 1:] / (m * var)
    tau = 1.0
    reliable = True
    for k in range(1, m - 2, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    else:
        reliable = False
    if tau > m / 2:
        tau = m / 2
        reliable = False
    return float(tau), reliable


def sample_log_gas(cfg: SamplerConfig, threads: int = 1) -> SampleBatch:
    """Run the Metropolis chains; reduction is in chain-index order always."""
    rep = verify_one_cut(cfg.pot)
    if not rep.all_pass:
        import warnings
        warnings.warn("potential failed the one-cut certificate; sampling anyway",
                      UserWarning)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda c: _run_chain(cfg, c), range(cfg.chains)))
    else:
        results = [_run_chain(cfg, c) for c in range(cfg.chains)]
    configs = np.concatenate([r[0] for r in results], axis=0)
    sweep_idx = np.concatenate([r[1] for r in results])
    chain_idx = np.concatenate([np.full(r[0].shape[0], c) for c, r in enumerate(results)])
    acc = [r[2] for r in results]
    steps = [r[3] for r in results]
    taus = []
    for r in results:
        t, _ = integrated_autocorr_time(r[0].sum(axis=1))
        if np.isfinite(t):
            taus.append(t)
    tau = float(np.mean(taus)) if taus else float("nan")
    ess = configs.shape[0] / tau if np.isfinite(tau) and tau > 0 else float("nan")
    seeds = [cfg.master_seed, list(range(cfg.chains))]
    return SampleBatch(configs=configs, n=cfg.n, beta=cfg.beta,
                       acceptance_rates=acc, step_sizes=steps, tau=tau, ess=ess,
                       seeds=seeds, chain_index=chain_idx, sweep_index=sweep_idx)


def sample_tridiagonal_gaussian(n: int, beta: int, num_samples: int,
                                master_seed: int = 0) -> SampleBatch:
    """Exact independent draws from the V = λ²/2 log-gas via the tridiagonal model."""
    if beta not in (1, 2):
        raise SamplerError("beta must be 1 or 2")
    rng = _chain_rng(master_seed, 0)
    scale = 1.0 / math.sqrt(beta * n)
    configs = np.empty((num_samples, n))
    dof = beta * np.arange(n - 1, 0, -1)
    for s in range(num_samples):
        diag = rng.normal(0.0, math.sqrt(2.0) * scale, size=n)
        off = np.sqrt(rng.chisquare(dof)) * scale
        configs[s] = eigh_tridiagonal(diag, off, eigvals_only=True)
    return SampleBatch(configs=configs, n=n, beta=beta,
                       acceptance_rates=[1.0], step_sizes=[0.0],
                       tau=1.0, ess=float(num_samples), seeds=[master_seed, [0]],
                       chain_index=np.zeros(num_samples, dtype=int),
                       sweep_index=np.arange(num_samples))


@dataclass
class ChainDiagnostics:
    tau: float
    ess: float
    split_rhat: float
    reliable: bool
    notes: list = field(default_factory=list)


def chain_diagnostics(batch: SampleBatch) -> ChainDiagnostics:
    """τ (initial positive sequence), ESS = draws/τ, and split-R̂ of Σλ_i."""
    if batch.draws < 100:
        raise InsufficientData("need >= 100 configurations for diagnostics")
    s = batch.configs.sum(axis=1)
    notes = []
    tau, reliable = integrated_autocorr_time(s)
    if not reliable:
        notes.append("autocorrelation estimate unreliable (saturated or degenerate)")
    ess = batch.draws / tau if np.isfinite(tau) and tau > 0 else float("nan")
    # split-R-hat over chains (each chain halved)
    halves = []
    if batch.chain_index is not None:
        for c in np.unique(batch.chain_index):
            sc = s[batch.chain_index == c]
            h = sc.size // 2
            if h >= 2:
                halves.extend([sc[:h], sc[h: 2 * h]])
    if len(halves) >= 2:
        mlen = min(len(h) for h in halves)
        H = np.array([h[:mlen] for h in halves])
        within = H.var(axis=1, ddof=1).mean()
        between = mlen * H.mean(axis=1).var(ddof=1)
        var_est = (mlen - 1) / mlen * within + between / mlen
        rhat = math.sqrt(var_est / within) if within > 0 else float("inf")
    else:
        rhat = float("nan")
        notes.append("too few chains for split-R-hat")
    return ChainDiagnostics(tau=tau, ess=ess, split_rhat=float(rhat),
                            reliable=reliable, notes=notes)
