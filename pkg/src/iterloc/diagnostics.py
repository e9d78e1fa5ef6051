"""Cross-chain MCMC quality statistics: split R-hat and effective sample size.

Both statistics use the rank-normalized formulation: draws are converted to
normal scores before the classic between/within-chain comparison, which makes
the diagnostics robust to heavy tails. Zero-variance (constant) chains are
flagged as degenerate rather than reported with a misleading number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.fft import next_fast_len
from scipy.stats import norm, rankdata

if TYPE_CHECKING:  # pragma: no cover
    from .sampler import SampleChain


@dataclass(frozen=True)
class Diagnostics:
    """Per-variable convergence statistics plus trajectory-level counters."""

    names: tuple[str, ...]
    rhat: np.ndarray
    ess: np.ndarray
    degenerate: np.ndarray
    divergences: int
    divergence_rate: float
    mean_tree_depth: float
    n_chains: int
    n_draws: int

    def max_rhat(self) -> float:
        finite = self.rhat[np.isfinite(self.rhat)]
        return float(finite.max()) if finite.size else float("nan")

    def min_ess(self) -> float:
        finite = self.ess[np.isfinite(self.ess)]
        return float(finite.min()) if finite.size else float("nan")

    def for_variable(self, name: str) -> tuple[float, float]:
        i = self.names.index(name)
        return float(self.rhat[i]), float(self.ess[i])


def _split_chains(x: np.ndarray) -> np.ndarray:
    """Halve each chain, doubling the chain count (drops one draw if odd)."""
    n = x.shape[1] // 2
    return np.vstack((x[:, :n], x[:, -n:]))


def _z_scale(x: np.ndarray) -> np.ndarray:
    """Rank-normalize draws to normal scores (pooled over all chains)."""
    ranks = rankdata(x, method="average").reshape(x.shape)
    return norm.ppf((ranks - 0.5) / x.size)


def _rhat_base(x: np.ndarray) -> float:
    """Classic potential scale reduction on already-split chains."""
    _, n = x.shape
    chain_mean = x.mean(axis=1)
    chain_var = x.var(axis=1, ddof=1)
    between = n * chain_mean.var(ddof=1)
    within = chain_var.mean()
    if within == 0:
        return float("nan")
    return float(np.sqrt((between / within + n - 1) / n))


def _autocov(y: np.ndarray) -> np.ndarray:
    n = y.size
    m = next_fast_len(2 * n)
    centered = y - y.mean()
    freq = np.fft.rfft(centered, m)
    acov = np.fft.irfft(freq * np.conj(freq), m)[:n]
    return acov / n


def _ess_base(x: np.ndarray) -> float:
    """Geyer initial-sequence ESS on already-split, already-scaled chains."""
    n_chain, n_draw = x.shape
    if n_draw < 4:
        return float("nan")
    acov = np.array([_autocov(x[m]) for m in range(n_chain)])
    chain_mean = x.mean(axis=1)
    mean_var = acov[:, 0].mean() * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += chain_mean.var(ddof=1)
    if var_plus == 0:
        return float("nan")

    rho_hat = np.zeros(n_draw)
    rho_hat[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho_hat[1] = rho_odd
    # Geyer initial positive sequence
    t = 1
    while t < n_draw - 2 and (rho_even + rho_odd) >= 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        rho_hat[t + 1] = rho_even
        if (rho_even + rho_odd) >= 0:
            rho_hat[t + 2] = rho_odd
        t += 2
    max_t = t
    # Geyer initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if (rho_hat[t + 1] + rho_hat[t + 2]) > (rho_hat[t - 1] + rho_hat[t]):
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0
            rho_hat[t + 2] = rho_hat[t + 1]
        t += 2
    tau_hat = -1.0 + 2.0 * rho_hat[:max_t].sum() + rho_hat[max_t + 1 : max_t + 2].sum()
    tau_hat = max(tau_hat, 1.0 / np.log10(n_chain * n_draw))
    return float(n_chain * n_draw / tau_hat)


def rhat(draws: np.ndarray) -> float:
    """Rank-normalized split R-hat for one variable, draws shaped (chains, n)."""
    draws = np.asarray(draws, dtype=float)
    if np.ptp(draws) == 0:
        return float("nan")
    bulk = _rhat_base(_z_scale(_split_chains(draws)))
    folded = np.abs(draws - np.median(draws))
    tail = _rhat_base(_z_scale(_split_chains(folded)))
    return max(bulk, tail)


def ess(draws: np.ndarray) -> float:
    """Rank-normalized bulk effective sample size, draws shaped (chains, n)."""
    draws = np.asarray(draws, dtype=float)
    if np.ptp(draws) == 0:
        return float("nan")
    return _ess_base(_z_scale(_split_chains(draws)))


def diagnostics(chains: Sequence["SampleChain"]) -> Diagnostics:
    """Cross-chain diagnostics over the post-warmup draws.

    Requires at least two chains of equal length; constant variables are
    flagged degenerate with NaN statistics.
    """
    if len(chains) < 2:
        raise ValueError("R-hat requires at least 2 chains")
    lengths = {c.draws.shape[0] for c in chains}
    if len(lengths) != 1:
        raise ValueError(f"chains have unequal lengths: {sorted(lengths)}")
    stacked = np.stack([c.draws for c in chains])  # (chains, draws, dim)
    names = chains[0].names
    dim = stacked.shape[2]
    rhat_arr = np.empty(dim)
    ess_arr = np.empty(dim)
    degenerate = np.zeros(dim, dtype=bool)
    for j in range(dim):
        var_draws = stacked[:, :, j]
        if np.ptp(var_draws) == 0:
            degenerate[j] = True
            rhat_arr[j] = np.nan
            ess_arr[j] = np.nan
        else:
            rhat_arr[j] = rhat(var_draws)
            ess_arr[j] = ess(var_draws)
    n_div = int(sum(c.divergent.sum() for c in chains))
    total = int(stacked.shape[0] * stacked.shape[1])
    mean_depth = float(np.mean([c.tree_depth.mean() for c in chains]))
    return Diagnostics(
        names=names,
        rhat=rhat_arr,
        ess=ess_arr,
        degenerate=degenerate,
        divergences=n_div,
        divergence_rate=n_div / total if total else 0.0,
        mean_tree_depth=mean_depth,
        n_chains=len(chains),
        n_draws=stacked.shape[1],
    )
