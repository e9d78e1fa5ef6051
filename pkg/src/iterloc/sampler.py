"""No-U-Turn sampling over any log-density with gradient.

One transition simulates Hamiltonian dynamics with the leapfrog integrator,
doubling the trajectory backward or forward at random until the path starts
to double back on itself (or diverges), then picks the next state by
multinomial sampling over the whole trajectory. Warmup adapts the step size
by dual averaging toward a target acceptance statistic and estimates a
diagonal mass matrix over doubling windows of the warmup draws; warmup draws
are discarded.

Targets are duck-typed: they need ``dim`` and ``logp_grad(z) -> (float,
ndarray)``, and may provide ``names`` and ``constrain_matrix`` to report
draws in a natural parameter space.

Chains are independent: chain ``c`` of a run seeded with ``s`` draws from
``numpy.random.SeedSequence(s, spawn_key=(c,))``, so results do not depend
on scheduling and identical configs reproduce bit-identical draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .diagnostics import Diagnostics, diagnostics
from .model import HalfNormal, PriorSet, Uniform, prior_sample, unconstrain

# Hamiltonian error beyond which a transition is recorded as divergent.
DIVERGENCE_THRESHOLD = 1000.0


class Target(Protocol):  # pragma: no cover - structural typing only
    dim: int

    def logp_grad(self, z: np.ndarray) -> tuple[float, np.ndarray]: ...


class InitializationError(RuntimeError):
    """The target density was not finite at the requested starting point."""


class SamplingFailureError(RuntimeError):
    """A chain produced no usable draws (every transition diverged)."""

    def __init__(self, message: str, diagnostics: Diagnostics | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup_draws: int = 500
    sampling_draws: int = 500
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    initial_step_size: float | None = None

    def __post_init__(self) -> None:
        if self.chains < 1:
            raise ValueError(f"chains must be >= 1, got {self.chains}")
        if self.warmup_draws < 1 or self.sampling_draws < 1:
            raise ValueError("warmup_draws and sampling_draws must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError(f"target_accept must be in (0, 1), got {self.target_accept}")
        if not 1 <= self.max_tree_depth <= 15:
            raise ValueError(f"max_tree_depth must be in [1, 15], got {self.max_tree_depth}")
        if self.initial_step_size is not None and self.initial_step_size <= 0:
            raise ValueError("initial_step_size must be positive")


@dataclass(frozen=True)
class SampleChain:
    """Post-warmup draws of one chain, in constrained space, plus diagnostics."""

    chain_id: int
    names: tuple[str, ...]
    draws: np.ndarray        # (sampling_draws, dim)
    divergent: np.ndarray    # bool per draw
    tree_depth: np.ndarray   # int per draw
    step_size: np.ndarray    # float per draw
    accept_stat: np.ndarray  # mean leapfrog acceptance statistic per draw

    def __post_init__(self) -> None:
        n = self.draws.shape[0]
        for name in ("divergent", "tree_depth", "step_size", "accept_stat"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} length must equal draw count {n}")


def initialize(priors: PriorSet, seed: int | np.random.SeedSequence | np.random.Generator) -> np.ndarray:
    """Draw one starting point from the priors, in unconstrained space."""
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
        rng = np.random.default_rng(ss)
    values: dict[str, float] = {}
    for name, spec in priors.specs():
        value = prior_sample(spec, rng)
        # Nudge measure-zero boundary draws into the open support.
        if isinstance(spec, Uniform):
            margin = 1e-9 * (spec.hi - spec.lo)
            value = min(max(value, spec.lo + margin), spec.hi - margin)
        elif isinstance(spec, HalfNormal):
            value = max(value, 1e-12 * spec.scale)
        values[name] = value
    return unconstrain(priors, values)


# ---------------------------------------------------------------------------
# Integrator and adaptation pieces


def leapfrog(
    target: Target,
    z: np.ndarray,
    p: np.ndarray,
    grad: np.ndarray,
    step: float,
    inv_mass: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, float, np.ndarray]:
    """One leapfrog step; returns (z', p', logp', grad')."""
    p_half = p + 0.5 * step * grad
    z_new = z + step * inv_mass * p_half
    logp_new, grad_new = target.logp_grad(z_new)
    p_new = p_half + 0.5 * step * grad_new
    return z_new, p_new, logp_new, grad_new


def _kinetic(p: np.ndarray, inv_mass: np.ndarray) -> float:
    return 0.5 * float(np.dot(p, inv_mass * p))


def find_reasonable_step_size(
    target: Target,
    z: np.ndarray,
    logp: float,
    grad: np.ndarray,
    inv_mass: np.ndarray,
    rng: np.random.Generator,
) -> float:
    """Double/halve the step until one-step acceptance crosses one half."""
    step = 1.0
    p = rng.normal(size=z.size) / np.sqrt(inv_mass)
    h0 = logp - _kinetic(p, inv_mass)

    def energy_delta(eps: float) -> float:
        _, p_new, logp_new, _ = leapfrog(target, z, p, grad, eps, inv_mass)
        h_new = logp_new - _kinetic(p_new, inv_mass)
        return h_new - h0 if np.isfinite(h_new) else -np.inf

    delta = energy_delta(step)
    direction = 1.0 if delta > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * delta <= -direction * math.log(2.0):
            break
        step *= 2.0**direction
        if not 1e-10 < step < 1e7:
            break
        delta = energy_delta(step)
    return step


class _DualAveraging:
    """Step-size adaptation driving the acceptance statistic to a target."""

    def __init__(self, initial_step: float, target_accept: float,
                 gamma: float = 0.05, t0: float = 10.0, kappa: float = 0.75):
        self.target_accept = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(initial_step)

    def restart(self, initial_step: float) -> None:
        self.mu = math.log(10.0 * initial_step)
        self.log_step = math.log(initial_step)
        self.log_step_avg = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_stat: float) -> None:
        self.count += 1
        frac = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target_accept - accept_stat)
        self.log_step = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        weight = self.count**-self.kappa
        self.log_step_avg = weight * self.log_step + (1.0 - weight) * self.log_step_avg

    @property
    def current(self) -> float:
        return math.exp(self.log_step)

    @property
    def adapted(self) -> float:
        return math.exp(self.log_step_avg)


class _Welford:
    """Running mean/variance of warmup draws for mass-matrix estimation."""

    def __init__(self, dim: int):
        self.dim = dim
        self.reset()

    def reset(self) -> None:
        self.count = 0
        self.mean = np.zeros(self.dim)
        self._m2 = np.zeros(self.dim)

    def add(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)

    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(self.dim)
        var = self._m2 / (self.count - 1)
        # Shrink toward a small diagonal, as adaptive HMC implementations do,
        # so short windows cannot produce a degenerate metric.
        w = self.count / (self.count + 5.0)
        return w * var + (1.0 - w) * 1e-3


def _adaptation_windows(warmup: int) -> tuple[int, list[int]]:
    """(first draw index of slow phase, draw indices closing each window)."""
    if warmup < 20:
        return warmup, []
    if warmup >= 150:
        init_buffer, term_buffer, base = 75, 50, 25
    else:
        init_buffer = max(1, (15 * warmup) // 100)
        term_buffer = max(1, (10 * warmup) // 100)
        base = max(1, (warmup - init_buffer - term_buffer) // 4)
    boundaries: list[int] = []
    pos = init_buffer
    remaining = warmup - init_buffer - term_buffer
    size = base
    while remaining > 0:
        if remaining < 2 * size:
            size = remaining
        boundaries.append(pos + size)
        pos += size
        remaining -= size
        size *= 2
    return init_buffer, boundaries


# ---------------------------------------------------------------------------
# The trajectory tree


@dataclass
class _Subtree:
    z_minus: np.ndarray
    p_minus: np.ndarray
    grad_minus: np.ndarray
    z_plus: np.ndarray
    p_plus: np.ndarray
    grad_plus: np.ndarray
    z_prop: np.ndarray
    logp_prop: float
    grad_prop: np.ndarray
    log_sum_weight: float
    p_sum: np.ndarray
    alpha_sum: float
    n_alpha: int
    n_leapfrog: int
    valid: bool
    divergent: bool


class _NutsKernel:
    def __init__(self, target: Target, rng: np.random.Generator, max_tree_depth: int):
        self.target = target
        self.rng = rng
        self.max_tree_depth = max_tree_depth
        self.inv_mass = np.ones(target.dim)
        self.step = 1.0

    def set_inv_mass(self, inv_mass: np.ndarray) -> None:
        self.inv_mass = inv_mass

    def _turning(self, p_sum: np.ndarray, p_first: np.ndarray, p_last: np.ndarray) -> bool:
        v = self.inv_mass * p_sum
        return float(np.dot(v, p_first)) <= 0.0 or float(np.dot(v, p_last)) <= 0.0

    def _leaf(self, z, p, grad, direction: int, h0: float) -> _Subtree:
        z1, p1, logp1, grad1 = leapfrog(self.target, z, p, grad, direction * self.step, self.inv_mass)
        h1 = logp1 - _kinetic(p1, self.inv_mass) if np.isfinite(logp1) else -np.inf
        delta = h1 - h0 if np.isfinite(h1) else -np.inf
        divergent = delta < -DIVERGENCE_THRESHOLD
        alpha = min(1.0, math.exp(min(delta, 0.0))) if np.isfinite(delta) else 0.0
        return _Subtree(
            z_minus=z1, p_minus=p1, grad_minus=grad1,
            z_plus=z1, p_plus=p1, grad_plus=grad1,
            z_prop=z1, logp_prop=logp1, grad_prop=grad1,
            log_sum_weight=delta, p_sum=p1.copy(),
            alpha_sum=alpha, n_alpha=1, n_leapfrog=1,
            valid=not divergent, divergent=divergent,
        )

    def _build(self, depth: int, z, p, grad, direction: int, h0: float) -> _Subtree:
        """Subtree of 2**depth leapfrog steps extending from (z, p)."""
        if depth == 0:
            return self._leaf(z, p, grad, direction, h0)
        first = self._build(depth - 1, z, p, grad, direction, h0)
        if not first.valid:
            return first
        if direction == 1:
            z_ext, p_ext, grad_ext = first.z_plus, first.p_plus, first.grad_plus
        else:
            z_ext, p_ext, grad_ext = first.z_minus, first.p_minus, first.grad_minus
        second = self._build(depth - 1, z_ext, p_ext, grad_ext, direction, h0)
        return self._merge(first, second, direction)

    def _merge(self, first: _Subtree, second: _Subtree, direction: int) -> _Subtree:
        """Combine two equal-depth subtrees; ``second`` extends ``first``."""
        if direction == 1:
            earlier, later = first, second
        else:
            earlier, later = second, first
        merged = _Subtree(
            z_minus=earlier.z_minus, p_minus=earlier.p_minus, grad_minus=earlier.grad_minus,
            z_plus=later.z_plus, p_plus=later.p_plus, grad_plus=later.grad_plus,
            z_prop=first.z_prop, logp_prop=first.logp_prop, grad_prop=first.grad_prop,
            log_sum_weight=np.logaddexp(first.log_sum_weight, second.log_sum_weight),
            p_sum=first.p_sum + second.p_sum,
            alpha_sum=first.alpha_sum + second.alpha_sum,
            n_alpha=first.n_alpha + second.n_alpha,
            n_leapfrog=first.n_leapfrog + second.n_leapfrog,
            valid=first.valid and second.valid,
            divergent=first.divergent or second.divergent,
        )
        if not merged.valid:
            return merged
        # Multinomial choice between the two halves.
        accept_second = math.exp(min(0.0, second.log_sum_weight - merged.log_sum_weight))
        if self.rng.random() < accept_second:
            merged.z_prop = second.z_prop
            merged.logp_prop = second.logp_prop
            merged.grad_prop = second.grad_prop
        # U-turn tests on the merged tree and across the seam.
        if self._turning(merged.p_sum, merged.p_minus, merged.p_plus):
            merged.valid = False
        seam_minus = earlier.p_sum + later.p_minus
        if self._turning(seam_minus, earlier.p_minus, later.p_minus):
            merged.valid = False
        seam_plus = later.p_sum + earlier.p_plus
        if self._turning(seam_plus, earlier.p_plus, later.p_plus):
            merged.valid = False
        return merged

    def transition(self, z: np.ndarray, logp: float, grad: np.ndarray):
        """One NUTS update from (z, logp, grad); returns state + statistics."""
        p0 = self.rng.normal(size=z.size) / np.sqrt(self.inv_mass)
        h0 = logp - _kinetic(p0, self.inv_mass)
        tree = _Subtree(
            z_minus=z, p_minus=p0, grad_minus=grad,
            z_plus=z, p_plus=p0, grad_plus=grad,
            z_prop=z, logp_prop=logp, grad_prop=grad,
            log_sum_weight=0.0, p_sum=p0.copy(),
            alpha_sum=0.0, n_alpha=0, n_leapfrog=0,
            valid=True, divergent=False,
        )
        depth = 0
        while depth < self.max_tree_depth:
            direction = 1 if self.rng.random() < 0.5 else -1
            if direction == 1:
                sub = self._build(depth, tree.z_plus, tree.p_plus, tree.grad_plus, 1, h0)
            else:
                sub = self._build(depth, tree.z_minus, tree.p_minus, tree.grad_minus, -1, h0)
            tree.alpha_sum += sub.alpha_sum
            tree.n_alpha += sub.n_alpha
            tree.n_leapfrog += sub.n_leapfrog
            tree.divergent = tree.divergent or sub.divergent
            if not sub.valid:
                break
            # Sample between the old tree and the new half (biased toward the
            # new half, which favors longer jumps).
            accept_new = math.exp(min(0.0, sub.log_sum_weight - tree.log_sum_weight))
            if self.rng.random() < accept_new:
                tree.z_prop = sub.z_prop
                tree.logp_prop = sub.logp_prop
                tree.grad_prop = sub.grad_prop
            old_minus, old_plus = tree.p_minus.copy(), tree.p_plus.copy()
            old_p_sum = tree.p_sum.copy()
            if direction == 1:
                seam_p = sub.p_minus
                tree.z_plus, tree.p_plus, tree.grad_plus = sub.z_plus, sub.p_plus, sub.grad_plus
            else:
                seam_p = sub.p_plus
                tree.z_minus, tree.p_minus, tree.grad_minus = sub.z_minus, sub.p_minus, sub.grad_minus
            tree.log_sum_weight = np.logaddexp(tree.log_sum_weight, sub.log_sum_weight)
            tree.p_sum = tree.p_sum + sub.p_sum
            depth += 1
            if self._turning(tree.p_sum, tree.p_minus, tree.p_plus):
                break
            # Seam checks between the previous tree and the new subtree.
            if direction == 1:
                if self._turning(old_p_sum + seam_p, old_minus, seam_p):
                    break
                if self._turning(sub.p_sum + old_plus, old_plus, tree.p_plus):
                    break
            else:
                if self._turning(old_p_sum + seam_p, seam_p, old_plus):
                    break
                if self._turning(sub.p_sum + old_minus, tree.p_minus, old_minus):
                    break
        accept_stat = tree.alpha_sum / max(tree.n_alpha, 1)
        return (
            tree.z_prop,
            tree.logp_prop,
            tree.grad_prop,
            depth,
            tree.divergent,
            accept_stat,
            tree.n_leapfrog,
        )


# ---------------------------------------------------------------------------
# Chain driver


def _run_chain(
    target: Target,
    config: SamplerConfig,
    z0: np.ndarray,
    chain_id: int,
    names: tuple[str, ...],
) -> SampleChain:
    ss = np.random.SeedSequence(entropy=int(config.seed), spawn_key=(int(chain_id),))
    rng = np.random.default_rng(ss)
    logp, grad = target.logp_grad(np.asarray(z0, dtype=float))
    if not np.isfinite(logp):
        raise InitializationError(
            f"chain {chain_id}: log-density not finite at the initial point"
        )
    z = np.asarray(z0, dtype=float).copy()

    kernel = _NutsKernel(target, rng, config.max_tree_depth)
    step0 = config.initial_step_size or find_reasonable_step_size(
        target, z, logp, grad, kernel.inv_mass, rng
    )
    averaging = _DualAveraging(step0, config.target_accept)
    welford = _Welford(target.dim)
    slow_start, boundaries = _adaptation_windows(config.warmup_draws)
    boundary_set = set(boundaries)

    for m in range(config.warmup_draws):
        kernel.step = averaging.current
        z, logp, grad, *_rest = kernel.transition(z, logp, grad)
        depth, divergent, accept, _ = _rest
        averaging.update(accept)
        if m >= slow_start:
            welford.add(z)
        if (m + 1) in boundary_set:
            kernel.set_inv_mass(welford.variance())
            welford.reset()
            step_new = find_reasonable_step_size(target, z, logp, grad, kernel.inv_mass, rng)
            averaging.restart(step_new)

    kernel.step = averaging.adapted
    n = config.sampling_draws
    draws = np.empty((n, target.dim))
    divergent_arr = np.zeros(n, dtype=bool)
    depth_arr = np.zeros(n, dtype=int)
    accept_arr = np.zeros(n)
    for m in range(n):
        z, logp, grad, depth, divergent, accept, _ = kernel.transition(z, logp, grad)
        draws[m] = z
        divergent_arr[m] = divergent
        depth_arr[m] = depth
        accept_arr[m] = accept

    constrained = target.constrain_matrix(draws) if hasattr(target, "constrain_matrix") else draws
    return SampleChain(
        chain_id=chain_id,
        names=names,
        draws=constrained,
        divergent=divergent_arr,
        tree_depth=depth_arr,
        step_size=np.full(n, kernel.step),
        accept_stat=accept_arr,
    )


def sample(
    target: Target,
    config: SamplerConfig,
    init: np.ndarray,
) -> tuple[list[SampleChain], Diagnostics | None]:
    """Run independent NUTS chains against ``target``.

    ``init`` is either one unconstrained point shared by every chain or a
    (chains, dim) array of per-chain starting points. Returns the chains
    (constrained draws) and cross-chain diagnostics (None for a single
    chain, where R-hat is undefined).
    """
    init = np.asarray(init, dtype=float)
    if init.ndim == 1:
        init = np.tile(init, (config.chains, 1))
    if init.shape != (config.chains, target.dim):
        raise ValueError(f"init must have shape ({config.chains}, {target.dim}), got {init.shape}")
    names = tuple(getattr(target, "names", tuple(f"z{i}" for i in range(target.dim))))

    chains = [
        _run_chain(target, config, init[c], chain_id=c, names=names)
        for c in range(config.chains)
    ]
    diag = diagnostics(chains) if config.chains >= 2 else None
    for chain in chains:
        if chain.divergent.all():
            raise SamplingFailureError(
                f"chain {chain.chain_id}: every post-warmup transition diverged",
                diagnostics=diag,
            )
    return chains, diag
