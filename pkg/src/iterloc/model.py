"""Probabilistic model for RSSI localization: priors, likelihood, gradients.

The latent variables are the target coordinates plus one (intercept, slope,
noise-std) triple per anchor; the likelihood treats every RSSI sample as an
independent Gaussian around ``rho0_i + eta_i * log10(D_i)``. The module
exposes the log-posterior density and its exact analytic gradient in an
unconstrained parameterization (scaled logit for interval supports, log for
positive supports), which is what a gradient-based sampler consumes.

Log-densities are reported up to an additive constant: terms that do not
depend on the latent values are dropped consistently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.special import expit

from .channel import MeasurementBatch
from .scenario import Anchor, Scenario

_LN10 = math.log(10.0)


class SupportError(ValueError):
    """A constrained value fell outside its prior's support."""


class LayoutError(ValueError):
    """A latent vector did not match the model's variable layout."""


# ---------------------------------------------------------------------------
# Prior families


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"Uniform requires lo < hi, got ({self.lo}, {self.hi})")


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not self.std > 0:
            raise ValueError(f"Normal requires std > 0, got {self.std}")


@dataclass(frozen=True)
class HalfNormal:
    scale: float

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError(f"HalfNormal requires scale > 0, got {self.scale}")


PriorSpec = Union[Uniform, Normal, HalfNormal]


def prior_sample(spec: PriorSpec, rng: np.random.Generator) -> float:
    """One draw from a prior in its natural (constrained) units."""
    if isinstance(spec, Uniform):
        return float(rng.uniform(spec.lo, spec.hi))
    if isinstance(spec, Normal):
        return float(rng.normal(spec.mean, spec.std))
    return float(abs(rng.normal(0.0, spec.scale)))


@dataclass(frozen=True)
class AnchorPriors:
    rho0: PriorSpec
    eta: PriorSpec
    sigma: PriorSpec

    def __post_init__(self) -> None:
        if isinstance(self.sigma, Normal):
            raise ValueError("sigma prior must have positive support (Uniform/HalfNormal)")


@dataclass(frozen=True)
class PriorSet:
    """Priors for the target coordinates and every anchor's channel triple."""

    x: PriorSpec
    y: PriorSpec
    per_anchor: dict[int, AnchorPriors]

    @property
    def anchor_ids(self) -> tuple[int, ...]:
        return tuple(self.per_anchor.keys())

    def names(self) -> tuple[str, ...]:
        out = ["x", "y"]
        for anchor_id in self.per_anchor:
            out += [f"rho0_{anchor_id}", f"eta_{anchor_id}", f"sigma_{anchor_id}"]
        return tuple(out)

    def specs(self) -> tuple[tuple[str, PriorSpec], ...]:
        """Ordered (name, spec) pairs matching the latent-vector layout."""
        out: list[tuple[str, PriorSpec]] = [("x", self.x), ("y", self.y)]
        for anchor_id, triple in self.per_anchor.items():
            out += [
                (f"rho0_{anchor_id}", triple.rho0),
                (f"eta_{anchor_id}", triple.eta),
                (f"sigma_{anchor_id}", triple.sigma),
            ]
        return tuple(out)

    @property
    def dim(self) -> int:
        return 2 + 3 * len(self.per_anchor)

    def index_of(self, name: str) -> int:
        try:
            return self.names().index(name)
        except ValueError:
            raise LayoutError(f"unknown latent variable {name!r}") from None


def initial_priors(scenario: Scenario) -> PriorSet:
    """Reference first-round priors: flat position, broad channel beliefs.

    Position is uniform over the rectangle; each anchor gets Normal(0, 100)
    on intercept and slope and HalfNormal(10) on its noise std.
    """
    per_anchor = {
        a.id: AnchorPriors(rho0=Normal(0.0, 100.0), eta=Normal(0.0, 100.0), sigma=HalfNormal(10.0))
        for a in scenario.anchors
    }
    return PriorSet(
        x=Uniform(0.0, scenario.length),
        y=Uniform(0.0, scenario.width),
        per_anchor=per_anchor,
    )


def sign_informed_priors(
    scenario: Scenario,
    rho0_mean: float = -40.0,
    rho0_sd: float = 8.0,
    eta_mean: float = -30.0,
    eta_sd: float = 8.0,
    sigma_scale: float = 10.0,
) -> PriorSet:
    """First-round priors that encode nominal channel calibration.

    The broad zero-centered channel priors of :func:`initial_priors` leave
    the position marginal nearly flat: every anchor's data can be explained
    by its own intercept/slope pair at any position. Deployments normally
    know the nominal reference power and the decay sign/magnitude range of
    their hardware; centering the channel priors there makes the position
    identifiable. Note ``eta_mean`` is negative: the model adds the slope
    times log-distance, so decaying channels have negative slopes.
    """
    per_anchor = {
        a.id: AnchorPriors(
            rho0=Normal(rho0_mean, rho0_sd),
            eta=Normal(eta_mean, eta_sd),
            sigma=HalfNormal(sigma_scale),
        )
        for a in scenario.anchors
    }
    return PriorSet(
        x=Uniform(0.0, scenario.length),
        y=Uniform(0.0, scenario.width),
        per_anchor=per_anchor,
    )


def updated_priors(
    summary: "Mapping[str, tuple[float, float]] | object",
    inflation: float = 2.0,
) -> PriorSet:
    """Feed a posterior summary back as the next round's priors.

    Every variable becomes Normal(posterior mean, inflation x posterior std)
    in its natural units; position supports are unbounded from here on. The
    noise stds stay in a positive-support family: HalfNormal with its scale
    matched to the posterior's second moment, sqrt(mean^2 + (inflation*std)^2),
    so the fed-back prior keeps both location and spread information without
    placing mass on negative stds.
    """
    if inflation <= 0:
        raise ValueError(f"inflation must be positive, got {inflation}")
    stats: Mapping[str, tuple[float, float]]
    if hasattr(summary, "mean_std"):
        stats = summary.mean_std()  # type: ignore[union-attr]
    else:
        stats = summary  # type: ignore[assignment]

    def moments(name: str) -> tuple[float, float]:
        mean, std = stats[name]
        if not std > 0:
            raise ValueError(f"posterior std for {name!r} must be positive, got {std}")
        return float(mean), float(std)

    anchor_ids = sorted({int(n.split("_", 1)[1]) for n in stats if n.startswith("rho0_")})
    per_anchor: dict[int, AnchorPriors] = {}
    for anchor_id in anchor_ids:
        r_mean, r_std = moments(f"rho0_{anchor_id}")
        e_mean, e_std = moments(f"eta_{anchor_id}")
        s_mean, s_std = moments(f"sigma_{anchor_id}")
        per_anchor[anchor_id] = AnchorPriors(
            rho0=Normal(r_mean, inflation * r_std),
            eta=Normal(e_mean, inflation * e_std),
            sigma=HalfNormal(math.sqrt(s_mean**2 + (inflation * s_std) ** 2)),
        )
    x_mean, x_std = moments("x")
    y_mean, y_std = moments("y")
    return PriorSet(
        x=Normal(x_mean, inflation * x_std),
        y=Normal(y_mean, inflation * y_std),
        per_anchor=per_anchor,
    )


# ---------------------------------------------------------------------------
# Unconstrained parameterization
#
# Uniform(lo, hi)  <->  scaled logit      theta = lo + (hi - lo) * expit(z)
# HalfNormal       <->  log               theta = exp(z)
# Normal           <->  identity


def _unconstrain_one(name: str, spec: PriorSpec, value: float) -> float:
    if isinstance(spec, Uniform):
        if not spec.lo < value < spec.hi:
            raise SupportError(f"{name}={value} outside Uniform({spec.lo}, {spec.hi}) support")
        p = (value - spec.lo) / (spec.hi - spec.lo)
        return math.log(p / (1.0 - p))
    if isinstance(spec, HalfNormal):
        if not value > 0:
            raise SupportError(f"{name}={value} outside positive support")
        return math.log(value)
    return float(value)


def _constrain_one(spec: PriorSpec, z: float) -> float:
    if isinstance(spec, Uniform):
        return spec.lo + (spec.hi - spec.lo) * float(expit(z))
    if isinstance(spec, HalfNormal):
        return math.exp(z)
    return float(z)


def unconstrain(priors: PriorSet, constrained: Mapping[str, float]) -> np.ndarray:
    """Map named constrained values to the flat unconstrained vector."""
    z = np.empty(priors.dim)
    for i, (name, spec) in enumerate(priors.specs()):
        if name not in constrained:
            raise LayoutError(f"missing value for latent variable {name!r}")
        z[i] = _unconstrain_one(name, spec, float(constrained[name]))
    return z


def constrain(priors: PriorSet, z: np.ndarray) -> dict[str, float]:
    """Inverse of :func:`unconstrain`."""
    z = np.asarray(z, dtype=float)
    if z.shape != (priors.dim,):
        raise LayoutError(f"expected latent vector of length {priors.dim}, got shape {z.shape}")
    return {name: _constrain_one(spec, z[i]) for i, (name, spec) in enumerate(priors.specs())}


@dataclass(frozen=True)
class LogDensityResult:
    log_density: float
    gradient: np.ndarray


class PosteriorDensity:
    """Log-posterior with analytic gradient, in unconstrained coordinates.

    Precomputes per-anchor sufficient statistics (count, sum, sum of
    squares), so one evaluation costs O(anchors) regardless of how many
    RSSI samples the batch holds. Instances are immutable after
    construction and safe to evaluate from multiple chains concurrently.

    With ``fixed_channel`` given, the channel triples are clamped to the
    supplied constants and the latent space reduces to the two position
    coordinates (used by oracle-vs-sampler validation).
    """

    def __init__(
        self,
        priors: PriorSet,
        batch: MeasurementBatch | None,
        anchors: Sequence[Anchor],
        fixed_channel: Mapping[int, tuple[float, float, float]] | None = None,
    ):
        coords = {a.id: (a.position.x, a.position.y) for a in anchors}
        missing = [i for i in priors.anchor_ids if i not in coords]
        if missing:
            raise LayoutError(f"anchors {missing} appear in priors but not in the anchor list")
        self._priors = priors
        self._fixed = None if fixed_channel is None else dict(fixed_channel)

        if self._fixed is None:
            self.names: tuple[str, ...] = priors.names()
            specs = [spec for _, spec in priors.specs()]
            ids = priors.anchor_ids
        else:
            bad = [i for i in priors.anchor_ids if i not in self._fixed]
            if bad:
                raise LayoutError(f"fixed_channel missing anchors {bad}")
            self.names = ("x", "y")
            specs = [priors.x, priors.y]
            ids = priors.anchor_ids
        self.dim = len(self.names)
        self._specs = tuple(specs)

        # Transform/prior bookkeeping, one entry per latent slot.
        idx_logit, lo, width = [], [], []
        idx_log = []
        idx_norm, norm_mean, norm_var = [], [], []
        idx_hn, hn_inv_var = [], []
        for i, spec in enumerate(specs):
            if isinstance(spec, Uniform):
                idx_logit.append(i)
                lo.append(spec.lo)
                width.append(spec.hi - spec.lo)
            elif isinstance(spec, Normal):
                idx_norm.append(i)
                norm_mean.append(spec.mean)
                norm_var.append(spec.std**2)
            else:
                idx_log.append(i)
                idx_hn.append(i)
                hn_inv_var.append(1.0 / spec.scale**2)
        self._idx_logit = np.array(idx_logit, dtype=np.intp)
        self._lo = np.array(lo)
        self._width = np.array(width)
        self._idx_log = np.array(idx_log, dtype=np.intp)
        self._idx_norm = np.array(idx_norm, dtype=np.intp)
        self._norm_mean = np.array(norm_mean)
        self._norm_inv_var = 1.0 / np.array(norm_var) if norm_var else np.array([])
        self._idx_hn = np.array(idx_hn, dtype=np.intp)
        self._hn_inv_var = np.array(hn_inv_var)

        # Anchor geometry and sufficient statistics, ordered like the priors.
        self._ax = np.array([coords[i][0] for i in ids])
        self._ay = np.array([coords[i][1] for i in ids])
        if batch is not None and any(batch.rssi.get(i, np.empty(0)).size for i in ids):
            absent = [i for i in ids if i not in batch.rssi]
            if absent:
                raise LayoutError(f"measurement batch missing anchors {absent}")
            arrays = [batch.rssi[i] for i in ids]
            self._n = np.array([a.size for a in arrays], dtype=float)
            self._s1 = np.array([a.sum() for a in arrays])
            self._s2 = np.array([np.square(a).sum() for a in arrays])
            self._has_data = True
        else:
            self._n = np.zeros(len(ids))
            self._s1 = np.zeros(len(ids))
            self._s2 = np.zeros(len(ids))
            self._has_data = False
        if self._fixed is not None:
            fixed = np.array([self._fixed[i] for i in ids])
            self._f_rho0, self._f_eta, self._f_sigma = fixed[:, 0], fixed[:, 1], fixed[:, 2]
            if np.any(self._f_sigma <= 0):
                raise ValueError("fixed_channel sigma values must be positive")

    def logp_grad(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        """Log-density (up to a constant) and its gradient at ``z``."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise LayoutError(f"expected latent vector of length {self.dim}, got shape {z.shape}")
        grad = np.zeros(self.dim)
        logp = 0.0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            theta = z.copy()
            if self._idx_logit.size:
                s = expit(z[self._idx_logit])
                theta[self._idx_logit] = self._lo + self._width * s
            if self._idx_log.size:
                theta[self._idx_log] = np.exp(z[self._idx_log])

            # Prior terms (constants dropped).
            if self._idx_norm.size:
                r = theta[self._idx_norm] - self._norm_mean
                logp -= 0.5 * float(np.dot(r * r, self._norm_inv_var))
                grad[self._idx_norm] -= r * self._norm_inv_var
            if self._idx_hn.size:
                th = theta[self._idx_hn]
                logp -= 0.5 * float(np.dot(th * th, self._hn_inv_var))
                grad[self._idx_hn] -= th * self._hn_inv_var

            # Gaussian likelihood via per-anchor sufficient statistics.
            if self._has_data:
                dx = theta[0] - self._ax
                dy = theta[1] - self._ay
                d2 = dx * dx + dy * dy
                if np.any(d2 <= 0.0):
                    return -np.inf, np.zeros(self.dim)
                log10d = 0.5 * np.log10(d2)
                if self._fixed is None:
                    rho0 = theta[2::3]
                    eta = theta[3::3]
                    sigma = theta[4::3]
                else:
                    rho0, eta, sigma = self._f_rho0, self._f_eta, self._f_sigma
                mu = rho0 + eta * log10d
                inv_s2 = 1.0 / (sigma * sigma)
                q = self._s2 - 2.0 * mu * self._s1 + self._n * mu * mu
                logp += float(np.sum(-0.5 * q * inv_s2 - self._n * np.log(sigma)))
                dmu = (self._s1 - self._n * mu) * inv_s2
                if self._fixed is None:
                    grad[2::3] += dmu
                    grad[3::3] += dmu * log10d
                    grad[4::3] += q * inv_s2 / sigma - self._n / sigma
                c = dmu * eta / (_LN10 * d2)
                grad[0] += float(np.dot(c, dx))
                grad[1] += float(np.dot(c, dy))

            # Change-of-variables terms and chain rule to unconstrained space.
            if self._idx_logit.size:
                zl = z[self._idx_logit]
                # log s + log(1 - s) written via softplus to stay finite for large |z|
                logp -= float(np.sum(np.logaddexp(0.0, -zl) + np.logaddexp(0.0, zl)))
                grad[self._idx_logit] = (
                    grad[self._idx_logit] * self._width * s * (1.0 - s) + (1.0 - 2.0 * s)
                )
            if self._idx_log.size:
                th = theta[self._idx_log]
                logp += float(np.sum(z[self._idx_log]))
                grad[self._idx_log] = grad[self._idx_log] * th + 1.0

        if not np.isfinite(logp):
            return -np.inf, np.zeros(self.dim)
        return logp, grad

    def constrain_matrix(self, draws: np.ndarray) -> np.ndarray:
        """Map unconstrained draws (rows) to constrained space."""
        draws = np.atleast_2d(np.asarray(draws, dtype=float))
        out = draws.copy()
        if self._idx_logit.size:
            out[:, self._idx_logit] = self._lo + self._width * expit(draws[:, self._idx_logit])
        if self._idx_log.size:
            out[:, self._idx_log] = np.exp(draws[:, self._idx_log])
        return out


def log_posterior(
    priors: PriorSet,
    batch: MeasurementBatch | None,
    anchors: Sequence[Anchor],
    v: np.ndarray,
) -> LogDensityResult:
    """Evaluate the log-posterior and gradient at one unconstrained point.

    Convenience wrapper; hot loops should construct a
    :class:`PosteriorDensity` once and call ``logp_grad`` repeatedly.
    """
    density = PosteriorDensity(priors, batch, anchors)
    logp, grad = density.logp_grad(v)
    return LogDensityResult(log_density=logp, gradient=grad)


# ---------------------------------------------------------------------------
# PriorSet serialization (round-trippable)


def _spec_to_obj(spec: PriorSpec) -> dict:
    if isinstance(spec, Uniform):
        return {"family": "uniform", "lo": spec.lo, "hi": spec.hi}
    if isinstance(spec, Normal):
        return {"family": "normal", "mean": spec.mean, "std": spec.std}
    return {"family": "halfnormal", "scale": spec.scale}


def _spec_from_obj(obj: Mapping) -> PriorSpec:
    family = obj.get("family")
    if family == "uniform":
        return Uniform(float(obj["lo"]), float(obj["hi"]))
    if family == "normal":
        return Normal(float(obj["mean"]), float(obj["std"]))
    if family == "halfnormal":
        return HalfNormal(float(obj["scale"]))
    raise ValueError(f"unknown prior family {family!r}")


def priors_to_json(priors: PriorSet) -> str:
    payload = {
        "x": _spec_to_obj(priors.x),
        "y": _spec_to_obj(priors.y),
        "anchors": {
            str(i): {
                "rho0": _spec_to_obj(t.rho0),
                "eta": _spec_to_obj(t.eta),
                "sigma": _spec_to_obj(t.sigma),
            }
            for i, t in priors.per_anchor.items()
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def priors_from_json(text: str | Path) -> PriorSet:
    if isinstance(text, Path):
        text = text.read_text(encoding="utf-8")
    payload = json.loads(text)
    per_anchor = {
        int(i): AnchorPriors(
            rho0=_spec_from_obj(t["rho0"]),
            eta=_spec_from_obj(t["eta"]),
            sigma=_spec_from_obj(t["sigma"]),
        )
        for i, t in sorted(payload["anchors"].items(), key=lambda kv: int(kv[0]))
    }
    return PriorSet(
        x=_spec_from_obj(payload["x"]),
        y=_spec_from_obj(payload["y"]),
        per_anchor=per_anchor,
    )
