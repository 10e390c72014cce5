"""Analytic diffusion dynamics on Gaussian mixtures.

The data distribution is a finite isotropic Gaussian mixture, for which the
noised marginal at noise level ``t`` (the mixture convolved with N(0, t^2 I))
has a closed-form density and score. On top of that this module provides the
power-law time grid, the stochastic Heun stepper for the reverse-time SDE

    dx = -(t + beta * t^2) * score(x, t) dt + sqrt(2 beta) t dw,

and the deterministic clean-state map obtained by integrating the beta=0
probability-flow ODE down to a small floor time.

All state-valued functions accept arrays of shape ``(..., dim)`` and
broadcast over leading axes, so ensembles of samples evolve in one call.
Everything here is pure: randomness only enters through explicitly passed
``numpy.random.Generator`` handles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ConfigurationError",
    "DensityUnderflowError",
    "InvalidStateError",
    "MixtureModel",
    "Schedule",
    "ScheduleError",
    "diffusion_coeff",
    "drift",
    "heun_sde_step",
    "karras_schedule",
    "mixture_log_density",
    "mixture_score",
    "ode_map",
    "sample_prior",
]


class InvalidStateError(ValueError):
    """A state vector contains NaN or infinite entries."""


class DensityUnderflowError(ArithmeticError):
    """Every mixture component underflowed; the score is undefined."""


class ConfigurationError(ValueError):
    """A parameter violates its documented precondition."""


class ScheduleError(ValueError):
    """A time step would leave the valid (strictly positive) time range."""


@dataclass(frozen=True)
class MixtureModel:
    """Isotropic Gaussian mixture used as the analytic data distribution.

    Parameters
    ----------
    dim:
        State dimension.
    weights:
        Component weights, shape ``(n_components,)``; must sum to 1.
    means:
        Component means, shape ``(n_components, dim)``.
    scales:
        Per-component isotropic standard deviations, shape
        ``(n_components,)``; a scale of 0 is a point mass.
    """

    dim: int
    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        means = np.asarray(self.means, dtype=float)
        scales = np.asarray(self.scales, dtype=float)
        if self.dim < 1:
            raise ConfigurationError("model dimension must be >= 1")
        if weights.ndim != 1 or weights.size < 1:
            raise ConfigurationError("at least one mixture component required")
        if means.shape != (weights.size, self.dim):
            raise ConfigurationError(
                f"means must have shape ({weights.size}, {self.dim}), got {means.shape}"
            )
        if scales.shape != (weights.size,):
            raise ConfigurationError("scales must have one entry per component")
        if np.any(scales < 0):
            raise ConfigurationError("scales must be nonnegative")
        if np.any(weights <= 0):
            raise ConfigurationError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigurationError("weights must sum to 1 within 1e-12")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "_log_weights", np.log(weights))
        object.__setattr__(self, "_mean_sq", np.sum(means * means, axis=-1))

    @property
    def n_components(self) -> int:
        return self.weights.size

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureModel":
        """Build a model from the on-disk JSON document layout."""
        try:
            dim = int(doc["dim"])
            comps = doc["components"]
            weights = [c["weight"] for c in comps]
            means = [c["mean"] for c in comps]
            scales = [c["scale"] for c in comps]
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed mixture document: {exc}") from exc
        return cls(
            dim=dim,
            weights=np.asarray(weights, dtype=float),
            means=np.asarray(means, dtype=float),
            scales=np.asarray(scales, dtype=float),
        )

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "components": [
                {"weight": float(w), "mean": [float(v) for v in m], "scale": float(s)}
                for w, m, s in zip(self.weights, self.means, self.scales)
            ],
        }

    @classmethod
    def from_json(cls, path: str | Path) -> "MixtureModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def data_rng_sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw exact samples from the clean data distribution."""
        idx = rng.choice(self.n_components, size=size, p=self.weights)
        eps = rng.standard_normal((size, self.dim))
        return self.means[idx] + self.scales[idx, None] * eps


@dataclass(frozen=True)
class Schedule:
    """Strictly decreasing noise-level grid t_1 > ... > t_T."""

    times: np.ndarray
    rho: float
    t_min: float
    t_max: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ConfigurationError("schedule needs at least two grid points")
        if not (times[0] == self.t_max and times[-1] == self.t_min):
            raise ConfigurationError("schedule endpoints must equal t_max and t_min")
        if np.any(np.diff(times) >= 0):
            raise ConfigurationError("schedule times must be strictly decreasing")
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return self.times.size

    @property
    def deltas(self) -> np.ndarray:
        """Positive step sizes t_i - t_{i+1}."""
        return -np.diff(self.times)


def karras_schedule(n_steps: int, rho: float, t_min: float, t_max: float) -> Schedule:
    """Power-law time grid t_i = (t_max^(1/rho) + u_i (t_min^(1/rho) - t_max^(1/rho)))^rho.

    ``n_steps`` is the number of grid points (T in sampling configs); the grid
    interpolates u_i = (i-1)/(T-1) and is pinned exactly to t_max and t_min at
    the endpoints.
    """
    if n_steps < 2:
        raise ConfigurationError("schedule needs n_steps >= 2")
    if not (0 < t_min < t_max):
        raise ConfigurationError("need 0 < t_min < t_max")
    if rho <= 0:
        raise ConfigurationError("rho must be positive")
    u = np.arange(n_steps, dtype=float) / (n_steps - 1)
    times = (t_max ** (1 / rho) + u * (t_min ** (1 / rho) - t_max ** (1 / rho))) ** rho
    times[0] = t_max
    times[-1] = t_min
    return Schedule(times=times, rho=float(rho), t_min=float(t_min), t_max=float(t_max))


def _check_state(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise InvalidStateError(f"invalid state: expected last axis {dim}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidStateError("invalid state: non-finite entries")
    return x


def _log_density_terms(model: MixtureModel, x: np.ndarray, t: float):
    """Responsibilities and log density of the noised marginal.

    The squared distances to the component means are expanded through a
    single contraction (never materializing a (..., components, dim) tensor)
    and the responsibilities are normalized in log space, so four orders of
    magnitude in ``t`` cannot underflow. Reductions run over the component
    axis per output element, which keeps results bit-identical whether a
    state is evaluated alone or inside a batch.
    """
    if t <= 0:
        raise ConfigurationError("t must be positive")
    x = _check_state(x, model.dim)
    variances = model.scales**2 + t * t  # (C,)
    with np.errstate(over="ignore"):  # extreme states overflow to inf, caught below
        cross = np.einsum("...d,cd->...c", x, model.means)
        sq = np.sum(x * x, axis=-1)[..., None] - 2.0 * cross + model._mean_sq
    log_terms = (
        model._log_weights
        - 0.5 * model.dim * np.log(2.0 * np.pi * variances)
        - sq / (2.0 * variances)
    )
    peak = np.max(log_terms, axis=-1, keepdims=True)
    if not np.all(np.isfinite(peak)):
        raise DensityUnderflowError("density underflow: all components vanished")
    rel = np.exp(log_terms - peak)
    total = np.sum(rel, axis=-1, keepdims=True)
    gamma = rel / total
    log_density = np.squeeze(peak + np.log(total), axis=-1)
    return x, variances, gamma, log_density


def mixture_log_density(model: MixtureModel, x: np.ndarray, t: float) -> np.ndarray:
    """log p(x, t) of the noised marginal, stable across the full t range."""
    return _log_density_terms(model, x, t)[3]


def mixture_score(model: MixtureModel, x: np.ndarray, t: float) -> np.ndarray:
    """Closed-form grad_x log p(x, t) for the noised mixture marginal.

    With per-component variances v_i = scale_i^2 + t^2 and responsibilities
    gamma_i proportional to w_i N(x; mu_i, v_i I), the score is
    sum_i gamma_i (mu_i - x) / v_i.
    """
    x, variances, gamma, _ = _log_density_terms(model, x, t)
    scaled = gamma / variances  # (..., C)
    return np.einsum("...c,cd->...d", scaled, model.means) - x * np.sum(
        scaled, axis=-1, keepdims=True
    )


def drift(model: MixtureModel, x: np.ndarray, t: float, beta: float) -> np.ndarray:
    """Reverse-time drift -(t + beta t^2) * score(x, t)."""
    if beta < 0:
        raise ConfigurationError("beta must be nonnegative")
    return -(t + beta * t * t) * mixture_score(model, x, t)


def diffusion_coeff(t: float, beta: float) -> float:
    """Noise injection coefficient sqrt(2 beta) * t."""
    if beta < 0:
        raise ConfigurationError("beta must be nonnegative")
    return float(np.sqrt(2.0 * beta) * t)


def heun_sde_step(
    model: MixtureModel,
    x: np.ndarray,
    z: np.ndarray | None,
    t: float,
    delta: float,
    beta: float,
) -> np.ndarray:
    """One stochastic Heun (predictor-corrector) step from t to t - delta.

    The same noise vector seeds both the Euler predictor and the corrected
    step; with beta = 0 the step is the deterministic 2nd-order ODE step and
    ``z`` may be None.
    """
    if delta <= 0:
        raise ScheduleError("delta must be positive")
    s = t - delta
    if s <= 0:
        raise ScheduleError(f"step from t={t} by delta={delta} leaves the valid range")
    f_t = drift(model, x, t, beta)
    if beta == 0.0 or z is None:
        if beta != 0.0:
            raise ConfigurationError("noise vector required when beta > 0")
        x_pred = x - f_t * delta
        f_s = drift(model, x_pred, s, beta)
        out = x - 0.5 * (f_t + f_s) * delta
        if z is not None:
            # keep the batch shape a noisy call would have produced
            z = _check_state(np.asarray(z, dtype=float), model.dim)
            out = np.broadcast_to(out, np.broadcast_shapes(out.shape, z.shape)).copy()
        return out
    z = _check_state(np.asarray(z, dtype=float), model.dim)
    g_t = diffusion_coeff(t, beta)
    g_s = diffusion_coeff(s, beta)
    sqrt_delta = np.sqrt(delta)
    x_pred = x - f_t * delta + g_t * z * sqrt_delta
    f_s = drift(model, x_pred, s, beta)
    return x - 0.5 * (f_t + f_s) * delta + 0.5 * (g_t + g_s) * z * sqrt_delta


def ode_map(
    model: MixtureModel,
    x: np.ndarray,
    t: float,
    n_steps: int = 20,
    t_floor: float = 0.002,
    rho: float = 7.0,
) -> np.ndarray:
    """Deterministic clean-state map: integrate the beta=0 flow from t to t_floor.

    Uses ``n_steps`` Heun steps on a power-law sub-grid between t and t_floor
    (same rho as the outer schedule). States already at or below the floor are
    returned unchanged. Pure: identical inputs give bit-identical outputs.
    """
    if n_steps < 1:
        raise ConfigurationError("ode_map needs n_steps >= 1")
    if t_floor <= 0:
        raise ConfigurationError("t_floor must be positive")
    # subtracting schedule deltas can land a few ulps off the floor itself
    if t <= t_floor * (1.0 + 1e-9):
        return _check_state(x, model.dim)
    sub = karras_schedule(n_steps + 1, rho, t_floor, t)
    for t_cur, delta in zip(sub.times[:-1], sub.deltas):
        x = heun_sde_step(model, x, None, float(t_cur), float(delta), 0.0)
    return x


def sample_prior(
    dim: int, t_max: float, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Draw x ~ N(0, t_max^2 I); ``size`` adds a leading batch axis."""
    if dim < 1:
        raise ConfigurationError("dim must be >= 1")
    shape = (dim,) if size is None else (size, dim)
    return t_max * rng.standard_normal(shape)
