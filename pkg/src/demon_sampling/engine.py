"""Reward-guided noise selection for the reverse-time SDE sampler.

Each backward step draws K i.i.d. Gaussian noises, prices every candidate
next-state by the reward of its deterministic clean completion, turns those
scores into weights (tanh around the batch mean, softmax, or +1/-1 from an
interactive choice), and recombines the noises into a single vector projected
onto the sqrt(N) sphere that seeds the actual step.

All step internals operate on a leading batch axis so that ensembles of
trajectories evolve in lock-step; a single trajectory is the batch-of-one
special case and produces bit-identical results.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    ConfigurationError,
    MixtureModel,
    Schedule,
    heun_sde_step,
    karras_schedule,
    ode_map,
    sample_prior,
)
from .rewards import StepContext

__all__ = [
    "DegenerateCombinationError",
    "DemonConfig",
    "StepRecord",
    "Trajectory",
    "WeightResult",
    "best_of_n",
    "boltzmann_weights",
    "demon_step",
    "replay_trajectory",
    "sample_ensemble",
    "sample_trajectory",
    "selection_estimates",
    "selection_weights",
    "synthesize_noise",
    "tanh_weights",
]

DEMON_KINDS = ("tanh", "boltzmann", "selection", "best_of_n", "none")

#: Below this combined-noise norm the weighted combination is considered
#: degenerate and the step falls back to the first candidate noise.
DEGENERATE_NORM = 1e-12

#: Estimate spreads below this are treated as constant rewards; weights fall
#: back to all-ones, which leaves the sampling distribution untouched.
DEGENERATE_SPREAD = 1e-12


class DegenerateCombinationError(ArithmeticError):
    """The weighted noise combination has (numerically) zero norm."""


@dataclass(frozen=True)
class DemonConfig:
    """Every knob of a guided sampling run.

    ``temperature`` is either the string ``"adaptive"`` (spread of the
    current estimates) or a positive float; ``math.inf`` is allowed for the
    softmax rule and yields uniform weights. ``t_switch`` disables guidance
    below the given time, running plain deterministic steps instead.
    """

    kind: str = "tanh"
    n_candidates: int = 16
    temperature: float | str = "adaptive"
    ode_steps: int = 20
    beta: float = 0.1
    n_steps: int = 64
    rho: float = 7.0
    t_min: float = 0.002
    t_max: float = 14.648
    seed: int = 0
    t_switch: float | None = None

    def __post_init__(self):
        if self.kind not in DEMON_KINDS:
            raise ConfigurationError(f"unknown demon kind {self.kind!r}")
        if self.n_candidates < 1:
            raise ConfigurationError("need at least one candidate noise")
        if self.kind == "none" and self.n_candidates != 1:
            raise ConfigurationError("plain sampling uses exactly one candidate noise")
        if isinstance(self.temperature, str):
            if self.temperature != "adaptive":
                raise ConfigurationError(f"unknown temperature mode {self.temperature!r}")
        elif not self.temperature > 0:
            raise ConfigurationError("fixed temperature must be positive")
        if self.ode_steps < 1:
            raise ConfigurationError("estimator needs at least one flow step")
        if self.beta < 0:
            raise ConfigurationError("beta must be nonnegative")
        if self.n_steps < 2:
            raise ConfigurationError("schedule needs at least two time points")
        if not (0 < self.t_min < self.t_max):
            raise ConfigurationError("need 0 < t_min < t_max")
        if self.t_switch is not None and self.t_switch < 0:
            raise ConfigurationError("t_switch must be nonnegative")

    def schedule(self) -> Schedule:
        return karras_schedule(self.n_steps, self.rho, self.t_min, self.t_max)


@dataclass(frozen=True)
class WeightResult:
    """Weights plus the statistics that produced them (for step records)."""

    weights: np.ndarray
    tau: np.ndarray | float | None
    mu_hat: np.ndarray | float | None


def synthesize_noise(noises: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Combine noises with weights and project onto the sqrt(N) sphere.

    ``noises`` has shape (..., K, N) and ``weights`` (..., K); the result has
    norm sqrt(N) along the last axis and is invariant under positive
    rescaling of the weight vector. Raises when the combination is
    numerically zero; step code falls back to the first noise in that case.
    """
    noises = np.asarray(noises, dtype=float)
    weights = np.asarray(weights, dtype=float)
    combo = np.sum(weights[..., None] * noises, axis=-2)
    norm = np.sqrt(np.sum(combo * combo, axis=-1, keepdims=True))
    if np.any(norm <= DEGENERATE_NORM):
        raise DegenerateCombinationError("degenerate weight combination")
    dim = noises.shape[-1]
    return np.sqrt(dim) * combo / norm


def _synthesize_with_fallback(noises: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Like synthesize_noise, but degenerate rows fall back to the first noise."""
    noises = np.asarray(noises, dtype=float)
    combo = np.sum(np.asarray(weights, dtype=float)[..., None] * noises, axis=-2)
    norm = np.sqrt(np.sum(combo * combo, axis=-1, keepdims=True))
    bad = norm[..., 0] <= DEGENERATE_NORM
    if np.any(bad):
        combo = np.where(bad[..., None], noises[..., 0, :], combo)
        norm = np.sqrt(np.sum(combo * combo, axis=-1, keepdims=True))
    dim = noises.shape[-1]
    return np.sqrt(dim) * combo / norm


def tanh_weights(
    estimates: np.ndarray,
    temperature: float | str = "adaptive",
    center: float | np.ndarray | None = None,
) -> WeightResult:
    """Odd, bounded weights tanh((R_k - mu) / tau) over the last axis.

    ``mu`` defaults to the mean of the estimates and ``tau`` in adaptive mode
    to their population (1/K) standard deviation. When the spread vanishes
    (constant rewards, zero diffusion, an all-or-nothing selection) every
    weight becomes 1, the distribution-preserving choice. ``center``
    overrides ``mu`` for callers that score against an external baseline
    rather than the batch mean.
    """
    estimates = np.asarray(estimates, dtype=float)
    mu = np.mean(estimates, axis=-1, keepdims=True)
    if center is None:
        centered = estimates - mu
    else:
        centered = estimates - np.asarray(center, dtype=float)
    # spread about the actual centering point: the population std in the
    # default mean-centered mode, an RMS for explicit baselines
    spread = np.sqrt(np.mean(centered**2, axis=-1, keepdims=True))
    if temperature == "adaptive":
        tau = spread
    elif isinstance(temperature, str):
        raise ConfigurationError(f"unknown temperature mode {temperature!r}")
    else:
        if not temperature > 0:
            raise ConfigurationError("fixed temperature must be positive")
        tau = np.broadcast_to(float(temperature), spread.shape)
    degenerate = spread[..., 0] <= DEGENERATE_SPREAD
    safe_tau = np.where(tau > 0, tau, 1.0)
    weights = np.where(
        degenerate[..., None], 1.0, np.tanh(centered / safe_tau)
    )
    return WeightResult(
        weights=weights,
        tau=np.where(degenerate, 0.0, tau[..., 0]),
        mu_hat=mu[..., 0],
    )


def boltzmann_weights(estimates: np.ndarray, tau: float) -> WeightResult:
    """Softmax weights exp(R_k / tau) normalized over the last axis.

    Computed with max subtraction so tiny temperatures approach the argmax
    one-hot without overflow; ``tau = inf`` gives exactly uniform weights.
    """
    if not tau > 0:
        raise ConfigurationError("softmax temperature must be positive")
    estimates = np.asarray(estimates, dtype=float)
    if np.isinf(tau):
        n = estimates.shape[-1]
        weights = np.full_like(estimates, 1.0 / n)
    else:
        scaled = estimates / tau
        scaled = scaled - np.max(scaled, axis=-1, keepdims=True)
        expd = np.exp(scaled)
        weights = expd / np.sum(expd, axis=-1, keepdims=True)
    return WeightResult(
        weights=weights, tau=float(tau), mu_hat=np.mean(estimates, axis=-1)
    )


def selection_estimates(chosen, n_candidates: int) -> np.ndarray:
    """+1 on chosen candidate indices, -1 elsewhere."""
    rewards = np.full(n_candidates, -1.0)
    idx = list(chosen)
    if idx and (min(idx) < 0 or max(idx) >= n_candidates):
        raise ConfigurationError(f"chosen indices out of range 0..{n_candidates - 1}")
    rewards[idx] = 1.0
    return rewards


def selection_weights(chosen, n_candidates: int) -> WeightResult:
    """Weights from an interactive choice: tanh over the implied +1/-1 rewards.

    An empty selection, or selecting everything, means "no preference" and
    falls back to uniform weights via the constant-reward rule.
    """
    return tanh_weights(selection_estimates(chosen, n_candidates))


@dataclass
class StepRecord:
    """Everything needed to audit or replay one backward step."""

    t: float
    delta: float
    state_before: np.ndarray
    estimates: np.ndarray | None
    weights: np.ndarray | None
    tau: float | None
    mu_hat: float | None
    z_star: np.ndarray | None
    z_star_norm: float

    def to_jsonl_dict(self) -> dict:
        return {
            "t": self.t,
            "delta": self.delta,
            "estimates": [] if self.estimates is None else [float(v) for v in self.estimates],
            "weights": [] if self.weights is None else [float(v) for v in self.weights],
            "tau": self.tau,
            "mu_hat": self.mu_hat,
            "z_star_norm": self.z_star_norm,
        }


@dataclass
class Trajectory:
    """Ordered step records plus the final sample and its reward."""

    steps: list
    final_state: np.ndarray
    final_reward: float | None
    reward_queries: int
    wall_time_ms: float | None
    seed: object = None

    def to_jsonl_lines(self) -> list:
        lines = [step.to_jsonl_dict() for step in self.steps]
        lines.append(
            {
                "final_state": [float(v) for v in self.final_state],
                "final_reward": self.final_reward,
                "reward_queries": self.reward_queries,
                "wall_time_ms": self.wall_time_ms,
            }
        )
        return lines


def _weights_for(cfg: DemonConfig, estimates: np.ndarray) -> WeightResult:
    if cfg.kind == "tanh" or cfg.kind == "selection":
        return tanh_weights(estimates, cfg.temperature)
    if cfg.kind == "boltzmann":
        if cfg.temperature == "adaptive":
            # softmax is shift invariant, so the adaptive rule is softmax of
            # the standardized scores; zero-spread rows go uniform
            mu = np.mean(estimates, axis=-1, keepdims=True)
            spread = np.sqrt(np.mean((estimates - mu) ** 2, axis=-1, keepdims=True))
            scaled = np.where(
                spread > DEGENERATE_SPREAD,
                (estimates - mu) / np.where(spread > 0, spread, 1.0),
                0.0,
            )
            scaled = scaled - np.max(scaled, axis=-1, keepdims=True)
            expd = np.exp(scaled)
            weights = expd / np.sum(expd, axis=-1, keepdims=True)
            return WeightResult(weights=weights, tau=spread[..., 0], mu_hat=mu[..., 0])
        return boltzmann_weights(estimates, float(cfg.temperature))
    raise ConfigurationError(f"demon kind {cfg.kind!r} does not score candidates")


def _demon_step_batch(
    model: MixtureModel,
    x: np.ndarray,
    noise_block: np.ndarray,
    t: float,
    delta: float,
    cfg: DemonConfig,
    reward,
    ctx: StepContext,
):
    """Guided step for a batch of states x (B, N) with noises (B, K, N).

    Returns the batch of next states plus the per-batch weight diagnostics.
    Candidate evaluation order is fixed by the candidate index, so serial and
    batched execution agree bit for bit.
    """
    candidates = heun_sde_step(model, x[:, None, :], noise_block, t, delta, cfg.beta)
    s = t - delta
    if cfg.kind == "none":
        estimates = None
        weights = WeightResult(
            weights=np.ones(noise_block.shape[:-1]), tau=None, mu_hat=None
        )
    else:
        cleans = ode_map(model, candidates, s, cfg.ode_steps, cfg.t_min, cfg.rho)
        if cfg.kind == "selection":
            if cleans.shape[0] != 1:
                raise ConfigurationError("interactive selection steps one state at a time")
            chosen = reward.choose(cleans[0], ctx)
            estimates = selection_estimates(chosen, cfg.n_candidates)[None]
            weights = tanh_weights(estimates, cfg.temperature)
        else:
            estimates = np.asarray(reward.score_candidates(cleans, ctx), dtype=float)
            if estimates.shape != noise_block.shape[:-1]:
                estimates = estimates.reshape(noise_block.shape[:-1])
            weights = _weights_for(cfg, estimates)
    z_star = _synthesize_with_fallback(noise_block, weights.weights)
    x_next = heun_sde_step(model, x, z_star, t, delta, cfg.beta)
    return x_next, candidates, estimates, weights, z_star


def demon_step(
    model: MixtureModel,
    x: np.ndarray,
    t: float,
    delta: float,
    cfg: DemonConfig,
    reward,
    rng: np.random.Generator,
    step_index: int = 0,
) -> tuple[np.ndarray, StepRecord]:
    """One guided backward step from t to t - delta for a single state.

    Draws K noises, prices each candidate by the reward of its clean
    completion (exactly K estimator evaluations for scoring kinds), combines
    the noises per the configured weight rule and takes the Heun step with
    the synthesized noise.
    """
    x = np.asarray(x, dtype=float)
    noise_block = rng.standard_normal((cfg.n_candidates, model.dim))
    ctx = StepContext(t=t - delta, step=step_index, rng=rng)
    x_next, _, estimates, weights, z_star = _demon_step_batch(
        model, x[None], noise_block[None], t, delta, cfg, reward, ctx
    )
    record = StepRecord(
        t=float(t),
        delta=float(delta),
        state_before=x.copy(),
        estimates=None if estimates is None else np.asarray(estimates[0]),
        weights=None if cfg.kind == "none" else np.asarray(weights.weights[0]),
        tau=None if weights.tau is None else float(np.asarray(weights.tau).reshape(-1)[0]),
        mu_hat=None if weights.mu_hat is None else float(np.asarray(weights.mu_hat).reshape(-1)[0]),
        z_star=z_star[0].copy(),
        z_star_norm=float(np.sqrt(np.sum(z_star[0] ** 2))),
    )
    return x_next[0], record


def _plain_ode_record(model, x, t, delta):
    x_next = heun_sde_step(model, x, None, t, delta, 0.0)
    record = StepRecord(
        t=float(t),
        delta=float(delta),
        state_before=np.asarray(x, dtype=float).copy(),
        estimates=None,
        weights=None,
        tau=None,
        mu_hat=None,
        z_star=None,
        z_star_norm=0.0,
    )
    return x_next, record


def _as_generator(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def sample_trajectory(
    model: MixtureModel,
    cfg: DemonConfig,
    reward,
    rng=None,
    record_states: bool = True,
) -> Trajectory:
    """Run the full guided sampler over the time grid.

    Starts from the wide-Gaussian prior at t_max and takes T-1 guided steps
    down to t_min; steps below ``cfg.t_switch`` (when set) run plain
    deterministic flow instead. Fixed seeds give bit-identical trajectories.
    """
    if cfg.kind == "best_of_n":
        raise ConfigurationError("best_of_n is driven by the best_of_n() entry point")
    rng = _as_generator(cfg.seed if rng is None else rng)
    schedule = cfg.schedule()
    queries_before = getattr(reward, "query_count", 0)
    start = time.perf_counter()
    x = sample_prior(model.dim, cfg.t_max, rng)
    steps = []
    for i, (t, delta) in enumerate(zip(schedule.times[:-1], schedule.deltas)):
        if cfg.t_switch is not None and t < cfg.t_switch:
            x, record = _plain_ode_record(model, x, float(t), float(delta))
        else:
            x, record = demon_step(model, x, float(t), float(delta), cfg, reward, rng, i)
        if not record_states:
            record.state_before = None
        steps.append(record)
    final_reward = reward.final_score(x) if hasattr(reward, "final_score") else None
    wall_ms = (time.perf_counter() - start) * 1000.0
    queries = getattr(reward, "query_count", 0) - queries_before
    return Trajectory(
        steps=steps,
        final_state=x,
        final_reward=final_reward,
        reward_queries=int(queries),
        wall_time_ms=wall_ms,
        seed=cfg.seed,
    )


def sample_ensemble(
    model: MixtureModel,
    cfg: DemonConfig,
    reward,
    n_trajectories: int,
    seed=None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Evolve many independent trajectories in lock-step.

    Per-trajectory RNG streams are spawned from the master seed, and each
    stream is consumed in the same order as in ``sample_trajectory``, so
    trajectory j equals a serial run with child seed j bit for bit. Returns
    the final states (n, dim) and, when the source scores states, the final
    rewards (n,).
    """
    if cfg.kind in ("selection", "best_of_n"):
        raise ConfigurationError(f"ensemble sampling does not support kind {cfg.kind!r}")
    master = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(
        cfg.seed if seed is None else seed
    )
    gens = [np.random.default_rng(s) for s in master.spawn(n_trajectories)]
    schedule = cfg.schedule()
    x = np.stack([sample_prior(model.dim, cfg.t_max, g) for g in gens])
    k = cfg.n_candidates
    for i, (t, delta) in enumerate(zip(schedule.times[:-1], schedule.deltas)):
        t = float(t)
        delta = float(delta)
        if cfg.t_switch is not None and t < cfg.t_switch:
            x = heun_sde_step(model, x, None, t, delta, 0.0)
            continue
        noise_block = np.stack([g.standard_normal((k, model.dim)) for g in gens])
        ctx = StepContext(t=t - delta, step=i, rng=None)
        x, _, _, _, _ = _demon_step_batch(model, x, noise_block, t, delta, cfg, reward, ctx)
    final_rewards = None
    if hasattr(reward, "score_states"):
        final_rewards = np.asarray(reward.score_states(x), dtype=float)
    return x, final_rewards


def best_of_n(
    model: MixtureModel,
    cfg: DemonConfig,
    reward,
    n: int,
    seed=None,
) -> tuple[np.ndarray, float, int]:
    """Draw n independent plain samples and keep the best final reward.

    Ties break toward the lowest trajectory index. The query count is n: one
    final-reward evaluation per plain trajectory.
    """
    if n < 1:
        raise ConfigurationError("best_of_n needs n >= 1")
    plain = replace(cfg, kind="none", n_candidates=1)
    finals, rewards = sample_ensemble(model, plain, reward, n, seed=seed)
    if rewards is None:
        raise ConfigurationError("best_of_n needs a reward source that scores states")
    best = int(np.argmax(rewards))
    return finals[best], float(rewards[best]), n


def replay_trajectory(model: MixtureModel, cfg: DemonConfig, trajectory: Trajectory) -> np.ndarray:
    """Recompute the final state from recorded noises; bit-identical to the run."""
    first = trajectory.steps[0]
    if first.state_before is None:
        raise ConfigurationError("trajectory was recorded without states")
    x = np.asarray(first.state_before, dtype=float)
    for record in trajectory.steps:
        if record.z_star is None:
            x = heun_sde_step(model, x, None, record.t, record.delta, 0.0)
        else:
            x = heun_sde_step(model, x, record.z_star, record.t, record.delta, cfg.beta)
    return x
