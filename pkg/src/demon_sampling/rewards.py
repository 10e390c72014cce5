"""Reward specifications and reward sources.

Four families of scalar rewards with known analytic structure (linear is
harmonic, quadratic has constant curvature trace, the Gaussian bump has
sign-varying curvature, negative distance is the steering metric), plus the
machinery that turns non-scalar preference signals into per-candidate scores:

* a two-round pivot-partition aggregator that extracts a top set from pairwise
  comparisons within a 2(K-1) comparison budget,
* an HTTP client for external scorers/judges speaking a small JSON protocol,
* a simulated judge that answers comparisons from a hidden reward spec with
  optional flip noise.

Reward sources count every query they answer so samplers can report budgets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, MixtureModel, ode_map

__all__ = [
    "ClosedFormSource",
    "ComparisonSource",
    "ExternalSource",
    "GaussianBumpReward",
    "LinearReward",
    "NegDistanceReward",
    "QuadraticReward",
    "RewardSourceError",
    "SimulatedJudge",
    "StepContext",
    "WeightedSumReward",
    "estimate_reward",
    "eval_reward",
    "external_reward",
    "parse_reward_spec",
    "partition_top",
    "reward_spec_from_dict",
]


class RewardSourceError(RuntimeError):
    """A reward source failed to produce a usable answer."""


# ---------------------------------------------------------------------------
# Closed-form reward specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearReward:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or not np.any(c != 0):
            raise ConfigurationError("linear reward needs a nonzero coefficient vector")
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.coeffs.size

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.coeffs

    def to_dict(self) -> dict:
        return {"kind": "linear", "coeffs": self.coeffs.tolist()}


@dataclass(frozen=True)
class QuadraticReward:
    """r(x) = x^T A x + b . x with A symmetric; Laplacian is 2 trace(A)."""

    matrix: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        b = np.asarray(self.linear, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ConfigurationError("quadratic reward matrix must be square")
        if not np.allclose(a, a.T, atol=1e-12):
            raise ConfigurationError("quadratic reward matrix must be symmetric")
        if b.shape != (a.shape[0],):
            raise ConfigurationError("quadratic reward linear term has wrong length")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "linear", b)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.matrix, x) + x @ self.linear

    def to_dict(self) -> dict:
        return {
            "kind": "quadratic",
            "matrix": self.matrix.tolist(),
            "linear": self.linear.tolist(),
        }


@dataclass(frozen=True)
class GaussianBumpReward:
    """Peak-normalized bump exp(-|x - center|^2 / (2 width^2))."""

    center: np.ndarray
    width: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.ndim != 1:
            raise ConfigurationError("bump center must be a vector")
        if self.width <= 0:
            raise ConfigurationError("bump width must be positive")
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return self.center.size

    def value(self, x: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.center
        return np.exp(-np.sum(d * d, axis=-1) / (2.0 * self.width**2))

    def to_dict(self) -> dict:
        return {"kind": "gaussian_bump", "center": self.center.tolist(), "width": self.width}


@dataclass(frozen=True)
class NegDistanceReward:
    target: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.target, dtype=float)
        if t.ndim != 1:
            raise ConfigurationError("target must be a vector")
        object.__setattr__(self, "target", t)

    @property
    def dim(self) -> int:
        return self.target.size

    def value(self, x: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.target
        return -np.sqrt(np.sum(d * d, axis=-1))

    def to_dict(self) -> dict:
        return {"kind": "neg_distance", "target": self.target.tolist()}


@dataclass(frozen=True)
class WeightedSumReward:
    """Weighted sum of other reward specs sharing one dimension."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ConfigurationError("weighted sum needs at least one part")
        dims = {spec.dim for _, spec in parts}
        if len(dims) != 1:
            raise ConfigurationError("weighted sum parts disagree on dimension")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self) -> int:
        return self.parts[0][1].dim

    def value(self, x: np.ndarray) -> np.ndarray:
        total = np.zeros(np.asarray(x).shape[:-1])
        for weight, spec in self.parts:
            total = total + weight * spec.value(x)
        return total

    def to_dict(self) -> dict:
        return {
            "kind": "weighted_sum",
            "parts": [{"weight": w, "spec": s.to_dict()} for w, s in self.parts],
        }


RewardSpec = (
    LinearReward | QuadraticReward | GaussianBumpReward | NegDistanceReward | WeightedSumReward
)


def eval_reward(spec, x: np.ndarray) -> np.ndarray:
    """Evaluate a closed-form reward on states of shape (..., dim)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise ConfigurationError(
            f"reward expects dimension {spec.dim}, got state shape {x.shape}"
        )
    return spec.value(x)


def estimate_reward(
    model: MixtureModel,
    x: np.ndarray,
    t: float,
    spec,
    ode_steps: int = 20,
    t_floor: float = 0.002,
    rho: float = 7.0,
) -> np.ndarray:
    """Reward of the deterministic clean completion of a noisy state.

    Runs the probability-flow map down to ``t_floor`` with ``ode_steps`` Heun
    steps and evaluates the reward there; at ``t <= t_floor`` this is the
    reward of ``x`` itself.
    """
    return eval_reward(spec, ode_map(model, x, t, ode_steps, t_floor, rho))


def reward_spec_from_dict(doc: dict):
    """Inverse of each spec's ``to_dict``."""
    kind = doc.get("kind")
    if kind == "linear":
        return LinearReward(np.asarray(doc["coeffs"], dtype=float))
    if kind == "quadratic":
        return QuadraticReward(
            np.asarray(doc["matrix"], dtype=float), np.asarray(doc["linear"], dtype=float)
        )
    if kind == "gaussian_bump":
        return GaussianBumpReward(np.asarray(doc["center"], dtype=float), float(doc["width"]))
    if kind == "neg_distance":
        return NegDistanceReward(np.asarray(doc["target"], dtype=float))
    if kind == "weighted_sum":
        return WeightedSumReward(
            tuple((float(p["weight"]), reward_spec_from_dict(p["spec"])) for p in doc["parts"])
        )
    raise ConfigurationError(f"unknown reward kind {kind!r}")


def parse_reward_spec(text: str, dim: int):
    """Parse a compact CLI reward string.

    Supported forms: ``linear``, ``linear:0.6,0.8``, ``neg_distance:1,0.5``,
    ``bump:0.5,0.5:0.8`` (center:width) and ``@path.json`` for a full spec
    document.
    """
    if text.startswith("@"):
        with open(text[1:], "r", encoding="utf-8") as fh:
            return reward_spec_from_dict(json.load(fh))
    head, _, rest = text.partition(":")
    if head == "linear":
        if rest:
            coeffs = np.asarray([float(v) for v in rest.split(",")], dtype=float)
        else:
            coeffs = np.ones(dim) / np.sqrt(dim)
        return LinearReward(coeffs)
    if head == "neg_distance":
        if not rest:
            raise ConfigurationError("neg_distance needs a target, e.g. neg_distance:1,0")
        return NegDistanceReward(np.asarray([float(v) for v in rest.split(",")], dtype=float))
    if head == "bump":
        center_text, _, width_text = rest.partition(":")
        if not center_text or not width_text:
            raise ConfigurationError("bump needs center and width, e.g. bump:0.5,0.5:0.8")
        center = np.asarray([float(v) for v in center_text.split(",")], dtype=float)
        return GaussianBumpReward(center, float(width_text))
    raise ConfigurationError(f"cannot parse reward spec {text!r}")


# ---------------------------------------------------------------------------
# Pairwise-comparison aggregation
# ---------------------------------------------------------------------------


def partition_top(
    n_candidates: int, comparator, rng: np.random.Generator
) -> tuple[frozenset, int]:
    """Extract an approximate top half from pairwise comparisons.

    Runs a pivot partition over all candidates, then a second partition over
    the larger side (the first pivot stays with the losers), and cuts the
    resulting chain of ordered blocks at the pivot boundary closest to rank
    ceil(K/2). The second round is skipped when the first already produced a
    boundary exactly at the target rank.

    ``comparator(i, j)`` must return the preferred candidate index (i or j);
    it may be noisy, repeated pairs are simply asked again. Returns the set
    of candidate indices above the chosen boundary and the number of
    comparisons used, which never exceeds 2(K-1).
    """
    if n_candidates < 2:
        raise ConfigurationError("partition needs at least two candidates")
    comparisons = 0

    def partition(indices: list) -> tuple[list, int, list]:
        nonlocal comparisons
        pivot = indices[int(rng.integers(len(indices)))]
        winners, losers = [], []
        for idx in indices:
            if idx == pivot:
                continue
            comparisons += 1
            preferred = comparator(idx, pivot)
            if preferred == idx:
                winners.append(idx)
            elif preferred == pivot:
                losers.append(idx)
            else:
                raise RewardSourceError(
                    f"comparator returned {preferred!r} for pair ({idx}, {pivot}) "
                    f"after {comparisons} comparisons"
                )
        return winners, pivot, losers

    target = (n_candidates + 1) // 2

    def valid_cuts(boundaries: list) -> list:
        return [b for b in boundaries if 1 <= b <= n_candidates - 1]

    winners, pivot, losers = partition(list(range(n_candidates)))
    # Chain after round 1: [winners | pivot | losers]; cuts above and below
    # the pivot are both established orderings.
    round1_cuts = valid_cuts([len(winners), len(winners) + 1])
    if target in round1_cuts:
        chain = [winners, [pivot], losers]
        chosen = target
    else:
        lower = [pivot] + losers  # pivot rejoins the losing side
        if len(winners) >= len(lower) and len(winners) >= 2:
            w2, p2, l2 = partition(winners)
            chain = [w2, [p2], l2, [pivot], losers]
            cuts = valid_cuts(
                [len(w2), len(w2) + 1, len(winners), len(winners) + 1]
            )
        elif len(lower) >= 2:
            w2, p2, l2 = partition(lower)
            chain = [winners, w2, [p2], l2]
            cuts = valid_cuts(
                [len(winners), len(winners) + len(w2), len(winners) + len(w2) + 1]
            )
        else:
            chain = [winners, [pivot], losers]
            cuts = round1_cuts
        if not cuts:
            cuts = round1_cuts
        chosen = min(cuts, key=lambda b: (abs(b - target), b))

    flat = [idx for block in chain for idx in block]
    plus = frozenset(flat[:chosen])
    if not plus or len(plus) >= n_candidates:
        raise RewardSourceError(
            f"partition produced a degenerate top set after {comparisons} comparisons"
        )
    return plus, comparisons


# ---------------------------------------------------------------------------
# External endpoint protocol
# ---------------------------------------------------------------------------


def external_reward(
    endpoint: str,
    states: np.ndarray,
    mode: str,
    *,
    meta: dict | None = None,
    timeout: float = 30.0,
    client=None,
):
    """POST states to an external scorer and return its answer.

    ``mode`` is ``"score"`` (returns one float per state) or ``"compare"``
    (exactly two states, returns the preferred index 0 or 1). Timeouts,
    transport failures, non-2xx statuses and malformed bodies all raise
    ``RewardSourceError``; scores are never fabricated.
    """
    import httpx

    states = np.atleast_2d(np.asarray(states, dtype=float))
    if mode not in ("score", "compare"):
        raise ConfigurationError(f"unknown external reward mode {mode!r}")
    if mode == "compare" and states.shape[0] != 2:
        raise ConfigurationError("compare mode needs exactly two states")
    body = {
        "mode": mode,
        "states": [[float(v) for v in row] for row in states],
        "meta": meta or {},
    }
    try:
        if client is not None:
            response = client.post(endpoint, json=body, timeout=timeout)
        else:
            response = httpx.post(endpoint, json=body, timeout=timeout)
    except httpx.HTTPError as exc:
        raise RewardSourceError(f"external reward request failed: {exc}") from exc
    if response.status_code // 100 != 2:
        raise RewardSourceError(
            f"external reward endpoint returned status {response.status_code}"
        )
    try:
        payload = response.json()
    except ValueError as exc:
        raise RewardSourceError("external reward response is not JSON") from exc
    if mode == "score":
        scores = payload.get("scores")
        if not isinstance(scores, list) or len(scores) != states.shape[0]:
            raise RewardSourceError("malformed score response")
        return np.asarray([float(s) for s in scores])
    preferred = payload.get("preferred")
    if preferred not in (0, 1):
        raise RewardSourceError("malformed compare response")
    return int(preferred)


class SimulatedJudge:
    """Answers pairwise comparisons from a hidden reward with flip noise."""

    def __init__(self, hidden_spec, flip_probability: float = 0.0, seed: int = 0):
        if not 0.0 <= flip_probability < 0.5:
            raise ConfigurationError("flip probability must be in [0, 0.5)")
        self.hidden_spec = hidden_spec
        self.flip_probability = flip_probability
        self._rng = np.random.default_rng(seed)

    def score(self, states: np.ndarray) -> np.ndarray:
        return eval_reward(self.hidden_spec, states)

    def compare(self, a: np.ndarray, b: np.ndarray) -> int:
        """0 if the first state is preferred, else 1."""
        preferred = 0 if float(self.score(a)) >= float(self.score(b)) else 1
        if self.flip_probability > 0 and self._rng.random() < self.flip_probability:
            preferred = 1 - preferred
        return preferred


# ---------------------------------------------------------------------------
# Reward sources consumed by the sampling engine
# ---------------------------------------------------------------------------


@dataclass
class StepContext:
    """Where in a run a reward query happens; passed along to sources."""

    t: float
    step: int
    rng: np.random.Generator | None = None


class ClosedFormSource:
    """Deterministic, pure scalar reward from a closed-form spec."""

    def __init__(self, spec):
        self.spec = spec
        self.query_count = 0

    def score_candidates(self, cleans: np.ndarray, ctx: StepContext) -> np.ndarray:
        cleans = np.asarray(cleans, dtype=float)
        self.query_count += int(np.prod(cleans.shape[:-1]))
        return eval_reward(self.spec, cleans)

    def score_states(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        self.query_count += int(np.prod(states.shape[:-1]))
        return eval_reward(self.spec, states)

    def final_score(self, clean: np.ndarray) -> float:
        self.query_count += 1
        return float(eval_reward(self.spec, clean))


class ComparisonSource:
    """Scores candidates +1/-1 from pairwise preferences only.

    The judge is consulted through ``compare`` alone; scalar values never
    cross this boundary. Each candidate set is aggregated with the two-round
    pivot partition.
    """

    def __init__(self, judge):
        self.judge = judge
        self.query_count = 0

    def score_candidates(self, cleans: np.ndarray, ctx: StepContext) -> np.ndarray:
        cleans = np.asarray(cleans, dtype=float)
        if cleans.ndim == 3:
            if cleans.shape[0] != 1:
                raise ConfigurationError("comparison sources score one candidate set at a time")
            return self.score_candidates(cleans[0], ctx)[None]
        n = cleans.shape[0]
        if ctx.rng is None:
            raise ConfigurationError("comparison scoring needs the step RNG for pivots")
        try:
            plus, used = partition_top(
                n,
                lambda i, j: i if self.judge.compare(cleans[i], cleans[j]) == 0 else j,
                ctx.rng,
            )
        except RewardSourceError as exc:
            raise RewardSourceError(f"comparison aggregation failed at step {ctx.step}: {exc}")
        self.query_count += used
        rewards = np.full(n, -1.0)
        rewards[list(plus)] = 1.0
        return rewards

    def final_score(self, clean: np.ndarray) -> float | None:
        return None


class ExternalSource:
    """Reward source backed by an HTTP endpoint (score or compare mode)."""

    def __init__(self, endpoint: str, mode: str = "score", timeout: float = 30.0, client=None):
        if mode not in ("score", "compare"):
            raise ConfigurationError(f"unknown external mode {mode!r}")
        self.endpoint = endpoint
        self.mode = mode
        self.timeout = timeout
        self.client = client
        self.query_count = 0

    def _call(self, states, mode, ctx: StepContext | None):
        meta = {"t": ctx.t, "step": ctx.step} if ctx is not None else {}
        try:
            return external_reward(
                self.endpoint, states, mode, meta=meta, timeout=self.timeout, client=self.client
            )
        except RewardSourceError as exc:
            where = f" at step {ctx.step} (t={ctx.t})" if ctx is not None else ""
            raise RewardSourceError(f"{exc}{where}") from exc

    def score_candidates(self, cleans: np.ndarray, ctx: StepContext) -> np.ndarray:
        cleans = np.asarray(cleans, dtype=float)
        if cleans.ndim == 3:
            if cleans.shape[0] != 1:
                raise ConfigurationError("external sources score one candidate set at a time")
            return self.score_candidates(cleans[0], ctx)[None]
        n = cleans.shape[0]
        if self.mode == "score":
            scores = self._call(cleans, "score", ctx)
            self.query_count += n
            return scores
        if ctx.rng is None:
            raise ConfigurationError("compare mode needs the step RNG for pivots")
        plus, used = partition_top(
            n,
            lambda i, j: i if self._call(cleans[[i, j]], "compare", ctx) == 0 else j,
            ctx.rng,
        )
        self.query_count += used
        rewards = np.full(n, -1.0)
        rewards[list(plus)] = 1.0
        return rewards

    def final_score(self, clean: np.ndarray) -> float | None:
        if self.mode != "score":
            return None
        score = self._call(np.asarray(clean)[None], "score", None)
        self.query_count += 1
        return float(score[0])
