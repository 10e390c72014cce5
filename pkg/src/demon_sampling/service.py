"""Interactive steering sessions behind a small HTTP+JSON API.

A session walks the guided sampler one schedule step at a time: the service
draws the candidate noises, shows the clean previews of each candidate, and
waits for the client to pick its preferred ones. The choice becomes +1/-1
scores, the weighted noise seeds the step, and the next round of candidates
appears. A per-step token makes each choice at-most-once: replaying an old
token is rejected with 409.

Sessions live in memory behind per-session locks; an optional snapshot
directory receives a JSON file per session after every mutation so a long
interactive run can be inspected or restored after a crash.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .benchmarks import resolve_model
from .core import (
    ConfigurationError,
    MixtureModel,
    heun_sde_step,
    ode_map,
    sample_prior,
)
from .engine import (
    DemonConfig,
    StepRecord,
    Trajectory,
    _synthesize_with_fallback,
    selection_estimates,
    tanh_weights,
)

__all__ = [
    "Session",
    "SessionStore",
    "create_app",
    "restore_session",
]


class StaleTokenError(Exception):
    """The submitted step token does not match the session's current step."""


class SessionConfig(BaseModel):
    """Body of POST /sessions."""

    model: str = "gmm2d"
    demon: str = "selection"
    K: int = 16
    T: int = 32
    beta: float = 0.1
    rho: float = 7.0
    t_min: float = 0.002
    t_max: float = 14.648
    tau: float | str = "adaptive"
    ode_steps: int = 20
    seed: int = 0

    def to_demon_config(self) -> DemonConfig:
        return DemonConfig(
            kind=self.demon,
            n_candidates=self.K,
            temperature=self.tau,
            ode_steps=self.ode_steps,
            beta=self.beta,
            n_steps=self.T,
            rho=self.rho,
            t_min=self.t_min,
            t_max=self.t_max,
            seed=self.seed,
        )


class ChoiceBody(BaseModel):
    token: str
    chosen: list[int]


@dataclass
class Session:
    """One interactive run: current state, pending candidates, history."""

    id: str
    cfg: DemonConfig
    model: MixtureModel
    model_name: str
    x: np.ndarray
    rng: np.random.Generator
    times: np.ndarray
    step_index: int = 0
    status: str = "awaiting_choice"
    pending_noises: np.ndarray | None = None
    pending_candidates: np.ndarray | None = None
    pending_previews: np.ndarray | None = None
    records: list = field(default_factory=list)
    choices: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    snapshot_dir: Path | None = None

    @property
    def token(self) -> str:
        return f"s{self.step_index}"

    @property
    def current_t(self) -> float:
        return float(self.times[self.step_index])

    def compute_bank(self) -> None:
        """Draw the next noise bank and the clean preview of every candidate."""
        t = self.current_t
        delta = t - float(self.times[self.step_index + 1])
        noises = self.rng.standard_normal((self.cfg.n_candidates, self.model.dim))
        candidates = heun_sde_step(
            self.model, self.x[None], noises, t, delta, self.cfg.beta
        )
        previews = ode_map(
            self.model, candidates, t - delta, self.cfg.ode_steps, self.cfg.t_min, self.cfg.rho
        )
        self.pending_noises = noises
        self.pending_candidates = candidates
        self.pending_previews = previews

    def apply_choice(self, chosen: list[int]) -> None:
        t = self.current_t
        delta = t - float(self.times[self.step_index + 1])
        estimates = selection_estimates(chosen, self.cfg.n_candidates)
        weights = tanh_weights(estimates, self.cfg.temperature)
        z_star = _synthesize_with_fallback(self.pending_noises, weights.weights)
        state_before = self.x.copy()
        self.x = heun_sde_step(self.model, self.x, z_star, t, delta, self.cfg.beta)
        self.records.append(
            StepRecord(
                t=t,
                delta=delta,
                state_before=state_before,
                estimates=estimates,
                weights=np.asarray(weights.weights),
                tau=float(np.asarray(weights.tau).reshape(-1)[0]),
                mu_hat=float(np.asarray(weights.mu_hat).reshape(-1)[0]),
                z_star=z_star,
                z_star_norm=float(np.sqrt(np.sum(z_star**2))),
            )
        )
        self.choices.append(sorted(int(i) for i in chosen))
        self.step_index += 1
        if self.step_index >= len(self.times) - 1:
            self.status = "done"
            self.pending_noises = None
            self.pending_candidates = None
            self.pending_previews = None
        else:
            self.compute_bank()

    def view(self) -> dict:
        out = {
            "status": self.status,
            "step": self.step_index,
            "t": self.current_t,
            "token": self.token,
            "candidates": []
            if self.pending_previews is None
            else [
                {"index": i, "preview": [float(v) for v in row]}
                for i, row in enumerate(self.pending_previews)
            ],
        }
        if self.status == "done":
            out["final_state"] = [float(v) for v in self.x]
        return out

    def trajectory(self) -> Trajectory:
        return Trajectory(
            steps=list(self.records),
            final_state=self.x,
            final_reward=None,
            reward_queries=len(self.choices),
            wall_time_ms=None,
            seed=self.cfg.seed,
        )

    def snapshot_dict(self) -> dict:
        return {
            "id": self.id,
            "model": self.model_name,
            "config": {
                "demon": self.cfg.kind,
                "K": self.cfg.n_candidates,
                "T": self.cfg.n_steps,
                "beta": self.cfg.beta,
                "rho": self.cfg.rho,
                "t_min": self.cfg.t_min,
                "t_max": self.cfg.t_max,
                "tau": self.cfg.temperature,
                "ode_steps": self.cfg.ode_steps,
                "seed": self.cfg.seed,
            },
            "choices": self.choices,
            "step": self.step_index,
            "status": self.status,
        }

    def write_snapshot(self) -> None:
        if self.snapshot_dir is None:
            return
        path = Path(self.snapshot_dir) / f"{self.id}.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.snapshot_dict(), fh, indent=2, sort_keys=True)


def _new_session(body: SessionConfig, snapshot_dir=None, session_id=None) -> Session:
    if body.demon != "selection":
        raise ConfigurationError("interactive sessions require the selection mode")
    cfg = body.to_demon_config()
    model = resolve_model(body.model)
    rng = np.random.default_rng(cfg.seed)
    session = Session(
        id=session_id or uuid.uuid4().hex,
        cfg=cfg,
        model=model,
        model_name=body.model,
        x=sample_prior(model.dim, cfg.t_max, rng),
        rng=rng,
        times=cfg.schedule().times,
        snapshot_dir=Path(snapshot_dir) if snapshot_dir else None,
    )
    session.compute_bank()
    session.write_snapshot()
    return session


def restore_session(path, snapshot_dir=None) -> Session:
    """Rebuild a session from its snapshot by replaying the recorded choices."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    body = SessionConfig(
        model=doc["model"],
        demon=doc["config"]["demon"],
        K=doc["config"]["K"],
        T=doc["config"]["T"],
        beta=doc["config"]["beta"],
        rho=doc["config"]["rho"],
        t_min=doc["config"]["t_min"],
        t_max=doc["config"]["t_max"],
        tau=doc["config"]["tau"],
        ode_steps=doc["config"]["ode_steps"],
        seed=doc["config"]["seed"],
    )
    session = _new_session(body, snapshot_dir=snapshot_dir, session_id=doc["id"])
    for chosen in doc["choices"]:
        session.apply_choice(chosen)
    return session


class SessionStore:
    def __init__(self, snapshot_dir=None):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self.snapshot_dir = snapshot_dir
        if snapshot_dir:
            Path(snapshot_dir).mkdir(parents=True, exist_ok=True)

    def create(self, body: SessionConfig) -> Session:
        session = _new_session(body, snapshot_dir=self.snapshot_dir)
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        return session


def create_app(snapshot_dir=None) -> FastAPI:
    """The steering service; state lives in the returned app instance."""
    app = FastAPI(title="guided-sampling steering service")
    store = SessionStore(snapshot_dir=snapshot_dir)
    app.state.store = store

    def _get_or_404(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionConfig):
        try:
            session = store.create(body)
        except (ConfigurationError, FileNotFoundError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"id": session.id, "state": session.view()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _get_or_404(session_id).view()

    @app.post("/sessions/{session_id}/choice")
    def submit_choice(session_id: str, body: ChoiceBody):
        session = _get_or_404(session_id)
        with session.lock:
            if session.status != "awaiting_choice":
                raise HTTPException(status_code=409, detail="session is not awaiting a choice")
            if body.token != session.token:
                raise HTTPException(status_code=409, detail="stale token")
            if body.chosen and (
                min(body.chosen) < 0 or max(body.chosen) >= session.cfg.n_candidates
            ):
                raise HTTPException(status_code=400, detail="invalid candidate indices")
            session.apply_choice(body.chosen)
            session.write_snapshot()
            return session.view()

    @app.post("/sessions/{session_id}/finish")
    def finish_session(session_id: str):
        """Complete the remaining steps without preferences (uniform weights)."""
        session = _get_or_404(session_id)
        with session.lock:
            while session.status == "awaiting_choice":
                session.apply_choice([])
            session.write_snapshot()
            return session.view()

    @app.get("/sessions/{session_id}/trajectory")
    def get_trajectory(session_id: str):
        session = _get_or_404(session_id)
        with session.lock:
            traj = session.trajectory()
            lines = traj.to_jsonl_lines()
        return {"steps": lines[:-1], **lines[-1], "choices": session.choices}

    return app
