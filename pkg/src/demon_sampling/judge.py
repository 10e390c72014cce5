"""Stand-in scoring service: answers the external-reward wire protocol.

The judge hides a closed-form reward and serves it over HTTP, optionally
flipping comparison answers with a fixed probability to emulate an imperfect
rater. Useful both as a loopback test double and as a demo endpoint for the
external reward source.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .rewards import SimulatedJudge

__all__ = ["create_judge_app"]


class JudgeRequest(BaseModel):
    mode: str
    states: list[list[float]]
    meta: dict = {}


def create_judge_app(hidden_spec, flip_probability: float = 0.0, seed: int = 0) -> FastAPI:
    app = FastAPI(title="simulated reward judge")
    judge = SimulatedJudge(hidden_spec, flip_probability=flip_probability, seed=seed)
    app.state.judge = judge

    @app.post("/")
    def answer(body: JudgeRequest):
        states = np.asarray(body.states, dtype=float)
        if states.ndim != 2 or states.shape[1] != hidden_spec.dim:
            raise HTTPException(status_code=400, detail="states have the wrong shape")
        if body.mode == "score":
            return {"scores": [float(v) for v in judge.score(states)]}
        if body.mode == "compare":
            if states.shape[0] != 2:
                raise HTTPException(status_code=400, detail="compare needs exactly two states")
            return {"preferred": judge.compare(states[0], states[1])}
        raise HTTPException(status_code=400, detail=f"unknown mode {body.mode!r}")

    return app
