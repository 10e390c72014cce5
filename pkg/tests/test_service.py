import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from demon_sampling.core import ode_map
from demon_sampling.service import SessionConfig, _new_session, create_app, restore_session


@pytest.fixture()
def client():
    return TestClient(create_app())


def make_session(client, **overrides):
    body = {"model": "gmm2d", "demon": "selection", "K": 16, "T": 8, "seed": 3}
    body.update(overrides)
    response = client.post("/sessions", json=body)
    assert response.status_code == 201
    doc = response.json()
    return doc["id"], doc["state"]


class TestSessionLifecycle:
    def test_create_shape(self, client):
        _, view = make_session(client, K=16)
        assert view["status"] == "awaiting_choice"
        assert view["step"] == 0
        assert view["token"] == "s0"
        assert len(view["candidates"]) == 16
        assert all(len(c["preview"]) == 2 for c in view["candidates"])
        assert [c["index"] for c in view["candidates"]] == list(range(16))

    def test_same_seed_same_candidates(self, client):
        _, a = make_session(client, seed=42)
        _, b = make_session(client, seed=42)
        assert a["candidates"] == b["candidates"]

    def test_two_point_schedule_single_round(self, client):
        sid, view = make_session(client, T=2)
        assert view["status"] == "awaiting_choice"
        view = client.post(
            f"/sessions/{sid}/choice", json={"token": "s0", "chosen": [0]}
        ).json()
        assert view["status"] == "done"
        assert "final_state" in view

    def test_non_selection_mode_rejected(self, client):
        response = client.post("/sessions", json={"model": "gmm2d", "demon": "tanh"})
        assert response.status_code == 400

    def test_unknown_session(self, client):
        assert client.get("/sessions/missing").status_code == 404
        assert (
            client.post("/sessions/missing/choice", json={"token": "s0", "chosen": []}).status_code
            == 404
        )


class TestChoiceProtocol:
    def test_empty_selection_still_advances(self, client):
        sid, view = make_session(client)
        out = client.post(f"/sessions/{sid}/choice", json={"token": "s0", "chosen": []})
        assert out.status_code == 200
        assert out.json()["step"] == 1

    def test_stale_token_rejected_on_each_replay(self, client):
        sid, view = make_session(client)
        ok = client.post(f"/sessions/{sid}/choice", json={"token": "s0", "chosen": [1]})
        assert ok.status_code == 200
        for _ in range(3):
            replay = client.post(f"/sessions/{sid}/choice", json={"token": "s0", "chosen": [1]})
            assert replay.status_code == 409

    def test_invalid_indices_rejected(self, client):
        sid, _ = make_session(client, K=4)
        out = client.post(f"/sessions/{sid}/choice", json={"token": "s0", "chosen": [9]})
        assert out.status_code == 400

    def test_done_session_rejects_choices(self, client):
        sid, _ = make_session(client, T=2)
        client.post(f"/sessions/{sid}/choice", json={"token": "s0", "chosen": [0]})
        out = client.post(f"/sessions/{sid}/choice", json={"token": "s1", "chosen": [0]})
        assert out.status_code == 409

    def test_finish_early_completes(self, client):
        sid, _ = make_session(client, T=6)
        client.post(f"/sessions/{sid}/choice", json={"token": "s0", "chosen": [2]})
        view = client.post(f"/sessions/{sid}/finish").json()
        assert view["status"] == "done"
        trajectory = client.get(f"/sessions/{sid}/trajectory").json()
        assert len(trajectory["steps"]) == 5


class TestTrajectoryEndpoint:
    def test_step_records_and_final(self, client):
        sid, view = make_session(client, T=4, K=4)
        while view["status"] == "awaiting_choice":
            view = client.post(
                f"/sessions/{sid}/choice", json={"token": view["token"], "chosen": [0]}
            ).json()
        doc = client.get(f"/sessions/{sid}/trajectory").json()
        assert len(doc["steps"]) == 3
        assert doc["reward_queries"] == 3
        assert doc["choices"] == [[0], [0], [0]]
        for record in doc["steps"]:
            assert set(record) == {
                "t", "delta", "estimates", "weights", "tau", "mu_hat", "z_star_norm",
            }
            assert np.isclose(record["z_star_norm"], np.sqrt(2), rtol=1e-9)
        assert np.array_equal(doc["final_state"], view["final_state"])


class TestReplayAndSnapshots:
    def test_recorded_choices_reproduce_final_state(self, client):
        sid, view = make_session(client, T=6, K=8, seed=11)
        rng = np.random.default_rng(0)
        while view["status"] == "awaiting_choice":
            chosen = [int(rng.integers(8))]
            view = client.post(
                f"/sessions/{sid}/choice", json={"token": view["token"], "chosen": chosen}
            ).json()
        doc = client.get(f"/sessions/{sid}/trajectory").json()
        session = _new_session(SessionConfig(model="gmm2d", demon="selection", K=8, T=6, seed=11))
        for chosen in doc["choices"]:
            session.apply_choice(chosen)
        assert [float(v) for v in session.x] == view["final_state"]

    def test_snapshot_restore(self, tmp_path):
        app = create_app(snapshot_dir=tmp_path)
        client = TestClient(app)
        sid, view = make_session(client, T=5, K=4, seed=7)
        client.post(f"/sessions/{sid}/choice", json={"token": "s0", "chosen": [1]})
        client.post(f"/sessions/{sid}/choice", json={"token": "s1", "chosen": [3]})
        snapshot_path = tmp_path / f"{sid}.json"
        assert snapshot_path.exists()
        doc = json.loads(snapshot_path.read_text())
        assert doc["choices"] == [[1], [3]]
        restored = restore_session(snapshot_path)
        live = client.get(f"/sessions/{sid}").json()
        assert restored.step_index == live["step"]
        assert restored.view()["candidates"] == live["candidates"]


class TestConcurrency:
    def test_parallel_submits_apply_exactly_once(self):
        import threading

        session = _new_session(
            SessionConfig(model="gmm2d", demon="selection", K=4, T=8, seed=1)
        )
        results = []

        def submit():
            with session.lock:
                if session.token == "s0" and session.status == "awaiting_choice":
                    session.apply_choice([0])
                    results.append("applied")
                else:
                    results.append("stale")

        threads = [threading.Thread(target=submit) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results.count("applied") == 1
        assert session.step_index == 1


class TestScriptedSteering:
    def test_nearest_choice_descends_before_convergence(self):
        target = np.array([1.6, -1.0])
        decreased, total = 0, 0
        for seed in range(6):
            session = _new_session(
                SessionConfig(model="gmm2d", demon="selection", K=16, T=32, seed=4000 + seed, ode_steps=8)
            )
            d_prev = np.linalg.norm(ode_map(session.model, session.x, session.current_t, 8) - target)
            while session.status == "awaiting_choice":
                previews = session.pending_previews
                best = int(np.argmin(np.linalg.norm(previews - target, axis=1)))
                session.apply_choice([best])
                current = (
                    ode_map(session.model, session.x, session.current_t, 8)
                    if session.status != "done"
                    else session.x
                )
                d_new = float(np.linalg.norm(current - target))
                if d_prev >= 0.1:  # rounds with room to improve
                    total += 1
                    decreased += d_new < d_prev
                d_prev = d_new
        assert decreased / total >= 0.65
