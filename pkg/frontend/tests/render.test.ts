// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import type { ControllerState } from "../src/controller.js";
import { render } from "../src/render.js";
import type { SessionView } from "../src/types.js";

function choosingState(k: number): ControllerState {
  const view: SessionView = {
    status: "awaiting_choice",
    step: 2,
    t: 1.25,
    token: "s2",
    candidates: Array.from({ length: k }, (_, index) => ({
      index,
      preview: [Math.cos(index), Math.sin(index)],
    })),
  };
  return {
    phase: "choosing",
    sessionId: "x",
    view,
    selected: new Set([1, 3]),
    progress: [
      { step: 0, t: 14.6, metric: 3.0 },
      { step: 1, t: 4.0, metric: 1.2 },
      { step: 2, t: 1.25, metric: 0.6 },
    ],
    trajectory: null,
    error: null,
  };
}

const NOOP = { onToggle: () => {}, onSubmit: () => {}, onFinish: () => {}, onRetry: () => {} };

describe("render", () => {
  it("shows one card per candidate with selection highlighting", () => {
    const container = document.createElement("div");
    render(container, choosingState(16), [1.6, -1.0], NOOP);
    const cards = container.querySelectorAll(".card");
    expect(cards).toHaveLength(16);
    expect(container.querySelectorAll(".card.selected")).toHaveLength(2);
    expect(container.querySelector(".metric")?.textContent).toContain("0.6");
    expect(container.querySelector(".chart .metric-line")).not.toBeNull();
  });

  it("labels the projection when the state has more than two coordinates", () => {
    const state = choosingState(4);
    for (const candidate of state.view!.candidates) {
      candidate.preview = [...candidate.preview, 0.5, -0.5];
    }
    const container = document.createElement("div");
    render(container, state, null, NOOP);
    expect(container.querySelector(".card .label")?.textContent).toContain("coords 0,1 of 4");
  });

  it("clicking a card reports its index", () => {
    const clicks: number[] = [];
    const container = document.createElement("div");
    render(container, choosingState(4), null, { ...NOOP, onToggle: (i) => clicks.push(i) });
    (container.querySelectorAll(".card")[2] as HTMLElement).click();
    expect(clicks).toEqual([2]);
  });

  it("shows the final preview and summary when done", () => {
    const state = choosingState(4);
    state.phase = "done";
    state.view = {
      status: "done",
      step: 5,
      t: 0.002,
      token: "s5",
      candidates: [],
      final_state: [1.2, -0.8],
    };
    state.trajectory = {
      steps: [],
      final_state: [1.2, -0.8],
      final_reward: null,
      reward_queries: 5,
      wall_time_ms: null,
      choices: [[0], [1], [2], [3], []],
    };
    const container = document.createElement("div");
    render(container, state, [1.6, -1.0], NOOP);
    expect(container.querySelector(".final")?.textContent).toContain("1.200");
    expect(container.querySelector(".summary")?.textContent).toContain("5 choices");
    expect(container.querySelectorAll(".card")).toHaveLength(0);
  });

  it("surfaces errors as a banner with a retry control", () => {
    const state = choosingState(4);
    state.error = "service unreachable: connection reset";
    let retried = false;
    const container = document.createElement("div");
    render(container, state, null, { ...NOOP, onRetry: () => (retried = true) });
    expect(container.querySelector(".banner")?.textContent).toContain("unreachable");
    (container.querySelector(".banner .retry") as HTMLElement).click();
    expect(retried).toBe(true);
  });
});
