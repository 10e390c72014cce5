import type { ControllerState } from "./controller.js";
import type { Candidate, ProgressPoint } from "./types.js";

export interface RenderHandlers {
  onToggle: (index: number) => void;
  onSubmit: () => void;
  onFinish: () => void;
  onRetry: () => void;
}

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Scatter mark of a preview, projected onto the first two coordinates. */
function previewSvg(preview: number[], target: number[] | null, extent: number): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", "0 0 100 100");
  svg.setAttribute("class", "preview");
  const toPx = (v: number) => 50 + (45 * v) / extent;
  const axes = document.createElementNS(SVG_NS, "path");
  axes.setAttribute("d", "M 50 0 V 100 M 0 50 H 100");
  axes.setAttribute("class", "axes");
  svg.appendChild(axes);
  if (target) {
    const mark = document.createElementNS(SVG_NS, "circle");
    mark.setAttribute("cx", String(toPx(target[0] ?? 0)));
    mark.setAttribute("cy", String(100 - toPx(target[1] ?? 0)));
    mark.setAttribute("r", "4");
    mark.setAttribute("class", "target");
    svg.appendChild(mark);
  }
  const dot = document.createElementNS(SVG_NS, "circle");
  dot.setAttribute("cx", String(toPx(preview[0] ?? 0)));
  dot.setAttribute("cy", String(100 - toPx(preview[1] ?? 0)));
  dot.setAttribute("r", "5");
  dot.setAttribute("class", "point");
  svg.appendChild(dot);
  return svg;
}

function candidateCard(
  candidate: Candidate,
  selected: boolean,
  target: number[] | null,
  extent: number,
  onToggle: (index: number) => void,
): HTMLElement {
  const card = el("button", selected ? "card selected" : "card");
  card.dataset.index = String(candidate.index);
  card.appendChild(previewSvg(candidate.preview, target, extent));
  const label =
    candidate.preview.length > 2
      ? `#${candidate.index} (coords 0,1 of ${candidate.preview.length})`
      : `#${candidate.index}`;
  card.appendChild(el("span", "label", label));
  card.addEventListener("click", () => onToggle(candidate.index));
  return card;
}

function progressChart(points: ProgressPoint[]): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", "0 0 200 60");
  svg.setAttribute("class", "chart");
  const metrics = points.filter((p) => p.metric !== undefined);
  if (metrics.length >= 2) {
    const max = Math.max(...metrics.map((p) => p.metric as number), 1e-9);
    const path = metrics
      .map((p, i) => {
        const x = (195 * i) / (metrics.length - 1) + 2.5;
        const y = 55 - (50 * (p.metric as number)) / max;
        return `${i === 0 ? "M" : "L"} ${x.toFixed(1)} ${y.toFixed(1)}`;
      })
      .join(" ");
    const line = document.createElementNS(SVG_NS, "path");
    line.setAttribute("d", path);
    line.setAttribute("class", "metric-line");
    svg.appendChild(line);
  }
  return svg;
}

/** Rebuild the whole UI from the controller state (small K, so no diffing). */
export function render(
  container: HTMLElement,
  state: ControllerState,
  target: number[] | null,
  handlers: RenderHandlers,
): void {
  container.replaceChildren();

  if (state.error) {
    const banner = el("div", "banner", state.error);
    const retry = el("button", "retry", "Retry");
    retry.addEventListener("click", handlers.onRetry);
    banner.appendChild(retry);
    container.appendChild(banner);
  }

  const view = state.view;
  if (!view) {
    container.appendChild(el("p", "status", "Starting session..."));
    return;
  }

  const head = el("div", "progress");
  head.appendChild(el("span", "step", `round ${view.step}`));
  head.appendChild(el("span", "time", `t = ${view.t.toFixed(4)}`));
  const latest = state.progress[state.progress.length - 1];
  if (latest && latest.metric !== undefined) {
    head.appendChild(el("span", "metric", `distance to target = ${latest.metric.toFixed(4)}`));
  }
  container.appendChild(head);
  container.appendChild(progressChart(state.progress));

  if (view.status === "done") {
    container.appendChild(el("p", "status", "Sampling finished."));
    if (view.final_state) {
      container.appendChild(previewSvg(view.final_state, target, chartExtent(view.final_state, target)));
      container.appendChild(el("p", "final", `final state: [${view.final_state.map((v) => v.toFixed(3)).join(", ")}]`));
    }
    if (state.trajectory) {
      container.appendChild(
        el("p", "summary", `${state.trajectory.steps.length} rounds, ${state.trajectory.reward_queries} choices`),
      );
    }
    return;
  }

  const extent = Math.max(
    ...view.candidates.flatMap((c) => c.preview.slice(0, 2).map(Math.abs)),
    ...(target ? target.slice(0, 2).map(Math.abs) : [0]),
    1e-6,
  );
  const grid = el("div", "grid");
  for (const candidate of view.candidates) {
    grid.appendChild(
      candidateCard(candidate, state.selected.has(candidate.index), target, extent, handlers.onToggle),
    );
  }
  container.appendChild(grid);

  const controls = el("div", "controls");
  const submit = el("button", "submit", state.phase === "submitting" ? "Submitting..." : "Submit choice");
  submit.disabled = state.phase !== "choosing";
  submit.addEventListener("click", handlers.onSubmit);
  controls.appendChild(submit);
  const finish = el("button", "finish", "Finish early");
  finish.disabled = state.phase !== "choosing";
  finish.addEventListener("click", handlers.onFinish);
  controls.appendChild(finish);
  container.appendChild(controls);
}

function chartExtent(state: number[], target: number[] | null): number {
  return Math.max(
    ...state.slice(0, 2).map(Math.abs),
    ...(target ? target.slice(0, 2).map(Math.abs) : [0]),
    1e-6,
  );
}
