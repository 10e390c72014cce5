import { SteeringApi } from "./api.js";
import { SteeringController } from "./controller.js";
import { render } from "./render.js";
import type { SessionConfig } from "./types.js";

/** Session preset from query parameters, e.g.
 *  ?service=http://127.0.0.1:8000&model=gmm2d&K=16&T=32&seed=0&target=1.6,-1.0 */
function readConfig(search: string): {
  service: string;
  config: SessionConfig;
  target: number[] | null;
} {
  const params = new URLSearchParams(search);
  const config: SessionConfig = {
    model: params.get("model") ?? "gmm2d",
    demon: "selection",
    K: Number(params.get("K") ?? 16),
    T: Number(params.get("T") ?? 32),
    beta: Number(params.get("beta") ?? 0.1),
    seed: Number(params.get("seed") ?? 0),
    ode_steps: Number(params.get("ode_steps") ?? 20),
  };
  const targetText = params.get("target");
  const target = targetText ? targetText.split(",").map(Number) : null;
  return { service: params.get("service") ?? "http://127.0.0.1:8000", config, target };
}

function bootstrap(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const { service, config, target } = readConfig(window.location.search);
  const api = new SteeringApi(service);
  const controller: SteeringController = new SteeringController(api, config, target, (state) =>
    render(root, state, target, {
      onToggle: (index) => controller.toggle(index),
      onSubmit: () => void controller.submit(),
      onFinish: () => void controller.finishEarly(),
      onRetry: () => void controller.refresh(),
    }),
  );
  void controller.start();
  controller.startPolling(1000);
}

bootstrap();
