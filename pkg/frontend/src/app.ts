/** Page wiring: socket, keyboard, sliders, toggle, and the render loop. */

import { TeleopClient, urlFromQuery } from "./client.js";
import { JogInput } from "./input.js";
import { drawFrame, isIntervening, Sparkline, Viewport } from "./render.js";

const JOG_HZ = 30;

export function startApp(doc: Document): void {
  const canvas = doc.getElementById("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const statusEl = doc.getElementById("status")!;
  const latencyEl = doc.getElementById("latency")!;
  const interventionEl = doc.getElementById("intervention")!;
  const haltedEl = doc.getElementById("halted")!;
  const filterToggle = doc.getElementById("filter-toggle") as HTMLInputElement;
  const resetBtn = doc.getElementById("reset")!;

  const client = new TeleopClient(
    urlFromQuery(window.location.search),
    (url) => new WebSocket(url) as unknown as import("./client.js").SocketLike,
  );
  const input = new JogInput();
  const sparkline = new Sparkline();

  const viewports: Viewport[] = [
    { x: 0, y: 0, w: canvas.width / 2, h: canvas.height - 80, view: "top",
      scale: 300, center: [0.4, 0] },
    { x: canvas.width / 2, y: 0, w: canvas.width / 2, h: canvas.height - 80,
      view: "side", scale: 300, center: [0.4, 0.4] },
  ];

  doc.addEventListener("keydown", (ev) => {
    if (!haltedEl.classList.contains("visible")) input.keyDown(ev.key);
  });
  doc.addEventListener("keyup", (ev) => input.keyUp(ev.key));
  for (let i = 0; i < 6; i++) {
    const slider = doc.getElementById(`slider-${i}`) as HTMLInputElement | null;
    slider?.addEventListener("input", () => {
      input.setSlider(i, parseFloat(slider.value));
    });
  }
  filterToggle.addEventListener("change", () => {
    client.sendSetFilter(filterToggle.checked);
  });
  resetBtn.addEventListener("click", () => client.sendReset());

  client.onFrame((frame) => {
    sparkline.push(frame.d_min);
    // the toggle reflects only the server-acknowledged filter state
    filterToggle.checked = frame.filter_on;
    interventionEl.classList.toggle("visible", isIntervening(frame));
    haltedEl.classList.toggle("visible", frame.status === "halted");
  });
  client.connect();

  setInterval(() => {
    // zero twist is sent too, so releasing all inputs stops the robot
    if (client.latestFrame?.status !== "halted") {
      client.sendJog(input.twist());
    }
  }, 1000 / JOG_HZ);

  const render = () => {
    statusEl.textContent = client.status;
    latencyEl.textContent =
      client.latencyMs === null ? "—" : `${client.latencyMs.toFixed(0)} ms`;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (client.latestFrame !== null) {
      drawFrame(ctx, client.latestFrame, viewports, client.isStale());
      sparkline.draw(ctx, 10, canvas.height - 70, canvas.width - 20, 60, 0.01);
    }
    requestAnimationFrame(render);
  };
  requestAnimationFrame(render);
}
