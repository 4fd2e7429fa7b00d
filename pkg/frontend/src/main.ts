/**
 * Browser entry point: fetches the wire path over HTTP, opens the
 * WebSocket session, and wires network → ViewState → Scene and
 * DOM events → InputCapture → socket.
 */

import { InputCapture } from "./input.js";
import { decode, encode, ProtocolError, type ClientMessage } from "./protocol.js";
import { Scene, type PathJson } from "./scene.js";
import { INSTRUCTION_TEXT, SessionController, type Screen } from "./session.js";
import { ViewState } from "./viewstate.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function serverBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("server") ?? `${window.location.hostname}:8765`;
}

async function start(): Promise<void> {
  const base = serverBase();
  const banner = el<HTMLDivElement>("banner");
  const canvas = el<HTMLCanvasElement>("scene");

  let path: PathJson;
  try {
    const resp = await fetch(`http://${base}/path.json`);
    if (!resp.ok) throw new Error(`HTTP ${resp.status}`);
    path = (await resp.json()) as PathJson;
  } catch (e) {
    banner.textContent = `Cannot load wire path from ${base}: ${(e as Error).message}`;
    banner.hidden = false;
    return; // blocking: nothing sensible to render without the path
  }

  const scene = new Scene(canvas, path);
  const view = new ViewState();
  let seq = 0;
  let socket: WebSocket | null = null;

  const sendMessage = (msg: ClientMessage): void => {
    if (socket !== null && socket.readyState === WebSocket.OPEN) {
      socket.send(encode(msg, ++seq));
    }
  };

  const session = new SessionController(sendMessage);
  const input = new InputCapture({ send: sendMessage, now: () => performance.now() });

  socket = new WebSocket(`ws://${base}/`);
  socket.onopen = () => {
    view.status = "connected";
    input.setConnected(true);
    banner.hidden = true;
    session.connected();
    render();
  };
  socket.onclose = (ev) => {
    view.status = "disconnected";
    input.setConnected(false);
    banner.textContent = ev.code === 4000 ? "Another trainee is connected." : "Disconnected from server.";
    banner.hidden = false;
    render();
  };
  socket.onmessage = (ev) => {
    let result;
    try {
      result = decode(String(ev.data));
    } catch (e) {
      if (e instanceof ProtocolError) return; // ignore frames we cannot parse
      throw e;
    }
    if (result.msg.type === "state") {
      view.push(result.msg, performance.now());
      session.handleState(result.msg);
    } else if (result.msg.type === "event") {
      session.handleEvent(result.msg);
      render();
    }
  };

  // -- input wiring --------------------------------------------------------

  canvas.addEventListener("pointerdown", (ev) => {
    canvas.setPointerCapture(ev.pointerId);
    input.pointerDown();
  });
  canvas.addEventListener("pointermove", (ev) => input.pointerMove(ev.movementX, ev.movementY));
  canvas.addEventListener("pointerup", () => input.pointerUp());
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    input.wheel(ev.deltaY);
  });
  window.addEventListener("keydown", (ev) => input.keyDown(ev.key, ev.repeat));
  window.addEventListener("keyup", (ev) => input.keyUp(ev.key));

  // -- screens -------------------------------------------------------------

  const screens: Record<string, () => void> = {
    "btn-start-session": () => session.startSession(),
    "btn-start-trial": () => session.startTrial(),
    "btn-abort": () => session.abortTrial(),
    "btn-next-trial": () => session.startTrial(),
    "btn-next-day": () => session.nextDay(),
  };
  for (const [id, action] of Object.entries(screens)) {
    el<HTMLButtonElement>(id).addEventListener("click", () => {
      action();
      render();
    });
  }
  el<HTMLParagraphElement>("instructions-text").textContent = INSTRUCTION_TEXT;

  function render(): void {
    const visible: Record<Screen, string[]> = {
      connecting: [],
      instructions: ["screen-instructions"],
      ready: ["screen-ready"],
      running: ["btn-abort"],
      trial_complete: ["screen-trial-complete"],
      day_complete: ["screen-day-complete"],
      session_complete: ["screen-session-complete"],
    };
    const shown = new Set(visible[session.screen]);
    for (const id of [
      "screen-instructions",
      "screen-ready",
      "btn-abort",
      "screen-trial-complete",
      "screen-day-complete",
      "screen-session-complete",
    ]) {
      el(id).hidden = !shown.has(id);
    }
    el("ready-info").textContent =
      `Day ${session.day}, trial ${session.trialIndex} (${session.fieldMode})` +
      (session.abortNotice ? ` — previous trial aborted: ${session.abortNotice}` : "");
    el("metrics").innerHTML = session
      .metricsPanel()
      .map((r) => `<tr><td>${r.label}</td><td>${r.value}</td></tr>`)
      .join("");
    el("quartiles").innerHTML = session
      .quartilesPanel()
      .map((r) => `<tr><td>${r.label}</td><td>${r.value}</td></tr>`)
      .join("");
    el("error").textContent = session.errorMessage ?? "";
  }

  // -- frame loop ----------------------------------------------------------

  const hud = el<HTMLDivElement>("hud");
  function frame(): void {
    const now = performance.now();
    input.tick();
    const pose = view.poseAt(now);
    const latest = view.latest;
    if (pose !== null && latest !== null) {
      scene.update(pose, latest.color);
      hud.textContent = session.hudText(latest);
    }
    const rect = canvas.getBoundingClientRect();
    scene.resize(rect.width, rect.height);
    scene.render();
    requestAnimationFrame(frame);
  }
  render();
  requestAnimationFrame(frame);
}

void start();
