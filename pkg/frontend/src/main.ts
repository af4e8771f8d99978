/** Browser entry point: wires the store, socket session, drag controller,
 *  and a requestAnimationFrame paint loop to the DOM. */

import { DragController, Viewport } from "./drag.js";
import { paint } from "./paint.js";
import { render } from "./render.js";
import { Session } from "./socket.js";
import { Store } from "./store.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const view: Viewport = {
  widthPx: canvas.width,
  heightPx: canvas.height,
  pxPerMeter: canvas.width / 0.15,
};

const store = new Store();
const url = new URLSearchParams(location.search).get("ws") ??
  `ws://${location.hostname}:8765/ws`;
const session = new Session(url, store);
const drag = new DragController(store, (cmd) => session.send(cmd));

canvas.addEventListener("pointerdown", (ev) => {
  canvas.setPointerCapture(ev.pointerId);
  drag.pointerDown(view, ev.offsetX, ev.offsetY);
});
canvas.addEventListener("pointermove", (ev) => {
  drag.pointerMove(view, ev.offsetX, ev.offsetY);
});
canvas.addEventListener("pointerup", () => drag.pointerUp());
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  drag.wheel(Math.sign(ev.deltaY));
}, { passive: false });

function button(id: string, handler: () => void): void {
  document.getElementById(id)?.addEventListener("click", handler);
}

button("mode-motion", () => session.send({ type: "set_mode", mode: "motion" }));
button("mode-haptic", () => session.send({ type: "set_mode", mode: "haptic" }));
button("pause", () => session.send({ type: "pause" }));
button("resume", () => session.send({ type: "resume" }));
button("load-scene", () => {
  const text = (document.getElementById("scene-json") as HTMLTextAreaElement)
    .value;
  try {
    const scene = JSON.parse(text);
    store.scene = scene;
    session.send({ type: "load_scene", scene });
  } catch {
    store.lastError = "scene JSON does not parse";
    store.notify();
  }
});

function loop(): void {
  paint(ctx, canvas.width, canvas.height, render(store, view, Date.now()));
  requestAnimationFrame(loop);
}
requestAnimationFrame(loop);
