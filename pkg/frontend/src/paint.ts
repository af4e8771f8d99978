/** Canvas 2D backend for the draw list produced by render(). */

import { Primitive } from "./render.js";

export function paint(ctx: CanvasRenderingContext2D, width: number,
                      height: number, list: Primitive[]): void {
  ctx.fillStyle = "#10161d";
  ctx.fillRect(0, 0, width, height);
  for (const p of list) {
    switch (p.kind) {
      case "rect":
        if (p.fill) {
          ctx.fillStyle = p.fill;
          ctx.fillRect(p.x, p.y, p.w, p.h);
        }
        if (p.stroke) {
          ctx.strokeStyle = p.stroke;
          ctx.lineWidth = p.lineWidth ?? 1;
          ctx.strokeRect(p.x, p.y, p.w, p.h);
        }
        break;
      case "circle":
        ctx.beginPath();
        ctx.arc(p.x, p.y, p.r, 0, 2 * Math.PI);
        if (p.fill) {
          ctx.fillStyle = p.fill;
          ctx.fill();
        }
        if (p.stroke) {
          ctx.strokeStyle = p.stroke;
          ctx.stroke();
        }
        break;
      case "line":
        ctx.strokeStyle = p.stroke;
        ctx.lineWidth = p.lineWidth ?? 1;
        ctx.beginPath();
        ctx.moveTo(p.x1, p.y1);
        ctx.lineTo(p.x2, p.y2);
        ctx.stroke();
        break;
      case "arrow": {
        ctx.strokeStyle = p.stroke;
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.moveTo(p.x1, p.y1);
        ctx.lineTo(p.x2, p.y2);
        const angle = Math.atan2(p.y2 - p.y1, p.x2 - p.x1);
        const head = 8;
        ctx.lineTo(p.x2 - head * Math.cos(angle - 0.5),
                   p.y2 - head * Math.sin(angle - 0.5));
        ctx.moveTo(p.x2, p.y2);
        ctx.lineTo(p.x2 - head * Math.cos(angle + 0.5),
                   p.y2 - head * Math.sin(angle + 0.5));
        ctx.stroke();
        break;
      }
      case "text":
        ctx.fillStyle = p.fill;
        ctx.font = `${p.size ?? 11}px monospace`;
        ctx.fillText(p.text, p.x, p.y);
        break;
      case "polyline":
        if (p.points.length < 2) break;
        ctx.strokeStyle = p.stroke;
        ctx.lineWidth = 1;
        ctx.beginPath();
        ctx.moveTo(p.points[0][0], p.points[0][1]);
        for (const [x, y] of p.points.slice(1)) ctx.lineTo(x, y);
        ctx.stroke();
        break;
    }
  }
}
