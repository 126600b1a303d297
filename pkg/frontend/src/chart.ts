/** Minimal canvas line chart for the requested/actual aperture pair. */

export interface Series {
  label: string;
  color: string;
  points: { t: number; v: number }[];
}

export function drawChart(canvas: HTMLCanvasElement, series: Series[],
                          windowMs: number, stale: boolean): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);

  const all = series.flatMap((s) => s.points);
  if (all.length < 2) return;
  const tMax = Math.max(...all.map((p) => p.t));
  const tMin = tMax - windowMs;
  const visible = series.map((s) => ({ ...s, points: s.points.filter((p) => p.t >= tMin) }));
  const values = visible.flatMap((s) => s.points.map((p) => p.v));
  if (values.length === 0) return;
  let vMin = Math.min(...values);
  let vMax = Math.max(...values);
  if (vMax - vMin < 1.0) { vMax += 0.5; vMin -= 0.5; }
  const pad = 0.08 * (vMax - vMin);
  vMin -= pad; vMax += pad;

  const x = (t: number) => ((t - tMin) / windowMs) * width;
  const y = (v: number) => height - ((v - vMin) / (vMax - vMin)) * height;

  ctx.strokeStyle = "#2a3442";
  ctx.lineWidth = 1;
  for (let g = 0; g <= 4; g++) {
    const gy = (height * g) / 4;
    ctx.beginPath();
    ctx.moveTo(0, gy);
    ctx.lineTo(width, gy);
    ctx.stroke();
  }

  for (const s of visible) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.points.forEach((p, i) => {
      if (i === 0) ctx.moveTo(x(p.t), y(p.v));
      else ctx.lineTo(x(p.t), y(p.v));
    });
    ctx.stroke();
  }

  ctx.font = "12px system-ui, sans-serif";
  ctx.fillStyle = "#8fa3b8";
  ctx.fillText(`${vMax.toFixed(1)} mm`, 6, 14);
  ctx.fillText(`${vMin.toFixed(1)} mm`, 6, height - 6);

  if (stale) {
    ctx.fillStyle = "rgba(200, 60, 60, 0.85)";
    ctx.fillRect(width / 2 - 60, 8, 120, 22);
    ctx.fillStyle = "#fff";
    ctx.fillText("STALE FEED", width / 2 - 34, 23);
  }
}
