import init, { simulate, nash_curve, finite_k_deviation } from "./pkg/pluricurate_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(40, 10);
  ctx.lineTo(40, h - 20);
  ctx.lineTo(w - 10, h - 20);
  ctx.stroke();
}

// Draws each series as a polyline over shared x/y ranges.
function plot(canvas, series, { xmin, xmax, ymin, ymax, labels = [] }) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  axes(ctx, w, h);
  const sx = (x) => 40 + ((x - xmin) / (xmax - xmin)) * (w - 50);
  const sy = (y) => h - 20 - ((y - ymin) / (ymax - ymin || 1)) * (h - 30);
  series.forEach(([xs, ys, dashed], i) => {
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.setLineDash(dashed ? [4, 4] : []);
    ctx.beginPath();
    xs.forEach((x, j) => (j ? ctx.lineTo(sx(x), sy(ys[j])) : ctx.moveTo(sx(x), sy(ys[j]))));
    ctx.stroke();
  });
  ctx.setLineDash([]);
  ctx.fillStyle = "#333";
  ctx.fillText(ymax.toPrecision(3), 2, 14);
  ctx.fillText(ymin.toPrecision(3), 2, h - 22);
  ctx.fillText(xmin.toPrecision(3), 40, h - 6);
  ctx.fillText(xmax.toPrecision(3), w - 40, h - 6);
  labels.forEach((text, i) => {
    ctx.fillStyle = COLORS[i % COLORS.length];
    ctx.fillText(text, w - 120, 20 + 14 * i);
  });
}

const num = (id) => Number(document.getElementById(id).value);
const list = (id) => document.getElementById(id).value.split(",").map(Number).filter((v) => !Number.isNaN(v));

function runDynamics() {
  const out = document.getElementById("dyn-out");
  try {
    const r = simulate(num("d"), num("q"), num("g"), num("t"));
    const x = Array.from(r.x);
    const dens = Array.from(r.density);
    const peak = Math.max(...dens);
    // Rewards rescaled into the density's range for display.
    const scale = (vals) => {
      const v = Array.from(vals);
      const lo = Math.min(...v);
      return v.map((y) => ((y - lo) / -lo) * peak);
    };
    plot(document.getElementById("density"), [[x, dens], [x, scale(r.r1), true], [x, scale(r.r2), true]], {
      xmin: x[0], xmax: x[x.length - 1], ymin: 0, ymax: peak, labels: ["final density", "r1 (scaled)", "r2 (scaled)"],
    });
    const share = Array.from(r.share);
    const t = share.map((_, i) => i);
    plot(
      document.getElementById("share"),
      [[t, share], [t, t.map(() => r.lower), true], [t, t.map(() => r.upper), true]],
      { xmin: 0, xmax: t.length - 1, ymin: 0, ymax: 1, labels: ["basin-1 share", "lower bound", "upper bound"] },
    );
    const m = Array.from(r.outside);
    out.textContent = `limit share ${r.limit.toFixed(6)}, bounds [${r.lower.toFixed(6)}, ${r.upper.toFixed(6)}], final outside mass ${m[m.length - 1].toExponential(3)}`;
  } catch (e) {
    out.textContent = String(e);
  }
}

function runNash() {
  const qs = Array.from({ length: 19 }, (_, i) => 0.05 + 0.05 * i);
  const ds = list("nd");
  const series = [[qs, qs, true]];
  for (const d of ds) {
    try {
      series.push([qs, Array.from(nash_curve(d, Float64Array.from(qs)))]);
    } catch (e) {
      console.warn(`distance ${d}: ${e}`);
    }
  }
  plot(document.getElementById("nash-plot"), series, {
    xmin: 0, xmax: 1, ymin: 0, ymax: 1, labels: ["a = q", ...ds.map((d) => `D = ${d}`)],
  });
}

function runConcentration() {
  const out = document.getElementById("conc-out");
  const ks = list("ck");
  try {
    const dev = Array.from(finite_k_deviation(num("cg"), ks));
    plot(document.getElementById("conc-plot"), [[ks, dev]], {
      xmin: ks[0], xmax: ks[ks.length - 1], ymin: 0, ymax: Math.max(...dev), labels: ["sup deviation"],
    });
    out.textContent = ks.map((k, i) => `K=${k}: ${dev[i].toExponential(3)}`).join("  ");
  } catch (e) {
    out.textContent = String(e);
  }
}

await init();
document.getElementById("run").onclick = runDynamics;
document.getElementById("nash").onclick = runNash;
document.getElementById("conc").onclick = runConcentration;
runDynamics();
runNash();
runConcentration();
