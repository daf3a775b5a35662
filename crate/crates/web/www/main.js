import init, { fluid_band, sample_trajectory, steady_state_sweep } from "./pkg/eaq_web.js";

const POINTS = 201;

function model() {
  const f = document.getElementById("model");
  const num = (name) => Number(f.elements[name].value);
  return {
    preset: f.elements.preset.value,
    lambdaA: num("lambda_a"),
    muA: num("mu_a"),
    lambdaB: num("lambda_b"),
    muB: num("mu_b"),
    speedup: num("speedup"),
    n: num("n"),
    tEnd: num("t_end"),
  };
}

function columns(flat, width) {
  const cols = Array.from({ length: width }, () => []);
  for (let i = 0; i < flat.length; i += width) {
    for (let j = 0; j < width; j++) cols[j].push(flat[i + j]);
  }
  return cols;
}

// series: [{ xs, ys, color, dash, step }]
function plot(canvas, series, xLabel) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  ctx.clearRect(0, 0, w, h);
  const xs = series.flatMap((s) => s.xs), ys = series.flatMap((s) => s.ys);
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  let y0 = Math.min(...ys), y1 = Math.max(...ys);
  if (y1 === y0) { y0 -= 1; y1 += 1; }
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  ctx.fillText(y1.toPrecision(4), 2, pad + 4);
  ctx.fillText(y0.toPrecision(4), 2, h - pad);
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 16);
  ctx.fillText(x1.toPrecision(3), w - pad - 30, h - pad + 16);
  ctx.fillText(xLabel, w / 2, h - 8);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dash ?? []);
    ctx.beginPath();
    s.xs.forEach((x, i) => {
      if (i === 0) ctx.moveTo(sx(x), sy(s.ys[i]));
      else {
        if (s.step) ctx.lineTo(sx(x), sy(s.ys[i - 1]));
        ctx.lineTo(sx(x), sy(s.ys[i]));
      }
    });
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

function guarded(id, f) {
  const err = document.getElementById(`err-${id}`);
  return () => {
    err.textContent = "";
    try {
      f();
    } catch (e) {
      err.textContent = String(e);
    }
  };
}

function band() {
  const m = model();
  const flat = fluid_band(m.preset, m.lambdaA, m.muA, m.lambdaB, m.muB, m.speedup, m.n, m.tEnd, POINTS);
  const [t, y, lo, hi] = columns(flat, 4);
  plot(document.getElementById("plot-band"), [
    { xs: t, ys: lo, color: "#8ab", dash: [4, 3] },
    { xs: t, ys: hi, color: "#8ab", dash: [4, 3] },
    { xs: t, ys: y, color: "#024" },
  ], "t");
}

function path() {
  const m = model();
  const seed = Number(document.getElementById("seed").value);
  const flat = sample_trajectory(m.preset, m.lambdaA, m.muA, m.lambdaB, m.muB, m.speedup, m.n, m.tEnd, seed, POINTS);
  const [t, y1] = columns(flat, 3);
  const [tf, yf] = columns(fluid_band(m.preset, m.lambdaA, m.muA, m.lambdaB, m.muB, m.speedup, m.n, m.tEnd, POINTS), 4);
  plot(document.getElementById("plot-path"), [
    { xs: tf, ys: yf, color: "#024", dash: [4, 3] },
    { xs: t, ys: y1, color: "#c40", step: true },
  ], "t");
}

function sweep() {
  const m = model();
  const lo = Number(document.getElementById("sweep-lo").value);
  const hi = Number(document.getElementById("sweep-hi").value);
  const flat = steady_state_sweep(m.preset, m.lambdaA, m.muA, m.muB, m.speedup, lo, hi, 41);
  const [lb, ys, mu] = columns(flat, 3);
  plot(document.getElementById("plot-sweep"), [
    { xs: lb, ys, color: "#024" },
    { xs: lb, ys: mu, color: "#c40", dash: [4, 3] },
  ], "lambda_B (solid y_s, dashed mu_eff)");
}

await init();
document.getElementById("run-band").onclick = guarded("band", band);
document.getElementById("run-path").onclick = guarded("path", path);
document.getElementById("run-sweep").onclick = guarded("sweep", sweep);
guarded("band", band)();
