import init, { simulate, compare, switching_curve } from "./pkg/servo_smc_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
const $ = (id) => document.getElementById(id);

function plot(canvas, x, series, { xlabel = "t (s)", ylabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 44;
  ctx.clearRect(0, 0, w, h);
  let lo = Infinity, hi = -Infinity;
  for (const s of series) for (const v of s.y) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  if (lo === hi) { lo -= 1; hi += 1; }
  const span = hi - lo; lo -= 0.05 * span; hi += 0.05 * span;
  const x0 = x[0], x1 = x[x.length - 1];
  const px = (v) => pad + (v - x0) / (x1 - x0) * (w - 2 * pad);
  const py = (v) => h - pad + 10 - (v - lo) / (hi - lo) * (h - 2 * pad);

  ctx.strokeStyle = "#999"; ctx.fillStyle = "#444"; ctx.font = "11px sans-serif"; ctx.lineWidth = 1;
  ctx.strokeRect(pad, pad - 10, w - 2 * pad, h - 2 * pad);
  for (let i = 0; i <= 4; i++) {
    const v = lo + i * (hi - lo) / 4;
    ctx.fillText(v.toPrecision(3), 2, py(v) + 4);
    const t = x0 + i * (x1 - x0) / 4;
    ctx.fillText(t.toPrecision(3), px(t) - 10, h - pad + 24);
  }
  ctx.fillText(xlabel, w / 2, h - 4);
  ctx.fillText(ylabel, pad, pad - 16);

  series.forEach((s, k) => {
    ctx.strokeStyle = s.color || COLORS[k % COLORS.length];
    ctx.setLineDash(s.dash || []);
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    s.y.forEach((v, i) => (i ? ctx.lineTo(px(x[i]), py(v)) : ctx.moveTo(px(x[i]), py(v))));
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.label, w - pad - 90, pad + 4 + 14 * k);
  });
}

const fmt = (v) => (v === null || v === undefined ? "unsettled" : Number(v).toPrecision(4));

function knobs() {
  for (const id of ["eta", "phi", "dk", "dtau"]) {
    document.querySelector(`output[for=${id}]`).textContent = $(id).value;
  }
  return {
    profile: $("profile").value,
    eta: +$("eta").value,
    phi: +$("phi").value,
    dk: +$("dk").value,
    dtau: +$("dtau").value,
    sign: $("sign").checked,
  };
}

function guarded(f) {
  return () => {
    try { $("error").textContent = ""; f(); } catch (e) { $("error").textContent = String(e.message || e); }
  };
}

const runOnce = guarded(() => {
  const k = knobs();
  const out = JSON.parse(simulate(k.profile, k.eta, k.phi, k.dk, k.dtau, k.sign));
  const tr = out.trace;
  plot($("run-y"), tr.t, [
    { label: "reference", y: tr.r, dash: [5, 4], color: "#777" },
    { label: "speed y", y: tr.y },
  ], { ylabel: "volts" });
  plot($("run-u"), tr.t, [
    { label: "u applied", y: tr.u_applied },
    { label: "u smc", y: tr.u_smc, color: "#d62728" },
  ], { ylabel: "volts" });
  const m = out.metrics, st = out.stability;
  $("run-summary").textContent =
    `overshoot ${fmt(m.overshoot_pct)} %   settling ${fmt(m.settling_time)} s   ` +
    `sse ${fmt(m.steady_state_error_pct)} %   iae ${fmt(m.iae)}   tv ${fmt(m.control_tv)}\n` +
    `delta ${fmt(st.delta_bound_est)}   eta_min ${fmt(st.eta_min)}   gain condition ` +
    `${st.gain_condition_met ? "met" : "not met"}   decrease violations ${st.decrease_violations}` +
    ` of ${st.qualifying_steps}`;

  const c = JSON.parse(switching_curve(k.eta, k.phi, Math.max(4 * k.phi, 0.5), 401));
  plot($("curve"), c.s, [
    { label: "sat", y: c.sat },
    { label: "sign", y: c.sign, dash: [4, 3], color: "#d62728" },
  ], { xlabel: "s", ylabel: "u_smc (V)" });
});

const runCompare = guarded(() => {
  const out = JSON.parse(compare(knobs().profile));
  const t = out.rows[0].trace.t;
  plot($("cmp-y"), t, [
    { label: "reference", y: out.rows[0].trace.r, dash: [5, 4], color: "#777" },
    ...out.rows.map((r) => ({ label: r.label, y: r.trace.y })),
  ], { ylabel: "volts" });
  const cols = [
    ["overshoot %", "overshoot_pct", "overshoot_pct"],
    ["settling s", "settling_time", "settling_time"],
    ["sse %", "steady_state_error_pct", "sse"],
    ["iae", "iae", "iae"],
    ["tv", "control_tv", "control_tv"],
  ];
  let html = "<tr><th>preset</th>" + cols.map((c) => `<th>${c[0]} (rank)</th>`).join("") + "</tr>";
  for (const r of out.rows) {
    html += `<tr><td>${r.label}</td>` +
      cols.map((c) => `<td>${fmt(r.metrics[c[1]])} (${r.ranks[c[2]]})</td>`).join("") + "</tr>";
  }
  $("cmp-table").innerHTML = html;
});

await init();
document.querySelectorAll("#knobs input, #knobs select").forEach((el) => el.addEventListener("input", runOnce));
$("compare").addEventListener("click", runCompare);
runOnce();
runCompare();
