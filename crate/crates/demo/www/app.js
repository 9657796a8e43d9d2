import init, { ridit, expectedAgreement, kappaCurve } from "./pkg/genlab_demo.js";

const $ = (id) => document.getElementById(id);

function showError(target, err) {
  target.innerHTML = "";
  const p = document.createElement("p");
  p.className = "error";
  p.textContent = String(err.message ?? err);
  target.appendChild(p);
}

function runRidit() {
  const out = $("ridit-out");
  try {
    const values = $("ratings").value
      .split(/[\s,]+/)
      .filter((s) => s.length > 0)
      .map((s) => Number.parseInt(s, 10));
    if (values.some((v) => !Number.isInteger(v) || v < 0 || v > 255)) {
      throw new Error("ratings must be whole numbers");
    }
    const scores = ridit(Uint8Array.from(values));
    const rows = Array.from(scores, (s, i) =>
      `<tr><td>${i + 1}</td><td>${Number.isNaN(s) ? "unused" : s.toFixed(4)}</td></tr>`);
    out.innerHTML = `<table><tr><th>confidence</th><th>ridit</th></tr>${rows.join("")}</table>`;
  } catch (err) {
    showError(out, err);
  }
}

function runExpected() {
  const out = $("pe-out");
  try {
    const t0 = performance.now();
    const pe = expectedAgreement(
      Number($("beta0").value),
      Number($("sigma").value),
      Number.parseInt($("reps").value, 10),
      Number.parseInt($("seed").value, 10),
    );
    const ms = performance.now() - t0;
    out.textContent = `p_e = ${pe.toFixed(4)} (${ms.toFixed(0)} ms)`;
    $("pe").value = pe.toFixed(4);
  } catch (err) {
    showError(out, err);
  }
}

function runKappa() {
  const out = $("kappa-out");
  const canvas = $("kappa-plot");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  try {
    const n = 101;
    const ks = kappaCurve(Number($("a0").value), Number($("aconf").value), Number($("pe").value), n);
    out.textContent = `κ at product 0: ${ks[0].toFixed(3)}, at product 1: ${ks[n - 1].toFixed(3)}`;
    const lo = Math.min(-0.1, ...ks);
    const hi = Math.max(0.5, ...ks);
    const pad = 30;
    const x = (i) => pad + (i / (n - 1)) * (canvas.width - 2 * pad);
    const y = (k) => canvas.height - pad - ((k - lo) / (hi - lo)) * (canvas.height - 2 * pad);
    ctx.strokeStyle = "#999";
    ctx.beginPath();
    ctx.moveTo(pad, y(0));
    ctx.lineTo(canvas.width - pad, y(0));
    ctx.stroke();
    ctx.fillStyle = "#444";
    ctx.fillText("κ = 0", 2, y(0) + 4);
    ctx.fillText("confidence product 0", pad, canvas.height - 8);
    ctx.fillText("1", canvas.width - pad - 4, canvas.height - 8);
    ctx.strokeStyle = "#1f5fbf";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ks.forEach((k, i) => (i === 0 ? ctx.moveTo(x(i), y(k)) : ctx.lineTo(x(i), y(k))));
    ctx.stroke();
  } catch (err) {
    showError(out, err);
  }
}

await init();
$("ridit-run").addEventListener("click", runRidit);
$("pe-run").addEventListener("click", runExpected);
$("kappa-run").addEventListener("click", runKappa);
runRidit();
runKappa();
