import init, { kernelView, clickRates, mine, sampleTitles } from "./pkg/skurank_wasm.js";

const $ = (id) => document.getElementById(id);

function guard(errId, f) {
  $(errId).textContent = "";
  try {
    f();
  } catch (e) {
    $(errId).textContent = e.message ?? String(e);
  }
}

function shade(v) {
  // -1 blue, 0 white, 1 red
  const t = Math.max(-1, Math.min(1, v));
  const a = Math.round(255 * (1 - Math.abs(t)));
  return t >= 0 ? `rgb(255,${a},${a})` : `rgb(${a},${a},255)`;
}

function drawMatrix(view) {
  const c = $("kmatrix"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const left = 110, top = 60;
  const cell = Math.min(40, (c.width - left) / view.doc.length, (c.height - top) / view.query.length);
  g.font = "12px sans-serif";
  view.doc.forEach((t, j) => {
    g.save();
    g.translate(left + j * cell + cell / 2, top - 6);
    g.rotate(-Math.PI / 4);
    g.fillStyle = "#222";
    g.fillText(t, 0, 0);
    g.restore();
  });
  view.query.forEach((t, i) => {
    g.fillStyle = "#222";
    g.fillText(t, 4, top + i * cell + cell / 2 + 4);
    view.matrix[i].forEach((v, j) => {
      g.fillStyle = shade(v);
      g.fillRect(left + j * cell, top + i * cell, cell - 1, cell - 1);
      g.fillStyle = "#000";
      g.fillText(v.toFixed(2), left + j * cell + 4, top + i * cell + cell / 2 + 4);
    });
  });
}

function drawKernels(view) {
  const c = $("kbars"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const ks = view.kernels, w = c.width / ks.length, base = 150;
  const lo = Math.min(...ks.map((k) => k.phi), -1);
  const hi = Math.max(...ks.map((k) => k.phi), 1);
  const scale = 120 / Math.max(hi, -lo);
  g.font = "11px sans-serif";
  g.strokeStyle = "#999";
  g.beginPath();
  g.moveTo(0, base);
  g.lineTo(c.width, base);
  g.stroke();
  ks.forEach((k, i) => {
    const h = Math.max(k.phi, lo) * scale;
    g.fillStyle = k.mean === 1 ? "#c33" : "#47a";
    g.fillRect(i * w + 6, base - Math.max(h, 0), w - 12, Math.abs(h));
    g.fillStyle = "#222";
    g.fillText(`μ ${k.mean}`, i * w + 6, base + 16);
    g.fillText(k.phi.toFixed(2), i * w + 6, base + 30);
  });
}

function runKernel() {
  guard("kerr", () => {
    const view = JSON.parse(kernelView($("kq").value, $("kd").value));
    drawMatrix(view);
    drawKernels(view);
  });
}

function runClicks() {
  guard("cerr", () => {
    const rates = JSON.parse(
      clickRates(+$("ca").value, +$("cs").value, +$("cm").value, +$("cn").value, +$("cseed").value),
    );
    const c = $("cbars"), g = c.getContext("2d");
    g.clearRect(0, 0, c.width, c.height);
    const w = c.width / rates.length, base = 230, top = Math.max(...rates.map((r) => r.expected + 3 * r.std_error), 0.05);
    const y = (p) => base - (p / top) * 210;
    g.font = "12px sans-serif";
    rates.forEach((r, i) => {
      const x = i * w;
      g.fillStyle = "#9bd";
      g.fillRect(x + 10, y(r.observed), w - 20, base - y(r.observed));
      g.fillStyle = "rgba(200,60,60,0.25)";
      g.fillRect(x + 4, y(r.expected + 3 * r.std_error), w - 8, y(r.expected - 3 * r.std_error) - y(r.expected + 3 * r.std_error));
      g.fillStyle = "#c33";
      g.fillRect(x + 4, y(r.expected) - 1, w - 8, 2);
      g.fillStyle = "#222";
      g.fillText(`rank ${r.rank}`, x + 10, base + 16);
      g.fillText(r.observed.toFixed(3), x + 10, y(r.observed) - 4);
    });
  });
}

const exampleLog = [
  { ts: 0, user: "u", query: "lamp", impressions: [["a", 1], ["b", 2], ["c", 3], ["d", 4]], clicks: [] },
  { ts: 40, user: "u", query: "red lamp", impressions: [["e", 1], ["b", 2]], clicks: [1, 2] },
  { ts: 95, user: "u", query: "red lamp large", impressions: [["f", 1]], clicks: [1] },
];

function runMine() {
  guard("merr", () => {
    const triples = JSON.parse(mine($("mlog").value, +$("mrho").value));
    const rows = triples.map(
      (t) => `<tr><td>${t.query}</td><td>${t.rel}</td><td>${t.irrel}</td><td>${t.earlier} → ${t.later}</td><td>${t.click_rank}</td><td>${t.negative_rank}</td></tr>`,
    );
    $("mout").innerHTML =
      "<tr><th>query</th><th>clicked</th><th>skipped</th><th>requests</th><th>click rank</th><th>skipped rank</th></tr>" +
      (rows.join("") || "<tr><td colspan=6>no triples</td></tr>");
  });
}

async function main() {
  await init();
  $("status").textContent = "building the demo catalog and word vectors…";
  await new Promise((r) => setTimeout(r, 0));
  const titles = JSON.parse(sampleTitles(50));
  let next = 0;
  $("kd").value = "red table lamp with linen shade";
  $("kdoc").onclick = () => {
    $("kd").value = titles[next++ % titles.length];
    runKernel();
  };
  $("krun").onclick = runKernel;
  for (const id of ["ca", "cs", "cm"]) {
    const span = $(id).nextElementSibling;
    const show = () => (span.textContent = $(id).value);
    $(id).oninput = () => {
      show();
      runClicks();
    };
    show();
  }
  $("crun").onclick = runClicks;
  $("mlog").value = JSON.stringify(exampleLog, null, 1);
  $("mrun").onclick = runMine;
  runKernel();
  runClicks();
  runMine();
  $("status").textContent = "ready";
}

main();
