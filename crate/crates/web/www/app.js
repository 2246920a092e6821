// Glue generated by wasm-bindgen lands in ./pkg (see the README).
import init, { score_texts, lcs_alignment, freeze_plan } from "./pkg/safetune_web.js";

const $ = (id) => document.getElementById(id);

function fail(target, err) {
  target.innerHTML = "";
  const p = document.createElement("p");
  p.className = "err";
  p.textContent = String(err);
  target.append(p);
}

function cell(row, text, tag = "td") {
  const c = document.createElement(tag);
  c.textContent = text;
  row.append(c);
}

const fmt = (x) => (x === null || x === undefined ? "—" : x.toFixed(2));

function showScores() {
  const out = $("score-out");
  let s;
  try {
    s = JSON.parse(score_texts($("cand").value, $("ref").value));
  } catch (e) {
    return fail(out, e);
  }
  const table = document.createElement("table");
  const head = table.insertRow();
  ["Metric", "Precision", "Recall", "F1"].forEach((h) => cell(head, h, "th"));
  const prf = { "ROUGE-1": s.rouge1, "ROUGE-2": s.rouge2, "ROUGE-L": s.rouge_l, BERTScore: s.bert };
  for (const [name, t] of Object.entries(prf)) {
    const r = table.insertRow();
    cell(r, name);
    cell(r, fmt(t && t.precision));
    cell(r, fmt(t && t.recall));
    cell(r, fmt(t && t.f1));
  }
  const bleu = table.insertRow();
  cell(bleu, "BLEU");
  cell(bleu, "");
  cell(bleu, "");
  cell(bleu, fmt(s.bleu));
  const words = table.insertRow();
  cell(words, "Word count");
  cell(words, "");
  cell(words, "");
  cell(words, String(s.word_count));
  out.replaceChildren(table);
}

function tokens(list, hits) {
  const p = document.createElement("p");
  list.forEach((t, i) => {
    const span = document.createElement("span");
    span.className = hits.has(i) ? "tok hit" : "tok";
    span.textContent = t;
    p.append(span);
  });
  return p;
}

function showAlignment() {
  const a = JSON.parse(lcs_alignment($("cand").value, $("ref").value));
  const summary = document.createElement("p");
  summary.textContent = `LCS length ${a.pairs.length} (candidate ${a.candidate.length} tokens, reference ${a.reference.length})`;
  $("lcs-out").replaceChildren(
    summary,
    tokens(a.candidate, new Set(a.pairs.map((p) => p[0]))),
    tokens(a.reference, new Set(a.pairs.map((p) => p[1]))),
  );
}

function showPlan() {
  const out = $("plan-out");
  let v;
  try {
    v = JSON.parse(
      freeze_plan(Number($("blocks").value), Number($("last-n").value), $("head").checked, $("norm").checked),
    );
  } catch (e) {
    return fail(out, e);
  }
  const p = document.createElement("p");
  const params = (v.plan.trainable_param_count / 1e6).toFixed(1);
  p.textContent = `Trainable: ${v.plan.trainable.join(", ")} (${params}M parameters); ${v.plan.frozen.length} layers frozen.`;
  const pre = document.createElement("pre");
  pre.textContent = JSON.stringify(v.config, null, 2);
  out.replaceChildren(p, pre);
}

await init();
$("score-btn").addEventListener("click", showScores);
$("lcs-btn").addEventListener("click", showAlignment);
$("plan-btn").addEventListener("click", showPlan);
showScores();
