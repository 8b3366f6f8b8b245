/** HTML renderers for API payloads.
 *
 * Pure string builders: every number, verdict, and name shown in the
 * console comes straight from the server response. Nothing is recomputed
 * client-side.
 */

import type {
  ActRecordPayload,
  DecisionPayload,
  DiagramPayload,
  LogPayload,
  RecommendationPayload,
  SensitivityPayload,
  TracePayload,
} from "./api.js";

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function fmt(value: number | null | undefined): string {
  if (value === null || value === undefined) {
    return "n/a";
  }
  return Number.isInteger(value) ? String(value) : value.toFixed(4);
}

export function renderDecision(decision: DecisionPayload | null): string {
  if (!decision) {
    return `<p class="empty">No decision yet; the model is not ready.</p>`;
  }
  const rows = Object.entries(decision.per_treatment)
    .map(([t, v]) => {
      const mark = t === decision.best_treatment ? " class=\"best\"" : "";
      return `<tr${mark}><td>${esc(t)}</td><td>${fmt(v)}</td></tr>`;
    })
    .join("");
  const runner = decision.runner_up
    ? `<p>Runner-up from another class: <b>${esc(decision.runner_up)}</b>` +
      ` at ${fmt(decision.runner_up_value)}</p>`
    : decision.single_class
      ? `<p>All alternatives fall in one equivalence class.</p>`
      : "";
  const marginals = Object.entries(decision.hypothesis_marginals)
    .map(([v, dist]) => {
      const cells = Object.entries(dist)
        .map(([s, p]) => `${esc(s)}: ${fmt(p)}`)
        .join(", ");
      return `<li><b>${esc(v)}</b> → ${cells}</li>`;
    })
    .join("");
  return (
    `<h3>Best treatment: ${esc(decision.best_treatment)}` +
    ` (${fmt(decision.best_value)})</h3>` +
    `<table><thead><tr><th>treatment</th><th>expected utility</th></tr>` +
    `</thead><tbody>${rows}</tbody></table>` +
    runner +
    `<ul class="marginals">${marginals}</ul>`
  );
}

export function renderSensitivity(s: SensitivityPayload | null): string {
  if (!s) {
    return `<p class="empty">No sensitivity report.</p>`;
  }
  const rows = s.challengers
    .map((c) => {
      const flag = c.exceeds_beta ? " class=\"exceeds\"" : "";
      const detail = c.error
        ? `probe failed: ${esc(c.error)}`
        : c.missing_nodes.length
          ? `needs ${c.missing_nodes.map(esc).join(", ")}`
          : "";
      return (
        `<tr${flag}><td>${esc(c.treatment)}</td><td>${esc(c.time)}</td>` +
        `<td>${fmt(c.value)}</td><td>${detail}</td></tr>`
      );
    })
    .join("");
  return (
    `<p><span class="verdict verdict-${esc(s.verdict)}">${esc(s.verdict)}` +
    `</span> incumbent <b>${esc(s.incumbent)}</b>,` +
    ` β = ${fmt(s.beta)}, margin ${fmt(s.margin)}</p>` +
    `<table><thead><tr><th>challenger</th><th>time</th><th>value</th>` +
    `<th></th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderTrace(trace: TracePayload | null): string {
  if (!trace) {
    return `<p class="empty">No construction trace.</p>`;
  }
  const included = Object.entries(trace.included)
    .map(([v, why]) => `<li><b>${esc(v)}</b> (${esc(why)})</li>`)
    .join("");
  const variants = trace.variants
    .map((v) => `<li>${esc(v.var)} uses variant ${esc(v.tag)} (${esc(v.reason)})</li>`)
    .join("");
  const firings = trace.firings
    .map((f) => `<li>rule ${esc(f.rule)} at position ${f.position}</li>`)
    .join("");
  const evidence = Object.entries(trace.evidence)
    .map(([v, s]) => `${esc(v)}=${esc(s)}`)
    .join(", ");
  return (
    `<p>Built at ${esc(trace.time)}; evidence: ${evidence || "none"}</p>` +
    `<ul>${included}</ul>` +
    (variants ? `<ul class="variants">${variants}</ul>` : "") +
    (firings ? `<ul class="firings">${firings}</ul>` : "") +
    `<p>Treatments on the menu: ${trace.alternatives.map(esc).join(", ")}</p>`
  );
}

export function renderRecommendation(rec: RecommendationPayload): string {
  return (
    `<section>${renderDecision(rec.decision)}</section>` +
    `<section>${renderSensitivity(rec.sensitivity)}</section>` +
    `<section>${renderTrace(rec.trace)}</section>`
  );
}

export function renderActRecord(record: ActRecordPayload): string {
  const realized =
    record.realized === null ? "" : `, realized ${fmt(record.realized)}`;
  const waiting = record.awaiting_outcome
    ? "; test ordered, session waits for feedback"
    : "";
  return (
    `<p class="act">Acted <b>${esc(record.treatment)}</b> at` +
    ` ${esc(record.time)}: expected ${fmt(record.expected)}${realized}` +
    `${waiting}</p>`
  );
}

export function renderDiagram(d: DiagramPayload): string {
  const rows = d.chance
    .map((n) => {
      const variant = n.variant ? esc(n.variant) : "";
      return (
        `<tr><td>${esc(n.name)}</td><td>${esc(n.role)}</td>` +
        `<td>${n.states.map(esc).join(", ")}</td>` +
        `<td>${n.parents.map(esc).join(", ")}</td>` +
        `<td>${esc(n.time)}</td><td>${variant}</td></tr>`
      );
    })
    .join("");
  const decisions = d.decisions
    .map((n) => `${esc(n.name)}: ${n.alternatives.map(esc).join(" | ")}`)
    .join("; ");
  return (
    `<table><thead><tr><th>node</th><th>role</th><th>states</th>` +
    `<th>parents</th><th>time</th><th>variant</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>` +
    `<p>Decisions: ${decisions || "none"}</p>` +
    `<details><summary>Graphviz source</summary>` +
    `<pre>${esc(d.dot)}</pre></details>`
  );
}

export function renderLog(log: LogPayload): string {
  const events = log.events
    .map((e) => {
      const detail = Object.entries(e.payload)
        .map(([k, v]) => `${esc(k)}=${esc(String(v))}`)
        .join(" ");
      return `<li>${esc(e.kind)} @ ${esc(e.time)} ${detail}</li>`;
    })
    .join("");
  return `<ol class="log">${events}</ol>`;
}

export function renderError(message: string): string {
  return `<p class="error">${esc(message)}</p>`;
}
