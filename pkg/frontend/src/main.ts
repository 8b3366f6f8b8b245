/** Console wiring: forms on the left, live payload renders on the right.
 *
 * All state lives server-side; the only things kept here are the session
 * id, the clicked-through history (for script export), and the declared
 * truth, if any.
 */

import { ApiError, DiagidClient } from "./api.js";
import {
  renderActRecord,
  renderDiagram,
  renderError,
  renderLog,
  renderRecommendation,
} from "./render.js";
import { exportScript, splitAssignment, type HistoryEntry } from "./script.js";

let client: DiagidClient | null = null;
let sessionId: string | null = null;
let history: HistoryEntry[] = [];
let truth: Record<string, string> | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function input(id: string): string {
  return el<HTMLInputElement>(id).value.trim();
}

function setStatus(text: string, isError = false): void {
  const box = el<HTMLElement>("status");
  box.textContent = text;
  box.className = isError ? "status error" : "status";
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `${err.status} ${err.tag}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

async function refresh(): Promise<void> {
  if (!client || !sessionId) {
    return;
  }
  try {
    const rec = await client.recommendation(sessionId);
    el("recommendation").innerHTML = renderRecommendation(rec);
  } catch (err) {
    el("recommendation").innerHTML = renderError(describe(err));
  }
  try {
    const diagram = await client.diagram(sessionId);
    el("diagram").innerHTML = renderDiagram(diagram);
  } catch {
    el("diagram").innerHTML = `<p class="empty">No model yet.</p>`;
  }
  try {
    const log = await client.log(sessionId);
    el("log").innerHTML = renderLog(log);
  } catch (err) {
    el("log").innerHTML = renderError(describe(err));
  }
}

async function connect(): Promise<void> {
  client = new DiagidClient(input("server-url"));
  try {
    const kb = await client.kbText();
    el<HTMLTextAreaElement>("kb-text").value = kb;
    const sessions = await client.listSessions();
    setStatus(
      sessions.length
        ? `connected; live sessions: ${sessions.join(", ")}`
        : "connected; no sessions yet",
    );
  } catch (err) {
    client = null;
    setStatus(describe(err), true);
  }
}

async function createSession(): Promise<void> {
  if (!client) {
    setStatus("connect first", true);
    return;
  }
  const truthText = input("truth");
  truth = null;
  if (truthText) {
    truth = {};
    for (const piece of truthText.split(/\s+/)) {
      const pair = splitAssignment(piece);
      if (!pair) {
        setStatus(`truth entry ${piece} is not var=state`, true);
        return;
      }
      truth[pair.var] = pair.state;
    }
  }
  try {
    sessionId = await client.createSession(truth ?? undefined);
    history = [];
    el("session-id").textContent = sessionId;
    setStatus(`session ${sessionId} created`);
    await refresh();
  } catch (err) {
    setStatus(describe(err), true);
  }
}

async function fire(verb: "observe" | "feedback"): Promise<void> {
  if (!client || !sessionId) {
    setStatus("create a session first", true);
    return;
  }
  const pair = splitAssignment(input("finding"));
  const time = input("finding-time");
  if (!pair || !time) {
    setStatus("finding needs var=state and a time", true);
    return;
  }
  try {
    const rec =
      verb === "observe"
        ? await client.observe(sessionId, pair.var, pair.state, time)
        : await client.feedback(sessionId, pair.var, pair.state, time);
    history.push({ verb, var: pair.var, state: pair.state, time });
    el("recommendation").innerHTML = renderRecommendation(rec);
    setStatus(`${verb} ${pair.var}=${pair.state} @ ${time}`);
    await refresh();
  } catch (err) {
    setStatus(describe(err), true);
  }
}

async function actNow(): Promise<void> {
  if (!client || !sessionId) {
    setStatus("create a session first", true);
    return;
  }
  const treatment = input("treatment");
  const time = input("act-time");
  if (!treatment || !time) {
    setStatus("act needs a treatment and a time", true);
    return;
  }
  try {
    const res = await client.act(sessionId, treatment, time);
    history.push({ verb: "act", treatment, time });
    el("act-record").innerHTML = renderActRecord(res.record);
    setStatus(`acted ${treatment} @ ${time}`);
    await refresh();
  } catch (err) {
    setStatus(describe(err), true);
  }
}

function exportHistory(): void {
  el<HTMLTextAreaElement>("script-out").value = exportScript(history, truth);
}

export function boot(): void {
  el("connect").addEventListener("click", () => void connect());
  el("create-session").addEventListener("click", () => void createSession());
  el("observe").addEventListener("click", () => void fire("observe"));
  el("feedback").addEventListener("click", () => void fire("feedback"));
  el("act").addEventListener("click", () => void actNow());
  el("refresh").addEventListener("click", () => void refresh());
  el("export-script").addEventListener("click", exportHistory);
}

if (typeof document !== "undefined" && document.getElementById("connect")) {
  boot();
}
