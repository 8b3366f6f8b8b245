/** Session-script export.
 *
 * The console records every verb the user fires; this module turns that
 * history into the same line-oriented script format the CLI replays, so a
 * clicked-through session can be reproduced outside the browser:
 *
 *     truth DC=faulty
 *     observe W=dry @ t1
 *     act REPLACE-DC @ t1
 */

export type HistoryEntry =
  | { verb: "observe" | "feedback"; var: string; state: string; time: string }
  | { verb: "act"; treatment: string; time: string };

export function exportScript(
  history: readonly HistoryEntry[],
  truth?: Record<string, string> | null,
): string {
  const lines: string[] = [];
  if (truth) {
    const parts = Object.keys(truth)
      .sort()
      .map((v) => `${v}=${truth[v]}`);
    if (parts.length) {
      lines.push(`truth ${parts.join(" ")}`);
    }
  }
  for (const entry of history) {
    if (entry.verb === "act") {
      lines.push(`act ${entry.treatment} @ ${entry.time}`);
    } else {
      lines.push(`${entry.verb} ${entry.var}=${entry.state} @ ${entry.time}`);
    }
  }
  return lines.join("\n") + "\n";
}

/** Parse "VAR=STATE" out of a form field; returns null on junk. */
export function splitAssignment(
  text: string,
): { var: string; state: string } | null {
  const trimmed = text.trim();
  const eq = trimmed.indexOf("=");
  if (eq <= 0 || eq === trimmed.length - 1) {
    return null;
  }
  return { var: trimmed.slice(0, eq), state: trimmed.slice(eq + 1) };
}
