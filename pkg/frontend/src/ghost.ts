/** Ghost overlay models built from suggestion payloads and their numbered diffs. */

export interface DiffRow {
  line: number;
  marker: "-" | "+" | " ";
  content: string;
}

export type GhostOverlay =
  | { type: "jump"; line: number }
  | { type: "no-change" }
  | { type: "edit"; rows: DiffRow[]; windowStart: number };

/** Parse numbered-diff rows ("12-| old" / "12+| new" / "12 | ctx"); throws on malformed rows. */
export function parseNumberedDiff(text: string): DiffRow[] {
  if (text === "") return [];
  const rows: DiffRow[] = [];
  for (const [index, raw] of text.split("\n").entries()) {
    if (raw.trim() === "") continue;
    const match = /^(\d+)([-+ ])\| ?(.*)$/.exec(raw);
    if (!match) throw new Error(`malformed diff row ${index + 1}: ${JSON.stringify(raw)}`);
    rows.push({ line: Number(match[1]), marker: match[2] as DiffRow["marker"], content: match[3] ?? "" });
  }
  return rows;
}

/**
 * Overlay for an edit suggestion: strike rows for deletions, insert rows for
 * additions, a no-change badge for an empty diff. Returns null (and logs)
 * when the diff cannot be parsed, so a bad payload never breaks the editor.
 */
export function editOverlay(
  diff: string | null,
  windowStart: number | null,
  log: (msg: string) => void = console.error,
): GhostOverlay | null {
  if (diff === null || windowStart === null) return null;
  let rows: DiffRow[];
  try {
    rows = parseNumberedDiff(diff);
  } catch (err) {
    log(`suppressing ghost overlay: ${String(err)}`);
    return null;
  }
  if (rows.length === 0) return { type: "no-change" };
  return { type: "edit", rows, windowStart };
}

export function jumpOverlay(line: number): GhostOverlay {
  return { type: "jump", line };
}
