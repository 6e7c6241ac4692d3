/** The chained accessibility-refactor scenario: file states 0..4 plus scripted rounds. */

function replaceLines(text: string, lineNo: number, ...newLines: string[]): string {
  const lines = text.split("\n");
  lines.splice(lineNo - 1, newLines.length, ...newLines);
  return lines.join("\n");
}

function insertAfter(text: string, lineNo: number, newLine: string): string {
  const lines = text.split("\n");
  lines.splice(lineNo, 0, newLine);
  return lines.join("\n");
}

export const STATE_0 = [
  "import React from 'react';",
  "",
  "interface ButtonProps {",
  "  label: string;",
  "  onClick: () => void;",
  "}",
  "",
  "export function PrimaryButton({ label, onClick }: ButtonProps) {",
  '  return <button className="primary" onClick={onClick}>{label}</button>;',
  "}",
  "",
  "export function SecondaryButton({ label, onClick }: ButtonProps) {",
  '  return <button className="secondary" onClick={onClick}>{label}</button>;',
  "}",
  "",
  "export function UserProfile() {",
  "  return (",
  "    <div>",
  '      <PrimaryButton label="Save" onClick={save} />',
  '      <SecondaryButton label="Cancel" onClick={cancel} />',
  "    </div>",
  "  );",
  "}",
].join("\n");

export const STATE_1 = insertAfter(STATE_0, 5, "  ariaLabel: string;");

export const STATE_2 = replaceLines(
  STATE_1,
  9,
  "export function PrimaryButton({ label, onClick, ariaLabel }: ButtonProps) {",
  '  return <button className="primary" aria-label={ariaLabel} onClick={onClick}>{label}</button>;',
);

export const STATE_3 = replaceLines(
  STATE_2,
  13,
  "export function SecondaryButton({ label, onClick, ariaLabel }: ButtonProps) {",
  '  return <button className="secondary" aria-label={ariaLabel} onClick={onClick}>{label}</button>;',
);

export const STATE_4 = replaceLines(
  STATE_3,
  20,
  '      <PrimaryButton label="Save" ariaLabel="Save changes" onClick={save} />',
  '      <SecondaryButton label="Cancel" ariaLabel="Cancel edits" onClick={cancel} />',
);

export interface ScenarioRound {
  location: number;
  diff: string;
  resultText: string;
}

function twoLineDiff(pre: string, post: string, startLine: number): string {
  const preLines = pre.split("\n");
  const postLines = post.split("\n");
  const rows: string[] = [];
  for (let i = 0; i < 2; i += 1) {
    rows.push(`${startLine + i}-| ${preLines[startLine - 1 + i]}`);
  }
  for (let i = 0; i < 2; i += 1) {
    rows.push(`${startLine + i}+| ${postLines[startLine - 1 + i]}`);
  }
  return rows.join("\n");
}

export const ROUNDS: ScenarioRound[] = [
  { location: 9, diff: twoLineDiff(STATE_1, STATE_2, 9), resultText: STATE_2 },
  { location: 13, diff: twoLineDiff(STATE_2, STATE_3, 13), resultText: STATE_3 },
  { location: 20, diff: twoLineDiff(STATE_3, STATE_4, 20), resultText: STATE_4 },
];
