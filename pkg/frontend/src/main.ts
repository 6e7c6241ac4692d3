import { HttpServiceClient } from "./api.js";
import { SessionController } from "./controller.js";
import { bindView } from "./view.js";

const SAMPLE = [
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

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const serviceUrl = params.get("service") ?? "http://127.0.0.1:8080";

  const editor = document.getElementById("editor") as HTMLTextAreaElement;
  const overlay = document.getElementById("overlay")!;
  const statusBar = document.getElementById("status")!;
  const jumpMarker = document.getElementById("jump-marker")!;

  editor.value = SAMPLE;
  const controller = new SessionController(new HttpServiceClient(serviceUrl), SAMPLE);
  bindView(controller, { editor, overlay, statusBar, jumpMarker });
  void controller.start();
}

main();
