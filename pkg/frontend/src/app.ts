import { ApiClient } from "./api.js";
import { parseCausalView, parseProcessView, parseXaiView } from "./parse.js";
import { causalPanel, processPanel, xaiPanel } from "./panels.js";
import { SessionState } from "./state.js";

const DEFAULT_BACKEND = "http://127.0.0.1:8765";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

const state = new SessionState();

function client(): ApiClient {
  return new ApiClient(el<HTMLInputElement>("backend-url").value || DEFAULT_BACKEND);
}

async function loadPanel(
  name: "process" | "causal" | "xai",
  render: (text: string) => string,
): Promise<void> {
  const panel = el<HTMLElement>(`panel-${name}`);
  try {
    panel.innerHTML = render(await client().view(name));
  } catch (err) {
    panel.innerHTML = `<p class="banner error">${(err as Error).message}</p>`;
  }
}

async function refreshViews(): Promise<void> {
  await Promise.all([
    loadPanel("process", (t) => processPanel(parseProcessView(t))),
    loadPanel("causal", (t) => causalPanel(parseCausalView(t))),
    loadPanel("xai", (t) => xaiPanel(parseXaiView(t))),
  ]);
}

function syncControls(): void {
  state.selection = {
    process: el<HTMLInputElement>("sel-process").checked,
    causal: el<HTMLInputElement>("sel-causal").checked,
    xai: el<HTMLInputElement>("sel-xai").checked,
  };
  state.questionDraft = el<HTMLTextAreaElement>("question").value;
  el<HTMLButtonElement>("preview-btn").disabled = !state.canSend();
  el<HTMLButtonElement>("send-btn").disabled = !state.canSend();
}

async function preview(): Promise<void> {
  try {
    const response = await client().prompt(state.selection, state.questionDraft);
    el<HTMLElement>("prompt-preview").textContent = response.prompt;
  } catch (err) {
    el<HTMLElement>("prompt-preview").textContent = `error: ${(err as Error).message}`;
  }
}

async function send(): Promise<void> {
  state.pending = true;
  syncControls();
  el<HTMLButtonElement>("send-btn").disabled = true;
  try {
    // preview first so what the analyst reads is exactly what goes out
    const prompt = await client().prompt(state.selection, state.questionDraft);
    el<HTMLElement>("prompt-preview").textContent = prompt.prompt;
    const answer = await client().ask(state.selection, state.questionDraft);
    el<HTMLElement>("answer").textContent = answer.explanation;
    state.record({
      selection: { ...state.selection },
      question: state.questionDraft,
      promptDigest: JSON.stringify(prompt.digests),
      explanation: answer.explanation,
    });
    renderHistory();
  } catch (err) {
    el<HTMLElement>("answer").textContent = `error: ${(err as Error).message}`;
  } finally {
    state.pending = false;
    syncControls();
  }
}

function renderHistory(): void {
  const target = el<HTMLElement>("history");
  target.innerHTML = state.history
    .map(
      (entry, i) =>
        `<li><b>#${i + 1}</b> [${Object.entries(entry.selection)
          .filter(([, on]) => on)
          .map(([k]) => k)
          .join("+")}] ${entry.question} &rarr; ${entry.explanation.slice(0, 120)}…</li>`,
    )
    .join("");
}

export function boot(): void {
  for (const id of ["sel-process", "sel-causal", "sel-xai", "question"]) {
    el(id).addEventListener("input", syncControls);
  }
  el("refresh-btn").addEventListener("click", () => void refreshViews());
  el("preview-btn").addEventListener("click", () => void preview());
  el("send-btn").addEventListener("click", () => void send());
  syncControls();
  void refreshViews();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
