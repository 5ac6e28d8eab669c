import type { HistoryEntry, Selection } from "./types.js";

/** One analyst session: ingredient toggles, question draft, append-only history. */
export class SessionState {
  selection: Selection = { process: true, causal: true, xai: true };
  questionDraft = "";
  pending = false;
  private readonly entries: HistoryEntry[] = [];

  get history(): readonly HistoryEntry[] {
    return this.entries;
  }

  /** Sending requires at least one ingredient, a question, and no in-flight ask. */
  canSend(): boolean {
    const { process, causal, xai } = this.selection;
    return (process || causal || xai) && this.questionDraft.trim().length > 0 && !this.pending;
  }

  record(entry: HistoryEntry): void {
    this.entries.push(entry);
  }
}
