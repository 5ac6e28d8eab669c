export interface ProcessEdge {
  from: string;
  to: string;
  frequency: number;
}

export interface CausalRecord {
  cause: string;
  effect: string;
  coefficient: string;
}

/** activity -> feature -> importance, in backend order */
export type XaiView = Map<string, Map<string, number>>;

export interface Selection {
  process: boolean;
  causal: boolean;
  xai: boolean;
}

export interface HistoryEntry {
  selection: Selection;
  question: string;
  promptDigest: string;
  explanation: string;
}

export interface PromptResponse {
  prompt: string;
  digests: Record<string, string>;
}

export interface AskResponse {
  explanation: string;
  usage: Record<string, number>;
  latency_s: number;
}
