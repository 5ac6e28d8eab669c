import type { AskResponse, PromptResponse, Selection } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin client over the documented backend endpoints; nothing is computed client-side. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async checked(response: Response): Promise<Response> {
    if (!response.ok) {
      let message = `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { message?: string };
        if (body.message) message = body.message;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new Error(message);
    }
    return response;
  }

  async health(): Promise<boolean> {
    const response = await this.fetchImpl(this.url("/health"));
    return response.ok;
  }

  /** Raw view artifact text (process is a text map, causal/xai are JSON). */
  async view(name: "process" | "causal" | "xai"): Promise<string> {
    const response = await this.checked(await this.fetchImpl(this.url(`/views/${name}`)));
    return response.text();
  }

  async prompt(selection: Selection, question: string): Promise<PromptResponse> {
    const response = await this.checked(
      await this.fetchImpl(this.url("/prompt"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ select: selection, question }),
      }),
    );
    return (await response.json()) as PromptResponse;
  }

  async ask(selection: Selection, question: string): Promise<AskResponse> {
    const response = await this.checked(
      await this.fetchImpl(this.url("/ask"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ select: selection, question }),
      }),
    );
    return (await response.json()) as AskResponse;
  }
}
