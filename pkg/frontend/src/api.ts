import type { AnswerSet, HistoryEntry, VerdictRecord } from "./types.js";

export class GatewayError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function expectOk(response: Response): Promise<Response> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new GatewayError(response.status, detail);
  }
  return response;
}

/** Thin client for the gateway JSON API; the UI talks to nothing else. */
export class GatewayClient {
  constructor(readonly baseUrl: string) {}

  async createSession(): Promise<string> {
    const response = await expectOk(
      await fetch(`${this.baseUrl}/sessions`, { method: "POST" }),
    );
    const body = await response.json();
    return body.session_id as string;
  }

  async history(sessionId: string): Promise<HistoryEntry[]> {
    const response = await expectOk(
      await fetch(`${this.baseUrl}/sessions/${sessionId}/history`),
    );
    const body = await response.json();
    return body.history as HistoryEntry[];
  }

  async query(sessionId: string, text: string): Promise<AnswerSet> {
    const response = await expectOk(
      await fetch(`${this.baseUrl}/sessions/${sessionId}/query`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ text }),
      }),
    );
    return (await response.json()) as AnswerSet;
  }

  async verdicts(): Promise<VerdictRecord[]> {
    const response = await expectOk(await fetch(`${this.baseUrl}/verdicts`));
    const text = await response.text();
    return text
      .split("\n")
      .filter((line) => line.trim().length > 0)
      .map((line) => JSON.parse(line) as VerdictRecord);
  }

  async health(): Promise<boolean> {
    try {
      const response = await fetch(`${this.baseUrl}/health`);
      return response.ok;
    } catch {
      return false;
    }
  }
}
