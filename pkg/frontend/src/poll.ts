import type { GatewayClient } from "./api.js";
import type { VerdictRecord } from "./types.js";

export const POLL_INTERVAL_MS = 2000;

/** Polls the verdict feed independently of query state. */
export class VerdictPoller {
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly client: GatewayClient,
    private readonly onUpdate: (verdicts: VerdictRecord[]) => void,
    private readonly onError: (error: unknown) => void,
    private readonly intervalMs: number = POLL_INTERVAL_MS,
  ) {}

  start(): void {
    if (this.timer !== null) return;
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  async tick(): Promise<void> {
    try {
      this.onUpdate(await this.client.verdicts());
    } catch (error) {
      this.onError(error);
    }
  }
}
