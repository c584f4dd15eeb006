import { GatewayClient, GatewayError } from "./api.js";
import { VerdictPoller } from "./poll.js";
import {
  buildSkeleton,
  renderTranscript,
  renderVerdicts,
  setBanner,
  type AppElements,
} from "./render.js";
import {
  beginQuery,
  completeQuery,
  denyVerdictsNewestFirst,
  failQuery,
  fromHistory,
  initialState,
  prefillForVerdict,
  selectTab,
} from "./state.js";
import type { TranscriptState } from "./types.js";

const SESSION_KEY = "palisade.session";

export interface App {
  elements: AppElements;
  client: GatewayClient;
  poller: VerdictPoller;
  state: () => TranscriptState;
  sendQuery: (text: string) => Promise<void>;
  dispose: () => void;
}

/** Wire the chat client into a root element against one gateway. */
export async function bootstrap(root: HTMLElement, baseUrl: string): Promise<App> {
  const client = new GatewayClient(baseUrl);
  const elements = buildSkeleton(root);
  let state = initialState();

  const rerender = () => {
    renderTranscript(elements.transcript, state, (turnIndex, tabIndex) => {
      state = selectTab(state, turnIndex, tabIndex);
      rerender();
    });
    elements.send.disabled = state.pending || !elements.input.value.trim();
    elements.input.disabled = state.pending;
  };

  const startSession = async (): Promise<void> => {
    const stored = window.localStorage.getItem(SESSION_KEY);
    if (stored) {
      try {
        state = fromHistory(stored, await client.history(stored));
        setBanner(elements.banner, null);
        rerender();
        return;
      } catch (error) {
        if (!(error instanceof GatewayError && error.status === 404)) throw error;
        window.localStorage.removeItem(SESSION_KEY); // stale session id
      }
    }
    const sessionId = await client.createSession();
    window.localStorage.setItem(SESSION_KEY, sessionId);
    state = initialState(sessionId);
    setBanner(elements.banner, null);
    rerender();
  };

  const connect = async (): Promise<void> => {
    try {
      await startSession();
    } catch {
      // not blocking: the retry affordance re-attempts the connection
      setBanner(elements.banner, "gateway unreachable", () => void connect());
      rerender();
    }
  };

  const sendQuery = async (text: string): Promise<void> => {
    const sessionId = state.sessionId;
    if (sessionId === null || state.pending || !text.trim()) return;
    state = beginQuery(state, text);
    elements.input.value = "";
    rerender();
    try {
      const answer = await client.query(sessionId, text);
      state = completeQuery(state, answer.tabs);
    } catch (error) {
      const message = error instanceof Error ? error.message : String(error);
      state = failQuery(state, message);
    }
    rerender();
  };

  elements.input.addEventListener("input", () => {
    elements.send.disabled = state.pending || !elements.input.value.trim();
  });
  const composer = root.querySelector("#composer") as HTMLFormElement;
  composer.addEventListener("submit", (event) => {
    event.preventDefault();
    void sendQuery(elements.input.value);
  });

  const poller = new VerdictPoller(
    client,
    (verdicts) => {
      setBanner(elements.banner, null);
      renderVerdicts(elements.verdictPanel, denyVerdictsNewestFirst(verdicts),
        (verdict) => {
          elements.input.value = prefillForVerdict(verdict);
          elements.input.dispatchEvent(new Event("input"));
          elements.input.focus();
        });
    },
    () => setBanner(elements.banner, "verdict feed stale (poll failed)"),
  );

  await connect();
  poller.start();

  return {
    elements,
    client,
    poller,
    state: () => state,
    sendQuery,
    dispose: () => poller.stop(),
  };
}

declare global {
  interface Window {
    PALISADE_GATEWAY?: string;
  }
}

if (typeof document !== "undefined") {
  const mount = document.getElementById("app");
  if (mount) {
    const base = window.PALISADE_GATEWAY ?? "http://127.0.0.1:8642";
    void bootstrap(mount, base);
  }
}
