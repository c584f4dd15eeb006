import type { ChatTurn, HistoryEntry, Tab, TranscriptState, VerdictRecord } from "./types.js";

export const RULE_QUERY_TEXT = "Describe the rule that prohibits the connection.";

export function prefillForVerdict(verdict: VerdictRecord): string {
  return verdict.rule_id
    ? `${RULE_QUERY_TEXT} [rule ${verdict.rule_id}]`
    : RULE_QUERY_TEXT;
}

export function initialState(sessionId: string | null = null): TranscriptState {
  return { sessionId, turns: [], pending: false };
}

/** Rebuild the transcript from the gateway's session history payload. */
export function fromHistory(sessionId: string, history: HistoryEntry[]): TranscriptState {
  const turns: ChatTurn[] = [];
  for (const entry of history) {
    turns.push({ role: "analyst", text: entry.query });
    turns.push({ role: "assistant", tabs: entry.tabs, selectedTab: 0 });
  }
  return { sessionId, turns, pending: false };
}

export function beginQuery(state: TranscriptState, text: string): TranscriptState {
  if (state.pending) throw new Error("a query is already in flight");
  if (!text.trim()) throw new Error("query text is empty");
  return {
    ...state,
    turns: [...state.turns, { role: "analyst", text }],
    pending: true,
  };
}

export function completeQuery(state: TranscriptState, tabs: Tab[]): TranscriptState {
  if (tabs.length < 1) {
    return failQuery(state, "gateway returned an answer without tabs");
  }
  return {
    ...state,
    turns: [...state.turns, { role: "assistant", tabs, selectedTab: 0 }],
    pending: false,
  };
}

export function failQuery(state: TranscriptState, message: string): TranscriptState {
  return {
    ...state,
    turns: [...state.turns, { role: "error", text: message }],
    pending: false,
  };
}

export function selectTab(
  state: TranscriptState,
  turnIndex: number,
  tabIndex: number,
): TranscriptState {
  const turns = state.turns.map((turn, i) => {
    if (i !== turnIndex || turn.role !== "assistant") return turn;
    if (tabIndex < 0 || tabIndex >= turn.tabs.length) return turn;
    return { ...turn, selectedTab: tabIndex };
  });
  return { ...state, turns };
}

/** Deny verdicts only, newest first (stable for equal timestamps). */
export function denyVerdictsNewestFirst(verdicts: VerdictRecord[]): VerdictRecord[] {
  return verdicts
    .map((verdict, index) => ({ verdict, index }))
    .filter(({ verdict }) => verdict.decision === "deny")
    .sort((a, b) => {
      if (a.verdict.timestamp === b.verdict.timestamp) return b.index - a.index;
      return a.verdict.timestamp < b.verdict.timestamp ? 1 : -1;
    })
    .map(({ verdict }) => verdict);
}
