export interface Tab {
  label: string;
  summary: string;
  answer: string;
  evidence_refs: string[];
  template_id: string;
}

export interface AnswerSet {
  tabs: Tab[];
}

export interface HistoryEntry extends AnswerSet {
  query: string;
}

export interface VerdictRecord {
  decision: string;
  rule_id: string | null;
  timestamp: string;
  src_ip: string;
  dst_ip: string;
  subject: string | null;
  object: string | null;
  action: string;
}

export type ChatTurn =
  | { role: "analyst"; text: string }
  | { role: "assistant"; tabs: Tab[]; selectedTab: number }
  | { role: "error"; text: string };

export interface TranscriptState {
  sessionId: string | null;
  turns: ChatTurn[];
  pending: boolean;
}
