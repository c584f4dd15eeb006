import type { TranscriptState, VerdictRecord } from "./types.js";

export interface AppElements {
  banner: HTMLDivElement;
  transcript: HTMLDivElement;
  input: HTMLInputElement;
  send: HTMLButtonElement;
  verdictPanel: HTMLDivElement;
}

/** Build the static page skeleton inside the root element. */
export function buildSkeleton(root: HTMLElement): AppElements {
  root.innerHTML = `
    <div class="banner" id="banner" hidden></div>
    <main class="layout">
      <section class="chat">
        <div class="transcript" id="transcript"></div>
        <form class="composer" id="composer">
          <input id="query-input" type="text" autocomplete="off"
                 placeholder="ask about the incident" />
          <button id="send" type="submit" disabled>send</button>
        </form>
      </section>
      <aside class="verdicts">
        <h2>deny verdicts</h2>
        <div id="verdict-panel"></div>
      </aside>
    </main>`;
  return {
    banner: root.querySelector("#banner") as HTMLDivElement,
    transcript: root.querySelector("#transcript") as HTMLDivElement,
    input: root.querySelector("#query-input") as HTMLInputElement,
    send: root.querySelector("#send") as HTMLButtonElement,
    verdictPanel: root.querySelector("#verdict-panel") as HTMLDivElement,
  };
}

export function setBanner(banner: HTMLElement, message: string | null,
                          retry?: () => void): void {
  banner.innerHTML = "";
  if (message === null) {
    banner.hidden = true;
    return;
  }
  banner.hidden = false;
  const text = document.createElement("span");
  text.textContent = message;
  banner.appendChild(text);
  if (retry) {
    const button = document.createElement("button");
    button.textContent = "retry";
    button.className = "retry";
    button.addEventListener("click", retry);
    banner.appendChild(button);
  }
}

/** Transcript rendering is a pure function of the state: clear and rebuild. */
export function renderTranscript(
  container: HTMLElement,
  state: TranscriptState,
  onSelectTab: (turnIndex: number, tabIndex: number) => void,
): void {
  container.innerHTML = "";
  state.turns.forEach((turn, turnIndex) => {
    const el = document.createElement("div");
    el.className = `turn ${turn.role}`;
    if (turn.role === "analyst") {
      el.textContent = turn.text;
    } else if (turn.role === "error") {
      el.textContent = `error: ${turn.text}`;
    } else {
      const tabBar = document.createElement("div");
      tabBar.className = "tab-bar";
      turn.tabs.forEach((tab, tabIndex) => {
        const button = document.createElement("button");
        button.type = "button";
        button.className = "tab-button" +
          (tabIndex === turn.selectedTab ? " active" : "");
        button.textContent = tab.label;
        button.addEventListener("click", () => onSelectTab(turnIndex, tabIndex));
        tabBar.appendChild(button);
      });
      el.appendChild(tabBar);
      const selected = turn.tabs[turn.selectedTab];
      if (selected) {
        const pane = document.createElement("div");
        pane.className = "tab-pane";
        const summary = document.createElement("p");
        summary.className = "summary";
        summary.textContent = selected.summary;
        pane.appendChild(summary);

        const details = document.createElement("details");
        const label = document.createElement("summary");
        label.textContent = "full answer";
        details.appendChild(label);
        const answer = document.createElement("pre");
        answer.className = "answer";
        answer.textContent = selected.answer;
        details.appendChild(answer);
        if (selected.evidence_refs.length) {
          const refs = document.createElement("p");
          refs.className = "evidence";
          refs.textContent = `evidence: ${selected.evidence_refs.join(", ")}`;
          details.appendChild(refs);
        }
        pane.appendChild(details);
        el.appendChild(pane);
      }
    }
    container.appendChild(el);
  });
  container.scrollTop = container.scrollHeight;
}

export function renderVerdicts(
  container: HTMLElement,
  verdicts: VerdictRecord[],
  onPick: (verdict: VerdictRecord) => void,
): void {
  container.innerHTML = "";
  if (verdicts.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty";
    empty.textContent = "no deny verdicts observed";
    container.appendChild(empty);
    return;
  }
  const list = document.createElement("ul");
  list.className = "verdict-list";
  for (const verdict of verdicts) {
    const item = document.createElement("li");
    item.className = "verdict";
    item.textContent =
      `${verdict.timestamp} ${verdict.subject ?? verdict.src_ip} -> ` +
      `${verdict.object ?? verdict.dst_ip} ${verdict.action} ` +
      `(rule ${verdict.rule_id ?? "?"})`;
    item.addEventListener("click", () => onPick(verdict));
    list.appendChild(item);
  }
  container.appendChild(list);
}
