"""
Completion layer for the two permitted assistant tasks, question
answering and summarization. Prompts are built only from whitelisted
templates; the default backend is a deterministic stub that renders the
evidence it was handed, so the whole pipeline is testable offline. A
remote HTTP backend can substitute behind the same contract.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import httpx

from .retrieval import BackendUnavailable, Chunk, EmptyIndex

TASK_QA = "question-answering"
TASK_SUMMARIZATION = "summarization"
PERMITTED_TASKS = (TASK_QA, TASK_SUMMARIZATION)

STRATEGY_ZERO_SHOT = "zero-shot"
STRATEGY_MULTI_SHOT = "multi-shot"
STRATEGY_CHAIN_OF_THOUGHT = "chain-of-thought"
STRATEGIES = (STRATEGY_ZERO_SHOT, STRATEGY_MULTI_SHOT, STRATEGY_CHAIN_OF_THOUGHT)

_EVIDENCE_ITEM_HEADER = "### evidence item "
_REASONING_DIRECTIVE = "reason over each evidence item step by step before stating findings."
_FINDING_MARKERS = ("deny", "denied", "compromised")
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s")


class TaskNotPermitted(PermissionError):
    """A task outside the permitted pair was requested."""


class NotWhitelisted(PermissionError):
    """A prompt template outside the whitelist was requested."""


class UnresolvedSlot(ValueError):
    """A template slot could not be filled from the given inputs."""


class CompletionTimeout(TimeoutError):
    """The remote completion backend exceeded its deadline."""


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    strategy: str
    task: str
    body: str
    whitelisted: bool = True


@dataclass
class Answer:
    """A per-template answer with the evidence that grounded it."""

    answer_id: str
    template_id: str
    text: str
    summary: str = ""
    evidence_refs: list[str] = field(default_factory=list)


class TemplateRegistry:
    """Registered templates are immutable; only whitelisted ones may run."""

    def __init__(self) -> None:
        self._templates: dict[str, PromptTemplate] = {}
        self._exemplars: dict[str, list[str]] = {}

    def register(self, template: PromptTemplate,
                 exemplars: list[str] | None = None) -> None:
        if template.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {template.strategy!r}")
        if template.task not in PERMITTED_TASKS:
            raise ValueError(f"unknown task {template.task!r}")
        if template.template_id in self._templates:
            raise ValueError(f"template {template.template_id!r} already registered")
        self._templates[template.template_id] = template
        self._exemplars[template.template_id] = list(exemplars or [])

    def get(self, template_id: str) -> PromptTemplate:
        return self._templates[template_id]

    def exemplars(self, template_id: str) -> list[str]:
        return list(self._exemplars.get(template_id, []))

    def check_whitelist(self, template_id: str) -> str:
        """`accept` only for a registered template carrying the whitelist flag."""
        template = self._templates.get(template_id)
        if template is not None and template.whitelisted:
            return "accept"
        return "reject"

    def question_templates(self) -> list[PromptTemplate]:
        return [t for t in self._templates.values()
                if t.task == TASK_QA and t.whitelisted]

    def summarization_template(self) -> PromptTemplate:
        for template in self._templates.values():
            if template.task == TASK_SUMMARIZATION and template.whitelisted:
                return template
        raise KeyError("no summarization template registered")

    def all_templates(self) -> list[PromptTemplate]:
        return list(self._templates.values())


QA_BODY = """answer the analyst question using only the evidence below.

question: {query}

evidence:
{evidence}
"""

SUMMARY_BODY = """condense the findings below into a short summary for the analyst.

findings:
{query}

supporting evidence:
{evidence}
"""


def default_registry() -> TemplateRegistry:
    registry = TemplateRegistry()
    registry.register(PromptTemplate("qa-zero-shot", STRATEGY_ZERO_SHOT,
                                     TASK_QA, QA_BODY))
    registry.register(PromptTemplate("qa-chain-of-thought", STRATEGY_CHAIN_OF_THOUGHT,
                                     TASK_QA, QA_BODY))
    registry.register(PromptTemplate("summarize-findings", STRATEGY_ZERO_SHOT,
                                     TASK_SUMMARIZATION, SUMMARY_BODY))
    return registry


def _render_evidence(chunks: list[Chunk]) -> str:
    blocks = []
    for chunk in chunks:
        refs = ",".join(chunk.source_refs)
        blocks.append(f"{_EVIDENCE_ITEM_HEADER}{chunk.chunk_id} (refs: {refs})\n{chunk.text}")
    return "\n".join(blocks)


def instantiate_template(template: PromptTemplate, query: str,
                         chunks: list[Chunk],
                         registry: TemplateRegistry) -> str:
    """Fill the template slots with the query and evidence chunks."""
    if registry.check_whitelist(template.template_id) != "accept":
        raise NotWhitelisted(template.template_id)
    if template.task == TASK_QA and not chunks:
        raise ValueError("question-answering needs at least one evidence chunk")

    values = {"query": query, "evidence": _render_evidence(chunks)}
    if template.strategy == STRATEGY_MULTI_SHOT:
        exemplars = registry.exemplars(template.template_id)
        if not exemplars:
            raise UnresolvedSlot(
                f"multi-shot template {template.template_id!r} has no exemplars")
        values["examples"] = "\n\n".join(f"example:\n{e}" for e in exemplars)

    body = template.body
    if template.strategy == STRATEGY_MULTI_SHOT and "{examples}" not in body:
        body = "{examples}\n\n" + body

    needed = set(re.findall(r"\{(query|evidence|examples)\}", body))
    missing = needed - set(values)
    if missing:
        raise UnresolvedSlot(f"no value for slot(s) {sorted(missing)}")
    prompt = re.sub(r"\{(query|evidence|examples)\}",
                    lambda m: values[m.group(1)], body)
    if template.strategy == STRATEGY_CHAIN_OF_THOUGHT:
        prompt = prompt.rstrip("\n") + "\n\n" + _REASONING_DIRECTIVE + "\n"
    return prompt


# -- adapters --------------------------------------------------------------

def _flatten_item(text: str) -> str:
    return " ; ".join(line for line in text.splitlines() if line.strip())


def _first_sentence(text: str) -> str:
    return _SENTENCE_SPLIT.split(text.strip(), maxsplit=1)[0]


class StubLlm:
    """Offline backend: a deterministic structured rendering of the evidence.

    Question answering emits one `finding:` line per evidence item that
    carries a verdict or compromise marker and a `context:` line for every
    other item. Summarization takes the first sentence of each finding.
    """

    def __init__(self) -> None:
        self.observed_tasks: list[str] = []

    @property
    def invocations(self) -> int:
        return len(self.observed_tasks)

    def complete(self, prompt: str, task: str) -> str:
        self.observed_tasks.append(task)
        if task == TASK_QA:
            return self._answer(prompt)
        return self._summarize(prompt)

    def _evidence_items(self, prompt: str) -> list[str]:
        parts = prompt.split(_EVIDENCE_ITEM_HEADER)[1:]
        items = []
        for part in parts:
            body = part.split("\n", 1)[1] if "\n" in part else ""
            items.append(body)
        return items

    def _answer(self, prompt: str) -> str:
        findings, context = [], []
        for item in self._evidence_items(prompt):
            flat = _flatten_item(item)
            if any(marker in flat.lower() for marker in _FINDING_MARKERS):
                findings.append(f"finding: {flat}")
            else:
                context.append(f"context: {flat}")
        lines = findings + context
        if not lines:
            return "no relevant findings in retrieved evidence."
        return "\n".join(lines)

    def _summarize(self, prompt: str) -> str:
        findings = [line[len("finding: "):] for line in prompt.splitlines()
                    if line.startswith("finding: ")]
        if findings:
            return " ".join(_first_sentence(f) for f in findings)
        context = [line[len("context: "):] for line in prompt.splitlines()
                   if line.startswith("context: ")]
        if context:
            return " ".join(_first_sentence(c) for c in context)
        return "no findings to summarize."


class RemoteLlm:
    """HTTP completion backend: POST {prompt, task, max_tokens} -> {text}."""

    def __init__(self, url: str, timeout: float = 30.0, max_tokens: int = 1024):
        self.url = url
        self.timeout = timeout
        self.max_tokens = max_tokens
        self.observed_tasks: list[str] = []

    @property
    def invocations(self) -> int:
        return len(self.observed_tasks)

    def complete(self, prompt: str, task: str) -> str:
        self.observed_tasks.append(task)
        try:
            response = httpx.post(
                self.url,
                json={"prompt": prompt, "task": task, "max_tokens": self.max_tokens},
                timeout=self.timeout,
            )
            response.raise_for_status()
            return str(response.json()["text"])
        except httpx.TimeoutException as exc:
            raise CompletionTimeout(f"completion backend {self.url}: {exc}") from exc
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise BackendUnavailable(f"completion backend {self.url}: {exc}") from exc


def llm_complete(adapter, prompt: str, task: str) -> str:
    """Dispatch to the adapter after enforcing the task restriction."""
    if task not in PERMITTED_TASKS:
        raise TaskNotPermitted(f"task {task!r}; permitted: {PERMITTED_TASKS}")
    return adapter.complete(prompt, task)


def summarize(answer: Answer, retrieval, registry: TemplateRegistry,
              adapter, k: int = 5) -> str:
    """Produce and store the summary for an answer by re-retrieving
    supporting chunks for its text and running the summarization template."""
    if not answer.text:
        raise ValueError("cannot summarize an empty answer")
    try:
        supporting = [chunk for chunk, score in retrieval.search(answer.text, k)
                      if score > 0.0]
    except EmptyIndex:
        supporting = []
    template = registry.summarization_template()
    prompt = instantiate_template(template, answer.text, supporting, registry)
    answer.summary = llm_complete(adapter, prompt, TASK_SUMMARIZATION)
    return answer.summary
