/**
 * Single-page evaluator flow: paste a session id and an evaluator token,
 * then judge one blinded case per screen (rank + grade for every labeled
 * response) until the session has nothing left for this evaluator.
 */

import { NetworkError, fetchNextCase, submitJudgment, type NextCasePayload } from "./api.js";
import {
  GRADES,
  buildJudgmentPayload,
  caseViewFrom,
  isSubmitEnabled,
  validateSelections,
  type CaseView,
} from "./view.js";

interface Settings {
  base: string;
  sessionId: string;
  evaluator: string;
}

const app = document.getElementById("app") as HTMLElement;

let settings: Settings | null = null;
let view: CaseView | null = null;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function clear(node: HTMLElement): void {
  while (node.firstChild) {
    node.removeChild(node.firstChild);
  }
}

function banner(message: string, retry?: () => void): HTMLElement {
  const box = el("div", { class: "banner error" });
  box.appendChild(el("span", {}, message));
  if (retry) {
    const button = el("button", { class: "retry" }, "Retry");
    button.addEventListener("click", retry);
    box.appendChild(button);
  }
  return box;
}

function renderStart(): void {
  clear(app);
  const form = el("form", { class: "start card" });
  form.appendChild(el("h1", {}, "Evaluation session"));

  const sessionInput = el("input", { placeholder: "session id", required: "true", id: "session" });
  const tokenInput = el("input", { placeholder: "evaluator token", required: "true", id: "token" });
  form.appendChild(el("label", {}, "Session"));
  form.appendChild(sessionInput);
  form.appendChild(el("label", {}, "Evaluator token"));
  form.appendChild(tokenInput);
  const go = el("button", { type: "submit" }, "Start judging");
  form.appendChild(go);

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const sessionId = sessionInput.value.trim();
    const evaluator = tokenInput.value.trim();
    if (!sessionId || !evaluator) {
      return;
    }
    settings = { base: "", sessionId, evaluator };
    void loadNext();
  });
  app.appendChild(form);
}

function renderDone(reason: string, judged: number, total: number): void {
  clear(app);
  const card = el("div", { class: "card done" });
  card.appendChild(el("h1", {}, "All done"));
  card.appendChild(el("p", {}, reason));
  card.appendChild(el("p", { class: "progress" }, `${judged}/${total} cases judged`));
  app.appendChild(card);
}

async function loadNext(): Promise<void> {
  if (!settings) {
    return;
  }
  clear(app);
  app.appendChild(el("p", { class: "loading" }, "Loading next case..."));
  try {
    const next = await fetchNextCase(settings.base, settings.sessionId, settings.evaluator);
    if (next.done) {
      renderDone(next.reason, next.progress.judged, next.progress.total);
      return;
    }
    view = caseViewFrom(next as NextCasePayload);
    renderCase();
  } catch (err) {
    clear(app);
    if (err instanceof NetworkError) {
      app.appendChild(banner("Cannot reach the server. Your progress is safe.", () => void loadNext()));
    } else {
      app.appendChild(banner(String(err instanceof Error ? err.message : err)));
    }
  }
}

function renderCase(): void {
  if (!view || !settings) {
    return;
  }
  const current = view;
  clear(app);

  const header = el("div", { class: "card header" });
  header.appendChild(
    el("p", { class: "progress" }, `Progress: ${current.progress.judged}/${current.progress.total}`),
  );
  header.appendChild(el("h1", {}, "Instruction"));
  header.appendChild(el("p", { class: "instruction" }, current.instruction));
  if (current.input) {
    header.appendChild(el("h2", {}, "Input"));
    header.appendChild(el("p", { class: "input-text" }, current.input));
  }
  const rubric = el("details", { class: "rubric" });
  rubric.appendChild(el("summary", {}, "Grading rubric"));
  rubric.appendChild(el("pre", {}, current.rubric));
  header.appendChild(rubric);
  app.appendChild(header);

  const k = current.labels.length;
  const validation = el("p", { class: "validation", id: "validation" });
  const submit = el("button", { class: "submit", id: "submit" }, "Submit judgment");

  const refresh = (): void => {
    submit.toggleAttribute("disabled", !isSubmitEnabled(current));
    if (isSubmitEnabled(current)) {
      const result = validateSelections(current);
      validation.textContent = result.ok ? "" : result.reason ?? "";
    } else {
      validation.textContent = "";
    }
  };

  for (const { label, text } of current.responses) {
    const panel = el("div", { class: "card response" });
    panel.appendChild(el("h2", {}, `Response ${label}`));
    panel.appendChild(el("p", { class: "response-text" }, text));

    const controls = el("div", { class: "controls" });

    const rankSelect = el("select", { "data-rank": label });
    rankSelect.appendChild(el("option", { value: "" }, "rank..."));
    for (let r = 1; r <= k; r += 1) {
      rankSelect.appendChild(el("option", { value: String(r) }, `${r}${r === 1 ? " (best)" : ""}`));
    }
    rankSelect.addEventListener("change", () => {
      if (rankSelect.value === "") {
        delete current.ranks[label];
      } else {
        current.ranks[label] = Number(rankSelect.value);
      }
      refresh();
    });
    controls.appendChild(el("label", {}, "Rank"));
    controls.appendChild(rankSelect);

    const gradeSelect = el("select", { "data-grade": label });
    gradeSelect.appendChild(el("option", { value: "" }, "grade..."));
    for (const grade of GRADES) {
      gradeSelect.appendChild(el("option", { value: grade }, grade));
    }
    gradeSelect.addEventListener("change", () => {
      if (gradeSelect.value === "") {
        delete current.grades[label];
      } else {
        current.grades[label] = gradeSelect.value as (typeof GRADES)[number];
      }
      refresh();
    });
    controls.appendChild(el("label", {}, "Grade"));
    controls.appendChild(gradeSelect);

    panel.appendChild(controls);
    app.appendChild(panel);
  }

  const footer = el("div", { class: "card footer" });
  footer.appendChild(validation);
  footer.appendChild(submit);
  app.appendChild(footer);

  submit.addEventListener("click", () => void onSubmit());
  refresh();
}

async function onSubmit(): Promise<void> {
  if (!view || !settings) {
    return;
  }
  const current = view;
  const validationNode = document.getElementById("validation");
  const check = validateSelections(current);
  if (!check.ok) {
    // invalid tie structure: explain inline, never hit the network
    if (validationNode) {
      validationNode.textContent = check.reason ?? "invalid selections";
    }
    return;
  }
  const payload = buildJudgmentPayload(current, settings.evaluator);
  try {
    const result = await submitJudgment(settings.base, settings.sessionId, payload);
    if (!result.ok) {
      // server rejection: show its message, keep all selections
      if (validationNode) {
        validationNode.textContent = result.error ?? "the server rejected the judgment";
      }
      return;
    }
    view = null;
    await loadNext();
  } catch (err) {
    if (validationNode && err instanceof NetworkError) {
      validationNode.textContent = "Cannot reach the server; selections kept. Try again.";
    }
  }
}

renderStart();
