import { describe, expect, it } from "vitest";

import type { NextCasePayload } from "../src/api.js";
import {
  buildJudgmentPayload,
  caseViewFrom,
  isSubmitEnabled,
  validateSelections,
} from "../src/view.js";

function nextPayload(): NextCasePayload {
  return {
    done: false,
    case_id: "c7",
    instruction: "Summarize this abstract",
    input: "the abstract body",
    responses: [
      { label: "A", text: "first answer" },
      { label: "B", text: "second answer" },
      { label: "C", text: "third answer" },
      { label: "D", text: "fourth answer" },
    ],
    labels: ["A", "B", "C", "D"],
    rubric: "rank and grade",
    progress: { judged: 0, total: 3 },
  };
}

describe("submit gating", () => {
  it("stays disabled until every label has both a rank and a grade", () => {
    const view = caseViewFrom(nextPayload());
    expect(isSubmitEnabled(view)).toBe(false);

    for (const [i, label] of view.labels.entries()) {
      view.ranks[label] = i + 1;
    }
    expect(isSubmitEnabled(view)).toBe(false); // grades still missing

    view.grades.A = "Pass";
    view.grades.B = "Excellent";
    view.grades.C = "Fail";
    expect(isSubmitEnabled(view)).toBe(false); // D still ungraded

    view.grades.D = "Pass";
    expect(isSubmitEnabled(view)).toBe(true);

    delete view.ranks.B;
    expect(isSubmitEnabled(view)).toBe(false);
  });

  it("pre-validates tie structure before any network call would happen", () => {
    const view = caseViewFrom(nextPayload());
    Object.assign(view.ranks, { A: 1, B: 2, C: 2, D: 3 });
    Object.assign(view.grades, { A: "Pass", B: "Pass", C: "Pass", D: "Pass" });
    const invalid = validateSelections(view);
    expect(invalid.ok).toBe(false);
    expect(invalid.reason).toContain("tie");

    Object.assign(view.ranks, { A: 1, B: 1, C: 3, D: 4 });
    expect(validateSelections(view).ok).toBe(true);
  });
});

describe("judgment payload", () => {
  it("matches the POST /judgments schema exactly", () => {
    const view = caseViewFrom(nextPayload());
    Object.assign(view.ranks, { A: 1, B: 1, C: 3, D: 4 });
    Object.assign(view.grades, { A: "Excellent", B: "Pass", C: "Pass", D: "Fail" });
    const payload = buildJudgmentPayload(view, "evaluator-token-1");

    // schema: evaluator (string), case_id (string), ranks (label->int),
    // grades (label->Fail|Pass|Excellent); nothing else required
    expect(Object.keys(payload).sort()).toEqual(["case_id", "evaluator", "grades", "ranks"]);
    expect(typeof payload.evaluator).toBe("string");
    expect(payload.case_id).toBe("c7");
    expect(Object.keys(payload.ranks).sort()).toEqual(["A", "B", "C", "D"]);
    for (const value of Object.values(payload.ranks)) {
      expect(Number.isInteger(value)).toBe(true);
      expect(value).toBeGreaterThanOrEqual(1);
      expect(value).toBeLessThanOrEqual(4);
    }
    expect(Object.keys(payload.grades).sort()).toEqual(["A", "B", "C", "D"]);
    for (const value of Object.values(payload.grades)) {
      expect(["Fail", "Pass", "Excellent"]).toContain(value);
    }
    expect(JSON.parse(JSON.stringify(payload))).toEqual(payload);
  });

  it("carries no model identities anywhere in view state", () => {
    const view = caseViewFrom(nextPayload());
    const serialized = JSON.stringify(view);
    expect(serialized).not.toMatch(/model/i);
  });
});
