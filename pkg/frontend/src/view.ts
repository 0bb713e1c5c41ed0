/**
 * Case view state: selections, gating, and the exact submission payload.
 */

import type { Grade, JudgmentPayload, NextCasePayload, Progress } from "./api.js";
import { validateCompetitionRanks, type RankValidation } from "./ranking.js";

export const GRADES: Grade[] = ["Fail", "Pass", "Excellent"];

export interface CaseView {
  caseId: string;
  instruction: string;
  input: string;
  labels: string[];
  responses: { label: string; text: string }[];
  rubric: string;
  progress: Progress;
  ranks: Partial<Record<string, number>>;
  grades: Partial<Record<string, Grade>>;
}

export function caseViewFrom(payload: NextCasePayload): CaseView {
  return {
    caseId: payload.case_id,
    instruction: payload.instruction,
    input: payload.input,
    labels: payload.labels,
    responses: payload.responses,
    rubric: payload.rubric,
    progress: payload.progress,
    ranks: {},
    grades: {},
  };
}

/** Submit stays disabled until every label has both a rank and a grade. */
export function isSubmitEnabled(view: CaseView): boolean {
  return view.labels.every(
    (label) => view.ranks[label] !== undefined && view.grades[label] !== undefined,
  );
}

/**
 * Pre-submission tie-structure check with the same rule as the server;
 * callers must not send a request when this fails.
 */
export function validateSelections(view: CaseView): RankValidation {
  if (!isSubmitEnabled(view)) {
    return { ok: false, reason: "every response needs both a rank and a grade" };
  }
  return validateCompetitionRanks(view.ranks as Record<string, number>, view.labels);
}

/** Exact POST /sessions/{id}/judgments body. */
export function buildJudgmentPayload(view: CaseView, evaluator: string): JudgmentPayload {
  const ranks: Record<string, number> = {};
  const grades: Record<string, Grade> = {};
  for (const label of view.labels) {
    ranks[label] = view.ranks[label] as number;
    grades[label] = view.grades[label] as Grade;
  }
  return { evaluator, case_id: view.caseId, ranks, grades };
}
