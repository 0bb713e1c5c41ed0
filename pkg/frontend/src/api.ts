/**
 * Thin client for the evaluation harness REST API.
 *
 * Deliberately knows nothing about /unblind: the UI must never request or
 * render model identities while a session is open.
 */

export type Grade = "Fail" | "Pass" | "Excellent";

export interface LabeledResponse {
  label: string;
  text: string;
}

export interface Progress {
  judged: number;
  total: number;
}

export interface NextCasePayload {
  done: false;
  case_id: string;
  instruction: string;
  input: string;
  responses: LabeledResponse[];
  labels: string[];
  rubric: string;
  progress: Progress;
}

export interface DonePayload {
  done: true;
  reason: string;
  progress: Progress;
}

export type NextResult = NextCasePayload | DonePayload;

export interface JudgmentPayload {
  evaluator: string;
  case_id: string;
  ranks: Record<string, number>;
  grades: Record<string, Grade>;
}

export interface SubmitResult {
  ok: boolean;
  error?: string;
  progress?: Progress;
}

/** Network-level failure (server unreachable, timeout); safe to retry. */
export class NetworkError extends Error {}

async function parseJson(response: Response): Promise<any> {
  try {
    return await response.json();
  } catch {
    return {};
  }
}

export async function fetchNextCase(
  base: string,
  sessionId: string,
  evaluator: string,
): Promise<NextResult> {
  let response: Response;
  try {
    response = await fetch(
      `${base}/sessions/${encodeURIComponent(sessionId)}/cases/next?evaluator=${encodeURIComponent(evaluator)}`,
    );
  } catch (err) {
    throw new NetworkError(`server unreachable: ${err}`);
  }
  const body = await parseJson(response);
  if (!response.ok) {
    throw new Error(body.error ?? `server error (HTTP ${response.status})`);
  }
  return body as NextResult;
}

export async function submitJudgment(
  base: string,
  sessionId: string,
  payload: JudgmentPayload,
): Promise<SubmitResult> {
  let response: Response;
  try {
    response = await fetch(`${base}/sessions/${encodeURIComponent(sessionId)}/judgments`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  } catch (err) {
    throw new NetworkError(`server unreachable: ${err}`);
  }
  const body = await parseJson(response);
  if (!response.ok) {
    return { ok: false, error: body.error ?? `server error (HTTP ${response.status})` };
  }
  return { ok: true, progress: body.progress };
}
