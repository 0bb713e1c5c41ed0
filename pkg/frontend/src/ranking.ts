/**
 * Client-side competition-ranking validation.
 *
 * Must accept exactly the same rank vectors as the server: sorting the
 * ranks, the first tie group of size m1 sits at rank 1, the next group at
 * 1 + m1, and so on. Ties are allowed; gaps follow tie-group sizes.
 * A shared fixture (tests/fixtures/rank_vectors_k4.json) pins both sides.
 */

export type RankMap = Record<string, number>;

export interface RankValidation {
  ok: boolean;
  reason?: string;
}

export function validateCompetitionRanks(ranks: RankMap, labels: string[]): RankValidation {
  const k = labels.length;
  const provided = Object.keys(ranks);
  const missing = labels.filter((label) => !(label in ranks));
  if (missing.length > 0) {
    return { ok: false, reason: `missing ranks for: ${missing.join(", ")}` };
  }
  const unknown = provided.filter((label) => !labels.includes(label));
  if (unknown.length > 0) {
    return { ok: false, reason: `unknown labels: ${unknown.join(", ")}` };
  }
  for (const label of labels) {
    const rank = ranks[label];
    if (!Number.isInteger(rank)) {
      return { ok: false, reason: `rank for ${label} must be an integer` };
    }
    if (rank < 1 || rank > k) {
      return { ok: false, reason: `rank for ${label} must lie in [1, ${k}]` };
    }
  }
  const ordered = labels.map((label) => ranks[label]).sort((a, b) => a - b);
  let expected = 1;
  let i = 0;
  while (i < k) {
    const value = ordered[i];
    if (value !== expected) {
      return {
        ok: false,
        reason:
          `invalid tie structure: rank ${value} found where rank ${expected} was required ` +
          `(a tie group of size m at rank r pushes the next group to r + m)`,
      };
    }
    let group = 0;
    while (i + group < k && ordered[i + group] === value) {
      group += 1;
    }
    expected += group;
    i += group;
  }
  return { ok: true };
}
