/** Client-side validation of pasted patient records, before any network call. */

import type { GrammarInfo, PatientRecord } from "./types.js";

export interface FieldIssue {
  field: string;
  message: string;
}

export function validatePatientRecord(
  raw: unknown,
  grammar: GrammarInfo,
): { record?: PatientRecord; issues: FieldIssue[] } {
  const issues: FieldIssue[] = [];
  if (typeof raw !== "object" || raw === null) {
    return { issues: [{ field: "", message: "record must be a JSON object" }] };
  }
  const doc = raw as Record<string, unknown>;
  if (typeof doc.patient_id !== "string" || !doc.patient_id) {
    issues.push({ field: "patient_id", message: "missing patient id" });
  }
  const profile = doc.profile as Record<string, unknown> | undefined;
  if (!profile || typeof profile.age !== "number" || profile.age < 0) {
    issues.push({ field: "profile.age", message: "age must be a non-negative number" });
  }
  const visits = doc.visits as { t?: unknown; tokens?: unknown }[] | undefined;
  if (!Array.isArray(visits) || visits.length === 0) {
    issues.push({ field: "visits", message: "at least one visit required" });
  } else {
    visits.forEach((visit, i) => {
      const tokens = visit.tokens;
      if (!Array.isArray(tokens) || tokens.length !== grammar.latent_tokens) {
        issues.push({
          field: `visits[${i}].tokens`,
          message: `latent must have ${grammar.latent_tokens} token rows`,
        });
        return;
      }
      for (const row of tokens as unknown[]) {
        if (!Array.isArray(row) || row.length !== grammar.latent_width) {
          issues.push({
            field: `visits[${i}].tokens`,
            message: `each token row must have width ${grammar.latent_width}`,
          });
          return;
        }
        if (!(row as unknown[]).every((x) => typeof x === "number" && Number.isFinite(x))) {
          issues.push({
            field: `visits[${i}].tokens`,
            message: "latent entries must be finite numbers",
          });
          return;
        }
      }
      if (typeof visit.t !== "number") {
        issues.push({ field: `visits[${i}].t`, message: "visit timestamp required" });
      }
    });
  }
  if (issues.length > 0) return { issues };
  return { record: doc as unknown as PatientRecord, issues: [] };
}

export function validateDt(dt: number, grammar: GrammarInfo): FieldIssue[] {
  if (!Number.isFinite(dt) || dt <= 0) {
    return [{ field: "dt_days", message: "time gap must be a positive number of days" }];
  }
  return [];
}
