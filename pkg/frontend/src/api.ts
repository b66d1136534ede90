/** Thin typed client for the /v1 API. Every number shown in the UI comes
 * from one of these responses; nothing is computed locally. */

import type {
  ClinicalProfile,
  GrammarInfo,
  PlanResponse,
  RolloutResponse,
  ScoredCandidate,
  SurvivalOutput,
  TherapyAction,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    public status: number,
    public body: unknown,
  ) {
    super(`service returned ${status}`);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      throw new ServiceError(response.status, await response.json().catch(() => null));
    }
    return (await response.json()) as T;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!response.ok) {
      throw new ServiceError(response.status, await response.json().catch(() => null));
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string; checkpoint_hash: string }> {
    return this.get("/v1/health");
  }

  grammar(): Promise<GrammarInfo> {
    return this.get("/v1/grammar");
  }

  score(
    latent: number[][],
    profile: ClinicalProfile,
    dtDays: number,
    action: TherapyAction,
  ): Promise<SurvivalOutput> {
    return this.post("/v1/score", {
      latent: { tokens: latent },
      profile,
      dt_days: dtDays,
      action,
    });
  }

  candidates(
    latent: number[][],
    profile: ClinicalProfile,
    dtDays: number,
    actions: TherapyAction[],
  ): Promise<{ candidates: ScoredCandidate[] }> {
    return this.post("/v1/candidates", {
      latent: { tokens: latent },
      profile,
      dt_days: dtDays,
      actions,
    });
  }

  plan(
    latent: number[][],
    profile: ClinicalProfile,
    dtDays: number,
    options: { maxIterations?: number; proposals?: number; seed?: number } = {},
  ): Promise<PlanResponse> {
    return this.post("/v1/plan", {
      latent: { tokens: latent },
      profile,
      dt_days: dtDays,
      max_iterations: options.maxIterations ?? 3,
      proposals_per_iteration: options.proposals ?? 8,
      seed: options.seed ?? 0,
    });
  }

  rollout(
    latent: number[][],
    profile: ClinicalProfile,
    schedule: { t_days: number; action: TherapyAction }[],
  ): Promise<RolloutResponse> {
    return this.post("/v1/rollout", {
      latent: { tokens: latent },
      profile,
      schedule,
    });
  }
}
