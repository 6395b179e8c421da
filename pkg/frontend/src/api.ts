/** HTTP client for the annotation service. All server state flows through
 * these documented endpoints; the UI performs no other I/O. */

import type { EvalPoint, HeatmapGrid, Prediction, StateSnapshot } from "./types";

export interface HttpResponse {
  status: number;
  json(): Promise<unknown>;
  text(): Promise<string>;
}

export type Transport = (
  method: "GET" | "POST" | "DELETE",
  path: string,
  body?: unknown
) => Promise<HttpResponse>;

export class ServiceError extends Error {
  readonly status: number;
  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

/** Build a Transport from fetch; tests inject a mock instead. */
export function fetchTransport(baseUrl: string, token: string): Transport {
  return async (method, path, body) => {
    const response = await fetch(baseUrl + path, {
      method,
      headers: {
        Authorization: `Bearer ${token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    return {
      status: response.status,
      json: () => response.json(),
      text: () => response.text(),
    };
  };
}

async function expectOk(response: HttpResponse): Promise<unknown> {
  if (response.status >= 400) {
    throw new ServiceError(response.status, await response.text());
  }
  return response.json();
}

/* eslint-disable @typescript-eslint/no-explicit-any */
function toSnapshot(raw: any): StateSnapshot {
  return {
    iteration: raw.iteration,
    phase: raw.phase,
    budget: raw.budget,
    budgetProgress: raw.budget_progress,
    labeledCount: raw.labeled_count,
    suggestions: raw.suggestions,
    points: (raw.points ?? []).map((p: any) => ({
      imageId: p.image_id,
      x: p.x,
      y: p.y,
      status: p.status,
      majorityClass: p.majority_class ?? null,
    })),
    modelVersion: raw.model_version,
    confidenceDistribution: raw.confidence_distribution ?? {},
    classBalance: raw.class_balance ?? { prior: {}, new: {} },
    faults: raw.faults ?? [],
  };
}

export class ApiClient {
  private readonly transport: Transport;

  constructor(transport: Transport) {
    this.transport = transport;
  }

  async getState(): Promise<StateSnapshot> {
    return toSnapshot(await expectOk(await this.transport("GET", "/state")));
  }

  async getHeatmap(): Promise<HeatmapGrid> {
    const raw = (await expectOk(await this.transport("GET", "/heatmap"))) as any;
    return {
      xMin: raw.x_min,
      xMax: raw.x_max,
      yMin: raw.y_min,
      yMax: raw.y_max,
      nx: raw.nx,
      ny: raw.ny,
      values: raw.values,
      colormap: raw.colormap,
      degenerate: raw.degenerate,
    };
  }

  async getSuggestions(): Promise<{ imageId: string; avgConf: number }[]> {
    const raw = (await expectOk(await this.transport("GET", "/suggestions"))) as any[];
    return raw.map((s) => ({ imageId: s.image_id, avgConf: s.avg_conf }));
  }

  async getPredictions(imageId: string): Promise<Prediction[]> {
    return (await expectOk(
      await this.transport("GET", `/images/${encodeURIComponent(imageId)}/predictions`)
    )) as Prediction[];
  }

  async submitAnnotation(
    imageId: string,
    boxes: { class: number; box: [number, number, number, number] }[]
  ): Promise<{ budgetProgress: number; budget: number; phase: string }> {
    const raw = (await expectOk(
      await this.transport("POST", `/annotations/${encodeURIComponent(imageId)}`, boxes)
    )) as any;
    return { budgetProgress: raw.budget_progress, budget: raw.budget, phase: raw.phase };
  }

  async undoAnnotation(
    imageId: string
  ): Promise<{ budgetProgress: number; budget: number; phase: string }> {
    const raw = (await expectOk(
      await this.transport("DELETE", `/annotations/${encodeURIComponent(imageId)}`)
    )) as any;
    return { budgetProgress: raw.budget_progress, budget: raw.budget, phase: raw.phase };
  }

  async startRetrain(): Promise<{ jobId: number }> {
    const raw = (await expectOk(await this.transport("POST", "/retrain"))) as any;
    return { jobId: raw.job_id };
  }

  async getTrajectories(): Promise<{ session: EvalPoint[]; baseline: EvalPoint[] }> {
    return (await expectOk(await this.transport("GET", "/trajectories"))) as any;
  }
}
