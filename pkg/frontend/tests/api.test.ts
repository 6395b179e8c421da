import { describe, expect, it } from "vitest";

import { ApiClient, ServiceError, type HttpResponse, type Transport } from "../src/api";

interface Call {
  method: string;
  path: string;
  body?: unknown;
}

/** In-memory stand-in for the annotation service. */
function mockService() {
  const calls: Call[] = [];
  let progress = 29;

  const respond = (status: number, payload: unknown): HttpResponse => ({
    status,
    json: async () => payload,
    text: async () => JSON.stringify(payload),
  });

  const transport: Transport = async (method, path, body) => {
    calls.push({ method, path, body });
    if (method === "GET" && path === "/state") {
      return respond(200, {
        iteration: 2,
        phase: "annotating",
        budget: 30,
        budget_progress: progress,
        labeled_count: 70,
        suggestions: ["img_a"],
        points: [
          { image_id: "img_a", x: 0.1, y: 0.2, status: "suggested" },
          { image_id: "img_b", x: 0.3, y: 0.4, status: "labeled", majority_class: 2 },
        ],
        model_version: 2,
        confidence_distribution: {},
        class_balance: { prior: {}, new: {} },
        faults: [],
      });
    }
    if (method === "POST" && path.startsWith("/annotations/")) {
      progress += 1;
      return respond(200, {
        budget_progress: progress,
        budget: 30,
        phase: progress === 30 ? "ready_to_train" : "annotating",
      });
    }
    if (method === "DELETE" && path.startsWith("/annotations/")) {
      progress -= 1;
      return respond(200, { budget_progress: progress, budget: 30, phase: "annotating" });
    }
    if (method === "POST" && path === "/retrain") {
      if (progress !== 30) return respond(409, { detail: "retrain requires a full pending batch" });
      return respond(200, { job_id: 5 });
    }
    if (method === "GET" && path === "/trajectories") {
      return respond(200, { session: [], baseline: [] });
    }
    return respond(404, { detail: `no such endpoint: ${method} ${path}` });
  };

  return { transport, calls, setProgress: (p: number) => (progress = p) };
}

describe("ApiClient", () => {
  it("maps the state payload to camel-case domain types", async () => {
    const { transport } = mockService();
    const client = new ApiClient(transport);
    const state = await client.getState();
    expect(state.budgetProgress).toBe(29);
    expect(state.points[0]).toMatchObject({ imageId: "img_a", status: "suggested" });
    expect(state.points[1]!.majorityClass).toBe(2);
  });

  it("mutates server state only through documented endpoints", async () => {
    const { transport, calls } = mockService();
    const client = new ApiClient(transport);
    await client.getState();
    await client.submitAnnotation("img_a", [{ class: 0, box: [0.5, 0.5, 0.2, 0.2] }]);
    await client.startRetrain();
    await client.getTrajectories();
    const mutations = calls.filter((c) => c.method !== "GET");
    expect(mutations.map((c) => c.path)).toEqual(["/annotations/img_a", "/retrain"]);
    // every call the client made is one of the documented endpoints
    const documented = [
      /^\/state$/,
      /^\/heatmap$/,
      /^\/suggestions$/,
      /^\/projection$/,
      /^\/images\/[^/]+$/,
      /^\/images\/[^/]+\/predictions$/,
      /^\/annotations\/[^/]+$/,
      /^\/retrain$/,
      /^\/trajectories$/,
    ];
    for (const call of calls) {
      expect(documented.some((re) => re.test(call.path))).toBe(true);
    }
  });

  it("annotation submit/undo round-trips the progress counter", async () => {
    const { transport } = mockService();
    const client = new ApiClient(transport);
    const after = await client.submitAnnotation("img_a", []);
    expect(after).toMatchObject({ budgetProgress: 30, phase: "ready_to_train" });
    const reverted = await client.undoAnnotation("img_a");
    expect(reverted).toMatchObject({ budgetProgress: 29, phase: "annotating" });
  });

  it("surfaces service errors with their status codes", async () => {
    const { transport, setProgress } = mockService();
    setProgress(10);
    const client = new ApiClient(transport);
    await expect(client.startRetrain()).rejects.toThrowError(ServiceError);
    await client.startRetrain().catch((e: ServiceError) => {
      expect(e.status).toBe(409);
    });
  });
});
