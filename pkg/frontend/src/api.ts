/**
 * Typed client for the annotation service HTTP API.
 *
 * Distinguishes rejections (the server answered with violations or a
 * routing conflict) from transport failures (fetch threw), because the
 * wizard rolls back on the former and queues a retry on the latter.
 */

import { Answer, NextTaskResponse, SubmitResponse, Violation } from "./types.js";

export class SubmissionRejected extends Error {
  constructor(
    public readonly status: number,
    public readonly violations: Violation[],
    detail: string,
  ) {
    super(detail);
  }
}

export interface ServiceApi {
  nextTask(): Promise<NextTaskResponse>;
  submit(commentId: string, question: string, answer: Answer): Promise<SubmitResponse>;
  registryNames(): Promise<string[]>;
}

function extractViolations(detail: unknown): Violation[] {
  if (detail && typeof detail === "object" && "violations" in detail) {
    return (detail as { violations: Violation[] }).violations;
  }
  return [];
}

export class HttpServiceApi implements ServiceApi {
  constructor(
    private readonly baseUrl: string,
    private readonly experimentId: string,
    private readonly annotatorId: string,
  ) {}

  async nextTask(): Promise<NextTaskResponse> {
    const params = new URLSearchParams({
      annotator: this.annotatorId,
      experiment: this.experimentId,
    });
    const response = await fetch(`${this.baseUrl}/tasks/next?${params}`);
    if (!response.ok) {
      throw new SubmissionRejected(response.status, [], await response.text());
    }
    return (await response.json()) as NextTaskResponse;
  }

  async submit(commentId: string, question: string, answer: Answer): Promise<SubmitResponse> {
    const response = await fetch(`${this.baseUrl}/annotations`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        experiment_id: this.experimentId,
        annotator_id: this.annotatorId,
        comment_id: commentId,
        question,
        answer,
      }),
    });
    if (!response.ok) {
      let detail: unknown = null;
      try {
        detail = ((await response.json()) as { detail?: unknown }).detail;
      } catch {
        // non-JSON error body; fall through with empty violations
      }
      throw new SubmissionRejected(
        response.status,
        extractViolations(detail),
        typeof detail === "string" ? detail : "submission rejected",
      );
    }
    return (await response.json()) as SubmitResponse;
  }

  async registryNames(): Promise<string[]> {
    const params = new URLSearchParams({ experiment: this.experimentId });
    const response = await fetch(`${this.baseUrl}/registry?${params}`);
    if (!response.ok) return [];
    const body = (await response.json()) as { names: string[] };
    return body.names;
  }
}
