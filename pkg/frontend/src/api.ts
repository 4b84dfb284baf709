/** HTTP client for the rating service, with the blinding guard.
 *
 * The console must never learn which response is which condition, so
 * every payload is checked before use: any field name mentioning a
 * condition is a server bug and stops the session rather than silently
 * biasing the study.
 */

import type { NextTaskPayload, Score, SubmitAck } from "./types.js";

export class ConflictError extends Error {}

export class BlindingViolation extends Error {}

const CONDITION_KEY = /treatment|reference/i;

/** Recursively reject payloads carrying condition-revealing field names. */
export function assertBlind(payload: unknown, path = ""): void {
  if (Array.isArray(payload)) {
    payload.forEach((item, i) => assertBlind(item, `${path}[${i}]`));
    return;
  }
  if (payload !== null && typeof payload === "object") {
    for (const [key, value] of Object.entries(payload)) {
      if (CONDITION_KEY.test(key)) {
        throw new BlindingViolation(
          `payload field "${path}.${key}" reveals the condition mapping`,
        );
      }
      assertBlind(value, path ? `${path}.${key}` : key);
    }
  }
}

export interface Api {
  nextTask(): Promise<NextTaskPayload>;
  submit(taskId: string, scoreA: Score, scoreB: Score): Promise<SubmitAck>;
}

export class ApiClient implements Api {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
  ) {}

  private headers(): Record<string, string> {
    return {
      Authorization: `Bearer ${this.token}`,
      "Content-Type": "application/json",
    };
  }

  async nextTask(): Promise<NextTaskPayload> {
    const response = await fetch(`${this.baseUrl}/api/tasks/next`, {
      headers: this.headers(),
    });
    if (!response.ok) {
      throw new Error(`next task failed: HTTP ${response.status}`);
    }
    const payload = (await response.json()) as NextTaskPayload;
    assertBlind(payload);
    return payload;
  }

  async submit(
    taskId: string,
    scoreA: Score,
    scoreB: Score,
  ): Promise<SubmitAck> {
    const response = await fetch(`${this.baseUrl}/api/ratings`, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify({ task_id: taskId, score_a: scoreA, score_b: scoreB }),
    });
    if (response.status === 409) {
      throw new ConflictError(`task ${taskId} already rated`);
    }
    if (!response.ok) {
      throw new Error(`submit failed: HTTP ${response.status}`);
    }
    const ack = (await response.json()) as SubmitAck;
    assertBlind(ack);
    return ack;
  }
}
