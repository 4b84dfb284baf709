/** Unit tests for the console state machine and the blinding guard. */

import { describe, expect, it } from "vitest";

import { assertBlind, BlindingViolation, ConflictError, type Api } from "../src/api.js";
import { ConsoleSession } from "../src/state.js";
import type { NextTaskPayload, RatingTaskPayload, Score, SubmitAck } from "../src/types.js";

function task(id: string, rated: number, total: number): RatingTaskPayload {
  return {
    exhausted: false,
    task_id: id,
    session_id: "s1",
    response_index: 1,
    excerpt: [
      { index: 0, role: "patient", items: [{ type: "text", body: "hi" }] },
    ],
    response_a: `answer A for ${id}`,
    response_b: `answer B for ${id}`,
    rubric: [{ score: 4, description: "fits the consultation" }],
    progress: { rated, total },
  };
}

/** Scripted fake service: a queue of tasks, then exhaustion.
 *
 * `conflictOn` simulates the lost race where another tab rated the task
 * between fetch and submit: the task is served normally, the submission
 * answers 409, and only then does the task count as done.
 */
class FakeApi implements Api {
  submitted: Array<{ taskId: string; scoreA: Score; scoreB: Score }> = [];
  failNext = 0;
  conflictOn = new Set<string>();
  private conflicted = new Set<string>();

  constructor(private tasks: RatingTaskPayload[]) {}

  async nextTask(): Promise<NextTaskPayload> {
    const rated = this.submitted.length + this.conflicted.size;
    const pending = this.tasks.filter(
      (t) =>
        !this.submitted.some((s) => s.taskId === t.task_id) &&
        !this.conflicted.has(t.task_id),
    );
    if (pending.length === 0) {
      return { exhausted: true, progress: { rated, total: this.tasks.length } };
    }
    return { ...pending[0], progress: { rated, total: this.tasks.length } };
  }

  async submit(taskId: string, scoreA: Score, scoreB: Score): Promise<SubmitAck> {
    if (this.failNext > 0) {
      this.failNext -= 1;
      throw new Error("network down");
    }
    if (this.conflictOn.has(taskId)) {
      this.conflicted.add(taskId);
      throw new ConflictError(`task ${taskId} already rated`);
    }
    this.submitted.push({ taskId, scoreA, scoreB });
    return {
      accepted: true,
      task_id: taskId,
      progress: { rated: this.submitted.length, total: this.tasks.length },
    };
  }
}

describe("ConsoleSession", () => {
  it("loads the first task into the rating view", async () => {
    const session = new ConsoleSession(new FakeApi([task("t1", 0, 1)]));
    await session.start();
    expect(session.view).toBe("rating");
    expect(session.task?.task_id).toBe("t1");
    expect(session.scores).toEqual({ a: null, b: null });
  });

  it("blocks submission until both scores are set", async () => {
    const api = new FakeApi([task("t1", 0, 1)]);
    const session = new ConsoleSession(api);
    await session.start();
    expect(session.canSubmit).toBe(false);
    await session.submit();
    expect(api.submitted).toHaveLength(0);

    session.setScore("a", 3);
    expect(session.canSubmit).toBe(false);
    session.setScore("b", 4);
    expect(session.canSubmit).toBe(true);
  });

  it("rejects out-of-range scores", async () => {
    const session = new ConsoleSession(new FakeApi([task("t1", 0, 1)]));
    await session.start();
    expect(() => session.setScore("a", 5)).toThrow(RangeError);
    expect(() => session.setScore("a", -1)).toThrow(RangeError);
    expect(() => session.setScore("a", 2.5)).toThrow(RangeError);
  });

  it("submits and advances to the next task", async () => {
    const api = new FakeApi([task("t1", 0, 2), task("t2", 0, 2)]);
    const session = new ConsoleSession(api);
    await session.start();
    session.setScore("a", 3);
    session.setScore("b", 1);
    await session.submit();
    expect(api.submitted).toEqual([{ taskId: "t1", scoreA: 3, scoreB: 1 }]);
    expect(session.task?.task_id).toBe("t2");
    expect(session.scores).toEqual({ a: null, b: null });
  });

  it("reaches the completion screen with progress totals", async () => {
    const api = new FakeApi([task("t1", 0, 1)]);
    const session = new ConsoleSession(api);
    await session.start();
    session.setScore("a", 2);
    session.setScore("b", 2);
    await session.submit();
    expect(session.view).toBe("done");
    expect(session.progress).toEqual({ rated: 1, total: 1 });
  });

  it("skips forward on a conflict", async () => {
    const api = new FakeApi([task("t1", 0, 2), task("t2", 0, 2)]);
    api.conflictOn.add("t1");
    const session = new ConsoleSession(api);
    await session.start();
    session.setScore("a", 4);
    session.setScore("b", 0);
    await session.submit();
    expect(session.task?.task_id).toBe("t2");
    expect(session.pendingError).toBeNull();
  });

  it("keeps scores and flags the error on network failure, then retries", async () => {
    const api = new FakeApi([task("t1", 0, 1)]);
    api.failNext = 1;
    const session = new ConsoleSession(api);
    await session.start();
    session.setScore("a", 4);
    session.setScore("b", 2);
    await session.submit();
    expect(session.view).toBe("rating");
    expect(session.pendingError).toContain("network down");
    expect(session.scores).toEqual({ a: 4, b: 2 });

    await session.submit(); // retry affordance: same scores go through
    expect(api.submitted).toEqual([{ taskId: "t1", scoreA: 4, scoreB: 2 }]);
    expect(session.view).toBe("done");
  });

  it("scores the focused panel from the keyboard", async () => {
    const session = new ConsoleSession(new FakeApi([task("t1", 0, 1)]));
    await session.start();
    await session.handleKey("3");
    expect(session.scores.a).toBe(3);
    await session.handleKey("b");
    await session.handleKey("1");
    expect(session.scores.b).toBe(1);
    await session.handleKey("ArrowLeft");
    expect(session.focused).toBe("a");
    await session.handleKey("r");
    expect(session.rubricOpen).toBe(true);
  });

  it("submits via Enter once both scores exist", async () => {
    const api = new FakeApi([task("t1", 0, 1)]);
    const session = new ConsoleSession(api);
    await session.start();
    await session.handleKey("Enter");
    expect(api.submitted).toHaveLength(0);
    await session.handleKey("4");
    await session.handleKey("b");
    await session.handleKey("2");
    await session.handleKey("Enter");
    expect(api.submitted).toEqual([{ taskId: "t1", scoreA: 4, scoreB: 2 }]);
  });
});

describe("assertBlind", () => {
  it("accepts anonymized payloads even when prose mentions conditions", () => {
    expect(() =>
      assertBlind({
        task_id: "t1",
        response_a: "compare with the reference ranges in the lab report",
        response_b: "a treatment plan will follow",
      }),
    ).not.toThrow();
  });

  it("rejects condition-revealing field names at any depth", () => {
    expect(() => assertBlind({ response_treatment: "x" })).toThrow(
      BlindingViolation,
    );
    expect(() =>
      assertBlind({ nested: [{ score_reference: 1 }] }),
    ).toThrow(BlindingViolation);
    expect(() => assertBlind({ Treatment: true })).toThrow(BlindingViolation);
  });
});
