/** Console state machine, kept free of DOM concerns for testability.
 *
 * Flow: load the next task, collect one 0-4 score per response panel,
 * submit, advance. A conflict (someone already rated the task, e.g. in
 * another tab) skips forward; a network failure keeps the pending scores
 * so the evaluator can retry without re-entering them.
 */

import { ConflictError, type Api } from "./api.js";
import type {
  Panel,
  Progress,
  RatingTaskPayload,
  Score,
} from "./types.js";

export type View = "loading" | "rating" | "done";

const VALID_SCORES: ReadonlySet<number> = new Set([0, 1, 2, 3, 4]);

export class ConsoleSession {
  view: View = "loading";
  task: RatingTaskPayload | null = null;
  progress: Progress = { rated: 0, total: 0 };
  scores: { a: Score | null; b: Score | null } = { a: null, b: null };
  focused: Panel = "a";
  rubricOpen = false;
  /** set when a submit failed and the same scores are ready to retry */
  pendingError: string | null = null;
  submitting = false;

  constructor(private readonly api: Api) {}

  async start(): Promise<void> {
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    this.view = "loading";
    const payload = await this.api.nextTask();
    this.progress = payload.progress;
    if (payload.exhausted) {
      this.task = null;
      this.view = "done";
      return;
    }
    this.task = payload;
    this.scores = { a: null, b: null };
    this.focused = "a";
    this.pendingError = null;
    this.view = "rating";
  }

  setScore(panel: Panel, score: number): void {
    if (!VALID_SCORES.has(score)) {
      throw new RangeError(`score must be an integer in 0..4, got ${score}`);
    }
    this.scores[panel] = score as Score;
  }

  setFocus(panel: Panel): void {
    this.focused = panel;
  }

  toggleRubric(): void {
    this.rubricOpen = !this.rubricOpen;
  }

  get canSubmit(): boolean {
    return (
      this.view === "rating" &&
      !this.submitting &&
      this.scores.a !== null &&
      this.scores.b !== null
    );
  }

  async submit(): Promise<void> {
    if (!this.canSubmit || this.task === null) {
      return;
    }
    const { task_id } = this.task;
    const scoreA = this.scores.a as Score;
    const scoreB = this.scores.b as Score;
    this.submitting = true;
    try {
      await this.api.submit(task_id, scoreA, scoreB);
      await this.loadNext();
    } catch (error) {
      if (error instanceof ConflictError) {
        // already rated elsewhere; move on
        await this.loadNext();
      } else {
        this.pendingError = error instanceof Error
          ? error.message
          : String(error);
      }
    } finally {
      this.submitting = false;
    }
  }

  /** Keyboard-first scoring: digits score the focused panel, a/b or the
   * arrow keys move focus, r toggles the rubric, Enter submits. */
  async handleKey(key: string): Promise<void> {
    if (this.view !== "rating") {
      return;
    }
    if (/^[0-4]$/.test(key)) {
      this.setScore(this.focused, Number(key));
      return;
    }
    switch (key) {
      case "a":
      case "ArrowLeft":
        this.setFocus("a");
        break;
      case "b":
      case "ArrowRight":
        this.setFocus("b");
        break;
      case "r":
        this.toggleRubric();
        break;
      case "Enter":
        await this.submit();
        break;
    }
  }
}
