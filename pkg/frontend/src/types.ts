/** Payload shapes of the rating service API the console consumes. */

export type Score = 0 | 1 | 2 | 3 | 4;

export interface Progress {
  rated: number;
  total: number;
}

export interface RubricGrade {
  score: number;
  description: string;
}

export interface ExcerptItem {
  type: "text" | "image";
  body?: string;
  image_id?: string;
  uri?: string;
  width?: number;
  height?: number;
}

export interface ExcerptTurn {
  index: number;
  role: string;
  items: ExcerptItem[];
}

/** A task as served to the console: anonymized labels only. */
export interface RatingTaskPayload {
  exhausted: false;
  task_id: string;
  session_id: string;
  response_index: number;
  excerpt: ExcerptTurn[];
  response_a: string;
  response_b: string;
  rubric: RubricGrade[];
  progress: Progress;
}

export interface ExhaustedPayload {
  exhausted: true;
  progress: Progress;
}

export type NextTaskPayload = RatingTaskPayload | ExhaustedPayload;

export interface SubmitAck {
  accepted: boolean;
  task_id: string;
  progress: Progress;
}

export type Panel = "a" | "b";
