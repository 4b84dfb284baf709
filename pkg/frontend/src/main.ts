/** DOM wiring: renders the session state and forwards input events.
 *
 * The dialogue excerpt appears in turn order with images inline, the two
 * anonymized responses sit side by side, and the rubric lives in a
 * persistent panel one keystroke away.
 */

import { ApiClient } from "./api.js";
import { ConsoleSession } from "./state.js";
import type { ExcerptTurn, Panel, RatingTaskPayload } from "./types.js";

function resolveToken(): string {
  const fromUrl = new URLSearchParams(window.location.search).get("token");
  if (fromUrl) {
    window.localStorage.setItem("evaluator-token", fromUrl);
    return fromUrl;
  }
  const stored = window.localStorage.getItem("evaluator-token");
  if (stored) {
    return stored;
  }
  const typed = window.prompt("Evaluator token:") ?? "";
  window.localStorage.setItem("evaluator-token", typed);
  return typed;
}

function el(
  tag: string,
  className = "",
  text = "",
): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function renderExcerpt(turns: ExcerptTurn[]): HTMLElement {
  const container = el("section", "excerpt");
  container.appendChild(el("h2", "", "Conversation"));
  for (const turn of turns) {
    const bubble = el("div", `turn turn-${turn.role}`);
    bubble.appendChild(el("span", "role", turn.role));
    for (const item of turn.items) {
      if (item.type === "text") {
        bubble.appendChild(el("p", "", item.body ?? ""));
      } else {
        const img = document.createElement("img");
        img.src = item.uri?.match(/^https?:/)
          ? item.uri
          : `/images/${item.uri ?? ""}`;
        img.alt = item.image_id ?? "patient image";
        img.loading = "lazy";
        bubble.appendChild(img);
      }
    }
    container.appendChild(bubble);
  }
  return container;
}

function renderResponsePanel(
  session: ConsoleSession,
  panel: Panel,
  body: string,
  rerender: () => void,
): HTMLElement {
  const card = el(
    "article",
    `response ${session.focused === panel ? "focused" : ""}`,
  );
  card.appendChild(el("h3", "", `Response ${panel.toUpperCase()}`));
  card.appendChild(el("p", "body", body));
  const scoreRow = el("div", "scores");
  for (let s = 0; s <= 4; s++) {
    const button = el(
      "button",
      session.scores[panel] === s ? "score selected" : "score",
      String(s),
    );
    button.addEventListener("click", () => {
      session.setFocus(panel);
      session.setScore(panel, s);
      rerender();
    });
    scoreRow.appendChild(button);
  }
  card.appendChild(scoreRow);
  card.addEventListener("click", () => {
    if (session.focused !== panel) {
      session.setFocus(panel);
      rerender();
    }
  });
  return card;
}

function renderRating(
  session: ConsoleSession,
  task: RatingTaskPayload,
  rerender: () => void,
): HTMLElement {
  const root = el("div", "rating");

  const header = el("header");
  header.appendChild(el("h1", "", `Task ${task.task_id}`));
  header.appendChild(
    el(
      "span",
      "progress",
      `${task.progress.rated} / ${task.progress.total} rated`,
    ),
  );
  root.appendChild(header);

  root.appendChild(renderExcerpt(task.excerpt));

  const pair = el("section", "responses");
  pair.appendChild(renderResponsePanel(session, "a", task.response_a, rerender));
  pair.appendChild(renderResponsePanel(session, "b", task.response_b, rerender));
  root.appendChild(pair);

  const controls = el("footer", "controls");
  const submit = el("button", "submit", "Submit (Enter)") as HTMLButtonElement;
  submit.disabled = !session.canSubmit;
  submit.addEventListener("click", async () => {
    await session.submit();
    rerender();
  });
  controls.appendChild(submit);
  const rubricToggle = el("button", "", "Rubric (r)");
  rubricToggle.addEventListener("click", () => {
    session.toggleRubric();
    rerender();
  });
  controls.appendChild(rubricToggle);
  if (session.pendingError) {
    controls.appendChild(
      el("span", "error", `submit failed, scores kept - retry (${session.pendingError})`),
    );
  }
  controls.appendChild(
    el("span", "hint", "keys: 0-4 score, a/b focus, r rubric"),
  );
  root.appendChild(controls);

  const rubric = el("aside", session.rubricOpen ? "rubric open" : "rubric");
  rubric.appendChild(el("h2", "", "Five-grade rubric"));
  for (const grade of task.rubric) {
    const row = el("div", "grade");
    row.appendChild(el("strong", "", String(grade.score)));
    row.appendChild(el("span", "", grade.description));
    rubric.appendChild(row);
  }
  root.appendChild(rubric);
  return root;
}

function renderDone(session: ConsoleSession): HTMLElement {
  const root = el("div", "done");
  root.appendChild(el("h1", "", "All tasks rated"));
  root.appendChild(
    el(
      "p",
      "",
      `You rated ${session.progress.rated} of ${session.progress.total} tasks. Thank you.`,
    ),
  );
  return root;
}

async function boot(): Promise<void> {
  const app = document.getElementById("app");
  if (!app) {
    throw new Error("missing #app container");
  }
  const session = new ConsoleSession(
    new ApiClient(window.location.origin, resolveToken()),
  );

  const rerender = (): void => {
    app.replaceChildren();
    if (session.view === "loading") {
      app.appendChild(el("p", "loading", "loading..."));
    } else if (session.view === "done") {
      app.appendChild(renderDone(session));
    } else if (session.task) {
      app.appendChild(renderRating(session, session.task, rerender));
    }
  };

  window.addEventListener("keydown", async (event) => {
    if (event.target instanceof HTMLInputElement) {
      return;
    }
    await session.handleKey(event.key);
    rerender();
  });

  try {
    await session.start();
  } catch (error) {
    app.replaceChildren(
      el("p", "error", `cannot reach the rating service: ${error}`),
    );
    return;
  }
  rerender();
}

void boot();
