"""Drive the blind rating service end to end, in process.

Tasks show two anonymized responses, A and B; which condition hides
behind each label is a seeded function of the task id that never leaves
the server. Submissions are de-randomized and appended to the ratings
store, and the report endpoint runs the assessment over them.

The same app serves single-image refinement at POST /api/refine and the
browser console as static files; `ctxcrop serve` wires it from the
command line.
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from ctxcrop.service import (RatingsStore, ServiceState, ab_order,
                             create_app, load_evaluators, load_tasks)

FIXTURES = Path(__file__).parent.parent / "tests" / "fixtures" / "service"
SEED = 11

with tempfile.TemporaryDirectory() as tmp:
    state = ServiceState(
        seed=SEED,
        tasks=load_tasks(FIXTURES / "tasks.jsonl"),
        evaluators=load_evaluators(FIXTURES / "evaluators.json"),
        store=RatingsStore(Path(tmp) / "ratings.jsonl"),
    )
    client = TestClient(create_app(state))
    auth = {"Authorization": "Bearer token-alice"}

    while True:
        task = client.get("/api/tasks/next", headers=auth).json()
        if task["exhausted"]:
            print(f"done: {task['progress']['rated']} of "
                  f"{task['progress']['total']} tasks rated")
            break
        print(f"\n{task['task_id']} (session {task['session_id']})")
        print(f"  A: {task['response_a'][:60]}")
        print(f"  B: {task['response_b'][:60]}")
        # this scripted evaluator always prefers the fuller answer A/B by
        # length, standing in for a human judgment
        a_longer = len(task["response_a"]) >= len(task["response_b"])
        scores = {"score_a": 4 if a_longer else 2,
                  "score_b": 2 if a_longer else 4}
        ack = client.post("/api/ratings", headers=auth,
                          json={"task_id": task["task_id"], **scores})
        print(f"  submitted {scores} -> rated "
              f"{ack.json()['progress']['rated']}")

    # the store holds de-randomized records; the label order per task is
    # reproducible from (seed, task_id)
    print("\nstored records (condition scores, label order shown):")
    for line in open(state.store.path):
        record = json.loads(line)
        order = "A=trt" if ab_order(SEED, record["task_id"]) else "B=trt"
        print(f"  {record['task_id']}: treatment={record['score_treatment']} "
              f"reference={record['score_reference']} ({order})")

    # one evaluator cannot produce a complete 2-evaluator grid; the
    # report says exactly what is missing instead of guessing
    report = client.get("/api/reports/dmos").json()
    if not report["complete"]:
        print(f"\nreport incomplete, {len(report['missing'])} missing "
              f"ratings (second evaluator has not rated yet)")

    # after the second evaluator finishes, numbers appear
    auth_bob = {"Authorization": "Bearer token-bob"}
    while True:
        task = client.get("/api/tasks/next", headers=auth_bob).json()
        if task["exhausted"]:
            break
        client.post("/api/ratings", headers=auth_bob,
                    json={"task_id": task["task_id"],
                          "score_a": 3, "score_b": 3})
    report = client.get("/api/reports/dmos").json()
    print("\ncomplete report:")
    print(json.dumps(report["report"]["averaged"], indent=2))
