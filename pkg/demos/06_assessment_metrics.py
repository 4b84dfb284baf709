"""The double-stimulus assessment math on a synthetic rating study.

Two evaluators score every response under both conditions on the 0..4
scale. Differences (treatment minus reference) aggregate per session and
per image; the cropped-image level keeps only images whose crop retained
strictly less than 70% of the original area. MOS values report each
condition on its own.
"""

import numpy as np

from ctxcrop import (RatingRecord, RatingSet, averaged_dmos,
                     cropped_image_dmos, image_dmos, load_rubric,
                     metric_report, mos, session_dmos, significance_test)
from ctxcrop.dialogue import Box
from ctxcrop.refine import RefinementResult

rng = np.random.default_rng(7)

records = []
image_ratios = {}
for s in range(1, 9):
    session = f"sess-{s:02d}"
    for m in (1, 2, 3):
        image_id = None
        if m != 2:  # two of the three responses address a patient image
            image_id = f"{session}-img{m}"
            image_ratios[image_id] = float(rng.uniform(0.05, 1.0))
        for n in (1, 2):
            reference = int(rng.integers(1, 4))
            lift = int(rng.integers(0, 2))  # treatment never worse here
            records.append(RatingRecord(
                evaluator=n, session=session, response_index=m,
                score_treatment=min(4, reference + lift),
                score_reference=reference, image_id=image_id))

ratings = RatingSet(records=records)
print(f"{len(ratings.records)} ratings: {len(ratings.evaluators)} "
      f"evaluators x {len(ratings.sessions)} sessions x 3 responses")

per_session = session_dmos(ratings)
print("\nsession-level DMOS:")
for session_id, value in per_session.items():
    print(f"  {session_id}: {value:+.3f}")

summary = averaged_dmos(per_session)
print(f"averaged: {summary.mean:+.3f} (p={summary.p_value:.2e}, "
      f"n={summary.n})")

per_image = image_dmos(ratings)
print(f"\nimage-level DMOS over {len(per_image)} images, "
      f"averaged {averaged_dmos(per_image).mean:+.3f}")

# provenance from a refinement run supplies the area ratios
provenance = {
    image_id: RefinementResult(
        image_id=image_id, status="cropped", area_ratio=ratio,
        reason="ok", crop_box=Box(0, 0, 10, 10))
    for image_id, ratio in image_ratios.items()
}
obviously_cropped = cropped_image_dmos(ratings, provenance, cutoff=0.7)
print(f"cropped-image level keeps {len(obviously_cropped)} of "
      f"{len(per_image)} images (area ratio < 0.70)")

print(f"\nMOS {mos(ratings, 'treatment'):.3f} vs "
      f"MOS_ref {mos(ratings, 'reference'):.3f} (out of 4)")

# the full report in one call; the t-test is the default, the Wilcoxon
# signed-rank test is one keyword away
report = metric_report(ratings, prov=provenance, method="wilcoxon")
print("wilcoxon p at session level:",
      f"{report.session_summary.p_value:.2e}")

print("\nbalanced differences carry no signal:",
      significance_test([-1.0, 1.0]))

print("\nthe five-grade rubric the scores refer to:")
for score, description in sorted(load_rubric().items(), reverse=True):
    print(f"  {score}: {description}")
