"""Run the whole refinement pipeline over the bundled fixture corpus and
summarize what happened.

Every image gets one provenance record; cropped images are written
beside the originals as <image_id>.refined.<ext> and the dataset records
point at them, with the conversation structure untouched. Re-running
with the same configuration reuses the records instead of repeating
backend calls.

Equivalent CLI:
    ctxcrop refine --input data.jsonl --images images/ \
        --out refined.jsonl --provenance prov.jsonl --fixtures backends/
"""

import shutil
import tempfile
from pathlib import Path

from ctxcrop import (Backends, LexiconExtractor, PipelineConfig,
                     load_dataset, ratio_histogram, refine_dataset)

FIXTURES = Path(__file__).parent.parent / "tests" / "fixtures"

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    shutil.copytree(FIXTURES / "corpus" / "images", root / "images")
    dataset = load_dataset(FIXTURES / "corpus" / "data.jsonl")

    cfg = PipelineConfig(fixtures_dir=str(FIXTURES / "backends"))
    backends = Backends.from_config(cfg, fallback=LexiconExtractor())
    refined, records = refine_dataset(dataset, cfg, backends,
                                      root / "images")

    print(f"{len(records)} images processed "
          f"(config hash {cfg.config_hash()})\n")
    for rec in records:
        result = rec.result
        extra = (f"ratio {result.area_ratio:.3f} crop {result.crop_box}"
                 if result.status == "cropped" else "")
        print(f"  {rec.image_id:8} {result.status:9} {result.reason:15} "
              f"kw={list(rec.keywords.keywords)} {extra}")

    print()
    print(ratio_histogram(records, "all_images").format_table())
    print()
    print(ratio_histogram(records, "cropped_only").format_table())

    # a second run resumes from the records: zero backend traffic
    fresh = Backends.from_config(cfg, fallback=LexiconExtractor())
    refine_dataset(dataset, cfg, fresh, root / "images",
                   resume_from=records)
    print(f"\nresumed run made {fresh.textgen.calls} keyword calls and "
          f"{fresh.grounding.calls} grounding calls")
