"""Dataset-level orchestration: structure preservation, provenance,
resumability, determinism, and the area-ratio histogram."""

import json
import shutil

import pytest

from ctxcrop.dialogue import (Box, Dataset, ImageItem, load_dataset,
                              serialize_dataset)
from ctxcrop.keywords import KeywordList, LexiconExtractor
from ctxcrop.pipeline import (Backends, PipelineConfig, ProvenanceRecord,
                              ratio_histogram, read_provenance,
                              refine_dataset, refined_uri,
                              write_provenance)
from ctxcrop.refine import RefinementResult

from conftest import FIXTURES, image, session, text, turn


@pytest.fixture
def corpus(tmp_path):
    """Writable copy of the bundled corpus."""
    shutil.copytree(FIXTURES / "corpus", tmp_path / "corpus")
    return tmp_path / "corpus"


@pytest.fixture
def cfg():
    return PipelineConfig(fixtures_dir=str(FIXTURES / "backends"))


def make_backends(cfg):
    return Backends.from_config(cfg, fallback=LexiconExtractor())


def prov(image_id, ratio, status="cropped", reason="ok"):
    result = RefinementResult(
        image_id=image_id, status=status, area_ratio=ratio, reason=reason,
        crop_box=Box(0, 0, 10, 10) if status == "cropped" else None)
    return ProvenanceRecord(
        session_id="s", image_id=image_id, context_turns_used=0,
        keywords=KeywordList(), detections=[], result=result,
        resume_key="k")


class TestRefineDataset:
    def test_structure_preserved(self, corpus, cfg):
        dataset = load_dataset(corpus / "data.jsonl")
        refined, records = refine_dataset(dataset, cfg, make_backends(cfg),
                                          corpus / "images")
        assert len(refined.sessions) == len(dataset.sessions)
        for before, after in zip(dataset.sessions, refined.sessions):
            assert after.session_id == before.session_id
            assert after.extra == before.extra
            assert len(after.turns) == len(before.turns)
            for bt, at in zip(before.turns, after.turns):
                assert at.role == bt.role and at.extra == bt.extra
                assert [type(i) for i in at.items] == [type(i)
                                                       for i in bt.items]
                for bi, ai in zip(bt.items, at.items):
                    if isinstance(bi, ImageItem):
                        assert ai.image_id == bi.image_id
                        assert ai.extra == bi.extra

    def test_provenance_covers_every_image(self, corpus, cfg):
        dataset = load_dataset(corpus / "data.jsonl")
        _, records = refine_dataset(dataset, cfg, make_backends(cfg),
                                    corpus / "images")
        image_ids = [item.image_id for _, item in dataset.iter_images()]
        assert [r.image_id for r in records] == image_ids

    def test_cropped_items_updated_unchanged_items_not(self, corpus, cfg):
        dataset = load_dataset(corpus / "data.jsonl")
        refined, records = refine_dataset(dataset, cfg, make_backends(cfg),
                                          corpus / "images")
        by_id = {r.image_id: r for r in records}
        before = {item.image_id: item for _, item in dataset.iter_images()}
        for _, item in refined.iter_images():
            rec = by_id[item.image_id]
            if rec.result.status == "cropped":
                assert item.uri.endswith(f"{item.image_id}.refined.png")
                assert item.width == rec.result.crop_box.width
                assert item.height == rec.result.crop_box.height
                out = corpus / "images" / item.uri
                assert out.exists()
            else:
                assert item == before[item.image_id]

    def test_original_files_untouched(self, corpus, cfg):
        originals = {
            p: p.read_bytes()
            for p in (corpus / "images").rglob("*.png")
        }
        dataset = load_dataset(corpus / "data.jsonl")
        refine_dataset(dataset, cfg, make_backends(cfg), corpus / "images")
        for path, data in originals.items():
            assert path.read_bytes() == data

    def test_no_context_image_makes_no_backend_calls(self, cfg, tmp_path):
        root = tmp_path / "imgs"
        root.mkdir()
        from conftest import make_png
        (root / "solo.png").write_bytes(make_png(50, 50))
        ds = Dataset(sessions=[session(
            "s1", turn(0, "patient", image("solo", uri="solo.png",
                                           width=50, height=50)))])
        backends = make_backends(cfg)
        _, records = refine_dataset(ds, cfg, backends, root)
        assert records[0].result.reason == "no_context"
        assert backends.textgen.calls == 0
        assert backends.grounding.calls == 0

    def test_empty_dataset(self, cfg, tmp_path):
        refined, records = refine_dataset(Dataset(), cfg, make_backends(cfg),
                                          tmp_path)
        assert refined == Dataset()
        assert records == []

    def test_dataset_without_images(self, cfg, tmp_path):
        ds = Dataset(sessions=[session(
            "s1", turn(0, "patient", text("only text here")))])
        refined, records = refine_dataset(ds, cfg, make_backends(cfg),
                                          tmp_path)
        assert refined == ds
        assert records == []

    def test_missing_image_file_degrades(self, cfg, tmp_path):
        ds = Dataset(sessions=[session(
            "s1",
            turn(0, "patient", text("red patches on both thighs story")),
            turn(1, "patient", image("ghost", uri="ghost.png")))])
        _, records = refine_dataset(ds, cfg, make_backends(cfg), tmp_path)
        assert records[0].result.status == "unchanged"
        assert records[0].result.reason == "backend_error"

    def test_deterministic_across_runs(self, tmp_path, cfg):
        outputs = []
        for run in ("one", "two"):
            root = tmp_path / run
            shutil.copytree(FIXTURES / "corpus", root)
            dataset = load_dataset(root / "data.jsonl")
            refined, records = refine_dataset(
                dataset, cfg, make_backends(cfg), root / "images")
            for r in records:
                r.started_at = r.finished_at = ""
            refined_images = {
                str(p.relative_to(root)): p.read_bytes()
                for p in root.rglob("*.refined.*")
            }
            outputs.append((serialize_dataset(refined),
                            [r.to_record() for r in records],
                            refined_images))
        assert outputs[0] == outputs[1]


class TestResume:
    def test_second_run_skips_everything(self, corpus, cfg):
        dataset = load_dataset(corpus / "data.jsonl")
        first = make_backends(cfg)
        _, records = refine_dataset(dataset, cfg, first, corpus / "images")
        assert first.textgen.calls > 0

        second = make_backends(cfg)
        _, again = refine_dataset(dataset, cfg, second, corpus / "images",
                                  resume_from=records)
        assert second.textgen.calls == 0
        assert second.grounding.calls == 0
        assert [r.to_record() for r in again] == [r.to_record()
                                                  for r in records]

    def test_config_change_invalidates_resume(self, corpus, cfg):
        dataset = load_dataset(corpus / "data.jsonl")
        _, records = refine_dataset(dataset, cfg, make_backends(cfg),
                                    corpus / "images")
        changed = PipelineConfig(fixtures_dir=cfg.fixtures_dir,
                                 box_threshold=0.5)
        fresh = make_backends(changed)
        refine_dataset(dataset, changed, fresh, corpus / "images",
                       resume_from=records)
        assert fresh.textgen.calls > 0

    def test_missing_refined_file_recomputed(self, corpus, cfg):
        dataset = load_dataset(corpus / "data.jsonl")
        _, records = refine_dataset(dataset, cfg, make_backends(cfg),
                                    corpus / "images")
        victim = corpus / "images" / "img-a1.refined.png"
        victim.unlink()
        fresh = make_backends(cfg)
        refine_dataset(dataset, cfg, fresh, corpus / "images",
                       resume_from=records)
        assert victim.exists()
        assert fresh.grounding.calls == 1  # only the one missing image


class TestProvenanceIO:
    def test_round_trip(self, corpus, cfg, tmp_path):
        dataset = load_dataset(corpus / "data.jsonl")
        _, records = refine_dataset(dataset, cfg, make_backends(cfg),
                                    corpus / "images")
        path = tmp_path / "prov.jsonl"
        write_provenance(records, path)
        again = read_provenance(path)
        assert [r.to_record() for r in again] == [r.to_record()
                                                  for r in records]

    def test_refined_uri_keeps_directory(self):
        item = ImageItem(image_id="x", uri="sub/dir/photo.png",
                         width=10, height=10)
        assert refined_uri(item) == "sub/dir/x.refined.png"
        flat = ImageItem(image_id="x", uri="photo.jpeg", width=10, height=10)
        assert refined_uri(flat) == "x.refined.jpeg"


class TestRatioHistogram:
    def test_hand_binned_example(self):
        records = [prov(f"i{k}", r) for k, r in
                   enumerate([0.1, 0.3, 0.5, 0.9, 1.0])]
        hist = ratio_histogram(records)
        assert hist.counts == [1, 1, 1, 0, 2]
        assert hist.total == 5

    def test_all_unchanged_top_bin(self):
        records = [prov(f"i{k}", 1.0, status="unchanged",
                        reason="no_detections") for k in range(4)]
        hist = ratio_histogram(records)
        assert hist.counts == [0, 0, 0, 0, 4]

    def test_boundary_is_right_closed(self):
        hist = ratio_histogram([prov("i1", 0.2)])
        assert hist.counts == [1, 0, 0, 0, 0]
        hist = ratio_histogram([prov("i2", 0.4)])
        assert hist.counts == [0, 1, 0, 0, 0]

    def test_cropped_only_population(self):
        records = [prov("i1", 0.3), prov("i2", 1.0, status="unchanged",
                                         reason="no_context")]
        hist = ratio_histogram(records, "cropped_only")
        assert hist.total == 1
        assert hist.counts == [0, 1, 0, 0, 0]

    def test_empty_flags_percentages(self):
        hist = ratio_histogram([])
        assert hist.counts == [0] * 5
        assert hist.percentages is None
        assert "--" in hist.format_table()

    def test_percentages_sum_to_100(self):
        records = [prov(f"i{k}", r) for k, r in
                   enumerate([0.15, 0.35, 0.55, 0.75, 0.95, 1.0, 0.05])]
        hist = ratio_histogram(records)
        assert sum(hist.percentages) == pytest.approx(100.0, abs=1e-9)
        assert sum(hist.counts) == hist.total == 7

    def test_machine_record(self):
        record = ratio_histogram([prov("i1", 0.5)]).to_record()
        assert record["total"] == 1
        assert [s["range"] for s in record["segments"]] == [
            "(0.0,0.2]", "(0.2,0.4]", "(0.4,0.6]", "(0.6,0.8]", "(0.8,1.0]"]
        json.dumps(record)  # machine-readable
