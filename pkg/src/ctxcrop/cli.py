"""Command-line interface.

Subcommands: ``refine`` (batch image refinement over a dataset), ``stats``
(area-ratio histogram from a provenance log), ``dmos`` (assessment report
from a ratings file), ``context`` (debug view of one image's context
window), and ``serve`` (the rating/refinement HTTP service).

Exit codes: 0 success, 2 validation failure, 3 backends unreachable with
fixtures disabled.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import httpx

from . import assessment
from .context import UnknownImageError, extract_context
from .dialogue import RecordError, dump_dataset, load_dataset
from .keywords import DEFAULT_MAX_KEYWORDS, LexiconExtractor, load_lexicon
from .pipeline import (Backends, PipelineConfig, ratio_histogram,
                       read_provenance, refine_dataset, write_provenance)

log = logging.getLogger(__name__)

EXIT_VALIDATION = 2
EXIT_BACKEND_UNREACHABLE = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _probe(url: str) -> bool:
    """A backend is reachable when its base URL answers anything at all."""
    try:
        httpx.get(url, timeout=5.0)
        return True
    except httpx.HTTPError:
        return False


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Context-driven image refinement and subjective assessment tools."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")


def _backend_options(fn):
    fn = click.option("--kw-endpoint", default=None,
                      help="Text-generation backend base URL.")(fn)
    fn = click.option("--ground-endpoint", default=None,
                      help="Grounding backend base URL.")(fn)
    fn = click.option("--fixtures", "fixtures_dir", default=None,
                      type=click.Path(exists=True, file_okay=False),
                      help="Directory of canned backend responses.")(fn)
    fn = click.option("--kw-timeout-ms", default=30_000, show_default=True)(fn)
    fn = click.option("--kw-retries", default=2, show_default=True)(fn)
    fn = click.option("--lexicon", "lexicon_path", default=None,
                      type=click.Path(exists=True, dir_okay=False),
                      help="Fallback lexicon file, one term per line "
                           "(bundled seed list otherwise).")(fn)
    return fn


def _make_config(**kwargs) -> PipelineConfig:
    try:
        return PipelineConfig(**kwargs)
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))


def _make_backends(cfg: PipelineConfig, lexicon_path=None) -> Backends:
    fallback = LexiconExtractor(load_lexicon(lexicon_path)
                                if lexicon_path else None)
    if not cfg.fixtures_dir:
        if not cfg.kw_endpoint or not cfg.ground_endpoint:
            _fail(EXIT_VALIDATION,
                  "need --fixtures or both --kw-endpoint and "
                  "--ground-endpoint")
        for url in (cfg.kw_endpoint, cfg.ground_endpoint):
            if not _probe(url):
                _fail(EXIT_BACKEND_UNREACHABLE,
                      f"backend {url} unreachable and fixtures disabled")
    try:
        return Backends.from_config(cfg, fallback=fallback)
    except (ValueError, OSError) as exc:
        _fail(EXIT_VALIDATION, str(exc))


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--images", "images_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Root directory image URIs resolve against.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--provenance", "prov_path", required=True, type=click.Path())
@click.option("--box-threshold", default=0.35, show_default=True)
@click.option("--text-threshold", default=0.25, show_default=True)
@click.option("--context-turns", default=3, show_default=True)
@click.option("--max-keywords", default=DEFAULT_MAX_KEYWORDS,
              show_default=True)
@click.option("--max-in-flight", default=4, show_default=True)
@click.option("--target-language", default="English", show_default=True)
@click.option("--resume/--no-resume", default=True, show_default=True,
              help="Reuse provenance records with a matching config hash.")
@_backend_options
def refine(input_path, images_dir, out_path, prov_path, box_threshold,
           text_threshold, context_turns, max_keywords, max_in_flight,
           target_language, resume, kw_endpoint, ground_endpoint,
           fixtures_dir, kw_timeout_ms, kw_retries, lexicon_path):
    """Refine every image in a dataset, writing the updated dataset and a
    provenance log."""
    cfg = _make_config(
        max_keywords=max_keywords, context_turns=context_turns,
        box_threshold=box_threshold, text_threshold=text_threshold,
        max_in_flight=max_in_flight, target_language=target_language,
        kw_endpoint=kw_endpoint, ground_endpoint=ground_endpoint,
        fixtures_dir=fixtures_dir, kw_timeout_ms=kw_timeout_ms,
        kw_retries=kw_retries)
    backends = _make_backends(cfg, lexicon_path)
    try:
        dataset = load_dataset(input_path)
    except RecordError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    resume_from = ()
    if resume and Path(prov_path).exists():
        resume_from = read_provenance(prov_path)
        log.info("resuming from %d provenance records", len(resume_from))
    refined, records = refine_dataset(dataset, cfg, backends, images_dir,
                                      resume_from=resume_from)
    dump_dataset(refined, out_path)
    write_provenance(records, prov_path)
    cropped = sum(1 for r in records if r.result.status == "cropped")
    click.echo(f"refined {len(records)} images ({cropped} cropped, "
               f"{len(records) - cropped} unchanged) -> {out_path}")


@main.command()
@click.option("--provenance", "prov_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--population", type=click.Choice(["all", "cropped"]),
              default="all", show_default=True)
def stats(prov_path, population):
    """Print the area-ratio histogram for a provenance log."""
    records = read_provenance(prov_path)
    pop = "all_images" if population == "all" else "cropped_only"
    hist = ratio_histogram(records, pop)
    click.echo(hist.format_table())
    click.echo(json.dumps(hist.to_record(), separators=(",", ":")))


@main.command()
@click.option("--ratings", "ratings_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--provenance", "prov_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--cutoff", default=assessment.DEFAULT_CROP_CUTOFF,
              show_default=True,
              help="Area-ratio bound for the cropped-image level "
                   "(strictly less than).")
@click.option("--test", "method", type=click.Choice(["t", "wilcoxon"]),
              default="t", show_default=True)
def dmos(ratings_path, prov_path, cutoff, method):
    """Compute DMOS/MOS metrics from a ratings file."""
    try:
        rating_set = assessment.load_ratings(ratings_path)
    except assessment.RatingValidationError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    prov = read_provenance(prov_path) if prov_path else None
    test_method = "t_test" if method == "t" else "wilcoxon"
    try:
        report = assessment.metric_report(rating_set, prov=prov,
                                          cutoff=cutoff, method=test_method)
    except (assessment.IncompleteRatingsError,
            assessment.MissingProvenanceError, ValueError) as exc:
        _fail(EXIT_VALIDATION, str(exc))

    def fmt(summary):
        if summary is None:
            return "      --"
        p = ("p=--" if summary.p_value is None
             else f"p={summary.p_value:.3g}")
        flag = " [degenerate variance]" if summary.degenerate else ""
        return f"{summary.mean:+.3f} ({p}, n={summary.n}){flag}"

    click.echo(f"averaged DMOS ({test_method}, cutoff {cutoff:g}):")
    click.echo(f"  session-level        {fmt(report.session_summary)}")
    click.echo(f"  image-level          {fmt(report.image_summary)}")
    click.echo(f"  cropped-image-level  {fmt(report.cropped_summary)}")
    click.echo(f"MOS {report.mos_treatment:.3f} / "
               f"MOS_ref {report.mos_reference:.3f} (out of 4)")
    click.echo(json.dumps(report.to_record(), separators=(",", ":")))


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--session", "session_id", required=True)
@click.option("--image", "image_id", required=True)
@click.option("--max-turns", default=3, show_default=True)
def context(input_path, session_id, image_id, max_turns):
    """Show the context window the pipeline would use for one image."""
    try:
        dataset = load_dataset(input_path)
    except RecordError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    session = next((s for s in dataset.sessions
                    if s.session_id == session_id), None)
    if session is None:
        _fail(EXIT_VALIDATION, f"unknown session {session_id!r}")
    try:
        window = extract_context(session, image_id, max_turns)
    except UnknownImageError as exc:
        _fail(EXIT_VALIDATION, str(exc.args[0]))
    click.echo(f"image {image_id} in session {session_id}: "
               f"{window.turns_used} turn(s) of context")
    for role, text in window.entries:
        click.echo(f'  {role}: "{text}"')


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="Seed for the deterministic A/B label order.")
@click.option("--ratings-store", "store_path", required=True,
              type=click.Path())
@click.option("--tasks", "tasks_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--evaluators", "evaluators_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON map of bearer token to evaluator index.")
@click.option("--provenance", "prov_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--static", "static_dir", default=None,
              type=click.Path(file_okay=False),
              help="Console assets to serve at /.")
@click.option("--images", "images_dir", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="Image root served at /images for the console.")
@click.option("--box-threshold", default=0.35, show_default=True)
@click.option("--text-threshold", default=0.25, show_default=True)
@_backend_options
def serve(port, host, seed, store_path, tasks_path, evaluators_path,
          prov_path, static_dir, images_dir, box_threshold, text_threshold,
          kw_endpoint, ground_endpoint, fixtures_dir, kw_timeout_ms,
          kw_retries, lexicon_path):
    """Run the rating console and refinement service."""
    import uvicorn

    from .pipeline import read_provenance as _read_prov
    from .service import RatingsStore, ServiceState, create_app, \
        load_evaluators, load_tasks

    cfg = _make_config(
        box_threshold=box_threshold, text_threshold=text_threshold,
        kw_endpoint=kw_endpoint, ground_endpoint=ground_endpoint,
        fixtures_dir=fixtures_dir, kw_timeout_ms=kw_timeout_ms,
        kw_retries=kw_retries)
    backends = None
    if cfg.fixtures_dir or (cfg.kw_endpoint and cfg.ground_endpoint):
        backends = _make_backends(cfg, lexicon_path)
    state = ServiceState(
        seed=seed,
        tasks=load_tasks(tasks_path),
        evaluators=load_evaluators(evaluators_path),
        store=RatingsStore(store_path),
        cfg=cfg,
        backends=backends,
        provenance=_read_prov(prov_path) if prov_path else None,
    )
    app = create_app(state, static_dir=static_dir, images_dir=images_dir)
    click.echo(f"serving {len(state.tasks)} tasks on {host}:{port} "
               f"(seed {seed})")
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
