"""Command-line entry points: facade run / dataset / batch / serve."""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

import click

from .dataset import export_conversations, load_manifest, load_pairs, validate_manifest
from .service.batch import MODES, format_report, run_batch, write_report
from .service.runs import FAILED, PipelineConfig, RunService
from .service.store import RunStore


@click.group()
def main():
    """Facade renovation pipeline: sketch + brief in, plan / enhanced sketch /
    rendered image out."""


def _store_root(store: str | None) -> Path:
    if store:
        return Path(store)
    return Path(tempfile.mkdtemp(prefix="facade-store-"))


@main.command()
@click.option("--sketch", "sketch_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--brief", default="", help="Text description of the renovation intent.")
@click.option("--backend", default="stub", show_default=True,
              help="Guidance backend kind (stub or http).")
@click.option("--endpoint", default="", help="Endpoint URL for --backend http.")
@click.option("--auto-approve", is_flag=True,
              help="Skip the human gate and run through to RENDERED.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", envvar="FACADE_SEED", default=0, show_default=True, type=int)
@click.option("--store", envvar="FACADE_STORE", default=None,
              help="Run store directory (default: fresh temp dir).")
def run(sketch_path, brief, backend, endpoint, auto_approve, out_dir, seed, store):
    """Run the three-stage pipeline on one sketch."""
    guidance_cfg = {"kind": backend}
    if backend == "http":
        guidance_cfg["endpoint"] = endpoint
    config = PipelineConfig(guidance=guidance_cfg, seed=seed)
    service = RunService(RunStore(_store_root(store)))
    state = service.create_run(Path(sketch_path).read_bytes(), brief=brief, config=config)
    run_id = state.run_id
    click.echo(f"run {run_id} created")

    state = service.advance(run_id)
    click.echo(f"  -> {state.state}")
    state = service.advance(run_id)
    click.echo(f"  -> {state.state}")
    if state.state == FAILED:
        click.echo(f"run failed: {state.failure_cause}", err=True)
        sys.exit(1)

    if not auto_approve:
        click.echo("plan awaits approval (re-run with --auto-approve, or use the API "
                   "to edit and approve); artifacts so far written")
    else:
        service.approve(run_id)
        click.echo("  -> PLAN_APPROVED")
        for _ in range(2):
            state = service.advance(run_id)
            click.echo(f"  -> {state.state}")
            if state.state == FAILED:
                click.echo(f"run failed: {state.failure_cause}", err=True)
                sys.exit(1)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suffix = {"sketch": ".png", "detections": ".json", "plan": ".json",
              "enhanced": ".png", "enhanced_meta": ".json", "render": ".png",
              "render_meta": ".json"}
    for name in service.get(run_id).artifacts:
        (out / f"{name}{suffix[name]}").write_bytes(service.artifact(run_id, name))
    click.echo(f"artifacts written to {out}")


@main.group()
def dataset():
    """Build and validate the training corpora."""


@dataset.command("build")
@click.option("--pairs", "pairs_dir", required=True, type=click.Path(exists=True))
@click.option("--components", "components_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--match-threshold", default=0.5, show_default=True, type=float)
def dataset_build(pairs_dir, components_dir, out_dir, match_threshold):
    """Export pairs as two-turn conversations and validate the component manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = load_pairs(pairs_dir)
    count = export_conversations(pairs, out / "train.jsonl", match_threshold)
    click.echo(f"exported {count} conversation samples to {out / 'train.jsonl'}")

    manifest = load_manifest(components_dir)
    report = validate_manifest(manifest, components_dir)
    (out / "manifest_report.json").write_text(json.dumps(report.to_json(), indent=2))
    click.echo(f"manifest: counts={report.counts} "
               f"{'valid' if report.valid else f'{len(report.violations)} violation(s)'}")
    if not report.valid:
        for v in report.violations[:20]:
            click.echo(f"  - {v}", err=True)
        sys.exit(1)


@dataset.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--pairs", "n_pairs", default=100, show_default=True, type=int)
@click.option("--doors", default=107, show_default=True, type=int)
@click.option("--windows", default=164, show_default=True, type=int)
@click.option("--seed", envvar="FACADE_SEED", default=0, show_default=True, type=int)
def dataset_synth(out_dir, n_pairs, doors, windows, seed):
    """Generate a synthetic corpus in the build layout (for demos and tests)."""
    from .synthetic import write_component_corpus, write_pair_corpus

    out = Path(out_dir)
    write_pair_corpus(out / "pairs", n_pairs, seed)
    write_component_corpus(out / "components", doors, windows)
    click.echo(f"wrote {n_pairs} pairs and {doors + windows} components under {out}")


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--mode", required=True, type=click.Choice(MODES))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@click.option("--store", envvar="FACADE_STORE", default=None)
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--seed", envvar="FACADE_SEED", default=0, show_default=True, type=int)
def batch(corpus_dir, mode, out_dir, store, jobs, seed):
    """Run the stub pipeline over a sketch corpus with auto-approval."""
    config = PipelineConfig(seed=seed)
    report = run_batch(corpus_dir, mode, _store_root(store), config, jobs)
    click.echo(format_report(report))
    if out_dir:
        write_report(report, out_dir)
        click.echo(f"report written to {out_dir}")
    if report.failures:
        sys.exit(1)


@main.command()
@click.option("--port", default=8080, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", envvar="FACADE_STORE", required=True,
              help="Run store directory (persists across restarts).")
@click.option("--static", "static_dir", default=None, type=click.Path(exists=True),
              help="Optional built frontend to serve at /.")
def serve(port, host, store, static_dir):
    """Serve the HTTP API (and optionally the studio frontend)."""
    import uvicorn

    from .service.api import create_app

    app = create_app(RunService(RunStore(store)), static_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
