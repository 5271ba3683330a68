"""Command-line front door.

Every server-backed subcommand goes through the same HTTP API the web UI
uses: against a remote service with --server, or against an in-process
application over the local data directory otherwise. Offline subcommands
(ingest, sample, agree, derive, simulate) work directly on files.

Configuration comes from an optional JSON file plus flags; the only
environment variable honored is HIERANNO_DATA_DIR (the store path).
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import click
import httpx

from . import agreement, corpus, sampling, scheme, simulate, store
from .errors import HierannoError

DATA_DIR_ENV = "HIERANNO_DATA_DIR"


def _client(ctx) -> httpx.Client:
    server = ctx.obj.get("server")
    if server:
        return httpx.Client(base_url=server, timeout=60.0)
    from fastapi.testclient import TestClient  # in-process transport

    from .service import create_app

    return TestClient(create_app(ctx.obj["data_dir"]))


def _fail_on_error(response: httpx.Response) -> dict:
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise click.ClickException(f"{response.status_code}: {detail}")
    return response.json()


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON config file supplying flag defaults.")
@click.option("--data-dir", type=click.Path(file_okay=False), default=None,
              help="Local data directory (default: $HIERANNO_DATA_DIR or ./data).")
@click.option("--server", default=None, help="Base URL of a running service; "
              "when set, commands go over HTTP instead of the local data dir.")
@click.pass_context
def main(ctx, config_path, data_dir, server):
    """Multi-level hate-speech annotation platform."""
    config = {}
    if config_path:
        config = json.loads(Path(config_path).read_text(encoding="utf-8"))
    ctx.obj = {
        "config": config,
        "server": server or config.get("server"),
        "data_dir": data_dir
        or os.environ.get(DATA_DIR_ENV)
        or config.get("data_dir")
        or "data",
    }


@main.command()
@click.argument("input_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl")
@click.option("--salt", required=True, help="Anonymization salt (any non-empty string).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@click.option("--subcorpus", "subcorpus_path", type=click.Path(exists=True), default=None,
              help="SubcorpusSpec JSON; filters the ingested comments.")
def ingest(input_file, fmt, salt, out, report_path, subcorpus_path):
    """Ingest raw comments, anonymize them, write comments JSONL."""
    with open(input_file, "r", encoding="utf-8") as handle:
        raws, report = corpus.ingest(handle, format=fmt)
    comments = corpus.anonymize_all(raws, salt.encode("utf-8"), report.usernames)
    if subcorpus_path:
        spec_data = json.loads(Path(subcorpus_path).read_text(encoding="utf-8"))
        spec = corpus.SubcorpusSpec(
            name=spec_data["name"],
            keywords=tuple(spec_data["keywords"]),
            word_budget_per_keyword=int(spec_data["word_budget_per_keyword"]),
            fold_diacritics=bool(spec_data.get("fold_diacritics", True)),
        )
        comments = corpus.keyword_filter(comments, spec)
    corpus.write_comments_jsonl(comments, out)
    stats = corpus.corpus_stats(comments)
    if report_path:
        payload = {"ingest": report.to_dict(), "stats": stats.to_dict()}
        Path(report_path).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    click.echo(
        f"accepted={report.accepted} duplicates={report.duplicates} "
        f"malformed={report.malformed} written={stats.comment_count} "
        f"words={stats.word_count}"
    )


def _load_strata(path: str, take: int | None) -> list[sampling.StratumSpec]:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        data = json.loads(text)
        return [
            sampling.StratumSpec(
                label=str(s["label"]),
                member_ids=frozenset(str(i) for i in s["member_ids"]),
                take=int(s.get("take", take or 0)),
            )
            for s in data
        ]
    members: dict[str, set[str]] = {}
    for row in csv.DictReader(text.splitlines()):
        members.setdefault(row["label"], set()).add(row["comment_id"])
    if take is None:
        raise click.ClickException("--take is required with CSV strata")
    return [
        sampling.StratumSpec(label, frozenset(ids), take)
        for label, ids in sorted(members.items())
    ]


@main.command()
@click.option("--strata", "strata_path", required=True, type=click.Path(exists=True),
              help="Strata as JSON [{label, member_ids, take}] or CSV (label,comment_id).")
@click.option("--seed", type=int, required=True)
@click.option("--take", type=int, default=None, help="Items per stratum (CSV input).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def sample(strata_path, seed, take, out):
    """Stratified sample of pilot items; writes a sample manifest."""
    strata = _load_strata(strata_path, take)
    manifest = sampling.stratified_sample(strata, seed)
    Path(out).write_text(manifest.to_json() + "\n", encoding="utf-8")
    click.echo(f"selected {len(manifest.selected_ids())} items into {out}")


@main.group()
def experiment():
    """Experiment management."""


@experiment.command("create")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="ExperimentConfig JSON.")
@click.option("--comments", "comments_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--registry", "registry_path", type=click.Path(exists=True), default=None,
              help="Protected-group registry JSON (default jurisdiction registry if omitted).")
@click.pass_context
def experiment_create(ctx, config_path, comments_path, manifest_path, registry_path):
    """Create an experiment from config + comments + manifest."""
    comments = [c.to_dict() for c in corpus.read_comments_jsonl(comments_path)]
    payload = {
        "config": json.loads(Path(config_path).read_text(encoding="utf-8")),
        "comments": comments,
        "manifest": json.loads(Path(manifest_path).read_text(encoding="utf-8")),
        "registry": (
            json.loads(Path(registry_path).read_text(encoding="utf-8"))
            if registry_path
            else None
        ),
    }
    with _client(ctx) as client:
        result = _fail_on_error(client.post("/experiments", json=payload))
    click.echo(json.dumps(result, sort_keys=True))


@main.command()
@click.option("--experiment", "experiment_id", required=True)
@click.option("--profiles", "profiles_path", required=True, type=click.Path(exists=True),
              help="JSONL of annotator profiles {annotator_id, gender, age_band, consent}.")
@click.pass_context
def assign(ctx, experiment_id, profiles_path):
    """Register annotators and print their arm assignments."""
    with _client(ctx) as client:
        with open(profiles_path, "r", encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                profile = json.loads(line)
                profile["experiment_id"] = experiment_id
                result = _fail_on_error(client.post("/annotators", json=profile))
                click.echo(f"{result['annotator_id']}\t{result['arm']}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.pass_context
def serve(ctx, host, port):
    """Run the annotation service over the local data directory."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(ctx.obj["data_dir"]), host=host, port=port)


@main.command()
@click.option("--experiment", "experiment_id", required=True)
@click.option("--force", is_flag=True, help="Report even with pending annotators.")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the full report bundle as JSON.")
@click.pass_context
def report(ctx, experiment_id, force, json_path):
    """Print the agreement report (metric rows x scheme columns)."""
    with _client(ctx) as client:
        result = _fail_on_error(
            client.get(f"/reports/{experiment_id}", params={"force": force})
        )
    if json_path:
        Path(json_path).write_text(
            json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    click.echo(result["table"], nl=False)


@main.command()
@click.option("--experiment", "experiment_id", required=True)
@click.option("--fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def export(ctx, experiment_id, fmt, out_dir):
    """Download the dataset export (events, derived labels, manifest)."""
    with _client(ctx) as client:
        result = _fail_on_error(
            client.get("/export", params={"experiment": experiment_id, "fmt": fmt})
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, content in result["files"].items():
        (out / name).write_text(content, encoding="utf-8")
    click.echo(f"wrote {len(result['files'])} files to {out}")


@main.command()
@click.option("--labels", "labels_path", type=click.Path(exists=True), default=None,
              help="CSV with columns item,rater,label.")
@click.option("--matrix", "matrix_path", type=click.Path(exists=True), default=None,
              help='JSON {"categories": [...], "counts": [[...], ...]}.')
@click.option("--policy", type=click.Choice(["strict", "drop_incomplete"]),
              default="strict")
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
def agree(labels_path, matrix_path, policy, as_json):
    """Offline agreement metrics on a labels CSV or counts matrix."""
    if (labels_path is None) == (matrix_path is None):
        raise click.ClickException("give exactly one of --labels or --matrix")
    try:
        if labels_path:
            labels: dict[tuple[str, str], str] = {}
            with open(labels_path, "r", encoding="utf-8", newline="") as handle:
                for row in csv.DictReader(handle):
                    labels[(row["item"], row["rater"])] = row["label"]
            built = agreement.build_matrix(labels, agreement.MatrixPolicy(policy))
            matrix = built.matrix
            if built.excluded_items:
                click.echo(f"excluded items: {', '.join(built.excluded_items)}", err=True)
        else:
            import numpy as np

            data = json.loads(Path(matrix_path).read_text(encoding="utf-8"))
            counts = np.asarray(data["counts"], dtype=np.int64)
            matrix = agreement.RatingMatrix(
                items=tuple(str(i) for i in range(counts.shape[0])),
                categories=tuple(str(c) for c in data["categories"]),
                counts=counts,
                raters_per_item=int(counts[0].sum()),
            )
        result = agreement.agreement_report(matrix)
    except HierannoError as exc:
        raise click.ClickException(str(exc))
    if as_json:
        click.echo(result.to_json())
    else:
        click.echo(agreement.render_table({"labels": result}), nl=False)


@main.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True),
              help="AnnotationRecord JSONL.")
@click.option("--registry", "registry_path", type=click.Path(exists=True), default=None)
@click.option("--threshold", type=float, default=2.0 / 3.0,
              help="Conscious-discrimination agreement cut-off.")
@click.option("--tie-break", type=click.Choice(["NotHateSpeech", "Escalate"]),
              default="Escalate")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def derive(records_path, registry_path, threshold, tie_break, out_path):
    """Offline binary/severity derivation over a records file."""
    registry = (
        scheme.ProtectedGroupRegistry.from_json(
            Path(registry_path).read_text(encoding="utf-8")
        )
        if registry_path
        else scheme.default_registry()
    )
    records = []
    with open(records_path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(scheme.AnnotationRecord.from_dict(json.loads(line)))
    unresolved = scheme.unresolved_groups(records, registry)
    if unresolved:
        raise click.ClickException(
            "group names not in registry (curate first): " + ", ".join(unresolved)
        )
    rows = []
    by_comment: dict[str, list[scheme.AnnotationRecord]] = {}
    try:
        for record in records:
            rows.append(
                {
                    "comment_id": record.comment_id,
                    "annotator_id": record.annotator_id,
                    "binary": scheme.derive_binary(record, registry).value,
                    "cortese": scheme.derive_cortese(record).value,
                }
            )
            by_comment.setdefault(record.comment_id, []).append(record)
        for comment_id, group in sorted(by_comment.items()):
            row = {
                "comment_id": comment_id,
                "aggregate": scheme.aggregate_binary(
                    group, registry, scheme.TieBreak(tie_break)
                ).value,
            }
            if len(group) >= 2:
                row["discrimination_refinement"] = scheme.classify_conscious(
                    group, threshold
                ).value
            rows.append(row)
    except HierannoError as exc:
        raise click.ClickException(str(exc))
    output = "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
    if out_path:
        Path(out_path).write_text(output, encoding="utf-8")
        click.echo(f"wrote {len(rows)} rows to {out_path}")
    else:
        click.echo(output, nl=False)


@main.command("simulate")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Fresh directory for the simulated pilot's data.")
@click.option("--seed", type=int, default=2020)
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None)
def simulate_cmd(out_dir, seed, json_path):
    """Run the seeded synthetic two-arm pilot end to end."""
    bundle = simulate.simulate_pilot(out_dir, seed=seed)
    if json_path:
        Path(json_path).write_text(
            json.dumps(bundle, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    click.echo(bundle["table"], nl=False)


if __name__ == "__main__":
    main()
