"""Operator command line: ingest, curate, study control, serving, one-off
grading, and analytics exports."""

from __future__ import annotations

import csv as csv_mod
import json
from pathlib import Path

import click

from . import __version__
from .analytics import (
    export_curves,
    export_outcomes,
    export_stats,
    import_outcomes,
    mann_whitney_u,
    time_curve,
    wilcoxon_signed_rank,
)
from .config import AppConfig
from .gateway import GatewayRequest, JUDGE
from .ingest import (
    curate_test_set,
    load_localize_dataset,
    load_report_dataset,
    read_localize_cases,
    read_report_cases,
    write_cases_jsonl,
)
from .localize import LocalizeSubmission, grade_case
from .report import (
    build_crimson_prompt,
    build_style_prompt,
    crimson_score,
    parse_crimson_response,
    parse_style_response,
    style_score,
)
from .study import EventLog, StudyEngine, replay


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Path to the JSON config file.")
@click.pass_context
def main(ctx, config_path):
    """Gamified radiology training platform."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = AppConfig.load(config_path)


@main.group()
def ingest():
    """Load raw dataset exports into canonical case files."""


@ingest.command("localize")
@click.option("--source", required=True, type=click.Path(exists=True))
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True), default=None)
@click.option("--units", type=click.Choice(["pixel", "normalized"]), default="normalized")
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def ingest_localize(ctx, source, taxonomy_path, units, out):
    cfg: AppConfig = ctx.obj["config"]
    if taxonomy_path:
        cfg.taxonomy = taxonomy_path
    taxonomy = cfg.load_taxonomy()
    cases, report = load_localize_dataset(source, taxonomy, units)
    write_cases_jsonl(cases, out)
    click.echo(json.dumps(report.to_dict(), indent=2))
    click.echo(f"wrote {len(cases)} cases to {out}")


@ingest.command("report")
@click.option("--source", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def ingest_report(source, out):
    cases, report = load_report_dataset(source)
    write_cases_jsonl(cases, out)
    click.echo(json.dumps(report.to_dict(), indent=2))
    click.echo(f"wrote {len(cases)} cases to {out}")


@main.command()
@click.option("--cases", "cases_path", required=True, type=click.Path(exists=True))
@click.option("--module", type=click.Choice(["Localize", "Report"]), default="Localize")
@click.option("--n", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--purpose", type=click.Choice(["pretest", "learning", "posttest"]),
              default="pretest")
@click.option("--out", required=True, type=click.Path())
def curate(cases_path, module, n, seed, purpose, out):
    """Select a difficulty-stratified case set."""
    cases = (read_localize_cases if module == "Localize" else read_report_cases)(cases_path)
    curated = curate_test_set(cases, n, seed, purpose, module)
    with open(out, "w", encoding="utf-8") as f:
        json.dump(curated.to_dict(), f, indent=2)
    click.echo(f"wrote {len(curated.case_ids)}-case {purpose} set to {out}")


@main.command("grade-localize")
@click.option("--cases", "cases_path", required=True, type=click.Path(exists=True))
@click.option("--submissions", required=True, type=click.Path(exists=True))
@click.option("--threshold", type=float, default=0.25, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def grade_localize(ctx, cases_path, submissions, threshold, out):
    """Grade a JSONL file of Localize submissions against case ground truth."""
    cfg: AppConfig = ctx.obj["config"]
    taxonomy = cfg.load_taxonomy()
    cases = {c.case_id: c for c in read_localize_cases(cases_path)}
    n = 0
    with open(submissions, encoding="utf-8") as fin, open(out, "w", encoding="utf-8") as fout:
        for line in fin:
            if not line.strip():
                continue
            sub = LocalizeSubmission.from_dict(json.loads(line))
            if sub.case_id not in cases:
                raise click.ClickException(f"unknown case {sub.case_id}")
            result = grade_case(sub, cases[sub.case_id], taxonomy, threshold)
            fout.write(json.dumps(result.to_dict()) + "\n")
            n += 1
    click.echo(f"graded {n} submissions -> {out}")


@main.command("score-report")
@click.option("--case", "case_id", required=True)
@click.option("--cases", "cases_path", required=True, type=click.Path(exists=True))
@click.option("--candidate", required=True, type=click.Path(exists=True))
@click.option("--offline-fixture", type=click.Path(exists=True), default=None)
@click.pass_context
def score_report(ctx, case_id, cases_path, candidate, offline_fixture):
    """Judge one candidate report against a case's reference findings."""
    cfg: AppConfig = ctx.obj["config"]
    if offline_fixture:
        cfg.gateway_mode = "stub"
        cfg.fixture_file = offline_fixture
    gateway = cfg.build_gateway()
    cases = {c.case_id: c for c in read_report_cases(cases_path)}
    if case_id not in cases:
        raise click.ClickException(f"unknown case {case_id}")
    case = cases[case_id]
    candidate_text = Path(candidate).read_text(encoding="utf-8")
    prompt = build_crimson_prompt(
        case.age_years, case.indication, case.reference_findings, candidate_text
    )
    resp = gateway.complete(GatewayRequest(role=JUDGE, prompt=prompt, case_id=case_id))
    assessment = parse_crimson_response(resp.text)
    style_resp = gateway.complete(GatewayRequest(
        role=JUDGE, prompt=build_style_prompt(candidate_text), case_id=f"{case_id}#style"
    ))
    try:
        style_percent = style_score(parse_style_response(style_resp.text))
    except Exception:
        style_percent = None
    click.echo(json.dumps({
        "case_id": case_id,
        "crimson_percent": crimson_score(assessment),
        "style_percent": style_percent,
        "assessment": assessment.to_dict(),
    }, indent=2))


@main.command()
@click.option("--outcomes", "outcomes_path", required=True, type=click.Path(exists=True))
@click.option("--test", "test_name", type=click.Choice(["mwu", "wilcoxon"]), required=True)
@click.option("--sided", type=click.Choice(["one", "two"]), default="two")
@click.option("--module", "module_filter", default=None)
@click.option("--out", type=click.Path(), default=None)
def stats(outcomes_path, test_name, sided, module_filter, out):
    """Run the study's significance test over an exported outcomes table.

    mwu compares Gamified vs Traditional improvement; wilcoxon compares
    pre vs post within the Gamified group.
    """
    rows = import_outcomes(outcomes_path)
    if module_filter:
        rows = [r for r in rows if r.module == module_filter]
    if not rows:
        raise click.ClickException("no outcome rows after filtering")
    results = {}
    if test_name == "mwu":
        gam = [r.post_score - r.pre_score for r in rows if r.group == "Gamified"]
        trad = [r.post_score - r.pre_score for r in rows if r.group == "Traditional"]
        results["gamified_vs_traditional_delta"] = mann_whitney_u(gam, trad, sided)
    else:
        gam = [r for r in rows if r.group == "Gamified"]
        results["pre_vs_post_gamified"] = wilcoxon_signed_rank(
            [r.pre_score for r in gam], [r.post_score for r in gam], sided
        )
    for name, res in results.items():
        click.echo(f"{name}: statistic={res.statistic} p={res.p_value} ({res.method})")
    if out:
        export_stats(results, out, format=Path(out).suffix.lstrip(".") or "csv")


@main.command()
@click.option("--times", "times_path", required=True, type=click.Path(exists=True),
              help="JSON file: list of per-session learning time series.")
@click.option("--bin", "bin_size", type=int, default=25, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def curves(times_path, bin_size, out):
    """Time-per-case curve with SEM over learning cases."""
    with open(times_path, encoding="utf-8") as f:
        series = json.load(f)
    curve = time_curve(series, bin_size)
    click.echo(json.dumps(curve, indent=2))
    if out:
        export_curves(curve, out, format=Path(out).suffix.lstrip(".") or "csv")


def _build_engine(cfg: AppConfig, require_init: bool = False) -> StudyEngine:
    if not cfg.localize_cases or not cfg.report_cases:
        raise click.ClickException(
            "config must set localize_cases and report_cases (run ingest first)"
        )
    localize_cases = read_localize_cases(cfg.localize_cases)
    report_cases = read_report_cases(cfg.report_cases)
    log = EventLog(cfg.event_log)
    if log.events:
        engine = replay(cfg.study_config(), cfg.load_taxonomy(),
                        localize_cases, report_cases, log.events)
        engine.gateway = cfg.build_gateway()
        engine.log = log
        return engine
    if require_init:
        raise click.ClickException("study not initialized (no events in the log)")
    return StudyEngine(
        cfg.study_config(), cfg.load_taxonomy(), localize_cases, report_cases,
        gateway=cfg.build_gateway(), event_log=log,
    )


@main.group()
def study():
    """Initialize, inspect, and export the crossover study."""


@study.command("init")
@click.option("--participants", "participants_path", required=True,
              type=click.Path(exists=True), help="CSV with a participant_id column.")
@click.option("--seed", required=True, type=int)
@click.pass_context
def study_init(ctx, participants_path, seed):
    cfg: AppConfig = ctx.obj["config"]
    with open(participants_path, newline="", encoding="utf-8") as f:
        ids = [row["participant_id"] for row in csv_mod.DictReader(f)]
    engine = _build_engine(cfg)
    assignments = engine.init_study(ids, seed)
    for a in assignments:
        click.echo(f"{a.participant_id}: Localize={a.localize_group} Report={a.report_group}")


@study.command("status")
@click.pass_context
def study_status(ctx):
    engine = _build_engine(ctx.obj["config"], require_init=True)
    for (pid, module), s in sorted(engine.sessions.items()):
        click.echo(
            f"{pid}/{module}: group={s.group} phase={s.phase} "
            f"started={s.phase_started} completed={len(s.records)}"
        )


@study.command("export")
@click.option("--out", required=True, type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.pass_context
def study_export(ctx, out, fmt):
    engine = _build_engine(ctx.obj["config"], require_init=True)
    rows = engine.outcomes()
    export_outcomes(rows, out, format=fmt)
    click.echo(f"wrote {len(rows)} outcome rows to {out}")


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx, host, port):
    """Start the HTTP service."""
    import uvicorn

    from .api import create_app

    cfg: AppConfig = ctx.obj["config"]
    engine = _build_engine(cfg)
    app = create_app(engine, images_dir=cfg.images_dir)
    bind_host = host or cfg.host
    bind_port = port or cfg.port
    click.echo(f"serving on http://{bind_host}:{bind_port}")
    uvicorn.run(app, host=bind_host, port=bind_port)


if __name__ == "__main__":
    main()
