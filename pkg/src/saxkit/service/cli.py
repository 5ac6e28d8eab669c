"""Command-line driver for the explanation pipeline.

Verbs move a workspace through the stages: simulate, ingest, discover, enrich,
causal, xai, prompt, ask, pipeline, serve.  Failures print one machine-readable
JSON object ``{stage, code, message, details}`` on stderr and exit nonzero.
"""

from __future__ import annotations

import json
import sys
import warnings
from pathlib import Path

import click

from .. import discovery, xai
from ..causal import CausalConfig
from ..errors import SaxError
from ..promptsynth import IngredientSelection, LlmConfig
from . import pipeline as stages
from .simulator import parking_scenario
from .workspace import Workspace


def _fail(stage: str, exc: Exception) -> None:
    if isinstance(exc, stages.StageError):
        payload = exc.payload()
    elif isinstance(exc, SaxError):
        payload = {"stage": stage, "code": exc.code, "message": str(exc), "details": {}}
    else:
        payload = {"stage": stage, "code": "error", "message": str(exc), "details": {}}
    click.echo(json.dumps(payload), err=True)
    sys.exit(1)


def _emit(ctx, payload: dict) -> None:
    if ctx.obj["format"] == "json":
        click.echo(json.dumps(payload, indent=1, sort_keys=True))
    else:
        for key, value in payload.items():
            click.echo(f"{key}: {value}")


def _selection(text: str) -> IngredientSelection:
    chosen = {part.strip() for part in text.split(",") if part.strip()}
    unknown = chosen - {"process", "causal", "xai"}
    if unknown:
        raise click.BadParameter(f"unknown view(s): {', '.join(sorted(unknown))}")
    return IngredientSelection(process="process" in chosen, causal="causal" in chosen,
                               xai="xai" in chosen)


def _split(text: str | None) -> tuple[str, ...] | None:
    if not text:
        return None
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _condition(text: str) -> xai.ConditionSpec:
    if text == "case_duration":
        return xai.ConditionSpec(target="case_duration")
    if text.startswith("attr:"):
        return xai.ConditionSpec(target="case_attribute", key=text[len("attr:"):])
    if text.startswith("activity:"):
        return xai.ConditionSpec(target="activity_duration", key=text[len("activity:"):])
    raise click.BadParameter(
        "condition must be 'case_duration', 'attr:<key>', or 'activity:<name>'"
    )


@click.group()
@click.option("--workspace", "-w", default=".", show_default=True,
              type=click.Path(file_okay=False), help="Workspace directory.")
@click.option("--seed", default=17, show_default=True, type=int)
@click.option("--format", "output_format", default="text",
              type=click.Choice(["text", "json"]), show_default=True)
@click.pass_context
def main(ctx, workspace, seed, output_format):
    """Derive process knowledge views from event logs and ask an LLM to explain them."""
    ctx.ensure_object(dict)
    ctx.obj["workspace"] = Workspace(workspace).init()
    ctx.obj["seed"] = seed
    ctx.obj["format"] = output_format
    warnings.showwarning = lambda message, *args, **kwargs: click.echo(
        f"warning: {message}", err=True)


@main.command()
@click.option("--scenario", default="parking", type=click.Choice(["parking"]), show_default=True)
@click.pass_context
def simulate(ctx, scenario):
    """Generate a scenario log into the workspace."""
    try:
        path = stages.simulate_stage(ctx.obj["workspace"], parking_scenario(ctx.obj["seed"]),
                                     seed=ctx.obj["seed"])
    except Exception as exc:
        _fail("simulate", exc)
    _emit(ctx, {"artifact": path})


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False),
              help="Log file to ingest; defaults to the workspace's simulated log.")
@click.option("--log-format", "fmt", default="csv", type=click.Choice(["csv", "xes"]),
              show_default=True)
@click.option("--delimiter", default=",", show_default=True)
@click.pass_context
def ingest(ctx, log_path, fmt, delimiter):
    """Parse, validate, and normalize a log; build the graph's base layer."""
    try:
        source = Path(log_path).read_bytes() if log_path else None
        summary = stages.ingest_stage(ctx.obj["workspace"], source=source, fmt=fmt,
                                      delimiter=delimiter)
    except Exception as exc:
        _fail("ingest", exc)
    _emit(ctx, summary)


@main.command()
@click.option("--freq-threshold", default=0, show_default=True, type=int)
@click.option("--dep-threshold", default=0.0, show_default=True, type=float)
@click.pass_context
def discover(ctx, freq_threshold, dep_threshold):
    """Mine the frequency-annotated flows-to view."""
    try:
        cfg = discovery.DiscoveryConfig(edge_frequency_threshold=freq_threshold,
                                        dependency_threshold=dep_threshold)
        path = stages.discover_stage(ctx.obj["workspace"], cfg)
    except Exception as exc:
        _fail("discover", exc)
    _emit(ctx, {"artifact": path})


@main.command()
@click.option("--rules", "rules_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def enrich(ctx, rules_path):
    """Apply situational rules to the normalized log."""
    try:
        summary = stages.enrich_stage(ctx.obj["workspace"],
                                      Path(rules_path).read_text(encoding="utf-8"))
    except Exception as exc:
        _fail("enrich", exc)
    _emit(ctx, summary)


@main.command()
@click.option("--activities", help="Comma-separated explicit variant; default most frequent.")
@click.option("--prune-threshold", default=0.05, show_default=True, type=float)
@click.option("--no-temporal", is_flag=True, help="Disable the temporal-precedence filter.")
@click.pass_context
def causal(ctx, activities, prune_threshold, no_temporal):
    """Discover causal execution dependencies from activity timings."""
    try:
        variant = _split(activities) or "most_frequent"
        cfg = CausalConfig(coefficient_prune_threshold=prune_threshold,
                           respect_temporal_precedence=not no_temporal,
                           variant_selection=variant, seed=ctx.obj["seed"])
        path = stages.causal_stage(ctx.obj["workspace"], cfg)
    except Exception as exc:
        _fail("causal", exc)
    _emit(ctx, {"artifact": path})


@main.command("xai")
@click.option("--condition", default="case_duration", show_default=True,
              help="'case_duration', 'attr:<key>', or 'activity:<name>'.")
@click.option("--activities", help="Restrict rows to cases traversing these activities.")
@click.option("--features", help="Comma-separated whitelist of feature names.")
@click.option("--no-timing-features", is_flag=True,
              help="Skip synthesized per-activity service-time features.")
@click.option("--repeats", default=10, show_default=True, type=int)
@click.pass_context
def xai_cmd(ctx, condition, activities, features, no_timing_features, repeats):
    """Train the surrogate and compute activity-segmented feature importance."""
    try:
        path = stages.xai_stage(
            ctx.obj["workspace"], _condition(condition),
            activities=_split(activities), feature_names=_split(features),
            include_timing=not no_timing_features,
            seed=ctx.obj["seed"], n_repeats=repeats,
        )
    except Exception as exc:
        _fail("xai", exc)
    _emit(ctx, {"artifact": path})


@main.command()
@click.option("--select", default="process", show_default=True,
              help="Comma-separated subset of process,causal,xai.")
@click.option("--question", required=True)
@click.option("--brevity", is_flag=True, help="Append the 2-3 sentence instruction.")
@click.pass_context
def prompt(ctx, select, question, brevity):
    """Render the blended prompt from the produced views."""
    try:
        bundle = stages.prompt_stage(ctx.obj["workspace"], _selection(select), question,
                                     brevity=brevity)
    except Exception as exc:
        _fail("prompt", exc)
    _emit(ctx, {"artifact": "prompts/prompt.txt", "digests": bundle.ingredient_digests})


@main.command()
@click.option("--select", default="process", show_default=True)
@click.option("--question", required=True)
@click.option("--model", default="gpt-4", show_default=True)
@click.option("--endpoint", default="", help="Chat-completions URL; default from SAX_LLM_ENDPOINT.")
@click.option("--temperature", type=float)
@click.option("--top-p", type=float)
@click.option("--max-tokens", type=int)
@click.option("--brevity", is_flag=True)
@click.pass_context
def ask(ctx, select, question, model, endpoint, temperature, top_p, max_tokens, brevity):
    """Render the prompt, send it to the configured LLM, and store the explanation."""
    try:
        cfg = LlmConfig(endpoint_url=endpoint, model_name=model, temperature=temperature,
                        top_p=top_p, max_tokens=max_tokens)
        explanation = stages.ask_stage(ctx.obj["workspace"], _selection(select), question,
                                       cfg=cfg, brevity=brevity)
    except Exception as exc:
        _fail("ask", exc)
    _emit(ctx, {"explanation": explanation.text, "usage": explanation.usage,
                "latency_s": round(explanation.latency_s, 4)})


@main.command()
@click.option("--scenario", type=click.Choice(["parking"]),
              help="Simulate and analyze a built-in scenario end to end.")
@click.option("--log", "log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--rules", "rules_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--condition", default=None)
@click.option("--select", default="process", show_default=True)
@click.option("--question")
@click.option("--ask", "do_ask", is_flag=True, help="Also query the LLM (honors SAX_MOCK_LLM).")
@click.pass_context
def pipeline(ctx, scenario, log_path, rules_path, condition, select, question, do_ask):
    """Run every stage in order and report the artifact manifest."""
    ws = ctx.obj["workspace"]
    try:
        if scenario == "parking":
            stages.simulate_stage(ws, parking_scenario(ctx.obj["seed"]), seed=ctx.obj["seed"])
            flags = stages.parking_flags(seed=ctx.obj["seed"], ask=do_ask)
        else:
            flags = stages.PipelineFlags(
                log=Path(log_path).read_bytes() if log_path else None,
                rules=Path(rules_path).read_text(encoding="utf-8") if rules_path else None,
                condition=_condition(condition) if condition else None,
                select=_selection(select),
                question=question,
                seed=ctx.obj["seed"],
                ask=do_ask,
            )
        manifest = stages.run_pipeline(ws, flags)
    except Exception as exc:
        _fail("pipeline", exc)
    _emit(ctx, {"manifest": manifest})


@main.command()
@click.option("--bind", default="127.0.0.1:8765", show_default=True)
@click.pass_context
def serve(ctx, bind):
    """Serve the workspace over HTTP for the explorer UI."""
    import uvicorn

    from .http_api import create_app

    host, _, port = bind.partition(":")
    try:
        app = create_app(ctx.obj["workspace"].root)
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8765), log_level="info")
    except Exception as exc:
        _fail("serve", exc)


if __name__ == "__main__":
    main()
