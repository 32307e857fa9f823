"""Command-line entry point.

Subcommands: index (build/search), ask, eval run, conflict generate, compare,
serve-mock. Flags beat config-file values, which beat defaults; the fully
resolved configuration is embedded verbatim in every report so any number in
a report can be reproduced from the report alone.
"""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import click

from trident.backends.base import LMBackend
from trident.backends.mockserver import MockLogitsServer
from trident.backends.ngram import NGramBackend
from trident.backends.remote import RemoteBackend
from trident.backends.scripted import ScriptedBackend
from trident.contexts import (
    IRRELEVANT_STRATEGIES,
    candidate_pool,
    select_irrelevant,
    select_relevant,
)
from trident.decoding import (
    BranchPrompts,
    DecodeLimits,
    DecodeStrategy,
    decode,
)
from trident.errors import ConfigError, DatasetMismatch, TridentError
from trident.evaluation import (
    EvalSettings,
    RunReport,
    extract_prediction,
    read_qa_jsonl,
    run_eval,
)
from trident.conflicts import generate_conflict_set, write_conflict_jsonl
from trident.prompting import load_shots, load_templates, render
from trident.retrieval import (
    Bm25Index,
    Bm25Params,
    Passage,
    RemoteEmbedder,
    TfidfEmbedder,
    read_passages_jsonl,
)

ENV_REMOTE_URL = "TRIDENT_REMOTE_URL"
ENV_EMBED_URL = "TRIDENT_EMBED_URL"

CLI_IRRELEVANT_NAMES = {
    "random": "random",
    "fixed": "fixed",
    "fixed-permuted": "fixed_permuted",
    "most-distant": "most_distant",
}


def build_backend(spec: str) -> LMBackend:
    """Parse a backend spec: scripted:<file>, ngram:<file>[?order=N&mode=M], remote:<url>."""
    kind, sep, rest = spec.partition(":")
    if not sep:
        raise ConfigError(f"backend spec {spec!r} must look like kind:target")
    if kind == "scripted":
        return ScriptedBackend.from_json(rest)
    if kind == "ngram":
        parsed = urlparse(rest)
        params = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
        order = int(params.get("order", 3))
        mode = params.get("mode", "word")
        return NGramBackend.from_file(parsed.path, order=order, mode=mode)
    if kind == "remote":
        url = os.environ.get(ENV_REMOTE_URL, rest)
        return RemoteBackend(url)
    raise ConfigError(f"unknown backend kind {kind!r} (expected scripted, ngram or remote)")


def make_embedder(idx: Bm25Index | None):
    """Remote embedder when TRIDENT_EMBED_URL is set, else TF-IDF over the index."""
    embed_url = os.environ.get(ENV_EMBED_URL)
    if embed_url:
        return RemoteEmbedder(embed_url)
    return TfidfEmbedder(idx) if idx is not None else None


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config


def _resolve(flag_value, config: dict, key: str, default):
    """Precedence: explicit flag > config file entry > default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _fail(exc: TridentError) -> None:
    click.echo(f"error [{type(exc).__name__}]: {exc}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Three-branch contrastive decoding engine and evaluation harness."""


# --------------------------------------------------------------------------
# index
# --------------------------------------------------------------------------

@main.group()
def index():
    """Build and query BM25 indexes."""


@index.command("build", short_help="Build a BM25 index from passage JSONL.")
@click.option("--corpus", required=True, type=click.Path(exists=True), help="Passage JSONL.")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Index directory.")
@click.option("--k1", default=1.2, show_default=True, type=float)
@click.option("--b", default=0.75, show_default=True, type=float)
def index_build(corpus, out_dir, k1, b):
    try:
        idx = Bm25Index(read_passages_jsonl(corpus), Bm25Params(k1=k1, b=b))
        idx.save(out_dir)
    except TridentError as exc:
        _fail(exc)
    click.echo(f"indexed {idx.n_docs} passages (avgdl {idx.avgdl:.2f}) -> {out_dir}")


@index.command("search", short_help="Query a built index.")
@click.option("--index", "index_dir", required=True, type=click.Path(exists=True))
@click.option("--query", required=True)
@click.option("-k", "top_k", default=5, show_default=True, type=int)
def index_search(index_dir, query, top_k):
    try:
        idx = Bm25Index.load(index_dir)
        hits = idx.search(query, k=top_k)
    except TridentError as exc:
        _fail(exc)
    for hit in hits:
        click.echo(f"{hit.rank:3d}  {hit.score:9.4f}  {hit.passage.id}  {hit.passage.text[:80]}")
    if not hits:
        click.echo("(no hits)")


# --------------------------------------------------------------------------
# ask
# --------------------------------------------------------------------------

def _parse_strategies(spec: str, alpha: float | None) -> list[DecodeStrategy]:
    strategies = []
    for name in spec.split(","):
        name = name.strip()
        if name:
            strategies.append(DecodeStrategy.parse(name, alpha))
    if not strategies:
        raise ConfigError("no strategies given")
    return strategies


@main.command()
@click.argument("question")
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file.")
@click.option("--backend", "backend_spec", default=None, help="kind:target backend spec.")
@click.option("--index", "index_dir", default=None, type=click.Path(), help="BM25 index dir.")
@click.option("--strategy", "strategies_spec", default=None,
              help="Comma-separated strategy names.")
@click.option("--alpha", default=None, type=float, help="Fixed alpha override.")
@click.option("--irrelevant", "irrelevant_cli", default=None,
              type=click.Choice(sorted(CLI_IRRELEVANT_NAMES)), help="Irrelevant-context strategy.")
@click.option("--context", "context_override", default=None,
              help="Use this text as the relevant context instead of retrieving.")
@click.option("--irrelevant-context", "irrelevant_override", default=None,
              help="Use this text as the irrelevant context.")
@click.option("--shots", "shots_path", default=None, type=click.Path(exists=True))
@click.option("--templates", "templates_path", default=None, type=click.Path(exists=True))
@click.option("--seed", default=None, type=int)
@click.option("--max-new-tokens", default=None, type=int)
@click.option("--trace", is_flag=True, help="Print per-step alpha, confidences and top tokens.")
def ask(question, config_path, backend_spec, index_dir, strategies_spec, alpha,
        irrelevant_cli, context_override, irrelevant_override, shots_path,
        templates_path, seed, max_new_tokens, trace):
    """Decode one question under each requested strategy."""
    try:
        config = _load_config(config_path)
        backend_spec = _resolve(backend_spec, config, "backend", None)
        if backend_spec is None:
            raise ConfigError("--backend is required (flag or config)")
        backend = build_backend(backend_spec)
        index_dir = _resolve(index_dir, config, "index", None)
        idx = Bm25Index.load(index_dir) if index_dir else None
        strategies = _parse_strategies(
            _resolve(strategies_spec, config, "strategies", "ours-fixed"),
            _resolve(alpha, config, "alpha", None),
        )
        irrelevant = CLI_IRRELEVANT_NAMES[
            _resolve(irrelevant_cli, config, "irrelevant", "fixed")
        ]
        shots = tuple(load_shots(shots_path)) if shots_path else ()
        templates = load_templates(templates_path) if templates_path else None
        seed = _resolve(seed, config, "seed", 0)
        limits = DecodeLimits(
            max_new_tokens=_resolve(max_new_tokens, config, "max_new_tokens", 32)
        )

        union = frozenset().union(*(s.required_branches for s in strategies))
        c_plus = c_minus = None
        if "relevant" in union or "irrelevant" in union:
            gold = (
                Passage(id="cli-context", title="", text=context_override)
                if context_override
                else None
            )
            c_plus = select_relevant(question, idx, gold)
        if "irrelevant" in union:
            if irrelevant_override:
                c_minus = Passage(id="cli-irrelevant", title="", text=irrelevant_override)
            else:
                pool = None
                if irrelevant in ("random", "most_distant"):
                    if idx is None:
                        raise ConfigError(f"--irrelevant {irrelevant} needs --index")
                    pool = candidate_pool(question, idx)
                embedder = make_embedder(idx) if irrelevant == "most_distant" else None
                c_minus = select_irrelevant(irrelevant, c_plus, pool=pool,
                                            embedder=embedder, seed=seed)

        for strategy in strategies:
            prompts = BranchPrompts()
            if "parametric" in strategy.required_branches:
                prompts.parametric = backend.tokenize(
                    render("closed", question, shots=shots, templates=templates)
                )
            if "relevant" in strategy.required_branches:
                prompts.relevant = backend.tokenize(
                    render("open", question, context=c_plus.text, shots=shots,
                           templates=templates)
                )
            if "irrelevant" in strategy.required_branches:
                prompts.irrelevant = backend.tokenize(
                    render("open", question, context=c_minus.text, shots=shots,
                           templates=templates)
                )
            result = decode(strategy, prompts, backend, limits)
            click.echo(f"{strategy.name}: {extract_prediction(result.text)}")
            if trace:
                for t in result.traces:
                    top = ", ".join(
                        f"{backend.detokenize([tok]) or tok}={p:.4f}"
                        for tok, p in t.top5_combined
                    )
                    click.echo(
                        f"  step {t.step_index}: alpha={t.alpha_used:.4f} "
                        f"C={t.confidence_parametric:.4f} C_R={t.confidence_relevant:.4f} "
                        f"top: {top}"
                    )
    except TridentError as exc:
        _fail(exc)


# --------------------------------------------------------------------------
# eval
# --------------------------------------------------------------------------

@main.group("eval")
def eval_group():
    """Batch evaluation over QA datasets."""


@eval_group.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file.")
@click.option("--dataset", "dataset_path", default=None, type=click.Path())
@click.option("--strategies", "strategies_spec", default=None,
              help="Comma-separated: reg-closed,reg-open,cad,ours-fixed,ours-dynamic.")
@click.option("--backend", "backend_spec", default=None)
@click.option("--index", "index_dir", default=None, type=click.Path())
@click.option("--irrelevant", "irrelevant_cli", default=None,
              type=click.Choice(sorted(CLI_IRRELEVANT_NAMES)))
@click.option("--shots", "shots_path", default=None, type=click.Path(exists=True))
@click.option("--templates", "templates_path", default=None, type=click.Path(exists=True))
@click.option("--seed", default=None, type=int)
@click.option("--alpha", default=None, type=float)
@click.option("--use-gold/--no-use-gold", "use_gold", default=None,
              help="Prefer gold contexts when the dataset has them.")
@click.option("--pool-size", default=None, type=int)
@click.option("--max-new-tokens", default=None, type=int)
@click.option("--workers", default=None, type=int)
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--trace", is_flag=True, help="Write per-item JSONL traces.")
@click.option("--strict", is_flag=True, help="Exit non-zero if any item errored.")
def eval_run(config_path, dataset_path, strategies_spec, backend_spec, index_dir,
             irrelevant_cli, shots_path, templates_path, seed, alpha, use_gold,
             pool_size, max_new_tokens, workers, out_dir, trace, strict):
    """Evaluate strategies over a QA dataset and write one report each."""
    try:
        config = _load_config(config_path)
        dataset_path = _resolve(dataset_path, config, "dataset", None)
        backend_spec = _resolve(backend_spec, config, "backend", None)
        if dataset_path is None or backend_spec is None:
            raise ConfigError("--dataset and --backend are required (flag or config)")
        strategies_spec = _resolve(strategies_spec, config, "strategies",
                                   "reg-closed,reg-open,cad,ours-fixed,ours-dynamic")
        alpha = _resolve(alpha, config, "alpha", None)
        strategies = _parse_strategies(strategies_spec, alpha)
        index_dir = _resolve(index_dir, config, "index", None)
        irrelevant = CLI_IRRELEVANT_NAMES[
            _resolve(irrelevant_cli, config, "irrelevant", "fixed")
        ]
        shots_path = _resolve(shots_path, config, "shots", None)
        templates_path = _resolve(templates_path, config, "templates", None)
        seed = _resolve(seed, config, "seed", 0)
        use_gold = _resolve(use_gold, config, "use_gold", True)
        pool_size = _resolve(pool_size, config, "pool_size", 100)
        max_new_tokens = _resolve(max_new_tokens, config, "max_new_tokens", 32)
        workers = _resolve(workers, config, "workers", 1)
        out_dir = Path(_resolve(out_dir, config, "out", "eval-out"))

        backend = build_backend(backend_spec)
        idx = Bm25Index.load(index_dir) if index_dir else None
        records = list(read_qa_jsonl(dataset_path))
        settings = EvalSettings(
            irrelevant=irrelevant,
            use_gold=use_gold,
            pool_size=pool_size,
            shots=tuple(load_shots(shots_path)) if shots_path else (),
            templates=load_templates(templates_path) if templates_path else None,
            seed=seed,
            limits=DecodeLimits(max_new_tokens=max_new_tokens),
            workers=workers,
            trace_dir=out_dir / "traces" if trace else None,
        )
        resolved = {
            "dataset": str(dataset_path),
            "backend": backend_spec,
            "backend_identity": backend.identity,
            "index": str(index_dir) if index_dir else None,
            "strategies": [s.describe() for s in strategies],
            "irrelevant": irrelevant,
            "use_gold": use_gold,
            "pool_size": pool_size,
            "shots": str(shots_path) if shots_path else None,
            "templates": str(templates_path) if templates_path else None,
            "seed": seed,
            "max_new_tokens": max_new_tokens,
            "workers": workers,
            "strict": strict,
        }
        embedder = make_embedder(idx) if settings.irrelevant == "most_distant" else None
        reports = run_eval(records, strategies, backend, index=idx, embedder=embedder,
                           settings=settings, config=resolved)
        out_dir.mkdir(parents=True, exist_ok=True)
        errored = 0
        click.echo(f"{'strategy':<14s} {'EM':>7s} {'errored':>8s}")
        for strategy, report in zip(strategies, reports):
            report.write(out_dir / f"report-{strategy.name}.json")
            em = "n/a" if report.em is None else f"{report.em:.4f}"
            click.echo(f"{strategy.name:<14s} {em:>7s} {report.counts['errored']:>8d}")
            errored += report.counts["errored"]
        click.echo(f"reports -> {out_dir}")
        if strict and errored:
            sys.exit(1)
    except TridentError as exc:
        _fail(exc)


# --------------------------------------------------------------------------
# conflict
# --------------------------------------------------------------------------

@main.group()
def conflict():
    """Knowledge-conflict dataset construction."""


@conflict.command("generate")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--pool", "pool_path", default=None, type=click.Path(exists=True),
              help="Newline-separated entity pool; defaults to the dataset's own answers.")
@click.option("--seed", default=0, show_default=True, type=int)
def conflict_generate(dataset_path, out_path, pool_path, seed):
    try:
        records = list(read_qa_jsonl(dataset_path))
        pool = None
        if pool_path:
            pool = [ln.strip() for ln in Path(pool_path).read_text(encoding="utf-8").splitlines()
                    if ln.strip()]
        subs, skipped = generate_conflict_set(records, entity_pool=pool, seed=seed)
        write_conflict_jsonl(out_path, subs)
    except TridentError as exc:
        _fail(exc)
    click.echo(f"substituted {len(subs)} records -> {out_path}")
    for record_id, reason in skipped:
        click.echo(f"skipped {record_id}: {reason}")


# --------------------------------------------------------------------------
# compare
# --------------------------------------------------------------------------

@main.command()
@click.argument("reports", nargs=-1, required=True, type=click.Path(exists=True))
def compare(reports):
    """Aligned EM table across runs over the same dataset."""
    try:
        if len(reports) < 2:
            raise DatasetMismatch("compare needs at least two reports")
        loaded = [RunReport.read(p) for p in reports]
        id_sets = [frozenset(item["id"] for item in r.items) for r in loaded]
        if len(set(id_sets)) != 1:
            raise DatasetMismatch("reports cover different item id sets")
        buckets = sorted({b for r in loaded for b in r.per_bucket_em})
        header = f"{'strategy':<16s} {'EM':>8s}" + "".join(f" {b:>12s}" for b in buckets)
        click.echo(header)
        for r in loaded:
            name = r.strategy.get("name", "?")
            if r.strategy.get("alpha") is not None:
                name = f"{name}({r.strategy['alpha']})"
            em = "n/a" if r.em is None else f"{r.em:.4f}"
            row = f"{name:<16s} {em:>8s}"
            for b in buckets:
                if b in r.per_bucket_em:
                    bucket_em, count = r.per_bucket_em[b]
                    row += f" {bucket_em:>7.4f}({count:2d})"
                else:
                    row += f" {'-':>12s}"
            click.echo(row)
    except TridentError as exc:
        _fail(exc)


# --------------------------------------------------------------------------
# serve-mock
# --------------------------------------------------------------------------

@main.command("serve-mock")
@click.option("--backend", "backend_spec", required=True,
              help="Local backend to expose (scripted:... or ngram:...).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=0, show_default=True, type=int,
              help="0 picks a free port.")
def serve_mock(backend_spec, host, port):
    """Serve a local backend over the logits wire protocol."""
    try:
        backend = build_backend(backend_spec)
        if backend.kind == "remote":
            raise ConfigError("serve-mock exposes local backends only")
        server = MockLogitsServer(backend, host=host, port=port)
    except TridentError as exc:
        _fail(exc)
    click.echo(f"serving {backend.identity} at {server.endpoint}", nl=True)
    sys.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
