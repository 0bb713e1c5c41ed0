"""Command-line entry point wiring the full pipeline.

Every subcommand that writes files prints the output path(s) to stdout, one
per line; JSON reports follow. Randomized subcommands take --seed and default
to the fixed documented constant so bare runs reproduce. Exit codes: 0 on
success, 1 on operational errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as config_mod
from . import corpus_ingest, dataset_qc, eval_api, eval_harness, finetune, inference
from . import synthesis_engine, task_store
from .chat_backend import ChatBackendConfig
from .errors import LitpipeError
from .mock_backend import DeterministicMockChat

logger = logging.getLogger("litpipe")


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend-url", help="chat-completions base URL")
    parser.add_argument("--model", help="backend model name")
    parser.add_argument("--api-key-env", help="NAME of the env var holding the API key")
    parser.add_argument("--timeout", type=float, help="request timeout in seconds")
    parser.add_argument("--max-retries", type=int, help="retry budget per request")
    parser.add_argument("--parallelism", type=int, help="max in-flight requests")
    parser.add_argument("--mock", action="store_true", help="use the offline deterministic mock")


def _backend_from_args(args, cfg: config_mod.RunConfig, salt: str = ""):
    if args.mock:
        return DeterministicMockChat(salt=salt)
    return ChatBackendConfig(
        base_url=cfg.get("backend.base_url", args.backend_url),
        model_name=cfg.get("backend.model", args.model),
        api_key_env=cfg.get("backend.api_key_env", args.api_key_env),
        timeout=cfg.get_float("backend.timeout", args.timeout),
        max_retries=cfg.get_int("backend.max_retries", args.max_retries),
        parallelism=cfg.get_int("backend.parallelism", args.parallelism),
    )


def _seed(args, cfg: config_mod.RunConfig) -> int:
    return cfg.get_int("seed", args.seed)


def _print_path(path) -> None:
    print(str(path))


def _load_cases(path: str) -> list[inference.PromptCase]:
    cases = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            cases.append(
                inference.PromptCase(
                    case_id=str(obj.get("case_id") or f"case-{line_no}"),
                    instruction=obj["instruction"],
                    input=obj.get("input", ""),
                )
            )
    if not cases:
        raise LitpipeError(f"no cases found in {path}")
    return cases


# --- subcommand implementations ----------------------------------------------


def cmd_ingest(args, cfg) -> int:
    corpus, stats = corpus_ingest.ingest_corpus(args.input, args.format)
    if args.out:
        corpus_ingest.save_corpus(corpus, args.out)
        _print_path(args.out)
    print(json.dumps(stats.to_dict()))
    return 0


def cmd_sample(args, cfg) -> int:
    corpus = corpus_ingest.load_corpus(args.corpus)
    docs = corpus_ingest.sample_abstracts(
        corpus, args.n, _seed(args, cfg), args.min_words, args.max_words
    )
    sampled = corpus_ingest.Corpus(docs)
    corpus_ingest.save_corpus(sampled, args.out)
    _print_path(args.out)
    return 0


def cmd_seed_outputs(args, cfg) -> int:
    instructions = [
        line.strip()
        for line in Path(args.instructions).read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    if not instructions:
        raise LitpipeError(f"no instructions found in {args.instructions}")
    docs = corpus_ingest.load_corpus(args.docs).documents
    pairs = [(instructions[i % len(instructions)], doc) for i, doc in enumerate(docs)]
    backend = _backend_from_args(args, cfg)
    triplets, failures = synthesis_engine.generate_seed_outputs(pairs, backend)
    task_store.export_jsonl(triplets, args.out)
    _print_path(args.out)
    for failure in failures:
        print(
            f"seed output failed: pair {failure.index} doc={failure.doc_id}: {failure.reason}",
            file=sys.stderr,
        )
    print(json.dumps({"generated": len(triplets), "failed": len(failures)}))
    return 0


def cmd_synthesize(args, cfg) -> int:
    seeds = task_store.import_jsonl(args.seeds, origin="seed_handwritten")
    backend = _backend_from_args(args, cfg)
    window = (
        cfg.get_int("synthesis.min_words", args.min_words),
        cfg.get_int("synthesis.max_words", args.max_words),
    )
    run = synthesis_engine.synthesize_batch(
        seeds,
        args.n,
        backend,
        _seed(args, cfg),
        window,
        dedup_threshold=cfg.get_float("synthesis.dedup_threshold", args.dedup_threshold),
        seeds_per_request=cfg.get_int("synthesis.seeds_per_request", None),
        tasks_per_request=cfg.get_int("synthesis.tasks_per_request", None),
        max_requests=args.budget,
    )
    task_store.export_jsonl(run.accepted, args.out)
    _print_path(args.out)
    if args.rejects:
        with open(args.rejects, "w", encoding="utf-8") as fh:
            for raw, reason in run.rejected:
                fh.write(json.dumps({"reason": reason, "raw": raw}, ensure_ascii=False) + "\n")
        _print_path(args.rejects)
    print(
        json.dumps(
            {
                "accepted": len(run.accepted),
                "rejected": len(run.rejected),
                "requests": run.request_count,
                "budget_exhausted": run.budget_exhausted,
            }
        )
    )
    return 1 if run.budget_exhausted else 0


def cmd_mine(args, cfg) -> int:
    corpus = corpus_ingest.load_corpus(args.corpus)
    triplets = task_store.mine_abstract_triplets(corpus, args.n, _seed(args, cfg))
    task_store.export_jsonl(triplets, args.out)
    _print_path(args.out)
    return 0


def cmd_qc(args, cfg) -> int:
    triplets = task_store.import_jsonl(args.dataset, origin="synthetic")
    dataset = task_store.assemble_dataset("qc-input", [(Path(args.dataset).name, triplets)])
    rules = dataset_qc.load_qc_rules(args.rules) if args.rules else None
    report = dataset_qc.qc_report(dataset, args.sample, _seed(args, cfg), rules)
    if args.plot_csv:
        dataset_qc.write_plot_csv(report, args.plot_csv)
        _print_path(args.plot_csv)
    payload = json.dumps(report.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
        _print_path(args.out)
    else:
        print(payload)
    return 0


def cmd_dataset_assemble(args, cfg) -> int:
    sources = []
    for spec in args.source:
        name, _, path = spec.partition(":")
        if not name or not path:
            raise LitpipeError(f"--source must be name:path, got {spec!r}")
        sources.append((name, task_store.import_jsonl(path, origin=args.origin)))
    if args.dedup_threshold is not None:
        # Dedup across the concatenation, then keep per-source counts truthful.
        merged = [t for _, triplets in sources for t in triplets]
        kept, dropped = task_store.dedup_triplets(merged, args.dedup_threshold)
        kept_ids = {id(t) for t in kept}
        sources = [(name, [t for t in triplets if id(t) in kept_ids]) for name, triplets in sources]
        if dropped:
            print(f"dedup dropped {len(dropped)} near-duplicate triplets", file=sys.stderr)
    dataset = task_store.assemble_dataset(args.name, sources)
    task_store.export_jsonl(dataset, args.out)
    _print_path(args.out)
    if args.manifest:
        task_store.write_dataset_manifest(dataset, args.manifest)
        _print_path(args.manifest)
    return 0


def cmd_dataset_export(args, cfg) -> int:
    triplets = task_store.import_jsonl(args.dataset, origin="synthetic")
    count = task_store.export_jsonl(triplets, args.out)
    _print_path(args.out)
    print(json.dumps({"written": count}))
    return 0


def cmd_manifest(args, cfg) -> int:
    refs = []
    for spec in args.dataset:
        name, _, count = spec.rpartition(":")
        if not name:
            raise LitpipeError(f"--dataset must be name:count, got {spec!r}")
        refs.append((name, int(count)))
    manifest = finetune.make_training_manifest(args.recipe, refs, args.base_model)
    out = Path(args.out) if args.out else Path(f"manifest_{args.recipe}.txt")
    finetune.write_manifest(manifest, out)
    _print_path(out)
    return 0


def cmd_loss_analyze(args, cfg) -> int:
    curve = finetune.parse_trainer_log(args.log)
    verdict = finetune.detect_overfit(curve, args.patience)
    payload = {
        "records": len(curve.records),
        "eval_points": len(curve.eval_points()),
        "verdict": verdict.status,
        "first_step": verdict.first_step,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        _print_path(args.out)
    else:
        print(text)
    return 0


def cmd_generate(args, cfg) -> int:
    cases = _load_cases(args.cases)
    model_specs = json.loads(Path(args.models).read_text(encoding="utf-8"))
    endpoints = []
    for spec in model_specs:
        model_id = spec["model_id"]
        role = spec.get("role", "candidate")
        if args.mock:
            backend = DeterministicMockChat(salt=model_id)
        else:
            backend = ChatBackendConfig(
                base_url=spec.get("base_url") or cfg.get("backend.base_url"),
                model_name=spec.get("model_name", model_id),
                api_key_env=spec.get("api_key_env") or cfg.get("backend.api_key_env"),
            )
        endpoints.append(inference.ModelEndpoint(model_id=model_id, backend=backend, role=role))
    inference_config = inference.InferenceConfig(
        temperature=args.temperature,
        top_p=args.top_p,
        top_k=args.top_k,
        beams=args.beams,
        max_tokens=args.max_tokens,
    )
    matrix = inference.batch_generate(cases, endpoints, inference_config, parallelism=args.jobs)
    jsonl_path, manifest_path = inference.save_matrix(matrix, args.out)
    _print_path(jsonl_path)
    _print_path(manifest_path)
    if matrix.holes:
        for (case_id, model_id), err in sorted(matrix.holes.items()):
            print(f"hole: ({case_id}, {model_id}): {err}", file=sys.stderr)
        return 1
    return 0


def cmd_eval_create(args, cfg) -> int:
    cases = _load_cases(args.cases)
    matrix = inference.load_matrix(args.matrix)
    model_ids = args.models.split(",") if args.models else matrix.model_ids
    store = eval_api.SessionStore(args.store)
    session = eval_harness.create_session(
        cases,
        matrix,
        model_ids,
        _seed(args, cfg),
        session_id=args.session_id,
        reference_model=args.reference,
    )
    store.save(session)
    if store.directory is not None:
        _print_path(store.directory / f"{session.session_id}.session.json")
    print(json.dumps({"session_id": session.session_id, "cases": len(session.case_ids)}))
    return 0


def cmd_eval_serve(args, cfg) -> int:
    store = eval_api.SessionStore(args.store)
    ui_dir = args.ui_dir
    if ui_dir and not Path(ui_dir).is_dir():
        raise LitpipeError(f"UI directory not found: {ui_dir}")
    host = cfg.get("eval.host", args.host)
    port = cfg.get_int("eval.port", args.port)
    print(f"serving evaluation API on http://{host}:{port}", file=sys.stderr)
    eval_api.serve(store, host=host, port=port, ui_dir=ui_dir)
    return 0


def cmd_eval_judge(args, cfg) -> int:
    store = eval_api.SessionStore(args.store)
    session = store.get(args.session)
    backend = _backend_from_args(args, cfg, salt=args.evaluator_id)
    rubric = (
        Path(args.rubric).read_text(encoding="utf-8") if args.rubric else eval_api.default_rubric()
    )
    judged = 0
    for case_id in session.case_ids:
        if (args.evaluator_id, case_id) in session.judgments:
            continue
        judgment = eval_harness.llm_judge(
            session, session.blinded[case_id], backend, rubric, evaluator_id=args.evaluator_id
        )
        eval_harness.record_judgment(
            session,
            evaluator_id=judgment.evaluator_id,
            case_id=case_id,
            ranks=judgment.ranks,
            grades=judgment.grades,
            evaluator_kind="llm",
        )
        judged += 1
    store.save(session)
    print(json.dumps({"session_id": session.session_id, "judged": judged}))
    return 0


def cmd_eval_complete(args, cfg) -> int:
    store = eval_api.SessionStore(args.store)
    session = store.get(args.session)
    eval_harness.complete_session(session)
    store.save(session)
    print(json.dumps({"session_id": session.session_id, "status": session.status}))
    return 0


def cmd_eval_report(args, cfg) -> int:
    store = eval_api.SessionStore(args.store)
    session = store.get(args.session)
    if session.status != eval_harness.STATUS_COMPLETE:
        raise LitpipeError(f"session {session.session_id} is not complete; run eval complete first")
    report = eval_harness.aggregate_report(session, reference_model=args.reference)
    payload = json.dumps(report.to_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
        _print_path(args.out)
    else:
        print(payload)
    return 0


def cmd_mock_backend_serve(args, cfg) -> int:
    import uvicorn

    from .mock_backend import create_mock_app

    print(f"serving mock chat backend on http://{args.host}:{args.port}", file=sys.stderr)
    uvicorn.run(create_mock_app(salt=args.salt), host=args.host, port=args.port, log_level="warning")
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="litpipe",
        description="Biomedical literature instruction-tuning pipeline and evaluation harness.",
    )
    parser.add_argument("--config", help="key=value config file (or set LITPIPE_CONFIG)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a CSV/JSONL corpus into the normalized store")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), required=True)
    p.add_argument("--out", help="normalized corpus store path (JSONL)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sample", help="deterministically sample abstracts from a corpus store")
    p.add_argument("--corpus", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-words", type=int, default=0)
    p.add_argument("--max-words", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("seed-outputs", help="generate outputs for instruction-abstract pairs")
    p.add_argument("--instructions", required=True, help="text file, one instruction per line")
    p.add_argument("--docs", required=True, help="sampled-documents store (JSONL)")
    p.add_argument("--out", required=True)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_seed_outputs)

    p = sub.add_parser("synthesize", help="run the self-instruct synthesis loop")
    p.add_argument("--seeds", required=True, help="seed task JSONL")
    p.add_argument("--n", type=int, required=True, help="target number of accepted tasks")
    p.add_argument("--seed", type=int)
    p.add_argument("--min-words", type=int)
    p.add_argument("--max-words", type=int)
    p.add_argument("--dedup-threshold", type=float)
    p.add_argument("--budget", type=int, help="max backend requests")
    p.add_argument("--out", required=True)
    p.add_argument("--rejects", help="optional JSONL of rejected fragments")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("mine", help="mine real-abstract triplets (output = true title)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("qc", help="dataset quality-control report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sample", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--rules", help="alternate QC rules JSON")
    p.add_argument("--out", help="write report JSON here instead of stdout")
    p.add_argument("--plot-csv", help="optional plot-data CSV")
    p.set_defaults(func=cmd_qc)

    p = sub.add_parser("dataset", help="dataset assembly and export")
    dataset_sub = p.add_subparsers(dest="dataset_command", required=True)

    pa = dataset_sub.add_parser("assemble", help="concatenate named sources into a dataset")
    pa.add_argument("--name", required=True)
    pa.add_argument("--source", action="append", required=True, help="name:path, repeatable")
    pa.add_argument("--origin", default="synthetic", choices=task_store.ORIGINS)
    pa.add_argument("--dedup-threshold", type=float, default=None)
    pa.add_argument("--out", required=True)
    pa.add_argument("--manifest", help="dataset manifest JSON path")
    pa.set_defaults(func=cmd_dataset_assemble)

    pe = dataset_sub.add_parser("export", help="validate and re-export a training JSONL")
    pe.add_argument("--dataset", required=True)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=cmd_dataset_export)

    p = sub.add_parser("manifest", help="emit a training manifest for a recipe")
    p.add_argument("--recipe", required=True, choices=sorted(finetune.RECIPES))
    p.add_argument("--dataset", action="append", required=True, help="name:count, repeatable")
    p.add_argument("--base-model", default=finetune.DEFAULT_BASE_MODEL)
    p.add_argument("--out")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("loss-analyze", help="parse a trainer loss log and check overfit")
    p.add_argument("--log", required=True)
    p.add_argument("--patience", type=int, default=finetune.DEFAULT_PATIENCE)
    p.add_argument("--out")
    p.set_defaults(func=cmd_loss_analyze)

    p = sub.add_parser("generate", help="build the case-by-model response matrix")
    p.add_argument("--cases", required=True, help="JSONL of {case_id, instruction, input}")
    p.add_argument("--models", required=True, help="JSON list of model endpoint specs")
    p.add_argument("--out", required=True, help="matrix JSONL path")
    p.add_argument("--jobs", type=int, default=4, help="parallel cells")
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--top-p", type=float, default=0.75)
    p.add_argument("--top-k", type=int, default=40)
    p.add_argument("--beams", type=int, default=4)
    p.add_argument("--max-tokens", type=int, default=128)
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="blinded evaluation sessions")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)

    pc = eval_sub.add_parser("create", help="create a blinded session from a response matrix")
    pc.add_argument("--cases", required=True)
    pc.add_argument("--matrix", required=True)
    pc.add_argument("--models", help="comma-separated model ids (default: matrix models)")
    pc.add_argument("--seed", type=int)
    pc.add_argument("--store", required=True, help="session store directory")
    pc.add_argument("--session-id")
    pc.add_argument("--reference", help="reference model id for head-to-head")
    pc.set_defaults(func=cmd_eval_create)

    ps = eval_sub.add_parser("serve", help="serve the REST API (and UI assets)")
    ps.add_argument("--store", required=True)
    ps.add_argument("--host")
    ps.add_argument("--port", type=int)
    ps.add_argument("--ui-dir", help="built UI assets directory")
    ps.set_defaults(func=cmd_eval_serve)

    pj = eval_sub.add_parser("judge", help="run the LLM judge over a session")
    pj.add_argument("--store", required=True)
    pj.add_argument("--session", required=True)
    pj.add_argument("--evaluator-id", default="llm-judge")
    pj.add_argument("--rubric", help="rubric text file (default: packaged rubric)")
    _add_backend_flags(pj)
    pj.set_defaults(func=cmd_eval_judge)

    pm = eval_sub.add_parser("complete", help="close a session (enables report/unblind)")
    pm.add_argument("--store", required=True)
    pm.add_argument("--session", required=True)
    pm.set_defaults(func=cmd_eval_complete)

    pr = eval_sub.add_parser("report", help="aggregate report for a completed session")
    pr.add_argument("--store", required=True)
    pr.add_argument("--session", required=True)
    pr.add_argument("--reference", help="reference model id for head-to-head")
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_eval_report)

    p = sub.add_parser("mock-backend", help="offline deterministic chat backend")
    mock_sub = p.add_subparsers(dest="mock_command", required=True)
    pms = mock_sub.add_parser("serve", help="serve the OpenAI-compatible mock")
    pms.add_argument("--host", default="127.0.0.1")
    pms.add_argument("--port", type=int, default=8798)
    pms.add_argument("--salt", default="")
    pms.set_defaults(func=cmd_mock_backend_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = config_mod.RunConfig.load(args.config)
        return args.func(args, cfg)
    except LitpipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
