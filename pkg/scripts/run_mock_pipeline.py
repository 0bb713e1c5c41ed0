#!/usr/bin/env python3
"""End-to-end offline pipeline run against the deterministic mock backend.

Drives the CLI exactly as a user would: ingest -> sample -> seed-outputs ->
synthesize -> mine -> qc -> dataset assemble -> manifest -> generate ->
eval create/judge/complete/report. Everything lands in --workdir. No network.
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def cli(*args: str) -> str:
    cmd = [sys.executable, "-m", "litpipe.cli", *args]
    env_path = str(ROOT / "src")
    result = subprocess.run(
        cmd,
        capture_output=True,
        text=True,
        env={"PYTHONPATH": env_path, "PATH": "/usr/bin:/bin:/usr/local/bin"},
        check=False,
    )
    if result.returncode not in (0,):
        sys.stderr.write(result.stderr)
        raise SystemExit(f"step failed ({result.returncode}): litpipe {' '.join(args)}")
    return result.stdout


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", default="mock_run")
    ap.add_argument("--n-synthetic", type=int, default=60)
    ap.add_argument("--n-mined", type=int, default=60)
    ap.add_argument("--seed", type=int, default=1097)
    args = ap.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    s = str

    corpus_csv = work / "demo_corpus.csv"
    subprocess.run(
        [sys.executable, s(ROOT / "scripts" / "make_demo_corpus.py"), "--out", s(corpus_csv), "--n", "400"],
        check=True,
    )

    store = work / "corpus.jsonl"
    print(cli("ingest", "--input", s(corpus_csv), "--format", "csv", "--out", s(store)).strip())

    sampled = work / "sampled.jsonl"
    cli("sample", "--corpus", s(store), "--n", "40", "--seed", s(args.seed),
        "--min-words", "250", "--max-words", "300", "--out", s(sampled))

    instructions = work / "instructions.txt"
    instructions.write_text(
        "Summarize this abstract\n"
        "Identify the sample population\n"
        "Describe the study methodology\n"
        "Evaluate the quality of the findings\n"
        "List any biological pathways mentioned\n",
        encoding="utf-8",
    )
    seeds = work / "seed_tasks.jsonl"
    cli("seed-outputs", "--instructions", s(instructions), "--docs", s(sampled),
        "--mock", "--out", s(seeds))

    syncovid = work / "syncovid.jsonl"
    print(cli("synthesize", "--seeds", s(seeds), "--n", s(args.n_synthetic), "--seed", s(args.seed),
              "--mock", "--out", s(syncovid)).splitlines()[-1])

    mined = work / "mined.jsonl"
    cli("mine", "--corpus", s(store), "--n", s(args.n_mined), "--seed", s(args.seed), "--out", s(mined))

    qc_out = work / "qc_report.json"
    cli("qc", "--dataset", s(syncovid), "--sample", "30", "--seed", s(args.seed),
        "--out", s(qc_out), "--plot-csv", s(work / "qc_plot.csv"))

    dataset = work / "combined.jsonl"
    cli("dataset", "assemble", "--name", "syncovid_plus_mined",
        "--source", f"synCovid:{syncovid}", "--source", f"mined:{mined}",
        "--out", s(dataset), "--manifest", s(work / "combined.manifest.json"))

    cli("manifest", "--recipe", "syncovid_only", "--dataset", "synCovid:1097",
        "--out", s(work / "manifest_syncovid_only.txt"))

    cases = work / "cases.jsonl"
    sampled_rows = [json.loads(line) for line in sampled.read_text(encoding="utf-8").splitlines()[:8]]
    cases.write_text(
        "\n".join(
            json.dumps({"case_id": f"case{i}", "instruction": "Summarize this abstract",
                        "input": row["abstract"]})
            for i, row in enumerate(sampled_rows)
        ) + "\n",
        encoding="utf-8",
    )
    models = work / "models.json"
    models.write_text(
        json.dumps(
            [
                {"model_id": "syncovid-only", "role": "candidate"},
                {"model_id": "syncovid-abstracts", "role": "candidate"},
                {"model_id": "alpaca-syncovid", "role": "candidate"},
                {"model_id": "chatgpt-ref", "role": "reference"},
            ]
        ),
        encoding="utf-8",
    )
    matrix = work / "matrix.jsonl"
    cli("generate", "--cases", s(cases), "--models", s(models), "--mock", "--out", s(matrix))

    sessions = work / "sessions"
    out = cli("eval", "create", "--cases", s(cases), "--matrix", s(matrix),
              "--seed", s(args.seed), "--store", s(sessions), "--session-id", "demo",
              "--reference", "chatgpt-ref")
    print(out.splitlines()[-1])
    cli("eval", "judge", "--store", s(sessions), "--session", "demo", "--mock",
        "--evaluator-id", "judge-a")
    cli("eval", "judge", "--store", s(sessions), "--session", "demo", "--mock",
        "--evaluator-id", "judge-b")
    cli("eval", "complete", "--store", s(sessions), "--session", "demo")
    report = cli("eval", "report", "--store", s(sessions), "--session", "demo",
                 "--out", s(work / "report.json"))
    print(report.strip())
    summary = json.loads((work / "report.json").read_text(encoding="utf-8"))
    print(json.dumps({m: v["mean_rank"] for m, v in summary["per_model"].items()}, indent=2))
    print(f"artifacts in {work}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
