import json

import pytest

from litpipe.corpus_ingest import Corpus, Document
from litpipe.task_store import InstructionTriplet


def make_abstract(n_words: int, stem: str = "token") -> str:
    return " ".join(f"{stem}{i}" for i in range(n_words))


def make_corpus(n_docs: int, n_words: int = 275) -> Corpus:
    docs = [
        Document(
            doc_id=f"doc{i:04d}",
            title=f"Title of study {i}",
            abstract=make_abstract(n_words, stem=f"w{i}x"),
            source_tag="fixture",
        )
        for i in range(n_docs)
    ]
    return Corpus(docs)


def make_triplet(i: int, origin: str = "synthetic") -> InstructionTriplet:
    return InstructionTriplet(
        instruction=f"Explain the mechanism number {i}",
        input=f"input text {i}",
        output=f"output text {i}",
        origin=origin,
    )


@pytest.fixture
def corpus_csv(tmp_path):
    """3-row CSV fixture: two good rows, one with an empty abstract."""
    path = tmp_path / "corpus.csv"
    path.write_text(
        "cord_uid,title,abstract,source\n"
        "c1,First study,Viral load was measured in patients over time,repoA\n"
        "c2,Second study,,repoA\n"
        "c3,Third study,A cohort of nurses was followed for one year,repoB\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def corpus_jsonl_200(tmp_path):
    path = tmp_path / "corpus200.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(200):
            fh.write(
                json.dumps(
                    {
                        "cord_uid": f"d{i:03d}",
                        "title": f"Study {i}",
                        "abstract": make_abstract(260 + i % 30),
                        "source": "bulk",
                    }
                )
                + "\n"
            )
    return path
