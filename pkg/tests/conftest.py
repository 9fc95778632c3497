from __future__ import annotations

import contextlib
import io
import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from hybrid_dsl.cli import main as cli_main
from hybrid_dsl.corpus import Attachment, Corpus, EmailRecord, FolderLabel
from hybrid_dsl.datagen import TripletConfig, TripletFactory, synthesize_corpus
from hybrid_dsl.executor import DEFAULT_NOW, ExecutionContext
from hybrid_dsl.vectors import HashingEmbedder

NOW = DEFAULT_NOW

CASE1 = {
    "sql": "SELECT DISTINCT message_id FROM email WHERE is_draft = 1 AND draft_modified_date >= date('now', '-7 day') AND is_starred = 1 AND message_id IN <vector_0>",
    "vector_query_list": [{"email_content": "budget"}],
}
CASE2 = {
    "sql": "SELECT DISTINCT json_extract(json_each.value, '$.id') AS folder_id FROM email, json_each(email.folder_labels) WHERE json_extract(json_each.value, '$.id') IN <vector_0>",
    "vector_query_list": [{"folder_labels": "important"}],
}
CASE3 = {
    "sql": "SELECT DISTINCT json_extract(json_each.value, '$.id') AS attachment_id FROM email, json_each(email.attachment_list) WHERE message_id IN <vector_0> AND json_extract(json_each.value, '$.id') IN <vector_1>",
    "vector_query_list": [{"subject": "contract"}, {"attachment_list": "contract"}],
}


def ts(text: str) -> datetime:
    return datetime.fromisoformat(text).replace(tzinfo=timezone.utc)


def make_record(message_id: str, **overrides) -> EmailRecord:
    """A valid record with neutral defaults; drafts get draft dates unless given."""
    received = overrides.pop("received_date", NOW - timedelta(days=3))
    is_draft = overrides.pop("is_draft", False)
    fields = dict(
        message_id=message_id,
        account_email="owner@example.com",
        received_date=received,
        is_draft=is_draft,
        draft_created_date=received if is_draft else None,
        draft_modified_date=received if is_draft else None,
        is_read=False,
        is_starred=False,
        is_archived=False,
        thread_msg_count=1,
        sender_email="someone@example.com",
        sender_name="Someone",
        recipient_list=("owner@example.com",),
        subject="hello",
        content="nothing much to report",
    )
    fields.update(overrides)
    return EmailRecord(**fields)


def case1_corpus() -> Corpus:
    """Starred drafts modified in the last week that talk about budgets."""
    def draft(mid, modified, starred=True, content="draft budget for the offsite"):
        created = modified - timedelta(days=1)
        return make_record(
            mid,
            is_draft=True,
            draft_created_date=created,
            draft_modified_date=modified,
            received_date=created,
            is_starred=starred,
            content=content,
        )

    return Corpus(
        (
            draft("c1-m1", ts("2025-06-28T09:00:00")),
            draft("c1-m2", ts("2025-06-10T09:00:00")),  # modified too long ago
            draft("c1-m3", ts("2025-06-29T09:00:00"), starred=False),
            draft("c1-m4", ts("2025-06-29T09:00:00"), content="lunch plans with the team"),
            make_record("c1-m5", is_starred=True, content="final budget numbers"),  # not a draft
            draft("c1-m6", ts("2025-06-23T12:00:00"), content="budget budget"),  # exactly now - 7 days
            draft("c1-m7", ts("2025-06-23T11:59:59"), content="budget"),  # one second too early
        )
    )


def case2_corpus() -> Corpus:
    L = FolderLabel
    return Corpus(
        (
            make_record("c2-m1", folder_labels=(L("L1", "Important"), L("L2", "Inbox"))),
            make_record("c2-m2", folder_labels=(L("L1", "Important"), L("L3", "Travel"))),
            make_record("c2-m3", folder_labels=(L("L4", "Important clients"),)),
            make_record("c2-m4", folder_labels=(L("L5", "Receipts"), L("L2", "Inbox"))),
            make_record("c2-m5"),
        )
    )


def case3_corpus() -> Corpus:
    A = Attachment
    return Corpus(
        (
            make_record(
                "c3-m1",
                subject="contract renewal with acme",
                attachment_list=(
                    A("a1", "contract_acme.pdf", "master services contract"),
                    A("a2", "photo.png", "team picture"),
                ),
            ),
            make_record(
                "c3-m2",
                subject="lunch menu",
                attachment_list=(A("a3", "contract_draft.docx", "contract terms"),),
            ),
            make_record(
                "c3-m3",
                subject="signed contract",
                attachment_list=(A("a4", "nda_contract.pdf", "contract"),),
            ),
            make_record("c3-m4", subject="contract question"),
        )
    )


@pytest.fixture(scope="session")
def embedder() -> HashingEmbedder:
    return HashingEmbedder()


@pytest.fixture(scope="session")
def small_corpus() -> Corpus:
    return synthesize_corpus(seed=7, n=200)


@pytest.fixture(scope="session")
def small_ctx(small_corpus, embedder) -> ExecutionContext:
    return ExecutionContext.build(small_corpus, embedder)


@pytest.fixture(scope="session")
def small_triplets(small_corpus, embedder, small_ctx):
    return TripletFactory(small_corpus, embedder, TripletConfig(), small_ctx).generate(40, seed=7)


# CLI -------------------------------------------------------------------------


def run_cli(*argv) -> tuple[int, str, str]:
    """Run the CLI in-process, returning (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli_main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def run_every_subcommand(work: Path, seed: int = 3) -> dict[str, bytes]:
    """Run each subcommand once on a small generated dataset; return everything it wrote."""
    work.mkdir(parents=True, exist_ok=True)
    data = work / "data"
    common = ("--seed", seed, "--no-timing")
    captured: dict[str, bytes] = {}

    def record(name, *argv):
        code, out, err = run_cli(*argv, *common)
        if code != 0:
            raise AssertionError(f"{name} exited {code}: {err}")
        captured[name] = (out + "\0" + err).encode()

    record("gen", "gen", "--n", 120, "--triplets", 12, "--out-dir", data)
    for f in ("corpus.jsonl", "triplets.jsonl", "stats.json"):
        captured[f"gen/{f}"] = (data / f).read_bytes()
    record("index", "index", "--corpus", data / "corpus.jsonl", "--index-out", data / "index.bin")
    captured["index/index.bin"] = (data / "index.bin").read_bytes()
    ctx = ("--corpus", data / "corpus.jsonl", "--index", data / "index.bin")
    first = json.loads((data / "triplets.jsonl").read_text().splitlines()[0])
    record("exec", "exec", *ctx, "--dsl", json.dumps(first["program"]))
    record("eval", "eval", *ctx, "--triplets", data / "triplets.jsonl", "--programs", data / "triplets.jsonl")
    reward_in = work / "reward.jsonl"
    reward_in.write_text(
        json.dumps({"output": "<query>" + json.dumps(first["program"]) + "</query>", "reference": [first["gold_id"]],
                    "pool": first["candidate_pool"]}) + "\n"
        + json.dumps({"output": "no tags", "reference": [first["gold_id"]]}) + "\n"
    )
    record("reward", "reward", *ctx, "--input", reward_in)
    record("rl-demo", "rl-demo", *ctx, "--triplets", data / "triplets.jsonl", "--steps", 3, "--group-size", 4)
    record("rl-demo-sweep", "rl-demo", *ctx, "--triplets", data / "triplets.jsonl", "--steps", 2,
           "--corruption-levels", "0,0.5,1")
    return captured
