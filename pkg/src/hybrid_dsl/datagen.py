"""Synthetic email corpora and supervised (query, program, gold) triplets.

Pipeline per instance: pick a gold record, sample a 1-3 attribute structured
filter from it, pick informative cue terms from its text, combine both into a
program, mine a hard-negative candidate pool around the gold, and keep the
instance only if the program retrieves the gold from that pool.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .corpus import Attachment, Corpus, EmailRecord, FolderLabel
from .dsl.ast import (
    And,
    Comparison,
    DslProgram,
    FieldQuery,
    FieldRef,
    Literal,
    Membership,
    MessageIdProjection,
    SqlAst,
)
from .dsl.parser import parse_field_queries, parse_sql, validate_program
from .dsl.render import program_to_wire
from .errors import EmptyInput, ExecutionError, InsufficientCorpus, RetryExhausted
from .executor import DEFAULT_NOW, ExecutionContext, execute
from .vectors import Embedder, FieldIndex, cosine_scores

log = logging.getLogger(__name__)

# Attributes a structured filter may draw from. received_date matches by UTC day.
FILTER_FIELDS = (
    "account_email",
    "received_date",
    "is_draft",
    "is_read",
    "is_starred",
    "is_archived",
    "thread_msg_count",
)

# Reported dataset profile: structure-dominated / content-dominated / balanced.
TARGET_MODALITY_MIX = (0.297, 0.453, 0.250)

# (k_str, k_uns) choices per modality bucket; each bucket averages k_total = 5.
_BUCKET_SHAPES = {
    "structure": ((3, 2),),
    "content": ((1, 3), (1, 4), (2, 3), (2, 4)),
    "balanced": ((2, 2), (3, 3)),
}


# vocabulary ------------------------------------------------------------------

FIRST_NAMES = (
    "alice bob carol david erin frank grace heidi ivan judy mallory nina oscar peggy "
    "quentin rupert sybil trent ursula victor wendy xavier yolanda zane priya kenji "
    "lucia mateo amara soren"
).split()
LAST_NAMES = (
    "anderson brooks chen diaz evans fischer garcia hughes ito jensen kowalski larsen "
    "moreau nakamura okafor patel quinn rossi schmidt tanaka umeh valdez weber xu young zimmer"
).split()
DOMAINS = ("northwind.com", "contoso.io", "fabrikam.net", "initech.com", "globex.org", "umbrella.co", "acme.com")
CODENAMES = (
    "falcon harbor juniper keystone lighthouse meridian nimbus orchid polaris quasar "
    "redwood sapphire tundra vortex willow zephyr atlas beacon cobalt delta ember "
    "fjord granite helix"
).split()
CITIES = "berlin lisbon osaka toronto nairobi denver madrid seoul dublin austin".split()
VENDORS = "acmecorp bluepeak cloudnine datastream evergreen fastlane greenleaf highpoint".split()

TOPICS: dict[str, dict[str, Any]] = {
    "budget": {
        "subjects": ["{q} budget review for project {code}", "revised budget forecast {code}", "budget approval needed {q}"],
        "words": "budget forecast spend allocation variance headcount capex opex quarterly approval finance "
        "overrun savings projection costs ledger".split(),
        "files": ["budget_{q}.xlsx", "forecast_{code}.xlsx"],
    },
    "contract": {
        "subjects": ["contract renewal with {vendor}", "signed contract for {code}", "contract redlines from legal"],
        "words": "contract clause renewal signature redline indemnity liability terms agreement counterparty "
        "amendment termination warranty negotiation".split(),
        "files": ["contract_{vendor}.pdf", "msa_{code}.docx"],
    },
    "invoice": {
        "subjects": ["invoice {inv} from {vendor}", "overdue invoice {inv}", "payment confirmation {inv}"],
        "words": "invoice payment overdue remittance billing receivable payable purchase order reconciliation "
        "accounts vendor due amount".split(),
        "files": ["invoice_{inv}.pdf", "receipt_{inv}.png"],
    },
    "travel": {
        "subjects": ["travel itinerary {city} offsite", "flight booking to {city}", "hotel reservation in {city}"],
        "words": "flight hotel itinerary booking reimbursement airport visa layover conference travel "
        "reservation shuttle expenses".split(),
        "files": ["itinerary_{city}.pdf", "boarding_pass.png"],
    },
    "hiring": {
        "subjects": ["candidate interview loop {code}", "offer letter draft", "hiring plan for {q}"],
        "words": "candidate interview recruiter offer onboarding resume referral headcount panel feedback "
        "compensation hiring role".split(),
        "files": ["resume_candidate.pdf", "offer_letter.docx"],
    },
    "launch": {
        "subjects": ["launch checklist for {code}", "product launch timeline {q}", "{code} go-live readiness"],
        "words": "launch roadmap milestone release beta rollout feature readiness marketing announcement "
        "timeline dependencies stakeholders".split(),
        "files": ["launch_plan_{code}.pptx", "roadmap_{q}.pdf"],
    },
    "security": {
        "subjects": ["security incident {ticket}", "phishing alert follow up", "access review for {code}"],
        "words": "incident phishing vulnerability breach credentials firewall patch audit encryption "
        "malware escalation remediation".split(),
        "files": ["incident_{ticket}.txt", "scan_report.pdf"],
    },
    "support": {
        "subjects": ["customer escalation {ticket}", "support ticket {ticket} update", "refund request from customer"],
        "words": "customer ticket escalation refund complaint resolution outage workaround sla support "
        "priority satisfaction".split(),
        "files": ["ticket_{ticket}.log", "screenshot.png"],
    },
    "report": {
        "subjects": ["{q} quarterly report draft", "monthly metrics summary", "board report for {q}"],
        "words": "report metrics revenue growth churn dashboard kpi summary analysis trends board "
        "quarterly performance".split(),
        "files": ["report_{q}.pdf", "metrics_{q}.csv"],
    },
    "compliance": {
        "subjects": ["compliance audit schedule {q}", "gdpr policy update", "audit findings for {code}"],
        "words": "compliance audit policy gdpr retention regulator controls evidence certification privacy "
        "findings attestation".split(),
        "files": ["audit_{code}.pdf", "policy_update.docx"],
    },
}

FILLER = (
    "please let me know if you have any questions about this we should align on next steps "
    "before the meeting on thursday thanks for the quick turnaround i have attached the latest "
    "version for your review can we schedule a call to discuss the details team will follow up "
    "with an update by end of week looping in the relevant people here as discussed earlier "
    "happy to help with anything else the current plan looks good overall but a few items "
    "still need clarification regarding ownership and timing feel free to forward this"
).split()

LABELS = (
    ("lbl-inbox", "Inbox"),
    ("lbl-important", "Important"),
    ("lbl-finance", "Finance"),
    ("lbl-legal", "Legal"),
    ("lbl-travel", "Travel"),
    ("lbl-hr", "HR"),
    ("lbl-projects", "Projects"),
    ("lbl-followup", "Follow up"),
    ("lbl-vip", "VIP clients"),
    ("lbl-newsletters", "Newsletters"),
)

STOPWORDS = frozenset(
    (
        "the and for with that this from have will your you are our can any about been into "
        "was were has had not but all per let know next best regards thanks hello dear team "
        "please should before after week here there these those them they what when where which "
        "who why how also just more some such than then very"
    ).split()
    + FILLER
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def doc_length(record: EmailRecord) -> int:
    """Whitespace token count of subject plus body."""
    return len(record.subject.split()) + len(record.content.split())


# corpus synthesis ------------------------------------------------------------


def _person(rng: random.Random) -> tuple[str, str]:
    first, last = rng.choice(FIRST_NAMES), rng.choice(LAST_NAMES)
    return f"{first.title()} {last.title()}", f"{first}.{last}@{rng.choice(DOMAINS)}"


def _slots(rng: random.Random) -> dict[str, str]:
    return {
        "q": f"q{rng.randint(1, 4)}",
        "code": rng.choice(CODENAMES),
        "vendor": rng.choice(VENDORS),
        "city": rng.choice(CITIES),
        "inv": f"inv{rng.randint(10000, 99999)}",
        "ticket": f"tkt{rng.randint(1000, 9999)}",
    }


def _body(rng: random.Random, topic: dict, slots: dict[str, str], length: int, signer: str) -> str:
    entities = [slots["code"], slots["vendor"], slots["city"], slots["inv"], slots["ticket"]]
    words: list[str] = []
    while len(words) < length - 3:
        sentence_len = rng.randint(8, 16)
        sentence = []
        for _ in range(sentence_len):
            u = rng.random()
            if u < 0.30:
                sentence.append(rng.choice(topic["words"]))
            elif u < 0.36:
                sentence.append(rng.choice(entities))
            else:
                sentence.append(rng.choice(FILLER))
        sentence[0] = sentence[0].capitalize()
        sentence[-1] += "."
        words.extend(sentence)
    words = words[: length - 3]
    words.extend(["Best", "regards,", signer])
    return " ".join(words)


def synthesize_record(rng: random.Random, index: int, accounts: Sequence[tuple[str, str]], now: datetime) -> EmailRecord:
    topic_name = rng.choice(sorted(TOPICS))
    topic = TOPICS[topic_name]
    slots = _slots(rng)
    owner_name, owner_email = rng.choice(accounts)
    is_draft = rng.random() < 0.18

    if rng.random() < 0.3:
        age = rng.randint(0, 14 * 86400)
    else:
        age = rng.randint(0, 365 * 86400)
    received = now - timedelta(seconds=age)
    created = modified = None
    if is_draft:
        created = received
        modified = min(now, created + timedelta(seconds=rng.randint(0, 5 * 86400)))
        sender_name, sender_email = owner_name, owner_email
    else:
        sender_name, sender_email = _person(rng)

    message_id = f"msg-{index:06d}"
    subject = rng.choice(topic["subjects"]).format(**slots).capitalize()
    body_len = max(20, int(rng.gauss(150, 30)))
    content = _body(rng, topic, slots, body_len, sender_name.split()[0])

    labels = rng.sample(LABELS, rng.choice((0, 1, 1, 2, 2, 3)))
    attachments = []
    for j in range(rng.choice((0, 0, 1, 1, 2, 3))):
        filename = rng.choice(topic["files"]).format(**slots)
        text = " ".join(rng.choice(topic["words"]) for _ in range(rng.randint(8, 20)))
        attachments.append(Attachment(f"{message_id}-att{j}", filename, f"{slots['code']} {text}"))

    return EmailRecord(
        message_id=message_id,
        account_email=owner_email,
        received_date=received,
        is_draft=is_draft,
        draft_created_date=created,
        draft_modified_date=modified,
        is_read=True if is_draft else rng.random() < 0.7,
        is_starred=rng.random() < 0.15,
        is_archived=False if is_draft else rng.random() < 0.25,
        thread_msg_count=min(12, 1 + int(rng.expovariate(0.6))),
        sender_email=sender_email,
        sender_name=sender_name,
        recipient_list=tuple(_person(rng)[1] for _ in range(rng.randint(1, 4))),
        cc_list=tuple(_person(rng)[1] for _ in range(rng.choice((0, 0, 1, 2, 3)))),
        bcc_list=tuple(_person(rng)[1] for _ in range(rng.choice((0, 0, 0, 1)))),
        folder_labels=tuple(FolderLabel(i, name) for i, name in sorted(labels)),
        attachment_list=tuple(attachments),
        subject=subject,
        content=content,
    )


def synthesize_corpus(seed: int, n: int, now: datetime = DEFAULT_NOW, n_accounts: int = 12) -> Corpus:
    rng = random.Random(f"corpus:{seed}")
    accounts = [_person(rng) for _ in range(n_accounts)]
    return Corpus(tuple(synthesize_record(rng, i, accounts, now) for i in range(n)))


# structured filters and candidate sets ---------------------------------------


@dataclass(frozen=True)
class StructuredFilter:
    attributes: tuple[tuple[str, Any], ...]

    def __post_init__(self) -> None:
        names = [a for a, _ in self.attributes]
        if not 1 <= len(names) <= 3 or len(set(names)) != len(names):
            raise ValueError("a structured filter holds 1-3 distinct attributes")

    def to_json(self) -> list:
        return [[a, v.isoformat() if isinstance(v, date) else v] for a, v in self.attributes]

    @classmethod
    def from_json(cls, raw: list) -> StructuredFilter:
        return cls(tuple((a, date.fromisoformat(v) if a == "received_date" else v) for a, v in raw))


def attribute_value(record: EmailRecord, name: str) -> Any:
    value = getattr(record, name)
    if name == "received_date":
        return value.date()
    return value


def _populated(value: Any) -> bool:
    return value is not None and value != ""


def sample_structured_filter(gold: EmailRecord, rng: random.Random, size: int | None = None) -> StructuredFilter:
    eligible = [a for a in FILTER_FIELDS if _populated(getattr(gold, a, None))]
    if not eligible:
        raise ValueError(f"record {gold.message_id} has no populated filter attribute")
    if size is None:
        size = rng.randint(1, 3)
    chosen = set(rng.sample(eligible, min(size, len(eligible))))
    return StructuredFilter(tuple((a, attribute_value(gold, a)) for a in FILTER_FIELDS if a in chosen))


def matches_attribute(record: EmailRecord, name: str, value: Any) -> bool:
    return attribute_value(record, name) == value


def structured_candidates(corpus: Corpus, flt: StructuredFilter) -> set[str]:
    return {
        r.message_id for r in corpus.records if all(matches_attribute(r, a, v) for a, v in flt.attributes)
    }


def content_vectors(corpus: Corpus, embedder: Embedder, index: FieldIndex | None = None) -> dict[str, np.ndarray]:
    if index is not None:
        return {k: index.vectors[i] for i, k in enumerate(index.keys)}
    return {r.message_id: embedder.embed(r.content) for r in corpus.records}


def semantic_refine(
    candidates: Iterable[str],
    cue_query: str,
    embedder: Embedder,
    tau: float,
    vectors: dict[str, np.ndarray],
) -> set[str]:
    """Candidates whose content embedding has cosine >= tau with the cue embedding."""
    ids = sorted(candidates)
    if not ids:
        return set()
    q = embedder.embed(cue_query)
    scores = cosine_scores(np.vstack([vectors[i] for i in ids]), q)
    return {i for i, s in zip(ids, scores) if s >= tau}


def build_candidate_pool(
    corpus: Corpus,
    gold: EmailRecord,
    flt: StructuredFilter,
    embedder: Embedder,
    pool_size: int,
    vectors: dict[str, np.ndarray] | FieldIndex | None = None,
) -> list[str]:
    """Gold plus hard negatives, returned in corpus order.

    Stage 1 takes records sharing at least one filter attribute with the gold
    (most shared attributes first, then content similarity). Stage 2 fills any
    remaining slots with the records most similar to the gold's content.
    ``vectors`` may be a precomputed content index or id->vector map.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    if len(corpus) < pool_size:
        raise InsufficientCorpus(f"corpus has {len(corpus)} records, pool needs {pool_size}")
    ids = corpus.ids
    if isinstance(vectors, FieldIndex) and vectors.keys == tuple(ids):
        matrix = vectors.vectors
    else:
        if vectors is None or isinstance(vectors, FieldIndex):
            vectors = content_vectors(corpus, embedder, vectors)
        matrix = np.vstack([vectors[m] for m in ids]) if ids else np.zeros((0, embedder.dimension))
    gold_pos = ids.index(gold.message_id)
    sims = cosine_scores(matrix, matrix[gold_pos])

    # Per-attribute match masks, vectorised over the corpus.
    overlap = np.zeros(len(ids), dtype=np.int64)
    for name, value in flt.attributes:
        overlap += np.fromiter((attribute_value(r, name) == value for r in corpus.records), bool, len(ids))
    overlap[gold_pos] = -1

    positions = np.arange(len(ids))
    stage1 = positions[overlap > 0]
    stage1 = stage1[np.lexsort((stage1, -sims[stage1], -overlap[stage1]))]
    stage2 = positions[overlap == 0]
    stage2 = stage2[np.lexsort((stage2, -sims[stage2]))]
    picked = [gold_pos] + list(np.concatenate([stage1, stage2])[: pool_size - 1])
    return [ids[i] for i in sorted(int(p) for p in picked)]


# triplets --------------------------------------------------------------------


def document_frequencies(corpus: Corpus) -> Counter:
    df: Counter = Counter()
    for r in corpus.records:
        df.update(set(tokenize(r.subject + " " + r.content)))
    return df


def informative_terms(record: EmailRecord, df: Counter, limit: int = 8) -> list[str]:
    """Gold tokens ordered by ascending document frequency (rarest first)."""
    tokens = {
        t
        for t in tokenize(record.subject + " " + record.content)
        if len(t) >= 3 and t not in STOPWORDS and not t.isdigit()
    }
    return sorted(tokens, key=lambda t: (df[t], t))[:limit]


def filter_predicates(flt: StructuredFilter) -> list[Comparison]:
    preds: list[Comparison] = []
    for name, value in flt.attributes:
        if name == "received_date":
            start = datetime.combine(value, time(0, 0, 0))
            end = start + timedelta(days=1)
            preds.append(Comparison(FieldRef(name), ">=", Literal(start.strftime("%Y-%m-%d %H:%M:%S"))))
            preds.append(Comparison(FieldRef(name), "<", Literal(end.strftime("%Y-%m-%d %H:%M:%S"))))
        else:
            preds.append(Comparison(FieldRef(name), "=", Literal(value)))
    return preds


def build_program(flt: StructuredFilter, cue_terms: Sequence[str]) -> DslProgram:
    predicate = And(tuple(filter_predicates(flt)) + (Membership(FieldRef("message_id"), 0),))
    query = FieldQuery("content", " ".join(cue_terms), alias="email_content")
    program = DslProgram(SqlAst(MessageIdProjection(), None, predicate, True), (query,))
    validate_program(program)
    return program


_BOOL_PHRASES = {
    "is_draft": ("draft", "sent"),
    "is_read": ("read", "unread"),
    "is_starred": ("starred", "unstarred"),
    "is_archived": ("archived", "unarchived"),
}

_OPENERS = ("Find", "Show me", "Look up", "Retrieve", "I need")
_NOUNS = ("emails", "messages", "mails")
_CONNECTORS = ("that mention", "about", "discussing", "containing", "referring to")


def template_query(flt: StructuredFilter, cue_terms: Sequence[str], rng: random.Random) -> str:
    """Slot-filling natural-language rendering of a filter plus cues."""
    adjectives = []
    clauses = []
    for name, value in flt.attributes:
        if name in _BOOL_PHRASES:
            adjectives.append(_BOOL_PHRASES[name][0 if value else 1])
        elif name == "account_email":
            clauses.append(f"in the mailbox of {value}")
        elif name == "received_date":
            clauses.append(f"received on {value.strftime('%B')} {value.day}, {value.year}")
        elif name == "thread_msg_count":
            clauses.append(f"in a thread of {value} message{'s' if value != 1 else ''}")
    if len(cue_terms) > 1:
        cues = ", ".join(f"'{c}'" for c in cue_terms[:-1]) + f" and '{cue_terms[-1]}'"
    else:
        cues = f"'{cue_terms[0]}'"
    parts = [rng.choice(_OPENERS)]
    parts.extend(adjectives)
    parts.append(rng.choice(_NOUNS))
    parts.extend(clauses)
    parts.append(rng.choice(_CONNECTORS))
    parts.append(cues)
    return " ".join(parts) + "."


@dataclass(frozen=True)
class TripletInstance:
    query_id: str
    nl_query: str
    program: DslProgram
    gold_id: str
    candidate_pool: tuple[str, ...]
    cue_terms: tuple[str, ...]
    k_str: int
    k_uns: int
    structured_filter: StructuredFilter | None = None

    @property
    def k_total(self) -> int:
        return self.k_str + self.k_uns

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "nl_query": self.nl_query,
            "program": program_to_wire(self.program),
            "gold_id": self.gold_id,
            "candidate_pool": list(self.candidate_pool),
            "cue_terms": list(self.cue_terms),
            "k_str": self.k_str,
            "k_uns": self.k_uns,
            "structured_filter": self.structured_filter.to_json() if self.structured_filter else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> TripletInstance:
        wire = obj["program"]
        program = DslProgram(parse_sql(wire["sql"]), parse_field_queries(wire["vector_query_list"]))
        validate_program(program)
        flt = obj.get("structured_filter")
        return cls(
            query_id=obj["query_id"],
            nl_query=obj["nl_query"],
            program=program,
            gold_id=obj["gold_id"],
            candidate_pool=tuple(obj["candidate_pool"]),
            cue_terms=tuple(obj["cue_terms"]),
            k_str=obj["k_str"],
            k_uns=obj["k_uns"],
            structured_filter=StructuredFilter.from_json(flt) if flt else None,
        )


@dataclass(frozen=True)
class TripletConfig:
    pool_size: int = 16
    top_k: int = 20
    tau: float = 0.1
    max_attempts: int = 10
    # None draws filter size uniformly from 1-3 and cue count from 2-4.
    modality_mix: tuple[float, float, float] | None = TARGET_MODALITY_MIX
    cue_candidates: int = 8


def sample_shape(rng: random.Random, config: TripletConfig) -> tuple[int, int]:
    if config.modality_mix is None:
        return rng.randint(1, 3), rng.randint(2, 4)
    bucket = rng.choices(("structure", "content", "balanced"), weights=config.modality_mix)[0]
    return rng.choice(_BUCKET_SHAPES[bucket])


@dataclass
class TripletFactory:
    """Shared state (index, frequencies, content vectors) for generating many triplets."""

    corpus: Corpus
    embedder: Embedder
    config: TripletConfig = field(default_factory=TripletConfig)
    ctx: ExecutionContext | None = None
    nl_query_fn: Callable[[StructuredFilter, Sequence[str], random.Random], str] | None = None

    def __post_init__(self) -> None:
        if self.ctx is None:
            self.ctx = ExecutionContext.build(self.corpus, self.embedder)
        self.ctx = ExecutionContext(
            self.ctx.corpus, self.ctx.indexes, self.embedder, self.ctx.now, self.config.top_k, self.config.tau
        )
        self.df = document_frequencies(self.corpus)
        self.vectors = self.ctx.indexes.get("content") or content_vectors(self.corpus, self.embedder)

    def assemble(self, rng: random.Random, query_id: str = "q0") -> TripletInstance:
        if not len(self.corpus):
            raise EmptyInput("cannot build triplets from an empty corpus")
        gold = rng.choice(self.corpus.records)
        k_str, k_uns = sample_shape(rng, self.config)
        terms = informative_terms(gold, self.df, max(self.config.cue_candidates, k_uns))
        k_uns = min(k_uns, len(terms))
        for attempt in range(self.config.max_attempts):
            flt = sample_structured_filter(gold, rng, size=k_str)
            cues = rng.sample(terms, k_uns)
            program = build_program(flt, cues)
            pool = build_candidate_pool(
                self.corpus, gold, flt, self.embedder, self.config.pool_size, self.vectors
            )
            try:
                result = execute(program, self.ctx.restricted(pool))
            except ExecutionError:  # pragma: no cover - generated programs are type-correct
                continue
            if gold.message_id in result.keys:
                make_nl = self.nl_query_fn or template_query
                return TripletInstance(
                    query_id=query_id,
                    nl_query=make_nl(flt, cues, rng),
                    program=program,
                    gold_id=gold.message_id,
                    candidate_pool=tuple(pool),
                    cue_terms=tuple(cues),
                    k_str=len(flt.attributes),
                    k_uns=len(cues),
                    structured_filter=flt,
                )
        raise RetryExhausted(f"{query_id}: gold {gold.message_id} not retrievable after {self.config.max_attempts} attempts")

    def generate(self, n: int, seed: int, max_instances: int | None = None) -> list[TripletInstance]:
        """Emit ``n`` self-consistent triplets; each instance uses its own seeded substream."""
        out: list[TripletInstance] = []
        limit = max_instances if max_instances is not None else 2 * n + 10
        i = 0
        while len(out) < n and i < limit:
            rng = random.Random(f"triplet:{seed}:{i}")
            try:
                out.append(self.assemble(rng, query_id=f"q{i:06d}"))
            except RetryExhausted as exc:
                log.info("discarded instance: %s", exc)
            i += 1
        return out


def assemble_triplet(
    corpus: Corpus,
    embedder: Embedder,
    rng: random.Random,
    config: TripletConfig | None = None,
    query_id: str = "q0",
) -> TripletInstance:
    return TripletFactory(corpus, embedder, config or TripletConfig()).assemble(rng, query_id)


def generate_triplets(
    corpus: Corpus,
    embedder: Embedder,
    n: int,
    seed: int,
    config: TripletConfig | None = None,
) -> list[TripletInstance]:
    return TripletFactory(corpus, embedder, config or TripletConfig()).generate(n, seed)


# statistics ------------------------------------------------------------------


def modality_bucket(k_str: int, k_uns: int) -> str:
    if k_str > k_uns:
        return "structure_dominated"
    if k_uns > k_str:
        return "content_dominated"
    return "balanced"


def profile_dataset(triplets: Sequence[TripletInstance], corpus: Corpus | None = None) -> dict:
    if not triplets:
        raise EmptyInput("no triplets to profile")
    n = len(triplets)
    buckets = Counter(modality_bucket(t.k_str, t.k_uns) for t in triplets)
    report = {
        "count": n,
        "avg_k_str": sum(t.k_str for t in triplets) / n,
        "avg_k_uns": sum(t.k_uns for t in triplets) / n,
        "avg_k_total": sum(t.k_total for t in triplets) / n,
        "modality_pct": {
            name: 100.0 * buckets[name] / n for name in ("structure_dominated", "content_dominated", "balanced")
        },
        "avg_pool_size": sum(len(t.candidate_pool) for t in triplets) / n,
    }
    if corpus is not None and len(corpus):
        report["corpus_size"] = len(corpus)
        report["avg_doc_length_tokens"] = sum(doc_length(r) for r in corpus.records) / len(corpus)
    return report


def dump_triplets(triplets: Iterable[TripletInstance]) -> str:
    return "".join(json.dumps(t.to_json(), ensure_ascii=False) + "\n" for t in triplets)


def load_triplets(text: str) -> list[TripletInstance]:
    return [TripletInstance.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


def mean_doc_length(corpus: Corpus) -> float:
    return math.fsum(doc_length(r) for r in corpus.records) / len(corpus) if len(corpus) else 0.0
