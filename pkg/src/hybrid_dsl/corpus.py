"""Email document schema and JSONL persistence."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

from .errors import DuplicateId, IoFailure, MalformedRecord, UnknownField


class Granularity(str, enum.Enum):
    MESSAGE = "message"
    ELEMENT = "element"


# Value kinds used by the executor's type rules.
STRING = "string"
TIMESTAMP = "timestamp"
BOOL = "bool"
INT = "int"
STRING_LIST = "string_list"
ELEMENT_LIST = "element_list"

FIELD_TYPES: dict[str, str] = {
    "message_id": STRING,
    "account_email": STRING,
    "received_date": TIMESTAMP,
    "is_draft": BOOL,
    "draft_created_date": TIMESTAMP,
    "draft_modified_date": TIMESTAMP,
    "is_read": BOOL,
    "is_starred": BOOL,
    "is_archived": BOOL,
    "thread_msg_count": INT,
    "sender_email": STRING,
    "sender_name": STRING,
    "recipient_list": STRING_LIST,
    "cc_list": STRING_LIST,
    "bcc_list": STRING_LIST,
    "folder_labels": ELEMENT_LIST,
    "attachment_list": ELEMENT_LIST,
    "subject": STRING,
    "content": STRING,
}

STRUCTURED_FIELDS = (
    "account_email",
    "received_date",
    "is_draft",
    "draft_created_date",
    "draft_modified_date",
    "is_read",
    "is_starred",
    "is_archived",
    "thread_msg_count",
)

UNSTRUCTURED_FIELDS = (
    "sender_email",
    "sender_name",
    "recipient_list",
    "cc_list",
    "bcc_list",
    "folder_labels",
    "attachment_list",
    "subject",
    "content",
)

# Attributes each element kind exposes through json_extract.
ELEMENT_ATTRIBUTES: dict[str, tuple[str, ...]] = {
    "folder_labels": ("id", "name"),
    "attachment_list": ("id", "filename", "text"),
}


# Query-language spellings that differ from the schema column names.
FIELD_ALIASES = {"email_content": "content"}

_SCHEMA_NAMES = frozenset(name for name in FIELD_TYPES if name != "message_id")


def resolve_field_alias(name: str) -> str:
    """Map a vector-query field name to its schema column."""
    if name in FIELD_ALIASES:
        return FIELD_ALIASES[name]
    if name in _SCHEMA_NAMES:
        return name
    raise UnknownField(name)


def default_field_registry() -> dict[str, Granularity]:
    return {
        name: Granularity.ELEMENT if name in ELEMENT_ATTRIBUTES else Granularity.MESSAGE
        for name in UNSTRUCTURED_FIELDS
    }


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 / SQLite style timestamp into an aware UTC datetime.

    Accepts ``2024-03-05T10:00:00Z``, ``2024-03-05 10:00:00``, offsets such as
    ``+02:00`` and bare dates. Naive values are taken to be UTC.
    """
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class FolderLabel:
    id: str
    name: str


@dataclass(frozen=True)
class Attachment:
    id: str
    filename: str
    text: str


@dataclass(frozen=True)
class EmailRecord:
    message_id: str
    account_email: str
    received_date: datetime
    is_draft: bool
    draft_created_date: datetime | None
    draft_modified_date: datetime | None
    is_read: bool
    is_starred: bool
    is_archived: bool
    thread_msg_count: int
    sender_email: str
    sender_name: str
    recipient_list: tuple[str, ...] = ()
    cc_list: tuple[str, ...] = ()
    bcc_list: tuple[str, ...] = ()
    folder_labels: tuple[FolderLabel, ...] = ()
    attachment_list: tuple[Attachment, ...] = ()
    subject: str = ""
    content: str = ""

    def elements(self, list_field: str) -> tuple[FolderLabel, ...] | tuple[Attachment, ...]:
        return getattr(self, list_field)

    def to_json(self) -> dict[str, Any]:
        def ts(v: datetime | None) -> str | None:
            return None if v is None else format_timestamp(v)

        return {
            "message_id": self.message_id,
            "account_email": self.account_email,
            "received_date": ts(self.received_date),
            "is_draft": self.is_draft,
            "draft_created_date": ts(self.draft_created_date),
            "draft_modified_date": ts(self.draft_modified_date),
            "is_read": self.is_read,
            "is_starred": self.is_starred,
            "is_archived": self.is_archived,
            "thread_msg_count": self.thread_msg_count,
            "sender_email": self.sender_email,
            "sender_name": self.sender_name,
            "recipient_list": list(self.recipient_list),
            "cc_list": list(self.cc_list),
            "bcc_list": list(self.bcc_list),
            "folder_labels": [{"id": f.id, "name": f.name} for f in self.folder_labels],
            "attachment_list": [
                {"id": a.id, "filename": a.filename, "text": a.text} for a in self.attachment_list
            ],
            "subject": self.subject,
            "content": self.content,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> EmailRecord:
        """Build and validate a record; raises ValueError/KeyError/TypeError on bad input."""
        if not isinstance(obj, dict):
            raise TypeError("record must be a JSON object")
        missing = [name for name in FIELD_TYPES if name not in obj]
        if missing:
            raise KeyError(f"missing fields: {', '.join(missing)}")
        extra = sorted(set(obj) - set(FIELD_TYPES))
        if extra:
            raise KeyError(f"unknown fields: {', '.join(extra)}")

        def string(name: str) -> str:
            v = obj[name]
            if not isinstance(v, str):
                raise TypeError(f"{name} must be a string")
            return v

        def boolean(name: str) -> bool:
            v = obj[name]
            if not isinstance(v, bool):
                raise TypeError(f"{name} must be a boolean")
            return v

        def timestamp(name: str, optional: bool = False) -> datetime | None:
            v = obj[name]
            if v is None and optional:
                return None
            if not isinstance(v, str):
                raise TypeError(f"{name} must be a timestamp string")
            return parse_timestamp(v)

        def strings(name: str) -> tuple[str, ...]:
            v = obj[name]
            if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
                raise TypeError(f"{name} must be a list of strings")
            return tuple(v)

        def objects(name: str, keys: tuple[str, ...]) -> list[dict[str, str]]:
            v = obj[name]
            if not isinstance(v, list):
                raise TypeError(f"{name} must be a list")
            out = []
            for item in v:
                if not isinstance(item, dict) or set(item) != set(keys):
                    raise TypeError(f"{name} elements must have exactly keys {keys}")
                if not all(isinstance(item[k], str) for k in keys):
                    raise TypeError(f"{name} element values must be strings")
                out.append(item)
            return out

        count = obj["thread_msg_count"]
        if isinstance(count, bool) or not isinstance(count, int):
            raise TypeError("thread_msg_count must be an integer")

        record = cls(
            message_id=string("message_id"),
            account_email=string("account_email"),
            received_date=timestamp("received_date"),
            is_draft=boolean("is_draft"),
            draft_created_date=timestamp("draft_created_date", optional=True),
            draft_modified_date=timestamp("draft_modified_date", optional=True),
            is_read=boolean("is_read"),
            is_starred=boolean("is_starred"),
            is_archived=boolean("is_archived"),
            thread_msg_count=count,
            sender_email=string("sender_email"),
            sender_name=string("sender_name"),
            recipient_list=strings("recipient_list"),
            cc_list=strings("cc_list"),
            bcc_list=strings("bcc_list"),
            folder_labels=tuple(
                FolderLabel(**d) for d in objects("folder_labels", ELEMENT_ATTRIBUTES["folder_labels"])
            ),
            attachment_list=tuple(
                Attachment(**d) for d in objects("attachment_list", ELEMENT_ATTRIBUTES["attachment_list"])
            ),
            subject=string("subject"),
            content=string("content"),
        )
        record.validate()
        return record

    def validate(self) -> None:
        if self.thread_msg_count < 1:
            raise ValueError("thread_msg_count must be >= 1")
        has_created = self.draft_created_date is not None
        has_modified = self.draft_modified_date is not None
        if self.is_draft != has_created or self.is_draft != has_modified:
            raise ValueError("draft dates must be present iff is_draft")
        if has_created and has_modified and self.draft_modified_date < self.draft_created_date:
            raise ValueError("draft_modified_date precedes draft_created_date")
        for name in ELEMENT_ATTRIBUTES:
            ids = [e.id for e in self.elements(name)]
            if len(ids) != len(set(ids)):
                raise ValueError(f"duplicate element ids in {name}")


@dataclass(frozen=True)
class Corpus:
    records: tuple[EmailRecord, ...] = ()
    field_registry: dict[str, Granularity] = field(default_factory=default_field_registry)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for r in self.records:
            if r.message_id in seen:
                raise DuplicateId(r.message_id)
            seen.add(r.message_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.message_id for r in self.records]

    def by_id(self) -> dict[str, EmailRecord]:
        return {r.message_id: r for r in self.records}

    def subset(self, message_ids: Iterable[str]) -> Corpus:
        """Records whose id is in ``message_ids``, kept in corpus order."""
        wanted = set(message_ids)
        return Corpus(tuple(r for r in self.records if r.message_id in wanted), dict(self.field_registry))


def load_corpus(path: str | Path) -> Corpus:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    records: list[EmailRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            record = EmailRecord.from_json(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedRecord(lineno, str(exc)) from exc
        if record.message_id in seen:
            raise DuplicateId(record.message_id)
        seen.add(record.message_id)
        records.append(record)
    return Corpus(tuple(records))


def dump_corpus_lines(corpus: Corpus) -> str:
    return "".join(json.dumps(r.to_json(), ensure_ascii=False) + "\n" for r in corpus.records)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    try:
        Path(path).write_text(dump_corpus_lines(corpus), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
