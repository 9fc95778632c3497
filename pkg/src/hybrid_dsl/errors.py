"""Exception hierarchy shared across the package.

Every error raised on purpose derives from :class:`HybridDslError`, so callers
that only care about "did this fail for a known reason" can catch one type.
"""

from __future__ import annotations


class HybridDslError(Exception):
    """Base class for all package errors."""


# corpus ----------------------------------------------------------------------


class CorpusError(HybridDslError):
    pass


class MalformedRecord(CorpusError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateId(CorpusError):
    def __init__(self, message_id: str):
        super().__init__(f"duplicate message_id {message_id!r}")
        self.message_id = message_id


class IoFailure(CorpusError):
    pass


# dsl -------------------------------------------------------------------------


class DslError(HybridDslError):
    """Any failure to turn model output into a validated program."""


class TagError(DslError):
    pass


class NoTag(TagError):
    def __init__(self) -> None:
        super().__init__("no <query>...</query> block found")


class MultipleTags(TagError):
    def __init__(self, count: int):
        super().__init__(f"expected one <query> block, found {count}")
        self.count = count


class UnterminatedTag(TagError):
    def __init__(self) -> None:
        super().__init__("<query> block is not terminated by </query>")


class JsonMalformed(DslError):
    pass


class SqlSyntaxError(DslError):
    def __init__(self, position: int, expected: str, found: str | None = None):
        msg = f"at position {position}: expected {expected}"
        if found is not None:
            msg += f", found {found!r}"
        super().__init__(msg)
        self.position = position
        self.expected = expected
        self.found = found


class UnknownField(DslError):
    def __init__(self, name: str):
        super().__init__(f"unknown field {name!r}")
        self.name = name


class PlaceholderOutOfRange(DslError):
    def __init__(self, index: int, available: int):
        super().__init__(f"<vector_{index}> referenced but only {available} vector queries given")
        self.index = index
        self.available = available


class DanglingVectorQuery(DslError):
    def __init__(self, index: int):
        super().__init__(f"vector query {index} is never referenced by a <vector_{index}> placeholder")
        self.index = index


# vector index ----------------------------------------------------------------


class DimensionMismatch(HybridDslError):
    pass


class FieldMismatch(HybridDslError):
    pass


class IndexFormatError(HybridDslError):
    pass


# execution -------------------------------------------------------------------


class ExecutionError(HybridDslError):
    """A runtime fault while executing a parsed program."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class TypeMismatch(ExecutionError):
    def __init__(self, field: str, detail: str = ""):
        reason = f"type mismatch on {field!r}"
        if detail:
            reason += f": {detail}"
        super().__init__(reason)
        self.field = field


class NotAListField(ExecutionError):
    def __init__(self, field: str):
        super().__init__(f"{field!r} is not an element-keyed list field")
        self.field = field


# datagen ---------------------------------------------------------------------


class DatagenError(HybridDslError):
    pass


class InsufficientCorpus(DatagenError):
    pass


class RetryExhausted(DatagenError):
    pass


class EmptyInput(DatagenError):
    pass


# reward / objectives / evaluation --------------------------------------------


class EmptyReference(HybridDslError):
    pass


class GroupTooSmall(HybridDslError):
    pass


class ShapeMismatch(HybridDslError):
    pass


class EmptyBatch(HybridDslError):
    pass


class AlignmentError(HybridDslError):
    pass
