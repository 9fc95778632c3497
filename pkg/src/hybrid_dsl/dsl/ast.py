"""AST node types for the hybrid DSL.

A program pairs a restricted SQL statement with an ordered list of
field-scoped vector queries. ``IN <vector_k>`` nodes in the SQL refer to the
k-th vector query by position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union


@dataclass(frozen=True)
class FieldRef:
    """A column of the ``email`` table, stored unqualified."""

    name: str


@dataclass(frozen=True)
class ElementPath:
    """``json_extract(json_each.value, '$.<attr>')`` over the json_each cursor."""

    attr: str


@dataclass(frozen=True, eq=False)
class Literal:
    value: str | int | float | bool

    # Type-strict: Literal(1) must not equal Literal(True).
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Literal):
            return NotImplemented
        return type(self.value) is type(other.value) and self.value == other.value

    def __hash__(self) -> int:
        return hash((type(self.value).__name__, self.value))


@dataclass(frozen=True)
class RelativeDate:
    """``date('now', '<days> day')``; resolved against an injected clock."""

    days: int


@dataclass(frozen=True)
class Comparison:
    left: FieldRef | ElementPath
    op: str  # one of =, !=, <, <=, >, >=
    right: Literal | RelativeDate


@dataclass(frozen=True)
class Membership:
    target: FieldRef | ElementPath
    placeholder: int


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class And:
    items: tuple[Expr, ...]


@dataclass(frozen=True)
class Or:
    items: tuple[Expr, ...]


Expr = Union[Comparison, Membership, BoolConst, And, Or]
Operand = Union[FieldRef, ElementPath]

COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class MessageIdProjection:
    pass


@dataclass(frozen=True)
class ElementProjection:
    attr: str
    alias: str | None = None


Projection = Union[MessageIdProjection, ElementProjection]


@dataclass(frozen=True)
class SqlAst:
    projection: Projection
    each_field: str | None = None  # list field expanded by json_each, if any
    predicate: Expr | None = None
    distinct: bool = True


@dataclass(frozen=True)
class FieldQuery:
    field: str  # canonical searchable field
    text: str
    alias: str | None = field(default=None, compare=False)  # spelling used in the source

    @property
    def written_name(self) -> str:
        return self.alias or self.field


@dataclass(frozen=True)
class DslProgram:
    sql: SqlAst
    vector_query_list: tuple[FieldQuery, ...] = ()

    def placeholders(self) -> list[int]:
        return sorted({m.placeholder for m in iter_nodes(self.sql.predicate) if isinstance(m, Membership)})


def iter_nodes(expr: Expr | None) -> Iterator[Expr]:
    """Pre-order walk over a predicate tree."""
    if expr is None:
        return
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, (And, Or)):
            stack.extend(reversed(node.items))
