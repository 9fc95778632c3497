"""Hybrid SQL + vector-search DSL: tags, AST, parser and renderer."""

from .ast import (
    And,
    BoolConst,
    Comparison,
    DslProgram,
    ElementPath,
    ElementProjection,
    FieldQuery,
    FieldRef,
    Literal,
    Membership,
    MessageIdProjection,
    Or,
    RelativeDate,
    SqlAst,
    iter_nodes,
)
from .parser import parse_program, parse_sql, tokenize
from .render import program_to_wire, render_program, render_sql
from .tags import extract_tagged_query, wrap_query

__all__ = [
    "And",
    "BoolConst",
    "Comparison",
    "DslProgram",
    "ElementPath",
    "ElementProjection",
    "FieldQuery",
    "FieldRef",
    "Literal",
    "Membership",
    "MessageIdProjection",
    "Or",
    "RelativeDate",
    "SqlAst",
    "iter_nodes",
    "parse_program",
    "parse_sql",
    "tokenize",
    "program_to_wire",
    "render_program",
    "render_sql",
    "extract_tagged_query",
    "wrap_query",
]
