"""Parser for the JSON-wrapped hybrid DSL and its restricted SQL dialect.

Accepted SQL (keywords and function names are case-insensitive, field names
are not)::

    SELECT [DISTINCT] projection
    FROM email [, json_each(email.<list_field>)]
    [WHERE expr] [;]

    projection := [email.]message_id
                | json_extract(json_each.value, '$.<attr>') [AS <alias>]
    expr       := conj (OR conj)*
    conj       := atom (AND atom)*
    atom       := '(' expr ')' | TRUE | FALSE
                | operand IN <vector_N>
                | operand cmp value
    operand    := [email.]<field> | json_extract(json_each.value, '$.<attr>')
    value      := 'string' | number | TRUE | FALSE
                | date('now'[, '<+/-N> day[s]'])

Anything else, including joins, subqueries and other functions, is a syntax
error.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from ..corpus import BOOL, FIELD_TYPES, resolve_field_alias
from ..errors import (
    DanglingVectorQuery,
    JsonMalformed,
    PlaceholderOutOfRange,
    SqlSyntaxError,
)
from .ast import (
    And,
    BoolConst,
    Comparison,
    DslProgram,
    ElementPath,
    ElementProjection,
    Expr,
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

MAX_DEPTH = 64

KEYWORDS = frozenset(
    {"SELECT", "DISTINCT", "FROM", "WHERE", "AND", "OR", "IN", "AS", "TRUE", "FALSE", "NOT", "NULL"}
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<placeholder><vector_\d+>)
  | (?P<string>'(?:[^']|'')*')
  | (?P<number>-?\d+(?:\.\d+)?(?![A-Za-z_]))
  | (?P<op>!=|<>|<=|>=|=|<|>)
  | (?P<punct>[(),.;])
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)

_OFFSET_RE = re.compile(r"^\s*([+-]?\d+)\s+days?\s*$", re.IGNORECASE)
_PATH_RE = re.compile(r"^\$\.([A-Za-z_][A-Za-z0-9_]*)$")


@dataclass(frozen=True)
class Token:
    kind: str  # placeholder | string | number | op | punct | ident | eof
    text: str
    pos: int

    @property
    def upper(self) -> str:
        return self.text.upper()


def tokenize(sql: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise SqlSyntaxError(pos, "a token", sql[pos])
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(0), pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(sql)))
    return tokens


class _SqlParser:
    def __init__(self, sql: str):
        self.tokens = tokenize(sql)
        self.i = 0
        self.each_field: str | None = None
        self._element_refs: list[int] = []  # positions of json_extract uses

    # token helpers -----------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def error(self, expected: str) -> SqlSyntaxError:
        t = self.tok
        return SqlSyntaxError(t.pos, expected, t.text if t.kind != "eof" else "end of input")

    def at_keyword(self, word: str) -> bool:
        return self.tok.kind == "ident" and self.tok.upper == word

    def expect_keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            raise self.error(word)
        return self.advance()

    def expect_punct(self, ch: str) -> Token:
        if self.tok.kind != "punct" or self.tok.text != ch:
            raise self.error(repr(ch))
        return self.advance()

    def at_punct(self, ch: str) -> bool:
        return self.tok.kind == "punct" and self.tok.text == ch

    def expect_identifier(self, what: str) -> Token:
        if self.tok.kind != "ident" or self.tok.upper in KEYWORDS:
            raise self.error(what)
        return self.advance()

    def expect_string(self, what: str) -> str:
        if self.tok.kind != "string":
            raise self.error(what)
        return _unquote(self.advance().text)

    # grammar -----------------------------------------------------------------

    def parse(self) -> SqlAst:
        self.expect_keyword("SELECT")
        distinct = False
        if self.at_keyword("DISTINCT"):
            self.advance()
            distinct = True
        projection = self.parse_projection()
        self.expect_keyword("FROM")
        self.parse_sources()
        predicate = None
        if self.at_keyword("WHERE"):
            self.advance()
            predicate = self.parse_expr(0)
        if self.at_punct(";"):
            self.advance()
        if self.tok.kind != "eof":
            raise self.error("end of statement")
        if self._element_refs and self.each_field is None:
            raise SqlSyntaxError(self._element_refs[0], "json_each(...) in FROM before json_extract")
        return SqlAst(projection, self.each_field, predicate, distinct)

    def parse_projection(self):
        if self.at_keyword("JSON_EXTRACT"):
            attr = self.parse_json_extract()
            alias = None
            if self.at_keyword("AS"):
                self.advance()
                alias = self.expect_identifier("alias name").text
            return ElementProjection(attr, alias)
        start = self.tok.pos
        name = self.parse_column_name()
        if name != "message_id":
            raise SqlSyntaxError(start, "message_id or json_extract(...) projection", name)
        return MessageIdProjection()

    def parse_column_name(self) -> str:
        first = self.expect_identifier("column name")
        if self.at_punct("."):
            if first.text.lower() != "email":
                raise SqlSyntaxError(first.pos, "table 'email'", first.text)
            self.advance()
            return self.expect_identifier("column name").text
        return first.text

    def parse_sources(self) -> None:
        table = self.expect_identifier("table 'email'")
        if table.text.lower() != "email":
            raise SqlSyntaxError(table.pos, "table 'email'", table.text)
        if self.at_punct(","):
            self.advance()
            self.expect_keyword("JSON_EACH")
            self.expect_punct("(")
            self.each_field = self.parse_column_name()
            self.expect_punct(")")

    def parse_json_extract(self) -> str:
        start = self.expect_keyword("JSON_EXTRACT").pos
        self.expect_punct("(")
        self.expect_keyword("JSON_EACH")
        self.expect_punct(".")
        if not self.at_keyword("VALUE"):
            raise self.error("json_each.value")
        self.advance()
        self.expect_punct(",")
        path_tok = self.tok
        path = self.expect_string("a JSON path string")
        m = _PATH_RE.match(path)
        if m is None:
            raise SqlSyntaxError(path_tok.pos, "a path of the form '$.name'", path)
        self.expect_punct(")")
        self._element_refs.append(start)
        return m.group(1)

    def parse_expr(self, depth: int) -> Expr:
        if depth > MAX_DEPTH:
            raise self.error(f"at most {MAX_DEPTH} levels of nesting")
        items = [self.parse_conj(depth)]
        while self.at_keyword("OR"):
            self.advance()
            items.append(self.parse_conj(depth))
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_conj(self, depth: int) -> Expr:
        items = [self.parse_atom(depth)]
        while self.at_keyword("AND"):
            self.advance()
            items.append(self.parse_atom(depth))
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_atom(self, depth: int) -> Expr:
        if self.at_punct("("):
            self.advance()
            inner = self.parse_expr(depth + 1)
            self.expect_punct(")")
            return inner
        if self.at_keyword("TRUE") or self.at_keyword("FALSE"):
            return BoolConst(self.advance().upper == "TRUE")
        operand = self.parse_operand()
        if self.at_keyword("IN"):
            self.advance()
            if self.tok.kind != "placeholder":
                raise self.error("<vector_N> placeholder")
            t = self.advance()
            return Membership(operand, int(t.text[len("<vector_") : -1]))
        if self.tok.kind != "op":
            raise self.error("comparison operator or IN")
        op = self.advance().text
        if op == "<>":
            op = "!="
        value = self.parse_value()
        if (
            isinstance(operand, FieldRef)
            and FIELD_TYPES.get(operand.name) == BOOL
            and isinstance(value, Literal)
            and type(value.value) is int
            and value.value in (0, 1)
        ):
            value = Literal(bool(value.value))
        return Comparison(operand, op, value)

    def parse_operand(self):
        if self.at_keyword("JSON_EXTRACT"):
            return ElementPath(self.parse_json_extract())
        return FieldRef(self.parse_column_name())

    def parse_value(self):
        t = self.tok
        if t.kind == "string":
            self.advance()
            return Literal(_unquote(t.text))
        if t.kind == "number":
            self.advance()
            return Literal(float(t.text) if "." in t.text else int(t.text))
        if self.at_keyword("TRUE") or self.at_keyword("FALSE"):
            return Literal(self.advance().upper == "TRUE")
        if self.at_keyword("DATE") or self.at_keyword("DATETIME"):
            self.advance()
            self.expect_punct("(")
            now_tok = self.tok
            if self.expect_string("'now'").lower() != "now":
                raise SqlSyntaxError(now_tok.pos, "'now'", now_tok.text)
            days = 0
            if self.at_punct(","):
                self.advance()
                off_tok = self.tok
                m = _OFFSET_RE.match(self.expect_string("a day offset such as '-7 day'"))
                if m is None:
                    raise SqlSyntaxError(off_tok.pos, "a day offset such as '-7 day'", off_tok.text)
                days = int(m.group(1))
            self.expect_punct(")")
            return RelativeDate(days)
        raise self.error("a literal or date('now', ...)")


def _unquote(text: str) -> str:
    return text[1:-1].replace("''", "'")


def parse_sql(sql: str) -> SqlAst:
    return _SqlParser(sql).parse()


def parse_field_queries(raw) -> tuple[FieldQuery, ...]:
    if not isinstance(raw, list):
        raise JsonMalformed("vector_query_list must be an array")
    out = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or len(entry) != 1:
            raise JsonMalformed(f"vector_query_list[{i}] must be an object with exactly one key")
        (name, text), = entry.items()
        if not isinstance(text, str) or not text.strip():
            raise JsonMalformed(f"vector_query_list[{i}] must map to a nonempty string")
        field = resolve_field_alias(name)
        out.append(FieldQuery(field, text, alias=name if name != field else None))
    return tuple(out)


def validate_program(program: DslProgram) -> None:
    n = len(program.vector_query_list)
    used = set()
    for node in iter_nodes(program.sql.predicate):
        if isinstance(node, Membership):
            if node.placeholder >= n:
                raise PlaceholderOutOfRange(node.placeholder, n)
            used.add(node.placeholder)
    for i in range(n):
        if i not in used:
            raise DanglingVectorQuery(i)


def parse_program(text: str) -> DslProgram:
    """Parse a DSL program from its JSON wire form and validate it."""
    try:
        obj = json.loads(text)
    except (ValueError, RecursionError) as exc:
        raise JsonMalformed(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise JsonMalformed("program must be a JSON object")
    if set(obj) != {"sql", "vector_query_list"}:
        raise JsonMalformed("program must have exactly the keys 'sql' and 'vector_query_list'")
    if not isinstance(obj["sql"], str):
        raise JsonMalformed("'sql' must be a string")
    queries = parse_field_queries(obj["vector_query_list"])
    program = DslProgram(parse_sql(obj["sql"]), queries)
    validate_program(program)
    return program
