from __future__ import annotations

import json
from decimal import Decimal

from ..corpus import BOOL, FIELD_TYPES
from .ast import (
    And,
    BoolConst,
    Comparison,
    DslProgram,
    ElementPath,
    ElementProjection,
    Expr,
    FieldRef,
    Literal,
    Membership,
    MessageIdProjection,
    Or,
    RelativeDate,
    SqlAst,
)


def render_literal(lit: Literal) -> str:
    v = lit.value
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        # Positional notation: the SQL tokenizer has no exponent syntax.
        text = format(Decimal(repr(v)), "f")
        return text if "." in text else text + ".0"
    return "'" + v.replace("'", "''") + "'"


def render_operand(op: FieldRef | ElementPath) -> str:
    if isinstance(op, ElementPath):
        return f"json_extract(json_each.value, '$.{op.attr}')"
    return op.name


def render_expr(expr: Expr) -> str:
    if isinstance(expr, (And, Or)):
        joiner = " AND " if isinstance(expr, And) else " OR "
        # Compound children are always parenthesised so the tree shape survives reparsing.
        return joiner.join(
            f"({render_expr(e)})" if isinstance(e, (And, Or)) else render_expr(e) for e in expr.items
        )
    if isinstance(expr, Comparison):
        if isinstance(expr.right, RelativeDate):
            right = f"date('now', '{expr.right.days:+d} day')"
        elif (
            isinstance(expr.left, FieldRef)
            and FIELD_TYPES.get(expr.left.name) == BOOL
            and isinstance(expr.right.value, bool)
        ):
            # Boolean columns use the 1/0 spelling; the parser maps it back to booleans.
            right = "1" if expr.right.value else "0"
        else:
            right = render_literal(expr.right)
        return f"{render_operand(expr.left)} {expr.op} {right}"
    if isinstance(expr, Membership):
        return f"{render_operand(expr.target)} IN <vector_{expr.placeholder}>"
    if isinstance(expr, BoolConst):
        return "TRUE" if expr.value else "FALSE"
    raise TypeError(f"not a predicate node: {expr!r}")


def render_sql(sql: SqlAst) -> str:
    parts = ["SELECT"]
    if sql.distinct:
        parts.append("DISTINCT")
    if isinstance(sql.projection, MessageIdProjection):
        parts.append("message_id")
    else:
        proj: ElementProjection = sql.projection
        parts.append(render_operand(ElementPath(proj.attr)))
        if proj.alias:
            parts.append(f"AS {proj.alias}")
    parts.append("FROM email")
    if sql.each_field is not None:
        parts[-1] += f", json_each(email.{sql.each_field})"
    if sql.predicate is not None:
        parts.append("WHERE " + render_expr(sql.predicate))
    return " ".join(parts)


def program_to_wire(program: DslProgram) -> dict:
    return {
        "sql": render_sql(program.sql),
        "vector_query_list": [{q.written_name: q.text} for q in program.vector_query_list],
    }


def render_program(program: DslProgram, indent: int | None = None) -> str:
    return json.dumps(program_to_wire(program), ensure_ascii=False, indent=indent)
