from __future__ import annotations

import json
import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from hybrid_dsl.corpus import ELEMENT_ATTRIBUTES, FIELD_TYPES, UNSTRUCTURED_FIELDS
from hybrid_dsl.dsl import (
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
    extract_tagged_query,
    parse_program,
    parse_sql,
    render_program,
    wrap_query,
)
from hybrid_dsl.dsl.parser import KEYWORDS
from hybrid_dsl.errors import (
    DanglingVectorQuery,
    DslError,
    JsonMalformed,
    MultipleTags,
    NoTag,
    PlaceholderOutOfRange,
    SqlSyntaxError,
    UnknownField,
    UnterminatedTag,
)

from oracles import random_program
from conftest import CASE1, CASE2, CASE3


# tags ------------------------------------------------------------------------


def test_extract_plain():
    assert extract_tagged_query("<query>{...}</query>") == "{...}"


def test_extract_with_surrounding_text():
    assert extract_tagged_query("reasoning text <query>A</query> trailing") == "A"


def test_extract_ignores_other_tags():
    assert extract_tagged_query("<think>x</think><query>A</query>") == "A"


@pytest.mark.parametrize(
    "text, error",
    [
        ("no tags here", NoTag),
        ("<QUERY>A</QUERY>", NoTag),
        ("<query>A</query><query>B</query>", MultipleTags),
        ("<query>A</query></query>", MultipleTags),
        ("<query>A", UnterminatedTag),
        ("</query>A<query>", UnterminatedTag),
    ],
)
def test_extract_errors(text, error):
    with pytest.raises(error):
        extract_tagged_query(text)


def test_wrap_then_extract():
    assert extract_tagged_query(wrap_query("body")) == "body"


# worked cases ------------------------------------------------------------------


def test_case1_structure():
    p = parse_program(json.dumps(CASE1))
    assert p.vector_query_list == (FieldQuery("content", "budget"),)
    assert p.vector_query_list[0].written_name == "email_content"
    assert isinstance(p.sql.projection, MessageIdProjection)
    assert p.sql.distinct and p.sql.each_field is None
    assert p.sql.predicate == And(
        (
            Comparison(FieldRef("is_draft"), "=", Literal(True)),
            Comparison(FieldRef("draft_modified_date"), ">=", RelativeDate(-7)),
            Comparison(FieldRef("is_starred"), "=", Literal(True)),
            Membership(FieldRef("message_id"), 0),
        )
    )


def test_case2_structure():
    p = parse_program(json.dumps(CASE2))
    assert p.sql.projection == ElementProjection("id", "folder_id")
    assert p.sql.each_field == "folder_labels"
    assert p.sql.predicate == Membership(ElementPath("id"), 0)
    assert p.vector_query_list == (FieldQuery("folder_labels", "important"),)


def test_case3_structure():
    p = parse_program(json.dumps(CASE3))
    assert p.sql.projection == ElementProjection("id", "attachment_id")
    assert p.sql.each_field == "attachment_list"
    assert p.placeholders() == [0, 1]
    assert p.sql.predicate == And((Membership(FieldRef("message_id"), 0), Membership(ElementPath("id"), 1)))
    assert [q.field for q in p.vector_query_list] == ["subject", "attachment_list"]


@pytest.mark.parametrize("case", [CASE1, CASE2, CASE3])
def test_cases_round_trip(case):
    p = parse_program(json.dumps(case))
    assert parse_program(render_program(p)) == p
    # the alias spelling is preserved on output
    assert json.loads(render_program(p))["vector_query_list"] == case["vector_query_list"]


# parse errors ------------------------------------------------------------------


def _wire(sql, queries=()):
    return json.dumps({"sql": sql, "vector_query_list": list(queries)})


def test_placeholder_out_of_range():
    with pytest.raises(PlaceholderOutOfRange) as err:
        parse_program(_wire("SELECT DISTINCT message_id FROM email WHERE message_id IN <vector_2>", [{"subject": "x"}]))
    assert err.value.index == 2


def test_dangling_vector_query():
    with pytest.raises(DanglingVectorQuery) as err:
        parse_program(_wire("SELECT message_id FROM email WHERE message_id IN <vector_0>", [{"subject": "x"}, {"content": "y"}]))
    assert err.value.index == 1


def test_unknown_vector_field():
    with pytest.raises(UnknownField):
        parse_program(_wire("SELECT message_id FROM email WHERE message_id IN <vector_0>", [{"body_text": "x"}]))


def test_pure_structured_program_is_valid():
    p = parse_program(_wire("SELECT message_id FROM email WHERE is_read = 0"))
    assert p.vector_query_list == ()


@pytest.mark.parametrize(
    "text",
    [
        "not json",
        "[]",
        json.dumps({"sql": "SELECT message_id FROM email"}),
        json.dumps({"sql": 1, "vector_query_list": []}),
        json.dumps({"sql": "SELECT message_id FROM email", "vector_query_list": {}}),
        json.dumps({"sql": "SELECT message_id FROM email", "vector_query_list": [{"a": "x", "b": "y"}]}),
        json.dumps({"sql": "SELECT message_id FROM email", "vector_query_list": [{"subject": ""}]}),
        json.dumps({"sql": "SELECT message_id FROM email", "vector_query_list": [], "extra": 1}),
        "[" * 100000,
    ],
)
def test_json_malformed(text):
    with pytest.raises(JsonMalformed):
        parse_program(text)


@pytest.mark.parametrize(
    "sql",
    [
        "SELECT * FROM email",
        "SELECT message_id FROM users",
        "SELECT message_id FROM email JOIN other",
        "SELECT message_id FROM email WHERE",
        "SELECT message_id FROM email WHERE is_read = ",
        "SELECT message_id FROM email WHERE is_read == 1",
        "SELECT message_id FROM email WHERE message_id IN (SELECT message_id FROM email)",
        "SELECT message_id FROM email WHERE json_extract(json_each.value, '$.id') = 'x'",
        "SELECT message_id FROM email WHERE upper(subject) = 'X'",
        "SELECT message_id FROM email WHERE received_date > date('yesterday')",
        "SELECT message_id FROM email WHERE received_date > date('now', '-7 weeks')",
        "SELECT message_id FROM email WHERE subject = 'unterminated",
        "SELECT message_id FROM email GROUP BY subject",
        "SELECT message_id FROM email WHERE (is_read = 1",
        "SELECT subject FROM email",
        "SELECT message_id FROM email; DROP TABLE email",
    ],
)
def test_sql_syntax_errors(sql):
    with pytest.raises(SqlSyntaxError):
        parse_sql(sql)


def test_syntax_error_position():
    with pytest.raises(SqlSyntaxError) as err:
        parse_sql("SELECT message_id FROM email WHERE is_read ~ 1")
    assert err.value.position == len("SELECT message_id FROM email WHERE is_read ")


def test_keywords_case_insensitive_fields_case_sensitive():
    p = parse_sql("select distinct message_id from EMAIL where Is_Read = true")
    assert isinstance(p.projection, MessageIdProjection) and p.distinct
    # field names keep their spelling; the executor rejects unknown ones
    assert p.predicate == Comparison(FieldRef("Is_Read"), "=", Literal(True))


def test_projection_is_case_sensitive():
    with pytest.raises(SqlSyntaxError):
        parse_sql("SELECT MESSAGE_ID FROM email")


def test_boolean_spellings_normalize():
    a = parse_sql("SELECT message_id FROM email WHERE is_read = 1")
    b = parse_sql("SELECT message_id FROM email WHERE is_read = TRUE")
    assert a == b
    # outside boolean columns 1 stays an integer
    c = parse_sql("SELECT message_id FROM email WHERE thread_msg_count = 1")
    assert c.predicate.right == Literal(1) and c.predicate.right != Literal(True)


def test_misc_syntax_accepted():
    p = parse_sql(
        "SELECT email.message_id FROM email WHERE email.subject <> 'it''s' OR (received_date < datetime('now', '+2 days'));"
    )
    assert p.predicate == Or(
        (
            Comparison(FieldRef("subject"), "!=", Literal("it's")),
            Comparison(FieldRef("received_date"), "<", RelativeDate(2)),
        )
    )
    assert not p.distinct


def test_nesting_limit():
    deep = "SELECT message_id FROM email WHERE " + "(" * 200 + "TRUE" + ")" * 200
    with pytest.raises(SqlSyntaxError):
        parse_sql(deep)
    ok = "SELECT message_id FROM email WHERE " + "(" * 30 + "TRUE" + ")" * 30
    assert parse_sql(ok).predicate == BoolConst(True)


# property tests --------------------------------------------------------------------

_ident = st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True).filter(lambda s: s.upper() not in KEYWORDS and s not in {"json_extract", "json_each", "date", "datetime"})
_text = st.text(min_size=1, max_size=20).filter(lambda s: s.strip())
_bool_fields = [f for f, k in FIELD_TYPES.items() if k == "bool"]


def _literal(field_name):
    if FIELD_TYPES.get(field_name) == "bool":
        return st.booleans().map(Literal)
    return st.one_of(
        st.text(max_size=12).map(Literal),
        st.integers(-10**6, 10**6).map(Literal),
        st.floats(allow_nan=False, allow_infinity=False, width=64).map(Literal),
        st.booleans().map(Literal),
    )


@st.composite
def _comparison(draw, each_field):
    if each_field and draw(st.booleans()):
        left = ElementPath(draw(st.sampled_from(ELEMENT_ATTRIBUTES[each_field])))
        right = draw(_literal(""))
    else:
        name = draw(st.one_of(st.sampled_from(sorted(FIELD_TYPES)), _ident))
        left = FieldRef(name)
        right = draw(st.one_of(_literal(name), st.integers(-400, 400).map(RelativeDate)))
    return Comparison(left, draw(st.sampled_from(["=", "!=", "<", "<=", ">", ">="])), right)


def _expr(each_field, n_queries):
    atoms = [_comparison(each_field), st.booleans().map(BoolConst)]
    if n_queries:
        targets = [st.just(FieldRef("message_id"))]
        if each_field:
            targets.append(st.just(ElementPath("id")))
        atoms.append(st.builds(Membership, st.one_of(*targets), st.integers(0, n_queries - 1)))
    return st.recursive(
        st.one_of(*atoms),
        lambda kids: st.one_of(
            st.lists(kids, min_size=2, max_size=3).map(lambda xs: And(tuple(xs))),
            st.lists(kids, min_size=2, max_size=3).map(lambda xs: Or(tuple(xs))),
        ),
        max_leaves=8,
    )


def _mentions(expr, k):
    if isinstance(expr, (And, Or)):
        return any(_mentions(e, k) for e in expr.items)
    return isinstance(expr, Membership) and expr.placeholder == k


@st.composite
def programs(draw):
    each_field = draw(st.sampled_from([None, "folder_labels", "attachment_list"]))
    n = draw(st.integers(0, 3))
    queries = tuple(
        FieldQuery(draw(st.sampled_from(UNSTRUCTURED_FIELDS)), draw(_text)) for _ in range(n)
    )
    predicate = draw(st.one_of(st.none(), _expr(each_field, n))) if n == 0 else draw(_expr(each_field, n))
    if n:
        missing = tuple(Membership(FieldRef("message_id"), k) for k in range(n) if not _mentions(predicate, k))
        if missing:
            predicate = And((predicate,) + missing)
    if each_field and draw(st.booleans()):
        projection = ElementProjection(draw(st.sampled_from(ELEMENT_ATTRIBUTES[each_field])), draw(st.one_of(st.none(), _ident)))
    else:
        projection = MessageIdProjection()
    return DslProgram(SqlAst(projection, each_field, predicate, draw(st.booleans())), queries)


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(programs())
def test_render_parse_round_trip(program):
    assert parse_program(render_program(program)) == program


def test_generator_programs_round_trip(small_corpus):
    rng = random.Random(11)
    for _ in range(200):
        p = random_program(rng, small_corpus)
        assert parse_program(render_program(p, indent=2)) == p


def test_minimal_program_round_trip():
    p = DslProgram(SqlAst(MessageIdProjection(), None, Membership(FieldRef("message_id"), 0)), (FieldQuery("subject", "x"),))
    assert parse_program(render_program(p)) == p


_sql_fragments = st.sampled_from(
    ["SELECT", "DISTINCT", "message_id", "FROM", "email", "WHERE", "AND", "OR", "(", ")", "=", "<", ">=", "!=",
     "'x'", "1", "TRUE", "IN", "<vector_0>", "<vector_9>", "json_extract(json_each.value, '$.id')",
     ", json_each(email.folder_labels)", "date('now', '-7 day')", "is_read", ";", "'", "json_each", "."]
)


@settings(max_examples=500, deadline=None)
@given(st.lists(_sql_fragments, max_size=14).map(" ".join), st.lists(st.sampled_from(["subject", "email_content", "x"]), max_size=2))
def test_parser_totality_on_token_soup(sql, fields):
    text = json.dumps({"sql": sql, "vector_query_list": [{f: "q"} for f in fields]})
    try:
        assert isinstance(parse_program(text), DslProgram)
    except DslError:
        pass


@settings(max_examples=500, deadline=None)
@given(st.text(max_size=80))
def test_parser_totality_on_arbitrary_text(text):
    for candidate in (text, json.dumps({"sql": text, "vector_query_list": []})):
        try:
            parse_program(candidate)
        except DslError:
            pass


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=60))
def test_extract_totality(text):
    try:
        body = extract_tagged_query(text)
    except DslError:
        return
    assert body in text
