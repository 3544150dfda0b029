import pytest
from hypothesis import given, settings, strategies as st

from trendseek.algebra import (
    And,
    Comparator,
    Concat,
    Location,
    Modifier,
    Not,
    Or,
    Pattern,
    PatternKind,
    Quantifier,
    Seg,
    normalize_ast,
    seg,
)
from trendseek.parser import (
    LexError,
    ParseError,
    SemanticError,
    TokenKind,
    format_shapequery,
    parse_shapequery,
    tokenize,
)


def kinds(text):
    return [t.kind for t in tokenize(text)][:-1]  # drop EOF


def test_tokenize_concat():
    assert kinds("u >> d") == [TokenKind.IDENT, TokenKind.OP_CONCAT, TokenKind.IDENT]


def test_tokenize_bracket_segment():
    assert kinds("[p=up,x.s=2]") == [
        TokenKind.LBRACKET,
        TokenKind.IDENT,
        TokenKind.EQUALS,
        TokenKind.IDENT,
        TokenKind.COMMA,
        TokenKind.IDENT,
        TokenKind.DOT,
        TokenKind.IDENT,
        TokenKind.EQUALS,
        TokenKind.NUMBER,
        TokenKind.RBRACKET,
    ]


def test_question_mark_outside_modifier_is_lex_error():
    with pytest.raises(LexError) as err:
        tokenize("u ? d")
    assert err.value.span == (2, 3)


def test_spans_cover_non_whitespace():
    text = "[p=up, x.s=2 ] >> !f"
    toks = tokenize(text)
    covered = set()
    for t in toks[:-1]:
        for i in range(t.start, t.end):
            assert i not in covered
            covered.add(i)
    for i, c in enumerate(text):
        assert (i in covered) == (not c.isspace())


# --- parsing ---------------------------------------------------------------


def test_paper_example_anchored_rise_then_fall():
    ast = parse_shapequery("[p=up,x.s=2,x.e=5] >> [p=down]")
    assert ast == Concat(
        (
            seg(Pattern.up(), Location(x_start=2.0, x_end=5.0)),
            seg(Pattern.down()),
        )
    )


def test_grouping_example():
    ast = parse_shapequery("u >> (f | (u >> d))")
    assert ast == Concat(
        (
            seg(Pattern.up()),
            Or((seg(Pattern.flat()), Concat((seg(Pattern.up()), seg(Pattern.down()))))),
        )
    )


def test_not_flat():
    assert parse_shapequery("!f") == Not(seg(Pattern.flat()))


def test_unterminated_bracket():
    with pytest.raises(ParseError) as err:
        parse_shapequery("[p=up")
    assert "]" in err.value.expected


def test_left_associativity_equal_precedence():
    ast = parse_shapequery("u >> d & f")
    assert ast == And(
        (Concat((seg(Pattern.up()), seg(Pattern.down()))), seg(Pattern.flat()))
    )


def test_bare_number_is_theta():
    ast = parse_shapequery("45 >> d")
    assert ast == Concat((seg(Pattern.theta(45.0)), seg(Pattern.down())))
    assert parse_shapequery("-20") == seg(Pattern.theta(-20.0))


def test_quantifier_forms():
    q = parse_shapequery("[p=up,m={2,5}]")
    assert q.segment.modifier.quantifier == Quantifier(2, 5)
    assert parse_shapequery("[p=up,m={2,}]").segment.modifier.quantifier == Quantifier(2, None)
    assert parse_shapequery("[p=up,m={,2}]").segment.modifier.quantifier == Quantifier(0, 2)
    assert parse_shapequery("[p=up,m=2]").segment.modifier.quantifier == Quantifier(2, 2)
    assert parse_shapequery("[p=up,m=+]").segment.modifier.quantifier == Quantifier(1, None)
    assert parse_shapequery("[p=up,m=?]").segment.modifier.quantifier == Quantifier(0, 1)
    assert parse_shapequery("[p=up,m=*]").segment.modifier.quantifier == Quantifier(0, None)


def test_sharpness_and_position_ref():
    ast = parse_shapequery("[p=up] >> [p=$0,m=<]")
    second = ast.children[1].segment
    assert second.pattern == Pattern.position_ref(0)
    assert second.modifier.comparator is Comparator.LESS
    sharp = parse_shapequery("[p=up,m=>>]").segment
    assert sharp.modifier.comparator is Comparator.GREATER_MUCH


def test_position_ref_relative():
    ast = parse_shapequery("[p=up] >> [p=$-]")
    assert ast.children[1].segment.pattern.ref == "-"


def test_multiplier():
    ast = parse_shapequery("[p=up] >> [p=$0,m=<0.5]")
    mod = ast.children[1].segment.modifier
    assert mod.comparator is Comparator.LESS
    assert mod.multiplier == 0.5


def test_iterator_surface():
    ast = parse_shapequery("[x.s=.,x.e=.+3,p=up]")
    assert ast.segment.location.iterator_width == 3


def test_sketch_literal():
    ast = parse_shapequery("[v=0:0,10:5,20:0]")
    assert ast.segment.pattern.kind is PatternKind.SKETCH
    assert ast.segment.pattern.points == ((0.0, 0.0), (10.0, 5.0), (20.0, 0.0))


def test_braced_pattern_value_compat():
    assert parse_shapequery("[p={up},x.s=50,x.e=100]").segment.pattern == Pattern.up()


def test_semantic_error_surfaces_issue():
    with pytest.raises(SemanticError) as err:
        parse_shapequery("[p=$3]")
    assert any(i.code == "BAD_POSITION_REF" for i in err.value.issues)


# --- formatting ------------------------------------------------------------


def test_format_minimal():
    assert format_shapequery(seg(Pattern.up())) == "[p=up]"


def test_format_concat():
    ast = Concat((seg(Pattern.up()), seg(Pattern.down())))
    assert format_shapequery(ast) == "[p=up] >> [p=down]"


def test_format_not_with_parens():
    ast = Not(Or((seg(Pattern.up()), seg(Pattern.down()))))
    assert format_shapequery(ast) == "!([p=up] | [p=down])"


# --- round-trip property ----------------------------------------------------

_PATTERNS = st.sampled_from(
    [
        Pattern.up(),
        Pattern.down(),
        Pattern.flat(),
        Pattern.any(),
        Pattern.empty(),
        Pattern.theta(33.0),
        Pattern.theta(-60.5),
    ]
)


@st.composite
def _segments(draw):
    pattern = draw(_PATTERNS)
    loc = Location()
    if draw(st.booleans()):
        xs = draw(st.integers(0, 40))
        xe = xs + draw(st.integers(1, 40))
        loc = Location(x_start=float(xs), x_end=float(xe))
    elif draw(st.booleans()):
        loc = Location(iterator_width=draw(st.integers(1, 8)))
    mod = Modifier()
    if pattern.kind.value in ("up", "down", "flat", "theta") and draw(st.booleans()):
        lo = draw(st.integers(0, 3))
        hi = draw(st.one_of(st.none(), st.integers(lo, lo + 4)))
        mod = Modifier(quantifier=Quantifier(lo, hi))
    return seg(pattern, loc, mod)


def _query_strategy():
    def extend(children):
        pair = st.tuples(children, children)
        return st.one_of(
            pair.map(lambda t: Concat(t)),
            pair.map(lambda t: And(t)),
            pair.map(lambda t: Or(t)),
            children.map(Not),
        )

    return st.recursive(_segments(), extend, max_leaves=8)


@given(_query_strategy())
@settings(max_examples=300, deadline=None)
def test_round_trip(ast):
    from trendseek.algebra import validate_ast

    if not validate_ast(ast).ok:
        return
    text = format_shapequery(ast)
    reparsed = parse_shapequery(text)
    assert reparsed == normalize_ast(ast)


@given(st.binary(max_size=1024))
@settings(max_examples=400, deadline=None)
def test_parser_is_total_on_fuzz(data):
    try:
        text = data.decode("utf-8", errors="replace")
        parse_shapequery(text)
    except (LexError, ParseError, SemanticError, RecursionError):
        pass


def test_deep_nesting_rejected_not_crashed():
    for text in ("(" * 60000, "!" * 60000 + "u", "[p=" * 20000):
        with pytest.raises((ParseError, LexError)):
            parse_shapequery(text)


def test_fuzz_64k_inputs_never_crash():
    import numpy as np

    rng = np.random.default_rng(8)
    alphabet = list("ud f[]()>>&|!pmxyv=.,:0123456789${}?*<-_")
    for _ in range(30):
        n = int(rng.integers(1, 65536))
        text = "".join(rng.choice(alphabet, size=n))
        try:
            parse_shapequery(text)
        except (LexError, ParseError, SemanticError):
            pass
