import pytest
from hypothesis import given, settings, strategies as st

from trendseek.algebra import (
    And,
    Concat,
    Location,
    Modifier,
    Not,
    Or,
    Pattern,
    Quantifier,
    Seg,
    ShapeSegment,
    expr_count,
    normalize_ast,
    seg,
    validate_ast,
)
from trendseek.corpus import series_viz
from trendseek.scoring import ScoreContext, evaluate_expr


def test_minimal_query_is_valid():
    assert validate_ast(seg(Pattern.up())).ok


def test_position_ref_out_of_range():
    ast = seg(Pattern.position_ref(5))
    report = validate_ast(ast)
    assert not report.ok
    assert "BAD_POSITION_REF" in report.codes()


def test_position_ref_self_reference():
    ast = Concat((seg(Pattern.up()), seg(Pattern.position_ref(1))))
    assert "BAD_POSITION_REF" in validate_ast(ast).codes()


def test_position_ref_valid():
    ast = Concat((seg(Pattern.up()), seg(Pattern.position_ref(0))))
    assert validate_ast(ast).ok


def test_sketch_mixed_with_semantic_pattern():
    ast = And((seg(Pattern.sketch([(0, 0), (1, 1)])), seg(Pattern.up())))
    assert "MIXED_SKETCH" in validate_ast(ast).codes()


def test_sketch_alone_is_valid():
    assert validate_ast(seg(Pattern.sketch([(0, 0), (1, 1), (2, 0)]))).ok


def test_sketch_needs_increasing_x():
    ast = seg(Pattern.sketch([(0, 0), (0, 1)]))
    assert "SKETCH_POINTS" in validate_ast(ast).codes()


def test_theta_angle_bounds():
    assert "THETA_RANGE" in validate_ast(seg(Pattern.theta(90.0))).codes()
    assert validate_ast(seg(Pattern.theta(89.9))).ok


def test_location_order():
    ast = seg(Pattern.up(), Location(x_start=5.0, x_end=2.0))
    assert "LOCATION_ORDER" in validate_ast(ast).codes()


def test_iterator_conflicts_with_explicit_range():
    loc = Location(x_start=1.0, x_end=4.0, iterator_width=3)
    assert "ITERATOR_CONFLICT" in validate_ast(seg(Pattern.up(), loc)).codes()


def test_quantifier_only_on_slope_patterns():
    mod = Modifier(quantifier=Quantifier(min=2))
    assert "QUANTIFIER_CONTEXT" in validate_ast(seg(Pattern.any(), modifier=mod)).codes()
    assert validate_ast(seg(Pattern.up(), modifier=mod)).ok


def test_quantifier_bounds_checked():
    mod = Modifier(quantifier=Quantifier(min=5, max=2))
    assert "QUANT_RANGE" in validate_ast(seg(Pattern.up(), modifier=mod)).codes()


def test_nested_range_must_fit_parent():
    inner = seg(Pattern.up(), Location(x_start=0.0, x_end=50.0))
    outer = seg(Pattern.nested(inner), Location(x_start=10.0, x_end=20.0))
    assert "NESTED_RANGE" in validate_ast(outer).codes()


def test_depth_limit():
    ast = seg(Pattern.up())
    for _ in range(20):
        ast = Seg(ShapeSegment(pattern=Pattern.nested(ast)))
    assert "DEPTH_LIMIT" in validate_ast(ast).codes()


def test_validation_is_total_on_weird_trees():
    # Single-child n-ary node: flagged, not crashed.
    report = validate_ast(Concat((seg(Pattern.up()),)))
    assert "ARITY" in report.codes()


# --- normalization ---------------------------------------------------------


def test_flatten_nested_concat():
    a, b, c = seg(Pattern.up()), seg(Pattern.down()), seg(Pattern.flat())
    ast = Concat((Concat((a, b)), c))
    assert normalize_ast(ast) == Concat((a, b, c))


def test_double_negation_cancels():
    ast = Not(Not(seg(Pattern.up())))
    assert normalize_ast(ast) == seg(Pattern.up())


def test_or_flattening():
    a, b, c = seg(Pattern.up()), seg(Pattern.down()), seg(Pattern.flat())
    assert normalize_ast(Or((a, Or((b, c))))) == Or((a, b, c))


def test_expr_count():
    a, b, c = seg(Pattern.up()), seg(Pattern.down()), seg(Pattern.flat())
    assert expr_count(a) == 1
    assert expr_count(Concat((a, b))) == 2
    assert expr_count(Concat((Concat((a, b)), c))) == 3
    assert expr_count(Or((a, b))) == 1


# --- property: normalization preserves scores ------------------------------

_LEAVES = st.sampled_from(
    [Pattern.up(), Pattern.down(), Pattern.flat(), Pattern.theta(30.0), Pattern.any()]
)


def _ast_strategy(max_depth=3):
    leaf = _LEAVES.map(lambda p: seg(p))

    def extend(children):
        return st.one_of(
            st.tuples(children, children).map(lambda t: And(t)),
            st.tuples(children, children).map(lambda t: Or(t)),
            children.map(Not),
        )

    return st.recursive(leaf, extend, max_leaves=6)


@given(_ast_strategy(), st.lists(st.floats(-5, 5), min_size=4, max_size=10))
@settings(max_examples=150, deadline=None)
def test_normalization_preserves_expr_score(ast, ys):
    report = validate_ast(ast)
    if not report.ok:
        return
    viz = series_viz([float(v) for v in ys])
    ctx1 = ScoreContext(viz=viz)
    ctx2 = ScoreContext(viz=viz)
    s1 = evaluate_expr(ast, viz, 0, viz.size - 1, ctx1)
    s2 = evaluate_expr(normalize_ast(ast), viz, 0, viz.size - 1, ctx2)
    assert abs(s1 - s2) <= 1e-9


@given(_ast_strategy())
@settings(max_examples=100, deadline=None)
def test_expr_count_stable_under_normalization(ast):
    assert expr_count(normalize_ast(ast)) == expr_count(ast)
