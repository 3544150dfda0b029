"""Shape query AST: pattern / location / modifier primitives and the
operator tree that combines them, plus validation and normalization.

The surface syntax lives in :mod:`trendseek.parser`; this module only deals
with the in-memory representation consumed by the engines.  All values are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence, Union

MAX_NESTING_DEPTH = 16


class PatternKind(enum.Enum):
    UP = "up"
    DOWN = "down"
    FLAT = "flat"
    THETA = "theta"
    ANY = "any"
    EMPTY = "empty"
    SKETCH = "sketch"
    POSITION_REF = "position_ref"
    NESTED = "nested"
    UDP = "udp"


class Comparator(enum.Enum):
    LESS = "<"
    LESS_MUCH = "<<"
    GREATER = ">"
    GREATER_MUCH = ">>"
    EQUAL = "="


@dataclass(frozen=True)
class Pattern:
    """What to match in one sub-region of a trendline.

    Exactly one of the payload fields is meaningful, selected by ``kind``:
    ``angle`` for THETA (degrees, strictly inside (-90, 90)), ``points`` for
    SKETCH, ``ref`` for POSITION_REF (absolute 0-based index, or the strings
    "-"/"+" for the previous/next segment), ``sub`` for NESTED and ``name``
    for UDP.
    """

    kind: PatternKind
    angle: Optional[float] = None
    points: Optional[tuple[tuple[float, float], ...]] = None
    ref: Union[int, str, None] = None
    sub: Optional["ShapeQueryAst"] = None
    name: Optional[str] = None

    @staticmethod
    def up() -> "Pattern":
        return Pattern(PatternKind.UP)

    @staticmethod
    def down() -> "Pattern":
        return Pattern(PatternKind.DOWN)

    @staticmethod
    def flat() -> "Pattern":
        return Pattern(PatternKind.FLAT)

    @staticmethod
    def any() -> "Pattern":
        return Pattern(PatternKind.ANY)

    @staticmethod
    def empty() -> "Pattern":
        return Pattern(PatternKind.EMPTY)

    @staticmethod
    def theta(angle: float) -> "Pattern":
        return Pattern(PatternKind.THETA, angle=float(angle))

    @staticmethod
    def sketch(points: Sequence[tuple[float, float]]) -> "Pattern":
        return Pattern(PatternKind.SKETCH, points=tuple((float(x), float(y)) for x, y in points))

    @staticmethod
    def position_ref(ref: Union[int, str]) -> "Pattern":
        return Pattern(PatternKind.POSITION_REF, ref=ref)

    @staticmethod
    def nested(sub: "ShapeQueryAst") -> "Pattern":
        return Pattern(PatternKind.NESTED, sub=sub)

    @staticmethod
    def udp(name: str) -> "Pattern":
        return Pattern(PatternKind.UDP, name=name)


@dataclass(frozen=True)
class Location:
    """Optional endpoints (data units) of the region a segment must cover.

    ``iterator_width`` encodes the scan form ``x.s=., x.e=.+w`` and is
    mutually exclusive with an explicit x_start/x_end pair.
    """

    x_start: Optional[float] = None
    x_end: Optional[float] = None
    y_start: Optional[float] = None
    y_end: Optional[float] = None
    iterator_width: Optional[int] = None

    def is_empty(self) -> bool:
        return (
            self.x_start is None
            and self.x_end is None
            and self.y_start is None
            and self.y_end is None
            and self.iterator_width is None
        )

    def is_x_anchored(self) -> bool:
        return self.x_start is not None and self.x_end is not None


@dataclass(frozen=True)
class Quantifier:
    """Occurrence constraint ``{min, max}``; ``max=None`` means unbounded."""

    min: int
    max: Optional[int] = None


@dataclass(frozen=True)
class Modifier:
    quantifier: Optional[Quantifier] = None
    comparator: Optional[Comparator] = None
    multiplier: Optional[float] = None

    def is_empty(self) -> bool:
        return self.quantifier is None and self.comparator is None and self.multiplier is None


EMPTY_LOCATION = Location()
EMPTY_MODIFIER = Modifier()


@dataclass(frozen=True)
class ShapeSegment:
    """One pattern unit: location + pattern + modifier."""

    pattern: Pattern
    location: Location = EMPTY_LOCATION
    modifier: Modifier = EMPTY_MODIFIER


@dataclass(frozen=True)
class Seg:
    segment: ShapeSegment


@dataclass(frozen=True)
class Concat:
    children: tuple["ShapeQueryAst", ...]


@dataclass(frozen=True)
class And:
    children: tuple["ShapeQueryAst", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["ShapeQueryAst", ...]


@dataclass(frozen=True)
class Not:
    child: "ShapeQueryAst"


ShapeQueryAst = Union[Seg, Concat, And, Or, Not]

#: Node kinds with an ordered children tuple.
NARY_KINDS = (Concat, And, Or)


def seg(pattern: Pattern, location: Location = EMPTY_LOCATION, modifier: Modifier = EMPTY_MODIFIER) -> Seg:
    return Seg(ShapeSegment(pattern=pattern, location=location, modifier=modifier))


@dataclass(frozen=True)
class Issue:
    code: str
    message: str
    path: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> list[str]:
        return [i.code for i in self.issues]


def iter_segments(ast: ShapeQueryAst) -> Iterator[ShapeSegment]:
    """Yield every ShapeSegment in query order (pre-order traversal).

    Segments inside NESTED patterns are not yielded; they belong to the
    nested query's own index space.
    """
    if isinstance(ast, Seg):
        yield ast.segment
    elif isinstance(ast, Not):
        yield from iter_segments(ast.child)
    else:
        for child in ast.children:
            yield from iter_segments(child)


def _walk(ast: ShapeQueryAst, path: str) -> Iterator[tuple[ShapeQueryAst, str, int]]:
    """Yield (node, path, depth) in pre-order, descending into NESTED subqueries."""
    stack: list[tuple[ShapeQueryAst, str, int]] = [(ast, path, 0)]
    while stack:
        node, p, depth = stack.pop()
        yield node, p, depth
        if isinstance(node, Seg):
            sub = node.segment.pattern.sub
            if sub is not None:
                stack.append((sub, f"{p}.nested", depth + 1))
        elif isinstance(node, Not):
            stack.append((node.child, f"{p}.0", depth + 1))
        else:
            for i, child in reversed(list(enumerate(node.children))):
                stack.append((child, f"{p}.{i}", depth + 1))


_SLOPE_PATTERNS = frozenset(
    {PatternKind.UP, PatternKind.DOWN, PatternKind.FLAT, PatternKind.THETA}
)
_SHARPNESS = frozenset(
    {Comparator.LESS, Comparator.LESS_MUCH, Comparator.GREATER, Comparator.GREATER_MUCH}
)


def validate_ast(ast: ShapeQueryAst) -> ValidationReport:
    """Check every structural invariant; always returns a report, never raises.

    Issue codes: ARITY, DEPTH_LIMIT, THETA_RANGE, SKETCH_POINTS, MIXED_SKETCH,
    BAD_POSITION_REF, LOCATION_ORDER, ITERATOR_CONFLICT, QUANT_RANGE,
    QUANTIFIER_CONTEXT, COMPARATOR_CONTEXT, NESTED_RANGE.
    """
    issues: list[Issue] = []

    def add(code: str, message: str, path: str) -> None:
        issues.append(Issue(code, message, path))

    segments = list(iter_segments(ast))
    n_segments = len(segments)
    has_sketch = any(s.pattern.kind is PatternKind.SKETCH for s in segments)
    if has_sketch and n_segments > 1:
        add(
            "MIXED_SKETCH",
            "sketch patterns cannot be combined with other segments in one query",
            "$",
        )

    seg_index = 0
    for node, path, depth in _walk(ast, "$"):
        if depth > MAX_NESTING_DEPTH:
            add("DEPTH_LIMIT", f"nesting depth exceeds {MAX_NESTING_DEPTH}", path)
            # Deeper nodes would only repeat the same issue.
            break
        if isinstance(node, NARY_KINDS):
            if len(node.children) < 2:
                add("ARITY", f"{type(node).__name__} requires at least 2 children", path)
            continue
        if isinstance(node, Not):
            continue
        segment = node.segment
        pat, loc, mod = segment.pattern, segment.location, segment.modifier
        in_nested = ".nested" in path
        my_index = seg_index if not in_nested else None
        if not in_nested:
            seg_index += 1

        if pat.kind is PatternKind.THETA:
            if pat.angle is None or not (-90.0 < pat.angle < 90.0) or not math.isfinite(pat.angle):
                add("THETA_RANGE", f"theta angle must lie strictly inside (-90, 90), got {pat.angle}", path)
        elif pat.kind is PatternKind.SKETCH:
            pts = pat.points or ()
            if len(pts) < 2:
                add("SKETCH_POINTS", "sketch needs at least 2 points", path)
            elif any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
                add("SKETCH_POINTS", "sketch x values must be strictly increasing", path)
        elif pat.kind is PatternKind.POSITION_REF:
            ref = pat.ref
            if in_nested:
                add("BAD_POSITION_REF", "position references are not allowed inside nested patterns", path)
            elif isinstance(ref, int):
                if not (0 <= ref < n_segments):
                    add("BAD_POSITION_REF", f"segment index {ref} out of range (query has {n_segments})", path)
                elif ref == my_index:
                    add("BAD_POSITION_REF", "segment cannot reference itself", path)
                elif segments[ref].pattern.kind is PatternKind.POSITION_REF:
                    add("BAD_POSITION_REF", f"referenced segment {ref} is itself a position reference", path)
            elif ref in ("-", "+"):
                resolved = (my_index or 0) + (1 if ref == "+" else -1)
                if my_index is None or not (0 <= resolved < n_segments):
                    add("BAD_POSITION_REF", f"relative reference '{ref}' resolves outside the query", path)
            else:
                add("BAD_POSITION_REF", f"unrecognized position reference {ref!r}", path)

        if loc.x_start is not None and loc.x_end is not None and not loc.x_start < loc.x_end:
            add("LOCATION_ORDER", f"x_start {loc.x_start} must be < x_end {loc.x_end}", path)
        if loc.iterator_width is not None:
            if loc.iterator_width <= 0:
                add("ITERATOR_CONFLICT", "iterator width must be positive", path)
            if loc.x_start is not None and loc.x_end is not None:
                add("ITERATOR_CONFLICT", "iterator width excludes an explicit x_start/x_end pair", path)

        if mod.quantifier is not None:
            q = mod.quantifier
            if q.min < 0 or (q.max is not None and q.max < q.min):
                add("QUANT_RANGE", f"quantifier bounds {{{q.min},{q.max}}} are inconsistent", path)
            if pat.kind not in _SLOPE_PATTERNS:
                add("QUANTIFIER_CONTEXT", f"quantifier not allowed on pattern {pat.kind.value}", path)
        if mod.comparator is not None:
            if pat.kind is PatternKind.POSITION_REF:
                pass  # any comparator is a slope relation on the referenced segment
            elif pat.kind in (PatternKind.UP, PatternKind.DOWN) and mod.comparator in _SHARPNESS:
                pass  # sharpness refinement (m=>> etc.) on up/down
            else:
                add("COMPARATOR_CONTEXT", f"comparator not allowed on pattern {pat.kind.value}", path)
        if mod.multiplier is not None:
            if mod.multiplier <= 0:
                add("QUANT_RANGE", "multiplier must be positive", path)
            if pat.kind is not PatternKind.POSITION_REF:
                add("COMPARATOR_CONTEXT", "multiplier only applies to position references", path)

        # Nested location values, when given, must fall inside the parent's range.
        if pat.kind is PatternKind.NESTED and pat.sub is not None:
            for sub_seg in iter_segments(pat.sub):
                sl = sub_seg.location
                for val in (sl.x_start, sl.x_end):
                    if val is None:
                        continue
                    if loc.x_start is not None and val < loc.x_start:
                        add("NESTED_RANGE", f"nested x value {val} lies before parent's x_start", path)
                    if loc.x_end is not None and val > loc.x_end:
                        add("NESTED_RANGE", f"nested x value {val} lies past parent's x_end", path)

    return ValidationReport(tuple(issues))


def normalize_ast(ast: ShapeQueryAst) -> ShapeQueryAst:
    """Flatten nested same-operator nodes and cancel double negation.

    ``Concat[Concat[a,b],c]`` becomes ``Concat[a,b,c]``; ``Not(Not(x))``
    becomes ``x``.  Scores are unchanged on every trendline (averaging, min
    and max are associative; negation is an involution).
    """
    if isinstance(ast, Seg):
        pat = ast.segment.pattern
        if pat.kind is PatternKind.NESTED and pat.sub is not None:
            sub = normalize_ast(pat.sub)
            if sub is not pat.sub:
                return Seg(replace(ast.segment, pattern=replace(pat, sub=sub)))
        return ast
    if isinstance(ast, Not):
        child = normalize_ast(ast.child)
        if isinstance(child, Not):
            return child.child
        return Not(child)
    kind = type(ast)
    flat: list[ShapeQueryAst] = []
    for child in ast.children:
        child = normalize_ast(child)
        if isinstance(child, kind):
            flat.extend(child.children)
        else:
            flat.append(child)
    if len(flat) == 1:
        return flat[0]
    return kind(tuple(flat))


def expr_count(ast: ShapeQueryAst) -> int:
    """Number of ShapeExprs: top-level CONCAT operands after normalization.

    This is the engine's k, the number of visual segments a trendline is
    split into.
    """
    norm = normalize_ast(ast)
    if isinstance(norm, Concat):
        return len(norm.children)
    return 1


def top_level_exprs(ast: ShapeQueryAst) -> tuple[ShapeQueryAst, ...]:
    """The ordered ShapeExprs of a normalized query (the CONCAT chain)."""
    norm = normalize_ast(ast)
    if isinstance(norm, Concat):
        return norm.children
    return (norm,)
