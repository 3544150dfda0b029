"""Surface syntax for shape queries.

Grammar (ASCII aliases for the algebra's operators)::

    query    = unary (op unary)*          op = ">>" | ";" | "&" | "|"
    unary    = "!" unary | "(" query ")" | segment
    segment  = "[" field ("," field)* "]" | bare
    bare     = "u" | "d" | "f" | "any" | "empty" | number
    field    = "p" "=" pvalue | "m" "=" mvalue | "v" "=" points
             | ("x"|"y") "." ("s"|"e") "=" (number | "." | ".+" number)

All binary operators share one precedence level and associate left:
``u >> d & f`` parses as ``(u >> d) & f``.  "!" binds tighter than any
binary operator.  The full grammar, with every modifier and pattern value
form, is documented in docs/grammar.md.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Optional

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
    ShapeQueryAst,
    ShapeSegment,
    normalize_ast,
    validate_ast,
)


class TokenKind(enum.Enum):
    LBRACKET = "["
    RBRACKET = "]"
    LPAREN = "("
    RPAREN = ")"
    OP_CONCAT = ">>"
    OP_AND = "&"
    OP_OR = "|"
    OP_NOT = "!"
    IDENT = "ident"
    NUMBER = "number"
    COMMA = ","
    COLON = ":"
    EQUALS = "="
    DOT = "."
    DOT_PLUS = ".+"
    DOLLAR = "$"
    PLUS = "+"
    MINUS = "-"
    BRACE_QUANT = "brace"
    CMP = "cmp"  # <, <<, > as modifier values
    QUANT_SUGAR = "sugar"  # ? or *, only lexed right after "m="
    EOF = "eof"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    start: int
    end: int


class LexError(ValueError):
    def __init__(self, message: str, span: tuple[int, int]):
        super().__init__(f"{message} at {span[0]}..{span[1]}")
        self.message = message
        self.span = span


class ParseError(ValueError):
    def __init__(self, message: str, span: tuple[int, int], expected: tuple[str, ...] = ()):
        super().__init__(f"{message} at {span[0]}..{span[1]}")
        self.message = message
        self.span = span
        self.expected = expected


class SemanticError(ValueError):
    """A syntactically valid query that fails AST validation."""

    def __init__(self, issues):
        super().__init__("; ".join(f"{i.code}: {i.message}" for i in issues))
        self.issues = issues


_NUMBER_RE = re.compile(r"-?\d+(\.\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_BRACE_RE = re.compile(r"\{[^{}]*\}")

_SIMPLE_TOKENS = {
    "[": TokenKind.LBRACKET,
    "]": TokenKind.RBRACKET,
    "(": TokenKind.LPAREN,
    ")": TokenKind.RPAREN,
    ";": TokenKind.OP_CONCAT,
    "&": TokenKind.OP_AND,
    "|": TokenKind.OP_OR,
    "!": TokenKind.OP_NOT,
    ",": TokenKind.COMMA,
    ":": TokenKind.COLON,
    "=": TokenKind.EQUALS,
    "$": TokenKind.DOLLAR,
    "+": TokenKind.PLUS,
}


def tokenize(text: str) -> list[Token]:
    """Split a query string into tokens; raises LexError on stray characters.

    Every non-whitespace character lands in exactly one token span.  Two
    character operators (">>", "<<", ".+") win over their one character
    prefixes.  ">>" doubles as CONCAT and as the sharper-up modifier value;
    the parser disambiguates by context.  '?' and '*' lex only directly
    after "m=" (the quantifier shorthands); anywhere else they are a
    LexError.
    """
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c == "{":
            m = _BRACE_RE.match(text, i)
            if not m:
                raise LexError("unterminated '{'", (i, min(i + 1, n)))
            tokens.append(Token(TokenKind.BRACE_QUANT, m.group(0), i, m.end()))
            i = m.end()
            continue
        two = text[i : i + 2]
        if two == ">>":
            tokens.append(Token(TokenKind.OP_CONCAT, ">>", i, i + 2))
            i += 2
            continue
        if two == "<<":
            tokens.append(Token(TokenKind.CMP, "<<", i, i + 2))
            i += 2
            continue
        if two == ".+":
            tokens.append(Token(TokenKind.DOT_PLUS, ".+", i, i + 2))
            i += 2
            continue
        if c in "<>":
            tokens.append(Token(TokenKind.CMP, c, i, i + 1))
            i += 1
            continue
        if c in "?*":
            if (
                len(tokens) >= 2
                and tokens[-1].kind is TokenKind.EQUALS
                and tokens[-2].kind is TokenKind.IDENT
                and tokens[-2].text.lower() == "m"
            ):
                tokens.append(Token(TokenKind.QUANT_SUGAR, c, i, i + 1))
                i += 1
                continue
            raise LexError(f"{c!r} is only legal after 'm='", (i, i + 1))
        if c in "0123456789" or (c == "-" and i + 1 < n and text[i + 1] in "0123456789"):
            m = _NUMBER_RE.match(text, i)
            assert m is not None
            tokens.append(Token(TokenKind.NUMBER, m.group(0), i, m.end()))
            i = m.end()
            continue
        if c == "-":
            tokens.append(Token(TokenKind.MINUS, "-", i, i + 1))
            i += 1
            continue
        if c == ".":
            tokens.append(Token(TokenKind.DOT, ".", i, i + 1))
            i += 1
            continue
        simple = _SIMPLE_TOKENS.get(c)
        if simple is not None:
            tokens.append(Token(simple, c, i, i + 1))
            i += 1
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            tokens.append(Token(TokenKind.IDENT, m.group(0), i, m.end()))
            i = m.end()
            continue
        raise LexError(f"unexpected character {c!r}", (i, i + 1))
    tokens.append(Token(TokenKind.EOF, "", n, n))
    return tokens


_BARE_PATTERNS = {
    "u": Pattern.up(),
    "up": Pattern.up(),
    "d": Pattern.down(),
    "down": Pattern.down(),
    "f": Pattern.flat(),
    "flat": Pattern.flat(),
    "any": Pattern.any(),
    "empty": Pattern.empty(),
}

_BINARY_OPS = {
    TokenKind.OP_CONCAT: Concat,
    TokenKind.OP_AND: And,
    TokenKind.OP_OR: Or,
}


def _int_value(tok: Token) -> int:
    value = float(tok.text)
    if not math.isfinite(value) or abs(value) > 1e9:
        raise ParseError(f"number {tok.text!r} out of range", (tok.start, tok.end))
    return int(value)


#: Parenthesis/negation nesting beyond this is rejected, keeping the
#: recursive-descent parser total on adversarial input.
MAX_PARSE_DEPTH = 200


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.depth = 0

    def _enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_PARSE_DEPTH:
            tok = self.peek()
            raise ParseError("query nesting too deep", (tok.start, tok.end))

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: TokenKind) -> Token:
        tok = self.peek()
        if tok.kind is not kind:
            raise ParseError(
                f"expected {kind.value!r}, found {tok.text or 'end of input'!r}",
                (tok.start, tok.end),
                expected=(kind.value,),
            )
        return self.next()

    # query = unary (op unary)*   equal precedence, left-associative;
    # runs of the same operator collect into one n-ary node
    def parse_query(self) -> ShapeQueryAst:
        node = self.parse_unary()
        while self.peek().kind in _BINARY_OPS:
            op_kind = _BINARY_OPS[self.next().kind]
            rhs = self.parse_unary()
            if isinstance(node, op_kind):
                node = op_kind(node.children + (rhs,))
            else:
                node = op_kind((node, rhs))
        return node

    def parse_unary(self) -> ShapeQueryAst:
        tok = self.peek()
        if tok.kind is TokenKind.OP_NOT:
            self._enter()
            try:
                self.next()
                return Not(self.parse_unary())
            finally:
                self.depth -= 1
        if tok.kind is TokenKind.LPAREN:
            self._enter()
            try:
                self.next()
                node = self.parse_query()
                self.expect(TokenKind.RPAREN)
                return node
            finally:
                self.depth -= 1
        if tok.kind is TokenKind.LBRACKET:
            return Seg(self.parse_bracket_segment())
        if tok.kind is TokenKind.IDENT:
            pat = _BARE_PATTERNS.get(tok.text.lower())
            if pat is None:
                raise ParseError(
                    f"unknown pattern shorthand {tok.text!r}",
                    (tok.start, tok.end),
                    expected=tuple(sorted(_BARE_PATTERNS)),
                )
            self.next()
            return Seg(ShapeSegment(pattern=pat))
        if tok.kind is TokenKind.NUMBER:
            self.next()
            return Seg(ShapeSegment(pattern=Pattern.theta(float(tok.text))))
        raise ParseError(
            f"expected a segment, found {tok.text or 'end of input'!r}",
            (tok.start, tok.end),
            expected=("[", "(", "!", "identifier", "number"),
        )

    def parse_bracket_segment(self) -> ShapeSegment:
        self.expect(TokenKind.LBRACKET)
        pattern: Optional[Pattern] = None
        modifier = Modifier()
        x_start = x_end = y_start = y_end = None
        iterator_width: Optional[int] = None
        saw_iter_start = False

        while True:
            tok = self.peek()
            if tok.kind is TokenKind.RBRACKET:
                self.next()
                break
            if tok.kind is not TokenKind.IDENT:
                raise ParseError(
                    f"expected a field name, found {tok.text or 'end of input'!r}",
                    (tok.start, tok.end),
                    expected=("p", "m", "v", "x", "y", "]"),
                )
            name = self.next().text.lower()
            if name in ("x", "y"):
                self.expect(TokenKind.DOT)
                side_tok = self.expect(TokenKind.IDENT)
                side = side_tok.text.lower()
                if side not in ("s", "e"):
                    raise ParseError(
                        f"expected 's' or 'e' after '{name}.'",
                        (side_tok.start, side_tok.end),
                        expected=("s", "e"),
                    )
                self.expect(TokenKind.EQUALS)
                val_tok = self.peek()
                if val_tok.kind is TokenKind.DOT:
                    self.next()
                    if name != "x" or side != "s":
                        raise ParseError("iterator '.' only valid as x.s value", (val_tok.start, val_tok.end))
                    saw_iter_start = True
                elif val_tok.kind is TokenKind.DOT_PLUS:
                    self.next()
                    w_tok = self.expect(TokenKind.NUMBER)
                    if name != "x" or side != "e":
                        raise ParseError("iterator '.+' only valid as x.e value", (val_tok.start, val_tok.end))
                    iterator_width = _int_value(w_tok)
                else:
                    num = float(self.expect(TokenKind.NUMBER).text)
                    if name == "x" and side == "s":
                        x_start = num
                    elif name == "x" and side == "e":
                        x_end = num
                    elif name == "y" and side == "s":
                        y_start = num
                    else:
                        y_end = num
            elif name == "p":
                self.expect(TokenKind.EQUALS)
                pattern = self.parse_pattern_value()
            elif name == "m":
                self.expect(TokenKind.EQUALS)
                modifier = self.parse_modifier_value(modifier)
            elif name == "v":
                self.expect(TokenKind.EQUALS)
                pattern = self.parse_sketch_points()
            else:
                raise ParseError(
                    f"unknown field {name!r}", (tok.start, tok.end), expected=("p", "m", "v", "x", "y")
                )
            if self.peek().kind is TokenKind.COMMA:
                self.next()

        if iterator_width is not None and not saw_iter_start:
            tok = self.peek()
            raise ParseError("iterator 'x.e=.+w' requires 'x.s=.'", (tok.start, tok.end))
        if pattern is None:
            pattern = Pattern.any()
        return ShapeSegment(
            pattern=pattern,
            location=Location(
                x_start=x_start,
                x_end=x_end,
                y_start=y_start,
                y_end=y_end,
                iterator_width=iterator_width,
            ),
            modifier=modifier,
        )

    def parse_pattern_value(self) -> Pattern:
        tok = self.peek()
        if tok.kind is TokenKind.IDENT:
            self.next()
            pat = _BARE_PATTERNS.get(tok.text.lower())
            if pat is not None:
                return pat
            return Pattern.udp(tok.text)
        if tok.kind is TokenKind.NUMBER:
            self.next()
            return Pattern.theta(float(tok.text))
        if tok.kind is TokenKind.BRACE_QUANT:
            # compatibility form p={up}
            self.next()
            inner = tok.text[1:-1].strip().lower()
            pat = _BARE_PATTERNS.get(inner)
            if pat is not None:
                return pat
            try:
                return Pattern.theta(float(inner))
            except ValueError:
                raise ParseError(f"unknown pattern {inner!r}", (tok.start, tok.end)) from None
        if tok.kind is TokenKind.DOLLAR:
            self.next()
            ref_tok = self.peek()
            if ref_tok.kind is TokenKind.NUMBER:
                self.next()
                return Pattern.position_ref(_int_value(ref_tok))
            if ref_tok.kind is TokenKind.MINUS:
                self.next()
                return Pattern.position_ref("-")
            if ref_tok.kind is TokenKind.PLUS:
                self.next()
                return Pattern.position_ref("+")
            raise ParseError(
                "expected segment index, '-' or '+' after '$'",
                (ref_tok.start, ref_tok.end),
                expected=("number", "-", "+"),
            )
        if tok.kind is TokenKind.LPAREN:
            self._enter()
            try:
                self.next()
                sub = self.parse_query()
                self.expect(TokenKind.RPAREN)
                return Pattern.nested(sub)
            finally:
                self.depth -= 1
        if tok.kind is TokenKind.LBRACKET:
            self._enter()
            try:
                return Pattern.nested(Seg(self.parse_bracket_segment()))
            finally:
                self.depth -= 1
        raise ParseError(
            f"expected a pattern value, found {tok.text or 'end of input'!r}",
            (tok.start, tok.end),
            expected=("up", "down", "flat", "any", "empty", "number", "$", "(", "["),
        )

    def parse_modifier_value(self, modifier: Modifier) -> Modifier:
        tok = self.peek()
        if tok.kind is TokenKind.BRACE_QUANT:
            self.next()
            return Modifier(
                quantifier=_parse_quantifier_braces(tok),
                comparator=modifier.comparator,
                multiplier=modifier.multiplier,
            )
        if tok.kind is TokenKind.NUMBER:
            # m=2 means exactly twice
            self.next()
            n = _int_value(tok)
            return Modifier(
                quantifier=Quantifier(min=n, max=n),
                comparator=modifier.comparator,
                multiplier=modifier.multiplier,
            )
        if tok.kind is TokenKind.PLUS:
            self.next()
            quantifier = Quantifier(min=1, max=None)
        elif tok.kind is TokenKind.QUANT_SUGAR:
            self.next()
            quantifier = Quantifier(min=0, max=1) if tok.text == "?" else Quantifier(min=0, max=None)
        else:
            quantifier = None
        if quantifier is not None:
            return Modifier(
                quantifier=quantifier, comparator=modifier.comparator, multiplier=modifier.multiplier
            )
        if tok.kind is TokenKind.CMP:
            self.next()
            comparator = {
                "<": Comparator.LESS,
                "<<": Comparator.LESS_MUCH,
                ">": Comparator.GREATER,
            }[tok.text]
            multiplier = None
            if self.peek().kind is TokenKind.NUMBER:
                multiplier = float(self.next().text)
            return Modifier(
                quantifier=modifier.quantifier, comparator=comparator, multiplier=multiplier
            )
        if tok.kind is TokenKind.OP_CONCAT:
            # ">>" after m= is the sharper-up value, not CONCAT
            self.next()
            return Modifier(
                quantifier=modifier.quantifier,
                comparator=Comparator.GREATER_MUCH,
                multiplier=modifier.multiplier,
            )
        if tok.kind is TokenKind.EQUALS:
            self.next()
            return Modifier(
                quantifier=modifier.quantifier,
                comparator=Comparator.EQUAL,
                multiplier=modifier.multiplier,
            )
        raise ParseError(
            f"expected a modifier value, found {tok.text or 'end of input'!r}",
            (tok.start, tok.end),
            expected=("{a,b}", "number", "<", "<<", ">", ">>", "=", "+", "?", "*"),
        )

    def parse_sketch_points(self) -> Pattern:
        points: list[tuple[float, float]] = []
        while True:
            x = float(self.expect(TokenKind.NUMBER).text)
            self.expect(TokenKind.COLON)
            y = float(self.expect(TokenKind.NUMBER).text)
            points.append((x, y))
            if (
                self.peek().kind is TokenKind.COMMA
                and self.tokens[self.pos + 1].kind is TokenKind.NUMBER
            ):
                self.next()
                continue
            break
        return Pattern.sketch(points)


def _parse_quantifier_braces(tok: Token) -> Quantifier:
    inner = tok.text[1:-1].strip()
    if "," not in inner:
        try:
            n = int(inner)
        except ValueError:
            raise ParseError(f"bad quantifier {tok.text!r}", (tok.start, tok.end)) from None
        return Quantifier(min=n, max=n)
    lo_s, hi_s = inner.split(",", 1)
    lo_s, hi_s = lo_s.strip(), hi_s.strip()
    try:
        lo = int(lo_s) if lo_s else 0
        hi = int(hi_s) if hi_s else None
    except ValueError:
        raise ParseError(f"bad quantifier {tok.text!r}", (tok.start, tok.end)) from None
    return Quantifier(min=lo, max=hi)


def parse_shapequery(text: str, validate: bool = True) -> ShapeQueryAst:
    """Parse a query string; raises LexError, ParseError or SemanticError.

    The returned AST passes validate_ast when ``validate`` is left on.
    """
    parser = _Parser(tokenize(text))
    ast = parser.parse_query()
    eof = parser.peek()
    if eof.kind is not TokenKind.EOF:
        raise ParseError(
            f"unexpected trailing input {eof.text!r}",
            (eof.start, eof.end),
            expected=("end of input",),
        )
    if validate:
        report = validate_ast(ast)
        if not report.ok:
            raise SemanticError(report.issues)
    return ast


# --- formatting ---------------------------------------------------------


def format_shapequery(ast: ShapeQueryAst) -> str:
    """Print an AST back to canonical text (full bracket form, minimal parens).

    parse(format(ast)) equals normalize_ast(ast) structurally.
    """
    return _format_node(normalize_ast(ast))


_OP_TEXT = {Concat: " >> ", And: " & ", Or: " | "}


def _format_node(ast: ShapeQueryAst) -> str:
    if isinstance(ast, Seg):
        return _format_segment(ast.segment)
    if isinstance(ast, Not):
        inner = _format_node(ast.child)
        if isinstance(ast.child, Seg):
            return f"!{inner}"
        return f"!({inner})"
    parts = []
    for i, child in enumerate(ast.children):
        text = _format_node(child)
        # Left-associativity makes parens redundant on the first child only.
        if isinstance(child, (Concat, And, Or)) and i > 0:
            text = f"({text})"
        parts.append(text)
    return _OP_TEXT[type(ast)].join(parts)


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _format_segment(segment: ShapeSegment) -> str:
    fields: list[str] = []
    pat = segment.pattern
    kind = pat.kind
    if kind is PatternKind.SKETCH:
        pts = ",".join(f"{_format_number(x)}:{_format_number(y)}" for x, y in pat.points or ())
        fields.append(f"v={pts}")
    elif kind is PatternKind.THETA:
        fields.append(f"p={_format_number(pat.angle or 0.0)}")
    elif kind is PatternKind.POSITION_REF:
        fields.append(f"p=${pat.ref}")
    elif kind is PatternKind.NESTED:
        fields.append(f"p=({_format_node(normalize_ast(pat.sub))})")
    elif kind is PatternKind.UDP:
        fields.append(f"p={pat.name}")
    else:
        fields.append(f"p={kind.value}")

    loc = segment.location
    if loc.iterator_width is not None:
        fields.append("x.s=.")
        fields.append(f"x.e=.+{loc.iterator_width}")
    else:
        if loc.x_start is not None:
            fields.append(f"x.s={_format_number(loc.x_start)}")
        if loc.x_end is not None:
            fields.append(f"x.e={_format_number(loc.x_end)}")
    if loc.y_start is not None:
        fields.append(f"y.s={_format_number(loc.y_start)}")
    if loc.y_end is not None:
        fields.append(f"y.e={_format_number(loc.y_end)}")

    mod = segment.modifier
    if mod.quantifier is not None:
        q = mod.quantifier
        if q.max == q.min:
            fields.append(f"m={{{q.min}}}")
        elif q.max is None:
            fields.append(f"m={{{q.min},}}")
        else:
            fields.append(f"m={{{q.min},{q.max}}}")
    if mod.comparator is not None:
        if mod.multiplier is not None:
            fields.append(f"m={mod.comparator.value}{_format_number(mod.multiplier)}")
        else:
            fields.append(f"m={mod.comparator.value}")

    return "[" + ",".join(fields) + "]"
