"""
Symbolic estimands: expression trees over observational probability terms.

Node kinds are immutable dataclasses. A tree renders either as an
s-expression (machine readable, round-trips through `parse_sexpr`) or as
human-readable text such as `Σ_{Z2} P(Y | Z2, T=0) P(Z2 | X2, T=0)`.

S-expression grammar:

    (p (V...) given (V...) [ctx ((N v)...)])
    (sum (V...) E)
    (prod E...)
    (div E E)
    (ctxmix ((N v)... E)...)
    (nonid "witness")
"""
import logging
import re
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Sequence, Tuple, Union

from csi_id.errors import ParseError
from csi_id.graph import NAME_PATTERN, Context

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObsProb:
    """P(variables | given, context) under the observational distribution."""

    variables: Tuple[str, ...]
    given: Tuple[str, ...] = ()
    context: Context = field(default_factory=Context)


@dataclass(frozen=True)
class SumOver:
    variables: Tuple[str, ...]
    child: "Estimand"


@dataclass(frozen=True)
class Product:
    children: Tuple["Estimand", ...]


@dataclass(frozen=True)
class Quotient:
    numerator: "Estimand"
    denominator: "Estimand"


@dataclass(frozen=True)
class ContextMixture:
    """Σ_c P(c) · child_c over the listed contexts."""

    branches: Tuple[Tuple[Context, "Estimand"], ...]


@dataclass(frozen=True)
class NonIdentifiable:
    witness: str


Estimand = Union[ObsProb, SumOver, Product, Quotient, ContextMixture, NonIdentifiable]


def is_identified(e: Estimand) -> bool:
    return not isinstance(e, NonIdentifiable)


# -- smart constructors --------------------------------------------------------

def sum_over(variables: Iterable[str], child: Estimand) -> Estimand:
    """SumOver that collapses when nothing is summed out."""
    names = tuple(variables)
    if not names:
        return child
    if isinstance(child, SumOver):
        return SumOver(names + child.variables, child.child)
    return SumOver(names, child)


def product(children: Sequence[Estimand]) -> Estimand:
    """Product that flattens nested products and unwraps singletons."""
    flat: List[Estimand] = []
    for child in children:
        if isinstance(child, Product):
            flat.extend(child.children)
        else:
            flat.append(child)
    if len(flat) == 1:
        return flat[0]
    return Product(tuple(flat))


# -- utilities -------------------------------------------------------------------

def free_variables(e: Estimand) -> FrozenSet[str]:
    """Variables whose values must be supplied to evaluate `e`."""
    if isinstance(e, ObsProb):
        return frozenset(e.variables) | frozenset(e.given)
    if isinstance(e, SumOver):
        return free_variables(e.child) - frozenset(e.variables)
    if isinstance(e, Product):
        out: FrozenSet[str] = frozenset()
        for child in e.children:
            out |= free_variables(child)
        return out
    if isinstance(e, Quotient):
        return free_variables(e.numerator) | free_variables(e.denominator)
    if isinstance(e, ContextMixture):
        out = frozenset()
        for _, child in e.branches:
            out |= free_variables(child)
        return out
    return frozenset()


def with_context(e: Estimand, c: Context) -> Estimand:
    """Add the assignments of `c` to every ObsProb term in `e`."""
    if c.is_empty():
        return e
    if isinstance(e, ObsProb):
        return ObsProb(e.variables, e.given, Context(e.context.assignments + c.assignments))
    if isinstance(e, SumOver):
        return SumOver(e.variables, with_context(e.child, c))
    if isinstance(e, Product):
        return Product(tuple(with_context(child, c) for child in e.children))
    if isinstance(e, Quotient):
        return Quotient(with_context(e.numerator, c), with_context(e.denominator, c))
    if isinstance(e, ContextMixture):
        return ContextMixture(tuple((bc, with_context(child, c)) for bc, child in e.branches))
    return e


def terms(e: Estimand) -> Iterable[ObsProb]:
    """Every ObsProb leaf, depth first."""
    if isinstance(e, ObsProb):
        yield e
    elif isinstance(e, SumOver):
        yield from terms(e.child)
    elif isinstance(e, Product):
        for child in e.children:
            yield from terms(child)
    elif isinstance(e, Quotient):
        yield from terms(e.numerator)
        yield from terms(e.denominator)
    elif isinstance(e, ContextMixture):
        for _, child in e.branches:
            yield from terms(child)


# -- rendering ------------------------------------------------------------------

def _sexpr_names(names: Iterable[str]) -> str:
    return "(" + " ".join(names) + ")"


def _sexpr_context(c: Context) -> str:
    return " ".join(f"({name} {value})" for name, value in c.assignments)


def _to_sexpr(e: Estimand) -> str:
    if isinstance(e, ObsProb):
        out = f"(p {_sexpr_names(e.variables)} given {_sexpr_names(e.given)}"
        if not e.context.is_empty():
            out += f" ctx ({_sexpr_context(e.context)})"
        return out + ")"
    if isinstance(e, SumOver):
        if not e.variables:
            return _to_sexpr(e.child)
        return f"(sum {_sexpr_names(e.variables)} {_to_sexpr(e.child)})"
    if isinstance(e, Product):
        return "(prod" + "".join(" " + _to_sexpr(child) for child in e.children) + ")"
    if isinstance(e, Quotient):
        return f"(div {_to_sexpr(e.numerator)} {_to_sexpr(e.denominator)})"
    if isinstance(e, ContextMixture):
        parts = []
        for c, child in e.branches:
            head = _sexpr_context(c)
            parts.append(f"({head} {_to_sexpr(child)})" if head else f"({_to_sexpr(child)})")
        return "(ctxmix" + "".join(" " + p for p in parts) + ")"
    if isinstance(e, NonIdentifiable):
        escaped = e.witness.replace('\\', '\\\\').replace('"', '\\"')
        return f'(nonid "{escaped}")'
    raise TypeError(f"not an estimand: {e!r}")


def _text_prob(variables: Iterable[str], given: Iterable[str], c: Context) -> str:
    conditions = list(given) + [f"{name}={value}" for name, value in c.assignments]
    head = ", ".join(variables)
    if conditions:
        return f"P({head} | {', '.join(conditions)})"
    return f"P({head})"


def _to_text(e: Estimand, nested: bool = False) -> str:
    if isinstance(e, ObsProb):
        return _text_prob(e.variables, e.given, e.context)
    if isinstance(e, SumOver):
        if not e.variables:
            return _to_text(e.child, nested)
        body = f"Σ_{{{','.join(e.variables)}}} {_to_text(e.child)}"
        return f"({body})" if nested else body
    if isinstance(e, Product):
        if not e.children:
            return "1"
        return " ".join(_to_text(child, nested=True) for child in e.children)
    if isinstance(e, Quotient):
        body = f"[{_to_text(e.numerator)}] / [{_to_text(e.denominator)}]"
        return f"({body})" if nested else body
    if isinstance(e, ContextMixture):
        parts = []
        for c, child in e.branches:
            weight = _text_prob([f"{n}={v}" for n, v in c.assignments], [], Context())
            parts.append(f"{_to_text(child, nested=True)} {weight}" if not c.is_empty() else _to_text(child))
        body = " + ".join(parts)
        return f"({body})" if nested and len(parts) > 1 else body
    if isinstance(e, NonIdentifiable):
        return f"NON-IDENTIFIABLE: {e.witness}"
    raise TypeError(f"not an estimand: {e!r}")


def render(e: Estimand, style: str = "text") -> str:
    """
    Serialise an estimand.

    Args:
        e: Estimand tree
        style: 'sexpr' or 'text'

    Returns:
        Deterministic string form
    """
    if style == "sexpr":
        return _to_sexpr(e)
    if style == "text":
        return _to_text(e)
    raise ValueError(f"unknown render style '{style}'")


# -- parsing --------------------------------------------------------------------

TOKEN_PATTERN = re.compile(r'\s*(?:(\()|(\))|"((?:[^"\\]|\\.)*)"|([^\s()"]+))')


class _Str(str):
    """A quoted string token, kept apart from bare atoms."""


def _tokenize(text: str) -> List[str]:
    tokens: List[str] = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        match = TOKEN_PATTERN.match(text, pos)
        if not match or match.end() == pos:
            raise ParseError(f"unexpected character at offset {pos}: {text[pos]!r}")
        open_, close, quoted, atom = match.groups()
        if open_:
            tokens.append('(')
        elif close:
            tokens.append(')')
        elif quoted is not None:
            tokens.append(_Str(re.sub(r'\\(.)', r'\1', quoted)))
        else:
            tokens.append(atom)
        pos = match.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return tokens


def _read(tokens: List[str], pos: int):
    if pos >= len(tokens):
        raise ParseError("unexpected end of estimand")
    token = tokens[pos]
    if token == ')' and not isinstance(token, _Str):
        raise ParseError("unexpected ')'")
    if token == '(' and not isinstance(token, _Str):
        items = []
        pos += 1
        while True:
            if pos >= len(tokens):
                raise ParseError("unbalanced parentheses")
            if tokens[pos] == ')' and not isinstance(tokens[pos], _Str):
                return items, pos + 1
            item, pos = _read(tokens, pos)
            items.append(item)
    return token, pos + 1


def _names(node, what: str) -> Tuple[str, ...]:
    if not isinstance(node, list):
        raise ParseError(f"expected a parenthesised {what} list, got '{node}'")
    for name in node:
        if not isinstance(name, str) or isinstance(name, _Str) or not NAME_PATTERN.match(name):
            raise ParseError(f"invalid variable name in {what} list: {name!r}")
    return tuple(node)


def _assignment(node) -> Tuple[str, int]:
    if (
        not isinstance(node, list)
        or len(node) != 2
        or not all(isinstance(x, str) for x in node)
        or not NAME_PATTERN.match(node[0])
        or not node[1].isdigit()
    ):
        raise ParseError(f"expected an assignment '(N v)', got {node!r}")
    return node[0], int(node[1])


def _is_assignment(node) -> bool:
    return (
        isinstance(node, list)
        and len(node) == 2
        and all(isinstance(x, str) and not isinstance(x, _Str) for x in node)
        and node[1].isdigit()
    )


def _build(node) -> Estimand:
    if not isinstance(node, list) or not node or not isinstance(node[0], str):
        raise ParseError(f"expected an estimand, got {node!r}")
    head, args = node[0], node[1:]

    if head == 'p':
        if len(args) not in (3, 5) or args[1] != 'given':
            raise ParseError("expected '(p (V...) given (V...) [ctx ((N v)...)])'")
        variables = _names(args[0], "variable")
        given = _names(args[2], "conditioning")
        context = Context()
        if len(args) == 5:
            if args[3] != 'ctx' or not isinstance(args[4], list):
                raise ParseError("expected 'ctx ((N v)...)'")
            context = Context(tuple(_assignment(a) for a in args[4]))
        return ObsProb(variables, given, context)

    if head == 'sum':
        if len(args) != 2:
            raise ParseError("expected '(sum (V...) E)'")
        return SumOver(_names(args[0], "summation"), _build(args[1]))

    if head == 'prod':
        return Product(tuple(_build(a) for a in args))

    if head == 'div':
        if len(args) != 2:
            raise ParseError("expected '(div E E)'")
        return Quotient(_build(args[0]), _build(args[1]))

    if head == 'ctxmix':
        branches = []
        for branch in args:
            if not isinstance(branch, list) or not branch:
                raise ParseError(f"expected a mixture branch, got {branch!r}")
            *assignments, child = branch
            if not all(_is_assignment(a) for a in assignments):
                raise ParseError(f"malformed mixture branch context {assignments!r}")
            branches.append((Context(tuple(_assignment(a) for a in assignments)), _build(child)))
        return ContextMixture(tuple(branches))

    if head == 'nonid':
        if len(args) != 1 or not isinstance(args[0], _Str):
            raise ParseError("expected '(nonid \"witness\")'")
        return NonIdentifiable(str(args[0]))

    raise ParseError(f"unknown estimand node '{head}'")


def parse_sexpr(text: str) -> Estimand:
    """Parse the s-expression form produced by `render(e, 'sexpr')`."""
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty estimand")
    node, pos = _read(tokens, 0)
    if pos != len(tokens):
        raise ParseError("trailing input after estimand")
    return _build(node)


def read_estimand_file(path: str) -> Estimand:
    with open(path, encoding='utf-8') as handle:
        text = handle.read()
    try:
        return parse_sexpr(text)
    except ParseError as e:
        raise ParseError(str(e), None, path)
