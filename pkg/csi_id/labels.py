import itertools
import logging
import re
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Set, Tuple

from csi_id.errors import (
    InternalConsistencyError,
    ParseError,
    PreconditionError,
    UnknownVariableError,
    ValidationError,
)
from csi_id.graph import NAME_PATTERN, CausalGraph, Context, Edge, delete_edges

logger = logging.getLogger(__name__)

EDGE_PATTERN = re.compile(r'^([A-Za-z0-9_]+)->([A-Za-z0-9_]+)$')


class ControlSpec:
    """Ordered set of control variables; each must be an observed root."""

    def __init__(self, controls: Iterable[str] = ()):
        self.controls: Tuple[str, ...] = tuple(controls)
        if len(set(self.controls)) != len(self.controls):
            raise ValidationError(f"duplicate control in {list(self.controls)}")

    def __iter__(self) -> Iterator[str]:
        return iter(self.controls)

    def __len__(self) -> int:
        return len(self.controls)

    def __contains__(self, name: object) -> bool:
        return name in self.controls

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ControlSpec):
            return NotImplemented
        return self.controls == other.controls

    def __hash__(self) -> int:
        return hash(self.controls)

    def __repr__(self) -> str:
        return f"ControlSpec({list(self.controls)})"

    def validate(self, g: CausalGraph) -> None:
        roots = set(g.observed_roots())
        for name in self.controls:
            if name not in g:
                raise UnknownVariableError(name)
            if name not in roots:
                raise ValidationError(f"control '{name}' is not an observed root")

    def contexts(self, g: CausalGraph) -> List[Context]:
        """
        Enumerate every complete assignment of the controls, lexicographically
        (controls in declared order, values ascending). No controls gives the
        single empty context.
        """
        self.validate(g)
        domains = [range(g.domain_size(name)) for name in self.controls]
        return [Context(tuple(zip(self.controls, values))) for values in itertools.product(*domains)]

    def controls_of(self, g: CausalGraph, x: str) -> Tuple[str, ...]:
        """C^X: the controls among x's parents."""
        parents = set(g.parents(x))
        return tuple(c for c in self.controls if c in parents)


class LabelSet:
    """
    Per-context sets of removable edges.

    Contexts that carry no label may be omitted; lookups return an empty set
    for them and equality ignores them.
    """

    def __init__(self, labels: Optional[Mapping[Context, Iterable[Edge]]] = None):
        self._labels: Dict[Context, FrozenSet[Edge]] = {}
        for context, edges in (labels or {}).items():
            self._labels[context] = frozenset(tuple(e) for e in edges)

    @classmethod
    def empty(cls, g: CausalGraph, c_spec: ControlSpec) -> "LabelSet":
        return cls({c: () for c in c_spec.contexts(g)})

    def __getitem__(self, context: Context) -> FrozenSet[Edge]:
        return self._labels.get(context, frozenset())

    def contexts(self) -> Tuple[Context, ...]:
        return tuple(self._labels)

    def items(self) -> Iterator[Tuple[Context, FrozenSet[Edge]]]:
        return iter(self._labels.items())

    def edges(self) -> FrozenSet[Edge]:
        """Union of the labeled edges over all contexts."""
        out: Set[Edge] = set()
        for edges in self._labels.values():
            out |= edges
        return frozenset(out)

    def is_empty(self) -> bool:
        return not self.edges()

    def _nonempty(self) -> Dict[Context, FrozenSet[Edge]]:
        return {c: e for c, e in self._labels.items() if e}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelSet):
            return NotImplemented
        return self._nonempty() == other._nonempty()

    def __hash__(self) -> int:
        return hash(frozenset(self._nonempty().items()))

    def __repr__(self) -> str:
        body = ", ".join(f"{c}: {sorted(e)}" for c, e in self._nonempty().items())
        return f"LabelSet({{{body}}})"

    def validate(self, g: CausalGraph, c_spec: ControlSpec) -> None:
        """
        Raises:
            ValidationError: on partial contexts, out-of-domain values, missing
                edges or edges touching a control variable
        """
        c_spec.validate(g)
        for context, edges in self._labels.items():
            if context.keys() != c_spec.controls:
                raise ValidationError(
                    f"context '{context}' must assign exactly the controls {list(c_spec.controls)}"
                )
            for name, value in context.assignments:
                if not 0 <= value < g.domain_size(name):
                    raise ValidationError(f"value {value} outside the domain of '{name}'")
            for parent, child in edges:
                if not g.has_edge(parent, child):
                    raise ValidationError(f"labeled edge {parent}->{child} is not in the graph")
                if child in c_spec or parent in c_spec:
                    raise ValidationError(f"labeled edge {parent}->{child} touches a control variable")


def _irregular_edges(g: CausalGraph, l: LabelSet, c_spec: ControlSpec) -> Set[Edge]:
    return {(y, x) for y, x in l.edges() if not c_spec.controls_of(g, x)}


def regularize(g: CausalGraph, l: LabelSet, c_spec: ControlSpec) -> Tuple[CausalGraph, LabelSet]:
    """
    Delete every labeled edge whose child has no control parent.

    Such an edge can be dropped from the graph outright: the child's
    mechanism never depends on the parent in any context.

    Args:
        g: Graph
        l: Label set valid against g
        c_spec: Controls

    Returns:
        (graph without the irregular edges, label set without them)
    """
    l.validate(g, c_spec)
    drop = _irregular_edges(g, l, c_spec)
    if not drop:
        return g, l

    logger.debug(f"Regularize removes {sorted(drop)}")
    g2 = delete_edges(g, drop)
    l2 = LabelSet({c: edges - drop for c, edges in l.items()})
    if _irregular_edges(g2, l2, c_spec):
        raise InternalConsistencyError("regularize did not reach a fixpoint in one pass")
    return g2, l2


def maximalize(g: CausalGraph, l: LabelSet, c_spec: ControlSpec) -> LabelSet:
    """
    Copy each label (Y, X) to every context that agrees with its own on C^X.

    Raises:
        PreconditionError: if l is not regular
    """
    l.validate(g, c_spec)
    irregular = _irregular_edges(g, l, c_spec)
    if irregular:
        raise PreconditionError(f"label set is not regular, offending edges {sorted(irregular)}")

    contexts = c_spec.contexts(g)
    result: Dict[Context, Set[Edge]] = {c: set(l[c]) for c in contexts}
    for c1 in contexts:
        for edge in l[c1]:
            cx = c_spec.controls_of(g, edge[1])
            key = c1.restrict(cx)
            for c2 in contexts:
                if c2.restrict(cx) == key:
                    result[c2].add(edge)

    out = LabelSet(result)
    added = sum(len(result[c]) - len(l[c]) for c in contexts)
    if added:
        logger.debug(f"Maximalize added {added} label(s)")
    return out


def is_maximal_regular(g: CausalGraph, l: LabelSet, c_spec: ControlSpec) -> bool:
    l.validate(g, c_spec)
    if _irregular_edges(g, l, c_spec):
        return False
    return maximalize(g, l, c_spec) == l


# -- text format -------------------------------------------------------------

def parse_labels(text: str, g: CausalGraph, source: Optional[str] = None) -> Tuple[LabelSet, ControlSpec]:
    """
    Parse a label file against its graph.

    Args:
        text: 'control <name>' lines followed by
            'label <name>=<value>[,...] remove <parent>-><child>' lines
        g: Companion graph, used to resolve names and domains
        source: Optional file name for error messages

    Returns:
        (label set over every context, control spec)
    """
    controls: List[str] = []
    entries: List[Tuple[int, Context, Edge]] = []

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        directive = tokens[0]

        if directive == 'control':
            if len(tokens) != 2 or not NAME_PATTERN.match(tokens[1]):
                raise ParseError("expected 'control <name>'", line_number, source)
            if entries:
                raise ParseError("control declarations must precede labels", line_number, source)
            name = tokens[1]
            if name not in g:
                raise ParseError(f"unknown control '{name}'", line_number, source)
            if name in controls:
                raise ParseError(f"duplicate control '{name}'", line_number, source)
            controls.append(name)

        elif directive == 'label':
            if len(tokens) != 4 or tokens[2] != 'remove':
                raise ParseError("expected 'label <assignments> remove <parent>-><child>'", line_number, source)
            try:
                assigned = Context.parse(tokens[1]).as_dict()
            except ValidationError as e:
                raise ParseError(str(e), line_number, source)
            if set(assigned) != set(controls):
                raise ParseError(
                    f"context '{tokens[1]}' must assign exactly the controls {controls}", line_number, source
                )
            match = EDGE_PATTERN.match(tokens[3])
            if not match:
                raise ParseError(f"malformed edge '{tokens[3]}'", line_number, source)
            entries.append((line_number, Context.from_mapping(assigned, order=controls), (match.group(1), match.group(2))))

        else:
            raise ParseError(f"unknown directive '{directive}'", line_number, source)

    c_spec = ControlSpec(controls)
    try:
        c_spec.validate(g)
    except ValidationError as e:
        raise ParseError(str(e), None, source)

    labels: Dict[Context, Set[Edge]] = {c: set() for c in c_spec.contexts(g)}
    for line_number, context, edge in entries:
        if context not in labels:
            raise ParseError(f"context '{context}' is outside the control domains", line_number, source)
        try:
            LabelSet({context: [edge]}).validate(g, c_spec)
        except (ValidationError, UnknownVariableError) as e:
            raise ParseError(str(e), line_number, source)
        labels[context].add(edge)

    return LabelSet(labels), c_spec


def read_label_file(path: str, g: CausalGraph) -> Tuple[LabelSet, ControlSpec]:
    with open(path, encoding='utf-8') as handle:
        return parse_labels(handle.read(), g, source=path)


def format_labels(l: LabelSet, c_spec: ControlSpec, g: CausalGraph) -> str:
    lines = [f"control {name}" for name in c_spec]
    for context in c_spec.contexts(g):
        for parent, child in sorted(l[context], key=lambda e: (g.index(e[0]), g.index(e[1]))):
            lines.append(f"label {context} remove {parent}->{child}")
    return "\n".join(lines) + "\n" if lines else ""


def write_label_file(l: LabelSet, c_spec: ControlSpec, g: CausalGraph, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(format_labels(l, c_spec, g))
    logger.info(f"Wrote {sum(len(l[c]) for c in c_spec.contexts(g))} label(s) to {path}")
