import logging
import re
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import networkx as nx

from csi_id.errors import ParseError, PreconditionError, UnknownVariableError, ValidationError

logger = logging.getLogger(__name__)

Edge = Tuple[str, str]

NAME_PATTERN = re.compile(r'^[A-Za-z0-9_]+$')
DEFAULT_DOMAIN_SIZE = 2


@dataclass(frozen=True)
class VariableId:
    """A named discrete variable with values 0..domain_size-1."""

    name: str
    domain_size: int = DEFAULT_DOMAIN_SIZE
    observed: bool = True

    def __post_init__(self) -> None:
        if not self.name or not NAME_PATTERN.match(self.name):
            raise ValidationError(f"invalid variable name '{self.name}'")
        if self.domain_size < 2:
            raise ValidationError(f"variable '{self.name}' needs a domain of at least 2 values")


@dataclass(frozen=True)
class Context:
    """
    An assignment of values to control variables.

    Assignments are kept as a tuple of (name, value) pairs so contexts are
    hashable and compare by value; the pair order is the order they were
    created with (control declaration order when built through ControlSpec).
    """

    assignments: Tuple[Tuple[str, int], ...] = ()

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, int], order: Optional[Sequence[str]] = None) -> "Context":
        names = list(order) if order is not None else list(mapping)
        return cls(tuple((name, int(mapping[name])) for name in names if name in mapping))

    @classmethod
    def parse(cls, text: str) -> "Context":
        """
        Parse 'T=0,C2=1' into a context. An empty string is the empty context.
        """
        pairs = []
        text = text.strip()
        if not text:
            return cls()
        for part in text.split(','):
            name, sep, value = part.strip().partition('=')
            if not sep or not NAME_PATTERN.match(name.strip()) or not value.strip().isdigit():
                raise ValidationError(f"malformed assignment '{part.strip()}'")
            pairs.append((name.strip(), int(value)))
        names = [name for name, _ in pairs]
        if len(set(names)) != len(names):
            raise ValidationError(f"variable assigned twice in '{text}'")
        return cls(tuple(pairs))

    def as_dict(self) -> Dict[str, int]:
        return dict(self.assignments)

    def keys(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.assignments)

    def value(self, name: str) -> int:
        for key, value in self.assignments:
            if key == name:
                return value
        raise UnknownVariableError(name, "context")

    def restrict(self, names: Iterable[str]) -> "Context":
        """The sub-context over `names` (c^X when names = C^X)."""
        keep = set(names)
        return Context(tuple((k, v) for k, v in self.assignments if k in keep))

    def is_empty(self) -> bool:
        return not self.assignments

    def __str__(self) -> str:
        return ','.join(f"{name}={value}" for name, value in self.assignments)


class CausalGraph:
    """
    Immutable DAG over named variables with observability flags and finite domains.

    Vertex order is the declaration order; every set-valued query returns a
    tuple in that order so serialisation is deterministic.
    """

    def __init__(self, variables: Sequence[VariableId], edges: Iterable[Edge]):
        self._variables: Tuple[VariableId, ...] = tuple(variables)
        self._index: Dict[str, int] = {}
        for i, var in enumerate(self._variables):
            if var.name in self._index:
                raise ValidationError(f"duplicate variable '{var.name}'")
            self._index[var.name] = i

        edge_list = list(edges)
        edge_set: Set[Edge] = set()
        for parent, child in edge_list:
            self._require(parent)
            self._require(child)
            if parent == child:
                raise ValidationError(f"self-loop on '{parent}'")
            if (parent, child) in edge_set:
                raise ValidationError(f"duplicate edge {parent}->{child}")
            edge_set.add((parent, child))

        self._edges: FrozenSet[Edge] = frozenset(edge_set)
        self._parents: Dict[str, Tuple[str, ...]] = {}
        self._children: Dict[str, Tuple[str, ...]] = {}
        for var in self._variables:
            self._parents[var.name] = ()
            self._children[var.name] = ()
        for parent, child in self.edges:
            self._parents[child] += (parent,)
            self._children[parent] += (child,)
        self._parents = {v: self.order(ps) for v, ps in self._parents.items()}
        self._children = {v: self.order(cs) for v, cs in self._children.items()}

        self._nx = self.to_networkx()
        if not nx.is_directed_acyclic_graph(self._nx):
            cycle = nx.find_cycle(self._nx)
            raise ValidationError("graph contains a cycle: " + " -> ".join(u for u, _ in cycle))

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[Edge],
        latent: Iterable[str] = (),
        names: Optional[Sequence[str]] = None,
        domains: Optional[Mapping[str, int]] = None,
    ) -> "CausalGraph":
        """
        Convenience constructor: vertices are taken from `names`, or from the
        edge list in first-appearance order.
        """
        edge_list = list(edges)
        ordered: List[str] = list(names) if names is not None else []
        for parent, child in edge_list:
            for name in (parent, child):
                if name not in ordered:
                    ordered.append(name)
        hidden = set(latent)
        domains = domains or {}
        variables = [
            VariableId(name, domains.get(name, DEFAULT_DOMAIN_SIZE), name not in hidden)
            for name in ordered
        ]
        return cls(variables, edge_list)

    def _require(self, name: str) -> None:
        if name not in self._index:
            raise UnknownVariableError(name)

    # -- basic views -------------------------------------------------------

    @property
    def variables(self) -> Tuple[VariableId, ...]:
        return self._variables

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self._variables)

    @property
    def edges(self) -> Tuple[Edge, ...]:
        return tuple(sorted(self._edges, key=lambda e: (self._index[e[0]], self._index[e[1]])))

    @property
    def edge_set(self) -> FrozenSet[Edge]:
        return self._edges

    @property
    def observed(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self._variables if v.observed)

    @property
    def latent(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self._variables if not v.observed)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._variables)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return self._variables == other._variables and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((self._variables, self._edges))

    def __repr__(self) -> str:
        return f"CausalGraph(vertices={list(self.names)}, edges={list(self.edges)})"

    def variable(self, name: str) -> VariableId:
        self._require(name)
        return self._variables[self._index[name]]

    def domain_size(self, name: str) -> int:
        return self.variable(name).domain_size

    def is_observed(self, name: str) -> bool:
        return self.variable(name).observed

    def has_edge(self, parent: str, child: str) -> bool:
        return (parent, child) in self._edges

    def is_adjacent(self, a: str, b: str) -> bool:
        return (a, b) in self._edges or (b, a) in self._edges

    def order(self, names: Iterable[str]) -> Tuple[str, ...]:
        """Sort names into declaration order; unknown names raise."""
        unique = set(names)
        for name in unique:
            self._require(name)
        return tuple(sorted(unique, key=self._index.__getitem__))

    def index(self, name: str) -> int:
        self._require(name)
        return self._index[name]

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.names)
        g.add_edges_from(self._edges)
        return g

    # -- graph primitives --------------------------------------------------

    def parents(self, x: str) -> Tuple[str, ...]:
        self._require(x)
        return self._parents[x]

    def children(self, x: str) -> Tuple[str, ...]:
        self._require(x)
        return self._children[x]

    def ancestors(self, xs: Iterable[str]) -> Tuple[str, ...]:
        """Union of ancestor sets, each including the vertex itself."""
        return self.order(self._closure(xs, nx.ancestors))

    def descendants(self, xs: Iterable[str]) -> Tuple[str, ...]:
        """Union of descendant sets, each including the vertex itself."""
        return self.order(self._closure(xs, nx.descendants))

    def _closure(self, xs: Iterable[str], reach: Callable[[nx.DiGraph, str], Set[str]]) -> Set[str]:
        seen: Set[str] = set()
        for x in xs:
            self._require(x)
            if x not in seen:
                seen.add(x)
                seen |= reach(self._nx, x)
        return seen

    def observed_roots(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self._variables if v.observed and not self._parents[v.name])

    def topological_order(self) -> Tuple[str, ...]:
        """Topological order; ties broken by declaration order."""
        return tuple(nx.lexicographical_topological_sort(self._nx, key=self._index.__getitem__))


# -- graph transformations ---------------------------------------------------

def delete_edges(g: CausalGraph, es: Iterable[Edge]) -> CausalGraph:
    """
    Remove edges from a graph; the vertex set is unchanged.

    Args:
        g: Input graph
        es: Edges to delete, each must be present

    Returns:
        New graph without `es`
    """
    drop = set(es)
    for edge in drop:
        if not g.has_edge(*edge):
            raise PreconditionError(f"edge {edge[0]}->{edge[1]} is not in the graph")
    if not drop:
        return g
    return CausalGraph(g.variables, [e for e in g.edges if e not in drop])


def restrict(g: CausalGraph, keep: Iterable[str]) -> CausalGraph:
    """Induced subgraph on `keep`."""
    kept = set(g.order(keep))
    if len(kept) == len(g):
        return g
    return CausalGraph(
        [v for v in g.variables if v.name in kept],
        [(a, b) for a, b in g.edges if a in kept and b in kept],
    )


def mutilate(g: CausalGraph, cut_in: Iterable[str] = (), cut_out: Iterable[str] = ()) -> CausalGraph:
    """
    Remove the in-edges of `cut_in` and the out-edges of `cut_out`.
    """
    into = set(g.order(cut_in))
    out_of = set(g.order(cut_out))
    if not into and not out_of:
        return g
    return CausalGraph(
        g.variables,
        [(a, b) for a, b in g.edges if b not in into and a not in out_of],
    )


def merge_vertices(g: CausalGraph, group: Iterable[str], name: str, domain_size: int = DEFAULT_DOMAIN_SIZE) -> CausalGraph:
    """
    Replace a group of observed roots with one observed root `name` whose
    children are the union of the group's children.

    The merged vertex is declared where the first group member was.
    """
    members = g.order(group)
    if not members:
        return g
    for member in members:
        if member not in g.observed_roots():
            raise PreconditionError(f"'{member}' is not an observed root")
    if name in g and name not in members:
        raise ValidationError(f"duplicate variable '{name}'")

    gone = set(members)
    variables: List[VariableId] = []
    for var in g.variables:
        if var.name == members[0]:
            variables.append(VariableId(name, domain_size, True))
        elif var.name not in gone:
            variables.append(var)

    children = []
    for member in members:
        for child in g.children(member):
            if child not in gone and child not in children:
                children.append(child)
    edges = [(a, b) for a, b in g.edges if a not in gone and b not in gone]
    edges.extend((name, child) for child in g.order(children))
    return CausalGraph(variables, edges)


# -- text format -------------------------------------------------------------

def parse_graph(text: str, source: Optional[str] = None) -> CausalGraph:
    """
    Parse the line-based graph format.

    Args:
        text: File contents ('var <name> observed|latent [domain=<k>]' and
            'edge <parent> <child>' lines, '#' comments)
        source: Optional file name used in error messages

    Returns:
        The parsed graph
    """
    variables: List[VariableId] = []
    declared: Dict[str, int] = {}
    edges: List[Edge] = []
    edge_lines: Dict[Edge, int] = {}

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        directive = tokens[0]

        if directive == 'var':
            if len(tokens) not in (3, 4):
                raise ParseError("expected 'var <name> observed|latent [domain=<k>]'", line_number, source)
            name, kind = tokens[1], tokens[2]
            if not NAME_PATTERN.match(name):
                raise ParseError(f"invalid variable name '{name}'", line_number, source)
            if name in declared:
                raise ParseError(f"duplicate variable '{name}' (first declared on line {declared[name]})", line_number, source)
            if kind not in ('observed', 'latent'):
                raise ParseError(f"expected 'observed' or 'latent', got '{kind}'", line_number, source)
            domain = DEFAULT_DOMAIN_SIZE
            if len(tokens) == 4:
                match = re.match(r'^domain=(\d+)$', tokens[3])
                if not match:
                    raise ParseError(f"expected 'domain=<k>', got '{tokens[3]}'", line_number, source)
                domain = int(match.group(1))
                if domain < 2:
                    raise ParseError(f"domain of '{name}' must have at least 2 values", line_number, source)
            variables.append(VariableId(name, domain, kind == 'observed'))
            declared[name] = line_number

        elif directive == 'edge':
            if len(tokens) != 3:
                raise ParseError("expected 'edge <parent> <child>'", line_number, source)
            parent, child = tokens[1], tokens[2]
            for name in (parent, child):
                if name not in declared:
                    raise ParseError(f"edge refers to undeclared variable '{name}'", line_number, source)
            if parent == child:
                raise ParseError(f"self-loop on '{parent}'", line_number, source)
            if (parent, child) in edge_lines:
                raise ParseError(f"duplicate edge {parent}->{child}", line_number, source)
            edges.append((parent, child))
            edge_lines[(parent, child)] = line_number

        else:
            raise ParseError(f"unknown directive '{directive}'", line_number, source)

    dag = nx.DiGraph()
    dag.add_nodes_from(declared)
    dag.add_edges_from(edges)
    if not nx.is_directed_acyclic_graph(dag):
        cycle = nx.find_cycle(dag)
        closing = max(cycle, key=lambda e: edge_lines[(e[0], e[1])])
        path = " -> ".join([u for u, _ in cycle] + [cycle[0][0]])
        raise ParseError(f"edge {closing[0]}->{closing[1]} closes a cycle ({path})", edge_lines[(closing[0], closing[1])], source)

    graph = CausalGraph(variables, edges)
    logger.debug(f"Parsed graph with {len(graph)} vertices and {len(edges)} edges")
    return graph


def read_graph_file(path: str) -> CausalGraph:
    with open(path, encoding='utf-8') as handle:
        return parse_graph(handle.read(), source=path)


def format_graph(g: CausalGraph) -> str:
    lines = []
    for var in g.variables:
        kind = 'observed' if var.observed else 'latent'
        suffix = f" domain={var.domain_size}" if var.domain_size != DEFAULT_DOMAIN_SIZE else ""
        lines.append(f"var {var.name} {kind}{suffix}")
    for parent, child in g.edges:
        lines.append(f"edge {parent} {child}")
    return "\n".join(lines) + "\n"


def write_graph_file(g: CausalGraph, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(format_graph(g))
