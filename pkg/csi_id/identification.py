import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

import networkx as nx

from csi_id.errors import PreconditionError, UnknownVariableError, ValidationError
from csi_id.estimand import Estimand, NonIdentifiable, ObsProb, Quotient, free_variables, product, sum_over
from csi_id.graph import CausalGraph, Edge

logger = logging.getLogger(__name__)


class Admg:
    """
    Acyclic directed mixed graph over observed variables.

    Bidirected edges are unordered pairs and stand for hidden common causes.
    Vertex order is kept from construction and used for every tie-break.
    """

    def __init__(self, vertices: Iterable[str], directed: Iterable[Edge] = (), bidirected: Iterable[Iterable[str]] = ()):
        self.vertices: Tuple[str, ...] = tuple(vertices)
        self._index: Dict[str, int] = {v: i for i, v in enumerate(self.vertices)}
        if len(self._index) != len(self.vertices):
            raise ValidationError(f"duplicate vertex in {list(self.vertices)}")

        self.directed: FrozenSet[Edge] = frozenset((a, b) for a, b in directed)
        self.bidirected: FrozenSet[FrozenSet[str]] = frozenset(frozenset(pair) for pair in bidirected)
        for a, b in self.directed:
            self._require(a)
            self._require(b)
            if a == b:
                raise ValidationError(f"self-loop on '{a}'")
        for pair in self.bidirected:
            if len(pair) != 2:
                raise ValidationError(f"bidirected edge needs two distinct endpoints, got {sorted(pair)}")
            for v in pair:
                self._require(v)

        dag = nx.DiGraph()
        dag.add_nodes_from(self.vertices)
        dag.add_edges_from(self.directed)
        if not nx.is_directed_acyclic_graph(dag):
            raise ValidationError("directed part of the mixed graph contains a cycle")
        self._dag = dag
        self._order: Tuple[str, ...] = tuple(nx.lexicographical_topological_sort(dag, key=self._index.__getitem__))

    def _require(self, v: str) -> None:
        if v not in self._index:
            raise UnknownVariableError(v, "mixed graph")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Admg):
            return NotImplemented
        return (self.vertices, self.directed, self.bidirected) == (other.vertices, other.directed, other.bidirected)

    def __hash__(self) -> int:
        return hash((self.vertices, self.directed, self.bidirected))

    def __repr__(self) -> str:
        bi = sorted(tuple(self.order(p)) for p in self.bidirected)
        return f"Admg(vertices={list(self.vertices)}, directed={sorted(self.directed)}, bidirected={bi})"

    def order(self, names: Iterable[str]) -> Tuple[str, ...]:
        unique = set(names)
        for v in unique:
            self._require(v)
        return tuple(sorted(unique, key=self._index.__getitem__))

    def topological_order(self) -> Tuple[str, ...]:
        return self._order

    def ancestors(self, vs: Iterable[str]) -> FrozenSet[str]:
        """Ancestors through directed edges, each vertex included."""
        seen: Set[str] = set()
        for v in vs:
            self._require(v)
            if v not in seen:
                seen.add(v)
                seen |= nx.ancestors(self._dag, v)
        return frozenset(seen)

    def subgraph(self, keep: Iterable[str]) -> "Admg":
        kept = set(self.order(keep))
        if len(kept) == len(self.vertices):
            return self
        return Admg(
            [v for v in self.vertices if v in kept],
            [(a, b) for a, b in self.directed if a in kept and b in kept],
            [p for p in self.bidirected if p <= kept],
        )

    def cut_incoming(self, xs: Iterable[str]) -> "Admg":
        """Drop directed edges into xs; only used for ancestor queries."""
        cut = set(xs)
        return Admg(self.vertices, [(a, b) for a, b in self.directed if b not in cut], self.bidirected)

    def c_components(self) -> List[Tuple[str, ...]]:
        undirected = nx.Graph()
        undirected.add_nodes_from(self.vertices)
        undirected.add_edges_from(tuple(p) for p in self.bidirected)
        blocks = [self.order(block) for block in nx.connected_components(undirected)]
        return sorted(blocks, key=lambda block: self._index[block[0]])


def latent_project(g: CausalGraph) -> Admg:
    """
    Project a DAG with latent variables onto its observed variables.

    a -> b when a reaches b along a directed path whose interior is latent;
    a <-> b when one latent vertex reaches both that way.
    """
    latent = set(g.latent)

    def observed_reach(start: str) -> Set[str]:
        found: Set[str] = set()
        seen: Set[str] = set()
        stack = list(g.children(start))
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            if v in latent:
                stack.extend(g.children(v))
            else:
                found.add(v)
        return found

    directed = [(a, b) for a in g.observed for b in observed_reach(a)]
    bidirected = set()
    for u in g.latent:
        reached = g.order(observed_reach(u))
        for i, a in enumerate(reached):
            for b in reached[i + 1:]:
                bidirected.add(frozenset((a, b)))

    admg = Admg(g.observed, directed, bidirected)
    logger.debug(f"Latent projection: {len(admg.directed)} directed, {len(admg.bidirected)} bidirected edges")
    return admg


def c_components(a: Admg) -> List[Tuple[str, ...]]:
    """Connected components of the bidirected part, in vertex order."""
    return a.c_components()


@dataclass(frozen=True)
class QFactor:
    """
    A distribution over `target` as seen by the identification recursion.

    With no expression it is the observational marginal over `target`;
    otherwise `expr` defines it and may also mention fixed treatment values.
    """

    target: Tuple[str, ...]
    expr: Optional[Estimand] = None

    def estimand(self) -> Estimand:
        if self.expr is None:
            return ObsProb(self.target)
        return self.expr

    def marginal(self, keep: Iterable[str]) -> "QFactor":
        kept = set(keep)
        target = tuple(v for v in self.target if v in kept)
        if self.expr is None:
            return QFactor(target)
        return QFactor(target, sum_over([v for v in self.target if v not in kept], self.expr))

    def conditional(self, v: str, given: Iterable[str]) -> Estimand:
        """The factor P(v | given) of this distribution."""
        given = tuple(given)
        if self.expr is None:
            return ObsProb((v,), given)
        inside = [g for g in given if g in self.target]
        numerator = self.marginal(inside + [v]).estimand()
        if not inside:
            return numerator
        return Quotient(numerator, self.marginal(inside).estimand())


def identify(a: Admg, treatment: Iterable[str], outcome: Iterable[str]) -> Estimand:
    """
    Identify P_t(s) from the observational distribution of a mixed graph.

    Args:
        a: Mixed graph over observed variables
        treatment: Intervened variables
        outcome: Outcome variables, disjoint from treatment

    Returns:
        An estimand whose free variables are the treatment and outcome, or
        NonIdentifiable carrying a hedge description
    """
    x = a.order(treatment)
    y = a.order(outcome)
    if not x or not y:
        raise PreconditionError("treatment and outcome must be non-empty")
    if set(x) & set(y):
        raise PreconditionError(f"treatment and outcome overlap on {sorted(set(x) & set(y))}")

    result = _identify(frozenset(y), frozenset(x), QFactor(a.vertices), a)
    if isinstance(result, NonIdentifiable):
        logger.debug(f"P_{{{','.join(x)}}}({','.join(y)}) not identifiable: {result.witness}")
    return result


def _identify(y: FrozenSet[str], x: FrozenSet[str], q: QFactor, a: Admg) -> Estimand:
    v = frozenset(a.vertices)

    # 1. no intervention left
    if not x:
        return q.marginal(y).estimand()

    # 2. drop non-ancestors of the outcome
    anc = a.ancestors(y)
    if anc != v:
        return _identify(y, x & anc, q.marginal(anc), a.subgraph(anc))

    # 3. intervene on vertices that cannot affect the outcome anyway
    w = (v - x) - a.cut_incoming(x).ancestors(y)
    if w:
        result = _identify(y, x | w, q, a)
        if isinstance(result, NonIdentifiable):
            return result
        # the value is the same for every w; average it out so w is not free
        leaked = a.order(free_variables(result) & w)
        if not leaked:
            return result
        return sum_over(leaked, product([ObsProb(leaked), result]))

    components = a.subgraph(v - x).c_components()

    # 4. factorise over the c-components of G \ X
    if len(components) > 1:
        factors = []
        for block in components:
            sub = _identify(frozenset(block), v - frozenset(block), q, a)
            if isinstance(sub, NonIdentifiable):
                return sub
            factors.append(sub)
        return sum_over(a.order(v - (y | x)), product(factors))

    s = components[0]
    whole = a.c_components()

    # 5. hedge
    if len(whole) == 1:
        return NonIdentifiable(
            f"hedge for P_{{{','.join(a.order(x))}}}({','.join(a.order(y))}): "
            f"c-component {{{','.join(a.vertices)}}} contains {{{','.join(s)}}}"
        )

    order = a.topological_order()
    position = {vertex: i for i, vertex in enumerate(order)}

    # 6. S is itself a c-component of G
    if s in whole:
        factors = [q.conditional(vi, order[:position[vi]]) for vi in order if vi in s]
        return sum_over([vi for vi in s if vi not in y], product(factors))

    # 7. S sits inside a larger c-component S'
    s_prime = next(block for block in whole if set(s) <= set(block))
    factors = [q.conditional(vi, order[:position[vi]]) for vi in order if vi in s_prime]
    q_prime = QFactor(s_prime, product(factors))
    return _identify(y, x & frozenset(s_prime), q_prime, a.subgraph(s_prime))
