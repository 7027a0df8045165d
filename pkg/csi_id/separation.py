import logging
from collections import deque
from typing import Iterable, Set, Tuple

from csi_id.errors import InternalConsistencyError, PreconditionError
from csi_id.graph import CausalGraph, mutilate

logger = logging.getLogger(__name__)

UP = 'up'
DOWN = 'down'


def _as_set(g: CausalGraph, names: Iterable[str]) -> Set[str]:
    return set(g.order(names))


def _require_disjoint(**groups: Set[str]) -> None:
    items = list(groups.items())
    for i, (name_a, a) in enumerate(items):
        for name_b, b in items[i + 1:]:
            common = a & b
            if common:
                raise PreconditionError(
                    f"{name_a} and {name_b} overlap on {sorted(common)}"
                )


def reachable(g: CausalGraph, xs: Iterable[str], zs: Iterable[str] = ()) -> Tuple[str, ...]:
    """
    Vertices d-connected to `xs` given `zs` (Bayes-ball traversal).

    A ball travelling up arrived from a child, one travelling down arrived
    from a parent. Conditioned vertices are never reported as reachable.

    Args:
        g: Graph
        xs: Source vertices
        zs: Conditioning set

    Returns:
        Reachable vertices in declaration order, including the sources
    """
    sources = _as_set(g, xs)
    observed = _as_set(g, zs)
    # colliders open iff in An(zs)
    opened = set(g.ancestors(observed))

    visited: Set[Tuple[str, str]] = set()
    found: Set[str] = set()
    queue = deque((x, UP) for x in sources)
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in observed:
            found.add(node)

        if direction == UP and node not in observed:
            queue.extend((p, UP) for p in g.parents(node))
            queue.extend((c, DOWN) for c in g.children(node))
        elif direction == DOWN:
            if node not in observed:
                queue.extend((c, DOWN) for c in g.children(node))
            if node in opened:
                queue.extend((p, UP) for p in g.parents(node))

    return g.order(found)


def d_separated(g: CausalGraph, xs: Iterable[str], ys: Iterable[str], zs: Iterable[str] = ()) -> bool:
    """
    Check whether every path between `xs` and `ys` is blocked by `zs`.

    Args:
        g: Graph
        xs: Non-empty vertex set
        ys: Non-empty vertex set
        zs: Conditioning set

    Returns:
        True if `xs` and `ys` are d-separated given `zs`
    """
    x_set, y_set, z_set = _as_set(g, xs), _as_set(g, ys), _as_set(g, zs)
    if not x_set or not y_set:
        raise PreconditionError("d-separation needs non-empty vertex sets on both sides")
    _require_disjoint(xs=x_set, ys=y_set, zs=z_set)
    return not (set(reachable(g, x_set, z_set)) & y_set)


def inducing_path_exists(g: CausalGraph, x: str, y: str) -> bool:
    """
    Check for a path between x and y on which every observed interior vertex
    is a collider and every collider is an ancestor of x or y.

    The search runs over (vertex, arrived-on-an-arrowhead) states so collider
    status can be decided locally; x and y are never interior.
    """
    for end in (x, y):
        if not g.is_observed(end):
            raise PreconditionError(f"inducing paths need observed endpoints, '{end}' is latent")
    if x == y:
        raise PreconditionError("inducing path endpoints must differ")

    anc = set(g.ancestors([x, y]))
    neighbours = {v: g.parents(v) + g.children(v) for v in g.names}

    visited: Set[Tuple[str, bool]] = set()
    queue = deque((w, g.has_edge(x, w)) for w in neighbours[x])
    while queue:
        node, into = queue.popleft()
        if node == y:
            return True
        if node == x or (node, into) in visited:
            continue
        visited.add((node, into))

        latent = not g.is_observed(node)
        for nxt in neighbours[node]:
            collider = into and g.has_edge(nxt, node)
            if collider and node not in anc:
                continue
            if not collider and not latent:
                continue
            queue.append((nxt, g.has_edge(node, nxt)))
    return False


def verma_equivalence_check(g: CausalGraph, x: str, y: str) -> bool:
    """
    Decide d-separability of two non-adjacent observed vertices by their
    observed ancestors, cross-checked against inducing-path search.

    Args:
        g: Graph
        x: Observed vertex
        y: Observed vertex, not adjacent to x

    Returns:
        True if x and y are d-separated by (An({x, y}) ∩ observed) \\ {x, y}

    Raises:
        PreconditionError: if x and y are adjacent or not both observed
        InternalConsistencyError: if the two checks disagree
    """
    if g.is_adjacent(x, y):
        raise PreconditionError(f"'{x}' and '{y}' are adjacent")
    if not g.is_observed(x) or not g.is_observed(y):
        raise PreconditionError(f"'{x}' and '{y}' must both be observed")

    conditioning = [v for v in g.ancestors([x, y]) if g.is_observed(v) and v not in (x, y)]
    separated = d_separated(g, [x], [y], conditioning)
    inducing = inducing_path_exists(g, x, y)
    if separated == inducing:
        raise InternalConsistencyError(
            f"d-separation ({separated}) and inducing-path search ({inducing}) disagree for {x}, {y}"
        )
    logger.debug(f"{x} and {y} separable by observed ancestors: {separated}")
    return separated


def docalc_rule_holds(
    g: CausalGraph,
    rule: int,
    ys: Iterable[str],
    zs: Iterable[str],
    xs: Iterable[str] = (),
    ws: Iterable[str] = (),
) -> bool:
    """
    Evaluate the graphical precondition of a do-calculus rule.

    Rule 1 tests (Y ⊥ Z | X, W) with X's in-edges cut, rule 2 additionally cuts
    Z's out-edges, rule 3 cuts the in-edges of Z(W), the members of Z that are
    not ancestors of W once X's in-edges are cut.
    """
    if rule not in (1, 2, 3):
        raise PreconditionError(f"unknown do-calculus rule {rule}")
    y_set, z_set, x_set, w_set = _as_set(g, ys), _as_set(g, zs), _as_set(g, xs), _as_set(g, ws)
    _require_disjoint(ys=y_set, zs=z_set, xs=x_set, ws=w_set)
    if not y_set or not z_set:
        return True

    cut_x = mutilate(g, cut_in=x_set)
    if rule == 1:
        target = cut_x
    elif rule == 2:
        target = mutilate(g, cut_in=x_set, cut_out=z_set)
    else:
        z_of_w = z_set - set(cut_x.ancestors(w_set))
        target = mutilate(g, cut_in=x_set | z_of_w)
    return d_separated(target, y_set, z_set, x_set | w_set)
