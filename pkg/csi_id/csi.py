import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Optional, Tuple

from csi_id.config import get_threads
from csi_id.distributions import JointTable, csi_holds
from csi_id.errors import PreconditionError, SchemaError
from csi_id.estimand import ContextMixture, Estimand, NonIdentifiable, with_context
from csi_id.graph import CausalGraph, Context, Edge, delete_edges, restrict
from csi_id.identification import identify, latent_project
from csi_id.labels import ControlSpec, LabelSet, maximalize, regularize
from csi_id.separation import verma_equivalence_check

logger = logging.getLogger(__name__)


def identify_csi(
    g: CausalGraph,
    l: LabelSet,
    c_spec: ControlSpec,
    treatment: Iterable[str],
    outcome: Iterable[str],
    threads: Optional[int] = None,
) -> Estimand:
    """
    Identify P_t(s) from a graph plus a label set over control variables.

    The labels are normalised first. Each context c gets its own graph with
    the controls removed and the edges labeled in c deleted; the effect is
    identified there and conditioned on C=c. The per-context formulas are
    combined weighted by P(c).

    Args:
        g: Causal graph
        l: Label set over the contexts of c_spec
        c_spec: Control variables
        treatment: Intervened variables, disjoint from the controls
        outcome: Outcome variables, disjoint from treatment and controls
        threads: Worker pool size for the per-context calls

    Returns:
        A ContextMixture (or the single formula when there are no controls),
        or NonIdentifiable naming the first failing context
    """
    x = g.order(treatment)
    y = g.order(outcome)
    if not x or not y:
        raise PreconditionError("treatment and outcome must be non-empty")
    if set(x) & set(y):
        raise PreconditionError(f"treatment and outcome overlap on {sorted(set(x) & set(y))}")
    clash = (set(x) | set(y)) & set(c_spec)
    if clash:
        raise PreconditionError(f"treatment and outcome must not contain control variables: {sorted(clash)}")
    latent = [v for v in x + y if not g.is_observed(v)]
    if latent:
        raise PreconditionError(f"treatment and outcome must be observed, got latent {latent}")

    g_reg, l_reg = regularize(g, l, c_spec)
    labels = maximalize(g_reg, l_reg, c_spec)
    contexts = c_spec.contexts(g_reg)
    base = restrict(g_reg, [v for v in g_reg.names if v not in c_spec])

    def per_context(c: Context) -> Estimand:
        g_c = delete_edges(base, labels[c])
        result = identify(latent_project(g_c), x, y)
        logger.debug(f"Context '{c}': {'identified' if not isinstance(result, NonIdentifiable) else 'not identified'}")
        return result

    workers = get_threads(threads)
    if workers > 1 and len(contexts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(per_context, contexts))
    else:
        results = [per_context(c) for c in contexts]

    # canonical order, whatever order the contexts were visited in
    ranked = sorted(zip(contexts, results), key=lambda pair: pair[0].assignments)
    for c, result in ranked:
        if isinstance(result, NonIdentifiable):
            where = f"context {c}" if not c.is_empty() else "the empty context"
            return NonIdentifiable(f"not identifiable in {where}: {result.witness}")

    if len(ranked) == 1 and ranked[0][0].is_empty():
        return ranked[0][1]
    return ContextMixture(tuple((c, with_context(f, c)) for c, f in ranked))


def _candidate_edges(g: CausalGraph, c_spec: ControlSpec) -> List[Edge]:
    return [
        (parent, child)
        for parent, child in g.edges
        if g.is_observed(parent) and g.is_observed(child) and parent not in c_spec and child not in c_spec
    ]


def learn_labels(
    g: CausalGraph,
    joint: JointTable,
    c_spec: ControlSpec,
    allow_degenerate: bool = False,
    tolerance: Optional[float] = None,
) -> LabelSet:
    """
    Learn a label set from the observational distribution.

    For each context c and each edge (Y, X) between observed non-control
    vertices, the edge is labeled in c when X ⊥ Y | C=c, S holds with S the
    observed ancestors of {X, Y} other than the controls, X and Y.

    Args:
        g: Causal graph
        joint: Joint distribution over exactly the observed variables of g
        c_spec: Control variables
        allow_degenerate: Accept a joint with zero cells (logged as a warning)
        tolerance: Absolute tolerance for float joints

    Returns:
        The learned label set over every context
    """
    if set(joint.variables) != set(g.observed):
        raise SchemaError(
            f"distribution is over {sorted(joint.variables)}, graph observes {sorted(g.observed)}"
        )
    for name in joint.variables:
        if joint.domain_size(name) > g.domain_size(name):
            raise SchemaError(f"distribution gives '{name}' more values than its domain")
    if not joint.is_strictly_positive():
        if not allow_degenerate:
            raise PreconditionError("distribution is not strictly positive (pass --allow-degenerate to proceed)")
        logger.warning("Distribution has zero cells; CSI tests skip zero-mass conditioning events")

    c_spec.validate(g)
    controls = set(c_spec)
    labels = {}
    for c in c_spec.contexts(g):
        found: List[Edge] = []
        for parent, child in _candidate_edges(g, c_spec):
            cond = [
                v for v in g.ancestors([parent, child])
                if g.is_observed(v) and v not in controls and v not in (parent, child)
            ]
            if csi_holds(joint, child, parent, c, cond, tolerance):
                found.append((parent, child))
        logger.debug(f"Context '{c}': learned {found}")
        labels[c] = found

    learned = LabelSet(labels)
    logger.info(f"Learned {sum(len(labels[c]) for c in labels)} label(s) over {len(labels)} context(s)")
    return learned


def learnable(g: CausalGraph, edge: Edge) -> bool:
    """
    Whether a context-specific deletion of `edge` is guaranteed to be
    recovered from the observational distribution.
    """
    parent, child = edge
    if not g.has_edge(parent, child):
        raise PreconditionError(f"edge {parent}->{child} is not in the graph")
    if not g.is_observed(parent) or not g.is_observed(child):
        return False
    return verma_equivalence_check(delete_edges(g, [edge]), child, parent)


def learnable_edges(g: CausalGraph) -> Tuple[Edge, ...]:
    return tuple(edge for edge in g.edges if learnable(g, edge))
