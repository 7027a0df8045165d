# tests/helpers.py
"""Shared builders, fixtures and brute-force oracles for the test suite."""
import itertools
import os
import sys
from fractions import Fraction
from typing import Iterable, List, Tuple

import networkx as nx
import numpy as np
from hypothesis import strategies as st

# Add the parent directory to the path so we can import the modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from csi_id.distributions import DiscreteModel, compile_sem, csi_holds, joint, read_model_file
from csi_id.graph import CausalGraph, Context, VariableId, read_graph_file
from csi_id.labels import ControlSpec, LabelSet, read_label_file

FIXTURES = os.path.join(os.path.dirname(__file__), 'fixtures')


def fixture(name: str) -> str:
    return os.path.join(FIXTURES, name)


def fig1() -> CausalGraph:
    return read_graph_file(fixture('fig1.graph'))


def fig3() -> CausalGraph:
    return read_graph_file(fixture('fig3.graph'))


def fig4() -> CausalGraph:
    return read_graph_file(fixture('fig4.graph'))


def example1_graph() -> CausalGraph:
    return read_graph_file(fixture('example1.graph'))


def fig2() -> CausalGraph:
    """The T, Z, X, Y graph with every variable binary."""
    return CausalGraph.from_edges(
        [('T', 'Y'), ('Z', 'Y'), ('X', 'Y'), ('T', 'X'), ('Z', 'X')],
        names=['T', 'Z', 'X', 'Y'],
    )


def labels_for(g: CausalGraph, name: str) -> Tuple[LabelSet, ControlSpec]:
    return read_label_file(fixture(name), g)


def bow() -> CausalGraph:
    return CausalGraph.from_edges([('X', 'Y'), ('U', 'X'), ('U', 'Y')], latent=['U'], names=['U', 'X', 'Y'])


def example1_model() -> DiscreteModel:
    """Deterministic SEM: X = T xor Z, Y = T*X + Z, T and Z fair coins."""
    half = [Fraction(1, 2), Fraction(1, 2)]
    return compile_sem(
        example1_graph(),
        {
            'T': lambda pa, u: u,
            'Z': lambda pa, u: u,
            'X': lambda pa, u: pa['T'] ^ pa['Z'],
            'Y': lambda pa, u: pa['T'] * pa['X'] + pa['Z'],
        },
        {'T': half, 'Z': half, 'X': [Fraction(1)], 'Y': [Fraction(1)]},
    )


def example1_noisy_model() -> DiscreteModel:
    return read_model_file(fixture('example1_noisy.model'), example1_graph())


# -- brute-force oracles --------------------------------------------------------

def _simple_paths(g: CausalGraph, x: str, y: str) -> Iterable[List[str]]:
    skeleton = nx.Graph()
    skeleton.add_nodes_from(g.names)
    skeleton.add_edges_from(g.edges)
    return nx.all_simple_paths(skeleton, x, y)


def _is_collider(g: CausalGraph, a: str, b: str, c: str) -> bool:
    return g.has_edge(a, b) and g.has_edge(c, b)


def oracle_d_separated(g: CausalGraph, xs: Iterable[str], ys: Iterable[str], zs: Iterable[str]) -> bool:
    """Exhaustive d-separation: enumerate every simple path."""
    z_set = set(zs)
    for x in xs:
        for y in ys:
            for path in _simple_paths(g, x, y):
                blocked = False
                for a, b, c in zip(path, path[1:], path[2:]):
                    if _is_collider(g, a, b, c):
                        if not set(g.descendants([b])) & z_set:
                            blocked = True
                    elif b in z_set:
                        blocked = True
                    if blocked:
                        break
                if not blocked:
                    return False
    return True


def oracle_inducing_path(g: CausalGraph, x: str, y: str) -> bool:
    """Exhaustive inducing-path search over simple paths."""
    anc = set(g.ancestors([x, y]))
    for path in _simple_paths(g, x, y):
        ok = True
        for a, b, c in zip(path, path[1:], path[2:]):
            collider = _is_collider(g, a, b, c)
            if collider and b not in anc:
                ok = False
            if not collider and g.is_observed(b):
                ok = False
            if not ok:
                break
        if ok:
            return True
    return False


# -- random structures ----------------------------------------------------------

def random_dag(rng: np.random.Generator, n: int, p: float = 0.4, p_latent: float = 0.3) -> CausalGraph:
    """Random DAG over V0..V{n-1}; vertex order is a topological order."""
    variables = [VariableId(f"V{i}", 2, bool(rng.random() >= p_latent)) for i in range(n)]
    edges = [(f"V{i}", f"V{j}") for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return CausalGraph(variables, edges)


@st.composite
def dags(draw, min_n: int = 2, max_n: int = 7, latent: bool = True) -> CausalGraph:
    n = draw(st.integers(min_value=min_n, max_value=max_n))
    order = draw(st.permutations(list(range(n))))
    edges = []
    for i, j in itertools.combinations(range(n), 2):
        if draw(st.booleans()):
            a, b = (order[i], order[j])
            edges.append((f"V{a}", f"V{b}"))
    observed = [True] * n
    if latent:
        observed = [draw(st.booleans()) or i == 0 for i in range(n)]
    return CausalGraph([VariableId(f"V{i}", 2, observed[i]) for i in range(n)], edges)


def random_labelled_instance(rng: np.random.Generator, max_observed: int = 7, max_latent: int = 3):
    """
    Random (graph, labels, controls, treatment, outcome) small enough for
    exact oracle checks. Labels may be irregular.
    """
    while True:
        n_obs = int(rng.integers(3, max_observed + 1))
        n_lat = int(rng.integers(0, max_latent + 1))
        n = n_obs + n_lat
        latent_idx = set(int(i) for i in rng.choice(n, size=n_lat, replace=False))
        variables = [VariableId(f"V{i}", 2, i not in latent_idx) for i in range(n)]
        edges = [(f"V{i}", f"V{j}") for i in range(n) for j in range(i + 1, n) if rng.random() < 0.4]
        g = CausalGraph(variables, edges)

        roots = list(g.observed_roots())
        controls = [r for r in roots if rng.random() < 0.5][:2]
        c_spec = ControlSpec(controls)
        pool = [v for v in g.observed if v not in c_spec]
        if len(pool) < 2:
            continue

        contexts = c_spec.contexts(g)
        labels = {c: [] for c in contexts}
        if controls:
            for parent, child in g.edges:
                if parent in c_spec or child in c_spec:
                    continue
                if rng.random() < 0.5:
                    labels[contexts[int(rng.integers(0, len(contexts)))]].append((parent, child))

        rng.shuffle(pool)
        k = int(rng.integers(1, len(pool)))
        treatment = tuple(g.order(pool[:k]))
        outcome = tuple(g.order(pool[k:k + 2]))
        return g, LabelSet(labels), c_spec, treatment, outcome


def random_assignment(rng: np.random.Generator, g: CausalGraph, names: Iterable[str]) -> Context:
    return Context(tuple((v, int(rng.integers(0, g.domain_size(v)))) for v in names))


def broken_switches(m: DiscreteModel) -> List[Tuple[Context, Tuple[str, str]]]:
    """Switch annotations whose independence fails on the model's full joint."""
    full = joint(m)
    broken = []
    for context, (parent, child) in m.switches:
        cond = [p for p in m.graph.parents(child) if p != parent and p not in context.keys()]
        if not csi_holds(full, child, parent, context, cond):
            broken.append((context, (parent, child)))
    return broken
