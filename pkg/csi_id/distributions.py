import itertools
import logging
import math
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from csi_id.config import get_tolerance
from csi_id.errors import (
    EvaluationError,
    ParseError,
    PositivityError,
    PreconditionError,
    SizingError,
    UnknownVariableError,
    ValidationError,
)
from csi_id.estimand import (
    ContextMixture,
    Estimand,
    NonIdentifiable,
    ObsProb,
    Product,
    Quotient,
    SumOver,
    free_variables,
    render,
)
from csi_id.graph import NAME_PATTERN, CausalGraph, Context, Edge, VariableId, mutilate
from csi_id.labels import ControlSpec, LabelSet

logger = logging.getLogger(__name__)

MAX_CELLS = 2 ** 24

Number = Union[Fraction, float]
Names = Union[str, Iterable[str]]


def _names(names: Names) -> Tuple[str, ...]:
    if isinstance(names, str):
        return (names,)
    return tuple(names)


def _assignment(values: Union[None, Context, Mapping[str, int]]) -> Dict[str, int]:
    if values is None:
        return {}
    if isinstance(values, Context):
        return values.as_dict()
    return {k: int(v) for k, v in values.items()}


class Cpt:
    """
    Conditional probability table P(variable | parents).

    `table` has one axis per parent, in `parents` order, then a final axis
    over the variable's own values.
    """

    def __init__(self, variable: str, parents: Sequence[str], table: np.ndarray):
        self.variable = variable
        self.parents: Tuple[str, ...] = tuple(parents)
        self.table = np.asarray(table, dtype=object)
        if self.table.ndim != len(self.parents) + 1:
            raise ValidationError(
                f"table for '{variable}' has {self.table.ndim} axes, expected {len(self.parents) + 1}"
            )

    @classmethod
    def point_mass(cls, variable: str, domain_size: int, value: int) -> "Cpt":
        table = np.array([Fraction(int(i == value)) for i in range(domain_size)], dtype=object)
        return cls(variable, (), table)

    @property
    def domain_size(self) -> int:
        return self.table.shape[-1]

    @property
    def parent_sizes(self) -> Tuple[int, ...]:
        return self.table.shape[:-1]

    def row(self, parent_values: Sequence[int]) -> np.ndarray:
        return self.table[tuple(parent_values)]

    def rows(self) -> Iterable[Tuple[Tuple[int, ...], np.ndarray]]:
        for values in itertools.product(*(range(k) for k in self.parent_sizes)):
            yield values, self.table[values]

    def validate(self) -> None:
        for values, row in self.rows():
            if any(p < 0 for p in row):
                raise ValidationError(f"negative entry in row {values} of '{self.variable}'")
            if sum(row) != 1:
                raise ValidationError(f"row {values} of '{self.variable}' sums to {sum(row)}, not 1")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Cpt):
            return NotImplemented
        return (
            self.variable == other.variable
            and self.parents == other.parents
            and self.table.shape == other.table.shape
            and bool((self.table == other.table).all())
        )


class DiscreteModel:
    """
    A Bayesian network over a CausalGraph with exact rational CPTs.

    `switches` holds context-switch annotations: (context, (Y, X)) says the
    CPT of X ignores Y whenever X's control parents agree with the context.
    """

    def __init__(
        self,
        graph: CausalGraph,
        cpts: Mapping[str, Cpt],
        switches: Iterable[Tuple[Context, Edge]] = (),
    ):
        self.graph = graph
        self.cpts: Dict[str, Cpt] = dict(cpts)
        self.switches: Tuple[Tuple[Context, Edge], ...] = tuple(switches)

    def cpt(self, name: str) -> Cpt:
        if name not in self.cpts:
            raise UnknownVariableError(name, "model")
        return self.cpts[name]

    def validate(self) -> None:
        """
        Check CPT shapes and normalisation, then verify every switch
        annotation against the tables.
        """
        g = self.graph
        for name in g.names:
            cpt = self.cpt(name)
            if cpt.parents != g.parents(name):
                raise ValidationError(
                    f"CPT of '{name}' lists parents {list(cpt.parents)}, graph has {list(g.parents(name))}"
                )
            expected = tuple(g.domain_size(p) for p in cpt.parents) + (g.domain_size(name),)
            if cpt.table.shape != expected:
                raise ValidationError(f"CPT of '{name}' has shape {cpt.table.shape}, expected {expected}")
            cpt.validate()
        for context, edge in self.switches:
            self._check_switch(context, edge)

    def _check_switch(self, context: Context, edge: Edge) -> None:
        parent, child = edge
        if not self.graph.has_edge(parent, child):
            raise ValidationError(f"switch on missing edge {parent}->{child}")
        cpt = self.cpt(child)
        axis = cpt.parents.index(parent)
        fixed = {name: value for name, value in context.assignments if name in cpt.parents}
        for values, row in cpt.rows():
            if any(values[cpt.parents.index(name)] != v for name, v in fixed.items()):
                continue
            base = list(values)
            base[axis] = 0
            if not bool((row == cpt.table[tuple(base)]).all()):
                raise ValidationError(
                    f"CPT of '{child}' depends on '{parent}' in context '{context}' despite the switch"
                )


class JointTable:
    """Dense table over full assignments of `variables`."""

    def __init__(self, variables: Sequence[str], table: np.ndarray):
        self.variables: Tuple[str, ...] = tuple(variables)
        self.table = np.asarray(table)
        if self.table.ndim != len(self.variables):
            raise ValidationError(f"table has {self.table.ndim} axes for {len(self.variables)} variables")
        self._axis = {v: i for i, v in enumerate(self.variables)}

    @property
    def sizes(self) -> Dict[str, int]:
        return {v: self.table.shape[i] for v, i in self._axis.items()}

    @property
    def exact(self) -> bool:
        return self.table.dtype == object

    def domain_size(self, name: str) -> int:
        return self.table.shape[self._require(name)]

    def _require(self, name: str) -> int:
        if name not in self._axis:
            raise UnknownVariableError(name, "distribution")
        return self._axis[name]

    def total(self) -> Number:
        return _scalar(self.table.sum()) if self.table.size else Fraction(0)

    def prob(self, assignment: Union[Context, Mapping[str, int]]) -> Number:
        """Probability of a partial assignment."""
        index: List[Union[int, slice]] = [slice(None)] * len(self.variables)
        for name, value in _assignment(assignment).items():
            axis = self._require(name)
            if not 0 <= value < self.table.shape[axis]:
                raise ValidationError(f"value {value} outside the domain of '{name}'")
            index[axis] = value
        cell = self.table[tuple(index)]
        return _scalar(cell.sum() if isinstance(cell, np.ndarray) else cell)

    def marginal(self, variables: Names) -> "JointTable":
        keep = _names(variables)
        for name in keep:
            self._require(name)
        drop = tuple(i for v, i in self._axis.items() if v not in keep)
        table = self.table.sum(axis=drop) if drop else self.table
        table = np.asarray(table, dtype=self.table.dtype)
        remaining = [v for v in self.variables if v in keep]
        return JointTable(keep, np.transpose(table, [remaining.index(v) for v in keep]))

    def is_strictly_positive(self) -> bool:
        return bool((self.table > 0).all())

    def as_float(self) -> "JointTable":
        return JointTable(self.variables, self.table.astype(float))

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for values in itertools.product(*(range(k) for k in self.table.shape)):
            rows.append(dict(zip(self.variables, values), p=self.table[values]))
        return pd.DataFrame(rows, columns=list(self.variables) + ['p'])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, JointTable):
            return NotImplemented
        return (
            self.variables == other.variables
            and self.table.shape == other.table.shape
            and bool((self.table == other.table).all())
        )


def _scalar(value) -> Number:
    if isinstance(value, np.ndarray):
        value = value.item()
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return value


# -- oracle operations ---------------------------------------------------------

def joint(m: DiscreteModel, over: Optional[Iterable[str]] = None) -> JointTable:
    """
    Marginal of the model's joint over `over` (default: every vertex).

    Factors are multiplied in topological order; a variable outside `over` is
    summed out as soon as all of its children have been multiplied in.

    Raises:
        SizingError: if an intermediate table would exceed MAX_CELLS cells
    """
    g = m.graph
    keep = g.order(over) if over is not None else g.names
    keep_set = set(keep)
    sizes = {v.name: v.domain_size for v in g.variables}
    pending = {v: len(g.children(v)) for v in g.names}

    axes: List[str] = []
    factor = np.array(Fraction(1), dtype=object)
    for v in g.topological_order():
        cpt = m.cpt(v)
        cpt_vars = cpt.parents + (v,)
        new_axes = axes + [v]
        cells = math.prod(sizes[a] for a in new_axes)
        if cells > MAX_CELLS:
            raise SizingError(f"joint table would need {cells} cells, the limit is {MAX_CELLS}")

        perm = sorted(range(len(cpt_vars)), key=lambda i: new_axes.index(cpt_vars[i]))
        arr = cpt.table.transpose(perm).reshape([sizes[a] if a in cpt_vars else 1 for a in new_axes])
        factor = factor.reshape(factor.shape + (1,)) * arr
        axes = new_axes

        for p in cpt.parents:
            pending[p] -= 1
        drop = [a for a in axes if a not in keep_set and pending[a] == 0]
        if drop:
            factor = np.asarray(factor.sum(axis=tuple(axes.index(a) for a in drop)), dtype=object)
            axes = [a for a in axes if a not in drop]

    table = np.transpose(factor, [axes.index(v) for v in keep]) if keep else factor
    return JointTable(keep, table)


def intervene(m: DiscreteModel, assignment: Union[Context, Mapping[str, int]]) -> DiscreteModel:
    """
    Truncated factorisation: replace the CPT of each assigned variable by a
    point mass and cut its incoming edges.
    """
    values = _assignment(assignment)
    if not values:
        return m
    g = m.graph
    for name, value in values.items():
        if not 0 <= value < g.domain_size(name):
            raise ValidationError(f"value {value} outside the domain of '{name}'")

    cut = mutilate(g, cut_in=values)
    cpts = dict(m.cpts)
    for name, value in values.items():
        cpts[name] = Cpt.point_mass(name, g.domain_size(name), value)
    switches = [(c, e) for c, e in m.switches if e[1] not in values]
    return DiscreteModel(cut, cpts, switches)


def interventional(
    m: DiscreteModel,
    treatment_values: Union[Context, Mapping[str, int]],
    outcome: Names,
) -> JointTable:
    """P_t(outcome) by the truncated-factorisation oracle."""
    return joint(intervene(m, treatment_values), _names(outcome))


def _csi_blocks(j: JointTable, x: Names, y: Names, context, cond: Names):
    xs, ys, zs = _names(x), _names(y), _names(cond)
    fixed = _assignment(context)
    overlap = (set(xs) | set(ys)) & (set(zs) | set(fixed))
    if overlap or set(xs) & set(ys):
        raise PreconditionError(f"CSI arguments overlap on {sorted(overlap or set(xs) & set(ys))}")
    if not xs or not ys:
        raise PreconditionError("CSI needs non-empty x and y")

    names = list(zs) + list(fixed) + list(xs) + list(ys)
    table = j.marginal(names).table
    table = table[(slice(None),) * len(zs) + tuple(fixed[k] for k in fixed)]
    sizes = j.sizes
    nx_cells = math.prod(sizes[v] for v in xs)
    ny_cells = math.prod(sizes[v] for v in ys)
    for s in itertools.product(*(range(sizes[v]) for v in zs)):
        block = np.asarray(table[s]).reshape(nx_cells, ny_cells)
        yield s, block


def csi_holds(
    j: JointTable,
    x: Names,
    y: Names,
    context: Union[None, Context, Mapping[str, int]] = None,
    cond: Names = (),
    tol: Optional[float] = None,
) -> bool:
    """
    Test X ⊥ Y | context, cond on a joint table.

    Cells of `cond` with zero mass are skipped. Exact tables are compared
    exactly, float tables within `tol` (default from configuration).

    Args:
        j: Joint table
        x: Variable or variables
        y: Variable or variables
        context: Fixed assignment
        cond: Variables conditioned on at every value

    Returns:
        True if the independence holds in every positive cell
    """
    tolerance = get_tolerance(tol) if not j.exact else 0
    for s, block in _csi_blocks(j, x, y, context, cond):
        mass = block.sum()
        if mass == 0:
            continue
        diff = block * mass - np.multiply.outer(block.sum(axis=1), block.sum(axis=0))
        if j.exact:
            if any(d != 0 for d in diff.flat):
                return False
        elif np.abs(diff.astype(float)).max() > tolerance:
            return False
    return True


def conditional_mutual_information(
    j: JointTable,
    x: Names,
    y: Names,
    context: Union[None, Context, Mapping[str, int]] = None,
    cond: Names = (),
) -> float:
    """
    I(X; Y | cond, context) in nats; zero exactly when the CSI holds.

    Log ratios are formed from exact fractions first, so an exact
    independence gives exactly 0.0.
    """
    fixed = _assignment(context)
    event = j.prob(fixed) if fixed else j.total()
    if event == 0:
        return 0.0
    total = 0.0
    for s, block in _csi_blocks(j, x, y, context, cond):
        mass = block.sum()
        if mass == 0:
            continue
        px = block.sum(axis=1)
        py = block.sum(axis=0)
        for i, row in enumerate(block):
            for k, pxy in enumerate(row):
                if pxy == 0:
                    continue
                ratio = (pxy * mass) / (px[i] * py[k])
                total += float(pxy / event) * math.log(ratio)
    return total


# -- estimand evaluation -------------------------------------------------------

class _Evaluator:
    """Memoised interpreter of an estimand tree against one joint table."""

    def __init__(self, j: JointTable):
        self.j = j
        self._free: Dict[int, Tuple[str, ...]] = {}
        self._memo: Dict[Tuple[int, Tuple[int, ...]], Number] = {}
        self._marginals: Dict[Tuple[str, ...], JointTable] = {}

    def _free_of(self, node: Estimand) -> Tuple[str, ...]:
        key = id(node)
        if key not in self._free:
            self._free[key] = tuple(sorted(free_variables(node)))
        return self._free[key]

    def _prob(self, assignment: Dict[str, int]) -> Number:
        names = tuple(sorted(assignment))
        if names not in self._marginals:
            self._marginals[names] = self.j.marginal(names)
        table = self._marginals[names]
        if not names:
            return table.total()
        return _scalar(table.table[tuple(assignment[n] for n in names)])

    def value(self, node: Estimand, env: Dict[str, int]) -> Number:
        key = (id(node), tuple(env[v] for v in self._free_of(node)))
        if key in self._memo:
            return self._memo[key]
        result = self._compute(node, env)
        self._memo[key] = result
        return result

    def _compute(self, node: Estimand, env: Dict[str, int]) -> Number:
        if isinstance(node, ObsProb):
            for name in node.variables + node.given + node.context.keys():
                self.j.domain_size(name)
            given = {n: env[n] for n in node.given}
            given.update(node.context.as_dict())
            denominator = self._prob(given)
            if denominator == 0:
                raise PositivityError(render(node, "text"))
            numerator = self._prob({**given, **{n: env[n] for n in node.variables}})
            return numerator / denominator

        if isinstance(node, SumOver):
            total: Number = Fraction(0) if self.j.exact else 0.0
            sizes = [self.j.domain_size(v) for v in node.variables]
            for values in itertools.product(*(range(k) for k in sizes)):
                inner = dict(env)
                inner.update(zip(node.variables, values))
                total += self.value(node.child, inner)
            return total

        if isinstance(node, Product):
            result: Number = Fraction(1) if self.j.exact else 1.0
            for child in node.children:
                result *= self.value(child, env)
            return result

        if isinstance(node, Quotient):
            denominator = self.value(node.denominator, env)
            if denominator == 0:
                raise PositivityError(render(node.denominator, "text"))
            return self.value(node.numerator, env) / denominator

        if isinstance(node, ContextMixture):
            total = Fraction(0) if self.j.exact else 0.0
            for context, child in node.branches:
                total += self._prob(context.as_dict()) * self.value(child, env)
            return total

        if isinstance(node, NonIdentifiable):
            raise EvaluationError(f"cannot evaluate a non-identifiable estimand ({node.witness})")
        raise TypeError(f"not an estimand: {node!r}")


def _check_assignment(e: Estimand, j: JointTable, env: Dict[str, int], supplied: Sequence[str]) -> None:
    missing = sorted(free_variables(e) - set(env) - set(supplied))
    if missing:
        for name in missing:
            j.domain_size(name)
        raise ValidationError(f"no value supplied for {missing}")
    for name, value in env.items():
        if not 0 <= value < j.domain_size(name):
            raise ValidationError(f"value {value} outside the domain of '{name}'")


def evaluate(
    e: Estimand,
    j: JointTable,
    treatment_values: Union[None, Context, Mapping[str, int]] = None,
    outcome_values: Union[None, Context, Mapping[str, int]] = None,
) -> Number:
    """
    Evaluate an estimand on a joint table.

    Args:
        e: Estimand
        j: Observational joint
        treatment_values: Values for the treatment variables
        outcome_values: Values for the outcome variables

    Returns:
        Exact Fraction for exact tables, float otherwise

    Raises:
        PositivityError: on a zero-mass conditioning event
        UnknownVariableError: if a term names a variable the joint lacks
    """
    env = _assignment(treatment_values)
    env.update(_assignment(outcome_values))
    _check_assignment(e, j, env, ())
    return _Evaluator(j).value(e, env)


def evaluate_table(
    e: Estimand,
    j: JointTable,
    treatment_values: Union[None, Context, Mapping[str, int]],
    outcome: Names,
) -> JointTable:
    """
    Evaluate an estimand at every outcome assignment, sharing one memo.

    The result is directly comparable with `interventional(m, t, outcome)`.
    """
    env = _assignment(treatment_values)
    names = _names(outcome)
    _check_assignment(e, j, env, names)
    sizes = [j.domain_size(v) for v in names]
    evaluator = _Evaluator(j)
    table = np.empty(tuple(sizes), dtype=object if j.exact else float)
    for values in itertools.product(*(range(k) for k in sizes)):
        table[values] = evaluator.value(e, {**env, **dict(zip(names, values))})
    return JointTable(names, table)


# -- model construction ----------------------------------------------------------

def random_model(
    g: CausalGraph,
    rng: np.random.Generator,
    labels: Optional[LabelSet] = None,
    c_spec: Optional[ControlSpec] = None,
) -> DiscreteModel:
    """
    Draw a strictly positive model, compatible with `labels` when given.

    Rows are integers 1..100 normalised; then, for each label (Y, X) in
    context c, every row of X whose control parents match c copies the row
    with Y = 0.
    """
    cpts: Dict[str, Cpt] = {}
    for name in g.names:
        parents = g.parents(name)
        k = g.domain_size(name)
        shape = tuple(g.domain_size(p) for p in parents) + (k,)
        table = np.empty(shape, dtype=object)
        for values in itertools.product(*(range(n) for n in shape[:-1])):
            weights = [int(w) for w in rng.integers(1, 101, size=k)]
            total = sum(weights)
            table[values] = np.array([Fraction(w, total) for w in weights], dtype=object)
        cpts[name] = Cpt(name, parents, table)

    switches: List[Tuple[Context, Edge]] = []
    if labels is not None:
        spec = c_spec or ControlSpec()
        for context in spec.contexts(g):
            for parent, child in sorted(labels[context], key=lambda e: (g.index(e[1]), g.index(e[0]))):
                _drop_parent(cpts[child], parent, context)
                switches.append((context, (parent, child)))

    model = DiscreteModel(g, cpts, switches)
    model.validate()
    return model


def _drop_parent(cpt: Cpt, parent: str, context: Context) -> None:
    axis = cpt.parents.index(parent)
    fixed = {cpt.parents.index(n): v for n, v in context.assignments if n in cpt.parents}
    for values, _ in list(cpt.rows()):
        if any(values[i] != v for i, v in fixed.items()):
            continue
        base = list(values)
        base[axis] = 0
        cpt.table[values] = cpt.table[tuple(base)].copy()


def compile_sem(
    g: CausalGraph,
    mechanisms: Mapping[str, Callable[[Mapping[str, int], int], int]],
    noise: Mapping[str, Sequence[Number]],
) -> DiscreteModel:
    """
    Marginalise exogenous noise out of a structural equation model.

    Args:
        g: Graph; every vertex needs a mechanism
        mechanisms: name -> f(parent values, noise value) returning a value
        noise: name -> probabilities of noise values 0..k-1

    Returns:
        The equivalent model with one CPT per vertex
    """
    cpts: Dict[str, Cpt] = {}
    for name in g.names:
        if name not in mechanisms or name not in noise:
            raise ValidationError(f"no mechanism or noise for '{name}'")
        parents = g.parents(name)
        k = g.domain_size(name)
        shape = tuple(g.domain_size(p) for p in parents) + (k,)
        table = np.empty(shape, dtype=object)
        for values in itertools.product(*(range(n) for n in shape[:-1])):
            row = [Fraction(0)] * k
            for u, weight in enumerate(noise[name]):
                out = mechanisms[name](dict(zip(parents, values)), u)
                if not 0 <= out < k:
                    raise ValidationError(f"mechanism of '{name}' produced {out}, outside its domain")
                row[out] += Fraction(weight)
            table[values] = np.array(row, dtype=object)
        cpts[name] = Cpt(name, parents, table)
    model = DiscreteModel(g, cpts)
    model.validate()
    return model


# -- text formats ----------------------------------------------------------------

def _fraction(token: str, line_number: int, source: Optional[str]) -> Fraction:
    try:
        value = Fraction(token)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"invalid probability '{token}'", line_number, source)
    if value < 0:
        raise ParseError(f"negative probability '{token}'", line_number, source)
    return value


def parse_model(text: str, g: Optional[CausalGraph] = None, source: Optional[str] = None) -> DiscreteModel:
    """
    Parse a model file.

    Args:
        text: 'cpt <name> | <parents...>' blocks of
            '<parent values...> : <p0> <p1> ...' rows, plus optional
            'switch <context> drop <parent>-><child>' lines
        g: Companion graph; when omitted a fully observed graph is built
            from the CPT headers
        source: Optional file name for error messages

    Returns:
        The validated model
    """
    blocks: List[Tuple[int, str, Tuple[str, ...], Dict[Tuple[int, ...], List[Fraction]]]] = []
    switches: List[Tuple[int, Context, Edge]] = []
    current = None

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        tokens = line.split()

        if tokens[0] == 'cpt':
            if len(tokens) < 3 or tokens[2] != '|':
                raise ParseError("expected 'cpt <name> | <parents...>'", line_number, source)
            name, parents = tokens[1], tuple(tokens[3:])
            for v in (name,) + parents:
                if not NAME_PATTERN.match(v):
                    raise ParseError(f"invalid variable name '{v}'", line_number, source)
            if any(b[1] == name for b in blocks):
                raise ParseError(f"duplicate CPT for '{name}'", line_number, source)
            current = (line_number, name, parents, {})
            blocks.append(current)

        elif tokens[0] == 'switch':
            if len(tokens) != 4 or tokens[2] != 'drop' or '->' not in tokens[3]:
                raise ParseError("expected 'switch <assignments> drop <parent>-><child>'", line_number, source)
            try:
                context = Context.parse(tokens[1])
            except ValidationError as e:
                raise ParseError(str(e), line_number, source)
            parent, _, child = tokens[3].partition('->')
            switches.append((line_number, context, (parent, child)))

        elif ':' in line:
            if current is None:
                raise ParseError("row before any 'cpt' header", line_number, source)
            head, _, tail = line.partition(':')
            try:
                values = tuple(int(t) for t in head.split())
            except ValueError:
                raise ParseError(f"invalid parent values '{head.strip()}'", line_number, source)
            if len(values) != len(current[2]):
                raise ParseError(
                    f"row has {len(values)} parent values, '{current[1]}' has {len(current[2])} parents",
                    line_number,
                    source,
                )
            if values in current[3]:
                raise ParseError(f"duplicate row {values} for '{current[1]}'", line_number, source)
            probs = [_fraction(t, line_number, source) for t in tail.split()]
            if len(probs) < 2:
                raise ParseError("a row needs at least two probabilities", line_number, source)
            if sum(probs) != 1:
                raise ParseError(f"row sums to {sum(probs)}, not 1", line_number, source)
            current[3][values] = probs

        else:
            raise ParseError(f"unknown directive '{tokens[0]}'", line_number, source)

    domains: Dict[str, int] = {}
    for line_number, name, _, rows in blocks:
        widths = {len(r) for r in rows.values()}
        if len(widths) != 1:
            raise ParseError(f"CPT of '{name}' has rows of different lengths or no rows", line_number, source)
        domains[name] = widths.pop()

    if g is None:
        try:
            g = CausalGraph(
                [VariableId(name, domains[name]) for _, name, _, _ in blocks],
                [(p, name) for _, name, parents, _ in blocks for p in parents],
            )
        except (ValidationError, UnknownVariableError) as e:
            raise ParseError(str(e), None, source)

    cpts: Dict[str, Cpt] = {}
    for line_number, name, parents, rows in blocks:
        if name not in g:
            raise ParseError(f"CPT for unknown variable '{name}'", line_number, source)
        if set(parents) != set(g.parents(name)) or len(parents) != len(g.parents(name)):
            raise ParseError(
                f"CPT of '{name}' lists parents {list(parents)}, graph has {list(g.parents(name))}",
                line_number,
                source,
            )
        if domains[name] != g.domain_size(name):
            raise ParseError(f"CPT of '{name}' has {domains[name]} values, graph says {g.domain_size(name)}", line_number, source)
        order = g.parents(name)
        shape = tuple(g.domain_size(p) for p in order) + (domains[name],)
        table = np.empty(shape, dtype=object)
        for values in itertools.product(*(range(n) for n in shape[:-1])):
            by_name = dict(zip(order, values))
            key = tuple(by_name[p] for p in parents)
            if key not in rows:
                raise ParseError(f"CPT of '{name}' is missing row {key}", line_number, source)
            table[values] = np.array(rows[key], dtype=object)
        cpts[name] = Cpt(name, order, table)

    missing = [v for v in g.names if v not in cpts]
    if missing:
        raise ParseError(f"no CPT for {missing}", None, source)

    model = DiscreteModel(g, cpts, [(c, e) for _, c, e in switches])
    try:
        model.validate()
    except (ValidationError, UnknownVariableError) as e:
        raise ParseError(str(e), switches[-1][0] if switches else None, source)
    logger.debug(f"Parsed model over {len(g)} variables with {len(switches)} switch annotation(s)")
    return model


def read_model_file(path: str, g: Optional[CausalGraph] = None) -> DiscreteModel:
    with open(path, encoding='utf-8') as handle:
        return parse_model(handle.read(), g, source=path)


def format_model(m: DiscreteModel) -> str:
    lines = []
    for name in m.graph.names:
        cpt = m.cpt(name)
        lines.append(f"cpt {name} | {' '.join(cpt.parents)}".rstrip())
        for values, row in cpt.rows():
            lines.append(f"{' '.join(str(v) for v in values)} : {' '.join(str(p) for p in row)}".lstrip())
    for context, (parent, child) in m.switches:
        lines.append(f"switch {context} drop {parent}->{child}")
    return "\n".join(lines) + "\n"


def write_model_file(m: DiscreteModel, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(format_model(m))


def parse_joint(text: str, source: Optional[str] = None) -> JointTable:
    """
    Parse '<name>=<v> ... p=<num>/<den>' lines. Domain sizes are the largest
    value seen plus one; missing cells have probability 0.
    """
    variables: Optional[Tuple[str, ...]] = None
    cells: Dict[Tuple[int, ...], Fraction] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        pairs = []
        for token in line.split():
            name, sep, value = token.partition('=')
            if not sep:
                raise ParseError(f"expected '<name>=<value>', got '{token}'", line_number, source)
            pairs.append((name, value))
        if not pairs or pairs[-1][0] != 'p':
            raise ParseError("line must end with 'p=<probability>'", line_number, source)
        names = tuple(n for n, _ in pairs[:-1])
        for n in names:
            if not NAME_PATTERN.match(n):
                raise ParseError(f"invalid variable name '{n}'", line_number, source)
        if variables is None:
            variables = names
        elif names != variables:
            raise ParseError(f"variables {list(names)} differ from {list(variables)}", line_number, source)
        try:
            key = tuple(int(v) for _, v in pairs[:-1])
        except ValueError:
            raise ParseError("values must be non-negative integers", line_number, source)
        if key in cells:
            raise ParseError(f"duplicate cell {key}", line_number, source)
        cells[key] = _fraction(pairs[-1][1], line_number, source)

    if variables is None:
        raise ParseError("joint table is empty", None, source)
    if sum(cells.values()) != 1:
        raise ParseError(f"joint table sums to {sum(cells.values())}, not 1", None, source)

    shape = tuple(max(key[i] for key in cells) + 1 for i in range(len(variables)))
    table = np.full(shape, Fraction(0), dtype=object)
    for key, p in cells.items():
        table[key] = p
    return JointTable(variables, table)


def read_joint_file(path: str, g: Optional[CausalGraph] = None) -> JointTable:
    """Read a joint-table file; with `g`, values must fit the graph's domains."""
    with open(path, encoding='utf-8') as handle:
        table = parse_joint(handle.read(), source=path)
    if g is not None:
        for name in table.variables:
            if name in g and table.domain_size(name) > g.domain_size(name):
                raise ParseError(f"value of '{name}' outside its domain", None, path)
    return table


def format_joint(j: JointTable) -> str:
    lines = []
    for values in itertools.product(*(range(k) for k in j.table.shape)):
        cells = " ".join(f"{n}={v}" for n, v in zip(j.variables, values))
        lines.append(f"{cells} p={_scalar(j.table[values])}".lstrip())
    return "\n".join(lines) + "\n"


def write_joint_file(j: JointTable, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(format_joint(j))


def read_distribution_file(path: str, g: Optional[CausalGraph] = None) -> JointTable:
    """
    Load an observational joint from either a model file (joint over the
    observed variables) or a joint-table file, dispatching on the first
    directive.
    """
    with open(path, encoding='utf-8') as handle:
        text = handle.read()
    for raw in text.splitlines():
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if line.split()[0] == 'cpt':
            model = parse_model(text, g, source=path)
            return joint(model, model.graph.observed)
        break
    return read_joint_file(path, g)
