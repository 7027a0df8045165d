# tests/test_csi.py
import os
import sys
import unittest
from fractions import Fraction
from unittest.mock import patch

import numpy as np

# Add the parent directory to the path so we can import the modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from csi_id.csi import identify_csi, learn_labels, learnable, learnable_edges
from csi_id.distributions import (
    conditional_mutual_information,
    csi_holds,
    evaluate_table,
    interventional,
    joint,
    random_model,
)
from csi_id.errors import PreconditionError, SchemaError
from csi_id.estimand import ContextMixture, NonIdentifiable, free_variables, is_identified, parse_sexpr, render, with_context
from csi_id.graph import Context, delete_edges, restrict
from csi_id.identification import identify, latent_project
from csi_id.labels import ControlSpec, LabelSet
from tests.helpers import (
    bow,
    example1_graph,
    example1_model,
    example1_noisy_model,
    fig1,
    fig3,
    fig4,
    fixture,
    labels_for,
    random_assignment,
    random_labelled_instance,
)


def _read(name):
    with open(fixture(name), encoding='utf-8') as handle:
        return handle.read()


class TestIdentifyCsi(unittest.TestCase):
    """Tests for identification with context-specific labels."""

    def test_confounded_control(self):
        """Labels break the confounding in one context and the effect in the other."""
        g = fig4()
        labels, c_spec = labels_for(g, 'fig4.labels')
        result = identify_csi(g, labels, c_spec, ['X'], ['Y'])
        self.assertEqual(render(result, 'sexpr'), _read('fig4_example6.sexpr').strip())
        self.assertEqual(render(result), "P(Y | X, C=0) P(C=0) + P(Y | C=1) P(C=1)")

        rng = np.random.default_rng(6)
        for _ in range(100):
            m = random_model(g, rng, labels, c_spec)
            t = random_assignment(rng, g, ['X'])
            self.assertEqual(evaluate_table(result, joint(m, g.observed), t, ['Y']), interventional(m, t, ['Y']))

    def test_confounded_control_without_labels(self):
        """Without labels every context contains the bow."""
        g = fig4()
        result = identify_csi(g, LabelSet(), ControlSpec(['C']), ['X'], ['Y'])
        self.assertIsInstance(result, NonIdentifiable)
        self.assertIn('context C=0', result.witness)

        bare = identify_csi(g, LabelSet(), ControlSpec(), ['X'], ['Y'])
        self.assertIsInstance(bare, NonIdentifiable)
        self.assertIn('empty context', bare.witness)

    def test_unrelated_outcome(self):
        """Labels that cut every directed path reduce the effect to the marginal."""
        g = fig1()
        labels, c_spec = labels_for(g, 'fig1.labels')
        result = identify_csi(g, labels, c_spec, ['X'], ['Y'])
        self.assertIsInstance(result, ContextMixture)
        for _, branch in result.branches:
            self.assertEqual(free_variables(branch), frozenset({'Y'}))

        m = random_model(g, np.random.default_rng(3), labels, c_spec)
        observational = joint(m, g.observed)
        for x in (0, 1):
            table = evaluate_table(result, observational, {'X': x}, ['Y'])
            self.assertEqual(table, observational.marginal(['Y']))
            self.assertEqual(table, interventional(m, {'X': x}, ['Y']))

        without = identify_csi(g, LabelSet(), c_spec, ['X'], ['Y'])
        self.assertFalse(is_identified(without))

    def test_irregular_labels_are_normalised(self):
        """A label on an edge without control parents is treated as a deletion."""
        g = fig1()
        irregular, c_spec = labels_for(g, 'fig1_example3.labels')
        regular, _ = labels_for(g, 'fig1.labels')
        pruned = delete_edges(g, [('X', 'Z')])
        for treatment, outcome in ((['X'], ['Y']), (['Z'], ['Y']), (['X'], ['W'])):
            self.assertEqual(
                identify_csi(g, irregular, c_spec, treatment, outcome),
                identify_csi(pruned, regular, c_spec, treatment, outcome),
            )

    def test_two_confounded_paths(self):
        """Each context resolves a different confounded path; the mixture matches the printed formulas."""
        g = fig3()
        labels, c_spec = labels_for(g, 'fig3.labels')
        result = identify_csi(g, labels, c_spec, ['X1', 'X2'], ['Y'])
        self.assertIsInstance(result, ContextMixture)
        self.assertEqual([str(c) for c, _ in result.branches], ['T=0', 'T=1'])
        self.assertEqual(free_variables(result.branches[0][1]), frozenset({'X2', 'Y'}))
        self.assertEqual(free_variables(result.branches[1][1]), frozenset({'X1', 'Y'}))

        printed = parse_sexpr(_read('fig3_example5.sexpr'))
        rng = np.random.default_rng(5)
        for _ in range(100):
            m = random_model(g, rng, labels, c_spec)
            observational = joint(m, g.observed)
            t = random_assignment(rng, g, ['X1', 'X2'])
            expected = interventional(m, t, ['Y'])
            self.assertEqual(evaluate_table(result, observational, t, ['Y']), expected)
            self.assertEqual(evaluate_table(printed, observational, t, ['Y']), expected)

        without = identify_csi(g, LabelSet(), c_spec, ['X1', 'X2'], ['Y'])
        self.assertFalse(is_identified(without))

    def test_threads_do_not_change_result(self):
        """Parallel per-context calls give the same estimand."""
        g = fig3()
        labels, c_spec = labels_for(g, 'fig3.labels')
        serial = identify_csi(g, labels, c_spec, ['X1', 'X2'], ['Y'], threads=1)
        parallel = identify_csi(g, labels, c_spec, ['X1', 'X2'], ['Y'], threads=4)
        self.assertEqual(serial, parallel)

    def test_reduces_to_plain_identification(self):
        """Without labels each branch is the plain formula on the graph without controls."""
        checked = 0
        for seed in range(150):
            rng = np.random.default_rng(seed)
            g, _, c_spec, treatment, outcome = random_labelled_instance(rng)
            result = identify_csi(g, LabelSet(), c_spec, treatment, outcome)
            plain = identify(latent_project(restrict(g, [v for v in g.names if v not in c_spec])), treatment, outcome)
            self.assertEqual(is_identified(result), is_identified(plain), msg=f"seed {seed}")
            if not is_identified(plain):
                continue
            checked += 1
            if not len(c_spec):
                self.assertEqual(result, plain)
                continue
            self.assertEqual(result.branches, tuple((c, with_context(plain, c)) for c in sorted(c_spec.contexts(g), key=lambda c: c.assignments)))
        self.assertGreater(checked, 20)

    def test_context_order_does_not_matter(self):
        """Visiting contexts in another order gives the same tree."""
        contexts = ControlSpec.contexts

        def reversed_contexts(c_spec, g):
            return list(reversed(contexts(c_spec, g)))

        cases = [(fig3(), 'fig3.labels', ['X1', 'X2'], ['Y']), (fig4(), 'fig4.labels', ['X'], ['Y'])]
        for g, name, treatment, outcome in cases:
            labels, c_spec = labels_for(g, name)
            expected = identify_csi(g, labels, c_spec, treatment, outcome)
            with patch.object(ControlSpec, 'contexts', autospec=True, side_effect=reversed_contexts):
                permuted = identify_csi(g, labels, c_spec, treatment, outcome)
            self.assertEqual(permuted, expected, msg=name)

    def test_preconditions(self):
        """Treatment and outcome must be observed, disjoint and free of controls."""
        g = fig4()
        labels, c_spec = labels_for(g, 'fig4.labels')
        with self.assertRaises(PreconditionError):
            identify_csi(g, labels, c_spec, ['C'], ['Y'])
        with self.assertRaises(PreconditionError):
            identify_csi(g, labels, c_spec, ['U'], ['Y'])
        with self.assertRaises(PreconditionError):
            identify_csi(g, labels, c_spec, ['X'], ['X'])
        with self.assertRaises(PreconditionError):
            identify_csi(g, labels, c_spec, [], ['Y'])


class TestLearnLabels(unittest.TestCase):
    """Tests for learning labels from an observational joint."""

    def test_exact_example(self):
        """The exact structural model satisfies the context-specific independence."""
        m = example1_model()
        observational = joint(m)
        self.assertEqual(observational.prob({'T': 0, 'Z': 0, 'X': 0, 'Y': 0}), Fraction(1, 4))
        self.assertEqual(interventional(m, {'X': 1}, ['Y']).prob({'Y': 2}), Fraction(1, 4))
        self.assertTrue(csi_holds(observational, 'X', 'Y', {'T': 0}, ['Z']))
        self.assertFalse(observational.is_strictly_positive())

    def test_exact_example_is_degenerate(self):
        """Zero cells are rejected unless explicitly allowed."""
        g = example1_graph()
        observational = joint(example1_model())
        with self.assertRaises(PreconditionError):
            learn_labels(g, observational, ControlSpec(['T']))
        with self.assertLogs('csi_id.csi', level='WARNING'):
            labels = learn_labels(g, observational, ControlSpec(['T']), allow_degenerate=True)
        self.assertIn(('X', 'Y'), labels[Context.parse('T=0')])

    def test_noisy_example(self):
        """On the noisy model only X->Y is removable, and only when T=0."""
        g = example1_graph()
        observational = joint(example1_noisy_model())
        self.assertFalse(csi_holds(observational, 'X', 'Y', {'T': 1}, ['Z']))
        labels = learn_labels(g, observational, ControlSpec(['T']))
        self.assertEqual(labels[Context.parse('T=0')], frozenset({('X', 'Y')}))
        self.assertEqual(labels[Context.parse('T=1')], frozenset())

    def test_float_joint(self):
        """Float joints are compared within the tolerance."""
        g = example1_graph()
        observational = joint(example1_noisy_model()).as_float()
        labels = learn_labels(g, observational, ControlSpec(['T']), tolerance=1e-9)
        self.assertEqual(labels[Context.parse('T=0')], frozenset({('X', 'Y')}))

    def test_recovers_learnable_labels(self):
        """Labels on learnable edges are recovered from a compatible model."""
        g = fig3()
        labels, c_spec = labels_for(g, 'fig3.labels')
        for seed in range(3):
            m = random_model(g, np.random.default_rng(seed), labels, c_spec)
            learned = learn_labels(g, joint(m, g.observed), c_spec)
            self.assertIn(('Z1', 'Y'), learned[Context.parse('T=0')])
            self.assertIn(('X2', 'Z2'), learned[Context.parse('T=1')])
            result = identify_csi(g, learned, c_spec, ['X1', 'X2'], ['Y'])
            self.assertTrue(is_identified(result))
            observational = joint(m, g.observed)
            t = {'X1': 1, 'X2': 0}
            self.assertEqual(evaluate_table(result, observational, t, ['Y']), interventional(m, t, ['Y']))

    def test_labels_pass_information_check(self):
        """Every learned label also has zero conditional mutual information."""
        g = fig3()
        labels, c_spec = labels_for(g, 'fig3.labels')
        m = random_model(g, np.random.default_rng(11), labels, c_spec)
        observational = joint(m, g.observed)
        learned = learn_labels(g, observational, c_spec)
        for context, edges in learned.items():
            for parent, child in edges:
                cond = [
                    v for v in g.ancestors([parent, child])
                    if g.is_observed(v) and v not in c_spec and v not in (parent, child)
                ]
                self.assertEqual(conditional_mutual_information(observational, child, parent, context, cond), 0.0)

    def test_schema_mismatch(self):
        """The joint must cover exactly the observed variables."""
        g = example1_graph()
        observational = joint(example1_noisy_model())
        with self.assertRaises(SchemaError):
            learn_labels(g, observational.marginal(['T', 'X', 'Y']), ControlSpec(['T']))


class TestLearnable(unittest.TestCase):
    """Tests for the learnability of labelled edges."""

    def test_confounded_edge(self):
        """An edge with a latent confounder cannot be learned."""
        self.assertFalse(learnable(bow(), ('X', 'Y')))
        self.assertFalse(learnable(bow(), ('U', 'X')))

    def test_figure_three_edges(self):
        """Both labelled edges of the two-path example can be learned."""
        self.assertTrue(learnable(fig3(), ('Z1', 'Y')))
        self.assertTrue(learnable(fig3(), ('X2', 'Z2')))

    def test_learnable_edges(self):
        """Only the unconfounded control edge is learnable in the confounded-control example."""
        self.assertEqual(learnable_edges(fig4()), (('C', 'X'),))

    def test_missing_edge(self):
        """Missing edges are rejected."""
        with self.assertRaises(PreconditionError):
            learnable(fig4(), ('Y', 'X'))

    def test_restricted_graph(self):
        """Removing the control leaves nothing learnable."""
        g = fig4()
        self.assertEqual(learnable_edges(restrict(g, ['U', 'X', 'Y'])), ())


if __name__ == '__main__':
    unittest.main()
