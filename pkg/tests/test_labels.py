# tests/test_labels.py
import os
import sys
import tempfile
import unittest

import numpy as np

# Add the parent directory to the path so we can import the modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from csi_id.distributions import csi_holds, joint, random_model
from csi_id.errors import ParseError, PreconditionError, ValidationError
from csi_id.graph import CausalGraph, Context
from csi_id.labels import (
    ControlSpec,
    LabelSet,
    format_labels,
    is_maximal_regular,
    maximalize,
    parse_labels,
    read_label_file,
    regularize,
    write_label_file,
)
from tests.helpers import fig1, fig2, fixture, labels_for, random_labelled_instance


def _two_control_graph() -> CausalGraph:
    return CausalGraph.from_edges([('A', 'Y'), ('X', 'Y'), ('B', 'X')], names=['A', 'B', 'X', 'Y'])


class TestControlSpec(unittest.TestCase):
    """Tests for control enumeration and validation."""

    def test_contexts_lexicographic(self):
        """Contexts are enumerated in declared control order, values ascending."""
        contexts = ControlSpec(['T', 'Z']).contexts(fig2())
        self.assertEqual(
            [str(c) for c in contexts],
            ['T=0,Z=0', 'T=0,Z=1', 'T=1,Z=0', 'T=1,Z=1'],
        )

    def test_no_controls(self):
        """No controls gives the single empty context."""
        self.assertEqual(ControlSpec().contexts(fig1()), [Context()])

    def test_control_must_be_observed_root(self):
        """Non-root controls are rejected."""
        with self.assertRaises(ValidationError):
            ControlSpec(['W']).validate(fig1())
        with self.assertRaises(ValidationError):
            ControlSpec(['T', 'T'])

    def test_controls_of(self):
        """C^X is the set of control parents of X."""
        c_spec = ControlSpec(['T'])
        self.assertEqual(c_spec.controls_of(fig1(), 'W'), ('T',))
        self.assertEqual(c_spec.controls_of(fig1(), 'Z'), ())


class TestLabelSet(unittest.TestCase):
    """Tests for label set validation and equality."""

    def setUp(self):
        """Load the first figure and its labels."""
        self.g = fig1()
        self.labels, self.c_spec = labels_for(self.g, 'fig1.labels')

    def test_lookup(self):
        """Lookups return frozen edge sets, empty for unlabelled contexts."""
        self.assertEqual(self.labels[Context.parse('T=0')], frozenset({('Z', 'W')}))
        self.assertEqual(self.labels[Context.parse('T=1')], frozenset({('W', 'Y')}))
        self.assertEqual(LabelSet()[Context.parse('T=0')], frozenset())
        self.assertEqual(self.labels.edges(), frozenset({('Z', 'W'), ('W', 'Y')}))

    def test_equality_ignores_empty_contexts(self):
        """A context mapped to no edges is the same as an absent one."""
        self.assertEqual(LabelSet.empty(self.g, self.c_spec), LabelSet())
        self.assertTrue(LabelSet.empty(self.g, self.c_spec).is_empty())

    def test_rejects_control_edges(self):
        """Labels may not remove edges out of a control."""
        l = LabelSet({Context.parse('T=0'): [('T', 'W')]})
        with self.assertRaises(ValidationError):
            l.validate(self.g, self.c_spec)

    def test_rejects_missing_edge(self):
        """Labelled edges must exist."""
        l = LabelSet({Context.parse('T=0'): [('X', 'W')]})
        with self.assertRaises(ValidationError):
            l.validate(self.g, self.c_spec)

    def test_rejects_bad_contexts(self):
        """Contexts must fully assign the controls within their domains."""
        with self.assertRaises(ValidationError):
            LabelSet({Context(): [('Z', 'W')]}).validate(self.g, self.c_spec)
        with self.assertRaises(ValidationError):
            LabelSet({Context.parse('T=2'): [('Z', 'W')]}).validate(self.g, self.c_spec)


class TestRegularize(unittest.TestCase):
    """Tests for regularize and maximalize."""

    def test_regularize_drops_uncontrolled_edges(self):
        """Labels on edges into vertices without control parents are deleted outright."""
        g = fig1()
        labels, c_spec = labels_for(g, 'fig1_example3.labels')
        g2, l2 = regularize(g, labels, c_spec)
        self.assertFalse(g2.has_edge('X', 'Z'))
        self.assertEqual(len(g2.edges), len(g.edges) - 1)
        expected, _ = labels_for(g, 'fig1.labels')
        self.assertEqual(l2, expected)

    def test_dropped_edges_are_independent(self):
        """Every edge regularize removes is a plain independence on compatible models."""
        dropped_any = 0
        for seed in range(150):
            rng = np.random.default_rng(seed)
            g, l, c_spec, _, _ = random_labelled_instance(rng)
            g2, _ = regularize(g, l, c_spec)
            dropped = set(g.edges) - set(g2.edges)
            if not dropped:
                continue
            dropped_any += 1
            full = joint(random_model(g, rng, l, c_spec))
            for parent, child in dropped:
                others = [p for p in g.parents(child) if p != parent]
                self.assertTrue(csi_holds(full, child, parent, None, others), msg=f"seed {seed}: {parent}->{child}")
        self.assertGreater(dropped_any, 10)

    def test_regularize_regular_input(self):
        """Regular input is returned unchanged."""
        g = fig1()
        labels, c_spec = labels_for(g, 'fig1.labels')
        g2, l2 = regularize(g, labels, c_spec)
        self.assertEqual(g2, g)
        self.assertEqual(l2, labels)

    def test_maximalize_copies_across_irrelevant_controls(self):
        """A label is copied to every context agreeing on the child's control parents."""
        g = _two_control_graph()
        c_spec = ControlSpec(['A', 'B'])
        l = LabelSet({Context.parse('A=0,B=0'): [('X', 'Y')]})
        m = maximalize(g, l, c_spec)
        self.assertEqual(m[Context.parse('A=0,B=1')], frozenset({('X', 'Y')}))
        self.assertEqual(m[Context.parse('A=1,B=0')], frozenset())
        self.assertEqual(m[Context.parse('A=1,B=1')], frozenset())
        self.assertTrue(is_maximal_regular(g, m, c_spec))
        self.assertFalse(is_maximal_regular(g, l, c_spec))

    def test_maximalize_already_maximal(self):
        """Labels whose child depends on every control stay put."""
        g = fig1()
        labels, c_spec = labels_for(g, 'fig1.labels')
        self.assertEqual(maximalize(g, labels, c_spec), labels)
        self.assertTrue(is_maximal_regular(g, labels, c_spec))

    def test_maximalize_rejects_irregular(self):
        """Maximalize needs regular input."""
        g = fig1()
        labels, c_spec = labels_for(g, 'fig1_example3.labels')
        with self.assertRaises(PreconditionError):
            maximalize(g, labels, c_spec)
        self.assertFalse(is_maximal_regular(g, labels, c_spec))

    def test_closure_properties(self):
        """Regularize then maximalize is monotone and idempotent."""
        for seed in range(200):
            rng = np.random.default_rng(seed)
            g, l, c_spec, _, _ = random_labelled_instance(rng)
            g2, l2 = regularize(g, l, c_spec)
            self.assertEqual(regularize(g2, l2, c_spec), (g2, l2))
            m = maximalize(g2, l2, c_spec)
            for context in c_spec.contexts(g2):
                self.assertTrue(l2[context] <= m[context])
            self.assertEqual(maximalize(g2, m, c_spec), m)
            self.assertTrue(is_maximal_regular(g2, m, c_spec))


class TestLabelFormat(unittest.TestCase):
    """Tests for the label file format."""

    def setUp(self):
        """Load the first figure graph."""
        self.g = fig1()

    def test_round_trip(self):
        """Formatted labels parse back to the same set."""
        labels, c_spec = read_label_file(fixture('fig1.labels'), self.g)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, 'out.labels')
            write_label_file(labels, c_spec, self.g, path)
            again, c_again = read_label_file(path, self.g)
        self.assertEqual(again, labels)
        self.assertEqual(c_again, c_spec)

    def test_format_canonical(self):
        """Controls come first, then labels in context order."""
        labels, c_spec = read_label_file(fixture('fig1.labels'), self.g)
        self.assertEqual(
            format_labels(labels, c_spec, self.g),
            "control T\nlabel T=0 remove Z->W\nlabel T=1 remove W->Y\n",
        )

    def test_control_after_label(self):
        """Control declarations must come first."""
        with self.assertRaises(ParseError) as ctx:
            parse_labels("control T\nlabel T=0 remove Z->W\ncontrol X\n", self.g)
        self.assertEqual(ctx.exception.line_number, 3)

    def test_partial_context(self):
        """Every label names a full context."""
        g = fig2()
        with self.assertRaises(ParseError) as ctx:
            parse_labels("control T\ncontrol Z\nlabel T=0 remove X->Y\n", g)
        self.assertEqual(ctx.exception.line_number, 3)

    def test_out_of_domain(self):
        """Context values must lie inside the control domain."""
        with self.assertRaises(ParseError):
            parse_labels("control T\nlabel T=2 remove Z->W\n", self.g)

    def test_bad_edges(self):
        """Malformed, missing and control edges are rejected with a line number."""
        for body in ("label T=0 remove Z-W", "label T=0 remove X->W", "label T=0 remove T->W"):
            with self.assertRaises(ParseError) as ctx:
                parse_labels("control T\n" + body + "\n", self.g)
            self.assertEqual(ctx.exception.line_number, 2)

    def test_unknown_directive(self):
        """Unknown directives are rejected."""
        with self.assertRaises(ParseError):
            parse_labels("controls T\n", self.g)


if __name__ == '__main__':
    unittest.main()
