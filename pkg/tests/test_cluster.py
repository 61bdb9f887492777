import math
import os
import tempfile
import unittest

import numpy as np

from astinlay.align import align
from astinlay.cluster import (
    CATEGORIES, UNMAPPED, Aggregator, CategoryMapping, Estimate, annotate,
    bootstrap_estimate, category_report, category_scores,
    load_category_mapping, overall_snippet_score, parse_category_mapping,
    snippet_kind_scores, subcategory_scores)
from astinlay.errors import (
    AggregationMismatch, DuplicateKind, MappingParseError,
    UnknownCategoryName)
from astinlay.helpers import (
    flat_category_values, flat_node_confidences, random_corpus)
from astinlay.syntax import parse, terminals_in_order
from astinlay.tlp import tlp_from_pairs


def one_token_per_terminal(source, probabilities, snippet_id=''):
    """A sequence with one token per terminal, in terminal order."""
    tree = parse(source)
    terminals = terminals_in_order(tree)
    rows = [(tree.text(t.span), (t.span.start, t.span.end), math.log(p))
            for t, p in zip(terminals, probabilities)]
    return tree, tlp_from_pairs(source, rows, snippet_id=snippet_id)


class TestAnnotate(unittest.TestCase):

    def setUp(self):
        self.source = 'def f(a, b):\n    return a\n'
        # def, f, then the five terminals of the parameters
        probabilities = [0.9, 0.8, 0.07, 0.4, 0.1, 0.5, 0.1, 0.6, 0.7, 0.3]
        self.tree, self.seq = one_token_per_terminal(
            self.source, probabilities)
        self.amap = align(self.seq, self.tree)

    def _node(self, annotated, kind):
        return next(n for n in annotated.nodes() if n.kind == kind)

    def test_parameters_mean(self):
        annotated = annotate(self.tree, self.amap, self.seq, Aggregator.mean)
        node = self._node(annotated, 'parameters')
        self.assertEqual(node.token_count, 5)
        self.assertEqual(round(node.confidence, 2), 0.23)

    def test_parameters_median(self):
        annotated = annotate(self.tree, self.amap, self.seq,
                             Aggregator.median)
        self.assertAlmostEqual(
            self._node(annotated, 'parameters').confidence, 0.10)

    def test_max(self):
        annotated = annotate(self.tree, self.amap, self.seq, Aggregator.max)
        self.assertAlmostEqual(annotated.root.confidence, 0.9)

    def test_null_without_tokens(self):
        source = 'x = 1\ny = 2\n'
        tree = parse(source)
        seq = tlp_from_pairs(source, [('x', (0, 1), math.log(0.5))])
        annotated = annotate(tree, align(seq, tree), seq)
        by_text = {tree.text(n.span): n for n in annotated.nodes()
                   if n.kind == 'integer'}
        self.assertIsNone(by_text['2'].confidence)
        self.assertEqual(by_text['2'].token_count, 0)
        self.assertAlmostEqual(annotated.root.confidence, 0.5)

    def test_escaped_string_scored(self):
        source = 's = "hello\\nworld"\n'
        tree = parse(source)
        seq = tlp_from_pairs(source, [
            ('hello', (5, 10), math.log(0.4)),
            ('world', (12, 17), math.log(0.8))])
        annotated = annotate(tree, align(seq, tree), seq, Aggregator.mean)
        self.assertAlmostEqual(self._node(annotated, 'string').confidence,
                               0.6)

    def test_matches_flat_recomputation(self):
        rng = np.random.default_rng(17)
        for seq in random_corpus(rng, snippets=5):
            tree = parse(seq.source)
            for agg in Aggregator:
                annotated = annotate(tree, align(seq, tree), seq, agg)
                flat = flat_node_confidences(seq, tree, agg)
                for node in annotated.nodes():
                    self.assertEqual(node.confidence, flat[node.node_id])

    def test_mismatch(self):
        other = tlp_from_pairs(self.source, [('def', (0, 3), -0.1)])
        with self.assertRaises(AggregationMismatch):
            annotate(self.tree, self.amap, other)

    def test_kind_scores(self):
        source = 'a = b\n'
        tree, seq = one_token_per_terminal(source, [0.3, 0.9, 0.5])
        annotated = annotate(tree, align(seq, tree), seq, Aggregator.mean)
        scores = snippet_kind_scores(annotated, Aggregator.mean)
        self.assertAlmostEqual(scores['identifier'], 0.4)
        self.assertNotIn('lambda', scores)


class TestScores(unittest.TestCase):

    def setUp(self):
        self.mapping = CategoryMapping.default()

    def test_subcategory_per_snippet(self):
        trees = []
        for i, p in enumerate((0.2, 0.4)):
            source = 'if a:\n    pass\n'
            tree, seq = one_token_per_terminal(
                source, [p] * 5, snippet_id=f's{i}')
            trees.append(annotate(tree, align(seq, tree), seq))
        sub = subcategory_scores(trees)
        self.assertEqual(len(sub['if_statement']), 2)
        for value, expected in zip(sub['if_statement'], (0.2, 0.4)):
            self.assertAlmostEqual(value, expected)
        self.assertNotIn('lambda', sub)

    def test_category_pooling(self):
        pooled = category_scores(
            {'if_statement': [0.6], 'if': [0.8], 'weird_node': [0.1]},
            self.mapping)
        self.assertEqual(sorted(pooled['Decisions']), [0.6, 0.8])
        self.assertEqual(pooled[UNMAPPED], [0.1])
        self.assertIsNone(pooled['Exceptions'])

    def test_empty(self):
        pooled = category_scores({}, self.mapping)
        self.assertEqual(set(pooled), set(CATEGORIES) | {UNMAPPED})
        self.assertTrue(all(v is None for v in pooled.values()))

    def test_against_flat_pipeline(self):
        """Category values equal an independent recomputation bit for bit.
        """
        rng = np.random.default_rng(99)
        for _ in range(50):
            corpus = random_corpus(rng, snippets=5, max_tokens=50)
            for agg in (Aggregator.median, Aggregator.mean):
                annotated = []
                for seq in corpus:
                    tree = parse(seq.source)
                    annotated.append(
                        annotate(tree, align(seq, tree), seq, agg))
                pooled = category_scores(
                    subcategory_scores(annotated, agg), self.mapping)
                expected = flat_category_values(corpus, self.mapping, agg)
                for name, values in pooled.items():
                    self.assertEqual(sorted(values or []), expected[name])

    def test_overall(self):
        score = overall_snippet_score(
            {'identifier': 0.2, 'if': 0.6, 'weird_node': 0.9}, self.mapping)
        self.assertAlmostEqual(score, 0.4)
        self.assertIsNone(overall_snippet_score({'weird': 0.3}, self.mapping))


class TestMapping(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, 'mapping.json')

    def tearDown(self):
        self.tmp.cleanup()

    def test_default(self):
        mapping = CategoryMapping.default()
        self.assertEqual(mapping.category_of('for_statement'), 'Iterations')
        self.assertEqual(mapping.category_of('while_statement'),
                         'Iterations')
        self.assertEqual(mapping.category_of('identifier'),
                         'Natural Language')
        self.assertEqual(mapping.category_of('string'), 'Natural Language')
        self.assertEqual(mapping.category_of('no_such_kind'), UNMAPPED)
        self.assertIn('if_statement', mapping.kinds_of('Decisions'))

    def test_unknown_category(self):
        with open(self.path, 'w') as fobj:
            fobj.write('{"for_statement": "Loops"}')
        with self.assertRaises(UnknownCategoryName):
            load_category_mapping(self.path)

    def test_duplicate(self):
        with self.assertRaises(DuplicateKind):
            parse_category_mapping(
                '{"if": "Decisions", "if": "Operators"}')

    def test_malformed(self):
        with self.assertRaises(MappingParseError):
            parse_category_mapping('{"if": ')
        with self.assertRaises(MappingParseError):
            parse_category_mapping('["if"]')

    def test_digest(self):
        a = parse_category_mapping('{"if": "Decisions", "for": "Iterations"}')
        b = parse_category_mapping('{"for": "Iterations", "if": "Decisions"}')
        c = parse_category_mapping('{"for": "Iterations"}')
        self.assertEqual(a.digest, b.digest)
        self.assertNotEqual(a.digest, c.digest)


class TestBootstrap(unittest.TestCase):

    def test_single_value(self):
        for reps, seed in ((1, 0), (500, 3), (50, 99)):
            self.assertEqual(tuple(bootstrap_estimate([0.5], reps, seed)),
                             (0.5, 0.5, 0.5))

    def test_empty(self):
        self.assertEqual(tuple(bootstrap_estimate([])), (None, None, None))
        self.assertTrue(Estimate.from_values([], 500, 0).is_null)

    def test_calibration(self):
        rng = np.random.default_rng(7)
        values = rng.normal(0.7, 0.1, size=1000)
        point, low, high = bootstrap_estimate(values, reps=500, seed=0)
        self.assertLess(abs(point - 0.7), 0.02)
        self.assertLessEqual(low, point)
        self.assertLessEqual(point, high)

    def test_determinism(self):
        values = np.random.default_rng(1).uniform(size=40)
        self.assertEqual(bootstrap_estimate(values, 200, 5),
                         bootstrap_estimate(values, 200, 5))
        self.assertNotEqual(bootstrap_estimate(values, 200, 5),
                            bootstrap_estimate(values, 200, 6))

    def test_report(self):
        mapping = CategoryMapping.default()
        sub = {'if_statement': [0.6, 0.7], 'identifier': [0.3],
               'weird_node': [0.2]}
        report = category_report(sub, mapping, model_id='m', reps=100,
                                 seed=1, overall_values=[0.5, 0.6])
        self.assertEqual(list(report.per_category), list(CATEGORIES))
        self.assertTrue(report.per_category['Exceptions'].is_null)
        self.assertEqual(report.per_category['Natural Language'].point, 0.3)
        self.assertEqual(report.unmapped.n_samples, 1)
        self.assertFalse(report.overall.is_null)
        self.assertEqual(report.mapping_digest, mapping.digest)
        rows = report.rows()
        self.assertEqual(len(rows), len(CATEGORIES) + 1 + 3)
        self.assertEqual(report.to_json()['per_category']['Exceptions'],
                         {'point': None, 'ci_low': None, 'ci_high': None,
                          'n': 0})


if __name__ == '__main__':
    unittest.main()
