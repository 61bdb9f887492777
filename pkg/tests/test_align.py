import unittest

import numpy as np

from astinlay.align import (
    UNALIGNED, align, coverage_report, normalize_token)
from astinlay.errors import SourceMismatch
from astinlay.helpers import (
    brute_force_alignment, random_snippet, random_tokenization)
from astinlay.syntax import parse, terminals_in_order
from astinlay.tlp import tlp_from_pairs


def tokens_of(source, pieces, logprob=-0.5):
    """Token rows for consecutive `pieces` of `source` given as
    ``(token_text, covered_text)`` pairs.
    """
    rows = []
    offset = 0
    data = source.encode('utf-8')
    for text, covered in pieces:
        raw = covered.encode('utf-8')
        start = data.index(raw, offset)
        rows.append((text, (start, start + len(raw)), logprob))
        offset = start + len(raw)
    return rows


class TestNormalize(unittest.TestCase):

    def test_markers(self):
        self.assertEqual(normalize_token('try_'), 'try')
        self.assertEqual(normalize_token('Ġif'), 'if')
        self.assertEqual(normalize_token('▁for'), 'for')
        self.assertEqual(normalize_token('##at'), 'at')
        self.assertEqual(normalize_token(' else'), 'else')
        self.assertEqual(normalize_token('float'), 'float')

    def test_interior_untouched(self):
        self.assertEqual(normalize_token('snake_case'), 'snake_case')


class TestAlign(unittest.TestCase):

    def setUp(self):
        self.source = 'try:\n    x = float(y)\nexcept ValueError:\n    pass\n'
        self.tree = parse(self.source)
        self.seq = tlp_from_pairs(self.source, tokens_of(self.source, [
            ('try_', 'try'), (':', ':'), ('\n    ', '\n    '), ('x', 'x'),
            (' =', ' ='), (' flo_', ' flo'), ('at', 'at'), ('(', '('),
            ('y', 'y'), (')', ')'),
        ]), snippet_id='fig')
        self.amap = align(self.seq, self.tree)
        self.terminals = {
            self.tree.text(t.span): t for t in terminals_in_order(self.tree)}

    def test_one_to_one(self):
        """The token ``try_`` maps to the ``try`` keyword only."""
        try_node = self.terminals['try']
        self.assertEqual(try_node.kind, 'try')
        self.assertEqual(self.amap.node_of(0), try_node.node_id)
        self.assertEqual(self.amap.per_terminal[try_node.node_id], (0,))

    def test_many_to_one(self):
        """``flo_`` and ``at`` share the terminal of ``float``."""
        float_node = self.terminals['float']
        self.assertEqual(self.amap.node_of(5), float_node.node_id)
        self.assertEqual(self.amap.node_of(6), float_node.node_id)
        self.assertEqual(self.amap.per_terminal[float_node.node_id], (5, 6))

    def test_whitespace_unaligned(self):
        self.assertEqual(self.amap.node_of(2), UNALIGNED)

    def test_leading_space(self):
        """`` =`` overlaps the ``=`` terminal with one byte."""
        self.assertEqual(self.amap.node_of(4), self.terminals['='].node_id)

    def test_source_mismatch(self):
        with self.assertRaises(SourceMismatch):
            align(self.seq, parse('x = 2\n'))

    def test_coverage(self):
        report = coverage_report(self.amap, self.tree)
        self.assertEqual(report.unaligned_token_count, 1)
        self.assertAlmostEqual(report.coverage_ratio, 9 / 10)
        # except, ValueError, :, pass are not tokenized
        self.assertGreaterEqual(report.uncovered_terminal_count, 4)

    def test_to_json(self):
        obj = self.amap.to_json(self.seq)
        self.assertEqual(obj['snippet_id'], 'fig')
        self.assertIsNone(obj['tokens'][2]['node_id'])
        self.assertEqual(obj['tokens'][0]['label'], 'try')


class TestCoverage(unittest.TestCase):

    def test_perfect(self):
        source = 'a = 1\n'
        seq = tlp_from_pairs(source, tokens_of(
            source, [('a', 'a'), ('=', '='), ('1', '1')]))
        report = coverage_report(align(seq, parse(source)), parse(source))
        self.assertEqual(tuple(report), (0, 0, 1.0))

    def test_one_whitespace_token(self):
        source = 'x = f(a, b) + 1'
        pieces = [(c, c) for c in
                  ('x', '=', 'f', '(', 'a', ',', 'b', ')', '+', '1')]
        pieces.insert(1, (' ', ' '))
        seq = tlp_from_pairs(source, tokens_of(source, pieces))
        tree = parse(source)
        report = coverage_report(align(seq, tree), tree)
        self.assertEqual(len(seq), 11)
        self.assertEqual(report.unaligned_token_count, 1)
        self.assertEqual(report.uncovered_terminal_count, 0)
        self.assertAlmostEqual(report.coverage_ratio, 10 / 11)

    def test_uncovered_comment(self):
        source = 'x = 1  # note\n'
        seq = tlp_from_pairs(source, tokens_of(
            source, [('x', 'x'), ('=', '='), ('1', '1')]))
        tree = parse(source)
        report = coverage_report(align(seq, tree), tree)
        self.assertEqual(report.unaligned_token_count, 0)
        self.assertGreaterEqual(report.uncovered_terminal_count, 1)

    def test_escaped_string(self):
        source = 's = "hello\\nworld"\n'
        seq = tlp_from_pairs(source, tokens_of(
            source, [('hello', 'hello'), ('world', 'world')]))
        tree = parse(source)
        amap = align(seq, tree)
        content = next(t for t in terminals_in_order(tree)
                       if t.kind == 'string_content')
        self.assertEqual(amap.node_of(0), content.node_id)
        self.assertEqual(amap.node_of(1), content.node_id)
        report = coverage_report(amap, tree)
        self.assertEqual(report.unaligned_token_count, 0)
        self.assertEqual(report.coverage_ratio, 1.0)

    def test_empty(self):
        seq = tlp_from_pairs('', [])
        tree = parse('')
        self.assertEqual(tuple(coverage_report(align(seq, tree), tree)),
                         (0, 0, 1.0))


class TestAgainstOracle(unittest.TestCase):

    def test_random_tokenizations(self):
        """Alignment equals the overlap matrix argmax and never maps a token
        to more than one terminal.
        """
        rng = np.random.default_rng(2024)
        for i in range(1000):
            source = random_snippet(rng, int(rng.integers(1, 4)))
            seq = random_tokenization(source, rng, max_len=8)
            tree = parse(source)
            amap = align(seq, tree)
            node_ids = [node_id for _, node_id in amap.entries]
            self.assertEqual(node_ids, brute_force_alignment(seq, tree))
            self.assertEqual(len(amap.entries), len(seq))
            listed = [i for v in amap.per_terminal.values() for i in v]
            self.assertEqual(len(listed), len(set(listed)))
            for node_id, indices in amap.per_terminal.items():
                self.assertEqual(list(indices), sorted(indices))


if __name__ == '__main__':
    unittest.main()
