import unittest

import numpy as np

from astinlay.errors import InvalidSpan
from astinlay.helpers import dfs_metrics, random_snippet
from astinlay.syntax import (
    Span, count_loc, parse, structural_metrics, terminals_in_order)


class TestSpan(unittest.TestCase):

    def test_invalid(self):
        with self.assertRaises(InvalidSpan):
            Span(-1, 2)
        with self.assertRaises(InvalidSpan):
            Span(3, 2)
        with self.assertRaises(InvalidSpan):
            Span(0, 5).check(4)

    def test_overlap(self):
        a, b = Span(0, 4), Span(2, 6)
        self.assertEqual(a.overlap(b), 2)
        self.assertTrue(a.intersects(b))
        self.assertFalse(Span(0, 2).intersects(Span(2, 4)))
        self.assertTrue(Span(0, 6).contains(b))
        self.assertEqual(len(Span(3, 3)), 0)


class TestParse(unittest.TestCase):

    def test_if_statement(self):
        tree = parse('if x:\n    y = 1')
        self.assertEqual(tree.root.kind, 'module')
        self.assertFalse(tree.has_errors)
        self.assertIn('if_statement', {n.kind for n in tree.nodes()})

    def test_empty(self):
        tree = parse('')
        self.assertEqual(tree.root.kind, 'module')
        self.assertEqual(tree.root.children, ())
        self.assertFalse(tree.has_errors)
        self.assertEqual(terminals_in_order(tree), [])

    def test_malformed(self):
        """Syntax errors yield a tree with the error flag set."""
        tree = parse('def f(:')
        self.assertTrue(tree.has_errors)
        self.assertEqual(tree.root.kind, 'module')

    def test_root_covers_source(self):
        source = '\n\n# leading\nx = 1\n\n'
        tree = parse(source)
        self.assertEqual(tree.root.span, Span(0, len(source)))

    def test_children_inside_parent(self):
        tree = parse(random_snippet(np.random.default_rng(3), 6))
        for node in tree.nodes():
            for child in node.children:
                self.assertTrue(node.span.contains(child.span))
            for a, b in zip(node.children, node.children[1:]):
                self.assertLessEqual(a.span.end, b.span.start)

    def test_node_ids(self):
        tree = parse('a = [1, 2]\n')
        ids = [n.node_id for n in tree.nodes()]
        self.assertEqual(ids, list(range(len(ids))))
        self.assertEqual(len(tree), len(ids))
        for node in tree.nodes():
            self.assertIs(tree.node(node.node_id), node)

    def test_byte_spans(self):
        """Spans count bytes of the UTF-8 encoding, not characters."""
        tree = parse('é = 1\n')
        first = terminals_in_order(tree)[0]
        self.assertEqual(first.kind, 'identifier')
        self.assertEqual(first.span, Span(0, 2))
        self.assertEqual(tree.text(first.span), 'é')


class TestTerminals(unittest.TestCase):

    def test_assignment(self):
        tree = parse('a=1')
        terminals = terminals_in_order(tree)
        self.assertEqual([t.kind for t in terminals],
                         ['identifier', '=', 'integer'])
        self.assertEqual([tree.text(t.span) for t in terminals],
                         ['a', '=', '1'])

    def test_comment(self):
        tree = parse('x # c')
        self.assertIn('comment', [t.kind for t in terminals_in_order(tree)])

    def test_escaped_string(self):
        tree = parse('s = "hello\\nworld"\n')
        terminals = terminals_in_order(tree)
        self.assertEqual([t.kind for t in terminals], [
            'identifier', '=', 'string_start', 'string_content',
            'string_end'])
        self.assertEqual(tree.text(terminals[3].span), 'hello\\nworld')

    def test_bytes_escape(self):
        tree = parse('b"\\x00abc"\n')
        texts = [tree.text(t.span) for t in terminals_in_order(tree)]
        self.assertIn('\\x00abc', texts)

    def test_text_covered(self):
        """Every non-whitespace byte lies inside some terminal."""
        rng = np.random.default_rng(5)
        sources = [
            's = "a\\tb" + \'\\x41c\'\n',
            'f"{x}\\n{y} z"\n',
            '"""doc\\\\ line\\n"""\n',
        ] + [random_snippet(rng, 6) for _ in range(20)]
        for source in sources:
            tree = parse(source)
            data = source.encode('utf-8')
            covered = np.zeros(len(data), dtype=bool)
            for t in terminals_in_order(tree):
                covered[t.span.start:t.span.end] = True
            for i, byte in enumerate(data):
                if not chr(byte).isspace():
                    self.assertTrue(covered[i], (source, i))

    def test_sorted_and_disjoint(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            tree = parse(random_snippet(rng))
            terminals = terminals_in_order(tree)
            for a, b in zip(terminals, terminals[1:]):
                self.assertLessEqual(a.span.end, b.span.start)
            self.assertTrue(all(t.is_terminal for t in terminals))


class TestMetrics(unittest.TestCase):

    def test_straight_line(self):
        metrics = structural_metrics(parse('x = 1'))
        self.assertEqual(metrics.cyclomatic_complexity, 1)
        self.assertEqual(metrics.loc, 1)
        # module, expression_statement, assignment, identifier, =, integer
        self.assertEqual(metrics.node_count, 6)
        self.assertEqual(metrics.ast_levels, 4)
        self.assertEqual(metrics.whitespace_count, 2)

    def test_if_else(self):
        tree = parse('if a:\n    b\nelse:\n    c')
        self.assertEqual(structural_metrics(tree).cyclomatic_complexity, 2)

    def test_decisions(self):
        source = 'if a and b or c:\n    pass\nelif d:\n    pass\n'
        # if, elif and two boolean operators
        self.assertEqual(
            structural_metrics(parse(source)).cyclomatic_complexity, 5)

    def test_against_dfs(self):
        """Iterative metrics agree with a recursive traversal."""
        rng = np.random.default_rng(5)
        for _ in range(30):
            tree = parse(random_snippet(rng, int(rng.integers(1, 8))))
            levels, count, decisions = dfs_metrics(tree.root)
            metrics = structural_metrics(tree)
            self.assertEqual(metrics.ast_levels, levels)
            self.assertEqual(metrics.node_count, count)
            self.assertEqual(metrics.cyclomatic_complexity, 1 + decisions)

    def test_nested_depth(self):
        for depth in (1, 5, 20):
            source = 'x = ' + '(' * depth + '1' + ')' * depth + '\n'
            tree = parse(source)
            self.assertEqual(structural_metrics(tree).ast_levels,
                             dfs_metrics(tree.root)[0])

    def test_loc(self):
        self.assertEqual(count_loc(''), 0)
        self.assertEqual(count_loc('a\nb'), 2)
        self.assertEqual(count_loc('a\nb\n'), 2)

    def test_confounders(self):
        metrics = structural_metrics(parse('x = 1')).with_sequence_size(7)
        self.assertEqual(metrics.confounders(), (1, 4, 6, 7))


if __name__ == '__main__':
    unittest.main()
