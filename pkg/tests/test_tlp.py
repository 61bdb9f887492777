import json
import math
import os
import tempfile
import unittest

import numpy as np

from astinlay.errors import (
    EmptySequence, InputFormatError, InvalidSpan, MissingRealizedToken,
    ProbabilityOutOfRange, SpanOverlap, UnsortedSpans, ZeroProbability)
from astinlay.syntax import Span
from astinlay.tlp import (
    TlpRecord, TlpSequence, cross_entropy, load_tlp_index, log_softmax,
    read_tlp_jsonl, sequence_from_json, softmax, tlp_from_distributions,
    tlp_from_pairs, write_tlp_jsonl)


class TestDistributions(unittest.TestCase):

    def test_softmax(self):
        seq = tlp_from_distributions(
            'x', [('x', (0, 1), {'a': 1.0, 'b': 2.0, 'c': 3.0}, 'c')])
        self.assertAlmostEqual(seq.records[0].probability, 0.66524, places=5)

    def test_symmetric(self):
        self.assertAlmostEqual(softmax({'a': 5, 'b': 5})['a'], 0.5)

    def test_singleton(self):
        seq = tlp_from_distributions('x', [('x', (0, 1), {'x': -7.0}, 'x')])
        self.assertEqual(seq.records[0].probability, 1.0)

    def test_large_logits(self):
        """Max subtraction keeps huge logits finite."""
        logp = log_softmax({'a': 1000.0, 'b': 999.0})
        self.assertTrue(all(math.isfinite(v) for v in logp.values()))
        self.assertAlmostEqual(math.exp(logp['a']) + math.exp(logp['b']), 1)

    def test_missing_realized(self):
        with self.assertRaises(MissingRealizedToken):
            tlp_from_distributions('x', [('x', (0, 1), {'a': 1.0}, 'x')])
        with self.assertRaises(MissingRealizedToken):
            tlp_from_distributions('x', [('x', (0, 1), {}, 'x')])


class TestPairs(unittest.TestCase):

    def test_probability(self):
        seq = tlp_from_pairs('x', [('x', (0, 1), math.log(0.5))])
        self.assertAlmostEqual(seq.records[0].probability, 0.5)
        seq = tlp_from_pairs('x', [('x', (0, 1), 0.0)])
        self.assertEqual(seq.records[0].probability, 1.0)

    def test_overlap(self):
        with self.assertRaises(SpanOverlap):
            tlp_from_pairs('abc', [('ab', (0, 2), -0.1), ('bc', (1, 3), -0.1)])

    def test_unsorted(self):
        with self.assertRaises(UnsortedSpans):
            tlp_from_pairs('abc', [('c', (2, 3), -0.1), ('a', (0, 1), -0.1)])

    def test_out_of_range(self):
        with self.assertRaises(ProbabilityOutOfRange):
            tlp_from_pairs('a', [('a', (0, 1), 0.5)])
        with self.assertRaises(ProbabilityOutOfRange):
            tlp_from_pairs('a', [('a', (0, 1), float('nan'))])
        with self.assertRaises(ProbabilityOutOfRange):
            TlpRecord('a', Span(0, 1), 1.5, 0.0)

    def test_rounding_noise(self):
        """Tiny positive log-probabilities are kept, at certainty."""
        seq = tlp_from_pairs(
            'ab', [('a', (0, 1), 1e-9), ('b', (1, 2), 5e-7)])
        self.assertEqual(seq.records[0].probability, 1.0)
        self.assertEqual(seq.records[0].logprob, 1e-9)
        self.assertEqual(seq.records[1].logprob, 5e-7)
        self.assertEqual(cross_entropy(seq), 0.0)

    def test_span_outside_source(self):
        with self.assertRaises(InvalidSpan):
            tlp_from_pairs('a', [('ab', (0, 2), -0.1)])

    def test_truncate(self):
        seq = tlp_from_pairs(
            'abc', [(c, (i, i + 1), -0.1) for i, c in enumerate('abc')])
        self.assertIs(seq.truncate(3), seq)
        short = seq.truncate(2)
        self.assertEqual(len(short), 2)
        self.assertTrue(short.truncated)


class TestCrossEntropy(unittest.TestCase):

    def test_perfect(self):
        seq = tlp_from_pairs('ab', [('a', (0, 1), 0.0), ('b', (1, 2), 0.0)])
        self.assertEqual(cross_entropy(seq), 0.0)

    def test_mean(self):
        seq = tlp_from_pairs('ab', [('a', (0, 1), -1.0), ('b', (1, 2), -3.0)])
        self.assertAlmostEqual(cross_entropy(seq), 2.0)

    def test_empty(self):
        with self.assertRaises(EmptySequence):
            cross_entropy(TlpSequence('', ()))

    @staticmethod
    def per_char(source, probabilities):
        return tlp_from_pairs(source, [
            (c, (i, i + 1), math.log(p))
            for i, (c, p) in enumerate(zip(source, probabilities))])

    def test_order_invariant(self):
        rng = np.random.default_rng(2)
        source = 'abcdefgh'
        for _ in range(10):
            probs = rng.uniform(0.01, 1.0, size=len(source))
            self.assertAlmostEqual(
                cross_entropy(self.per_char(source, probs)),
                cross_entropy(self.per_char(source, rng.permutation(probs))))

    def test_decreases_with_probability(self):
        rng = np.random.default_rng(3)
        source = 'abcdef'
        for _ in range(10):
            probs = rng.uniform(0.01, 0.9, size=len(source))
            higher = probs.copy()
            i = int(rng.integers(len(source)))
            higher[i] = rng.uniform(probs[i] + 0.05, 1.0)
            self.assertLess(cross_entropy(self.per_char(source, higher)),
                            cross_entropy(self.per_char(source, probs)))

    def test_zero_probability(self):
        seq = tlp_from_pairs('a', [('a', (0, 1), float('-inf'))])
        with self.assertRaises(ZeroProbability):
            cross_entropy(seq)


class TestJsonLines(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, 'tlp.jsonl')
        self.seq = tlp_from_pairs(
            'é = 1\n',
            [('é', (0, 2), -0.2), (' =', (2, 4), -0.1), (' 1', (4, 6), -1.5)],
            model_id='m', generated_span=(4, 7), snippet_id='s1')

    def tearDown(self):
        self.tmp.cleanup()

    def test_write_read(self):
        write_tlp_jsonl(self.path, [self.seq])
        (back,) = list(read_tlp_jsonl(self.path))
        self.assertEqual(back, self.seq)
        self.assertEqual(back.generated_span, Span(4, 7))

    def test_positive_logprob_round_trip(self):
        seq = tlp_from_pairs(
            'ab', [('a', (0, 1), 3e-7), ('b', (1, 2), -0.25)])
        write_tlp_jsonl(self.path, [seq])
        (back,) = list(read_tlp_jsonl(self.path))
        self.assertEqual([r.logprob for r in back.records], [3e-7, -0.25])
        self.assertEqual(back, seq)

    def test_logits_variant(self):
        obj = {'snippet_id': 's', 'model_id': 'm', 'source': 'x',
               'tokens': [{'text': 'x', 'start': 0, 'end': 1,
                           'logits': {'x': 2.0, 'y': 2.0}, 'realized': 'x'}]}
        seq = sequence_from_json(obj)
        self.assertAlmostEqual(seq.records[0].probability, 0.5)

    def test_malformed(self):
        with self.assertRaises(InputFormatError):
            sequence_from_json({'snippet_id': 's', 'tokens': []})
        with open(self.path, 'w') as fobj:
            fobj.write('{"snippet_id": \n')
        with self.assertRaises(InputFormatError):
            list(read_tlp_jsonl(self.path))

    def test_duplicate_ids(self):
        other = tlp_from_pairs('y', [('y', (0, 1), -0.3)], snippet_id='s1')
        with open(self.path, 'w') as fobj:
            for seq in (self.seq, other):
                fobj.write(json.dumps(seq.to_json()) + '\n')
        with self.assertLogs('astinlay.tlp', level='WARNING'):
            index = load_tlp_index(self.path)
        self.assertEqual(index['s1'].source, 'y')


if __name__ == '__main__':
    unittest.main()
