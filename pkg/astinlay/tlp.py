"""Token-level predictions (TLP) of a language model over a snippet.

A :class:`TlpSequence` pairs every model token with its byte span in the
snippet and with the probability the model assigned to the realized token.
Sequences are built either from full logit rows
(:func:`tlp_from_distributions`) or from the realized-token log
probabilities most completion APIs return (:func:`tlp_from_pairs`).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import (
    Iterable, Iterator, Mapping, Optional, Sequence, Tuple, Union)

import numpy as np

from .errors import (
    EmptySequence, InputFormatError, MissingRealizedToken,
    ProbabilityOutOfRange, SpanOverlap, UnsortedSpans, ZeroProbability)
from .files import PathLike, atomic_write_text, dumps_jsonl, read_jsonl
from .syntax import Span

logger = logging.getLogger(__name__)

LOGPROB_TOLERANCE = 1e-6
PROBABILITY_TOLERANCE = 1e-9

SpanLike = Union[Span, Tuple[int, int]]


def as_span(span: SpanLike) -> Span:
    if isinstance(span, Span):
        return span
    start, end = span
    return Span(int(start), int(end))


@dataclass(frozen=True)
class TlpRecord:
    """Prediction for a single model token.

    `token_text` is kept exactly as the tokenizer produced it, subword
    markers included.
    """
    token_text: str
    span: Span
    probability: float
    logprob: float

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise ProbabilityOutOfRange(
                f'probability {self.probability} of token '
                f'{self.token_text!r} is outside [0, 1]')
        if abs(self.probability - min(math.exp(self.logprob), 1.0)) > \
                PROBABILITY_TOLERANCE:
            raise ProbabilityOutOfRange(
                f'probability {self.probability} does not match logprob '
                f'{self.logprob}')

    @classmethod
    def from_logprob(cls, token_text: str, span: SpanLike, logprob: float):
        if math.isnan(logprob) or logprob > LOGPROB_TOLERANCE:
            raise ProbabilityOutOfRange(
                f'logprob {logprob} of token {token_text!r} is not <= 0')
        # noise above 0 is kept, only the probability is capped
        logprob = float(logprob)
        return cls(token_text=token_text, span=as_span(span),
                   probability=min(math.exp(logprob), 1.0), logprob=logprob)


@dataclass(frozen=True)
class TlpSequence:
    """Ordered token-level predictions over `source`.

    Record spans are sorted, non-overlapping and lie within the UTF-8
    encoded source. `generated_span` marks the region the model produced
    itself (as opposed to the prompt), if known.
    """
    source: str
    records: Tuple[TlpRecord, ...]
    generated_span: Optional[Span] = None
    model_id: str = ''
    snippet_id: str = ''
    truncated: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'records', tuple(self.records))
        length = len(self.source.encode('utf-8'))
        check_ordering([r.span for r in self.records], length)
        if self.generated_span is not None:
            self.generated_span.check(length)

    def __len__(self):
        return len(self.records)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([r.probability for r in self.records], dtype=float)

    def truncate(self, max_tokens: int) -> 'TlpSequence':
        """Drop all records past `max_tokens`, flagging the result."""
        if len(self.records) <= max_tokens:
            return self
        return TlpSequence(
            source=self.source, records=self.records[:max_tokens],
            generated_span=self.generated_span, model_id=self.model_id,
            snippet_id=self.snippet_id, truncated=True)

    def to_json(self) -> dict:
        gen = self.generated_span
        return {
            'snippet_id': self.snippet_id,
            'model_id': self.model_id,
            'source': self.source,
            'generated_start': gen.start if gen is not None else None,
            'generated_end': gen.end if gen is not None else None,
            'tokens': [
                {'text': r.token_text, 'start': r.span.start,
                 'end': r.span.end, 'logprob': r.logprob}
                for r in self.records
            ],
        }


def _optional_span(span: Optional[SpanLike]) -> Optional[Span]:
    return None if span is None else as_span(span)


def check_ordering(spans: Sequence[Span], length: int):
    """Validate that `spans` are sorted, disjoint and inside the source.
    """
    previous = None
    for span in spans:
        span.check(length)
        if previous is not None:
            if span.start < previous.start:
                raise UnsortedSpans(
                    f'span [{span.start}, {span.end}) starts before '
                    f'[{previous.start}, {previous.end})')
            if span.start < previous.end:
                raise SpanOverlap(
                    f'spans [{previous.start}, {previous.end}) and '
                    f'[{span.start}, {span.end}) overlap')
        previous = span


def log_softmax(logits: Mapping[str, float]) -> dict:
    """Log of the softmax over `logits`, stabilized by max subtraction."""
    keys = list(logits)
    values = np.array([logits[k] for k in keys], dtype=float)
    shifted = values - values.max()
    log_norm = np.log(np.sum(np.exp(shifted)))
    return dict(zip(keys, (shifted - log_norm).tolist()))


def softmax(logits: Mapping[str, float]) -> dict:
    return {k: math.exp(v) for k, v in log_softmax(logits).items()}


def tlp_from_distributions(
        source: str,
        rows: Iterable[Tuple[str, SpanLike, Mapping[str, float], str]],
        model_id: str = '',
        generated_span: Optional[SpanLike] = None,
        snippet_id: str = '') -> TlpSequence:
    """Build a sequence from non-normalized logit rows.

    Parameters
    ==========
    source:
        The snippet text the token spans refer to.
    rows:
        One ``(token_text, span, logits, realized_token)`` tuple per token.
        `logits` maps candidate tokens to non-normalized log-probabilities
        and must contain `realized_token`.

    Returns
    =======
    TlpSequence:
        Records carry the softmax probability of the realized token.
    """
    records = []
    for i, (token_text, span, logits, realized) in enumerate(rows):
        if not logits or realized not in logits:
            raise MissingRealizedToken(
                f'row {i}: realized token {realized!r} not in logits')
        logprob = log_softmax(logits)[realized]
        records.append(TlpRecord.from_logprob(token_text, span, logprob))
    return TlpSequence(
        source=source, records=tuple(records),
        generated_span=_optional_span(generated_span),
        model_id=model_id, snippet_id=snippet_id)


def tlp_from_pairs(
        source: str,
        rows: Iterable[Tuple[str, SpanLike, float]],
        model_id: str = '',
        generated_span: Optional[SpanLike] = None,
        snippet_id: str = '') -> TlpSequence:
    """Build a sequence from ``(token_text, span, logprob)`` rows.

    Raises :class:`SpanOverlap`, :class:`UnsortedSpans` or
    :class:`ProbabilityOutOfRange` for invalid rows.
    """
    records = tuple(
        TlpRecord.from_logprob(text, span, logprob)
        for text, span, logprob in rows)
    return TlpSequence(
        source=source, records=records,
        generated_span=_optional_span(generated_span),
        model_id=model_id, snippet_id=snippet_id)


def cross_entropy(seq: TlpSequence) -> float:
    """Mean negative log-probability (natural log) over the records of `seq`.
    """
    if not seq.records:
        raise EmptySequence(f'no tokens in snippet {seq.snippet_id!r}')
    losses = []
    for r in seq.records:
        if r.probability <= 0.0 or math.isinf(r.logprob):
            raise ZeroProbability(
                f'token {r.token_text!r} at {r.span.start} has probability 0')
        losses.append(-min(r.logprob, 0.0))
    return float(np.mean(losses))


def _generated(obj: dict) -> Optional[Span]:
    start, end = obj.get('generated_start'), obj.get('generated_end')
    if start is None or end is None:
        return None
    return Span(int(start), int(end))


def sequence_from_json(obj: dict) -> TlpSequence:
    """Build a :class:`TlpSequence` from one TLP JSON lines object.

    Tokens either carry a ``logprob`` or a ``logits`` map together with the
    ``realized`` token.
    """
    try:
        source = obj['source']
        tokens = obj['tokens']
        common = dict(
            model_id=str(obj.get('model_id', '')),
            generated_span=_generated(obj),
            snippet_id=str(obj.get('snippet_id', '')))
        if tokens and 'logits' in tokens[0]:
            return tlp_from_distributions(
                source,
                [(t['text'], (t['start'], t['end']), t['logits'],
                  t['realized']) for t in tokens],
                **common)
        return tlp_from_pairs(
            source,
            [(t['text'], (t['start'], t['end']), float(t['logprob']))
             for t in tokens],
            **common)
    except (KeyError, TypeError, ValueError) as e:
        raise InputFormatError(
            f'malformed TLP record {obj.get("snippet_id")!r}: {e!r}') from e


def read_tlp_jsonl(path: PathLike) -> Iterator[TlpSequence]:
    for obj in read_jsonl(path):
        yield sequence_from_json(obj)


def write_tlp_jsonl(path: PathLike, sequences: Iterable[TlpSequence]):
    atomic_write_text(path, dumps_jsonl(s.to_json() for s in sequences))


def load_tlp_index(path: PathLike) -> dict:
    """Map snippet id to :class:`TlpSequence` for all sequences in `path`.

    Later lines win if a snippet id repeats.
    """
    index = {}
    for seq in read_tlp_jsonl(path):
        if seq.snippet_id in index:
            logger.warning('duplicate TLP record for snippet %r, keeping the '
                           'last one', seq.snippet_id)
        index[seq.snippet_id] = seq
    return index
