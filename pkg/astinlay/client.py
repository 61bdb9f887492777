"""Token-level predictions from an OpenAI-compatible completions endpoint.

The snippet is sent as prompt with ``echo`` enabled so that the endpoint
scores every prompt token. Hosted endpoints return token texts but no
offsets; the byte span of each token is recovered by concatenating the
returned texts against the snippet.
"""
import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import requests

from .align import normalize_token
from .errors import (
    AstInLayError, AuthError, EndpointError, LogprobsUnsupported,
    SpanReconstructionFailure)
from .files import atomic_write_text
from .syntax import Span
from .tlp import TlpRecord, TlpSequence

logger = logging.getLogger(__name__)

DEFAULT_JOBS = 4
DEFAULT_PROMPT_FRACTION = 0.5

_TRANSIENT_STATUS = {408, 409, 425, 429}
_BYTES_PREFIX = 'bytes:'


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to request token log-probabilities.

    The api key is never held by the configuration, it is read from the
    environment variable named by `api_key_env` at request time.
    """
    base_url: str
    model: str
    api_key_env: str = 'ASTINLAY_API_KEY'
    timeout: float = 60
    max_tokens: int = 1024
    echo: bool = True
    max_retries: int = 3
    backoff: float = 1.0
    cache_dir: Optional[str] = None

    def __post_init__(self):
        if not self.base_url:
            raise ValueError('base_url must not be empty')
        if self.max_tokens < 1:
            raise ValueError(f'max_tokens must be >= 1, got {self.max_tokens}')
        if self.max_retries < 1:
            raise ValueError(
                f'max_retries must be >= 1, got {self.max_retries}')

    @property
    def url(self) -> str:
        return self.base_url.rstrip('/') + '/completions'

    def headers(self) -> dict:
        key = os.environ.get(self.api_key_env, '')
        return {'Authorization': f'Bearer {key}'} if key else {}


def prompt_length(source: str, fraction: float = DEFAULT_PROMPT_FRACTION
                  ) -> int:
    """Byte offset splitting `source` into prompt and generated part.

    The cut is moved back to the start of the line it falls into.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f'fraction must lie within [0, 1], got {fraction}')
    data = source.encode('utf-8')
    cut = int(len(data) * fraction)
    if cut >= len(data):
        return len(data)
    return data.rfind(b'\n', 0, cut) + 1


def _payload(cfg: EndpointConfig, source: str, prompt_len: int) -> dict:
    if cfg.echo:
        prompt, max_tokens = source, 1
    else:
        prompt = source.encode('utf-8')[:prompt_len].decode('utf-8')
        max_tokens = cfg.max_tokens
    return {'model': cfg.model, 'prompt': prompt, 'max_tokens': max_tokens,
            'temperature': 0, 'logprobs': 1, 'echo': cfg.echo}


def cache_key(cfg: EndpointConfig, source: str, prompt_len: int) -> str:
    """sha256 over model, snippet and request parameters."""
    payload = _payload(cfg, source, prompt_len)
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


class ResponseCache:
    """Raw endpoint responses stored as ``<key>.json`` below `directory`."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f'{key}.json'

    def get(self, key: str) -> Optional[dict]:
        path = self._path(key)
        if not path.exists():
            return None
        try:
            with open(path, 'r', encoding='utf-8') as fobj:
                return json.load(fobj)
        except (OSError, json.JSONDecodeError) as e:
            logger.warning('ignoring unreadable cache entry %s: %s', path, e)
            return None

    def put(self, key: str, response: dict):
        with self._lock:
            atomic_write_text(self._path(key),
                              json.dumps(response, sort_keys=True))


def post_completions(session: requests.Session, cfg: EndpointConfig,
                     payload: dict) -> dict:
    """POST `payload`, retrying transient failures with exponential backoff.
    """
    last = None
    for attempt in range(cfg.max_retries):
        try:
            resp = session.post(cfg.url, json=payload, headers=cfg.headers(),
                                timeout=cfg.timeout)
        except (requests.ConnectionError, requests.Timeout) as e:
            last = f'{type(e).__name__}'
            logger.warning('request to %s failed (attempt %d): %s', cfg.url,
                           attempt + 1, last)
        else:
            if resp.status_code in (401, 403):
                raise AuthError(
                    f'endpoint {cfg.url} rejected the credentials '
                    f'(HTTP {resp.status_code}), check ${cfg.api_key_env}')
            if resp.ok:
                try:
                    return resp.json()
                except ValueError as e:
                    raise EndpointError(
                        f'endpoint {cfg.url} returned no JSON') from e
            last = f'HTTP {resp.status_code}'
            if resp.status_code < 500 and \
                    resp.status_code not in _TRANSIENT_STATUS:
                raise EndpointError(f'endpoint {cfg.url} answered {last}')
            logger.warning('request to %s failed (attempt %d): %s', cfg.url,
                           attempt + 1, last)
        if attempt < cfg.max_retries - 1:
            time.sleep(cfg.backoff * 2 ** attempt)
    raise EndpointError(
        f'endpoint {cfg.url} failed {cfg.max_retries} times, last: {last}')


def _token_logprobs(response: dict) -> Tuple[List[str], List[Optional[float]]]:
    try:
        logprobs = response['choices'][0].get('logprobs')
    except (KeyError, IndexError, TypeError, AttributeError):
        raise LogprobsUnsupported('response carries no choices') from None
    if not logprobs or logprobs.get('tokens') is None or \
            logprobs.get('token_logprobs') is None:
        raise LogprobsUnsupported(
            'endpoint does not expose token log-probabilities')
    tokens, values = logprobs['tokens'], logprobs['token_logprobs']
    if len(tokens) != len(values):
        raise LogprobsUnsupported(
            f'{len(tokens)} tokens but {len(values)} log-probabilities')
    return list(tokens), list(values)


def _token_bytes(text: str) -> bytes:
    if text.startswith(_BYTES_PREFIX):
        # partial UTF-8 sequences, e.g. 'bytes:\\xe2\\x80'
        escaped = text[len(_BYTES_PREFIX):]
        return escaped.encode('latin-1').decode('unicode_escape') \
            .encode('latin-1')
    return text.encode('utf-8')


def _candidates(text: str) -> List[bytes]:
    exact = _token_bytes(text)
    candidates = [exact]
    for marker in ('Ġ', '▁'):
        if text.startswith(marker):
            candidates.append((' ' + text[len(marker):]).encode('utf-8'))
    normalized = normalize_token(text).encode('utf-8')
    if normalized not in candidates:
        candidates.append(normalized)
    return candidates


def reconstruct_spans(source: str, tokens: Sequence[str],
                      start: int = 0) -> List[Optional[Span]]:
    """Byte span of every token when concatenated from `start` on.

    A token that does not match the source literally is retried with its
    subword markers removed, skipping whitespace in the source in front of
    it. Tokens past the end of the source get a ``None`` span.

    Raises :class:`SpanReconstructionFailure` when a token matches in no
    way or the tokens stop before the end of the source.
    """
    data = source.encode('utf-8')
    offset = start
    spans = []
    for i, text in enumerate(tokens):
        if offset >= len(data):
            spans.append(None)
            continue
        for candidate in _candidates(text):
            if not candidate:
                # pure marker tokens cover nothing
                spans.append(Span(offset, offset))
                break
            if data.startswith(candidate, offset):
                spans.append(Span(offset, offset + len(candidate)))
                offset += len(candidate)
                break
            skipped = offset
            while skipped < len(data) and data[skipped:skipped + 1].isspace():
                skipped += 1
            if skipped > offset and data.startswith(candidate, skipped):
                spans.append(Span(offset, skipped + len(candidate)))
                offset = skipped + len(candidate)
                break
        else:
            raise SpanReconstructionFailure(
                f'token {i} {text!r} does not continue the source at byte '
                f'{offset}')
    if data[offset:].strip():
        raise SpanReconstructionFailure(
            f'tokens end at byte {offset} of {len(data)}')
    return spans


def sequence_from_response(
        response: dict, cfg: EndpointConfig, source: str, prompt_len: int,
        snippet_id: str = '') -> TlpSequence:
    """Turn a completions response into a :class:`TlpSequence`."""
    tokens, values = _token_logprobs(response)
    start = 0 if cfg.echo else prompt_len
    spans = reconstruct_spans(source, tokens, start)
    records = []
    for text, span, logprob in zip(tokens, spans, values):
        if span is None or len(span) == 0:
            continue
        if logprob is None:
            # the very first prompt token has no context to be scored in
            logger.debug('token %r of %r has no log-probability', text,
                         snippet_id)
            continue
        records.append(TlpRecord.from_logprob(text, span, float(logprob)))
    length = len(source.encode('utf-8'))
    seq = TlpSequence(
        source=source, records=tuple(records),
        generated_span=Span(prompt_len, length), model_id=cfg.model,
        snippet_id=snippet_id)
    if len(seq) > cfg.max_tokens:
        logger.warning('snippet %r has %d tokens, truncating to %d',
                       snippet_id, len(seq), cfg.max_tokens)
        seq = seq.truncate(cfg.max_tokens)
    return seq


def fetch_tlp(
        cfg: EndpointConfig,
        source: str,
        prompt_len: int,
        snippet_id: str = '',
        session: Optional[requests.Session] = None,
        cache: Optional[ResponseCache] = None) -> TlpSequence:
    """Request token log-probabilities for `source`.

    Parameters
    ==========
    cfg:
        The :class:`EndpointConfig` of the completions endpoint.
    source:
        The complete snippet.
    prompt_len:
        Byte offset where the generated part of the snippet starts; the
        returned sequence has ``generated_span = [prompt_len, end)``.
    session:
        A ``requests.Session`` to reuse, a new one is opened otherwise.
    cache:
        An optional :class:`ResponseCache` consulted before the endpoint.

    Returns
    =======
    TlpSequence:
        Spans reconstructed from the returned token texts.
    """
    length = len(source.encode('utf-8'))
    if not 0 <= prompt_len <= length:
        raise ValueError(f'prompt_len {prompt_len} outside [0, {length}]')
    if cache is None and cfg.cache_dir:
        cache = ResponseCache(cfg.cache_dir)
    key = cache_key(cfg, source, prompt_len)
    response = cache.get(key) if cache is not None else None
    if response is None:
        payload = _payload(cfg, source, prompt_len)
        if session is None:
            with requests.Session() as own:
                response = post_completions(own, cfg, payload)
        else:
            response = post_completions(session, cfg, payload)
        seq = sequence_from_response(response, cfg, source, prompt_len,
                                     snippet_id)
        if cache is not None:
            cache.put(key, response)
        return seq
    logger.debug('cache hit for snippet %r', snippet_id)
    return sequence_from_response(response, cfg, source, prompt_len,
                                  snippet_id)


def fetch_corpus(
        cfg: EndpointConfig,
        snippets: Iterable[Tuple[str, str]],
        prompt_fraction: float = DEFAULT_PROMPT_FRACTION,
        jobs: int = DEFAULT_JOBS) -> Tuple[List[TlpSequence], List[str]]:
    """Fetch ``(snippet_id, source)`` pairs with at most `jobs` requests in
    flight.

    Returns the sequences in input order together with the ids of snippets
    whose spans could not be reconstructed. Authentication failures and
    endpoints without log-probabilities abort the whole run.
    """
    cache = ResponseCache(cfg.cache_dir) if cfg.cache_dir else None
    local = threading.local()

    def work(item):
        snippet_id, source = item
        if not hasattr(local, 'session'):
            local.session = requests.Session()
        try:
            return fetch_tlp(cfg, source, prompt_length(source, prompt_fraction),
                             snippet_id, local.session, cache)
        except (AuthError, LogprobsUnsupported):
            raise
        except AstInLayError as e:
            logger.warning('skipping snippet %r: %s', snippet_id, e)
            return snippet_id

    items = list(snippets)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(work, items))
    sequences = [r for r in results if isinstance(r, TlpSequence)]
    failed = [r for r in results if isinstance(r, str)]
    logger.info('fetched %d of %d snippets from %s', len(sequences),
                len(items), cfg.model)
    return sequences, failed
