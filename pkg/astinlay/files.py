"""Reading JSON lines and writing output files atomically."""
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, Union

from .errors import InputFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


def read_jsonl(path: PathLike) -> Iterator[dict]:
    """Yield one object per non-empty line of `path`.

    Raises :class:`InputFormatError` naming the line that is not a JSON
    object.
    """
    with open(path, 'r', encoding='utf-8') as fobj:
        for lineno, line in enumerate(fobj, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputFormatError(f'{path}:{lineno}: {e.msg}') from e
            if not isinstance(obj, dict):
                raise InputFormatError(
                    f'{path}:{lineno}: expected a JSON object')
            yield obj


def atomic_write_text(path: PathLike, text: str):
    """Write `text` to `path` through a temporary file and a rename.

    Readers never observe a partially written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(
        dir=str(path.parent), prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as fobj:
            fobj.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.remove(tmp)
        except OSError:
            pass
        raise
    logger.debug('wrote %s', path)


def dumps_jsonl(objects: Iterable[dict]) -> str:
    return ''.join(
        json.dumps(obj, ensure_ascii=False, sort_keys=True) + '\n'
        for obj in objects)


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + '\n'
