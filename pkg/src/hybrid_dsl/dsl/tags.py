from __future__ import annotations

from ..errors import MultipleTags, NoTag, UnterminatedTag

OPEN_TAG = "<query>"
CLOSE_TAG = "</query>"


def extract_tagged_query(output: str) -> str:
    """Return the body of the single ``<query>...</query>`` block in ``output``.

    Tags are matched case-sensitively. Text outside the block, including other
    tags, is ignored.
    """
    opens = output.count(OPEN_TAG)
    closes = output.count(CLOSE_TAG)
    if opens == 0:
        raise NoTag()
    if opens > 1 or closes > 1:
        raise MultipleTags(max(opens, closes))
    start = output.index(OPEN_TAG) + len(OPEN_TAG)
    end = output.find(CLOSE_TAG, start)
    if end < 0:
        raise UnterminatedTag()
    return output[start:end]


def wrap_query(body: str) -> str:
    return f"{OPEN_TAG}{body}{CLOSE_TAG}"
