"""Shared fixture builders for the test suite."""
import json

import pytest

from refscore.corpus import Article, ArticleSet


def make_article(i, uoa=1, title=None, abstract=None, doi="10.1/x"):
    return Article(
        id=f"u{uoa}-a{i:03d}",
        uoa=uoa,
        title=title if title is not None else f"Study {i} of unit {uoa}",
        abstract=abstract if abstract is not None else f"Abstract body number {i}. " * 3,
        doi=doi,
    )


def make_set(n=12, uoas=(1, 2)):
    arts = []
    for uoa in uoas:
        for i in range(n):
            arts.append(make_article(i, uoa=uoa))
    return ArticleSet(arts)


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


@pytest.fixture
def pool_rows():
    """A complete 2-exemplars-per-(uoa, star) pool for uoas 1 and 2."""
    rows = []
    for uoa in (1, 2):
        for star in (1, 2, 3, 4):
            for copy in (0, 1):
                rows.append(
                    {
                        "id": f"ex-u{uoa}-s{star}-{copy}",
                        "uoa": uoa,
                        "doi": "10.1/ex",
                        "title": f"Exemplar {star} star ({copy}) for unit {uoa}",
                        "abstract": f"Worked exemplar abstract at level {star}, copy {copy}.",
                        "star": star,
                    }
                )
    return rows
