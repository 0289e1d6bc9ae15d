"""Page preprocessing: boilerplate removal and region linearization.

Structured pages arrive as an ordered list of regions (prose, tables,
diagram text). Boilerplate regions are dropped, tabular and diagram text
is linearized row by row from top-left to bottom-right, and the surviving
regions are joined with a `---` delimiter line so downstream chunks keep
region boundaries visible.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from mrrag.corpus.releases import ReleaseId

logger = logging.getLogger(__name__)

REGION_DELIMITER = "---"

TEXT_REGION = "text"
TABLE_REGION = "table"
FIGURE_REGION = "figure"
REGION_KINDS = (TEXT_REGION, TABLE_REGION, FIGURE_REGION)

# Conservative defaults; deployments list their own patterns in config.
DEFAULT_STRIP_PATTERNS = (
    r"(?im)^\s*copyright\b",
    r"(?im)^\s*confidential\b",
    r"(?im)^\s*page \d+( of \d+)?\s*$",
)


@dataclass(frozen=True)
class Cell:
    """One positioned text cell of a table or diagram."""

    row: int
    col: int
    text: str


@dataclass(frozen=True)
class PageRegion:
    kind: str
    text: str = ""
    cells: tuple[Cell, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in REGION_KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")


@dataclass(frozen=True)
class RawPage:
    doc_id: str
    doc_title: str
    release: ReleaseId
    page_index: int
    regions: tuple[PageRegion, ...] = ()


@dataclass(frozen=True)
class DocumentPage:
    """A cleaned page; ``text`` may be empty when nothing survives."""

    doc_id: str
    doc_title: str
    release: ReleaseId
    page_index: int
    text: str

    def __post_init__(self) -> None:
        if self.page_index < 0:
            raise ValueError("page_index must be >= 0")


def linearize_region(region: PageRegion) -> str:
    """Flatten one region to plain text.

    Prose regions pass through verbatim. Table and figure regions rebuild
    one line per row (cells ordered by column, joined by single spaces),
    every rebuilt line terminated by a newline.
    """
    if region.kind == TEXT_REGION:
        return region.text
    rows: dict[int, list[Cell]] = {}
    for cell in region.cells:
        rows.setdefault(cell.row, []).append(cell)
    lines = []
    for row in sorted(rows):
        cells = sorted(rows[row], key=lambda c: c.col)
        lines.append(" ".join(c.text for c in cells))
    return "".join(line + "\n" for line in lines)


def _matches_any(text: str, patterns: list[re.Pattern]) -> bool:
    return any(p.search(text) for p in patterns)


def preprocess_page(raw_page: RawPage, strip_patterns: list[str] | tuple[str, ...]) -> DocumentPage:
    """Clean one structured page.

    A region is removed outright when any strip pattern matches its
    linearized text; headers, footers and copyright lines are expected to
    arrive as their own regions. Remaining regions are linearized and
    joined with a ``---`` delimiter line. A page whose regions all match
    comes out with empty text (and is later skipped by chunking while
    keeping its page number).
    """
    compiled = [re.compile(p) for p in strip_patterns]
    blocks: list[str] = []
    for region in raw_page.regions:
        flat = linearize_region(region)
        if not flat.strip():
            continue
        if _matches_any(flat, compiled):
            logger.debug(
                "stripped %s region on %s page %d", region.kind, raw_page.doc_id, raw_page.page_index
            )
            continue
        blocks.append(flat)
    if not blocks:
        text = ""
    elif len(blocks) == 1:
        text = blocks[0]
    else:
        # every block but the last must end in a newline so the delimiter
        # sits on its own line
        parts = []
        for block in blocks[:-1]:
            parts.append(block if block.endswith("\n") else block + "\n")
        joined = (REGION_DELIMITER + "\n").join(parts)
        text = joined + REGION_DELIMITER + "\n" + blocks[-1]
    return DocumentPage(
        doc_id=raw_page.doc_id,
        doc_title=raw_page.doc_title,
        release=raw_page.release,
        page_index=raw_page.page_index,
        text=text,
    )


def strip_plain_text(text: str, strip_patterns: list[str] | tuple[str, ...]) -> str:
    """Line-level boilerplate removal for unstructured page text."""
    compiled = [re.compile(p) for p in strip_patterns]
    kept = [line for line in text.splitlines() if not _matches_any(line, compiled)]
    return "\n".join(kept)
