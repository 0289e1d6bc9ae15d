"""Release identity and ordering.

A release is identified by the dotted numeric components found in its
name: "17.20", "Rel 17.20" and "Release 17.20" all normalize to the
canonical form "Release 17.20" with ordering key (17, 20). Ordering is
numeric tuple comparison, so Release 9 < Release 17.2 < Release 17.20.
Leading zeros are not preserved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class UnknownReleaseError(Exception):
    """A release name that no registered corpus matches."""


class RegistryError(Exception):
    """Registry bookkeeping failed (duplicate registration, empty registry)."""


_COMPONENTS_RE = re.compile(r"\d+(?:\.\d+)*")


@dataclass(frozen=True)
class ReleaseId:
    raw: str
    canonical: str
    ordering_key: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.ordering_key:
            raise ValueError("release needs at least one numeric component")


def parse_release(text: str) -> ReleaseId:
    """Normalize a release name to its canonical form.

    Raises ValueError when ``text`` carries no dotted numeric component.
    """
    m = _COMPONENTS_RE.search(text)
    if m is None:
        raise ValueError(f"no release number in {text!r}")
    components = m.group(0).split(".")
    key = tuple(int(c) for c in components)
    canonical = "Release " + ".".join(str(c) for c in key)
    return ReleaseId(raw=text, canonical=canonical, ordering_key=key)


def release_slug(release: ReleaseId) -> str:
    """Filesystem-safe directory name for a release."""
    return "release-" + "-".join(str(c) for c in release.ordering_key)
