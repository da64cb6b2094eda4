"""Built-in polytopes and polytope file ingestion."""

from __future__ import annotations

import functools
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from pydantic import TypeAdapter

from toricding.polytope import ReflexivePolytope
from toricding.reports import CatalogDocument, PolytopeDocument

logger = logging.getLogger()


class UnknownPolytope(LookupError): ...


@dataclass(frozen=True)
class CatalogEntry:
    key: str
    polytope: ReflexivePolytope
    notes: str = ""


def confpath() -> Path:
    return Path(__file__).parent.parent / "pkg_data"


@functools.lru_cache
def builtin_catalog() -> tuple[CatalogEntry, ...]:
    """Every entry is validated when the catalog is first loaded."""
    with (confpath() / "catalog.json").open() as infile:
        documents = TypeAdapter(list[CatalogDocument]).validate_python(json.load(infile))
    keys = [doc.key for doc in documents]
    if len(set(keys)) != len(keys):
        raise RuntimeError(f"Duplicate catalog keys in {keys}")
    return tuple(CatalogEntry(doc.key, doc.to_polytope(), doc.notes) for doc in documents)


def catalog_entry(key: str) -> CatalogEntry:
    for entry in builtin_catalog():
        if entry.key == key:
            return entry
    raise UnknownPolytope(f"{key} is not in the catalog ({', '.join(e.key for e in builtin_catalog())})")


def read_polytope(path: Path) -> ReflexivePolytope:
    """Validate a polytope JSON file.

    Raises:
        pydantic.ValidationError: the document is malformed
        PolytopeError: the vertices are not those of a reflexive Delzant polytope
    """
    document = PolytopeDocument.model_validate_json(Path(path).read_text())
    logger.debug("Read %s from %s", document.name, path)
    return document.to_polytope()


def load_polytope(source: str | Path) -> ReflexivePolytope:
    """A catalog key, or else the path of a polytope JSON file."""
    if isinstance(source, str) and source in {e.key for e in builtin_catalog()}:
        return catalog_entry(source).polytope
    path = Path(source)
    if not path.is_file():
        raise UnknownPolytope(f"{source} is neither a catalog key nor a polytope file")
    return read_polytope(path)
