import pathlib

import pytest

import tests.t_utils.common as t_common
from toricding.catalog import CatalogEntry, builtin_catalog
from toricding.polytope import ReflexivePolytope


@pytest.fixture(scope="session")
def catalog() -> tuple[CatalogEntry, ...]:
    return builtin_catalog()


@pytest.fixture(scope="session")
def p1() -> ReflexivePolytope:
    return t_common.polytope("P1")


@pytest.fixture(scope="session")
def p2() -> ReflexivePolytope:
    return t_common.polytope("P2")


@pytest.fixture(scope="session")
def f1() -> ReflexivePolytope:
    return t_common.polytope("F1")


@pytest.fixture
def output_dir(tmp_path: pathlib.Path, monkeypatch: pytest.MonkeyPatch) -> pathlib.Path:
    monkeypatch.chdir(tmp_path)
    return tmp_path / "out"
