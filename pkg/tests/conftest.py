import functools

import pytest

from gml.ibp import build_connection, family_from_graph, reduce_family
from gml.landau import compute_landau_set
from gml.pipeline import CATALOG, load_catalog


@functools.lru_cache(maxsize=None)
def catalog_connection(name):
    fam = family_from_graph(load_catalog(name))
    table = reduce_family(fam)
    return fam, table, build_connection(fam, table)


@functools.lru_cache(maxsize=None)
def catalog_landau(name, second_type="both"):
    return compute_landau_set(load_catalog(name), second_type)


@pytest.fixture(params=CATALOG)
def catalog_name(request):
    return request.param
