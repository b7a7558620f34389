import hashlib

import pytest

from kslat.datasets import SHIPPED, load, manifest, shipped_path
from kslat.oracles import census, count_colourings, naive_colourable
from kslat.search import enumerate_two_valued_measures, search_two_valued_measure


@pytest.mark.parametrize("name", SHIPPED)
def test_manifest_matches_oracle_census(name):
    entry = manifest()["datasets"][name]
    path = shipped_path(name)
    assert entry["file_sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
    config = load(name)
    assert entry["config_hash"] == config.hash
    fresh = census(config, enumerate_colourings=len(config) <= 18)
    assert {k: entry[k] for k in fresh} == fresh


@pytest.mark.parametrize("name", ["basis3", "dim2_pairs", "cabello18"])
def test_solver_counts_match_brute_force(name):
    config = load(name)
    assert len(enumerate_two_valued_measures(config)) == count_colourings(config)


@pytest.mark.parametrize("name", SHIPPED)
def test_solver_verdict_matches_naive_backtracking(name):
    config = load(name)
    assert (search_two_valued_measure(config).verdict == "SAT") == naive_colourable(config)
