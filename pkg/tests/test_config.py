import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carnotlab.config import ConfigError, check_scenario, parse_config, render
from carnotlab.scenarios import builtin, builtin_ids

MINIMAL_HEAT = """
id = "euclid-heat-1d"

[group]
name = "euclidean"
params = { n = 1 }

[problem]
g = { kind = "sine-initial" }

[grid]
lower = [0.0]
upper = [1.0]
t1 = 0.1
nx = [64]
nt = 256

[solver]
method = "cauchy-dirichlet"

[analysis]
checks = ["oracle", "refinement", "complementarity"]
oracle = { kind = "heat-sine" }
"""


def test_minimal_document_fills_defaults():
    s = parse_config(MINIMAL_HEAT)
    ref = builtin("euclid-heat-1d")
    assert dataclasses.replace(s, description=ref.description) == ref


@pytest.mark.parametrize("sid", builtin_ids())
def test_round_trip_builtin(sid):
    s = builtin(sid)
    assert parse_config(render(s)) == s


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(builtin_ids()), st.integers(0, 2 ** 31), st.floats(0.01, 0.99))
def test_round_trip_with_overrides(sid, seed, alpha):
    s = builtin(sid)
    s = dataclasses.replace(s, seed=seed, analysis=dict(s.analysis, alpha=alpha))
    assert parse_config(render(s)) == s
    assert parse_config(render(s)).config_hash() == s.config_hash()


def test_alpha_out_of_range_names_field():
    doc = MINIMAL_HEAT.replace('checks = ', 'alpha = 1.5\nchecks = ')
    with pytest.raises(ConfigError, match=r"analysis\.alpha"):
        parse_config(doc)


def test_unknown_group_lists_registry():
    doc = MINIMAL_HEAT.replace('name = "euclidean"', 'name = "nilpotent"')
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert "euclidean" in str(info.value) and "heisenberg" in str(info.value)


def test_unknown_key_rejected():
    doc = MINIMAL_HEAT.replace("nt = 256", "nt = 256\nnz = 3")
    with pytest.raises(ConfigError, match=r"grid\.nz"):
        parse_config(doc)


def test_unknown_selector_rejected():
    doc = MINIMAL_HEAT.replace('g = { kind = "sine-initial" }', 'g = { kind = "wavelet" }')
    with pytest.raises(ConfigError, match=r"problem\.g"):
        parse_config(doc)


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match="line"):
        parse_config(MINIMAL_HEAT + "\n[grid\n")


def test_nt_zero_fails_before_solve():
    doc = MINIMAL_HEAT.replace("nt = 256", "nt = 0")
    with pytest.raises(ConfigError, match=r"grid\.nt"):
        parse_config(doc)


def test_cross_field_checks():
    s = builtin("euclid-heat-1d")
    bad = dataclasses.replace(s, analysis=dict(s.analysis, checks=["dyadic"]))
    with pytest.raises(ConfigError, match="decay"):
        check_scenario(bad)
    bad = dataclasses.replace(s, analysis=dict(s.analysis, checks=["obstacle"]))
    with pytest.raises(ConfigError, match="phi"):
        check_scenario(bad)


def test_config_hash_changes_with_content():
    s = builtin("euclid-heat-1d")
    assert s.config_hash() != dataclasses.replace(s, seed=1).config_hash()
    assert len(s.config_hash()) == 64
