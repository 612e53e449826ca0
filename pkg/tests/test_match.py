from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphgen import random_ir, relabel
from udfpart.candidates import Strategy, candidates_for_graph, enumerate_candidates
from udfpart.errors import AbsentScanError
from udfpart.fixtures import author_join_consumer, reddit_consumer, subreddit_join_consumer
from udfpart.match import anchored_subgraph, match_candidate, partitioning_match, same_partitioning

seeds = st.integers(0, 2**32 - 1)


def test_same_workload_matches_its_comment_join():
    g = reddit_consumer()
    (c,) = enumerate_candidates([g], "comments")
    (m,) = match_candidate(c, g)
    assert (m.scan, m.anchor) == (0, 5)
    assert m.subgraph.signature() == c.signature


def test_author_candidate_does_not_match_subreddit_join():
    (author,) = enumerate_candidates([author_join_consumer()], "comments")
    assert match_candidate(author, subreddit_join_consumer()) == []
    assert match_candidate(author, reddit_consumer()) == []
    assert match_candidate(author, author_join_consumer("rerun")) != []


def test_strategy_must_agree():
    g = reddit_consumer()
    (c,) = enumerate_candidates([g], "comments")
    assert partitioning_match(c.path_signatures(), Strategy.RANGE, g, "comments") == []


def test_absent_scan():
    (c,) = enumerate_candidates([reddit_consumer()], "comments")
    with pytest.raises(AbsentScanError):
        partitioning_match(c.path_signatures(), c.strategy, author_join_consumer(), "subreddits")


def test_same_partitioning():
    assert same_partitioning("a|b", "Hash", "a|b", Strategy.HASH)
    assert not same_partitioning("a|b", "Hash", "a|b", "Range")
    assert not same_partitioning("", "Hash", "", "Hash")


def test_anchored_subgraph_is_none_when_unreachable():
    g = reddit_consumer()
    assert anchored_subgraph(g, 0, 8) is None


@given(seeds)
def test_candidate_matches_its_own_origin_after_renumbering(seed):
    rng = np.random.default_rng(seed)
    g = random_ir(rng)
    h, mapping = relabel(g, rng)
    for c in candidates_for_graph(g, "d0"):
        anchors = {m.anchor for m in match_candidate(c, h)}
        assert mapping[c.origin_leaf] in anchors
