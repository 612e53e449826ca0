"""Hand-built IR graphs and histories used by the demo, docs and tests.

``reddit_consumer`` is a three-way join over comments, authors and subreddits:
the comments join key is a conditional choosing between the author and the
subreddit member, driven by an opaque ``classify`` UDF.
"""

from __future__ import annotations

from .history import ExecutionRecord
from .ir import Flow, IrEdge, IrGraph, IrNode, NodeKind

K = NodeKind


class GraphBuilder:
    def __init__(self, ir_id: str):
        self.ir_id = ir_id
        self.nodes: list[IrNode] = []
        self.edges: list[IrEdge] = []

    def node(self, kind: NodeKind, label: str = "", in_type: str = "", out_type: str = "") -> int:
        i = len(self.nodes)
        self.nodes.append(IrNode(i, kind, label, in_type, out_type))
        return i

    def edge(self, src: int, dst: int, flow: Flow = Flow.DATA) -> None:
        self.edges.append(IrEdge(src, dst, flow))

    def chain(self, *ids: int) -> None:
        for a, b in zip(ids, ids[1:]):
            self.edge(a, b)

    def build(self) -> IrGraph:
        return IrGraph(self.ir_id, self.nodes, self.edges)


def reddit_consumer(ir_id: str = "reddit-feature-extractor") -> IrGraph:
    b = GraphBuilder(ir_id)
    comments = b.node(K.SCAN, "comments", "", "string")
    c_parse = b.node(K.OPAQUE_FUNC, "parse", "string", "json")
    classify = b.node(K.OPAQUE_FUNC, "classify", "json", "bool")
    c_author = b.node(K.MEMBER, "author", "json", "string")
    c_sub = b.node(K.MEMBER, "subreddit", "json", "string")
    c_key = b.node(K.CONDITIONAL, "", "string", "string")

    authors = b.node(K.SCAN, "authors", "", "string")
    a_parse = b.node(K.OPAQUE_FUNC, "csv_parse", "string", "vector")
    a_name = b.node(K.INDEX, "1", "vector", "string")

    subs = b.node(K.SCAN, "subreddits", "", "string")
    s_parse = b.node(K.OPAQUE_FUNC, "parse", "string", "json")
    s_name = b.node(K.MEMBER, "name", "json", "string")

    pair = b.node(K.PAIR, "", "string", "tuple")
    join = b.node(K.JOIN, "", "tuple", "tuple")
    score = b.node(K.APPLY, "", "tuple", "double")
    out = b.node(K.WRITE, "comment_scores", "double", "")

    b.chain(comments, c_parse)
    b.edge(c_parse, classify)
    b.edge(c_parse, c_author)
    b.edge(c_parse, c_sub)
    b.edge(classify, c_key, Flow.CONTROL)
    b.edge(c_author, c_key)
    b.edge(c_sub, c_key)
    b.chain(authors, a_parse, a_name)
    b.chain(subs, s_parse, s_name)
    for key in (c_key, a_name, s_name):
        b.edge(key, pair)
    b.chain(pair, join, score, out)
    for scan in (comments, authors, subs):
        b.edge(scan, join)
    return b.build()


def author_join_consumer(ir_id: str = "author-activity") -> IrGraph:
    """Comments joined with authors on the author member only."""
    b = GraphBuilder(ir_id)
    comments = b.node(K.SCAN, "comments", "", "string")
    c_parse = b.node(K.OPAQUE_FUNC, "parse", "string", "json")
    c_author = b.node(K.MEMBER, "author", "json", "string")
    authors = b.node(K.SCAN, "authors", "", "string")
    a_parse = b.node(K.OPAQUE_FUNC, "csv_parse", "string", "vector")
    a_name = b.node(K.INDEX, "1", "vector", "string")
    pair = b.node(K.PAIR, "", "string", "tuple")
    join = b.node(K.JOIN, "", "tuple", "tuple")
    out = b.node(K.WRITE, "author_activity", "tuple", "")
    b.chain(comments, c_parse, c_author, pair)
    b.chain(authors, a_parse, a_name, pair)
    b.chain(pair, join, out)
    b.edge(comments, join)
    b.edge(authors, join)
    return b.build()


def subreddit_join_consumer(ir_id: str = "subreddit-activity") -> IrGraph:
    """Comments joined with subreddits on the subreddit member only."""
    b = GraphBuilder(ir_id)
    comments = b.node(K.SCAN, "comments", "", "string")
    c_parse = b.node(K.OPAQUE_FUNC, "parse", "string", "json")
    c_sub = b.node(K.MEMBER, "subreddit", "json", "string")
    subs = b.node(K.SCAN, "subreddits", "", "string")
    s_parse = b.node(K.OPAQUE_FUNC, "parse", "string", "json")
    s_name = b.node(K.MEMBER, "name", "json", "string")
    pair = b.node(K.PAIR, "", "string", "tuple")
    join = b.node(K.JOIN, "", "tuple", "tuple")
    out = b.node(K.WRITE, "subreddit_activity", "tuple", "")
    b.chain(comments, c_parse, c_sub, pair)
    b.chain(subs, s_parse, s_name, pair)
    b.chain(pair, join, out)
    b.edge(comments, join)
    b.edge(subs, join)
    return b.build()


def loader(ir_id: str, source: str, target: str, udf: str = "schema_resolve") -> IrGraph:
    """Producer that reads ``source``, applies one opaque UDF and writes ``target``."""
    b = GraphBuilder(ir_id)
    s = b.node(K.SCAN, source, "", "string")
    f = b.node(K.OPAQUE_FUNC, udf, "string", "string")
    a = b.node(K.APPLY, "", "string", "string")
    w = b.node(K.WRITE, target, "string", "")
    b.chain(s, f, a, w)
    return b.build()


def reddit_history() -> tuple[list[IrGraph], list[ExecutionRecord]]:
    """Three days of a loader producing ``comments`` followed by the
    feature extractor consuming it."""
    graphs = [
        loader("comments-loader", "raw_comments", "comments"),
        loader("authors-loader", "raw_authors", "authors", "csv_clean"),
        loader("subreddits-loader", "raw_subreddits", "subreddits", "json_clean"),
        reddit_consumer(),
    ]
    gb = 1 << 30
    records = []
    for day in range(3):
        t0 = 1_600_000_000 + day * 86_400
        records += [
            ExecutionRecord(f"load-c-{day}", t0, "comments-loader", (("raw_comments", 130 * gb),), (("comments", 128 * gb),), 900.0),
            ExecutionRecord(f"load-a-{day}", t0 + 10, "authors-loader", (("raw_authors", 11 * gb),), (("authors", 10 * gb),), 120.0),
            ExecutionRecord(f"load-s-{day}", t0 + 20, "subreddits-loader", (("raw_subreddits", 4 * gb),), (("subreddits", 4 * gb),), 60.0),
            ExecutionRecord(
                f"extract-{day}", t0 + 3600, "reddit-feature-extractor",
                (("comments", 128 * gb), ("authors", 10 * gb), ("subreddits", 4 * gb)),
                (("comment_scores", 2 * gb),), 2400.0,
            ),
        ]
    return graphs, records


def workflow_groups() -> tuple[list[IrGraph], list[ExecutionRecord]]:
    """Five workload groups: group1 feeds groups 2 and 4, group2 feeds
    group3, group4 feeds group5. Group1 runs twice."""
    g1 = loader("group1", "raw", "d1")
    g2 = loader("group2", "d1", "d2", "clean")
    g3 = loader("group3", "d2", "d3", "report")
    g4 = loader("group4", "d1", "d4", "index")
    g5 = loader("group5", "d4", "d5", "publish")
    recs = [
        ExecutionRecord("app1", 100, "group1", (("raw", 50),), (("d1", 40),), 10.0),
        ExecutionRecord("app2", 200, "group2", (("d1", 40),), (("d2", 30),), 8.0),
        ExecutionRecord("app3", 300, "group3", (("d2", 30),), (("d3", 5),), 3.0),
        ExecutionRecord("app4", 250, "group4", (("d1", 40),), (("d4", 20),), 6.0),
        ExecutionRecord("app5", 400, "group5", (("d4", 20),), (("d5", 2),), 1.0),
        ExecutionRecord("app6", 500, "group1", (("raw", 55),), (("d1x", 45),), 11.0),
    ]
    return [g1, g2, g3, g4, g5], recs


def reddit_env_spec(consumer: IrGraph | None = None) -> dict:
    """Simulator spec for the Reddit workflow: the three inputs of the
    feature extractor on a four-node cluster, with desired schemes derived
    from the extractor's IR graph."""
    consumer = consumer or reddit_consumer()
    mb = 1 << 20
    return {
        "cluster": {"m": 4},
        "datasets": [
            {"id": "comments", "n": 128_000, "object_bytes": mb, "distinct_keys": 5000, "skew": 0.5},
            {"id": "authors", "n": 10_000, "object_bytes": mb, "distinct_keys": 5000},
            {"id": "subreddits", "n": 4000, "object_bytes": mb, "distinct_keys": 400},
        ],
        "irs": [consumer.to_dict()],
        "workloads": [
            {
                "query_id": "extract",
                "ir_id": consumer.ir_id,
                "inputs": ["comments", "authors", "subreddits"],
            }
        ],
    }
