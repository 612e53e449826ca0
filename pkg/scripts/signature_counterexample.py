"""Two anchored subgraphs with equal path-set signatures that are not
isomorphic: a shared merge node versus the same node duplicated per branch.
Restricted to graphs whose children and parents carry distinct labels per
node, equal signatures do imply isomorphism; this pair shows why the
restriction is needed."""

from __future__ import annotations

from udfpart.candidates import enumerate_candidates
from udfpart.fixtures import GraphBuilder
from udfpart.ir import NodeKind as K


def merge_point(split: bool):
    b = GraphBuilder("split" if split else "shared")
    r = b.node(K.SCAN, "D", "", "s")
    a, c = b.node(K.MEMBER, "a", "", "s"), b.node(K.MEMBER, "b", "", "s")
    x1 = b.node(K.METHOD, "m", "", "s")
    x2 = b.node(K.METHOD, "m", "", "s") if split else x1
    leaf = b.node(K.CONDITIONAL, "", "", "s")
    p, j, w = b.node(K.PAIR), b.node(K.JOIN), b.node(K.WRITE, "o")
    b.chain(r, a, x1, leaf)
    b.chain(r, c, x2, leaf)
    b.chain(leaf, p, j, w)
    return b.build()


def main() -> None:
    for split in (False, True):
        (cand,) = enumerate_candidates([merge_point(split)], "D")
        g = cand.subgraph
        print(f"{'split' if split else 'shared'}: {len(g.nodes)} nodes, {len(g.edges)} edges")
        for s in cand.path_signatures():
            print("   ", s)
    print("signatures equal; node counts differ, so no isomorphism exists")


if __name__ == "__main__":
    main()
