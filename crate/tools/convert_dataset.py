#!/usr/bin/env python3
"""Convert public graph benchmarks to the edges.tsv / features.tsv / labels.tsv layout.

Two source formats are understood:

  geom-gcn   directory holding out1_graph_edges.txt and
             out1_node_feature_label.txt (Texas, Cornell, Wisconsin,
             Washington, Chameleon, Squirrel, Actor)
  planetoid  directory holding ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}
             (Cora, Citeseer, Pubmed); needs numpy and scipy

Example:
    python3 tools/convert_dataset.py geom-gcn raw/texas data/texas
    python3 tools/convert_dataset.py planetoid raw/planetoid data/cora --name cora
"""

import argparse
import pickle
import sys
from pathlib import Path


def write_layout(out, edges, features, labels):
    out.mkdir(parents=True, exist_ok=True)
    seen = set()
    with open(out / "edges.tsv", "w") as f:
        for u, v in edges:
            key = (min(u, v), max(u, v))
            if u == v or key in seen:
                continue
            seen.add(key)
            f.write(f"{key[0]}\t{key[1]}\n")
    with open(out / "features.tsv", "w") as f:
        for i, row in enumerate(features):
            f.write(f"{i}\t{' '.join(repr(float(x)) for x in row)}\n")
    with open(out / "labels.tsv", "w") as f:
        for i, y in enumerate(labels):
            if y is not None:
                f.write(f"{i}\t{y}\n")
    print(f"{out}: {len(features)} nodes, {len(seen)} edges, "
          f"{len(features[0]) if features else 0} features, "
          f"{len({y for y in labels if y is not None})} classes", file=sys.stderr)


def geom_gcn(src):
    features, labels = {}, {}
    with open(src / "out1_node_feature_label.txt") as f:
        next(f)
        for line in f:
            node, feats, label = line.rstrip("\n").split("\t")
            features[int(node)] = [float(x) for x in feats.split(",")]
            labels[int(node)] = int(label)
    n = max(features) + 1
    if sorted(features) != list(range(n)):
        raise SystemExit("node ids are not contiguous")
    edges = []
    with open(src / "out1_graph_edges.txt") as f:
        next(f)
        for line in f:
            u, v = line.split()
            edges.append((int(u), int(v)))
    return edges, [features[i] for i in range(n)], [labels[i] for i in range(n)]


def planetoid(src, name):
    import numpy as np
    import scipy.sparse as sp

    def load(part):
        with open(src / f"ind.{name}.{part}", "rb") as f:
            return pickle.load(f, encoding="latin1")

    x, tx, allx, y, ty, ally, graph = (load(p) for p in ("x", "tx", "allx", "y", "ty", "ally", "graph"))
    test_idx = [int(line) for line in open(src / f"ind.{name}.test.index")]
    lo, hi = min(test_idx), max(test_idx)
    if name == "citeseer":
        # isolated test nodes are missing from tx/ty; pad them as unlabeled
        full = sp.lil_matrix((hi - lo + 1, tx.shape[1]))
        full[np.array(sorted(test_idx)) - lo, :] = tx
        tx = full
        ty_full = np.zeros((hi - lo + 1, y.shape[1]))
        ty_full[np.array(sorted(test_idx)) - lo, :] = ty
        ty = ty_full
    feats = sp.vstack((allx, tx)).tolil()
    onehot = np.vstack((ally, ty))
    order = sorted(test_idx)
    feats[test_idx, :] = feats[order, :]
    onehot[test_idx, :] = onehot[order, :]
    dense = feats.toarray()
    labels = [int(r.argmax()) if r.any() else None for r in onehot]
    edges = [(u, v) for u, nbrs in graph.items() for v in nbrs if u < len(labels) and v < len(labels)]
    return edges, dense.tolist(), labels


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("format", choices=["geom-gcn", "planetoid"])
    p.add_argument("src", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--name", help="planetoid dataset name (cora, citeseer, pubmed)")
    a = p.parse_args()
    if a.format == "geom-gcn":
        edges, feats, labels = geom_gcn(a.src)
    else:
        if not a.name:
            p.error("--name is required for planetoid")
        edges, feats, labels = planetoid(a.src, a.name)
    write_layout(a.out, edges, feats, labels)


if __name__ == "__main__":
    main()
