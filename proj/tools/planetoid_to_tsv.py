#!/usr/bin/env python3
"""Convert raw Planetoid files (ind.<name>.x, .tx, .allx, .y, .ty, .ally, .graph,
.test.index) into the edges.tsv / features.tsv / labels.tsv / meta.json layout that
lte4g loads.

    planetoid_to_tsv.py --raw DIR --name cora --out data/cora

Test rows are put back in node order the usual way. Citeseer's test index has gaps
(isolated nodes); those rows get zero features, and nodes whose one-hot label row is all
zero take class 0, as PyG does.
"""

import argparse
import json
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def _load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as f:
        return pickle.load(f, encoding="latin1")


def load_planetoid(raw: Path, name: str):
    x, tx, allx = (_load(raw, name, p) for p in ("x", "tx", "allx"))
    y, ty, ally = (np.asarray(_load(raw, name, p)) for p in ("y", "ty", "ally"))
    graph = _load(raw, name, "graph")
    test_index = [int(line) for line in (raw / f"ind.{name}.test.index").read_text().split()]
    del x, y  # subsets of allx / ally

    order = np.sort(test_index)
    lo, hi = int(order[0]), int(order[-1])
    span = hi - lo + 1
    if span != len(test_index):
        tx_full = sp.lil_matrix((span, tx.shape[1]))
        tx_full[order - lo, :] = tx
        tx = tx_full
        ty_full = np.zeros((span, ty.shape[1]))
        ty_full[order - lo, :] = ty
        ty = ty_full

    features = sp.vstack([sp.csr_matrix(allx), sp.csr_matrix(tx)]).tolil()
    labels = np.vstack([ally, ty])
    features[test_index, :] = features[order, :]
    labels[test_index, :] = labels[order, :]

    n = features.shape[0]
    unlabeled = int((labels.sum(axis=1) == 0).sum())
    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u < n and v < n:
                edges.add((int(u), int(v)))
    return sp.csr_matrix(features), labels.argmax(axis=1), sorted(edges), unlabeled


def _fmt(v: float) -> str:
    return repr(float(v)) if v != int(v) else str(int(v))


def write_tsv(out: Path, features, labels, edges) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w") as f:
        for u, v in edges:
            f.write(f"{u}\t{v}\n")
    with open(out / "features.tsv", "w") as f:
        for i in range(features.shape[0]):
            row = features.getrow(i)
            toks = " ".join(f"{j}:{_fmt(val)}" for j, val in sorted(zip(row.indices, row.data)))
            f.write(f"{i}\t{toks}\n")
    with open(out / "labels.tsv", "w") as f:
        for i, c in enumerate(labels):
            f.write(f"{i}\t{int(c)}\n")
    meta = {"n": int(features.shape[0]), "num_features": int(features.shape[1]),
            "num_classes": int(labels.max()) + 1}
    (out / "meta.json").write_text(json.dumps(meta) + "\n")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--raw", type=Path, required=True, help="directory with the ind.<name>.* files")
    ap.add_argument("--name", required=True, help="cora, citeseer or pubmed")
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args(argv)
    features, labels, edges, unlabeled = load_planetoid(args.raw, args.name)
    write_tsv(args.out, features, labels, edges)
    print(f"{args.name}: n={features.shape[0]} F={features.shape[1]} classes={labels.max() + 1} "
          f"directed edge lines={len(edges)}", file=sys.stderr)
    if unlabeled:
        print(f"warning: {unlabeled} nodes had no label and were assigned class 0", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
