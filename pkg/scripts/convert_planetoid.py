"""Convert raw Planetoid files (ind.<name>.x, .y, .tx, .ty, .allx, .ally, .graph,
.test.index) into the adagpr dataset layout with the standard split:
the labelled training rows, the next 500 nodes for validation and the listed
1000 test nodes.

    python3 scripts/convert_planetoid.py --raw RAW_DIR --name cora --out data/cora
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from adagpr.data import Dataset, write_dataset
from adagpr.graph import Graph
from adagpr.training import Split

PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")
VAL_SIZE = 500


def _load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def _dense(m) -> np.ndarray:
    return np.asarray(m.todense() if sp.issparse(m) else m, dtype=np.float64)


def convert(raw, name: str) -> Dataset:
    raw = Path(raw)
    x, y, tx, ty, allx, ally, adj = (_load(raw, name, p) for p in PARTS)
    test_idx = np.array([int(l) for l in (raw / f"ind.{name}.test.index").read_text().split()])
    test_sorted = np.sort(test_idx)
    tx, ty = _dense(tx), _dense(ty)
    # some test ids are absent from the graph files (isolated nodes): pad with zero rows
    span = test_sorted[-1] - test_sorted[0] + 1
    if span != len(test_sorted):
        tx_full = np.zeros((span, tx.shape[1]))
        ty_full = np.zeros((span, ty.shape[1]))
        tx_full[test_sorted - test_sorted[0]] = tx
        ty_full[test_sorted - test_sorted[0]] = ty
        tx, ty = tx_full, ty_full
    feats = np.vstack([_dense(allx), tx])
    onehot = np.vstack([_dense(ally), ty])
    # raw test rows are stored in test.index order
    order = np.arange(feats.shape[0])
    order[test_idx] = test_sorted
    feats, onehot = feats[order], onehot[order]
    n = feats.shape[0]
    edges = [(int(u), int(v)) for u, nbrs in adj.items() for v in nbrs if int(u) < n and int(v) < n]
    labels = onehot.argmax(axis=1)
    n_train = _dense(y).shape[0]
    split = Split(np.arange(n_train), np.arange(n_train, n_train + VAL_SIZE), test_sorted)
    return Dataset(Graph.from_edges(n, edges), feats, labels, split, name)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--raw", required=True, help="directory holding the ind.<name>.* files")
    p.add_argument("--name", required=True, help="cora, citeseer or pubmed")
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)
    ds = convert(args.raw, args.name)
    write_dataset(ds, args.out)
    print(f"{args.name}: {ds.num_nodes} nodes, {len(ds.graph.undirected_pairs())} edges, "
          f"{ds.num_features} features, {ds.num_classes} classes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
