"""Dataset files, synthetic graph generators and experiment configs.

On-disk dataset layout (one directory):

    graph.edges   ``src<TAB>dst`` per line, 0-based, ``#`` comments allowed
    features.csv  N lines of q comma-separated floats, no header
    labels.csv    N lines, one integer class id each
    split.json    optional ``{"train": [...], "val": [...], "test": [...]}``
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .errors import DatasetError, ParameterError
from .graph import Graph
from .training import Split, make_split

GRAPH_FILE = "graph.edges"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.csv"
SPLIT_FILE = "split.json"

SBM_P_IN, SBM_P_OUT = 0.1, 0.01
HETERO_P_IN, HETERO_P_OUT = 0.005, 0.05
CONFIG_DIR = Path(__file__).parent / "configs"


def format_float(x: float) -> str:
    """17 significant digits; exact round trip for float64."""
    return "%.17g" % x


@dataclass
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    split: Optional[Split] = None
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.graph = self.graph.canonical()
        self.validate()

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    def validate(self):
        n = self.graph.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DatasetError(f"features have shape {self.features.shape}, expected ({n}, q)")
        if self.labels.shape != (n,):
            raise DatasetError(f"{self.labels.size} labels for {n} nodes")
        if n == 0:
            raise DatasetError("dataset has no nodes")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("features contain non-finite values")
        if self.labels.min() < 0:
            raise DatasetError(f"label {self.labels.min()} is negative; labels must lie in [0, c)")
        present = np.unique(self.labels)
        c = int(present[-1]) + 1
        if present.size != c:
            missing = sorted(set(range(c)) - set(present.tolist()))
            raise DatasetError(
                f"label {c - 1} out of range: labels must cover [0, c) but classes {missing} are empty"
            )
        if self.split is not None:
            self.split.validate(n)


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise DatasetError(f"missing file: {path}")
    return path.read_text(encoding="utf-8").splitlines()


def _parse_edges(path: Path, n: int) -> np.ndarray:
    edges = []
    for lineno, line in enumerate(_read_lines(path), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"{path}:{lineno}: expected 'src<TAB>dst', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: node ids must be integers") from None
        if not (0 <= u < n and 0 <= v < n):
            raise DatasetError(f"{path}:{lineno}: node id out of range [0, {n}) in edge ({u}, {v})")
        edges.append((u, v))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def _parse_features(path: Path) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        vals = line.split(",")
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DatasetError(f"{path}:{lineno}: ragged row with {len(vals)} values, expected {width}")
        try:
            rows.append([float(v) for v in vals])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-numeric feature value") from None
    if not rows:
        raise DatasetError(f"{path}: no feature rows")
    return np.array(rows, dtype=np.float64)


def _parse_labels(path: Path) -> np.ndarray:
    out = []
    for lineno, line in enumerate(_read_lines(path), 1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: label must be an integer, got {line!r}") from None
    return np.array(out, dtype=np.int64)


def load_split(path) -> Split:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read split file {path}: {exc}") from None
    if not isinstance(doc, dict) or set(doc) != {"train", "val", "test"}:
        raise DatasetError(f"{path}: split must have exactly the keys train, val, test")
    return Split(doc["train"], doc["val"], doc["test"])


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    if not d.is_dir():
        raise DatasetError(f"dataset directory not found: {d}")
    labels = _parse_labels(d / LABELS_FILE)
    features = _parse_features(d / FEATURES_FILE)
    n = labels.size
    if features.shape[0] != n:
        raise DatasetError(f"{features.shape[0]} feature rows but {n} labels")
    edges = _parse_edges(d / GRAPH_FILE, n)
    split = load_split(d / SPLIT_FILE) if (d / SPLIT_FILE).is_file() else None
    return Dataset(Graph(n, edges), features, labels, split, d.name)


def write_dataset(ds: Dataset, directory) -> Path:
    """Write canonical files: each undirected edge once as (u < v), sorted."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    pairs = ds.graph.undirected_pairs()
    (d / GRAPH_FILE).write_text("".join(f"{u}\t{v}\n" for u, v in pairs), encoding="utf-8")
    (d / FEATURES_FILE).write_text(
        "".join(",".join(format_float(x) for x in row) + "\n" for row in ds.features), encoding="utf-8"
    )
    (d / LABELS_FILE).write_text("".join(f"{y}\n" for y in ds.labels), encoding="utf-8")
    if ds.split is not None:
        (d / SPLIT_FILE).write_text(json.dumps(ds.split.to_dict()) + "\n", encoding="utf-8")
    return d


def row_normalize(x: np.ndarray) -> np.ndarray:
    """Scale each row to unit L1 norm; all-zero rows stay zero."""
    s = np.abs(x).sum(axis=1, keepdims=True)
    return np.divide(x, s, out=np.zeros_like(x), where=s > 0)


def _block_model(sizes: Sequence[int], p_in: float, p_out: float, feature_dim: int,
                 noise: float, seed: int, name: str) -> Dataset:
    if any(s < 1 for s in sizes):
        raise ParameterError("every block needs at least one node")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ParameterError("edge probabilities must lie in [0, 1]")
    if feature_dim < 1 or noise < 0:
        raise ParameterError("feature_dim must be >= 1 and noise >= 0")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = labels.size
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    draw = rng.random((n, n))
    iu = np.triu_indices(n, k=1)
    hit = draw[iu] < prob[iu]
    edges = np.stack([iu[0][hit], iu[1][hit]], axis=1)
    means = rng.standard_normal((len(sizes), feature_dim))
    features = means[labels] + noise * rng.standard_normal((n, feature_dim))
    split = make_split(labels, "random_fractions", seed=seed)
    return Dataset(Graph(n, edges), features, labels, split, name)


def generate_sbm(n_per_block: int, num_blocks: int, p_in: float, p_out: float,
                 feature_dim: int, noise: float, seed: int) -> Dataset:
    """Stochastic block model; features are per-class Gaussian means plus noise.

    Nodes are numbered block by block, labels are block ids.  The dataset
    carries a seeded 60/20/20 per-class split.
    """
    if num_blocks < 1 or n_per_block < 1:
        raise ParameterError("need at least one non-empty block")
    return _block_model([n_per_block] * num_blocks, p_in, p_out, feature_dim, noise, seed,
                        f"sbm-{num_blocks}x{n_per_block}-s{seed}")


def generate_heterophilous(n: int, feature_dim: int, seed: int, num_classes: int = 3,
                           p_in: float = HETERO_P_IN, p_out: float = HETERO_P_OUT,
                           noise: float = 1.0) -> Dataset:
    """Block model whose edges mostly join different classes (p_out > p_in)."""
    if n < 4:
        raise ParameterError("heterophilous generator needs n >= 4")
    if num_classes < 2 or num_classes > n:
        raise ParameterError("need 2 <= num_classes <= n")
    if p_out <= p_in:
        raise ParameterError("heterophilous graphs need p_out > p_in")
    sizes = [n // num_classes + (1 if i < n % num_classes else 0) for i in range(num_classes)]
    return _block_model(sizes, p_in, p_out, feature_dim, noise, seed, f"hetero-{n}-s{seed}")


@dataclass
class ExperimentConfig:
    """Flat, JSON-serializable description of one training run."""

    dataset: str = ""
    out: str = ""
    model: str = "adagpr"
    layers: int = 2
    k: int = 2
    hidden: int = 64
    alpha: float = 0.1
    lam: float = 0.5
    dropout: float = 0.5
    lr: float = 0.01
    wd1: float = 5e-4
    wd2: float = 1e-4
    wd3: float = 0.0
    epochs: int = 1500
    patience: int = 100
    seed: int = 0
    eval_every: int = 1
    split: str = "standard"
    per_class: int = 20
    val_size: int = 500
    test_size: int = 1000
    split_seed: int = 0
    row_normalize: bool = False
    coeff_mode: Any = "learned"

    # JSON spells the beta-schedule scale "lambda"
    _RENAMES = {"lambda": "lam"}

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ParameterError("config must be a JSON object")
        kwargs = {}
        known = set(cls.field_names())
        for key, value in doc.items():
            name = cls._RENAMES.get(key, key)
            if name not in known or key == "lam":
                raise ParameterError(f"unknown config key {key!r}")
            kwargs[name] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        """Read a JSON config; a bare name such as ``cora`` picks a shipped one."""
        if not Path(path).exists() and (CONFIG_DIR / f"{path}.json").exists():
            path = CONFIG_DIR / f"{path}.json"
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        out = {}
        for name in self.field_names():
            key = "lambda" if name == "lam" else name
            out[key] = getattr(self, name)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def validate(self):
        from .models import canonical_variant

        canonical_variant(self.model)
        if self.split not in ("standard", "random_fractions", "file"):
            raise ParameterError(f"unknown split mode {self.split!r}")
        ints = ("layers", "k", "hidden", "epochs", "patience", "seed", "eval_every",
                "per_class", "val_size", "test_size", "split_seed")
        for name in ints:
            if not isinstance(getattr(self, name), int) or isinstance(getattr(self, name), bool):
                raise ParameterError(f"{name} must be an integer")
        if not isinstance(self.row_normalize, bool):
            raise ParameterError("row_normalize must be true or false")
