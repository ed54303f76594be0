"""Glue between an :class:`ExperimentConfig` and :func:`training.fit`."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import models, training
from .data import Dataset, ExperimentConfig, load_dataset, row_normalize
from .errors import SplitError
from .graph import SparseMatrix, normalize_adjacency


@dataclass
class Prepared:
    dataset: Dataset
    features: np.ndarray
    adjacency: SparseMatrix
    split: training.Split
    spec: models.ModelSpec
    train_cfg: training.TrainConfig


def resolve_split(cfg: ExperimentConfig, ds: Dataset) -> training.Split:
    if cfg.split == "file" or (cfg.split == "standard" and ds.split is not None):
        if ds.split is None:
            raise SplitError("split mode 'file' but the dataset has no split.json")
        return ds.split
    if cfg.split == "standard":
        return training.make_split(ds.labels, "standard", per_class=cfg.per_class,
                                   val_size=cfg.val_size, test_size=cfg.test_size)
    return training.make_split(ds.labels, "random_fractions", seed=cfg.split_seed)


def model_spec(cfg: ExperimentConfig, ds: Dataset) -> models.ModelSpec:
    coeff = cfg.coeff_mode
    if isinstance(coeff, list):
        coeff = np.asarray(coeff, dtype=np.float64)
    return models.ModelSpec(
        variant=cfg.model, layers=cfg.layers, hidden=cfg.hidden, num_classes=ds.num_classes,
        num_features=ds.num_features, k=cfg.k, alpha=cfg.alpha, lam=cfg.lam,
        dropout=cfg.dropout, coeff_mode=coeff,
    )


def train_config(cfg: ExperimentConfig) -> training.TrainConfig:
    return training.TrainConfig(lr=cfg.lr, wd1=cfg.wd1, wd2=cfg.wd2, wd3=cfg.wd3,
                                max_epochs=cfg.epochs, patience=cfg.patience, seed=cfg.seed,
                                eval_every=cfg.eval_every)


def prepare(cfg: ExperimentConfig, dataset: Optional[Dataset] = None) -> Prepared:
    cfg.validate()
    ds = dataset if dataset is not None else load_dataset(cfg.dataset)
    x = row_normalize(ds.features) if cfg.row_normalize else ds.features
    return Prepared(ds, x, normalize_adjacency(ds.graph), resolve_split(cfg, ds),
                    model_spec(cfg, ds), train_config(cfg))


def run(cfg: ExperimentConfig, dataset: Optional[Dataset] = None):
    """Prepare and fit; returns ``(Prepared, FitResult)``."""
    prep = prepare(cfg, dataset)
    result = training.fit(prep.spec, prep.train_cfg, prep.adjacency, prep.features,
                          prep.dataset.labels, prep.split)
    return prep, result
