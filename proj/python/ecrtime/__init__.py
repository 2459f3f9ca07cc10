"""Time series classification with a classification branch and a retrieval
branch whose 1-NN distances are fused, plus seed ensembles of such models."""

import numpy as np

from ._ecr import (
    ConfigError,
    DivergenceError,
    EcrError,
    FormatError,
    Model,
    ShapeError,
    TrainConfig,
    class_probabilities,
    cross_entropy,
    ensemble_predict,
    euclidean_1nn,
    fit,
    fuse,
    hard_triplet_loss,
    holm,
    load_ucr,
    mean_rank,
    predict_1nn,
    triplet_loss,
    wilcoxon,
)

__all__ = [
    "ConfigError", "DivergenceError", "EcrError", "FormatError", "Model", "ShapeError", "TrainConfig",
    "class_probabilities", "cross_entropy", "ensemble_predict", "euclidean_1nn", "fit", "fuse",
    "hard_triplet_loss", "holm", "load_ucr", "mean_rank", "predict_1nn", "triplet_loss", "wilcoxon",
    "EcrTimeClassifier",
]


class EcrTimeClassifier:
    """Estimator-style wrapper: ``n_models`` models trained with seeds
    ``seed .. seed + n_models - 1``; with one model prediction is plain 1-NN
    on the fused distances."""

    def __init__(self, n_models=3, epochs=1500, seed=0, **config):
        self.n_models = n_models
        self.epochs = epochs
        self.seed = seed
        self.config = config
        self.models_ = []
        self.traces_ = []

    def fit(self, X, y):
        self.models_, self.traces_ = [], []
        for k in range(self.n_models):
            cfg = TrainConfig()
            cfg.epochs = self.epochs
            cfg.seed = self.seed + k
            for key, value in self.config.items():
                setattr(cfg, key, value)
            model, trace, _ = fit(np.asarray(X, dtype=np.float32), np.asarray(y), cfg)
            self.models_.append(model)
            self.traces_.append(trace)
        return self

    def predict(self, X):
        if not self.models_:
            raise EcrError("fit() has not been called")
        X = np.asarray(X, dtype=np.float32)
        if len(self.models_) == 1:
            return self.models_[0].predict(X)
        return ensemble_predict(self.models_, X)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))
