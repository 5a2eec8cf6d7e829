"""Scikit-learn style wrapper around the network and training loop.

`AmcNetClassifier` follows the estimator protocol: hyperparameters are
plain constructor attributes (so `get_params`/`set_params`/`clone` work),
all real work happens in `fit`, and fitted state lives in trailing-underscore
attributes. Labels may be arbitrary hashables; they are mapped onto the
internal class indices and mapped back on predict.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .datagen import Dataset, split_dataset
from .model import AmcNetModel, ModelConfig
from .tensor import Tensor
from .training import TrainConfig, fit, xavier_init
from .validation import check_iq_array, check_labels

__all__ = ["AmcNetClassifier"]


class AmcNetClassifier(BaseEstimator, ClassifierMixin):
    """I/Q modulation classifier with an sklearn-compatible surface.

    X is (N, 2, L) I/Q captures (or the flattened (N, 2*L) equivalent);
    y is any label vector. Training runs Adam with early stopping on an
    internal stratified validation split.
    """

    def __init__(self, mlp_hidden=48, msm_filters_per_kernel=12,
                 msm_kernel_lengths=(3, 5, 7), backbone_channels=(64, 128, 256),
                 heads=2, classifier_hidden=(512, 256), use_acm=True,
                 use_msm=True, use_ffm=True, max_epochs=30, batch_size=128,
                 learning_rate=1e-3, patience=10, validation_fraction=0.2,
                 random_state=0):
        self.mlp_hidden = mlp_hidden
        self.msm_filters_per_kernel = msm_filters_per_kernel
        self.msm_kernel_lengths = msm_kernel_lengths
        self.backbone_channels = backbone_channels
        self.heads = heads
        self.classifier_hidden = classifier_hidden
        self.use_acm = use_acm
        self.use_msm = use_msm
        self.use_ffm = use_ffm
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y):
        X = check_iq_array(X)
        y = check_labels(y, len(X))
        if not 0.0 < self.validation_fraction < 0.5:
            raise ValueError(
                f"validation_fraction must lie in (0, 0.5), "
                f"got {self.validation_fraction}"
            )
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes to fit a classifier")
        length = X.shape[2]
        dataset = Dataset(
            iq=X,
            labels=y_idx,
            snrs=np.zeros(len(X), dtype=np.int64),
            class_names=tuple(str(c) for c in self.classes_),
        )
        ratios = (1.0 - self.validation_fraction, self.validation_fraction, 0.0)
        train, val, _ = split_dataset(dataset, ratios=ratios, seed=self.random_state)
        config = ModelConfig(
            sequence_length=length,
            num_classes=len(self.classes_),
            mlp_hidden=self.mlp_hidden,
            msm_filters_per_kernel=self.msm_filters_per_kernel,
            msm_kernel_lengths=tuple(self.msm_kernel_lengths),
            backbone_channels=tuple(self.backbone_channels),
            heads=self.heads,
            classifier_hidden=tuple(self.classifier_hidden),
            use_acm=self.use_acm,
            use_msm=self.use_msm,
            use_ffm=self.use_ffm,
        )
        model = xavier_init(AmcNetModel(config), seed=self.random_state)
        train_config = TrainConfig(
            max_epochs=self.max_epochs,
            batch_size=min(self.batch_size, max(2, len(train))),
            learning_rate=self.learning_rate,
            patience=self.patience,
            seed=self.random_state,
        )
        result = fit(model, train, val, train_config)
        self.model_ = model.eval()
        self.n_features_in_ = 2 * length
        self.sequence_length_ = length
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise AttributeError("this classifier has not been fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_iq_array(X, sequence_length=self.sequence_length_)
        return self.model_.predict_proba(Tensor(X))

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]
