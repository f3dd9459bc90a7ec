"""scikit-learn style wrappers.

``PlasticVisNet`` learns its representation with local rules only, so
``fit`` ignores ``y``.  Put a readout after it in a pipeline::

    make_pipeline(PlasticVisNet(epochs=2), LinearProbeClassifier())
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_images, check_labels
from .config import RunConfig, from_dict, validate
from .data import epoch_order
from .engine import Runtime, extract, train_epoch
from .frontend import FrontEnd
from .network import TAG_PROBE, Architecture, init_state, philox
from .probe import ProbeParams, logits, ncm_classify, ncm_fit, train_probe


class PlasticVisNet(TransformerMixin, BaseEstimator):
    """Label-free feature learner: fixed front end plus the plastic hierarchy.

    Parameters
    ----------
    memory_mode : {"hopfield", "hebbian_sa"}
        Only ``"hopfield"`` can be trained; the other value is rejected.
    rule_set : str
        Named component set, e.g. ``"cifar10-full"`` or ``"hebbian-only"``.
    batch_size, epochs : int
    random_state : int
        Seed for initial weights and the per-epoch sample order.
    config : dict or None
        Extra ``RunConfig`` keys (plasticity coefficients and the like).
    """

    def __init__(self, memory_mode="hopfield", rule_set="cifar10-full", batch_size=16, epochs=1,
                 random_state=0, config=None):
        self.memory_mode = memory_mode
        self.rule_set = rule_set
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state
        self.config = config

    def _make_config(self) -> RunConfig:
        base = RunConfig().to_dict()
        base.update(self.config or {})
        base.update(memory_mode=self.memory_mode, rule_set=self.rule_set, batch_size=self.batch_size,
                    epochs=self.epochs, seeds=[int(self.random_state)])
        return validate(from_dict(base), for_run=True)

    def _inputs(self, X):
        feats = self.frontend_(check_images(X))
        return self.architecture_.input_map(feats), feats.saliency

    def _train(self, R, sal, epochs):
        B = self.config_.batch_size
        n = len(R)
        if n < B:
            raise ValueError(f"need at least batch_size={B} images, got {n}")
        for _ in range(epochs):
            epoch = self.state_.epoch + 1
            order = epoch_order(n, self.state_.seed, epoch)
            batches = (order[s : s + B] for s in range(0, n - B + 1, B))
            train_epoch(self.state_, self.runtime_, R, sal, None, None, batches, epoch=epoch, audit=False)

    def fit(self, X, y=None):
        self.config_ = self._make_config()
        self.runtime_ = Runtime.from_config(self.config_)
        self.architecture_ = Architecture.from_config(self.config_)
        self.frontend_ = FrontEnd(self.config_)
        self.state_ = init_state(self.config_, int(self.random_state), self.architecture_)
        R, sal = self._inputs(X)
        self._train(R, sal, self.config_.epochs)
        self.n_features_out_ = self.architecture_.rep_dim
        return self

    def partial_fit(self, X, y=None):
        """One more epoch over ``X`` (initialises on first call)."""
        if not hasattr(self, "state_"):
            epochs, self.epochs = self.epochs, 0
            try:
                self.fit(X)
            finally:
                self.epochs = epochs
        R, sal = self._inputs(X)
        self._train(R, sal, 1)
        return self

    def transform(self, X):
        check_is_fitted(self, "state_")
        R, sal = self._inputs(X)
        return extract(self.state_, self.runtime_, R, sal)


class LinearProbeClassifier(ClassifierMixin, BaseEstimator):
    """Softmax regression trained with Adam on mini-batches."""

    def __init__(self, lr=3e-4, weight_decay=1e-4, epochs=10, batch_size=16, random_state=0):
        self.lr = lr
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y):
        Z = check_features(X)
        self.classes_, codes = np.unique(check_labels(y, len(Z)), return_inverse=True)
        self.n_features_in_ = Z.shape[1]
        seed = int(self.random_state)
        p = ProbeParams.init(len(self.classes_), Z.shape[1], philox(seed, TAG_PROBE))
        self.probe_, self.loss_curve_ = train_probe(
            p, Z, codes, self.epochs, min(self.batch_size, len(Z)), lambda e: epoch_order(len(Z), seed, e),
            self.lr, self.weight_decay,
        )
        return self

    def decision_function(self, X):
        check_is_fitted(self, "probe_")
        return logits(self.probe_, check_features(X, self.n_features_in_))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


class NearestClassMeanClassifier(ClassifierMixin, BaseEstimator):
    """Assigns each sample to the class mean with the highest cosine similarity."""

    def fit(self, X, y):
        Z = check_features(X)
        self.classes_, codes = np.unique(check_labels(y, len(Z)), return_inverse=True)
        self.n_features_in_ = Z.shape[1]
        self.means_ = ncm_fit(Z, codes, len(self.classes_))
        return self

    def predict(self, X):
        check_is_fitted(self, "means_")
        return self.classes_[ncm_classify(check_features(X, self.n_features_in_), self.means_)]
