"""Siamese matching over Gaussian record representations.

Two weight-sharing encoder heads (initialized from a trained representation
model) encode both records of a pair; an attribute-wise squared-2-Wasserstein
distance layer feeds a two-layer MLP that predicts the duplicate probability.
Training minimizes binary cross-entropy plus a margin contrastive term that
pulls duplicate representations together and pushes non-duplicates apart,
fine-tuning the encoder and the classifier simultaneously. Distances are
symmetric under pair swap by construction, so the classifier output is too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import prf1
from .corpus import PairSet
from .nnkit import Adam, Dense, Sequential, sigmoid
from .vae import DimensionMismatch, GaussianRepr, ModelFormatError, VaeModel

MATCHER_FORMAT = "vaer-matching-model"
MATCHER_FORMAT_VERSION = 1

DEFAULT_MARGIN = 0.5
DEFAULT_THRESHOLD = 0.5
DEFAULT_CLASSIFIER_HIDDEN = 64


def w2_squared(p: tuple[np.ndarray, np.ndarray], q: tuple[np.ndarray, np.ndarray]) -> float:
    """Squared 2-Wasserstein distance between two diagonal Gaussians.

    Equals sum_j (mu_p - mu_q)^2 + (sigma_p - sigma_q)^2, i.e. the squared
    Euclidean distance of the concatenated (mu, sigma) vectors.
    """
    mu_p, sigma_p = np.asarray(p[0]), np.asarray(p[1])
    mu_q, sigma_q = np.asarray(q[0]), np.asarray(q[1])
    if mu_p.shape != mu_q.shape or sigma_p.shape != sigma_q.shape:
        raise DimensionMismatch(
            f"distribution shapes differ: {mu_p.shape}/{sigma_p.shape} vs {mu_q.shape}/{sigma_q.shape}"
        )
    return float(np.sum((mu_p - mu_q) ** 2) + np.sum((sigma_p - sigma_q) ** 2))


def wasserstein_vec(repr_s: GaussianRepr, repr_t: GaussianRepr) -> np.ndarray:
    """Concatenated attribute-wise distance vectors, length m*k.

    Entry (i, j) is (mu_s - mu_t)^2 + (sigma_s - sigma_t)^2 for coordinate j
    of attribute i; each attribute block sums to its w2_squared.
    """
    if repr_s.mu.shape != repr_t.mu.shape:
        raise DimensionMismatch(
            f"representation shapes differ: {repr_s.mu.shape} vs {repr_t.mu.shape}"
        )
    dvec = (repr_s.mu - repr_t.mu) ** 2 + (repr_s.sigma - repr_t.sigma) ** 2
    return dvec.reshape(-1)


def pair_w2(repr_s: GaussianRepr, repr_t: GaussianRepr) -> tuple[np.ndarray, float]:
    """Per-attribute squared distances (length m) and their total."""
    dvec = (repr_s.mu - repr_t.mu) ** 2 + (repr_s.sigma - repr_t.sigma) ** 2
    per_attr = dvec.sum(axis=1)
    return per_attr, float(per_attr.sum())


@dataclass
class MatchConfig:
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    learning_rate: float = 1e-3
    margin: float = DEFAULT_MARGIN
    threshold: float = DEFAULT_THRESHOLD
    classifier_hidden: int = DEFAULT_CLASSIFIER_HIDDEN
    holdout_fraction: float = 0.1
    init: str = "vae"  # "vae" copies the trained encoder; "random" starts fresh


class MatcherModel:
    """Shared-weight twin encoders + distance layer + MLP classifier.

    Latent distances have an arbitrary overall scale, so two normalizations
    are fitted once from the training pairs and stored with the model. The
    scalar ``distance_scale`` puts squared-distance coordinates at O(1) so the
    per-attribute contrastive distances (coordinate means of the scaled
    squares) are commensurate with the default margin. The per-feature affine
    (``feature_mean``, ``feature_inv_std``) standardizes the concatenated
    distance vector before the classifier; the coordinates have wildly
    unequal variances and the MLP does not train well on them raw.
    """

    def __init__(
        self,
        input_dim: int,
        hidden_dim: int,
        latent_dim: int,
        arity: int,
        classifier_hidden: int = DEFAULT_CLASSIFIER_HIDDEN,
        margin: float = DEFAULT_MARGIN,
        threshold: float = DEFAULT_THRESHOLD,
        input_scale: float = 1.0,
        distance_scale: float = 1.0,
        feature_mean: np.ndarray | None = None,
        feature_inv_std: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
    ):
        if margin <= 0:
            raise ValueError(f"margin must be positive, got {margin}")
        self.input_dim = input_dim
        self.input_scale = input_scale
        self.distance_scale = distance_scale
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self.arity = arity
        self.classifier_hidden = classifier_hidden
        self.margin = margin
        self.threshold = threshold
        n_features = arity * latent_dim
        self.feature_mean = feature_mean if feature_mean is not None else np.zeros(n_features)
        self.feature_inv_std = (
            feature_inv_std if feature_inv_std is not None else np.ones(n_features)
        )
        self.trunk = Dense(input_dim, hidden_dim, "relu", rng)
        self.mu_head = Dense(hidden_dim, latent_dim, "identity", rng)
        self.logvar_head = Dense(hidden_dim, latent_dim, "identity", rng)
        self.classifier = Sequential(
            [
                Dense(arity * latent_dim, classifier_hidden, "relu", rng),
                Dense(classifier_hidden, 1, "identity", rng),
            ]
        )

    @classmethod
    def from_vae(
        cls,
        vae: VaeModel,
        arity: int,
        classifier_hidden: int = DEFAULT_CLASSIFIER_HIDDEN,
        margin: float = DEFAULT_MARGIN,
        threshold: float = DEFAULT_THRESHOLD,
        rng: np.random.Generator | None = None,
    ) -> "MatcherModel":
        """Fresh classifier, encoder weights copied from a representation model."""
        model = cls(
            input_dim=vae.input_dim,
            hidden_dim=vae.hidden_dim,
            latent_dim=vae.latent_dim,
            arity=arity,
            classifier_hidden=classifier_hidden,
            margin=margin,
            threshold=threshold,
            input_scale=vae.input_scale,
            rng=rng,
        )
        model.trunk.weights = vae.trunk.weights.copy()
        model.trunk.bias = vae.trunk.bias.copy()
        model.mu_head.weights = vae.mu_head.weights.copy()
        model.mu_head.bias = vae.mu_head.bias.copy()
        model.logvar_head.weights = vae.logvar_head.weights.copy()
        model.logvar_head.bias = vae.logvar_head.bias.copy()
        return model

    @property
    def params(self) -> list[np.ndarray]:
        return (
            self.trunk.params
            + self.mu_head.params
            + self.logvar_head.params
            + self.classifier.params
        )

    @property
    def grads(self) -> list[np.ndarray]:
        return (
            self.trunk.grads
            + self.mu_head.grads
            + self.logvar_head.grads
            + self.classifier.grads
        )

    def zero_grads(self) -> None:
        self.trunk.zero_grads()
        self.mu_head.zero_grads()
        self.logvar_head.zero_grads()
        self.classifier.zero_grads()

    def encode(self, ir: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Encoder shared by both Siamese heads (same contract as the VAE's)."""
        ir = np.asarray(ir, dtype=np.float64)
        if ir.shape[-1] != self.input_dim:
            raise DimensionMismatch(
                f"IR dimension {ir.shape[-1]} does not match matcher input dimension {self.input_dim}"
            )
        hidden = self.trunk.forward(ir * self.input_scale)
        mu = self.mu_head.forward(hidden)
        sigma = np.exp(0.5 * self.logvar_head.forward(hidden))
        return mu, sigma

    def represent(self, record_irs: np.ndarray) -> GaussianRepr:
        mu, sigma = self.encode(record_irs)
        return GaussianRepr(mu=mu, sigma=sigma)

    def _check_pair_shape(self, s_irs: np.ndarray, t_irs: np.ndarray) -> None:
        if s_irs.shape != t_irs.shape:
            raise DimensionMismatch(f"pair shapes differ: {s_irs.shape} vs {t_irs.shape}")
        if s_irs.shape[-2] != self.arity:
            raise DimensionMismatch(
                f"records have {s_irs.shape[-2]} attributes, matcher expects {self.arity}"
            )

    def forward_batch(self, s_irs: np.ndarray, t_irs: np.ndarray) -> np.ndarray:
        """Duplicate probabilities for a batch of pairs, shapes (n, m, d)."""
        s_irs = np.asarray(s_irs, dtype=np.float64)
        t_irs = np.asarray(t_irs, dtype=np.float64)
        self._check_pair_shape(s_irs, t_irs)
        n = s_irs.shape[0]
        mu_s, sig_s = self.encode(s_irs.reshape(-1, self.input_dim))
        mu_t, sig_t = self.encode(t_irs.reshape(-1, self.input_dim))
        dvec = (mu_s - mu_t) ** 2 + (sig_s - sig_t) ** 2
        features = (
            dvec.reshape(n, self.arity * self.latent_dim) - self.feature_mean
        ) * self.feature_inv_std
        logits = self.classifier.forward(features)
        return sigmoid(logits.reshape(-1))


def match_forward(model: MatcherModel, s_irs: np.ndarray, t_irs: np.ndarray) -> float:
    """Duplicate probability for one pair of record IR matrices (m, d)."""
    s_irs = np.asarray(s_irs, dtype=np.float64)
    t_irs = np.asarray(t_irs, dtype=np.float64)
    return float(model.forward_batch(s_irs[np.newaxis], t_irs[np.newaxis])[0])


def contrastive_loss(
    prob: float,
    label: int,
    repr_s: GaussianRepr,
    repr_t: GaussianRepr,
    margin: float = DEFAULT_MARGIN,
) -> float:
    """Cross-entropy of the prediction plus the margin contrastive distance term.

    Distances are the raw per-attribute squared 2-Wasserstein values averaged
    over attributes: duplicates (label 1) contribute the distance itself,
    non-duplicates contribute max(0, margin - distance), so no effort is spent
    on pairs already separated by the margin. Training uses the same form in
    normalized distance units (see MatcherModel.distance_scale).
    """
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    p = min(max(float(prob), 1e-300), 1.0 - 1e-16)
    bce = -(label * np.log(p) + (1 - label) * np.log(1.0 - p))
    per_attr, _ = pair_w2(repr_s, repr_t)
    pull = label * per_attr
    push = (1 - label) * np.maximum(0.0, margin - per_attr)
    return float(bce + (pull + push).mean())


def _batch_loss_and_backward(
    model: MatcherModel,
    s_irs: np.ndarray,
    t_irs: np.ndarray,
    labels: np.ndarray,
    accumulate_grads: bool = True,
) -> float:
    """Mean pair loss over a batch; optionally accumulates all gradients."""
    n, m, d = s_irs.shape
    k = model.latent_dim

    hid_s, trunk_cache_s = model.trunk.forward_cached(s_irs.reshape(-1, d) * model.input_scale)
    mu_s, mu_cache_s = model.mu_head.forward_cached(hid_s)
    lv_s, lv_cache_s = model.logvar_head.forward_cached(hid_s)
    sig_s = np.exp(0.5 * lv_s)
    hid_t, trunk_cache_t = model.trunk.forward_cached(t_irs.reshape(-1, d) * model.input_scale)
    mu_t, mu_cache_t = model.mu_head.forward_cached(hid_t)
    lv_t, lv_cache_t = model.logvar_head.forward_cached(hid_t)
    sig_t = np.exp(0.5 * lv_t)

    dvec = (mu_s - mu_t) ** 2 + (sig_s - sig_t) ** 2  # (n*m, k)
    features = (dvec.reshape(n, m * k) - model.feature_mean) * model.feature_inv_std
    logits_2d, clf_caches = model.classifier.forward_cached(features)
    logits = logits_2d.reshape(-1)
    probs = sigmoid(logits)

    # Numerically stable BCE: log(1 + e^logit) - label * logit.
    bce = np.logaddexp(0.0, logits) - labels * logits
    # Contrastive distances in normalized units: coordinate means of the
    # scaled squared distances, commensurate with the margin.
    per_attr = dvec.reshape(n, m, k).mean(axis=2) * model.distance_scale  # (n, m)
    pull = labels[:, np.newaxis] * per_attr
    push = (1.0 - labels[:, np.newaxis]) * np.maximum(0.0, model.margin - per_attr)
    loss = float(np.mean(bce + (pull + push).mean(axis=1)))

    if not accumulate_grads:
        return loss

    g_logits = (probs - labels) / n
    g_features = model.classifier.backward(g_logits.reshape(n, 1), clf_caches)
    g_dvec = (g_features * model.feature_inv_std).reshape(n * m, k)
    # Margin term: d/d per_attr = (label - (1-label)*[per_attr < margin]) / (n*m),
    # spread over the k coordinates each attribute block averages.
    hinge_active = (per_attr < model.margin).astype(np.float64)
    g_per_attr = (labels[:, np.newaxis] - (1.0 - labels[:, np.newaxis]) * hinge_active) / (n * m)
    g_dvec = g_dvec + np.repeat(g_per_attr.reshape(n * m, 1), k, axis=1) * (
        model.distance_scale / k
    )

    g_mu_s = g_dvec * 2.0 * (mu_s - mu_t)
    g_sig_s = g_dvec * 2.0 * (sig_s - sig_t)
    g_lv_s = g_sig_s * 0.5 * sig_s
    g_lv_t = -g_sig_s * 0.5 * sig_t

    g_hid_s = model.mu_head.backward(g_mu_s, mu_cache_s)
    g_hid_s = g_hid_s + model.logvar_head.backward(g_lv_s, lv_cache_s)
    model.trunk.backward(g_hid_s, trunk_cache_s)
    g_hid_t = model.mu_head.backward(-g_mu_s, mu_cache_t)
    g_hid_t = g_hid_t + model.logvar_head.backward(g_lv_t, lv_cache_t)
    model.trunk.backward(g_hid_t, trunk_cache_t)
    return loss


def matcher_loss_and_grads(
    model: MatcherModel, s_irs: np.ndarray, t_irs: np.ndarray, labels: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean contrastive loss over pairs plus gradients for all parameters."""
    s_irs = np.asarray(s_irs, dtype=np.float64)
    t_irs = np.asarray(t_irs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    model.zero_grads()
    loss = _batch_loss_and_backward(model, s_irs, t_irs, labels)
    return loss, [g.copy() for g in model.grads]


@dataclass
class MatchResult:
    model: MatcherModel
    holdout_f1: float
    holdout_size: int
    f1_history: list[float] = field(default_factory=list)
    loss_history: list[float] = field(default_factory=list)


def _stratified_split(
    labels: np.ndarray, holdout_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    train_idx, hold_idx = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_hold = int(round(len(idx) * holdout_fraction))
        n_hold = min(n_hold, len(idx) - 1)  # keep at least one per class in train
        hold_idx.extend(idx[:n_hold])
        train_idx.extend(idx[n_hold:])
    return np.sort(np.array(train_idx, dtype=int)), np.sort(np.array(hold_idx, dtype=int))


def _holdout_f1(model: MatcherModel, s: np.ndarray, t: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    probs = model.forward_batch(s, t)
    preds = {(str(i), str(i)): int(p > model.threshold) for i, p in enumerate(probs)}
    truth = PairSet(tuple((str(i), str(i), int(y)) for i, y in enumerate(labels)))
    return prf1(preds, truth).f1


def train_matcher(
    s_irs: np.ndarray,
    t_irs: np.ndarray,
    labels: np.ndarray,
    vae: VaeModel,
    config: MatchConfig | None = None,
) -> MatchResult:
    """Train the Siamese matcher on labeled pairs of record IR matrices.

    The encoder starts from the representation model's weights (or random
    with ``init='random'``) and is fine-tuned together with the classifier.
    A stratified fraction of the pairs is held out and its F1 is reported per
    epoch. Deterministic given the seed.
    """
    config = config or MatchConfig()
    s_irs = np.asarray(s_irs, dtype=np.float64)
    t_irs = np.asarray(t_irs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if s_irs.ndim != 3 or s_irs.shape != t_irs.shape or len(labels) != s_irs.shape[0]:
        raise ValueError(
            f"expected matching (pairs, attributes, ir dim) tensors, got {s_irs.shape} / "
            f"{t_irs.shape} with {len(labels)} labels"
        )
    classes = set(np.unique(labels).tolist())
    if classes != {0.0, 1.0}:
        raise ValueError(f"training pairs must contain both classes, got labels {sorted(classes)}")

    n, m, d = s_irs.shape
    if d != vae.input_dim:
        raise DimensionMismatch(
            f"pair IR dimension {d} does not match representation model input {vae.input_dim}"
        )
    rng = np.random.default_rng(config.seed)
    if config.init == "vae":
        model = MatcherModel.from_vae(
            vae,
            arity=m,
            classifier_hidden=config.classifier_hidden,
            margin=config.margin,
            threshold=config.threshold,
            rng=rng,
        )
    elif config.init == "random":
        model = MatcherModel(
            input_dim=d,
            hidden_dim=vae.hidden_dim,
            latent_dim=vae.latent_dim,
            arity=m,
            classifier_hidden=config.classifier_hidden,
            margin=config.margin,
            threshold=config.threshold,
            rng=rng,
        )
    else:
        raise ValueError(f"unknown init {config.init!r}")

    train_idx, hold_idx = _stratified_split(labels, config.holdout_fraction, rng)
    tr_s, tr_t, tr_y = s_irs[train_idx], t_irs[train_idx], labels[train_idx]
    ho_s, ho_t, ho_y = s_irs[hold_idx], t_irs[hold_idx], labels[hold_idx]

    # Fit both normalizations once, from the initial encoder: the scalar puts
    # squared-distance coordinates at O(1) (margin units), the per-feature
    # affine standardizes the classifier input.
    mu_s, sig_s = model.encode(tr_s.reshape(-1, d))
    mu_t, sig_t = model.encode(tr_t.reshape(-1, d))
    raw = (mu_s - mu_t) ** 2 + (sig_s - sig_t) ** 2
    rms = float(np.sqrt(np.mean(raw**2)))
    model.distance_scale = 1.0 / rms if rms > 0 else 1.0
    flat = raw.reshape(len(tr_y), m * model.latent_dim)
    model.feature_mean = flat.mean(axis=0)
    model.feature_inv_std = 1.0 / np.maximum(flat.std(axis=0), 1e-9)

    optimizer = Adam(model.params, learning_rate=config.learning_rate)
    f1_history: list[float] = []
    loss_history: list[float] = []
    n_train = len(tr_y)
    for _ in range(config.epochs):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = order[start : start + config.batch_size]
            model.zero_grads()
            loss = _batch_loss_and_backward(model, tr_s[idx], tr_t[idx], tr_y[idx])
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite matcher loss on batch starting at {start}")
            epoch_loss += loss * len(idx)
            optimizer.step(model.params, model.grads)
        loss_history.append(epoch_loss / n_train)
        f1_history.append(_holdout_f1(model, ho_s, ho_t, ho_y))
    return MatchResult(
        model=model,
        holdout_f1=f1_history[-1] if f1_history else 0.0,
        holdout_size=len(ho_y),
        f1_history=f1_history,
        loss_history=loss_history,
    )


def predict(
    model: MatcherModel,
    pairs: list[tuple[np.ndarray, np.ndarray]],
    threshold: float | None = None,
) -> list[tuple[float, int]]:
    """(probability, label) per pair; label 1 iff probability strictly exceeds
    the threshold (default 0.5), so p = 0.5 exactly is a non-duplicate."""
    if threshold is None:
        threshold = model.threshold
    if not pairs:
        return []
    s = np.stack([p[0] for p in pairs])
    t = np.stack([p[1] for p in pairs])
    probs = model.forward_batch(s, t)
    return [(float(p), int(p > threshold)) for p in probs]


def save_matcher(model: MatcherModel, path: str | Path, vae_fingerprint: str = "") -> None:
    """Serialize to a versioned JSON document mirroring the representation file."""
    doc = {
        "format": MATCHER_FORMAT,
        "format_version": MATCHER_FORMAT_VERSION,
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "latent_dim": model.latent_dim,
        "arity": model.arity,
        "classifier_hidden": model.classifier_hidden,
        "margin": model.margin,
        "threshold": model.threshold,
        "input_scale": model.input_scale,
        "distance_scale": model.distance_scale,
        "feature_mean": model.feature_mean.tolist(),
        "feature_inv_std": model.feature_inv_std.tolist(),
        "vae_fingerprint": vae_fingerprint,
        "weights": {
            "trunk_w": model.trunk.weights.tolist(),
            "trunk_b": model.trunk.bias.tolist(),
            "mu_w": model.mu_head.weights.tolist(),
            "mu_b": model.mu_head.bias.tolist(),
            "logvar_w": model.logvar_head.weights.tolist(),
            "logvar_b": model.logvar_head.bias.tolist(),
            "clf1_w": model.classifier.layers[0].weights.tolist(),
            "clf1_b": model.classifier.layers[0].bias.tolist(),
            "clf2_w": model.classifier.layers[1].weights.tolist(),
            "clf2_b": model.classifier.layers[1].bias.tolist(),
        },
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_matcher(path: str | Path) -> MatcherModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MATCHER_FORMAT:
        raise ModelFormatError(f"{path}: not a matching model file")
    if doc.get("format_version") != MATCHER_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format version {doc.get('format_version')} unsupported "
            f"(expected {MATCHER_FORMAT_VERSION})"
        )
    model = MatcherModel(
        input_dim=doc["input_dim"],
        hidden_dim=doc["hidden_dim"],
        latent_dim=doc["latent_dim"],
        arity=doc["arity"],
        classifier_hidden=doc["classifier_hidden"],
        margin=doc["margin"],
        threshold=doc["threshold"],
        input_scale=doc.get("input_scale", 1.0),
        distance_scale=doc.get("distance_scale", 1.0),
        feature_mean=np.array(doc["feature_mean"]) if "feature_mean" in doc else None,
        feature_inv_std=np.array(doc["feature_inv_std"]) if "feature_inv_std" in doc else None,
    )
    w = doc["weights"]
    model.trunk.weights = np.array(w["trunk_w"])
    model.trunk.bias = np.array(w["trunk_b"])
    model.mu_head.weights = np.array(w["mu_w"])
    model.mu_head.bias = np.array(w["mu_b"])
    model.logvar_head.weights = np.array(w["logvar_w"])
    model.logvar_head.bias = np.array(w["logvar_b"])
    model.classifier.layers[0].weights = np.array(w["clf1_w"])
    model.classifier.layers[0].bias = np.array(w["clf1_b"])
    model.classifier.layers[1].weights = np.array(w["clf2_w"])
    model.classifier.layers[1].bias = np.array(w["clf2_b"])
    return model
