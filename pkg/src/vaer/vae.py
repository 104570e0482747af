"""Probabilistic record representations.

A shared-parameter Gaussian autoencoder maps each attribute IR to a diagonal
Gaussian in latent space: the encoder produces (mu, sigma) per attribute, a
reparameterized sample is decoded back, and training minimizes squared
reconstruction error plus the KL divergence to the standard normal prior. A
record is represented by its m (mu, sigma) pairs. Because the model sees only
numeric IR vectors and never a vocabulary, a trained model can be reused on
any table whose IRs have the same dimension.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nnkit import Adam, Dense, Sequential

MODEL_FORMAT = "vaer-representation-model"
MODEL_FORMAT_VERSION = 1

DEFAULT_HIDDEN_DIM = 200
DEFAULT_LATENT_DIM = 100


class DimensionMismatch(ValueError):
    """Raised when an input dimension does not match a model's expectation."""


class ModelFormatError(ValueError):
    """Raised when a serialized model file cannot be used."""


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class GaussianRepr:
    """Per-record representation: row i holds (mu, sigma) of attribute i."""

    mu: np.ndarray  # (m, k)
    sigma: np.ndarray  # (m, k), strictly positive

    @property
    def arity(self) -> int:
        return self.mu.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.mu.shape[1]

    def concat_mu(self) -> np.ndarray:
        return self.mu.reshape(-1)

    def concat_sigma(self) -> np.ndarray:
        return self.sigma.reshape(-1)


@dataclass
class VaeTrainConfig:
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    learning_rate: float = 1e-3
    hidden_dim: int = DEFAULT_HIDDEN_DIM
    latent_dim: int = DEFAULT_LATENT_DIM
    # Stop after ``patience`` consecutive epochs improving less than this fraction.
    min_rel_improvement: float = 1e-3
    patience: int = 3


class VaeModel:
    """Encoder (trunk + mu/log-variance heads) and mirrored decoder."""

    def __init__(
        self,
        input_dim: int,
        hidden_dim: int = DEFAULT_HIDDEN_DIM,
        latent_dim: int = DEFAULT_LATENT_DIM,
        arity: int | None = None,
        ir_fingerprint: str = "",
        input_scale: float = 1.0,
        rng: np.random.Generator | None = None,
    ):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self.arity = arity
        self.ir_fingerprint = ir_fingerprint
        # IRs are standardized to unit coordinate RMS before entering the
        # network; the unit-variance reconstruction likelihood is only
        # informative at that scale. The factor is fitted once from the
        # training tensor and travels with the model.
        self.input_scale = input_scale
        self.trunk = Dense(input_dim, hidden_dim, "relu", rng)
        self.mu_head = Dense(hidden_dim, latent_dim, "identity", rng)
        self.logvar_head = Dense(hidden_dim, latent_dim, "identity", rng)
        self.decoder = Sequential(
            [Dense(latent_dim, hidden_dim, "relu", rng), Dense(hidden_dim, input_dim, "identity", rng)]
        )
        self.train_history: list[float] = []

    @property
    def params(self) -> list[np.ndarray]:
        return (
            self.trunk.params + self.mu_head.params + self.logvar_head.params + self.decoder.params
        )

    @property
    def grads(self) -> list[np.ndarray]:
        return (
            self.trunk.grads + self.mu_head.grads + self.logvar_head.grads + self.decoder.grads
        )

    def zero_grads(self) -> None:
        self.trunk.zero_grads()
        self.mu_head.zero_grads()
        self.logvar_head.zero_grads()
        self.decoder.zero_grads()

    def encode(self, ir: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map IR vectors to (mu, sigma); sigma = exp(logvar / 2) is positive."""
        ir = np.asarray(ir, dtype=np.float64)
        if ir.shape[-1] != self.input_dim:
            raise DimensionMismatch(
                f"IR dimension {ir.shape[-1]} does not match model input dimension {self.input_dim}"
            )
        hidden = self.trunk.forward(ir * self.input_scale)
        mu = self.mu_head.forward(hidden)
        sigma = np.exp(0.5 * self.logvar_head.forward(hidden))
        return mu, sigma

    def decode(self, z: np.ndarray) -> np.ndarray:
        """Reconstruct standardized IRs from latent vectors."""
        return self.decoder.forward(z)


def reparameterize(mu: np.ndarray, sigma: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Deterministic sampling z = mu + sigma * noise with noise ~ N(0, I)."""
    return mu + sigma * noise


def kl_to_standard_normal(mu: np.ndarray, sigma: np.ndarray) -> float:
    """Closed-form KL(N(mu, diag(sigma^2)) || N(0, I)); non-negative."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    return float(0.5 * np.sum(sigma**2 + mu**2 - 1.0 - np.log(sigma**2)))


def _rows_forward(model: VaeModel, rows: np.ndarray, noise: np.ndarray):
    """Forward pass over raw IR rows; returns per-row losses and all caches.

    Standardization happens here, so losses and reconstructions live in the
    scaled space the model was trained in.
    """
    rows = rows * model.input_scale
    hidden, trunk_cache = model.trunk.forward_cached(rows)
    mu, mu_cache = model.mu_head.forward_cached(hidden)
    logvar, lv_cache = model.logvar_head.forward_cached(hidden)
    sigma = np.exp(0.5 * logvar)
    z = mu + sigma * noise
    recon, dec_caches = model.decoder.forward_cached(z)
    recon_loss = np.sum((rows - recon) ** 2, axis=-1)
    kl = 0.5 * np.sum(np.exp(logvar) + mu**2 - 1.0 - logvar, axis=-1)
    caches = (trunk_cache, mu_cache, lv_cache, dec_caches, mu, logvar, sigma, z, recon)
    return recon_loss, kl, caches


def _rows_backward(model: VaeModel, rows: np.ndarray, noise: np.ndarray, caches, scale: float):
    """Accumulate gradients of scale * sum_rows(recon + kl) into the model."""
    trunk_cache, mu_cache, lv_cache, dec_caches, mu, logvar, sigma, _, recon = caches
    g_recon = scale * 2.0 * (recon - rows * model.input_scale)
    g_z = model.decoder.backward(g_recon, dec_caches)
    g_mu = g_z + scale * mu
    g_logvar = g_z * noise * 0.5 * sigma + scale * 0.5 * (np.exp(logvar) - 1.0)
    g_hidden = model.mu_head.backward(g_mu, mu_cache)
    g_hidden = g_hidden + model.logvar_head.backward(g_logvar, lv_cache)
    model.trunk.backward(g_hidden, trunk_cache)


def _as_rows(ir_batch: np.ndarray, input_dim: int) -> np.ndarray:
    arr = np.asarray(ir_batch, dtype=np.float64)
    if arr.shape[-1] != input_dim:
        raise DimensionMismatch(
            f"IR dimension {arr.shape[-1]} does not match model input dimension {input_dim}"
        )
    return arr.reshape(-1, input_dim)


def vae_loss(ir_batch: np.ndarray, model: VaeModel, noise: np.ndarray) -> float:
    """Mean per-record loss: sum over attributes of squared error + KL.

    ``ir_batch`` has shape (n, m, d) and ``noise`` (n, m, k); the same noise
    makes the value reproducible and differentiable for gradient checks.
    """
    ir_batch = np.asarray(ir_batch, dtype=np.float64)
    n_records = ir_batch.shape[0] if ir_batch.ndim == 3 else 1
    rows = _as_rows(ir_batch, model.input_dim)
    eps = np.asarray(noise, dtype=np.float64).reshape(-1, model.latent_dim)
    recon_loss, kl, _ = _rows_forward(model, rows, eps)
    return float((recon_loss + kl).sum() / n_records)


def vae_loss_and_grads(
    ir_batch: np.ndarray, model: VaeModel, noise: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Loss as in :func:`vae_loss` plus gradients for every model parameter."""
    ir_batch = np.asarray(ir_batch, dtype=np.float64)
    n_records = ir_batch.shape[0] if ir_batch.ndim == 3 else 1
    rows = _as_rows(ir_batch, model.input_dim)
    eps = np.asarray(noise, dtype=np.float64).reshape(-1, model.latent_dim)
    recon_loss, kl, caches = _rows_forward(model, rows, eps)
    model.zero_grads()
    _rows_backward(model, rows, eps, caches, scale=1.0 / n_records)
    return float((recon_loss + kl).sum() / n_records), [g.copy() for g in model.grads]


def train_vae(
    ir_tensors: np.ndarray,
    config: VaeTrainConfig | None = None,
    ir_fingerprint: str = "",
) -> VaeModel:
    """Train a representation model on an (n, m, d) tensor of record IRs.

    Training is single-threaded and deterministic given the seed; the epoch
    mean loss is recorded in ``model.train_history``. Aborts if the loss
    becomes non-finite.
    """
    config = config or VaeTrainConfig()
    ir_tensors = np.asarray(ir_tensors, dtype=np.float64)
    if ir_tensors.ndim != 3:
        raise ValueError(f"expected (records, attributes, ir dim) tensor, got shape {ir_tensors.shape}")
    n_records, arity, input_dim = ir_tensors.shape
    if n_records < 1:
        raise ValueError("need at least one record to train")

    rng = np.random.default_rng(config.seed)
    coord_rms = float(np.sqrt(np.mean(ir_tensors**2)))
    model = VaeModel(
        input_dim=input_dim,
        hidden_dim=config.hidden_dim,
        latent_dim=config.latent_dim,
        arity=arity,
        ir_fingerprint=ir_fingerprint,
        input_scale=1.0 / coord_rms if coord_rms > 0 else 1.0,
        rng=rng,
    )
    optimizer = Adam(model.params, learning_rate=config.learning_rate)

    rows = ir_tensors.reshape(-1, input_dim)
    n_rows = rows.shape[0]
    stall_streak = 0
    prev_epoch_loss = None
    for epoch in range(config.epochs):
        order = rng.permutation(n_rows)
        epoch_loss = 0.0
        for start in range(0, n_rows, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = rows[idx]
            eps = rng.standard_normal((len(idx), config.latent_dim))
            recon_loss, kl, caches = _rows_forward(model, batch, eps)
            batch_loss = float((recon_loss + kl).sum())
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch + 1}, rows {start}..{start + len(idx)}: "
                    f"recon={recon_loss.sum():.4g} kl={kl.sum():.4g}"
                )
            epoch_loss += batch_loss
            model.zero_grads()
            _rows_backward(model, batch, eps, caches, scale=1.0 / len(idx))
            optimizer.step(model.params, model.grads)
        mean_record_loss = epoch_loss / n_records
        model.train_history.append(mean_record_loss)
        if prev_epoch_loss is not None:
            improved = (prev_epoch_loss - mean_record_loss) / max(abs(prev_epoch_loss), 1e-12)
            stall_streak = stall_streak + 1 if improved < config.min_rel_improvement else 0
            if stall_streak >= config.patience:
                break
        prev_epoch_loss = mean_record_loss
    return model


def represent_record(model: VaeModel, record_irs: np.ndarray) -> GaussianRepr:
    """Encode one record's (m, d) IR matrix into its Gaussian representation."""
    record_irs = np.asarray(record_irs, dtype=np.float64)
    if record_irs.ndim != 2:
        raise ValueError(f"expected an (attributes, ir dim) matrix, got shape {record_irs.shape}")
    if model.arity is not None and record_irs.shape[0] != model.arity:
        raise DimensionMismatch(
            f"record has {record_irs.shape[0]} attributes but the model was trained on "
            f"{model.arity}; align the table with corpus.align_arity(table, {model.arity}) first"
        )
    mu, sigma = model.encode(record_irs)
    return GaussianRepr(mu=mu, sigma=sigma)


def represent_table(model: VaeModel, table_tensor: np.ndarray) -> list[GaussianRepr]:
    """Encode an (n, m, d) tensor into one GaussianRepr per record."""
    table_tensor = np.asarray(table_tensor, dtype=np.float64)
    n, m, d = table_tensor.shape
    if model.arity is not None and m != model.arity:
        raise DimensionMismatch(
            f"records have {m} attributes but the model was trained on {model.arity}; "
            f"align the table with corpus.align_arity(table, {model.arity}) first"
        )
    mu, sigma = model.encode(table_tensor.reshape(-1, d))
    mu = mu.reshape(n, m, model.latent_dim)
    sigma = sigma.reshape(n, m, model.latent_dim)
    return [GaussianRepr(mu=mu[i], sigma=sigma[i]) for i in range(n)]


def _weights_payload(model: VaeModel) -> dict:
    return {
        "trunk_w": model.trunk.weights.tolist(),
        "trunk_b": model.trunk.bias.tolist(),
        "mu_w": model.mu_head.weights.tolist(),
        "mu_b": model.mu_head.bias.tolist(),
        "logvar_w": model.logvar_head.weights.tolist(),
        "logvar_b": model.logvar_head.bias.tolist(),
        "dec1_w": model.decoder.layers[0].weights.tolist(),
        "dec1_b": model.decoder.layers[0].bias.tolist(),
        "dec2_w": model.decoder.layers[1].weights.tolist(),
        "dec2_b": model.decoder.layers[1].bias.tolist(),
    }


def _load_weights(model: VaeModel, weights: dict) -> None:
    model.trunk.weights = np.array(weights["trunk_w"])
    model.trunk.bias = np.array(weights["trunk_b"])
    model.mu_head.weights = np.array(weights["mu_w"])
    model.mu_head.bias = np.array(weights["mu_b"])
    model.logvar_head.weights = np.array(weights["logvar_w"])
    model.logvar_head.bias = np.array(weights["logvar_b"])
    model.decoder.layers[0].weights = np.array(weights["dec1_w"])
    model.decoder.layers[0].bias = np.array(weights["dec1_b"])
    model.decoder.layers[1].weights = np.array(weights["dec2_w"])
    model.decoder.layers[1].bias = np.array(weights["dec2_b"])


def save_model(model: VaeModel, path: str | Path) -> None:
    """Serialize to a versioned JSON document; floats round-trip exactly."""
    doc = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "latent_dim": model.latent_dim,
        "arity": model.arity,
        "ir_fingerprint": model.ir_fingerprint,
        "input_scale": model.input_scale,
        "weights": _weights_payload(model),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path, expect_input_dim: int | None = None) -> VaeModel:
    """Load a model file, checking format version and (optionally) input dim."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a representation model file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format version {doc.get('format_version')} unsupported "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    if expect_input_dim is not None and doc["input_dim"] != expect_input_dim:
        raise DimensionMismatch(
            f"{path}: model input dimension {doc['input_dim']}, expected {expect_input_dim}"
        )
    model = VaeModel(
        input_dim=doc["input_dim"],
        hidden_dim=doc["hidden_dim"],
        latent_dim=doc["latent_dim"],
        arity=doc["arity"],
        ir_fingerprint=doc.get("ir_fingerprint", ""),
        input_scale=doc.get("input_scale", 1.0),
    )
    _load_weights(model, doc["weights"])
    return model
