"""Active labeling: bootstrap, entropy/density scoring, and the labeling loop.

The loop starts from automatically labeled extremes: among LSH candidate
pairs, the ones with the smallest total squared representation distance are
taken as positives and the largest as negatives. Each iteration then asks the
labeler to decide a small batch drawn from four categories: certain and
uncertain candidates from each predicted class, scored by prediction entropy
combined with a kernel-density estimate of the latent distances observed
between known duplicates. Labeled pairs move to the labeled pools (by the
human's answer, not the predicted category), the matcher retrains from fresh
representation-initialized weights, and the density refits on the current
positives. Every label batch is appended to a journal so a session can be
resumed deterministically.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import PairSet, Record, Table
from .ir import IRProvider, table_irs
from .matcher import MatchConfig, MatcherModel, train_matcher
from .metrics import PrfResult, prf1
from .neighbors import CandidatePair, candidate_pairs
from .vae import GaussianRepr, VaeModel, represent_table

DEFAULT_BOOTSTRAP_SIZE = 15
DEFAULT_BATCH_SIZE = 10
DEFAULT_KDE_SAMPLES = 1000
SCORE_FLOOR = 1e-12

CATEGORIES = ("certain_positive", "certain_negative", "uncertain_positive", "uncertain_negative")


class LabelerAbort(Exception):
    """Raised by a labeler callback to end the session early."""


class PoolInvariantError(RuntimeError):
    """Raised when the labeled/unlabeled pools stop being disjoint."""


@dataclass(frozen=True)
class LabeledPair:
    left_id: str
    right_id: str
    label: int
    source: str  # bootstrap | human | given

    @property
    def key(self) -> tuple[str, str]:
        return (self.left_id, self.right_id)


@dataclass
class LabelPools:
    positive: dict[tuple[str, str], LabeledPair]
    negative: dict[tuple[str, str], LabeledPair]
    unlabeled: dict[tuple[str, str], CandidatePair]

    def assert_disjoint(self) -> None:
        pos, neg, unl = set(self.positive), set(self.negative), set(self.unlabeled)
        overlap = (pos & neg) | (pos & unl) | (neg & unl)
        if overlap:
            raise PoolInvariantError(f"pools overlap on {sorted(overlap)[:5]}")

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.positive), len(self.negative), len(self.unlabeled)


def binary_entropy(p) -> float | np.ndarray:
    """Entropy of a Bernoulli(p) in nats, with 0*ln(0) = 0; peaks at ln 2."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"probability outside [0, 1]: {arr[(arr < 0) | (arr > 1)][:5]}")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(arr > 0, arr * np.log(arr), 0.0) - np.where(
            arr < 1, (1.0 - arr) * np.log(1.0 - arr), 0.0
        )
    return float(h) if np.isscalar(p) else h


@dataclass(frozen=True)
class EncodedTable:
    """A table with its IR tensor and Gaussian representations, aligned by row."""

    table: Table
    irs: np.ndarray  # (n, m, d)
    reprs: dict[str, GaussianRepr]
    row_of: dict[str, int]


def encode_table(table: Table, provider: IRProvider, vae: VaeModel) -> EncodedTable:
    irs = table_irs(table, provider)
    reprs = represent_table(vae, irs)
    ids = [rec.id for rec in table.records]
    return EncodedTable(
        table=table,
        irs=irs,
        reprs=dict(zip(ids, reprs)),
        row_of={rid: i for i, rid in enumerate(ids)},
    )


def bootstrap(
    left: EncodedTable,
    right: EncodedTable,
    k: int = 10,
    n_boot: int = DEFAULT_BOOTSTRAP_SIZE,
    seed: int = 0,
) -> LabelPools:
    """Seed the labeled pools from the distance extremes of the candidate pool.

    The n_boot candidate pairs with the smallest total squared distance become
    positives, the n_boot largest become negatives, and both are removed from
    the unlabeled pool.
    """
    pool = candidate_pairs(left.reprs, right.reprs, k=k, seed=seed)
    if len(pool) < 2 * n_boot:
        raise ValueError(
            f"candidate pool has {len(pool)} pairs, need at least {2 * n_boot}; "
            f"increase the number of neighbors k (currently {k})"
        )
    ranked = sorted(pool, key=lambda c: (c.w2_total, c.key))
    positives = ranked[:n_boot]
    negatives = ranked[-n_boot:]
    taken = {c.key for c in positives} | {c.key for c in negatives}
    return LabelPools(
        positive={
            c.key: LabeledPair(c.left_id, c.right_id, 1, "bootstrap") for c in positives
        },
        negative={
            c.key: LabeledPair(c.left_id, c.right_id, 0, "bootstrap") for c in negatives
        },
        unlabeled={c.key: c for c in ranked if c.key not in taken},
    )


def positive_distance_distribution(
    pairs: Sequence[tuple[str, str]],
    left_reprs: Mapping[str, GaussianRepr],
    right_reprs: Mapping[str, GaussianRepr],
    n_samples: int = DEFAULT_KDE_SAMPLES,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Sampled latent distances between known-duplicate representations.

    For every pair, draws n_samples reparameterized latent vectors from each
    side and records the Euclidean distance between them (concatenated over
    attributes), giving len(pairs) * n_samples observations.
    """
    if not pairs:
        raise ValueError("need at least one positive pair")
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = rng or np.random.default_rng(0)
    out = []
    for left_id, right_id in pairs:
        rs, rt = _repr_lookup(left_reprs, left_id), _repr_lookup(right_reprs, right_id)
        mu_s, sig_s = rs.concat_mu(), rs.concat_sigma()
        mu_t, sig_t = rt.concat_mu(), rt.concat_sigma()
        z_s = mu_s + sig_s * rng.standard_normal((n_samples, mu_s.size))
        z_t = mu_t + sig_t * rng.standard_normal((n_samples, mu_t.size))
        out.append(np.linalg.norm(z_s - z_t, axis=1))
    return np.concatenate(out)


def _repr_lookup(reprs: Mapping[str, GaussianRepr], rid: str) -> GaussianRepr:
    try:
        return reprs[rid]
    except KeyError:
        raise KeyError(f"no representation for record id {rid!r}") from None


@dataclass
class KdeDensity:
    """Univariate Gaussian-kernel density over sampled duplicate distances."""

    points: np.ndarray
    bandwidth: float

    def evaluate(self, x) -> np.ndarray:
        """Exact density (1/nh) * sum_i phi((x - d_i) / h) at the given points."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.empty(len(x))
        n, h = len(self.points), self.bandwidth
        norm = 1.0 / (n * h * np.sqrt(2.0 * np.pi))
        # Chunked so large sample sets never materialize a huge matrix.
        for start in range(0, len(x), 256):
            block = x[start : start + 256, np.newaxis]
            out[start : start + 256] = norm * np.exp(
                -0.5 * ((block - self.points[np.newaxis, :]) / h) ** 2
            ).sum(axis=1)
        return out

    def grid_evaluator(self, n_grid: int = 4096) -> Callable[[np.ndarray], np.ndarray]:
        """Linear interpolation on a precomputed grid; fast path for scoring
        large candidate pools, accurate to interpolation error."""
        lo = float(self.points.min()) - 5.0 * self.bandwidth
        hi = float(self.points.max()) + 5.0 * self.bandwidth
        grid = np.linspace(lo, hi, n_grid)
        values = self.evaluate(grid)
        return lambda x: np.interp(np.asarray(x, dtype=np.float64), grid, values)


def fit_kde(distances: np.ndarray) -> KdeDensity:
    """Gaussian-kernel KDE with Silverman bandwidth 1.06 * std * n^(-1/5).

    Zero-variance samples fall back to a fixed minimum bandwidth of 1e-3.
    """
    distances = np.asarray(distances, dtype=np.float64)
    if distances.size < 2:
        raise ValueError(f"need at least 2 distance samples, got {distances.size}")
    std = float(np.std(distances))
    bandwidth = 1.06 * std * distances.size ** (-0.2) if std > 0 else 1e-3
    return KdeDensity(points=distances, bandwidth=bandwidth)


@dataclass(frozen=True)
class SelectedPair:
    pair: CandidatePair
    category: str
    probability: float
    entropy: float
    density: float
    score: float


def split_batch(batch_size: int) -> tuple[int, int, int, int]:
    """Category quotas, remainder assigned in priority order (c+, c-, u+, u-)."""
    base, rem = divmod(batch_size, 4)
    return tuple(base + (1 if i < rem else 0) for i in range(4))  # type: ignore[return-value]


def select_samples(
    candidates: Sequence[CandidatePair],
    probs: np.ndarray,
    densities: np.ndarray,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> list[SelectedPair]:
    """Pick a batch across the four categories by ascending score.

    The pool splits on probability > 0.5. Scores: certain positives
    H * 1/f, certain negatives H * f, uncertain positives (1/H) * f, uncertain
    negatives (1/H) * (1/f), where H is the prediction entropy and f the
    duplicate-distance density at the pair's latent distance. Reciprocals are
    floored at 1e-12; pairs with H at the floor (saturated predictions) get an
    infinite uncertain score and are excluded from the uncertain categories.
    A pair is selected in at most one category, priority in the order above;
    an empty predicted class leaves its categories empty.
    """
    probs = np.asarray(probs, dtype=np.float64)
    densities = np.asarray(densities, dtype=np.float64)
    entropy = binary_entropy(probs)
    pos_mask = probs > 0.5
    inv_density = 1.0 / np.maximum(densities, SCORE_FLOOR)
    inv_entropy = 1.0 / np.maximum(entropy, SCORE_FLOOR)
    saturated = entropy <= SCORE_FLOOR

    scores = {
        "certain_positive": np.where(pos_mask, entropy * inv_density, np.inf),
        "certain_negative": np.where(~pos_mask, entropy * densities, np.inf),
        "uncertain_positive": np.where(
            pos_mask & ~saturated, inv_entropy * densities, np.inf
        ),
        "uncertain_negative": np.where(
            ~pos_mask & ~saturated, inv_entropy * inv_density, np.inf
        ),
    }
    quotas = dict(zip(CATEGORIES, split_batch(batch_size)))
    taken: set[int] = set()
    selected: list[SelectedPair] = []
    for category in CATEGORIES:
        score = scores[category]
        eligible = [i for i in np.flatnonzero(np.isfinite(score)) if i not in taken]
        eligible.sort(key=lambda i: (score[i], candidates[i].key))
        for i in eligible[: quotas[category]]:
            taken.add(i)
            selected.append(
                SelectedPair(
                    pair=candidates[i],
                    category=category,
                    probability=float(probs[i]),
                    entropy=float(entropy[i]),
                    density=float(densities[i]),
                    score=float(score[i]),
                )
            )
    return selected


@dataclass
class ALConfig:
    k: int = 10
    n_boot: int = DEFAULT_BOOTSTRAP_SIZE
    batch_size: int = DEFAULT_BATCH_SIZE
    kde_samples: int = DEFAULT_KDE_SAMPLES
    seed: int = 0
    # Labels are scarce during a session, so retraining uses all of them;
    # progress is measured on the test pairs instead of a held-out split.
    match: MatchConfig = field(default_factory=lambda: MatchConfig(holdout_fraction=0.0))


@dataclass
class IterationRecord:
    iteration: int
    labeled_positive: int
    labeled_negative: int
    unlabeled: int
    oracle_labels: int
    metrics: PrfResult | None = None
    entropy_ordering_ok: bool = True


@dataclass
class ALResult:
    matcher: MatcherModel
    history: list[IterationRecord]
    pools: LabelPools
    oracle_labels: int
    aborted: bool = False


class ALSession:
    """One mutable labeling session; scoring reads are safe to fan out,
    pool mutation happens only through apply_labels."""

    def __init__(
        self,
        left: EncodedTable,
        right: EncodedTable,
        vae: VaeModel,
        config: ALConfig | None = None,
        test_pairs: PairSet | None = None,
        journal_path: str | Path | None = None,
        session_id: str | None = None,
    ):
        self.left = left
        self.right = right
        self.vae = vae
        self.config = config or ALConfig()
        self.test_pairs = test_pairs
        self.journal_path = Path(journal_path) if journal_path else None
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.iteration = 0
        self.oracle_labels = 0
        self.history: list[IterationRecord] = []
        self.pending: list[SelectedPair] = []

        if self.journal_path and self.journal_path.exists():
            raise ValueError(
                f"journal {self.journal_path} already exists; resume it with ALSession.resume"
            )
        self.pools = bootstrap(
            left, right, k=self.config.k, n_boot=self.config.n_boot, seed=self.config.seed
        )
        self.pools.assert_disjoint()
        self._distances = {
            key: float(np.sqrt(cand.w2_total)) for key, cand in self.pools.unlabeled.items()
        }
        self.matcher: MatcherModel = self._retrain()
        self._kde = self._refit_kde()
        self._record_iteration()
        if self.journal_path:
            self._journal_write(
                {
                    "type": "header",
                    "session_id": self.session_id,
                    "seed": self.config.seed,
                    "k": self.config.k,
                    "n_boot": self.config.n_boot,
                    "batch_size": self.config.batch_size,
                    "left_table": left.table.name,
                    "right_table": right.table.name,
                }
            )

    # -- internals ---------------------------------------------------------

    def _journal_write(self, event: dict) -> None:
        if self.journal_path is None:
            return
        event = dict(event)
        event.setdefault("ts", time.time())
        with self.journal_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event) + "\n")

    def _labeled_examples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        items = list(self.pools.positive.values()) + list(self.pools.negative.values())
        s_rows = [self.left.row_of[lp.left_id] for lp in items]
        t_rows = [self.right.row_of[lp.right_id] for lp in items]
        labels = np.array([lp.label for lp in items], dtype=np.float64)
        return self.left.irs[s_rows], self.right.irs[t_rows], labels

    def _retrain(self) -> MatcherModel:
        # Fresh representation-initialized encoder and classifier every time;
        # a fixed seed keeps successive retrains comparable, so metric changes
        # across iterations reflect the new labels rather than init noise.
        s, t, y = self._labeled_examples()
        return train_matcher(s, t, y, self.vae, self.config.match).model

    def _refit_kde(self) -> KdeDensity:
        rng = np.random.default_rng(self.config.seed + 31 * self.iteration)
        d_plus = positive_distance_distribution(
            list(self.pools.positive.keys()),
            self.left.reprs,
            self.right.reprs,
            n_samples=self.config.kde_samples,
            rng=rng,
        )
        return fit_kde(d_plus)

    def _evaluate(self) -> PrfResult | None:
        if self.test_pairs is None:
            return None
        s_rows = [self.left.row_of[l] for l, _, _ in self.test_pairs]
        t_rows = [self.right.row_of[r] for _, r, _ in self.test_pairs]
        probs = self.matcher.forward_batch(self.left.irs[s_rows], self.right.irs[t_rows])
        preds = {
            (l, r): int(p > self.matcher.threshold)
            for (l, r, _), p in zip(self.test_pairs, probs)
        }
        return prf1(preds, self.test_pairs)

    def _record_iteration(self, entropy_ok: bool = True) -> None:
        pos, neg, unl = self.pools.counts
        self.history.append(
            IterationRecord(
                iteration=self.iteration,
                labeled_positive=pos,
                labeled_negative=neg,
                unlabeled=unl,
                oracle_labels=self.oracle_labels,
                metrics=self._evaluate(),
                entropy_ordering_ok=entropy_ok,
            )
        )

    def score_unlabeled(self) -> tuple[list[CandidatePair], np.ndarray, np.ndarray]:
        """Current probabilities and duplicate-distance densities over the pool."""
        cands = list(self.pools.unlabeled.values())
        if not cands:
            return [], np.empty(0), np.empty(0)
        s_rows = [self.left.row_of[c.left_id] for c in cands]
        t_rows = [self.right.row_of[c.right_id] for c in cands]
        probs = np.empty(len(cands))
        for start in range(0, len(cands), 2048):
            sl = slice(start, start + 2048)
            probs[sl] = self.matcher.forward_batch(
                self.left.irs[s_rows[sl]], self.right.irs[t_rows[sl]]
            )
        fhat = self._kde.grid_evaluator()
        densities = fhat(np.array([self._distances[c.key] for c in cands]))
        return cands, probs, densities

    # -- public session surface --------------------------------------------

    def select_batch(self) -> list[SelectedPair]:
        """Choose the next batch to label; empty when the pool is exhausted."""
        cands, probs, densities = self.score_unlabeled()
        if not cands:
            self.pending = []
            return []
        self.pending = select_samples(cands, probs, densities, self.config.batch_size)
        return self.pending

    def apply_labels(self, labels: Mapping[tuple[str, str], int]) -> IterationRecord:
        """Move the pending batch into the pools by the human labels, retrain,
        and refit the density; labels must cover exactly the pending batch."""
        pending_keys = {sp.pair.key for sp in self.pending}
        if set(labels.keys()) != pending_keys:
            raise ValueError(
                f"labels must cover the pending batch exactly; expected {sorted(pending_keys)}, "
                f"got {sorted(labels.keys())}"
            )
        certain = [sp.entropy for sp in self.pending if sp.category.startswith("certain")]
        uncertain = [sp.entropy for sp in self.pending if sp.category.startswith("uncertain")]
        entropy_ok = (not certain or not uncertain) or min(uncertain) >= min(certain) - 1e-12
        for sp in self.pending:
            key = sp.pair.key
            label = int(labels[key])
            if label not in (0, 1):
                raise ValueError(f"label for {key} must be 0 or 1, got {label}")
            pair = LabeledPair(key[0], key[1], label, "human")
            (self.pools.positive if label == 1 else self.pools.negative)[key] = pair
            del self.pools.unlabeled[key]
        self.pools.assert_disjoint()
        self._journal_write(
            {
                "type": "labels",
                "iteration": self.iteration,
                "items": [
                    {
                        "left_id": sp.pair.left_id,
                        "right_id": sp.pair.right_id,
                        "category": sp.category,
                        "label": int(labels[sp.pair.key]),
                    }
                    for sp in self.pending
                ],
            }
        )
        self.oracle_labels += len(self.pending)
        self.pending = []
        self.iteration += 1
        self.matcher = self._retrain()
        self._kde = self._refit_kde()
        self._record_iteration(entropy_ok)
        return self.history[-1]

    @classmethod
    def resume(
        cls,
        journal_path: str | Path,
        left: EncodedTable,
        right: EncodedTable,
        vae: VaeModel,
        config: ALConfig | None = None,
        test_pairs: PairSet | None = None,
    ) -> "ALSession":
        """Rebuild a session from its journal: bootstrap deterministically,
        re-apply every recorded label batch, then retrain once."""
        journal_path = Path(journal_path)
        events = [json.loads(line) for line in journal_path.read_text(encoding="utf-8").splitlines()]
        if not events or events[0].get("type") != "header":
            raise ValueError(f"{journal_path}: journal must start with a header event")
        header = events[0]
        config = config or ALConfig()
        if header["seed"] != config.seed or header["k"] != config.k or header["n_boot"] != config.n_boot:
            raise ValueError(
                f"{journal_path}: journal header (seed={header['seed']}, k={header['k']}, "
                f"n_boot={header['n_boot']}) does not match the session config"
            )
        session = cls.__new__(cls)
        session.left = left
        session.right = right
        session.vae = vae
        session.config = config
        session.test_pairs = test_pairs
        session.journal_path = journal_path
        session.session_id = header["session_id"]
        session.oracle_labels = 0
        session.history = []
        session.pending = []
        session.iteration = 0
        session.pools = bootstrap(left, right, k=config.k, n_boot=config.n_boot, seed=config.seed)
        session._distances = {
            key: float(np.sqrt(cand.w2_total)) for key, cand in session.pools.unlabeled.items()
        }
        for event in events[1:]:
            if event.get("type") != "labels":
                continue
            for item in event["items"]:
                key = (item["left_id"], item["right_id"])
                pair = LabeledPair(key[0], key[1], int(item["label"]), "human")
                (session.pools.positive if pair.label == 1 else session.pools.negative)[key] = pair
                session.pools.unlabeled.pop(key, None)
            session.oracle_labels += len(event["items"])
            session.iteration += 1
        session.pools.assert_disjoint()
        session.matcher = session._retrain()
        session._kde = session._refit_kde()
        session._record_iteration()
        return session


def al_loop(
    left: EncodedTable,
    right: EncodedTable,
    vae: VaeModel,
    labeler: Callable[[Record, Record], int],
    iterations: int,
    config: ALConfig | None = None,
    test_pairs: PairSet | None = None,
    journal_path: str | Path | None = None,
) -> ALResult:
    """Run the labeling loop with a callback labeler (e.g. a simulated oracle).

    Per iteration: select a batch, obtain one label per pair, move pairs by
    the returned labels, retrain the matcher from fresh representation-model
    weights, and refit the density. A LabelerAbort from the callback returns
    the current matcher with the aborted flag set.
    """
    session = ALSession(
        left, right, vae, config=config, test_pairs=test_pairs, journal_path=journal_path
    )
    aborted = False
    for _ in range(iterations):
        batch = session.select_batch()
        if not batch:
            break
        labels: dict[tuple[str, str], int] = {}
        try:
            for sp in batch:
                labels[sp.pair.key] = int(
                    labeler(
                        left.table.record(sp.pair.left_id), right.table.record(sp.pair.right_id)
                    )
                )
        except LabelerAbort:
            aborted = True
            break
        session.apply_labels(labels)
    return ALResult(
        matcher=session.matcher,
        history=session.history,
        pools=session.pools,
        oracle_labels=session.oracle_labels,
        aborted=aborted,
    )
