"""Online active learning over a batched stream.

Observations arrive in batches, are normalised online (running mean and
variance, applied before the new point enters the accumulators), scored for
uncertainty under the current mixture classifier, and a fixed number per
batch is sent to a label oracle. Only labelled points ever reach the model;
the rest are logged and discarded. Two uncertainty measures are available:
label-posterior entropy (boundary points) and the log marginal likelihood of
the observation (outliers under the model). The `split` strategy spends half
the budget on each; `random` is the passive baseline drawn with the same
generator structure.

A run with a fixed seed is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gmm import GmmModel, add_labeled, predict_batch
from .metrics import macro_f1

__all__ = [
    "NormalizerState",
    "normalize",
    "warm_start_normalizer",
    "normalize_matrix",
    "StreamBatch",
    "QueryBudget",
    "BatchRecord",
    "RunHistory",
    "select_queries",
    "run_stream",
]

_STD_FLOOR = 1e-8

STRATEGIES = ("entropy", "likelihood", "split", "random")


@dataclass(frozen=True)
class NormalizerState:
    """Running per-feature mean/variance accumulators (Welford)."""

    mean: np.ndarray
    m2: np.ndarray
    count: int

    @staticmethod
    def empty(d: int) -> "NormalizerState":
        return NormalizerState(mean=np.zeros(d), m2=np.zeros(d), count=0)

    @property
    def std(self) -> np.ndarray:
        if self.count == 0:
            return np.full_like(self.mean, _STD_FLOOR)
        return np.maximum(np.sqrt(self.m2 / self.count), _STD_FLOOR)


def normalize(state: NormalizerState, x: np.ndarray) -> tuple[NormalizerState, np.ndarray]:
    """Standardise x with the statistics held *before* x, then absorb x.

    The very first observation has no defined statistics and returns the
    zero vector by convention; streams are expected to warm-start the
    accumulators from an initial sample.
    """
    x = np.asarray(x, dtype=float)
    if state.count == 0:
        out = np.zeros_like(x)
    else:
        out = (x - state.mean) / state.std
    count = state.count + 1
    delta = x - state.mean
    mean = state.mean + delta / count
    m2 = state.m2 + delta * (x - mean)
    return NormalizerState(mean=mean, m2=m2, count=count), out


def warm_start_normalizer(X: np.ndarray) -> NormalizerState:
    """Absorb an initial sample without emitting normalised values."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    state = NormalizerState.empty(X.shape[1])
    for row in X:
        state, _ = normalize(state, row)
    return state


def normalize_matrix(state: NormalizerState, X: np.ndarray) -> np.ndarray:
    """Standardise rows with the current statistics, without updating them."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return (X - state.mean) / state.std


@dataclass(frozen=True)
class StreamBatch:
    """One batch of stream observations; hidden labels are oracle-only."""

    observations: np.ndarray
    hidden_labels: np.ndarray
    index_offset: int

    def __post_init__(self):
        obs = np.atleast_2d(np.asarray(self.observations, dtype=float))
        labels = np.asarray(self.hidden_labels, dtype=int)
        if obs.shape[0] < 1:
            raise ValueError("a batch needs at least one observation")
        if labels.shape[0] != obs.shape[0]:
            raise ValueError("hidden label count does not match batch size")
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "hidden_labels", labels)

    @property
    def size(self) -> int:
        return self.observations.shape[0]


@dataclass(frozen=True)
class QueryBudget:
    """Labels per batch and how to choose them."""

    q_b: int
    strategy: str = "split"

    def __post_init__(self):
        if self.q_b < 0:
            raise ValueError("q_b must be non-negative")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


@dataclass(frozen=True)
class BatchRecord:
    batch_index: int
    queried_indices: tuple[int, ...]  # positions in the stream
    queried_labels: tuple[int, ...]   # oracle responses
    entropy_scores: np.ndarray
    log_marginals: np.ndarray
    test_f1: float
    n_classes: int


@dataclass
class RunHistory:
    """Per-batch log of a streaming run plus the final model state."""

    strategy: str
    seed: int
    records: list[BatchRecord] = field(default_factory=list)
    final_model: GmmModel | None = None
    final_normalizer: NormalizerState | None = None

    def total_queries(self) -> int:
        return sum(len(r.queried_indices) for r in self.records)

    def damage_discovery_batch(self, damage_label: int) -> int:
        """First batch index at which a damage-labelled point was queried.

        Returns the number of batches when the class was never queried, so
        earlier discovery always compares as smaller.
        """
        for rec in self.records:
            if damage_label in rec.queried_labels:
                return rec.batch_index
        return len(self.records)

    def to_csv(self, path) -> None:
        lines = ["batch_index,n_queried,test_f1,K,strategy,seed"]
        for rec in self.records:
            lines.append(
                f"{rec.batch_index},{len(rec.queried_indices)},"
                f"{format(rec.test_f1, '.17g')},{rec.n_classes},{self.strategy},{self.seed}"
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _entropy_rows(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    return -terms.sum(axis=1)


def select_queries(
    model: GmmModel,
    batch: StreamBatch,
    budget: QueryBudget,
    rng: np.random.Generator | None = None,
    scores: tuple[np.ndarray, np.ndarray] | None = None,
) -> list[int]:
    """Indices (within the batch) to send to the oracle.

    entropy: highest label-posterior entropy. likelihood: lowest log
    marginal. split: ceil(q_b/2) by lowest likelihood, the rest by highest
    entropy among the remaining points. random: uniform sample (passive
    baseline; requires rng). Ties resolve toward the lower index.
    """
    n = batch.size
    q = min(budget.q_b, n)
    if q == 0:
        return []
    if budget.strategy == "random":
        if rng is None:
            raise ValueError("the random strategy needs a generator")
        return sorted(rng.choice(n, size=q, replace=False).tolist())
    if scores is None:
        probs, log_marginal = predict_batch(model, batch.observations)
        ent = _entropy_rows(probs)
    else:
        ent, log_marginal = scores
    if budget.strategy == "entropy":
        order = np.argsort(-ent, kind="stable")
        return sorted(order[:q].tolist())
    if budget.strategy == "likelihood":
        order = np.argsort(log_marginal, kind="stable")
        return sorted(order[:q].tolist())
    # split
    n_lik = math.ceil(q / 2)
    by_lik = np.argsort(log_marginal, kind="stable")[:n_lik].tolist()
    rest = [i for i in np.argsort(-ent, kind="stable").tolist() if i not in set(by_lik)]
    return sorted(by_lik + rest[: q - n_lik])


def run_stream(
    stream: list[StreamBatch],
    oracle,
    model0: GmmModel,
    budget: QueryBudget,
    test_X: np.ndarray,
    test_y: np.ndarray,
    normalizer: NormalizerState,
    seed: int = 0,
) -> RunHistory:
    """Drive the full query/update loop over a batched stream.

    `oracle(stream_index) -> external label` is consulted only for selected
    indices. External labels map to dense internal class ids in discovery
    order (the initial model's single class is external label 1). After each
    batch the test set is scored with the current normaliser statistics.
    Unqueried observations never reach the model.
    """
    rng = np.random.default_rng(seed)
    history = RunHistory(strategy=budget.strategy, seed=seed)
    model = model0
    state = normalizer
    ext_to_int = {1: 1}
    int_to_ext = {1: 1}

    for batch_idx, batch in enumerate(stream):
        rows = np.empty_like(batch.observations)
        for i, row in enumerate(batch.observations):
            state, rows[i] = normalize(state, row)
        norm_batch = StreamBatch(
            observations=rows,
            hidden_labels=batch.hidden_labels,
            index_offset=batch.index_offset,
        )
        probs, log_marginal = predict_batch(model, rows)
        ent = _entropy_rows(probs)
        selected = select_queries(model, norm_batch, budget, rng=rng, scores=(ent, log_marginal))

        queried_labels = []
        for i in selected:
            stream_index = batch.index_offset + i
            try:
                ext = int(oracle(stream_index))
            except Exception as exc:
                raise RuntimeError(
                    f"label oracle failed at stream index {stream_index}: {exc}"
                ) from exc
            if ext not in ext_to_int:
                new_id = len(ext_to_int) + 1
                ext_to_int[ext] = new_id
                int_to_ext[new_id] = ext
            model = add_labeled(model, rows[i], ext_to_int[ext])
            queried_labels.append(ext)

        test_probs, _ = predict_batch(model, normalize_matrix(state, test_X))
        pred_int = test_probs.argmax(axis=1) + 1
        pred_ext = np.array([int_to_ext[k] for k in pred_int])
        n_eval = max(int(np.max(test_y)), max(int_to_ext.values()))
        f1 = macro_f1(test_y, pred_ext, n_eval)

        history.records.append(
            BatchRecord(
                batch_index=batch_idx,
                queried_indices=tuple(batch.index_offset + i for i in selected),
                queried_labels=tuple(queried_labels),
                entropy_scores=ent,
                log_marginals=log_marginal,
                test_f1=f1,
                n_classes=model.n_classes,
            )
        )

    history.final_model = model
    history.final_normalizer = state
    return history
