"""Relation-distribution predictors: frequency baseline, ridge regression, neural net.

All three share one contract: fit on a SignatureDataset, then map any class
signature over the model's vocabulary to a normalized RelationDistribution.

* frequency: per-class raw counts; prediction is the normalized sum of the
  member classes' counts (optionally the mean of their normalized
  distributions).
* regression: least squares from the binary class-indicator vector to the
  dense relation-proportion vector, solved per output column via the
  regularized normal equations; raw outputs are clipped at zero and
  renormalized.
* neural: binary class vector -> ReLU hidden layer -> softmax over relations,
  trained on KL divergence between observed and predicted distributions with
  seeded mini-batch Adam.

Models serialize to a single versioned JSON document and round-trip
bit-identically.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .aggregation import SignatureDataset
from .core import ClassSignature, RelationDistribution, Vocabulary, normalize, stable_hash
from .errors import DivergenceError, FormatError, UnknownSignatureError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

FLAG_DEGENERATE = "degenerate"
FLAG_FALLBACK = "fallback"
FLAG_OUT_OF_VOCABULARY = "out_of_vocabulary"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by the fit functions (all configurable).

    ``truncation_threshold`` is only used when reporting predictions, never
    during training.
    """

    seed: int = 0
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    l2: float = 1e-3
    hidden: int = 10
    truncation_threshold: float = 0.95
    freq_mean_of_normalized: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.hidden < 1:
            raise ValueError("epochs, batch_size and hidden must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if not 0 < self.truncation_threshold <= 1:
            raise ValueError("truncation_threshold must be in (0, 1]")


def derive_seed(seed: int, *parts) -> int:
    """Mix a base seed with context (e.g. a fold index) into a fresh 63-bit seed."""
    return stable_hash("/".join(str(p) for p in parts), seed) & 0x7FFFFFFFFFFFFFFF


class PredictorModel:
    """Common interface over the three predictor kinds."""

    kind: str = ""

    def __init__(self, vocabulary: Vocabulary):
        self.vocabulary = vocabulary

    def predict(self, signature: ClassSignature) -> RelationDistribution:
        raise NotImplementedError

    def predict_for_classes(self, class_ids: Iterable[str]) -> RelationDistribution:
        """Predict from raw class ids, dropping ids unknown to the vocabulary.

        When no id is known the model falls back to its defined
        out-of-vocabulary behaviour instead of raising.
        """
        known = [c for c in class_ids if self.vocabulary.has_class(c)]
        if known:
            return self.predict(self.vocabulary.signature_of(known))
        return self._predict_empty()

    def _predict_empty(self) -> RelationDistribution:
        raise UnknownSignatureError("no member class is known to the model")

    def param_count(self) -> int:
        raise NotImplementedError

    def _params_to_json(self) -> dict:
        raise NotImplementedError


class FrequencyModel(PredictorModel):
    """Per-class raw relation counts, combined at predict time.

    ``global_counts`` holds the summed counts over all training rows and backs
    the optional fallback for signatures with no known class.
    """

    kind = "frequency"

    def __init__(
        self,
        vocabulary: Vocabulary,
        per_class_counts: dict,
        global_counts: dict,
        mean_of_normalized: bool = False,
    ):
        super().__init__(vocabulary)
        self.per_class_counts = per_class_counts
        self.global_counts = global_counts
        self.mean_of_normalized = mean_of_normalized

    def predict(self, signature: ClassSignature, fallback: bool = True) -> RelationDistribution:
        return predict_frequency(self, signature, fallback=fallback)

    def _predict_empty(self) -> RelationDistribution:
        return replace(normalize(self.global_counts), flag=FLAG_FALLBACK)

    def param_count(self) -> int:
        return sum(len(counts) for counts in self.per_class_counts.values())

    def _params_to_json(self) -> dict:
        return {
            "per_class_counts": {
                str(c): {str(r): v for r, v in sorted(counts.items())}
                for c, counts in sorted(self.per_class_counts.items())
            },
            "global_counts": {str(r): v for r, v in sorted(self.global_counts.items())},
            "mean_of_normalized": self.mean_of_normalized,
        }


def fit_frequency(ds: SignatureDataset, cfg: Optional[TrainConfig] = None) -> FrequencyModel:
    """Store per-class raw counts: each row contributes to all its member classes."""
    cfg = cfg or TrainConfig()
    per_class: dict = {}
    global_counts: dict = {}
    for row in ds.rows:
        for r, c in row.counts.items():
            global_counts[r] = global_counts.get(r, 0) + c
        for class_idx in row.signature:
            bucket = per_class.setdefault(class_idx, {})
            for r, c in row.counts.items():
                bucket[r] = bucket.get(r, 0) + c
    return FrequencyModel(
        vocabulary=ds.vocabulary,
        per_class_counts=per_class,
        global_counts=global_counts,
        mean_of_normalized=cfg.freq_mean_of_normalized,
    )


def predict_frequency(
    model: FrequencyModel, signature: ClassSignature, fallback: bool = True
) -> RelationDistribution:
    """Normalized sum of the member classes' raw counts (unseen classes skipped).

    With ``mean_of_normalized`` the per-class distributions are normalized
    first and averaged instead. If no member class was seen in training, the
    global training marginal is returned flagged as a fallback, or
    :class:`UnknownSignatureError` is raised when ``fallback`` is off.
    """
    known = [c for c in signature if c in model.per_class_counts]
    if not known:
        if not fallback:
            raise UnknownSignatureError("no member class of the signature was seen in training")
        return replace(normalize(model.global_counts), flag=FLAG_FALLBACK)
    combined: dict = {}
    if model.mean_of_normalized:
        for class_idx in known:
            dist = normalize(model.per_class_counts[class_idx])
            for r, p in dist.items():
                combined[r] = combined.get(r, 0.0) + p / len(known)
        return RelationDistribution({r: p for r, p in combined.items()})
    for class_idx in known:
        for r, c in model.per_class_counts[class_idx].items():
            combined[r] = combined.get(r, 0) + c
    return normalize(combined)


class RegressionModel(PredictorModel):
    """Linear map from binary class vectors to relation proportions."""

    kind = "regression"

    def __init__(self, vocabulary: Vocabulary, weights: np.ndarray, l2: float, solver: str = "normal_equations"):
        super().__init__(vocabulary)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (vocabulary.n_classes, vocabulary.n_relations):
            raise ValueError(f"weights shape {weights.shape} does not match vocabulary")
        if not np.all(np.isfinite(weights)):
            raise ValueError("regression weights must be finite")
        self.weights = weights
        self.l2 = l2
        self.solver = solver

    def predict(self, signature: ClassSignature) -> RelationDistribution:
        return predict_regression(self, signature)

    def _predict_empty(self) -> RelationDistribution:
        # zero input vector: raw output is all zeros, the defined degenerate path
        return _clip_renormalize(np.zeros(self.vocabulary.n_relations), flag=FLAG_OUT_OF_VOCABULARY)

    def param_count(self) -> int:
        return self.weights.size

    def _params_to_json(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "l2": self.l2,
            "solver": self.solver,
        }


def fit_regression(ds: SignatureDataset, cfg: Optional[TrainConfig] = None) -> RegressionModel:
    """Least-squares fit of proportions from class indicators.

    Minimizes ``sum_rows ||x W - y||^2 + l2 ||W||^2`` via the regularized
    normal equations, all output columns at once. With ``l2 == 0`` and a
    singular Gram matrix the solver falls back to the minimal-norm
    least-squares solution (recorded on the model and in the log).
    """
    cfg = cfg or TrainConfig()
    n = ds.vocabulary.n_classes
    m = ds.vocabulary.n_relations
    xtx = np.zeros((n, n), dtype=np.float64)
    xty = np.zeros((n, m), dtype=np.float64)
    for row in ds.rows:
        idx = np.fromiter(row.signature, dtype=np.intp)
        y = np.zeros(m, dtype=np.float64)
        for r, p in row.observed.items():
            y[r] = p
        xtx[np.ix_(idx, idx)] += 1.0
        xty[idx, :] += y
    solver = "normal_equations"
    if cfg.l2 > 0:
        xtx[np.diag_indices_from(xtx)] += cfg.l2
        weights = np.linalg.solve(xtx, xty)
    else:
        try:
            weights = np.linalg.solve(xtx, xty)
        except np.linalg.LinAlgError:
            solver = "minimal_norm_lstsq"
            log.warning("fit_regression: singular design with l2=0, using minimal-norm solution")
            x_rows = np.zeros((len(ds.rows), n), dtype=np.float64)
            y_rows = np.zeros((len(ds.rows), m), dtype=np.float64)
            for k, row in enumerate(ds.rows):
                x_rows[k, list(row.signature)] = 1.0
                for r, p in row.observed.items():
                    y_rows[k, r] = p
            weights, _, _, _ = np.linalg.lstsq(x_rows, y_rows, rcond=None)
    if not np.all(np.isfinite(weights)):
        raise DivergenceError("regression solve produced non-finite weights")
    return RegressionModel(vocabulary=ds.vocabulary, weights=weights, l2=cfg.l2, solver=solver)


def training_residual(model: RegressionModel, ds: SignatureDataset) -> float:
    """Root-mean-square residual of the raw (unclipped) linear predictions."""
    sq = 0.0
    count = 0
    for row in ds.rows:
        raw = model.weights[list(row.signature), :].sum(axis=0)
        y = np.zeros(model.vocabulary.n_relations)
        for r, p in row.observed.items():
            y[r] = p
        sq += float(np.sum((raw - y) ** 2))
        count += y.size
    return math.sqrt(sq / max(count, 1))


def _clip_renormalize(raw: np.ndarray, flag: Optional[str] = None) -> RelationDistribution:
    """Clip negatives to zero and renormalize; all-nonpositive goes uniform."""
    clipped = np.where(raw > 0, raw, 0.0)
    total = clipped.sum()
    if total <= 0.0:
        m = raw.shape[0]
        return RelationDistribution(
            {i: 1.0 / m for i in range(m)}, flag=flag or FLAG_DEGENERATE
        )
    entries = {int(i): float(clipped[i] / total) for i in np.nonzero(clipped)[0]}
    return RelationDistribution(entries, flag=flag)


def predict_regression(model: RegressionModel, signature: ClassSignature) -> RelationDistribution:
    """Raw output x.W, negatives clipped, renormalized to sum one.

    An all-nonpositive raw output yields the uniform distribution flagged
    degenerate.
    """
    raw = model.weights[list(signature), :].sum(axis=0)
    return _clip_renormalize(raw)


@dataclass
class NeuralParams:
    """Weights of the one-hidden-layer network (hidden h, input n, output m)."""

    w1: np.ndarray  # (h, n)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (m, h)
    b2: np.ndarray  # (m,)

    def arrays(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "NeuralParams":
        return NeuralParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def kl_loss_and_gradients(params: NeuralParams, x: np.ndarray, y: np.ndarray) -> tuple:
    """Mean per-row KL(observed || predicted) over a batch, with gradients.

    ``x`` is (B, n) binary, ``y`` is (B, m) with rows summing to one (zeros
    allowed and skipped in the entropy term). Returns ``(loss, grads)`` where
    grads is a dict matching :meth:`NeuralParams.arrays`.
    """
    batch = x.shape[0]
    z1 = x @ params.w1.T + params.b1  # (B, h)
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.w2.T + params.b2  # (B, m)
    log_p = _log_softmax(z2)
    p = np.exp(log_p)
    # sum_i y_i (ln y_i - ln p_i); the y ln y part is constant in the params
    y_entropy = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0)), 0.0).sum()
    loss = float((y_entropy - (y * log_p).sum()) / batch)
    dz2 = (p * y.sum(axis=1, keepdims=True) - y) / batch  # (B, m)
    gw2 = dz2.T @ a1
    gb2 = dz2.sum(axis=0)
    da1 = dz2 @ params.w2
    dz1 = da1 * (z1 > 0)
    gw1 = dz1.T @ x
    gb1 = dz1.sum(axis=0)
    return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


class NeuralModel(PredictorModel):
    """One ReLU hidden layer followed by a softmax over the relation set."""

    kind = "neural"

    def __init__(
        self,
        vocabulary: Vocabulary,
        params: NeuralParams,
        hidden: int,
        loss_history: Optional[list] = None,
    ):
        super().__init__(vocabulary)
        n, m = vocabulary.n_classes, vocabulary.n_relations
        if params.w1.shape != (hidden, n) or params.w2.shape != (m, hidden):
            raise ValueError("neural parameter shapes do not match vocabulary/hidden width")
        for arr in params.arrays().values():
            if not np.all(np.isfinite(arr)):
                raise ValueError("neural parameters must be finite")
        self.params = params
        self.hidden = hidden
        self.loss_history = list(loss_history or [])

    def forward(self, x: np.ndarray) -> np.ndarray:
        z1 = x @ self.params.w1.T + self.params.b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ self.params.w2.T + self.params.b2
        return np.exp(_log_softmax(z2))

    def predict(self, signature: ClassSignature) -> RelationDistribution:
        return predict_neural(self, signature)

    def _predict_empty(self) -> RelationDistribution:
        # bias-driven prior at x = 0
        p = self.forward(np.zeros(self.vocabulary.n_classes))
        return RelationDistribution(_softmax_entries(p), flag=FLAG_OUT_OF_VOCABULARY)

    def param_count(self) -> int:
        h, n, m = self.hidden, self.vocabulary.n_classes, self.vocabulary.n_relations
        return h * (n + m) + h + m

    def _params_to_json(self) -> dict:
        return {
            "hidden": self.hidden,
            "w1": self.params.w1.tolist(),
            "b1": self.params.b1.tolist(),
            "w2": self.params.w2.tolist(),
            "b2": self.params.b2.tolist(),
            "loss_history": self.loss_history,
        }


def _init_params(n: int, m: int, h: int, rng: np.random.Generator) -> NeuralParams:
    # He-style scaling for the ReLU layer, small Gaussian for the output layer
    w1 = rng.normal(0.0, math.sqrt(2.0 / n), size=(h, n))
    w2 = rng.normal(0.0, math.sqrt(1.0 / h), size=(m, h))
    return NeuralParams(w1=w1, b1=np.zeros(h), w2=w2, b2=np.zeros(m))


def fit_neural(ds: SignatureDataset, cfg: Optional[TrainConfig] = None) -> NeuralModel:
    """Train the network with seeded mini-batch Adam on the KL objective.

    Deterministic given ``cfg.seed``. Records the mean epoch loss history.
    Raises :class:`DivergenceError` (with epoch/batch) on a non-finite loss.
    """
    cfg = cfg or TrainConfig()
    n, m = ds.vocabulary.n_classes, ds.vocabulary.n_relations
    rng = np.random.default_rng(cfg.seed)
    params = _init_params(n, m, cfg.hidden, rng)

    row_indices = [np.fromiter(row.signature, dtype=np.intp) for row in ds.rows]
    row_rels = [np.fromiter(row.observed.entries.keys(), dtype=np.intp) for row in ds.rows]
    row_props = [np.fromiter(row.observed.entries.values(), dtype=np.float64) for row in ds.rows]
    n_rows = len(ds.rows)

    adam_m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_rows)
        epoch_loss = 0.0
        for batch_no, start in enumerate(range(0, n_rows, cfg.batch_size)):
            batch = order[start : start + cfg.batch_size]
            x = np.zeros((len(batch), n), dtype=np.float64)
            y = np.zeros((len(batch), m), dtype=np.float64)
            for k, ridx in enumerate(batch):
                x[k, row_indices[ridx]] = 1.0
                y[k, row_rels[ridx]] = row_props[ridx]
            loss, grads = kl_loss_and_gradients(params, x, y)
            if not math.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}", epoch=epoch, batch=batch_no
                )
            epoch_loss += loss * len(batch)
            step += 1
            arrays = params.arrays()
            for key, grad in grads.items():
                adam_m[key] = beta1 * adam_m[key] + (1 - beta1) * grad
                adam_v[key] = beta2 * adam_v[key] + (1 - beta2) * grad * grad
                m_hat = adam_m[key] / (1 - beta1**step)
                v_hat = adam_v[key] / (1 - beta2**step)
                arrays[key] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        history.append(epoch_loss / n_rows)
    if len(history) > 1 and history[-1] > history[0]:
        log.warning("fit_neural: final epoch loss %.6g above initial %.6g", history[-1], history[0])
    return NeuralModel(vocabulary=ds.vocabulary, params=params, hidden=cfg.hidden, loss_history=history)


def _softmax_entries(p: np.ndarray) -> dict:
    # softmax is strictly positive in exact arithmetic, but float64 can
    # underflow to 0.0; exact zeros carry no mass and are dropped
    return {int(i): float(p[i]) for i in np.nonzero(p)[0]}


def predict_neural(model: NeuralModel, signature: ClassSignature) -> RelationDistribution:
    """Softmax output for the signature's binary class vector (dense, positive)."""
    x = np.zeros(model.vocabulary.n_classes, dtype=np.float64)
    x[list(signature)] = 1.0
    p = model.forward(x)
    return RelationDistribution(_softmax_entries(p))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_model(model: PredictorModel, path) -> None:
    """Write a model as a single versioned JSON document (stable byte output)."""
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "classes": list(model.vocabulary.classes),
        "relations": list(model.vocabulary.relations),
        "params": model._params_to_json(),
    }
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> PredictorModel:
    """Load a model saved by :func:`save_model`; predictions round-trip bit-identically."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid model file: {exc}")
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: format_version {version!r} unsupported (expected {FORMAT_VERSION})")
    try:
        vocab = Vocabulary(tuple(doc["classes"]), tuple(doc["relations"]))
        kind = doc["kind"]
        params = doc["params"]
        if kind == FrequencyModel.kind:
            return FrequencyModel(
                vocabulary=vocab,
                per_class_counts={
                    int(c): {int(r): v for r, v in counts.items()}
                    for c, counts in params["per_class_counts"].items()
                },
                global_counts={int(r): v for r, v in params["global_counts"].items()},
                mean_of_normalized=bool(params.get("mean_of_normalized", False)),
            )
        if kind == RegressionModel.kind:
            return RegressionModel(
                vocabulary=vocab,
                weights=np.array(params["weights"], dtype=np.float64),
                l2=float(params["l2"]),
                solver=str(params.get("solver", "normal_equations")),
            )
        if kind == NeuralModel.kind:
            neural_params = NeuralParams(
                w1=np.array(params["w1"], dtype=np.float64),
                b1=np.array(params["b1"], dtype=np.float64),
                w2=np.array(params["w2"], dtype=np.float64),
                b2=np.array(params["b2"], dtype=np.float64),
            )
            return NeuralModel(
                vocabulary=vocab,
                params=neural_params,
                hidden=int(params["hidden"]),
                loss_history=params.get("loss_history"),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed model document: {exc}")
    raise FormatError(f"{path}: unknown model kind {doc.get('kind')!r}")


MODEL_KINDS = {
    "freq": fit_frequency,
    "frequency": fit_frequency,
    "regr": fit_regression,
    "regression": fit_regression,
    "nn": fit_neural,
    "neural": fit_neural,
}


def fit(kind: str, ds: SignatureDataset, cfg: Optional[TrainConfig] = None) -> PredictorModel:
    """Dispatch to the fit function for a model kind name (freq/regr/nn)."""
    try:
        fit_fn = MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    return fit_fn(ds, cfg)
