"""The fitted classifier: prediction rules, error estimates, serialization.

A trained model is the sparse coefficient vector mu over the m features, the
threshold nu from the LP, and the worst-case error probability r_star. The
probabilistic rule assigns

    h(y | x) = (phi(x, y) . mu - (nu - 1))_+ / normalizer,

uniform over labels when the normalizer vanishes; the deterministic rule
takes the largest raw score, breaking ties toward the smaller label. Its
error is at most twice the probabilistic rule's, which `empirical_error`
checks sample by sample.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from mrccg import featmap as fm
from mrccg.datasets import ScalerParams, apply_scaler
from mrccg.errors import DataError, NumericalError
from mrccg.sparsevec import SparseVector

# Normalizer below this is treated as zero and the rule falls back to the
# uniform distribution.
UNIFORM_TOL = 1e-12

MODEL_FORMAT = "mrc-model"
MODEL_VERSION = 1


@dataclass
class MrcModel:
    mu: SparseVector
    selected: np.ndarray
    nu: float
    r_star: float
    fmap: fm.FeatureMap
    stats: object = None
    scaler: ScalerParams = None
    standardized: bool = False
    config: dict = field(default_factory=dict)
    trace: object = None
    label_values: list = None

    def __post_init__(self):
        self.selected = np.asarray(self.selected, dtype=np.int64)
        if self.mu.dim != self.fmap.m:
            raise DataError("mu dimension does not match the feature map")
        if self.mu.indices.size and not np.all(
                np.isin(self.mu.indices, self.selected)):
            raise DataError("mu has support outside the selected feature set")

    @property
    def n_classes(self):
        return self.fmap.n_classes

    @property
    def phi_threshold(self):
        """Score threshold nu - 1; equals the conjugate term of the objective."""
        return self.nu - 1.0


def _prepared(model, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.fmap.instance_map.d:
        raise DataError(
            f"expected {model.fmap.instance_map.d} input features, "
            f"got shape {X.shape}")
    if model.scaler is not None:
        X = apply_scaler(X, model.scaler)
    return X, single


def decision_scores(model, X):
    """Raw per-class scores phi(x, y) . mu, shape (n, K) or (K,)."""
    X, single = _prepared(model, X)
    dp = model.fmap.dprime
    scores = np.zeros((X.shape[0], model.n_classes))
    mu = model.mu
    for y in range(model.n_classes):
        lo = np.searchsorted(mu.indices, y * dp)
        hi = np.searchsorted(mu.indices, (y + 1) * dp)
        if lo == hi:
            continue
        comps = mu.indices[lo:hi] - y * dp
        vals = fm.psi_components(model.fmap.instance_map, X, comps)
        scores[:, y] = vals @ mu.values[lo:hi]
    return scores[0] if single else scores


def predict_proba(model, X):
    """Probabilistic rule h(. | x); rows sum to 1 and are nonnegative."""
    single = np.asarray(X).ndim == 1
    scores = np.atleast_2d(decision_scores(model, X))
    pos = np.maximum(scores - model.phi_threshold, 0.0)
    norm = pos.sum(axis=1, keepdims=True)
    h = np.full(pos.shape, 1.0 / model.n_classes)
    ok = norm[:, 0] > UNIFORM_TOL
    h[ok] = pos[ok] / norm[ok]
    return h[0] if single else h


def predict(model, X):
    """Deterministic rule: argmax score, ties toward the smaller label."""
    single = np.asarray(X).ndim == 1
    scores = np.atleast_2d(decision_scores(model, X))
    pred = np.argmax(scores, axis=1).astype(np.int64)
    return int(pred[0]) if single else pred


def sample_labels(model, X, rng=None):
    """Draw one label per instance from the probabilistic rule."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    h = np.atleast_2d(predict_proba(model, X))
    cum = np.cumsum(h, axis=1)
    u = rng.random(h.shape[0])
    return np.argmax(u[:, None] < cum, axis=1).astype(np.int64)


def empirical_error(model, data):
    """(deterministic error rate, expected probabilistic loss) on `data`.

    Also enforces the pointwise factor-two relation between the two rules:
    1 - h_det(y|x) <= 2 (1 - h(y|x)) must hold for every sample.
    """
    if data.n_classes != model.n_classes:
        raise DataError("dataset and model disagree on the class count")
    h = np.atleast_2d(predict_proba(model, data.instances))
    pred = predict(model, data.instances)
    miss = (pred != data.labels).astype(np.float64)
    loss = 1.0 - h[np.arange(data.n), data.labels]
    bad = miss > 2.0 * loss + 1e-12
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise NumericalError(
            f"deterministic rule beats its factor-2 bound at sample {i}: "
            f"miss={miss[i]}, probabilistic loss={loss[i]:.6g}")
    return float(miss.mean()), float(loss.mean())


def risk_bound_rhs(model, exact_expectation):
    """Risk bound R + (|E{Phi_J} - tau_J| - lam_J)' |mu_J|.

    exact_expectation supplies E{Phi(x, y)} on the selected features, in
    the order of model.selected. Requires in-process moment statistics.
    """
    if model.stats is None:
        raise ValueError("model carries no moment statistics "
                         "(loaded from file?)")
    sel = model.selected
    e = np.asarray(exact_expectation, dtype=np.float64)
    if e.shape != (sel.size,):
        raise ValueError(
            f"expected {sel.size} expectation entries, got {e.shape}")
    mu_j = model.mu.restrict(sel)
    gap = np.abs(e - model.stats.tau[sel]) - model.stats.lam[sel]
    return float(model.r_star + gap @ np.abs(mu_j))


# -- serialization --------------------------------------------------------


def _trace_rows(trace):
    if trace is None:
        return None
    records = getattr(trace, "records", trace)
    out = []
    for rec in records:
        out.append(rec if isinstance(rec, dict) else asdict(rec))
    return out


def save_model(model, path):
    """Write the model as JSON; floats round-trip exactly via repr."""
    imap = model.fmap.instance_map
    imap_doc = {"variant": imap.variant, "d": imap.d}
    if imap.variant == "rff":
        imap_doc.update(n_components=imap.n_components, gamma=imap.gamma,
                        seed=imap.seed)
    scaler_doc = None
    if model.scaler is not None:
        scaler_doc = {"mean": model.scaler.mean.tolist(),
                      "std": model.scaler.std.tolist(),
                      "degenerate": model.scaler.degenerate.astype(int).tolist()}
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_classes": model.n_classes,
        "instance_map": imap_doc,
        "standardized": bool(model.standardized),
        "scaler": scaler_doc,
        "nu": model.nu,
        "r_star": model.r_star,
        "selected": model.selected.tolist(),
        "mu_indices": model.mu.indices.tolist(),
        "mu_values": model.mu.values.tolist(),
        "label_values": model.label_values,
        "config": model.config,
        "trace": _trace_rows(model.trace),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Read a model written by save_model and validate its invariants."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {doc.get('version')}")

    imap_doc = doc["instance_map"]
    if imap_doc["variant"] == "identity":
        imap = fm.identity_map(imap_doc["d"])
    elif imap_doc["variant"] == "rff":
        imap = fm.rff_fit(imap_doc["d"], imap_doc["n_components"],
                          imap_doc["gamma"], imap_doc["seed"])
    else:
        raise DataError(f"{path}: unknown instance map {imap_doc['variant']!r}")
    fmap = fm.FeatureMap(imap, int(doc["n_classes"]))

    try:
        mu = SparseVector(fmap.m, doc["mu_indices"], doc["mu_values"])
    except ValueError as exc:
        raise DataError(f"{path}: bad coefficient vector: {exc}") from exc
    nu = float(doc["nu"])
    r_star = float(doc["r_star"])
    if not (np.isfinite(nu) and np.isfinite(r_star)):
        raise DataError(f"{path}: non-finite nu or r_star")
    hi = 1.0 - 1.0 / fmap.n_classes
    if not -1e-9 <= r_star <= hi + 1e-9:
        raise DataError(f"{path}: r_star {r_star} outside [0, {hi:.6g}]")

    scaler = None
    if doc.get("scaler") is not None:
        sdoc = doc["scaler"]
        scaler = ScalerParams(np.asarray(sdoc["mean"], dtype=np.float64),
                              np.asarray(sdoc["std"], dtype=np.float64),
                              np.asarray(sdoc["degenerate"], dtype=bool))
    try:
        return MrcModel(mu=mu, selected=np.asarray(doc["selected"],
                                                   dtype=np.int64),
                        nu=nu, r_star=r_star, fmap=fmap, stats=None,
                        scaler=scaler,
                        standardized=bool(doc.get("standardized", False)),
                        config=doc.get("config") or {},
                        trace=doc.get("trace"),
                        label_values=doc.get("label_values"))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc
