"""Kernels, an SMO soft-margin SVM, one-vs-rest wrapping, k-NN, and an
exhaustive active-set QP oracle for tiny problems.

The SVM dual is solved in the form

    minimize    f(a) = 1/2 a^T Q a - sum(a),   Q_ij = y_i y_j K(x_i, x_j)
    subject to  0 <= a_i <= C,  sum(y_i a_i) = 0

and reported as the maximized dual objective ``sum(a) - 1/2 a^T Q a``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConvergenceError, DimensionError, OracleError, SingleClassError

KERNELS = ("linear", "rbf", "poly")
MODEL_FORMAT = "etcml-svm/1"
FULL_GRAM_LIMIT = 4096


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float | None = None  # None: 1 / n_features, resolved at training time
    coef0: float = 0.0
    degree: int = 3

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kind!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")

    def resolved(self, dim: int) -> KernelSpec:
        if self.gamma is not None or self.kind == "linear":
            return self
        return KernelSpec(self.kind, 1.0 / dim, self.coef0, self.degree)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "coef0": self.coef0, "degree": self.degree}

    @classmethod
    def from_dict(cls, d) -> KernelSpec:
        return cls(d["kind"], d.get("gamma"), d.get("coef0", 0.0), d.get("degree", 3))


@dataclass(frozen=True)
class TrainConfig:
    c: float = 1.0
    kkt_tol: float = 1e-5
    max_passes: int | None = None  # None: 10000 * n updates

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError("C must be positive")
        if not self.kkt_tol > 0:
            raise ConfigError("kkt_tol must be positive")


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DimensionError(f"expected a feature matrix, got shape {x.shape}")
    return x


def _gamma(spec: KernelSpec, dim: int) -> float:
    return spec.gamma if spec.gamma is not None else 1.0 / dim


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError("kernel inputs must be vectors of equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("kernel inputs must be finite")
    if spec.kind == "linear":
        return float(x @ y)
    gamma = _gamma(spec, len(x))
    if spec.kind == "rbf":
        d = x - y
        return float(np.exp(-gamma * (d @ d)))
    return float((gamma * (x @ y) + spec.coef0) ** spec.degree)


def gram(spec: KernelSpec, a, b=None) -> np.ndarray:
    """``G[i, j] = K(a_i, b_j)``; ``b`` defaults to ``a``."""
    a = _as_matrix(a)
    b = a if b is None else _as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    dot = a @ b.T
    if spec.kind == "linear":
        return dot
    gamma = _gamma(spec, a.shape[1])
    if spec.kind == "poly":
        return (gamma * dot + spec.coef0) ** spec.degree
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * dot
    np.maximum(sq, 0.0, out=sq)
    if b is a:
        np.fill_diagonal(sq, 0.0)
    return np.exp(-gamma * sq)


class _KernelRows:
    """Kernel rows over the training set: a full matrix when small,
    otherwise computed on demand with a bounded cache."""

    def __init__(self, spec, x, full_limit=FULL_GRAM_LIMIT, cache_rows=1024):
        self.spec = spec
        self.x = x
        self.full = gram(spec, x) if len(x) <= full_limit else None
        self.cache = {}
        self.cache_rows = cache_rows
        if self.full is None:
            if spec.kind == "linear":
                self.diag = (x * x).sum(1)
            elif spec.kind == "rbf":
                self.diag = np.ones(len(x))
            else:
                self.diag = (spec.gamma * (x * x).sum(1) + spec.coef0) ** spec.degree
        else:
            self.diag = np.diag(self.full).copy()

    def row(self, i):
        if self.full is not None:
            return self.full[i]
        r = self.cache.get(i)
        if r is None:
            if len(self.cache) >= self.cache_rows:
                self.cache.pop(next(iter(self.cache)))
            r = gram(self.spec, self.x[i], self.x)[0]
            if self.spec.kind == "rbf":
                r[i] = 1.0
            self.cache[i] = r
        return r


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i per support vector
    bias: float
    kernel: KernelSpec
    c: float
    support: np.ndarray | None = None  # indices into the training set
    alpha: np.ndarray | None = None  # full dual vector (training-time only)
    iterations: int = 0
    converged: bool = True

    def decision_function(self, x) -> np.ndarray:
        x = _as_matrix(x)
        if x.shape[1] != self.support_vectors.shape[1]:
            raise DimensionError("feature dim does not match the model")
        return gram(self.kernel, x, self.support_vectors) @ self.dual_coef + self.bias

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "kernel": self.kernel.to_dict(),
            "c": self.c,
            "bias": self.bias,
            "dual_coef": self.dual_coef.tolist(),
            "support_vectors": self.support_vectors.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> SvmModel:
        if d.get("format") != MODEL_FORMAT:
            raise ConfigError(f"unsupported model format {d.get('format')!r}")
        return cls(
            support_vectors=np.asarray(d["support_vectors"], dtype=np.float64),
            dual_coef=np.asarray(d["dual_coef"], dtype=np.float64),
            bias=float(d["bias"]),
            kernel=KernelSpec.from_dict(d["kernel"]),
            c=float(d["c"]),
        )


def decision_value(model: SvmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("decision_value takes a single vector")
    return float(model.decision_function(x)[0])


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ConfigError("empty training set")
    if not np.all((y == 1) | (y == -1)):
        raise ConfigError("binary labels must be -1 or +1")
    if np.all(y == y[0]):
        raise SingleClassError("both classes must be present")
    return y


def _violating_pair(alpha, grad, y, c):
    """Maximal violating pair under ``-y * grad`` ordering.

    ``up`` may increase ``y_i a_i``; ``low`` may decrease it. Ties go to
    the lowest index.
    """
    score = -y * grad
    up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
    i = int(np.argmax(np.where(up, score, -np.inf)))
    j = int(np.argmin(np.where(low, score, np.inf)))
    return i, j, score[i], score[j]


def _bias(alpha, grad, y, c) -> float:
    score = -y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        return float(score[free].mean())
    up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
    hi = score[up].max() if up.any() else score[low].min()
    lo = score[low].min() if low.any() else hi
    return float((hi + lo) / 2)


def smo_solve(kernel_rows, y, c, kkt_tol, max_updates):
    """Core SMO loop on a kernel-row provider. Returns
    ``(alpha, grad, iterations, converged)``."""
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = kernel_rows.diag
    it = 0
    converged = False
    while True:
        i, j, m_up, m_low = _violating_pair(alpha, grad, y, c)
        if m_up - m_low <= kkt_tol:
            converged = True
            break
        if it >= max_updates:
            break
        ki = kernel_rows.row(i)
        kj = kernel_rows.row(j)
        eta = diag[i] + diag[j] - 2.0 * ki[j]
        if eta <= 0:
            eta = 1e-12
        # move y_i a_i up and y_j a_j down by the same amount lam
        cap_i = c - alpha[i] if y[i] > 0 else alpha[i]
        cap_j = alpha[j] if y[j] > 0 else c - alpha[j]
        lam = min(cap_i, cap_j, (m_up - m_low) / eta)
        alpha[i] += y[i] * lam
        alpha[j] -= y[j] * lam
        # snap to the box to keep feasibility exact
        for k in (i, j):
            if alpha[k] < 1e-14 * c:
                alpha[k] = 0.0
            elif alpha[k] > c * (1 - 1e-14):
                alpha[k] = c
        grad += y * lam * (ki - kj)
        it += 1
    return alpha, grad, it, converged


def _model_from_alpha(x, y, alpha, grad, spec, cfg, it, converged):
    bias = _bias(alpha, grad, y, cfg.c)
    sv = np.flatnonzero(alpha > 0)
    return SvmModel(
        support_vectors=x[sv].copy(),
        dual_coef=alpha[sv] * y[sv],
        bias=bias,
        kernel=spec,
        c=cfg.c,
        support=sv,
        alpha=alpha,
        iterations=it,
        converged=converged,
    )


def train_binary_smo(x, y, cfg: TrainConfig = TrainConfig(), spec: KernelSpec = KernelSpec(), *, kernel_rows=None) -> SvmModel:
    """Train a soft-margin SVM with first-order maximal-violation SMO.

    Stops once the maximal KKT violation is at most ``cfg.kkt_tol``. If the
    update budget runs out first, raises :class:`ConvergenceError` whose
    ``model`` attribute holds the partial solution.
    """
    x = _as_matrix(x)
    y = _check_labels(y)
    if len(x) != len(y):
        raise DimensionError("x and y lengths differ")
    if len(x) < 2:
        raise ConfigError("need at least 2 training points")
    spec = spec.resolved(x.shape[1])
    rows = kernel_rows if kernel_rows is not None else _KernelRows(spec, x)
    budget = cfg.max_passes if cfg.max_passes is not None else 10000 * len(x)
    alpha, grad, it, converged = smo_solve(rows, y, cfg.c, cfg.kkt_tol, budget)
    model = _model_from_alpha(x, y, alpha, grad, spec, cfg, it, converged)
    if not converged:
        raise ConvergenceError(f"SMO stopped after {it} updates without meeting kkt_tol", model)
    return model


def dual_objective(alpha, y, k) -> float:
    """``sum(a) - 1/2 a^T Q a`` for a precomputed kernel matrix ``k``."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ k @ ay)


def kkt_residuals(model: SvmModel, x, y) -> np.ndarray:
    """Per-point KKT violation of a trained model on its training data.

    With margin ``m = y f(x) - 1``: ``max(0, -m)`` at alpha = 0,
    ``max(0, m)`` at alpha = C, ``|m|`` for free points.
    """
    x = _as_matrix(x)
    y = np.asarray(y, dtype=np.float64)
    alpha = model.alpha
    margin = y * model.decision_function(x) - 1.0
    res = np.abs(margin)
    res = np.where(alpha <= 0, np.maximum(0.0, -margin), res)
    res = np.where(alpha >= model.c, np.maximum(0.0, margin), res)
    return res


# -- multiclass -----------------------------------------------------------

@dataclass
class OvRModel:
    classes: np.ndarray
    models: list

    def decision_matrix(self, x) -> np.ndarray:
        """Raw scores, shape ``(n_samples, n_classes)``."""
        x = _as_matrix(x)
        return np.column_stack([m.decision_function(x) for m in self.models])

    def predict(self, x) -> np.ndarray:
        return self.classes[np.argmax(self.decision_matrix(x), axis=1)]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "classes": self.classes.tolist(),
            "models": [m.to_dict() for m in self.models],
        }

    @classmethod
    def from_dict(cls, d) -> OvRModel:
        return cls(np.asarray(d["classes"]), [SvmModel.from_dict(m) for m in d["models"]])


def train_one_vs_rest(x, labels, cfg: TrainConfig = TrainConfig(), spec: KernelSpec = KernelSpec()) -> OvRModel:
    x = _as_matrix(x)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise SingleClassError("one-vs-rest needs at least 2 classes")
    spec = spec.resolved(x.shape[1])
    rows = _KernelRows(spec, x)  # shared by every binary problem
    models = [
        train_binary_smo(x, np.where(labels == cls, 1.0, -1.0), cfg, spec, kernel_rows=rows)
        for cls in classes
    ]
    return OvRModel(classes, models)


# -- k-NN -----------------------------------------------------------------

def knn_predict(train, labels, query, k: int = 1):
    """Majority vote of the ``k`` nearest rows (Euclidean).

    Vote ties go to the label with the smallest mean distance among the
    tied labels, then to the smallest label. Equal distances are ordered
    by training index.
    """
    train = _as_matrix(train)
    labels = np.asarray(labels)
    query = np.asarray(query, dtype=np.float64)
    if not 1 <= k <= len(train):
        raise ConfigError(f"k must lie in [1, {len(train)}]")
    if query.shape != (train.shape[1],):
        raise DimensionError("query dim does not match the training data")
    dist = np.sqrt(((train - query) ** 2).sum(1))
    nearest = np.argsort(dist, kind="stable")[:k]
    votes = {}
    for idx in nearest:
        votes.setdefault(labels[idx], []).append(dist[idx])
    return min(votes, key=lambda lab: (-len(votes[lab]), np.mean(votes[lab]), lab))


# -- exhaustive oracle ----------------------------------------------------

@dataclass(frozen=True)
class DualSolution:
    alpha: np.ndarray
    bias: float
    objective: float


def qp_oracle(x, y, c: float, spec: KernelSpec, tol: float = 1e-9) -> DualSolution:
    """Solve the SVM dual by enumerating every ``{0, C, free}`` assignment.

    For each assignment the free coordinates and the bias solve the
    equality-constrained KKT system; candidates that are box-feasible and
    satisfy the optimality conditions are kept, and the one with the
    largest dual objective is returned. Only for ``n <= 6``.
    """
    x = _as_matrix(x)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n > 6:
        raise ConfigError("qp_oracle is limited to 6 points")
    spec = spec.resolved(x.shape[1])
    k = np.array([[kernel_eval(spec, x[i], x[j]) for j in range(n)] for i in range(n)])
    q = np.outer(y, y) * k
    best = None
    for assign in itertools.product((0, 1, 2), repeat=n):  # 0 lower, 1 upper, 2 free
        assign = np.array(assign)
        free = np.flatnonzero(assign == 2)
        alpha = np.where(assign == 1, c, 0.0)
        nf = len(free)
        # unknowns: alpha_free, b
        a_mat = np.zeros((nf + 1, nf + 1))
        rhs = np.zeros(nf + 1)
        a_mat[:nf, :nf] = q[np.ix_(free, free)]
        a_mat[:nf, nf] = y[free]
        a_mat[nf, :nf] = y[free]
        rhs[:nf] = 1.0 - q[free] @ alpha
        rhs[nf] = -(y @ alpha)
        sol, *_ = np.linalg.lstsq(a_mat, rhs, rcond=None)
        if not np.allclose(a_mat @ sol, rhs, atol=1e-9):
            continue
        alpha[free] = sol[:nf]
        if np.any(alpha < -tol) or np.any(alpha > c + tol):
            continue
        alpha = np.clip(alpha, 0.0, c)
        if abs(y @ alpha) > 1e-8:
            continue
        grad = q @ alpha - 1.0
        score = -y * grad
        up = ((y > 0) & (alpha < c - tol)) | ((y < 0) & (alpha > tol))
        low = ((y > 0) & (alpha > tol)) | ((y < 0) & (alpha < c - tol))
        hi = score[up].max() if up.any() else -np.inf
        lo = score[low].min() if low.any() else np.inf
        if hi - lo > 1e-7:
            continue
        obj = float(alpha.sum() - 0.5 * alpha @ q @ alpha)
        if best is None or obj > best.objective:
            if np.isfinite(hi) and np.isfinite(lo):
                bias = (hi + lo) / 2
            else:
                bias = hi if np.isfinite(hi) else lo
            best = DualSolution(alpha, float(bias), obj)
    if best is None:
        raise OracleError("no KKT point found")
    return best
