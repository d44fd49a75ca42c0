"""Face-verification harness: score sets, FAR/FRR sweeps, EER, and the two
key-condition protocols run on plain and encrypted pipelines.

Verification protocol: every test image is scored by every identity's
one-vs-rest model. The score of the image's own identity model is a
genuine trial; every other (image, model) pair is an impostor trial.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .cipher import encrypt, induced_pixel_map, keygen
from .dataset_io import LabeledDataset, SplitSpec, _atomic_write, split_indices
from .errors import ConfigError
from .features import FeaturePipeline, Reducer, fit_reducer, flatten, out_dim_for_ratio, pull_back_indices
from .prng import derive_seed
from .svm import KernelSpec, TrainConfig, train_one_vs_rest

REPORT_FORMAT = "etcml-report/1"
CSV_HEADER = ("threshold", "far", "frr")

SAME_KEY_OTHER_PERSON = "other-person-same-key"
OTHER_KEY_SAME_PERSON = "same-person-other-key"
OTHER_KEY_OTHER_PERSON = "other-person-other-key"
IMPOSTOR_TAGS = (SAME_KEY_OTHER_PERSON, OTHER_KEY_SAME_PERSON, OTHER_KEY_OTHER_PERSON)


@dataclass
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray
    breakdown: np.ndarray | None = None  # impostor tag per impostor score

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64)
        self.impostor = np.asarray(self.impostor, dtype=np.float64)
        if self.breakdown is None:
            self.breakdown = np.full(len(self.impostor), SAME_KEY_OTHER_PERSON)
        self.breakdown = np.asarray(self.breakdown, dtype=object)
        if len(self.breakdown) != len(self.impostor):
            raise ConfigError("breakdown must tag every impostor score")

    def counts(self) -> dict:
        return {tag: int(np.sum(self.breakdown == tag)) for tag in IMPOSTOR_TAGS}

    def to_dict(self) -> dict:
        return {
            "genuine": self.genuine.tolist(),
            "impostor": self.impostor.tolist(),
            "breakdown": [str(t) for t in self.breakdown],
        }

    @classmethod
    def from_dict(cls, d) -> ScoreSet:
        return cls(d["genuine"], d["impostor"], d.get("breakdown"))


@dataclass
class RocCurve:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("thresholds", "far", "frr")}

    @classmethod
    def from_dict(cls, d) -> RocCurve:
        return cls(*(np.asarray(d[k], dtype=np.float64) for k in ("thresholds", "far", "frr")))


def far_at(scores, threshold: float) -> float:
    scores = np.asarray(scores)
    return float(np.mean(scores >= threshold)) if len(scores) else float("nan")


def sweep(scores: ScoreSet, n_thresholds: int = 1000) -> RocCurve:
    """FAR/FRR over a uniform grid spanning the scores plus every distinct
    score. Accept means ``score >= threshold``."""
    gen, imp = scores.genuine, scores.impostor
    if len(gen) == 0 or len(imp) == 0:
        raise ConfigError("genuine and impostor scores must both be non-empty")
    if n_thresholds < 2:
        raise ConfigError("need at least 2 grid thresholds")
    allscores = np.concatenate([gen, imp])
    if not np.all(np.isfinite(allscores)):
        raise ConfigError("scores must be finite")
    lo, hi = allscores.min(), allscores.max()
    eps = 1e-6 * max(hi - lo, 1.0)
    thresholds = np.unique(np.concatenate([np.linspace(lo - eps, hi + eps, n_thresholds), allscores]))
    gen_sorted = np.sort(gen)
    imp_sorted = np.sort(imp)
    frr = np.searchsorted(gen_sorted, thresholds, side="left") / len(gen)
    far = 1.0 - np.searchsorted(imp_sorted, thresholds, side="left") / len(imp)
    return RocCurve(thresholds, far, frr)


def _crossing(curve: RocCurve):
    """Index pair and interpolation weight where FAR - FRR changes sign."""
    d = curve.far - curve.frr
    zero = np.flatnonzero(d == 0)
    if len(zero):
        # plateau: the first contiguous run of exact equality
        start = zero[0]
        end = start
        while end + 1 < len(d) and d[end + 1] == 0:
            end += 1
        return start, end, 0.5
    k = int(np.argmax(d < 0))
    return k - 1, k, d[k - 1] / (d[k - 1] - d[k])


def eer(curve: RocCurve) -> float:
    """Equal error rate by linear interpolation at the FAR = FRR crossing."""
    a, b, t = _crossing(curve)
    return float(curve.far[a] + t * (curve.far[b] - curve.far[a]))


def eer_threshold(curve: RocCurve) -> float:
    a, b, t = _crossing(curve)
    return float(curve.thresholds[a] + t * (curve.thresholds[b] - curve.thresholds[a]))


# -- experiment configuration ---------------------------------------------

@dataclass
class ExperimentConfig:
    block: int = 8
    reducer: str = "identity"
    ratio: Fraction | float = 1
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("rbf"))
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    n_clients: int = 4
    key_seed: int = 0
    reducer_seed: int = 0
    n_thresholds: int = 1000

    def __post_init__(self):
        r = Fraction(self.ratio).limit_denominator(10**6)
        if not 0 < r <= 1:
            raise ConfigError("reduction ratio must lie in (0, 1]")
        if self.reducer == "identity" and r != 1:
            raise ConfigError("the identity reducer requires ratio 1")

    def to_dict(self) -> dict:
        return {
            "block": self.block,
            "reducer": self.reducer,
            "ratio": str(Fraction(self.ratio).limit_denominator(10**6)),
            "kernel": self.kernel.to_dict(),
            "train": asdict(self.train),
            "split": {"seed": self.split.seed, "train_fraction": str(self.split.fraction())},
            "n_clients": self.n_clients,
            "key_seed": self.key_seed,
            "reducer_seed": self.reducer_seed,
            "n_thresholds": self.n_thresholds,
        }

    @classmethod
    def from_dict(cls, d) -> ExperimentConfig:
        d = dict(d)
        kw = {}
        for name in ("block", "reducer", "n_clients", "key_seed", "reducer_seed", "n_thresholds"):
            if name in d:
                kw[name] = d[name]
        if "ratio" in d:
            kw["ratio"] = Fraction(str(d["ratio"]))
        if "kernel" in d:
            k = d["kernel"]
            kw["kernel"] = KernelSpec(k) if isinstance(k, str) else KernelSpec.from_dict(k)
        if "train" in d:
            kw["train"] = TrainConfig(**d["train"])
        if "split" in d:
            s = d["split"]
            kw["split"] = SplitSpec(s.get("seed", 0), Fraction(str(s.get("train_fraction", "1/2"))))
        return cls(**kw)


@dataclass
class EvalReport:
    condition: str
    kernel: KernelSpec
    reduction_ratio: str
    eer_plain: float
    eer_encrypted: float
    curve_plain: RocCurve
    curve_encrypted: RocCurve
    scores_plain: ScoreSet
    scores_encrypted: ScoreSet
    config: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "condition": self.condition,
            "kernel": self.kernel.to_dict(),
            "reduction_ratio": self.reduction_ratio,
            "eer_plain": self.eer_plain,
            "eer_encrypted": self.eer_encrypted,
            "curves": {"plain": self.curve_plain.to_dict(), "encrypted": self.curve_encrypted.to_dict()},
            "scores": {"plain": self.scores_plain.to_dict(), "encrypted": self.scores_encrypted.to_dict()},
            "config": self.config,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d) -> EvalReport:
        if d.get("format") != REPORT_FORMAT:
            raise ConfigError(f"unsupported report format {d.get('format')!r}")
        return cls(
            condition=d["condition"],
            kernel=KernelSpec.from_dict(d["kernel"]),
            reduction_ratio=d["reduction_ratio"],
            eer_plain=d["eer_plain"],
            eer_encrypted=d["eer_encrypted"],
            curve_plain=RocCurve.from_dict(d["curves"]["plain"]),
            curve_encrypted=RocCurve.from_dict(d["curves"]["encrypted"]),
            scores_plain=ScoreSet.from_dict(d["scores"]["plain"]),
            scores_encrypted=ScoreSet.from_dict(d["scores"]["encrypted"]),
            config=d["config"],
            extra=d.get("extra", {}),
        )


# -- pipelines -------------------------------------------------------------

@dataclass
class PipelineRun:
    """Scores from one reduce -> z-score -> OvR SVM pass."""

    classes: np.ndarray
    decision: np.ndarray  # (n_test, n_classes)
    model: object
    pipeline: FeaturePipeline


def make_reducer(cfg: ExperimentConfig, in_dim: int) -> Reducer:
    if cfg.reducer == "identity":
        return fit_reducer("identity", in_dim, in_dim, cfg.reducer_seed)
    return fit_reducer(cfg.reducer, in_dim, out_dim_for_ratio(in_dim, cfg.ratio), cfg.reducer_seed)


def run_pipeline(train_x, train_y, test_x, reducer: Reducer, cfg: ExperimentConfig) -> PipelineRun:
    pipe = FeaturePipeline(reducer)
    ztrain = pipe.fit_transform(train_x)
    model = train_one_vs_rest(ztrain, train_y, cfg.train, cfg.kernel)
    return PipelineRun(model.classes, model.decision_matrix(pipe.transform(test_x)), model, pipe)


def ovr_scores(decision: np.ndarray, classes, test_y) -> ScoreSet:
    """Genuine = own-identity model score; every other model gives an impostor trial."""
    own = np.asarray(test_y)[:, None] == np.asarray(classes)[None, :]
    return ScoreSet(decision[own], decision[~own])


def _summary(scores: ScoreSet, cfg: ExperimentConfig):
    curve = sweep(scores, cfg.n_thresholds)
    return curve, eer(curve), eer_threshold(curve)


def run_keycond1(dataset: LabeledDataset, cfg: ExperimentConfig) -> EvalReport:
    """All images encrypted with one key; plain and encrypted pipelines
    share reducer seed and training configuration."""
    tr, te = split_indices(dataset.identity, cfg.split)
    h, w = dataset.shape
    key = keygen(cfg.key_seed)
    enc_images = encrypt(dataset.images, key, cfg.block)
    plain_x = flatten(dataset.images)
    enc_x = flatten(enc_images)
    reducer = make_reducer(cfg, plain_x.shape[1])
    y = dataset.identity

    plain = run_pipeline(plain_x[tr], y[tr], plain_x[te], reducer, cfg)
    enc = run_pipeline(enc_x[tr], y[tr], enc_x[te], reducer, cfg)
    s_plain = ovr_scores(plain.decision, plain.classes, y[te])
    s_enc = ovr_scores(enc.decision, enc.classes, y[te])
    c_plain, e_plain, t_plain = _summary(s_plain, cfg)
    c_enc, e_enc, t_enc = _summary(s_enc, cfg)

    extra = {
        "protocol": "one-vs-rest decision values; all non-matching (image, model) pairs are impostors",
        "key": key.to_dict(cfg.block),
        "eer_threshold_plain": t_plain,
        "eer_threshold_encrypted": t_enc,
        "n_train": int(len(tr)),
        "n_test": int(len(te)),
        "out_dim": reducer.out_dim,
    }
    if reducer.kind == "subsample":
        pmap = induced_pixel_map(key, w, h, cfg.block)
        back = Reducer.from_indices(pull_back_indices(reducer, pmap), reducer.in_dim, reducer.seed)
        pulled = run_pipeline(plain_x[tr], y[tr], plain_x[te], back, cfg)
        s_pull = ovr_scores(pulled.decision, pulled.classes, y[te])
        extra["eer_plain_pullback"] = _summary(s_pull, cfg)[1]
    return EvalReport(
        condition="keycond1",
        kernel=cfg.kernel,
        reduction_ratio=str(Fraction(cfg.ratio).limit_denominator(10**6)),
        eer_plain=e_plain,
        eer_encrypted=e_enc,
        curve_plain=c_plain,
        curve_encrypted=c_enc,
        scores_plain=s_plain,
        scores_encrypted=s_enc,
        config=cfg.to_dict(),
        extra=extra,
    )


def client_keys(cfg: ExperimentConfig, n_clients: int) -> list:
    return [keygen(derive_seed(cfg.key_seed, c)) for c in range(n_clients)]


def assign_clients(dataset: LabeledDataset, n_clients: int) -> np.ndarray:
    """Per-image client ids; identities go round-robin when unassigned."""
    if dataset.client is not None:
        return dataset.client
    return dataset.identity % n_clients


def run_keycond2(dataset: LabeledDataset, cfg: ExperimentConfig) -> EvalReport:
    """Each client encrypts with its own key.

    The encrypted model for identity ``m`` is trained on every client's
    training images, each encrypted under its owner's key. Test trials
    for model ``m``:

    * genuine: a test image of ``m`` under ``m``'s client key;
    * other-person-same-key / other-person-other-key: test images of
      other identities under their own client's key;
    * same-person-other-key: test images of ``m`` re-encrypted under every
      other client's key.

    The plain pipeline has no keys and uses the ordinary protocol.
    """
    if cfg.n_clients < 2:
        raise ConfigError("key condition 2 needs at least 2 clients")
    tr, te = split_indices(dataset.identity, cfg.split)
    y = dataset.identity
    client = assign_clients(dataset, cfg.n_clients)
    if client.min() < 0 or client.max() >= cfg.n_clients:
        raise ConfigError("client ids must lie in [0, n_clients)")
    owner = {}
    for ident, c in zip(y, client):
        if owner.setdefault(int(ident), int(c)) != int(c):
            raise ConfigError(f"identity {ident} belongs to more than one client")
    keys = client_keys(cfg, cfg.n_clients)

    own = np.empty_like(dataset.images)
    for c, key in enumerate(keys):
        mine = client == c
        if mine.any():
            own[mine] = encrypt(dataset.images[mine], key, cfg.block)

    plain_x = flatten(dataset.images)
    reducer = make_reducer(cfg, plain_x.shape[1])
    plain = run_pipeline(plain_x[tr], y[tr], plain_x[te], reducer, cfg)
    s_plain = ovr_scores(plain.decision, plain.classes, y[te])

    enc = run_pipeline(flatten(own[tr]), y[tr], flatten(own[te]), reducer, cfg)
    classes = enc.classes
    class_client = np.array([owner[int(c)] for c in classes])
    genuine, impostor, tags = [], [], []
    te_y, te_client = y[te], client[te]
    for row, (ident, c) in enumerate(zip(te_y, te_client)):
        for col, m in enumerate(classes):
            s = enc.decision[row, col]
            if m == ident:
                genuine.append(s)
            else:
                impostor.append(s)
                tags.append(SAME_KEY_OTHER_PERSON if class_client[col] == c else OTHER_KEY_OTHER_PERSON)
    # same person presented under a foreign key, scored by the own-identity model
    col_of = {int(m): i for i, m in enumerate(classes)}
    for other in range(cfg.n_clients):
        mask = te_client != other
        if not mask.any():
            continue
        feats = enc.pipeline.transform(flatten(encrypt(dataset.images[te[mask]], keys[other], cfg.block)))
        dec = enc.model.decision_matrix(feats)
        cols = np.array([col_of[int(m)] for m in te_y[mask]])
        impostor.extend(dec[np.arange(len(cols)), cols].tolist())
        tags.extend([OTHER_KEY_SAME_PERSON] * len(cols))
    s_enc = ScoreSet(genuine, impostor, tags)

    c_plain, e_plain, t_plain = _summary(s_plain, cfg)
    c_enc, e_enc, t_enc = _summary(s_enc, cfg)
    breakdown_far = {
        tag: far_at(s_enc.impostor[s_enc.breakdown == tag], t_enc) for tag in IMPOSTOR_TAGS
    }
    extra = {
        "protocol": "one-vs-rest decision values; genuine requires same person and same key",
        "keys": [k.to_dict(cfg.block) for k in keys],
        "eer_threshold_plain": t_plain,
        "eer_threshold_encrypted": t_enc,
        "impostor_counts": s_enc.counts(),
        "impostor_far_at_eer": breakdown_far,
        "n_train": int(len(tr)),
        "n_test": int(len(te)),
        "out_dim": reducer.out_dim,
    }
    return EvalReport(
        condition="keycond2",
        kernel=cfg.kernel,
        reduction_ratio=str(Fraction(cfg.ratio).limit_denominator(10**6)),
        eer_plain=e_plain,
        eer_encrypted=e_enc,
        curve_plain=c_plain,
        curve_encrypted=c_enc,
        scores_plain=s_plain,
        scores_encrypted=s_enc,
        config=cfg.to_dict(),
        extra=extra,
    )


# -- output ---------------------------------------------------------------

def curve_csv(curve: RocCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in zip(curve.thresholds, curve.far, curve.frr):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def csv_paths(path) -> dict:
    path = Path(path)
    return {
        "plain": path.with_name(path.stem + "_plain.csv"),
        "encrypted": path.with_name(path.stem + "_encrypted.csv"),
    }


def write_curve_csvs(report: EvalReport, path):
    paths = csv_paths(path)
    _atomic_write(paths["plain"], curve_csv(report.curve_plain).encode())
    _atomic_write(paths["encrypted"], curve_csv(report.curve_encrypted).encode())
    return paths


def emit_report(report: EvalReport, path):
    """Write ``path`` (JSON) and ``<stem>_plain.csv`` / ``<stem>_encrypted.csv``."""
    _atomic_write(path, (json.dumps(report.to_dict(), indent=1) + "\n").encode())
    return write_curve_csvs(report, path)


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))
