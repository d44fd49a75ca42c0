"""Self-contained property checks behind ``etcml verify``.

Each check returns ``(ok, detail)``; :func:`run_all` runs them in order.
"""

from __future__ import annotations

import numpy as np

from .cipher import decrypt, encrypt, induced_pixel_map, keygen, to_signed_permutation
from .dataset_io import synth_dataset
from .evaluation import ExperimentConfig, run_keycond1
from .features import apply_zscore, fit_zscore, flatten
from .svm import KernelSpec, TrainConfig, dual_objective, gram, kkt_residuals, qp_oracle, train_binary_smo


def check_round_trip(seed=0, n=20):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        img = rng.integers(0, 256, (32, 48), dtype=np.uint8)
        key = keygen(int(rng.integers(2**63)))
        if not np.array_equal(decrypt(encrypt(img, key, 8), key, 8), img):
            return False, "decrypt(encrypt(I)) != I"
    return True, f"{n} images"


def check_induced_map(seed=0, n_keys=5, n_images=20):
    rng = np.random.default_rng(seed)
    for _ in range(n_keys):
        key = keygen(int(rng.integers(2**63)))
        pmap = induced_pixel_map(key, 32, 32, 8)
        imgs = rng.integers(0, 256, (n_images, 32, 32), dtype=np.uint8)
        if not np.array_equal(pmap.apply(imgs.reshape(n_images, -1)), encrypt(imgs, key, 8).reshape(n_images, -1)):
            return False, "pixel map disagrees with encrypt"
    return True, f"{n_keys} keys x {n_images} images"


def check_zscore_equivalence(seed=0):
    ds = synth_dataset(n_identities=4, per_identity=10, seed=seed)
    key = keygen(seed)
    sp = to_signed_permutation(induced_pixel_map(key, 32, 32, 8))
    xp = flatten(ds.images)
    xe = flatten(encrypt(ds.images, key, 8))
    zp = apply_zscore(xp, fit_zscore(xp))
    ze = apply_zscore(xe, fit_zscore(xe))
    err = np.max(np.abs(ze - sp.apply(zp)) / np.maximum(1.0, np.abs(ze)))
    if err > 1e-12:
        return False, f"I-Z1 error {err:.3g}"
    worst = 0.0
    for kind in ("linear", "rbf"):
        spec = KernelSpec(kind)
        worst = max(worst, np.max(np.abs(gram(spec, ze) - gram(spec, zp))))
    if worst > 1e-9:
        return False, f"I-Z2 Gram error {worst:.3g}"
    return True, f"z error {err:.2g}, Gram error {worst:.2g}"


def check_smo_oracle(seed=0, n_problems=20):
    rng = np.random.default_rng(seed)
    worst_gap = worst_kkt = 0.0
    for p in range(n_problems):
        n = int(rng.integers(2, 7))
        x = rng.standard_normal((n, 2))
        y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        spec = KernelSpec("linear" if p % 2 else "rbf", gamma=None if p % 2 else 0.5)
        cfg = TrainConfig(c=float(rng.choice([0.1, 1.0, 10.0])))
        model = train_binary_smo(x, y, cfg, spec)
        k = gram(spec.resolved(2), x)
        oracle = qp_oracle(x, y, cfg.c, spec)
        worst_gap = max(worst_gap, oracle.objective - dual_objective(model.alpha, y, k))
        worst_kkt = max(worst_kkt, kkt_residuals(model, x, y).max())
    ok = worst_gap <= 1e-6 and worst_kkt <= TrainConfig().kkt_tol
    return ok, f"objective gap {worst_gap:.2g}, KKT residual {worst_kkt:.2g}"


def check_svm_equivalence(seed=0):
    ds = synth_dataset(n_identities=4, per_identity=10, seed=seed, separation=0.3)
    rep = run_keycond1(ds, ExperimentConfig(key_seed=seed))
    diff = np.max(np.abs(rep.scores_plain.genuine - rep.scores_encrypted.genuine))
    diff = max(diff, np.max(np.abs(rep.scores_plain.impostor - rep.scores_encrypted.impostor)))
    ok = diff <= 1e-6 and rep.eer_plain == rep.eer_encrypted
    return ok, f"score diff {diff:.2g}, EER {rep.eer_plain:.4f} vs {rep.eer_encrypted:.4f}"


CHECKS = {
    "cipher-round-trip": check_round_trip,
    "induced-pixel-map": check_induced_map,
    "zscore-signed-permutation": check_zscore_equivalence,
    "smo-vs-qp-oracle": check_smo_oracle,
    "svm-plain-encrypted": check_svm_equivalence,
}


def run_all(seed=0):
    results = []
    for name, check in CHECKS.items():
        ok, detail = check(seed=seed)
        results.append((name, bool(ok), detail))
    return results
