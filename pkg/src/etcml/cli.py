"""Command-line front end.

Exit status: 0 on success, 1 on user errors (bad flags, unreadable or
malformed inputs), 2 when a verification invariant fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .cipher import decrypt, encrypt, keygen, load_key, save_key
from .dataset_io import (
    SplitSpec,
    _atomic_write,
    load_dataset_dir,
    read_manifest,
    read_pgm,
    save_dataset_dir,
    split_indices,
    synth_dataset,
    write_manifest,
    write_pgm,
)
from .errors import EtcError, OracleError
from .evaluation import ExperimentConfig, emit_report, load_report, make_reducer, run_keycond1, run_keycond2, write_curve_csvs
from .features import FeaturePipeline, flatten
from .svm import KernelSpec, TrainConfig, train_one_vs_rest

log = logging.getLogger("etcml")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _write_json(obj, path):
    _atomic_write(path, (json.dumps(obj, indent=1) + "\n").encode())


def _ratio(text):
    try:
        r = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a ratio: {text}") from None
    if not 0 < r <= 1:
        raise argparse.ArgumentTypeError("ratio must lie in (0, 1]")
    return r


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _add_experiment_flags(p, multi=False):
    nargs = "+" if multi else None
    p.add_argument("--config", type=Path, help="JSON experiment config; flags override it")
    p.add_argument("--dataset-dir", type=Path, help="root/<identity>/<image>.pgm; synthetic data if omitted")
    p.add_argument("--block", type=int)
    p.add_argument("--reducer", choices=("identity", "subsample", "gaussian"))
    p.add_argument("--ratio", type=_ratio, nargs=nargs)
    p.add_argument("--kernel", choices=("linear", "rbf", "poly"), nargs=nargs)
    p.add_argument("--gamma", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--seed", type=_seed, help="seeds the split, the reducer and the key")
    p.add_argument("--clients", type=int)
    p.add_argument("--out-dir", type=Path, required=True)


def build_parser():
    parser = _Parser(prog="etcml", description="EtC image encryption and encrypted-domain SVM experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("keygen", help="write a key file")
    p.add_argument("--seed", type=_seed, help="master seed (system entropy if omitted)")
    p.add_argument("--block", type=int, default=8)
    p.add_argument("--out", type=Path, required=True)

    for name in ("encrypt", "decrypt"):
        p = sub.add_parser(name, help=f"{name} a PGM file or a directory tree of PGMs")
        p.add_argument("--key", type=Path, required=True)
        p.add_argument("--block", type=int, help="overrides the block size stored in the key file")
        p.add_argument("input", type=Path)
        p.add_argument("output", type=Path)

    p = sub.add_parser("prepare", help="split a dataset and write train/test manifests")
    p.add_argument("--dataset-dir", type=Path, help="existing dataset; omitted -> write a synthetic one")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--train-fraction", type=_ratio, default=Fraction(1, 2))
    p.add_argument("--identities", type=int, default=8)
    p.add_argument("--per-identity", type=int, default=20)
    p.add_argument("--size", type=int, nargs=2, default=(32, 32), metavar=("WIDTH", "HEIGHT"))
    p.add_argument("--separation", type=float, default=0.3)

    p = sub.add_parser("train", help="fit reducer, z-score and one-vs-rest SVM")
    _add_experiment_flags(p)
    p.add_argument("--key", type=Path, help="encrypt the images with this key before training")
    p.add_argument("--manifest", type=Path, help="train on the listed files instead of a seeded split")

    p = sub.add_parser("evaluate", help="run key-condition experiments over ratio/kernel grids")
    _add_experiment_flags(p, multi=True)
    p.add_argument("--condition", type=int, choices=(1, 2), nargs="+", default=[1])

    p = sub.add_parser("verify", help="run the property-verification suites")
    p.add_argument("--seed", type=_seed, default=0)

    p = sub.add_parser("report", help="re-emit curve CSVs from a report JSON")
    p.add_argument("input", type=Path)
    p.add_argument("--out-dir", type=Path)
    return parser


# -- config merging ---------------------------------------------------------

def _base_config(args) -> dict:
    if args.config is None:
        return {}
    try:
        return json.loads(args.config.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {args.config} is not JSON: {exc}") from None


def _experiment_config(base: dict, args, ratio=None, kernel=None) -> ExperimentConfig:
    d = dict(base)
    for dest, key in (("block", "block"), ("reducer", "reducer"), ("clients", "n_clients")):
        if getattr(args, dest) is not None:
            d[key] = getattr(args, dest)
    if ratio is not None:
        d["ratio"] = str(ratio)
    kern = d.get("kernel", {"kind": "rbf"})
    kern = {"kind": kern} if isinstance(kern, str) else dict(kern)
    if kernel is not None:
        kern["kind"] = kernel
    if args.gamma is not None:
        kern["gamma"] = args.gamma
    d["kernel"] = kern
    if args.c is not None:
        d["train"] = {**d.get("train", {}), "c": args.c}
    if args.seed is not None:
        d["split"] = {**d.get("split", {}), "seed": args.seed}
        d["key_seed"] = args.seed
        d["reducer_seed"] = args.seed
    if d.get("reducer", "identity") != "identity" and "ratio" not in d:
        raise UsageError("--ratio is required for the subsample and gaussian reducers")
    return ExperimentConfig.from_dict(d)


def _dataset(args, base):
    if args.dataset_dir is not None:
        return load_dataset_dir(args.dataset_dir), {"dataset_dir": str(args.dataset_dir)}
    syn = {"n_identities": 8, "per_identity": 20, "width": 32, "height": 32, "separation": 0.3, "seed": 0}
    syn.update(base.get("synthetic", {}))
    return synth_dataset(**syn), {"synthetic": syn}


# -- subcommands ------------------------------------------------------------

def cmd_keygen(args):
    key = keygen(args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_key(key, args.out, args.block)
    log.info("wrote %s", args.out)


def _cipher_files(args, fn):
    key, block = load_key(args.key)
    block = args.block or block or 8
    if args.input.is_dir():
        files = sorted(args.input.rglob("*.pgm"))
        pairs = [(f, args.output / f.relative_to(args.input)) for f in files]
    else:
        pairs = [(args.input, args.output)]
    for src, dst in pairs:
        dst.parent.mkdir(parents=True, exist_ok=True)
        write_pgm(fn(read_pgm(src), key, block), dst)
    log.info("processed %d file(s)", len(pairs))


def cmd_prepare(args):
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    if args.dataset_dir is None:
        width, height = args.size
        ds = synth_dataset(args.identities, args.per_identity, width, height, args.separation, args.seed)
        paths = save_dataset_dir(ds, out / "data")
        root = out / "data"
    else:
        ds = load_dataset_dir(args.dataset_dir)
        paths = ds.paths
        root = args.dataset_dir
    spec = SplitSpec(args.seed, args.train_fraction)
    tr, te = split_indices(ds.identity, spec)
    write_manifest([paths[i] for i in tr], out / "train.json")
    write_manifest([paths[i] for i in te], out / "test.json")
    _write_json(
        {"dataset_dir": str(root), "seed": args.seed, "train_fraction": str(args.train_fraction)},
        out / "split.json",
    )
    log.info("train %d / test %d images", len(tr), len(te))


def cmd_train(args):
    base = _base_config(args)
    cfg = _experiment_config(base, args, ratio=args.ratio, kernel=args.kernel)
    ds, source = _dataset(args, base)
    if args.manifest is not None:
        if ds.paths is None:
            raise UsageError("--manifest requires --dataset-dir")
        wanted = set(read_manifest(args.manifest))
        tr = np.array([i for i, p in enumerate(ds.paths) if p in wanted], dtype=np.int64)
        if len(tr) != len(wanted):
            raise UsageError("manifest lists files missing from the dataset")
    else:
        tr, _ = split_indices(ds.identity, cfg.split)
    images = ds.images[tr]
    if args.key is not None:
        key, block = load_key(args.key)
        images = encrypt(images, key, args.block or block or cfg.block)
    x = flatten(images)
    pipe = FeaturePipeline(make_reducer(cfg, x.shape[1]))
    model = train_one_vs_rest(pipe.fit_transform(x), ds.identity[tr], cfg.train, cfg.kernel)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(model.to_dict(), out / "model.json")
    _write_json(
        {"reducer": pipe.reducer.to_dict(), "zscore": pipe.stats.to_dict(), "config": cfg.to_dict(),
         "source": source, "encrypted": args.key is not None},
        out / "pipeline.json",
    )
    log.info("trained %d models on %d images", len(model.models), len(tr))


def cmd_evaluate(args):
    base = _base_config(args)
    ds, source = _dataset(args, base)
    ratios = args.ratio or [None]
    kernels = args.kernel or [None]
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for cond in args.condition:
        for ratio in ratios:
            for kernel in kernels:
                cfg = _experiment_config(base, args, ratio=ratio, kernel=kernel)
                run = run_keycond1 if cond == 1 else run_keycond2
                report = run(ds, cfg)
                report.extra["source"] = source
                ratio_tag = str(Fraction(cfg.ratio).limit_denominator(10**6)).replace("/", "-")
                name = f"cond{cond}_{cfg.kernel.kind}_r{ratio_tag}"
                emit_report(report, out / f"{name}.json")
                summary.append({"name": name, "condition": cond, "kernel": cfg.kernel.kind,
                                "ratio": report.reduction_ratio, "eer_plain": report.eer_plain,
                                "eer_encrypted": report.eer_encrypted})
                print(f"{name}: EER plain {report.eer_plain:.6f} encrypted {report.eer_encrypted:.6f}")
    _write_json(summary, out / "summary.json")


def cmd_verify(args):
    failed = []
    for name, ok, detail in verify_mod.run_all(seed=args.seed):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            failed.append(name)
    if failed:
        print("violated invariants: " + ", ".join(failed), file=sys.stderr)
        return 2
    return 0


def cmd_report(args):
    report = load_report(args.input)
    target = args.input if args.out_dir is None else args.out_dir / args.input.name
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
    for kind, path in write_curve_csvs(report, target).items():
        print(f"{kind}: {path}")


COMMANDS = {
    "keygen": cmd_keygen,
    "encrypt": lambda a: _cipher_files(a, encrypt),
    "decrypt": lambda a: _cipher_files(a, decrypt),
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "verify": cmd_verify,
    "report": cmd_report,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(message)s")
        return COMMANDS[args.command](args) or 0
    except UsageError as exc:
        print(f"etcml: error: {exc}", file=sys.stderr)
        return 1
    except (OracleError, AssertionError) as exc:
        print(f"etcml: invariant failure: {exc}", file=sys.stderr)
        return 2
    except (EtcError, OSError) as exc:
        print(f"etcml: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
