"""Command-line entry point: ``psgesture <command> [flags]``.

Settings come from built-in defaults, then an optional JSON ``--config``
file, then explicit flags. The resolved settings (``RunConfig``) and their
hash are written into every artifact. Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_classifier, save_classifier
from .data import AUGMENTATIONS, SYNTH_CLASSES, DatasetError, DatasetManifest, load_jsonl, save_jsonl, synth_generate
from .estimator import MultiStreamClassifier
from .features import FEATURE_NAMES, AohConfig, DyadicConfig, PathSignatureFeaturizer, SigDepthConfig, feature_dims
from .net import MultiStreamNet, count_multadds, dump_first_layer, gradient_check, ps_multadds, toy_gradcheck_net
from .transforms import SkeletonPreprocessor

logger = logging.getLogger("psgesture")

GRADCHECK_LIMIT = 1e-4
METRIC_COLUMNS = ("epoch", "loss", "train_acc", "val_acc", "lr", "mean_delta")


class UsageError(Exception):
    """Bad combination of settings; reported with exit code 2."""


@dataclass
class RunConfig:
    # features
    aoh: dict | None = None
    n_frames: int = 39
    m_s: int = 2
    m_t: int = 4
    m_t_s: int = 3
    l_t: int = 3
    l_t_s: int = 2
    features: list = field(default_factory=lambda: list(FEATURE_NAMES))
    # network and training
    arch: str = "3s"
    ttm: bool = False
    hidden: int = 64
    activation: str = "relu"
    batch_size: int = 56
    dropout: float = 0.5
    momentum: float = 0.7
    alpha0: float = 0.01
    lr_decay: float = 0.001
    epochs: int = 200
    augment: list = field(default_factory=list)
    seed: int = 0
    # paths
    data: str | None = None
    manifest: str | None = None
    out: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def run_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def aoh_config(self) -> AohConfig:
        return AohConfig() if self.aoh is None else AohConfig.from_dict(self.aoh)

    def depths(self) -> SigDepthConfig:
        return SigDepthConfig(self.m_s, self.m_t, self.m_t_s)

    def dyadic(self) -> DyadicConfig:
        return DyadicConfig(self.l_t, self.l_t_s)

    def classifier(self) -> MultiStreamClassifier:
        return MultiStreamClassifier(
            arch=self.arch, features=tuple(self.features), ttm=self.ttm, hidden=self.hidden,
            activation=self.activation, dropout=self.dropout, batch_size=self.batch_size, momentum=self.momentum,
            alpha0=self.alpha0, lr_decay=self.lr_decay, epochs=self.epochs, augment=tuple(self.augment),
            aoh=None if self.aoh is None else self.aoh_config(), m_s=self.m_s, m_t=self.m_t, m_t_s=self.m_t_s,
            l_t=self.l_t, l_t_s=self.l_t_s, random_state=self.seed,
        )


CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then flags. Records explicit keys on ``args``."""
    values = {}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(loaded) - CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(loaded)
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    args.explicit = set(values)
    cfg = RunConfig(**values)
    bad = set(cfg.features) - set(FEATURE_NAMES)
    if bad:
        raise UsageError(f"unknown features: {', '.join(sorted(bad))}")
    bad = set(cfg.augment) - set(AUGMENTATIONS)
    if bad:
        raise UsageError(f"unknown augmentations: {', '.join(sorted(bad))}")
    try:
        cfg.aoh_config(), cfg.depths(), cfg.dyadic()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


# -- argument parsing --------------------------------------------------------


def _csv_list(text: str) -> list[str]:
    return [t for t in (s.strip() for s in text.split(",")) if t]


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _add_feature_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("features")
    g.add_argument("--n-frames", dest="n_frames", type=int)
    g.add_argument("--m-s", dest="m_s", type=int, help="depth of spatial signatures")
    g.add_argument("--m-t", dest="m_t", type=int, help="depth of temporal signatures")
    g.add_argument("--m-t-s", dest="m_t_s", type=int, help="depth of temporal-spatial signatures")
    g.add_argument("--l-t", dest="l_t", type=int, help="dyadic levels for temporal signatures")
    g.add_argument("--l-t-s", dest="l_t_s", type=int, help="dyadic levels for temporal-spatial signatures")
    g.add_argument("--features", type=_csv_list, help="comma list from " + ",".join(FEATURE_NAMES))


def _add_net_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("network")
    g.add_argument("--arch", choices=("1s", "2s", "3s"))
    g.add_argument("--ttm", type=_on_off, metavar="on|off")
    g.add_argument("--hidden", type=int)
    g.add_argument("--activation", choices=("relu", "tanh"))


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--dropout", type=float)
    g.add_argument("--momentum", type=float)
    g.add_argument("--alpha0", type=float)
    g.add_argument("--lr-decay", dest="lr_decay", type=float)
    g.add_argument("--aug", dest="augment", type=_csv_list, help="comma list from " + ",".join(AUGMENTATIONS))


def _add_data_flags(p: argparse.ArgumentParser, out: bool = True) -> None:
    p.add_argument("--data", help="sequences in JSONL")
    p.add_argument("--manifest", help="manifest JSON (default: manifest.json next to the data)")
    if out:
        p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psgesture", description="Path-signature skeleton gesture recognition.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file of settings; flags override it")
        p.add_argument("--seed", type=int)
        return p

    p = command("synth", "generate a synthetic gesture dataset")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", dest="per_class", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--out", required=True, help="output directory")

    p = command("featurize", "compute signature features for a dataset")
    _add_data_flags(p)
    _add_feature_flags(p)
    p.add_argument("--report-dims", action="store_true", help="print feature widths and exit")

    p = command("train", "train a classifier")
    _add_data_flags(p)
    _add_feature_flags(p)
    _add_net_flags(p)
    _add_train_flags(p)

    p = command("eval", "evaluate a checkpoint")
    _add_data_flags(p, out=False)
    _add_feature_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", help="manifest split to evaluate (or 'all')")
    p.add_argument("--deltas-csv", dest="deltas_csv", help="write per-sequence temporal shifts here")

    p = command("gradcheck", "compare analytic and finite-difference gradients on a toy net")
    _add_net_flags(p)

    p = command("count-ops", "count multiply-adds of a configured network")
    _add_feature_flags(p)
    _add_net_flags(p)
    p.add_argument("--classes", type=int, default=20)

    p = command("dump-weights", "write a stream's first dense layer as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


# -- helpers -----------------------------------------------------------------


def _header_lines(cfg: RunConfig) -> list[str]:
    return [f"# run_config={json.dumps(cfg.to_dict(), sort_keys=True)}", f"# run_hash={cfg.run_hash()}"]


def _load_dataset(cfg: RunConfig):
    if not cfg.data:
        raise UsageError("--data is required")
    seqs = load_jsonl(cfg.data)
    manifest_path = Path(cfg.manifest) if cfg.manifest else Path(cfg.data).with_name("manifest.json")
    manifest = DatasetManifest.load(manifest_path) if manifest_path.exists() else None
    if manifest is not None:
        manifest.check_ids(seqs)
    return seqs, manifest


def _select(seqs, manifest, split: str):
    if split == "all" or manifest is None:
        return list(seqs)
    if split not in manifest.splits:
        raise UsageError(f"manifest has no split {split!r}")
    by_id = {s.id: s for s in seqs}
    return [by_id[i] for i in manifest.splits[split]]


def _skeletons(cfg: RunConfig, seqs) -> np.ndarray:
    need = cfg.aoh_config().max_index() + 1
    for s in seqs:
        if s.frames.shape[1] < need or s.frames.shape[2] != cfg.aoh_config().d:
            raise DatasetError(f"sequence {s.id!r} has frames shaped {s.frames.shape}; "
                               f"the joint configuration needs {need} joints in {cfg.aoh_config().d}D")
    return SkeletonPreprocessor(n_frames=cfg.n_frames).fit_transform([s.frames for s in seqs])


def _labels(seqs) -> np.ndarray:
    missing = [s.id for s in seqs if s.label is None]
    if missing:
        raise DatasetError(f"sequence {missing[0]!r} has no label")
    return np.array([s.label for s in seqs])


def _class_name(label, names) -> str:
    if names and isinstance(label, (int, np.integer)) and 0 <= label < len(names):
        return str(names[label])
    return str(label)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


# -- commands ----------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig) -> int:
    if not 1 <= args.classes <= len(SYNTH_CLASSES):
        raise UsageError(f"--classes must lie in [1, {len(SYNTH_CLASSES)}], got {args.classes}")
    if args.per_class < 1:
        raise UsageError(f"--per-class must be positive, got {args.per_class}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seqs, manifest = synth_generate(args.classes, args.per_class, cfg.seed, noise=args.noise)
    save_jsonl(seqs, out / "sequences.jsonl")
    manifest.extra.update({
        "generator": {"classes": args.classes, "per_class": args.per_class, "seed": cfg.seed, "noise": args.noise},
        "run_config": cfg.to_dict(),
        "run_hash": cfg.run_hash(),
    })
    manifest.save(out / "manifest.json")
    print(f"wrote {len(seqs)} sequences to {out / 'sequences.jsonl'}")
    return 0


def cmd_featurize(args, cfg: RunConfig) -> int:
    aoh, depths, dyadic = cfg.aoh_config(), cfg.depths(), cfg.dyadic()
    dims = feature_dims(aoh, cfg.n_frames, depths, dyadic)
    if args.report_dims:
        for name in FEATURE_NAMES:
            print(f"{name:8s} {dims[name]}")
        print(f"{'total':8s} {sum(dims[n] for n in cfg.features)}  (selected: {','.join(cfg.features)})")
        return 0
    if not cfg.out:
        raise UsageError("--out is required unless --report-dims is given")
    seqs, _ = _load_dataset(cfg)
    X = _skeletons(cfg, seqs)
    fz = PathSignatureFeaturizer(None if cfg.aoh is None else aoh, cfg.m_s, cfg.m_t, cfg.m_t_s, cfg.l_t, cfg.l_t_s,
                                 tuple(cfg.features)).fit(X)
    with Path(cfg.out).open("w") as fh:
        header = {"run_config": cfg.to_dict(), "run_hash": cfg.run_hash(), "config_hash": fz.config_hash_,
                  "dims": {k: fz.feature_dims_[k] for k in cfg.features}}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i, seq in enumerate(seqs):
            blocks = fz.transform_blocks(X[i:i + 1])
            record = {"id": seq.id, "label": seq.label, "config_hash": fz.config_hash_,
                      "features": {k: blocks[k][0].tolist() for k in cfg.features}}
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
    print(f"wrote features of {len(seqs)} sequences to {cfg.out} (config {fz.config_hash_})")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    if not cfg.out:
        raise UsageError("--out is required")
    seqs, manifest = _load_dataset(cfg)
    train = _select(seqs, manifest, "train")
    val = _select(seqs, manifest, "val") if manifest is not None else []
    if not train:
        raise DatasetError("no training sequences")
    X, y = _skeletons(cfg, train), _labels(train)
    X_val, y_val = (_skeletons(cfg, val), _labels(val)) if val else (None, None)
    clf = cfg.classifier()
    try:
        clf.fit(X, y, X_val, y_val)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"run_config": cfg.to_dict(), "run_hash": cfg.run_hash(), "n_frames": cfg.n_frames}
    if manifest is not None:
        meta["class_names"] = manifest.classes
    save_classifier(out / "model.ckpt", clf, meta)
    with (out / "metrics.csv").open("w", newline="") as fh:
        for line in _header_lines(cfg):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for rec in clf.history_:
            writer.writerow([_fmt(rec[c]) for c in METRIC_COLUMNS])
    last = clf.history_[-1]
    print(f"trained {cfg.arch}{'+ttm' if cfg.ttm else ''} for {cfg.epochs} epochs: "
          f"loss {last['loss']:.4f}, train acc {last['train_acc']:.2f}")
    print(f"checkpoint {out / 'model.ckpt'}, metrics {out / 'metrics.csv'}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    clf, meta = load_classifier(args.checkpoint)
    trained = meta["run_config"]
    # feature settings not given on the command line default to the checkpoint's
    for key in ("aoh", "n_frames", "m_s", "m_t", "m_t_s", "l_t", "l_t_s", "features"):
        if key not in args.explicit:
            setattr(cfg, key, trained[key])
    probe = PathSignatureFeaturizer(None if cfg.aoh is None else cfg.aoh_config(), cfg.m_s, cfg.m_t, cfg.m_t_s,
                                    cfg.l_t, cfg.l_t_s, tuple(cfg.features))
    F, J, d = meta["input_shape"]
    probe.fit(np.zeros((1, cfg.n_frames, J, d)))
    if probe.config_hash_ != meta["feature_config_hash"] or list(cfg.features) != list(trained["features"]):
        print(f"error: feature configuration hash {probe.config_hash_} does not match the checkpoint's "
              f"{meta['feature_config_hash']}", file=sys.stderr)
        return 1
    cfg.data = cfg.data or trained.get("data")
    cfg.manifest = cfg.manifest or trained.get("manifest")
    seqs, manifest = _load_dataset(cfg)
    subset = _select(seqs, manifest, args.split)
    if not subset:
        raise DatasetError(f"split {args.split!r} is empty")
    X, y = _skeletons(cfg, subset), _labels(subset)
    pred = clf.predict(X)
    deltas = clf.deltas(X)
    classes = list(clf.classes_)
    names = [_class_name(c, meta.get("class_names")) for c in classes]
    index = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(y, pred):
        if t not in index:
            raise DatasetError(f"label {t!r} was not seen in training")
        confusion[index[t], index[p]] += 1
    acc = float(np.mean(pred == y))
    print(f"accuracy: {acc:.2f} ({int(np.sum(pred == y))}/{len(y)}) on split {args.split!r}")
    print("confusion (rows: true, columns: predicted):")
    width = max(len(str(n)) for n in names)
    print(" " * (width + 1) + " ".join(f"{i:>5d}" for i in range(len(classes))))
    for name, row in zip(names, confusion):
        print(f"{name:>{width}s} " + " ".join(f"{v:>5d}" for v in row))
    print(f"mean |delta|: {np.mean(np.abs(deltas)):.4f}")
    if args.deltas_csv:
        with Path(args.deltas_csv).open("w", newline="") as fh:
            for line in _header_lines(cfg):
                fh.write(line + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("id", "label", "predicted", "delta"))
            for s, t, p, dl in zip(subset, y, pred, deltas):
                writer.writerow((s.id, t, p, repr(float(dl))))
    return 0


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    net, blocks, labels = toy_gradcheck_net(cfg.arch, cfg.ttm, seed=cfg.seed,
                                            activation=args.activation or "tanh")
    errors = gradient_check(net, blocks, labels)
    worst = max(errors.values())
    for name, err in errors.items():
        print(f"{name:10s} {err:.3e}")
    status = "ok" if worst <= GRADCHECK_LIMIT else "FAILED"
    print(f"max relative error {worst:.3e} ({status}, limit {GRADCHECK_LIMIT:g})")
    return 0 if worst <= GRADCHECK_LIMIT else 1


def cmd_count_ops(args, cfg: RunConfig) -> int:
    aoh, depths, dyadic = cfg.aoh_config(), cfg.depths(), cfg.dyadic()
    dims = feature_dims(aoh, cfg.n_frames, depths, dyadic)
    dims = {k: dims[k] for k in cfg.features}
    try:
        net = MultiStreamNet.build(cfg.arch, dims, args.classes, hidden=cfg.hidden, ttm=cfg.ttm,
                                   n_frames=cfg.n_frames, seed=cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print("network mult-adds per forward pass:")
    for name, n in count_multadds(net).items():
        print(f"  {name:10s} {n:>12,d}")
    ps = ps_multadds(aoh, cfg.n_frames, depths, dyadic, [f for f in cfg.features if f != "rc"])
    print("signature extraction mult-adds per sequence:")
    for name, n in ps.items():
        print(f"  {name:10s} {n:>12,d}")
    return 0


def cmd_dump_weights(args, cfg: RunConfig) -> int:
    clf, _ = load_classifier(args.checkpoint)
    try:
        text = dump_first_layer(clf.net_, args.stream)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    Path(args.out).write_text(text)
    W = clf.net_.params[f"s{args.stream}.W1"]
    print(f"wrote {W.shape[1]}x{W.shape[0]} weights of stream {args.stream} to {args.out}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "count-ops": cmd_count_ops,
    "dump-weights": cmd_dump_weights,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.error(str(exc))
    except (DatasetError, CheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
