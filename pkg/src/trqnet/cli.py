"""Command-line interface: train, eval, bench, and simulate.

Configuration is a flat `key = value` text file overridden by CLI flags; the
resolved values are echoed to `config.echo` so a run can be reproduced from
its output directory alone. All randomness derives from the single --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import circuit_io
from .checkpoint import load_model, save_model
from .datasets import (
    Dataset,
    SplitSpec,
    filter_classes,
    load_cifar10,
    load_iris,
    load_mnist,
    split_folds,
    split_train_test,
    standardize,
)
from .model import build_model
from .statevector import fidelity
from .tensor_ring import measure_probs, tr_to_statevector
from .training import OptimizerConfig, evaluate, fit, seed_streams

SUPPORTED_QUBITS = (4, 6, 8, 10, 12)
SUPPORTED_RANKS = (2, 3, 4, 6)
IRIS_NUMERALS = {"1": "Iris-setosa", "2": "Iris-versicolor", "3": "Iris-virginica"}


@dataclass
class RunConfig:
    """Resolved settings for one training run."""

    dataset: str = "iris"
    data_dir: str = ""
    classes: str = "1,3"
    qubits: int = 4
    rank: int = 4
    tn_bond: int = 8
    circuit_layers: int = 2
    epochs: int = 25
    batch_size: int = 0  # 0 = dataset default (4 iris, 32 images)
    lr: float = 0.01
    tn_lr: float = 0.01
    angle_scale: float = 0.3
    alternate: int = 0
    subset: int = 0  # 0 = all samples
    train_fraction: float = 0.8
    seed: int = -1
    out: str = "run"

    def validate(self) -> None:
        if self.dataset not in ("iris", "mnist", "cifar10"):
            raise ValueError(f"unknown dataset '{self.dataset}'")
        if self.qubits not in SUPPORTED_QUBITS:
            raise ValueError(f"qubits must be one of {SUPPORTED_QUBITS}")
        if self.rank not in SUPPORTED_RANKS:
            raise ValueError(f"rank must be one of {SUPPORTED_RANKS}")
        if self.seed < 0:
            raise ValueError("--seed is required")
        n_classes = len(self.class_list())
        if n_classes not in (2, 3):
            raise ValueError("exactly 2 or 3 classes must be selected")
        if n_classes == 3 and self.qubits < 3:
            raise ValueError("ternary readout needs at least 3 qubits")

    def class_list(self) -> list:
        parts = [p.strip() for p in self.classes.split(",") if p.strip()]
        if self.dataset == "iris":
            try:
                return [IRIS_NUMERALS[p] for p in parts]
            except KeyError as exc:
                raise ValueError(f"iris classes are 1, 2, 3 (got {exc})") from exc
        return [int(p) for p in parts]

    def effective_batch_size(self) -> int:
        if self.batch_size > 0:
            return self.batch_size
        return 4 if self.dataset == "iris" else 32

    def to_echo(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"


def parse_config_file(path) -> dict:
    """Flat `key = value` file; types are coerced against RunConfig fields."""
    raw = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            raw[key] = value
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for key, value in raw.items():
        if key not in types:
            raise ValueError(f"{path}: unknown config key '{key}'")
        kind = types[key]
        out[key] = int(value) if kind == "int" else float(value) if kind == "float" else value
    return out


def _resolve_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(parse_config_file(args.config))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    if "data_dir" not in values or not values["data_dir"]:
        values["data_dir"] = os.environ.get("TRQNET_DATA_DIR", "data")
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _load_raw_dataset(cfg: RunConfig) -> Dataset:
    root = Path(cfg.data_dir)
    if cfg.dataset == "iris":
        return load_iris(root / "iris.csv")
    if cfg.dataset == "mnist":
        return load_mnist(
            root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte"
        )
    batches = sorted(root.glob("data_batch_*.bin")) or [root / "cifar10.bin"]
    return load_cifar10(batches)


def _stratified_subset(d: Dataset, total: int, seed: int) -> Dataset:
    if total <= 0 or total >= len(d):
        return d
    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
    keep = []
    classes = np.unique(d.labels)
    per = total // len(classes)
    for c in classes:
        idx = rng.permutation(np.flatnonzero(d.labels == c))
        keep.append(idx[:per])
    return d.subset(np.sort(np.concatenate(keep)), d.name + f"-sub{total}")


def _prepare(cfg: RunConfig):
    """Load, filter, subset, split, and standardize; returns (train, test)."""
    raw = _load_raw_dataset(cfg)
    filtered = filter_classes(raw, cfg.class_list())
    filtered = _stratified_subset(filtered, cfg.subset, cfg.seed)
    spec = SplitSpec(train_fraction=cfg.train_fraction, seed=cfg.seed)
    train, test = split_train_test(filtered, spec)
    train, test = standardize(train, test)
    return train, test


def _train_model(cfg: RunConfig, train: Dataset, test: Dataset):
    streams = seed_streams(cfg.seed)
    model = build_model(
        feature_width=train.feature_width,
        qubits=cfg.qubits,
        rank=cfg.rank,
        n_classes=train.n_classes,
        tn_rng=streams["tn"],
        bridge_rng=streams["bridge"],
        circuit_rng=streams["circuit"],
        circuit_layers=cfg.circuit_layers,
        max_bond=cfg.tn_bond,
        angle_scale=cfg.angle_scale,
    )
    opt = OptimizerConfig(
        learning_rate=cfg.lr,
        tn_learning_rate=cfg.tn_lr,
        max_epochs=cfg.epochs,
        batch_size=cfg.effective_batch_size(),
        seed=cfg.seed,
        alternate=cfg.alternate or None,
    )
    return fit(model, train, opt, val_dataset=test)


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    train, test = _prepare(cfg)

    model, report = _train_model(cfg, train, test)
    acc, _ = evaluate(model, test)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.trqn", model, asdict(cfg))
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "config.echo").write_text(cfg.to_echo(), encoding="utf-8")
    print(
        f"trained {cfg.dataset} [{cfg.classes}] qubits={cfg.qubits} rank={cfg.rank} "
        f"epochs={report.epochs} test_acc={acc:.4f} -> {out}"
    )
    return 0


def cmd_eval(args) -> int:
    model, saved = load_model(args.checkpoint)
    values = {k: v for k, v in saved.items() if k in {f.name for f in fields(RunConfig)}}
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    if not values.get("data_dir"):
        values["data_dir"] = os.environ.get("TRQNET_DATA_DIR", "data")
    cfg = RunConfig(**values)
    cfg.validate()
    train, test = _prepare(cfg)
    target = {"train": train, "test": test}[args.split]

    acc, confusion = evaluate(model, target)
    print(f"accuracy {acc:.4f}")
    metrics = {
        "accuracy": acc,
        "split": args.split,
        "n_samples": len(target),
        "confusion": confusion.tolist(),
    }
    payload = json.dumps(metrics, indent=2, sort_keys=True)
    print(payload)
    if args.json_out:
        Path(args.json_out).write_text(payload + "\n", encoding="utf-8")
    return 0


def cmd_bench(args) -> int:
    cfg = _resolve_config(args)
    qubit_grid = [int(q) for q in args.qubits_grid.split(",")]
    rank_grid = [int(r) for r in args.ranks_grid.split(",")]
    pair_grid = [p.strip() for p in args.pairs.split(";")]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for qubits in qubit_grid:
        for rank in rank_grid:
            for pair in pair_grid:
                tag = f"q{qubits}_r{rank}_{pair.replace(',', 'v')}"
                cell_path = out / f"cell_{tag}.json"
                if cell_path.exists():
                    cell = json.loads(cell_path.read_text())
                else:
                    cell = _bench_cell(cfg, qubits, rank, pair, args.folds)
                    cell_path.write_text(json.dumps(cell, sort_keys=True))
                rows.append(cell)
                print(
                    f"{tag}: mean={cell['mean']:.4f} sd={cell['sd']:.4f} "
                    f"({'cached' if cell.get('cached') else 'ran'})"
                )
                cell["cached"] = True

    lines = ["# columns: qubits,rank,classes,folds,mean_acc,sd_acc"]
    lines += [
        f"{c['qubits']},{c['rank']},{c['classes']},{c['folds']},{c['mean']:.6f},{c['sd']:.6f}"
        for c in rows
    ]
    (out / "bench.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out / 'bench.csv'} ({len(rows)} cells)")
    return 0


def _bench_cell(cfg: RunConfig, qubits: int, rank: int, pair: str, folds: int) -> dict:
    from dataclasses import replace

    cell_cfg = replace(cfg, qubits=qubits, rank=rank, classes=pair)
    cell_cfg.validate()
    raw = _load_raw_dataset(cell_cfg)
    filtered = filter_classes(raw, cell_cfg.class_list())
    filtered = _stratified_subset(filtered, cell_cfg.subset, cell_cfg.seed)
    accs = []
    for train, test in split_folds(filtered, SplitSpec(fold_count=folds, seed=cell_cfg.seed)):
        train, test = standardize(train, test)
        model, _ = _train_model(cell_cfg, train, test)
        acc, _ = evaluate(model, test)
        accs.append(acc)
    return {
        "qubits": qubits,
        "rank": rank,
        "classes": pair,
        "folds": folds,
        "accs": accs,
        "mean": float(np.mean(accs)),
        "sd": float(np.std(accs)),
    }


def cmd_simulate(args) -> int:
    text = Path(args.circuit).read_text(encoding="utf-8")
    circ = circuit_io.parse_circuit_text(text, source=str(args.circuit))
    state = circuit_io.run_on_ring(circ)
    outcomes = [format(i, f"0{circ.qubits}b") for i in range(2**circ.qubits)]
    ring_probs = measure_probs(state, outcomes)
    for bits in outcomes:
        if ring_probs[bits] > 1e-10:
            print(f"{bits} {ring_probs[bits]:.4f}")
    if args.oracle:
        exact = circuit_io.run_on_statevector(circ)
        print("# oracle")
        for i, bits in enumerate(outcomes):
            p = float(np.abs(exact[i]) ** 2)
            if p > 1e-10:
                print(f"{bits} {p:.4f}")
        fid = fidelity(tr_to_statevector(state, normalize=True), exact)
        print(f"fidelity {fid:.4f}")
    return 0


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--dataset", choices=["iris", "mnist", "cifar10"])
    p.add_argument("--data-dir", dest="data_dir", help="data root (default $TRQNET_DATA_DIR or ./data)")
    p.add_argument("--classes", help="comma-separated class labels (iris: 1,2,3)")
    p.add_argument("--qubits", type=int, choices=SUPPORTED_QUBITS)
    p.add_argument("--rank", type=int, choices=SUPPORTED_RANKS)
    p.add_argument("--tn-bond", dest="tn_bond", type=int)
    p.add_argument("--circuit-layers", dest="circuit_layers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--tn-lr", dest="tn_lr", type=float)
    p.add_argument("--angle-scale", dest="angle_scale", type=float)
    p.add_argument("--alternate", type=int, help="N epochs quantum-only, N classical-only")
    p.add_argument("--subset", type=int, help="stratified sample cap before splitting")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trqnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write checkpoint + report")
    _add_run_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", choices=["train", "test"], default="test")
    p_eval.add_argument("--json-out", dest="json_out")
    _add_run_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("bench", help="accuracy grid over qubits x ranks x class pairs")
    _add_run_flags(p_bench)
    p_bench.add_argument("--qubits-grid", dest="qubits_grid", default="4")
    p_bench.add_argument("--ranks-grid", dest="ranks_grid", default="4")
    p_bench.add_argument("--pairs", default="1,3", help="semicolon-separated class lists")
    p_bench.add_argument("--folds", type=int, default=5)
    p_bench.set_defaults(func=cmd_bench)

    p_sim = sub.add_parser("simulate", help="run a circuit file on the ring engine")
    p_sim.add_argument("circuit")
    p_sim.add_argument("--oracle", action="store_true", help="also run the exact engine")
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
