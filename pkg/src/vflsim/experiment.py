"""End-to-end runs: data preparation, alignment, training and result files.

A run directory holds::

    results.csv          seed, epoch, loss, test_auc
    ledger.csv           seed, participant, epoch, flops_fwd, flops_bwd, bytes_sent, bytes_received
    config.resolved.ini  the fully resolved configuration

Every CSV starts with a ``# schema_version=1`` comment line and a header.
Floats are written with ``repr`` so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import alignment, synthetic
from .config import ExperimentConfig, apply_axis, dump_config
from .data import (DatasetSchema, RawTable, batch_iter, load_csv, preprocess,
                   split_attributes, train_test_split)
from .errors import ConfigError, VflError
from .protocol import EpochReport, Federation
from .split import build_models

log = logging.getLogger(__name__)

SCHEMA_LINE = "# schema_version=1"
RESULT_FIELDS = ("seed", "epoch", "loss", "test_auc")
LEDGER_FIELDS = ("seed", "participant", "epoch", "flops_fwd", "flops_bwd", "bytes_sent",
                 "bytes_received")
AGGREGATE_FIELDS = ("epoch", "n_seeds", "auc_mean", "auc_std", "loss_mean", "loss_std")


@dataclass
class PreparedData:
    """Aligned, split and encoded local data of every participant."""

    guest_data: list[dict[str, np.ndarray]]
    labels: dict[str, np.ndarray]
    guest_attributes: list[list[str]]
    n_aligned: int

    @property
    def guest_widths(self) -> list[int]:
        return [d["train"].shape[1] for d in self.guest_data]


def load_raw(cfg: ExperimentConfig) -> tuple[RawTable, DatasetSchema]:
    if cfg.data.synthetic:
        return synthetic.generate(cfg.data.kind, cfg.data.rows, cfg.data.seed)
    schema = cfg.data.dataset_schema()
    table = load_csv(cfg.data.source, schema)
    for row, why in table.rejected:
        log.warning("%s: row %d rejected: %s", cfg.data.source, row, why)
    return table, schema


def _local_table(raw: RawTable, columns: Sequence[str], keep: np.ndarray,
                 with_labels: bool) -> RawTable:
    rows = np.flatnonzero(keep)
    t = raw.take(rows)
    t.columns = {c: t.columns[c] for c in columns}
    if not with_labels:
        # guests never see labels
        t.labels = np.full(len(rows), -1, dtype=np.int64)
    return t


def prepare(cfg: ExperimentConfig, guests: int = 3) -> PreparedData:
    """Split the source table into participant tables, align them, encode locally.

    Each participant may lose a random ``drop_fraction`` of its rows, which is
    what makes the hashed-ID intersection non-trivial.
    """
    raw, schema = load_raw(cfg)
    groups = split_attributes(schema.names, guests)
    n = len(raw)
    keep = []
    for p in range(guests + 1):
        rng = np.random.default_rng([cfg.data.seed, 7, p])
        keep.append(rng.random(n) >= cfg.data.drop_fraction)
    tables = [_local_table(raw, groups[g], keep[g], False) for g in range(guests)]
    host_table = _local_table(raw, [], keep[guests], True)

    owners = [f"guest{g}" for g in range(guests)] + ["host"]
    hashed = [alignment.hash_ids(t.ids, cfg.data.salt, owner)
              for t, owner in zip(tables + [host_table], owners)]
    aligned = alignment.intersect(hashed)
    if len(aligned) < 10:
        raise VflError(f"only {len(aligned)} ids shared by all participants")
    train_rows, test_rows = train_test_split(len(aligned), cfg.data.seed, cfg.data.test_fraction)

    guest_data = []
    for g, table in enumerate(tables):
        local = table.take(aligned.rows[owners[g]])
        local_schema = schema.subset(groups[g])
        train_fm = preprocess(local.take(train_rows), local_schema)
        test_fm = preprocess(local.take(test_rows), local_schema, train_fm.stats)
        guest_data.append({"train": train_fm.X, "test": test_fm.X})
    y = host_table.take(aligned.rows["host"]).labels.astype(np.float64)
    labels = {"train": y[train_rows], "test": y[test_rows]}
    return PreparedData(guest_data, labels, groups, len(aligned))


def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    return batch_iter(n, batch_size, seed=[seed, 5, epoch], shuffle=True)


def train_seed(cfg: ExperimentConfig, data: PreparedData, seed: int) -> list[EpochReport]:
    models = build_models(cfg.scheme, data.guest_widths, seed)
    fed = Federation.build(models, data.guest_data, data.labels, cfg.channel, seed,
                           cfg.train.lr, (cfg.train.beta1, cfg.train.beta2))
    n = data.labels["train"].shape[0]
    reports = []
    for epoch in range(1, cfg.train.epochs + 1):
        reports.append(fed.train_epoch(epoch_batches(n, cfg.train.batch_size, seed, epoch)))
        log.debug("seed %d epoch %d loss %.5f auc %.4f", seed, epoch,
                  reports[-1].train_loss, reports[-1].test_auc)
    fallbacks = sum(g.approx_fallbacks for g in fed.guests)
    if fallbacks:
        log.info("seed %d: %d coordinates fell back to the addition surrogate", seed, fallbacks)
    return reports


def _csv_text(fields: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunResult:
    out_dir: Path
    reports: dict[int, list[EpochReport]]

    def final_aucs(self) -> list[float]:
        return [r[-1].test_auc for r in self.reports.values()]

    def totals(self) -> dict[str, dict[str, float]]:
        """Per-participant cost of one run, averaged over seeds."""
        acc: dict[str, dict[str, float]] = {}
        for reps in self.reports.values():
            for rep in reps:
                for name, c in rep.ledger_delta.items():
                    d = acc.setdefault(name, dict.fromkeys(
                        ("flops_fwd", "flops_bwd", "bytes_sent", "bytes_received"), 0))
                    d["flops_fwd"] += c.flops_forward
                    d["flops_bwd"] += c.flops_backward
                    d["bytes_sent"] += c.bytes_sent
                    d["bytes_received"] += c.bytes_received
        k = max(len(self.reports), 1)
        return {name: {key: v / k for key, v in d.items()} for name, d in acc.items()}


def run(cfg: ExperimentConfig, out_dir: str | Path, data: PreparedData | None = None) -> RunResult:
    out = Path(out_dir)
    data = data or prepare(cfg)
    reports = {seed: train_seed(cfg, data, seed) for seed in cfg.train.seeds}
    result_rows, ledger_rows = [], []
    for seed, reps in reports.items():
        for rep in reps:
            result_rows.append((seed, rep.epoch, float(rep.train_loss), float(rep.test_auc)))
            for name in sorted(rep.ledger_delta):
                c = rep.ledger_delta[name]
                ledger_rows.append((seed, name, rep.epoch, c.flops_forward, c.flops_backward,
                                    c.bytes_sent, c.bytes_received))
    atomic_write(out / "results.csv", _csv_text(RESULT_FIELDS, result_rows))
    atomic_write(out / "ledger.csv", _csv_text(LEDGER_FIELDS, ledger_rows))
    atomic_write(out / "config.resolved.ini", dump_config(cfg.replace(out_dir=str(out))))
    return RunResult(out, reports)


def _sweep_one(args) -> tuple[str, RunResult]:
    cfg, value, out = args
    return value, run(cfg, out)


def sweep(base: ExperimentConfig, axis: str, values: Sequence, out_dir: str | Path,
          jobs: int = 1) -> dict[str, RunResult]:
    """Run ``base`` once per axis value (shared seeds) and write ``summary.csv``."""
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = Path(out_dir)
    values = [str(v) for v in values]
    if len(set(values)) != len(values):
        raise ConfigError("duplicate sweep values")
    cfgs = [apply_axis(base, axis, v) for v in values]
    tasks = [(c, v, out / f"{axis}={v}") for c, v in zip(cfgs, values)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_sweep_one, tasks))
    else:
        data = prepare(base)
        results = {v: run(c, o, data) for c, v, o in tasks}
    participants = sorted({p for r in results.values() for p in r.totals()})
    fields = ["axis", "value", "n_seeds", "final_auc_mean", "final_auc_std"]
    for p in participants:
        fields += [f"{p}_flops_fwd", f"{p}_flops_bwd", f"{p}_bytes_sent", f"{p}_bytes_received"]
    rows = []
    for v in values:
        r = results[v]
        aucs = np.asarray(r.final_aucs())
        row = [axis, v, len(aucs), float(aucs.mean()), float(aucs.std())]
        tot = r.totals()
        for p in participants:
            row += [_num(tot[p][k]) for k in ("flops_fwd", "flops_bwd", "bytes_sent", "bytes_received")]
        rows.append(row)
    atomic_write(out / "summary.csv", _csv_text(fields, rows))
    return results


def _num(x: float):
    return int(x) if float(x).is_integer() else float(x)


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def aggregate(results_csv: Path) -> list[dict]:
    """Per-epoch mean and population std of AUC and loss across seeds."""
    rows = read_csv(results_csv)
    if not rows or set(RESULT_FIELDS) - set(rows[0]):
        raise VflError(f"{results_csv}: missing or malformed results")
    by_epoch: dict[int, list[tuple[float, float]]] = {}
    for r in rows:
        try:
            by_epoch.setdefault(int(r["epoch"]), []).append((float(r["test_auc"]), float(r["loss"])))
        except (TypeError, ValueError):
            raise VflError(f"{results_csv}: corrupt row {r}") from None
    out = []
    for epoch in sorted(by_epoch):
        a = np.asarray(by_epoch[epoch])
        out.append({"epoch": epoch, "n_seeds": len(a),
                    "auc_mean": float(a[:, 0].mean()), "auc_std": float(a[:, 0].std()),
                    "loss_mean": float(a[:, 1].mean()), "loss_std": float(a[:, 1].std())})
    return out


def report(results_dir: str | Path) -> tuple[Path, list[dict]]:
    """Write ``aggregate.csv`` for a run directory or every run inside a sweep."""
    root = Path(results_dir)
    if (root / "results.csv").exists():
        runs = [("", root / "results.csv")]
    else:
        runs = [(p.name, p / "results.csv") for p in sorted(root.iterdir())
                if (p / "results.csv").exists()] if root.is_dir() else []
    if not runs:
        raise VflError(f"{root}: no results.csv found")
    fields = (("run",) if runs[0][0] else ()) + AGGREGATE_FIELDS
    rows, table = [], []
    for name, path in runs:
        for agg in aggregate(path):
            table.append({"run": name, **agg} if name else agg)
            rows.append([table[-1][f] for f in fields])
    dest = root / "aggregate.csv"
    atomic_write(dest, _csv_text(fields, rows))
    return dest, table


def format_table(table: list[dict]) -> str:
    if not table:
        return ""
    cols = list(table[0])
    cells = [[c for c in cols]] + [[_short(r[c]) for c in cols] for r in table]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells)


def _short(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return str(v)
