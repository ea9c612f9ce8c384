"""Training loop, validation and evaluation tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import plotting
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import NetworkConfig, TrainConfig, derive_rng, derive_seed
from .errors import DataError, NumericalError, TrainingError
from .metrics import psnr, ssim
from .network import FDRNet, from_batch, to_batch
from .optim import AdamState, adam_step, loss_terms, lr_at
from .synth import DatasetManifest, load_pairs, read_manifest
from .tensor import no_grad

METRIC_COLUMNS = ("iteration", "lr", "l1", "svdo", "total", "val_psnr", "val_ssim")
EVAL_COLUMNS = ("index", "severity", "distorted", "input_psnr", "input_ssim", "psnr", "ssim")


def _as_manifest(m) -> DatasetManifest:
    return m if isinstance(m, DatasetManifest) else read_manifest(m)


def restore(net: FDRNet, images: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Run ``net`` on 0-255 HWC images and return 8-bit-rounded outputs."""
    outs = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            pred, _ = net(to_batch(images[start:start + batch_size]))
            outs.append(from_batch(pred))
    return np.concatenate(outs) if outs else np.empty_like(images)


def validate(net: FDRNet, distorted: np.ndarray, clean: np.ndarray, batch_size: int = 16) -> tuple[float, float]:
    """Mean (PSNR, SSIM) of the restored images against their clean targets."""
    restored = restore(net, distorted, batch_size)
    p = [psnr(r, c) for r, c in zip(restored, clean)]
    s = [ssim(r, c) for r, c in zip(restored, clean)]
    return float(np.mean(p)), float(np.mean(s))


class _Batches:
    """Epoch-wise shuffled index stream; the order depends only on the seed."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        if n == 0:
            raise DataError("training manifest is empty")
        self.n, self.batch_size, self.rng = n, batch_size, rng
        self.order = rng.permutation(n)
        self.pos = 0

    def next(self) -> np.ndarray:
        idx = []
        while len(idx) < self.batch_size:
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            take = min(self.batch_size - len(idx), self.n - self.pos)
            idx.extend(self.order[self.pos:self.pos + take])
            self.pos += take
        return np.asarray(idx)


@dataclass
class TrainResult:
    network: FDRNet
    adam: AdamState
    rows: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    metrics_path: Path | None = None

    @property
    def losses(self) -> list[float]:
        return [r["total"] for r in self.rows]


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_metrics_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in METRIC_COLUMNS])


def train(net_config: NetworkConfig, train_manifest, val_manifest=None, config: TrainConfig = TrainConfig(),
          out_dir=None, log: Callable[[str], None] | None = None, figure: bool = True) -> TrainResult:
    """Shuffled mini-batch training.

    Each iteration runs forward, total loss, backward, one Adam step and the
    gain-control projection. Row ``k`` of the metrics log reports the loss of
    the ``k``-th update (evaluated before that update) and, on validation
    iterations, the validation metrics after it. With ``iterations == 0`` a
    single row is logged for the initial parameters. Checkpoints are written
    as ``checkpoint_<iter>.ckpt`` every ``checkpoint_interval`` updates and
    once at the end.
    """
    train_m = _as_manifest(train_manifest)
    x_all, y_all = load_pairs(train_m)
    val = None
    if val_manifest is not None:
        vd, vc = load_pairs(_as_manifest(val_manifest))
        if len(vd):
            val = (vd, vc)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    net = FDRNet(net_config, seed=derive_seed(config.seed, "network"))
    params = dict(net.named_parameters())
    adam = AdamState()
    rng = derive_rng(config.seed, "shuffle")
    batches = _Batches(len(x_all), config.batch_size, rng)
    result = TrainResult(net, adam)

    def checkpoint(iteration: int) -> None:
        if out is None:
            return
        path = out / f"checkpoint_{iteration:06d}.ckpt"
        save_checkpoint(Checkpoint(net, adam, iteration, rng.bit_generator.state, config), path)
        if path not in result.checkpoints:
            result.checkpoints.append(path)

    def step_losses(idx: np.ndarray, with_grad: bool):
        xb, yb = to_batch(x_all[idx]), to_batch(y_all[idx])
        if with_grad:
            pred, fdm = net(xb)
            return loss_terms(pred, yb, fdm, config.beta)
        with no_grad():
            pred, fdm = net(xb)
            return loss_terms(pred, yb, fdm, config.beta)

    if config.iterations == 0:
        total, l1, sv = step_losses(batches.next(), with_grad=False)
        row = {"iteration": 0, "lr": lr_at(0, config.lr0, config.lr_decay, config.decay_interval),
               "l1": l1.item(), "svdo": sv.item(), "total": total.item(), "val_psnr": None, "val_ssim": None}
        if val is not None:
            row["val_psnr"], row["val_ssim"] = validate(net, *val)
        result.rows.append(row)
        checkpoint(0)

    for it in range(config.iterations):
        lr = lr_at(it, config.lr0, config.lr_decay, config.decay_interval)
        try:
            total, l1, sv = step_losses(batches.next(), with_grad=True)
        except NumericalError as exc:
            raise TrainingError(f"iteration {it}: {exc}") from exc
        if not np.isfinite(total.item()):
            raise TrainingError(f"non-finite loss at iteration {it} (l1={l1.item()}, svdo={sv.item()})")
        net.zero_grad()
        total.backward()
        grads = {name: p.grad for name, p in params.items()}
        try:
            adam_step(params, grads, adam, lr)
        except TrainingError as exc:
            raise TrainingError(f"iteration {it}: {exc}") from exc
        net.project()
        row = {"iteration": it + 1, "lr": lr, "l1": l1.item(), "svdo": sv.item(), "total": total.item(),
               "val_psnr": None, "val_ssim": None}
        done = it + 1
        if val is not None and (done % config.val_interval == 0 or done == config.iterations):
            row["val_psnr"], row["val_ssim"] = validate(net, *val)
            if log:
                log(f"iteration {done}: loss {row['total']:.6g} val PSNR {row['val_psnr']:.3f} dB")
        result.rows.append(row)
        if done % config.checkpoint_interval == 0 or done == config.iterations:
            checkpoint(done)

    if out is not None:
        result.metrics_path = out / "metrics.csv"
        write_metrics_csv(result.rows, result.metrics_path)
        if figure:
            plotting.plot_training_curves(result.rows, out / "training.png")
    return result


# -- evaluation ----------------------------------------------------------------------


@dataclass
class EvalReport:
    rows: list[dict]
    summary: dict[str, dict[str, float]]

    def table(self) -> str:
        head = f"{'severity':<10} {'count':>5} {'in PSNR':>8} {'in SSIM':>8} {'PSNR':>8} {'SSIM':>8}"
        lines = [head]
        for name, s in self.summary.items():
            lines.append(f"{name:<10} {s['count']:>5d} {s['input_psnr']:>8.3f} {s['input_ssim']:>8.4f} "
                         f"{s['psnr']:>8.3f} {s['ssim']:>8.4f}")
        return "\n".join(lines)


def _summarize(rows: list[dict]) -> dict[str, dict[str, float]]:
    groups: dict[str, list[dict]] = {}
    for r in rows:
        groups.setdefault(r["severity"], []).append(r)
    if rows:
        groups["all"] = rows
    return {name: {"count": len(g), **{k: float(np.mean([r[k] for r in g]))
                                      for k in ("input_psnr", "input_ssim", "psnr", "ssim")}}
            for name, g in groups.items()}


def evaluate(model, manifest, out_dir=None, figure: bool = True) -> EvalReport:
    """Per-image and per-severity PSNR/SSIM of ``model`` (network or checkpoint path).

    Rows keep manifest order; the summary holds one entry per severity in
    first-appearance order plus ``all``. With ``out_dir`` the report is
    written as ``eval.csv`` (per image), ``eval_summary.csv``, ``eval.txt``
    and ``eval.png``.
    """
    net = model if isinstance(model, FDRNet) else load_checkpoint(model).network
    m = _as_manifest(manifest)
    distorted, clean = load_pairs(m)
    restored = restore(net, distorted) if len(distorted) else distorted
    rows = []
    for e, d, c, r in zip(m.entries, distorted, clean, restored):
        rows.append({"index": e.index, "severity": e.spec.severity, "distorted": e.distorted,
                     "input_psnr": psnr(d, c), "input_ssim": ssim(d, c), "psnr": psnr(r, c), "ssim": ssim(r, c)})
    report = EvalReport(rows, _summarize(rows))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "eval.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(EVAL_COLUMNS)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in EVAL_COLUMNS])
        with open(out / "eval_summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("severity", "count", "input_psnr", "input_ssim", "psnr", "ssim"))
            for name, s in report.summary.items():
                w.writerow([name, s["count"]] + [_fmt(s[k]) for k in ("input_psnr", "input_ssim", "psnr", "ssim")])
        (out / "eval.txt").write_text(report.table() + "\n")
        if figure and rows:
            plotting.plot_severity_summary(report.summary, out / "eval.png")
    return report
