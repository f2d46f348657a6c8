"""Adam training loop for :class:`~adaptive_so3.model.Classifier` with per-epoch metrics."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import engine
from .data import Dataset
from .diagnostics import equivariance_error
from .model import Classifier, ModelConfig
from .rotations import quat_to_matrix, random_haar_quats

METRIC_FIELDS = ["epoch", "split", "accuracy", "invariance_error", "wall_ms"]


@dataclass
class History:
    rows: list[dict] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [",".join(METRIC_FIELDS)]
        for r in self.rows:
            lines.append(",".join(_fmt(r[k]) for k in METRIC_FIELDS))
        return "\n".join(lines) + "\n"

    def final(self, split: str = "test") -> dict:
        return [r for r in self.rows if r["split"] == split][-1]

    def best(self, split: str = "test") -> float:
        return max(r["accuracy"] for r in self.rows if r["split"] == split)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def accuracy(model: Classifier, points: np.ndarray, labels: np.ndarray, batch: int = 256) -> float:
    hits = 0
    for i in range(0, len(points), batch):
        hits += int((model.logits(points[i:i + batch]).argmax(axis=1) == labels[i:i + batch]).sum())
    return hits / len(points)


def logit_invariance(model: Classifier, points: np.ndarray, rotations: np.ndarray) -> float:
    """Mean relative logit change (invariance form) over clouds x rotations."""
    errs = []
    for q in rotations:
        r = quat_to_matrix(q)
        errs.append(equivariance_error(model.logits, points, apply_T=lambda p: p @ r.T))
    return float(np.mean(errs))


def train(
    config: ModelConfig,
    dataset: Dataset,
    epochs: int = 60,
    lr: float = 3e-3,
    batch_size: int = 32,
    invariance_probe: int = 8,
    log=None,
) -> tuple[Classifier, History]:
    """Train with softmax cross-entropy; rotations are redrawn every epoch."""
    model = Classifier(config)
    opt = engine.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(config.seed + 7919)
    hist = History()
    probe_pts = dataset.test_points[:invariance_probe]
    probe_rots = random_haar_quats(np.random.default_rng(12345), 2)
    n = len(dataset.train_points)
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        pts = dataset.train_points[order]
        if dataset.rotate_train:
            pts = np.einsum("nij,npj->npi", quat_to_matrix(random_haar_quats(rng, n)), pts)
        labels = dataset.train_labels[order]
        correct = 0
        loss_sum = 0.0
        for i in range(0, n, batch_size):
            xb, yb = pts[i:i + batch_size], labels[i:i + batch_size]
            opt.zero_grad()
            with engine.Tape() as tape:
                logits = model.forward(xb)
                loss = engine.softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss.value):
                raise engine.NonFiniteError(f"non-finite loss at epoch {epoch}")
            tape.backward(loss)
            opt.step()
            loss_sum += float(loss.value) * len(yb)
            correct += int((logits.value.argmax(axis=1) == yb).sum())
        wall = (time.perf_counter() - t0) * 1e3
        hist.losses.append(loss_sum / n)
        inv = logit_invariance(model, probe_pts, probe_rots)
        hist.rows.append(dict(epoch=epoch, split="train", accuracy=correct / n, invariance_error=inv, wall_ms=wall))
        test_acc = accuracy(model, dataset.test_points, dataset.test_labels)
        hist.rows.append(dict(epoch=epoch, split="test", accuracy=test_acc, invariance_error=inv, wall_ms=wall))
        if log:
            log(f"epoch {epoch:3d} loss {hist.losses[-1]:.4f} train {correct / n:.3f} test {test_acc:.3f} inv {inv:.2e}")
    return model, hist


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(model: Classifier, path) -> None:
    groups: dict[str, dict] = {"linear": {}, "generator": {}, "dense": {}}
    for name, arr in model.state_arrays().items():
        key = "generator" if name.startswith("gen") else "dense" if name.startswith("dense") else "linear"
        groups[key][name] = arr.tolist()
    doc = {"config": model.config.model_dump(), **groups}
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path) -> Classifier:
    doc = json.loads(Path(path).read_text())
    config = ModelConfig(**doc["config"])
    params = {}
    for key in ("linear", "generator", "dense"):
        params.update({k: np.array(v, dtype=float) for k, v in doc.get(key, {}).items()})
    return Classifier(config, params)
