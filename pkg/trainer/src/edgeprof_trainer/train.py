"""Training loop: Adam 1e-3, step scheduler gamma 0.5 / step 20, NLL loss."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from .codec import read_pcf, write_ecw
from .net import EdgeConvClassifier


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    scheduler_gamma: float = 0.5
    scheduler_step: int = 20
    batch_size: int = 32
    k: int = 20
    static_tail: int = 0
    points_per_cloud: int = 1024
    num_classes: int = 40
    in_dim: int = 3
    dec_channels: tuple[int, ...] = (64, 64, 64, 128)
    embed_dim: int = 1024
    head_channels: tuple[int, ...] = (512, 256)
    dropout: float = 0.5
    seed: int = 42


class CloudDataset(Dataset):
    """PCF clouds listed by a prepared-dataset manifest split."""

    def __init__(self, root: Path, entries: list[dict], points: int):
        self.root = Path(root)
        self.entries = entries
        self.points = points

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int):
        entry = self.entries[i]
        pts, label = read_pcf(self.root / entry["file"])
        if label is None:
            label = entry["label"]
        if pts.shape[0] != self.points:
            raise ValueError(f"{entry['file']} has {pts.shape[0]} points, "
                             f"expected {self.points}")
        return torch.from_numpy(pts), int(label)


def load_splits(dataset_dir: Path) -> tuple[dict, CloudDataset, CloudDataset]:
    dataset_dir = Path(dataset_dir)
    manifest = json.loads((dataset_dir / "manifest.json").read_text())
    points = manifest["points_per_cloud"]
    return (manifest,
            CloudDataset(dataset_dir, manifest["train"], points),
            CloudDataset(dataset_dir, manifest["test"], points))


def evaluate(model: EdgeConvClassifier, loader: DataLoader,
             device: torch.device) -> float:
    model.eval()
    correct = total = 0
    with torch.no_grad():
        for pts, labels in loader:
            pts, labels = pts.to(device), labels.to(device)
            pred = model(pts).argmax(dim=-1)
            correct += int((pred == labels).sum())
            total += len(labels)
    return correct / total


def train(cfg: TrainConfig, dataset_dir: Path, out_dir: Path,
          device: str | None = None, log=print) -> dict:
    """Train, export ECW weights and a metrics record; returns the metrics."""
    device = torch.device(device or ("cuda" if torch.cuda.is_available() else "cpu"))
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed)

    manifest, train_set, test_set = load_splits(dataset_dir)
    if len(manifest["classes"]) != cfg.num_classes:
        raise ValueError(f"dataset has {len(manifest['classes'])} classes, "
                         f"config expects {cfg.num_classes}")
    train_loader = DataLoader(train_set, batch_size=cfg.batch_size, shuffle=True,
                              generator=torch.Generator().manual_seed(cfg.seed))
    test_loader = DataLoader(test_set, batch_size=cfg.batch_size)

    model = EdgeConvClassifier(
        k=cfg.k, in_dim=cfg.in_dim, dec_channels=cfg.dec_channels,
        embed_dim=cfg.embed_dim, head_channels=cfg.head_channels,
        num_classes=cfg.num_classes, static_tail=cfg.static_tail,
        dropout=cfg.dropout).to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=cfg.scheduler_step, gamma=cfg.scheduler_gamma)

    for epoch in range(cfg.epochs):
        model.train()
        running = 0.0
        for pts, labels in train_loader:
            pts, labels = pts.to(device), labels.to(device)
            optimizer.zero_grad()
            loss = torch.nn.functional.nll_loss(model(pts), labels)
            loss.backward()
            optimizer.step()
            running += float(loss.detach()) * len(labels)
        scheduler.step()
        log(f"epoch {epoch + 1}/{cfg.epochs}: train loss "
            f"{running / len(train_set):.4f}, lr {scheduler.get_last_lr()[0]:.2e}")

    accuracy = evaluate(model, test_loader, device)
    log(f"test accuracy: {accuracy:.4f}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = f"k{cfg.k}_tail{cfg.static_tail}"
    write_ecw(out_dir / f"weights_{tag}.ecw", model.export_arrays())
    metrics = {"k": cfg.k, "static_tail": cfg.static_tail,
               "test_accuracy": accuracy, "epochs": cfg.epochs, "seed": cfg.seed,
               "config": asdict(cfg), "classes": manifest["classes"]}
    (out_dir / f"metrics_{tag}.json").write_text(json.dumps(metrics, indent=2))
    return metrics
