"""Training loop: Adam at 1e-3 with step decay (step 20, gamma 0.5).

Toy scale by default (60 epochs on 512 images); deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .data import SyntheticDataset
from .model import ReferenceModel


@dataclass
class TrainConfig:
    lr: float = 1e-3
    step_size: int = 20
    gamma: float = 0.5
    epochs: int = 60
    batch_size: int = 64
    seed: int = 0


@dataclass
class TrainResult:
    epoch_losses: list[float] = field(default_factory=list)
    test_accuracy: float = 0.0


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@torch.no_grad()
def evaluate(model: ReferenceModel, x: np.ndarray, y: np.ndarray, batch_size: int = 128) -> float:
    model.eval()
    correct = 0
    xt = torch.from_numpy(x)
    for i in range(0, len(x), batch_size):
        logits = model(xt[i : i + batch_size])
        correct += int((logits.argmax(dim=1).numpy() == y[i : i + batch_size]).sum())
    return correct / len(x)


def train(model: ReferenceModel, data: SyntheticDataset, tcfg: TrainConfig) -> TrainResult:
    torch.manual_seed(tcfg.seed)
    gen = torch.Generator().manual_seed(tcfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=tcfg.lr)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=tcfg.step_size, gamma=tcfg.gamma)
    loss_fn = nn.CrossEntropyLoss()
    x = torch.from_numpy(data.train_x)
    y = torch.from_numpy(data.train_y)
    result = TrainResult()
    for epoch in range(tcfg.epochs):
        model.train()
        order = torch.randperm(len(x), generator=gen)
        total = 0.0
        for i in range(0, len(x), tcfg.batch_size):
            idx = order[i : i + tcfg.batch_size]
            opt.zero_grad()
            loss = loss_fn(model(x[idx]), y[idx])
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        sched.step()
        result.epoch_losses.append(total / len(x))
    result.test_accuracy = evaluate(model, data.test_x, data.test_y)
    return result
