"""Two-phase toy CTC training: plain float, then fake-quantized activations."""

import logging
import math
from dataclasses import dataclass, field

import torch
from torch.nn import functional as F

from .network import AcousticNetwork

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    layers: int = 2
    units: int = 8
    feature_size: int = 12
    num_classes: int = 4  # blank + phones
    learning_rate: float = 1e-3
    weight_decay: float = 0.0005
    batch_size: int = 1
    epochs: int = 400  # float phase
    quant_epochs: int = 40  # fake-quantized activation phase
    anneal_factor: float = 0.9
    anneal_patience: int = 300  # updates without improvement before annealing
    seed: int = 0

    def __post_init__(self):
        positive = (
            self.layers, self.units, self.feature_size, self.num_classes - 1,
            self.learning_rate, self.weight_decay, self.batch_size,
            self.anneal_factor, self.anneal_patience,
        )
        if any(v <= 0 for v in positive):
            raise ValueError("hyperparameters must be positive")
        if self.epochs < 0 or self.quant_epochs < 0:
            raise ValueError("epoch counts cannot be negative")


@dataclass
class TrainResult:
    model: AcousticNetwork
    history: list = field(default_factory=list)  # per-epoch per-frame loss

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss"] if self.history else math.nan


def _prepare(dataset, config):
    """Pad, tensorize, and drop samples whose target cannot be aligned."""
    usable = []
    for i, (features, labels) in enumerate(dataset):
        frames = len(features)
        if not labels or min(labels) < 1 or max(labels) >= config.num_classes:
            logger.warning("sample %d: labels outside [1, %d); skipped",
                           i, config.num_classes)
            continue
        # CTC needs one frame per label plus one per repeated pair
        repeats = sum(a == b for a, b in zip(labels, labels[1:]))
        if len(labels) + repeats > frames:
            logger.warning("sample %d: target length %d does not fit %d frames; "
                           "skipped", i, len(labels), frames)
            continue
        usable.append((torch.as_tensor(features, dtype=torch.float64), labels))
    return usable


def _batches(samples, batch_size, generator):
    order = torch.randperm(len(samples), generator=generator).tolist()
    for at in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[at : at + batch_size]]
        lengths = torch.tensor([len(f) for f, _ in chunk], dtype=torch.long)
        width = chunk[0][0].shape[1]
        padded = torch.zeros(int(lengths.max()), len(chunk), width, dtype=torch.float64)
        targets = []
        target_lengths = []
        for n, (features, labels) in enumerate(chunk):
            padded[: len(features), n] = features
            targets.extend(labels)
            target_lengths.append(len(labels))
        yield padded, lengths, torch.tensor(targets), torch.tensor(target_lengths)


def _run_phase(model, samples, config, optimizer, quantize, epochs, history, state):
    generator = torch.Generator().manual_seed(config.seed + len(history))
    for _ in range(epochs):
        loss_sum = 0.0
        frame_sum = 0
        for padded, lengths, targets, target_lengths in _batches(
            samples, config.batch_size, generator
        ):
            log_probs = model(padded, quantize_activations=quantize)
            loss = F.ctc_loss(
                log_probs, targets, lengths, target_lengths,
                blank=0, reduction="sum", zero_infinity=True,
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            loss_sum += loss.item()
            frame_sum += int(lengths.sum())

            state["updates"] += 1
            if loss_sum / frame_sum < state["best"] - 1e-6:
                state["best"] = loss_sum / frame_sum
                state["since_best"] = 0
            else:
                state["since_best"] += 1
                if state["since_best"] >= config.anneal_patience:
                    for group in optimizer.param_groups:
                        group["lr"] *= config.anneal_factor
                    state["since_best"] = 0
        per_frame = loss_sum / max(frame_sum, 1)
        if not math.isfinite(per_frame):
            raise RuntimeError("training diverged to a non-finite loss")
        history.append({"loss": per_frame, "quantized": quantize,
                        "lr": optimizer.param_groups[0]["lr"]})


def train_toy(dataset, config: TrainConfig) -> TrainResult:
    """Overfit a small network on synthetic data, then adapt it to
    fake-quantized activations. Returns the model and the loss curve."""
    torch.manual_seed(config.seed)
    model = AcousticNetwork(
        config.feature_size, config.units, config.layers,
        config.num_classes, seed=config.seed,
    )
    samples = _prepare(dataset, config)
    if not samples:
        raise ValueError("no trainable samples in the dataset")
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    history: list = []
    state = {"best": math.inf, "since_best": 0, "updates": 0}
    _run_phase(model, samples, config, optimizer, False, config.epochs, history, state)
    _run_phase(
        model, samples, config, optimizer, True, config.quant_epochs, history, state
    )
    return TrainResult(model, history)


def per_frame_ctc_loss(model, dataset, config, quantize=False) -> float:
    """Evaluation-only per-frame CTC loss over a dataset."""
    samples = _prepare(dataset, config)
    loss_sum = 0.0
    frame_sum = 0
    with torch.no_grad():
        for padded, lengths, targets, target_lengths in _batches(
            samples, len(samples), torch.Generator().manual_seed(0)
        ):
            log_probs = model(padded, quantize_activations=quantize)
            loss = F.ctc_loss(
                log_probs, targets, lengths, target_lengths,
                blank=0, reduction="sum", zero_infinity=True,
            )
            loss_sum += float(loss)
            frame_sum += int(lengths.sum())
    return loss_sum / max(frame_sum, 1)
