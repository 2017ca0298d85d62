"""Grouped-convolution U-Net producing N segmentation heads in one pass.

The network is a standard encoder/decoder with skip connections, but every
convolution above the bottleneck uses grouped channels, so the model is N
parallel sub-networks sharing one bottleneck. One forward pass yields N
foreground probability maps whose spread is usable as an uncertainty signal
(see ``uncertainty.fuse_predictions``). Head diversity comes from independent
random initialization and training-time dropout; dropout is disabled at
inference.

Requires torch (install the ``mgnet`` extra).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ugseg.core import (
    ProbabilityGroup,
    normalize_slice,
    read_mask,
    read_stack,
    write_ugstack,
)


@dataclass(frozen=True)
class MGNetSpec:
    """Architecture parameters.

    ``depth`` counts resolution levels including the bottleneck; all feature
    maps above the bottleneck have channel counts divisible by ``n``.
    """

    n: int = 4  # number of groups / prediction heads
    c: int = 16  # channels per group at the top level
    depth: int = 4
    dropout: float = 0.2
    bottleneck_groups: int = 1

    def __post_init__(self):
        if self.n < 1 or self.c < 1:
            raise ValueError("n and c must be >= 1")
        if self.depth < 2:
            raise ValueError("depth must be >= 2")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must lie in [0, 1)")


def groupwise_concat(f1: torch.Tensor, f2: torch.Tensor, n: int) -> torch.Tensor:
    """Concatenate two N-group feature maps group by group (group-major output)."""
    if f1.shape[1] % n or f2.shape[1] % n:
        raise ValueError(f"channel counts {f1.shape[1]}, {f2.shape[1]} not divisible by {n} groups")
    if f1.shape[0] != f2.shape[0] or f1.shape[2:] != f2.shape[2:]:
        raise ValueError("batch or spatial dims differ")
    b, c1, h, w = f1.shape
    c2 = f2.shape[1]
    stacked = torch.cat(
        [f1.reshape(b, n, c1 // n, h, w), f2.reshape(b, n, c2 // n, h, w)], dim=2
    )
    return stacked.reshape(b, c1 + c2, h, w)


def groupwise_softmax(logits: torch.Tensor, n: int) -> torch.Tensor:
    """Softmax over the channels of each group independently."""
    b, c, h, w = logits.shape
    if c % n:
        raise ValueError(f"channel count {c} not divisible by {n} groups")
    return torch.softmax(logits.reshape(b, n, c // n, h, w), dim=2).reshape(b, c, h, w)


def _block(cin: int, cout: int, groups: int, dropout: float = 0.0) -> nn.Sequential:
    layers = [
        nn.Conv2d(cin, cout, 3, padding=1, groups=groups),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1, groups=groups),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    ]
    if dropout > 0.0:
        layers.append(nn.Dropout2d(dropout))
    return nn.Sequential(*layers)


class MGNet(nn.Module):
    """N-group U-Net; forward returns per-group 2-class logits (B, 2N, H, W)."""

    def __init__(self, spec: MGNetSpec = MGNetSpec()):
        super().__init__()
        self.spec = spec
        widths = [spec.n * spec.c * 2 ** i for i in range(spec.depth)]
        encoders = []
        for i in range(spec.depth - 1):
            cin = 1 if i == 0 else widths[i - 1]
            groups = 1 if i == 0 else spec.n
            drop = spec.dropout if i == spec.depth - 2 else 0.0
            encoders.append(_block(cin, widths[i], groups, drop))
        self.encoders = nn.ModuleList(encoders)
        self.bottleneck = _block(widths[-2], widths[-1], spec.bottleneck_groups, spec.dropout)
        self.decoders = nn.ModuleList(
            [_block(widths[i + 1] + widths[i], widths[i], spec.n) for i in range(spec.depth - 1)]
        )
        self.head = nn.Conv2d(widths[0], spec.n * 2, 1, groups=spec.n)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        h = x
        for enc in self.encoders:
            h = enc(h)
            skips.append(h)
            h = F.max_pool2d(h, 2)
        h = self.bottleneck(h)
        for i in reversed(range(len(self.decoders))):
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = self.decoders[i](groupwise_concat(h, skips[i], self.spec.n))
        return self.head(h)

    def predict_proba(self, x: torch.Tensor) -> torch.Tensor:
        """Foreground probability of every head, shape (B, N, H, W)."""
        logits = self.forward(x)
        probs = groupwise_softmax(logits, self.spec.n)
        b, _, h, w = probs.shape
        return probs.reshape(b, self.spec.n, 2, h, w)[:, :, 1]


def dice_loss(fg: torch.Tensor, target: torch.Tensor, smooth: float = 1e-6) -> torch.Tensor:
    """Mean over heads (and batch) of the per-head soft Dice loss."""
    return head_dice_losses(fg, target, smooth).mean()


def head_dice_losses(fg: torch.Tensor, target: torch.Tensor, smooth: float = 1e-6) -> torch.Tensor:
    """Per-head soft Dice losses averaged over the batch, shape (N,)."""
    t = target.unsqueeze(1).to(fg.dtype)
    inter = (fg * t).sum(dim=(2, 3))
    total = fg.sum(dim=(2, 3)) + t.sum(dim=(2, 3))
    per = 1.0 - (2.0 * inter + smooth) / (total + smooth)  # (B, N)
    return per.mean(dim=0)


def train_mgnet(images, labels, spec: MGNetSpec = MGNetSpec(), iters: int = 2000,
                lr: float = 1e-4, batch_size: int = 24, weight_decay: float = 1e-5,
                seed: int = 0, target_dice: float | None = None, check_every: int = 25,
                log=None) -> MGNet:
    """Train on a set of 2D slices with per-pixel {0,1} labels.

    Fixed iteration budget; optionally stops early once every head's binary
    Dice on the training set reaches ``target_dice``. Raises on divergence.
    """
    x = torch.as_tensor(np.asarray(images), dtype=torch.float32).unsqueeze(1)
    y = torch.as_tensor(np.asarray(labels), dtype=torch.float32)
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    torch.manual_seed(seed)
    model = MGNet(spec)
    opt = torch.optim.Adam(model.parameters(), lr=lr, weight_decay=weight_decay)
    sampler = torch.Generator().manual_seed(seed)
    model.train()
    for it in range(iters):
        idx = torch.randint(0, x.shape[0], (min(batch_size, x.shape[0]),), generator=sampler)
        loss = dice_loss(model.predict_proba(x[idx]), y[idx])
        if not torch.isfinite(loss):
            raise RuntimeError(f"training diverged at iteration {it}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if target_dice is not None and (it + 1) % check_every == 0:
            d = training_head_dice(model, x, y)
            if log is not None:
                log(f"iter {it + 1}: loss {loss.item():.4f} head dice {d.tolist()}")
            if float(d.min()) >= target_dice:
                break
            model.train()
    model.eval()
    return model


def training_head_dice(model: MGNet, x: torch.Tensor, y: torch.Tensor) -> np.ndarray:
    """Binary Dice of each head on (x, y), evaluated with dropout off."""
    model.eval()
    with torch.no_grad():
        fg = model.predict_proba(x)
    pred = (fg >= 0.5).numpy()
    gt = y.numpy().astype(bool)
    out = []
    for n in range(pred.shape[1]):
        p = pred[:, n]
        denom = p.sum() + gt.sum()
        out.append(1.0 if denom == 0 else 2.0 * np.logical_and(p, gt).sum() / denom)
    return np.array(out)


def save_checkpoint(model: MGNet, path) -> None:
    torch.save({"spec": asdict(model.spec), "state": model.state_dict()}, path)


def load_checkpoint(path) -> MGNet:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = MGNet(MGNetSpec(**blob["spec"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model


def predict_group(model: MGNet, stack) -> tuple[ProbabilityGroup, tuple[int, int]]:
    """One forward pass per slice; returns the N-head group and the padding used.

    Slices are min-max normalized. Dims not divisible by the downsampling
    factor are replicate-padded on the bottom/right and cropped back.
    """
    factor = 2 ** (model.spec.depth - 1)
    m, h, w = stack.data.shape
    pad_h = (-h) % factor
    pad_w = (-w) % factor
    probs = np.empty((model.spec.n, m, h, w), dtype=np.float32)
    model.eval()
    with torch.no_grad():
        for k in range(m):
            t = torch.as_tensor(normalize_slice(stack.data[k]), dtype=torch.float32)[None, None]
            if pad_h or pad_w:
                t = F.pad(t, (0, pad_w, 0, pad_h), mode="replicate")
            probs[:, k] = model.predict_proba(t)[0, :, :h, :w].numpy()
    return ProbabilityGroup(np.clip(probs, 0.0, 1.0)), (pad_h, pad_w)


def export_probgroup(model: MGNet, stack, path) -> ProbabilityGroup:
    group, (pad_h, pad_w) = predict_group(model, stack)
    extra = {"padding": [pad_h, pad_w]} if (pad_h or pad_w) else None
    write_ugstack(group.data, path, "probgroup", "f32", extra=extra)
    return group


# ---------------------------------------------------------------------------
# CLI


def cmd_train(args):
    data = Path(args.data)
    stack = read_stack(data / "stack.json")
    gt = read_mask(data / "gt.json")
    spec = MGNetSpec(n=args.n, c=args.c, depth=args.depth, dropout=args.dropout)
    model = train_mgnet(stack.data, gt.data, spec, iters=args.iters, lr=args.lr,
                        batch_size=args.batch_size, seed=args.seed,
                        target_dice=args.target_dice, log=print)
    save_checkpoint(model, args.out)
    dice_by_head = training_head_dice(
        model,
        torch.as_tensor(stack.data, dtype=torch.float32).unsqueeze(1),
        torch.as_tensor(gt.data, dtype=torch.float32),
    )
    print(json.dumps({"checkpoint": str(args.out),
                      "head_dice": [round(float(d), 4) for d in dice_by_head]}))
    return 0


def cmd_predict(args):
    model = load_checkpoint(args.ckpt)
    stack = read_stack(args.stack)
    group = export_probgroup(model, stack, args.out)
    print(json.dumps({"out": str(args.out), "dims": list(group.data.shape)}))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mgnet",
                                     description="Train/apply the multi-head grouped U-Net")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on an UGSTACK stack/gt pair")
    p.add_argument("--data", required=True, help="directory with stack.json and gt.json")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--c", type=int, default=16)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-dice", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="export an N-head probability group")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
