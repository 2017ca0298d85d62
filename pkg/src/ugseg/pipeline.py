"""Batch orchestration: synthetic benchmarks, simulated scribbles, and
end-to-end refinement sessions."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ugseg import geodesic, levelset, metrics
from ugseg.core import (
    BinaryMask,
    ProbabilityGroup,
    RefineConfig,
    ScribbleSet,
    Stack,
    Stroke,
    normalize_slice,
    rasterize_scribbles,
)
from ugseg.uncertainty import fuse_predictions, next_slice, rank_slices

_EIGHT = np.ones((3, 3), dtype=int)


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass
class SynthSpec:
    """Shape/noise parameters of the synthetic benchmark generator."""

    num_slices: int = 10
    height: int = 64
    width: int = 64
    n_predictors: int = 4
    num_hard: int = 2
    corruption: float = 1.0  # 0 disables head noise and hard-slice blobs
    temperature: float = 1.5  # logit scale of the boundary transition
    noise_amp: float = 0.5  # smooth per-head logit noise amplitude
    blob_radius: int = 5

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SynthSpec":
        return cls(**obj)


@dataclass(frozen=True)
class SynthResult:
    stack: Stack
    gt: BinaryMask
    probgroup: ProbabilityGroup
    hard_slices: tuple[int, ...]


def _ellipse_mask(h, w, center, axes, rng):
    rr, cc = np.mgrid[0:h, 0:w]
    cy, cx = center
    ay, ax = axes
    return ((rr - cy) / ay) ** 2 + ((cc - cx) / ax) ** 2 <= 1.0


def _signed_distance(mask):
    m = mask.astype(bool)
    if not m.any():
        return -ndimage.distance_transform_edt(np.ones_like(m))
    if m.all():
        return ndimage.distance_transform_edt(np.ones_like(m))
    return ndimage.distance_transform_edt(m) - ndimage.distance_transform_edt(~m)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def generate_synthetic_stack(spec: SynthSpec = SynthSpec(), seed: int = 0) -> SynthResult:
    """Deterministic synthetic stack: per-slice random ellipse targets with
    speckle noise; probability heads are noisy logistic transforms of the
    signed boundary distance, with a disagreeing false-positive blob on the
    designated hard slices."""
    rng = np.random.default_rng(seed)
    h, w, m = spec.height, spec.width, spec.num_slices
    hard = tuple(sorted(rng.choice(m, size=min(spec.num_hard, m), replace=False).tolist()))

    gt = np.zeros((m, h, w), dtype=np.uint8)
    image = np.zeros((m, h, w), dtype=np.float64)
    probs = np.zeros((spec.n_predictors, m, h, w), dtype=np.float64)

    for k in range(m):
        center = (h / 2 + rng.uniform(-h / 10, h / 10), w / 2 + rng.uniform(-w / 10, w / 10))
        axes = (rng.uniform(h / 5.5, h / 3.5), rng.uniform(w / 5.5, w / 3.5))
        mask = _ellipse_mask(h, w, center, axes, rng)
        gt[k] = mask.astype(np.uint8)
        image[k] = 0.25 + 0.5 * mask + rng.normal(0.0, 0.04, size=(h, w))

        sdt = _signed_distance(mask)
        logits = sdt / spec.temperature
        blob = None
        offsets = np.zeros(spec.n_predictors)
        if k in hard and spec.corruption > 0:
            # false-positive blob just outside the target boundary, with
            # large inter-head disagreement -> error + high variance
            angle = rng.uniform(0, 2 * np.pi)
            br = spec.blob_radius
            cy = center[0] + (axes[0] + br + 1) * np.sin(angle)
            cx = center[1] + (axes[1] + br + 1) * np.cos(angle)
            cy = float(np.clip(cy, br + 1, h - br - 2))
            cx = float(np.clip(cx, br + 1, w - br - 2))
            rr, cc = np.mgrid[0:h, 0:w]
            blob = (rr - cy) ** 2 + (cc - cx) ** 2 <= br * br
            offsets = spec.corruption * rng.uniform(2.0, 9.0, size=spec.n_predictors)
        for n in range(spec.n_predictors):
            noise = np.zeros((h, w))
            if spec.corruption > 0:
                noise = ndimage.gaussian_filter(
                    rng.normal(0.0, spec.noise_amp * spec.corruption, size=(h, w)), sigma=3.0
                )
            head = logits + noise
            if blob is not None:
                head = head + offsets[n] * blob
            probs[n, k] = _sigmoid(head)

    image = np.clip(image, 0.0, 1.0)
    return SynthResult(
        Stack(image.astype(np.float32)),
        BinaryMask(gt),
        ProbabilityGroup(np.clip(probs, 0.0, 1.0).astype(np.float32)),
        hard,
    )


def make_small_target_scenario(seed: int = 0) -> SynthResult:
    """A stack where the naive (unnormalized) slice score under-ranks a
    corrupted small target: slice 0 holds a small target with a localized
    mis-segmented blob, the other slices hold large clean targets whose wide
    boundary rims accumulate more total variance."""
    rng = np.random.default_rng(seed)
    m, h, w = 4, 64, 64
    gt = np.zeros((m, h, w), dtype=np.uint8)
    image = np.zeros((m, h, w), dtype=np.float64)
    probs = np.zeros((4, m, h, w), dtype=np.float64)
    rr, cc = np.mgrid[0:h, 0:w]

    # slice 0: small target, sharp heads, disagreeing blob next to it
    small = (rr - 32) ** 2 + (cc - 32) ** 2 <= 5 ** 2
    gt[0] = small
    image[0] = 0.25 + 0.5 * small
    sdt = _signed_distance(small)
    blob = (rr - 32) ** 2 + (cc - 43) ** 2 <= 4 ** 2
    for n, off in enumerate((2.0, 4.0, 6.0, 8.0)):
        probs[n, 0] = _sigmoid(sdt / 0.5 + off * blob)

    # slices 1..3: large clean targets with wide, head-shifted rims
    for k in range(1, m):
        big = (rr - 32) ** 2 + (cc - 32) ** 2 <= 20 ** 2
        gt[k] = big
        image[k] = 0.25 + 0.5 * big
        sdt = _signed_distance(big)
        for n, shift in enumerate((-1.5, -0.5, 0.5, 1.5)):
            probs[n, k] = _sigmoid((sdt + shift) / 2.0)

    image += rng.normal(0.0, 0.02, size=image.shape)
    return SynthResult(
        Stack(np.clip(image, 0, 1).astype(np.float32)),
        BinaryMask(gt),
        ProbabilityGroup(np.clip(probs, 0, 1).astype(np.float32)),
        (0,),
    )


# ---------------------------------------------------------------------------
# Simulated scribbles


def _skeleton_pixels(component: np.ndarray) -> np.ndarray:
    """Inner skeleton: pixels at least half the component's max depth from
    its boundary."""
    edt = ndimage.distance_transform_edt(component)
    cutoff = edt.max() / 2.0
    pts = np.argwhere(edt >= max(cutoff, 1.0))
    if pts.size == 0:
        pts = np.argwhere(edt == edt.max())
    return pts


def _chain_polyline(points: np.ndarray) -> list[list[tuple[int, int]]]:
    """Greedy nearest-neighbor chaining; splits into separate strokes at
    jumps so the drawn line stays inside the component."""
    remaining = [tuple(int(v) for v in p) for p in points]
    remaining.sort()
    chains: list[list[tuple[int, int]]] = [[remaining.pop(0)]]
    while remaining:
        cur = chains[-1][-1]
        j = min(range(len(remaining)),
                key=lambda i: (remaining[i][0] - cur[0]) ** 2 + (remaining[i][1] - cur[1]) ** 2)
        nxt = remaining.pop(j)
        if (nxt[0] - cur[0]) ** 2 + (nxt[1] - cur[1]) ** 2 > 9:
            chains.append([nxt])
        else:
            chains[-1].append(nxt)
    return chains


def simulate_scribbles(pred_slice, gt_slice, slice_index: int = 0,
                       min_component: int = 20) -> ScribbleSet:
    """Emit a corrective stroke for each error component of at least
    ``min_component`` pixels: foreground strokes on missed regions,
    background strokes on over-segmented ones."""
    pred = np.asarray(pred_slice).astype(bool)
    gt = np.asarray(gt_slice).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError("prediction/ground-truth shape mismatch")
    strokes = []
    for label, region in (("fg", gt & ~pred), ("bg", pred & ~gt)):
        labeled, count = ndimage.label(region, structure=_EIGHT)
        for i in range(1, count + 1):
            comp = labeled == i
            if comp.sum() < min_component:
                continue
            for chain in _chain_polyline(_skeleton_pixels(comp)):
                strokes.append(Stroke(label, tuple(chain), radius=0))
    return ScribbleSet(slice_index, tuple(strokes))


# ---------------------------------------------------------------------------
# Refinement sessions


@dataclass
class SessionLog:
    """Ordered record of one refinement session; replayable bit-exactly."""

    mode: str = "normalized"
    config: dict = field(default_factory=dict)
    queue: list = field(default_factory=list)  # [[slice, score], ...]
    events: list = field(default_factory=list)
    timings: list = field(default_factory=list)  # seconds per fetch, excluded from replay

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "config": self.config,
            "queue": self.queue,
            "events": self.events,
            "timings": self.timings,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SessionLog":
        return cls(obj["mode"], obj["config"], obj["queue"], obj["events"],
                   obj.get("timings", []))


def refine_slice(intensity_slice, p_slice, mask_slice, scribbles: ScribbleSet,
                 cfg: RefineConfig):
    """Refine one slice mask: rasterize scribbles, build the geodesic
    likelihood on the normalized intensity, evolve the level set."""
    norm = normalize_slice(intensity_slice)
    fg, bg = rasterize_scribbles(scribbles, *norm.shape)
    eta = geodesic.scribble_likelihood(norm, fg, bg, cfg.gamma, cfg.D)
    phi0 = levelset.init_phi(mask_slice)
    phi = levelset.evolve(phi0, p_slice, eta, cfg,
                          fg_mask=fg if fg.any() else None,
                          bg_mask=bg if bg.any() else None)
    return levelset.extract_mask(phi)


def run_session(stack: Stack, probgroup: ProbabilityGroup, gt: BinaryMask | None = None,
                scribble_source="simulated", cfg: RefineConfig | None = None,
                mode: str = "normalized", min_component: int = 20,
                max_rounds: int = 2):
    """Full loop: fuse, rank, then fetch/scribble/refine until done.

    ``scribble_source`` is "simulated" (requires ``gt``) or a callable
    ``(slice_index, round, current_mask_slice) -> ScribbleSet`` returning an
    empty set to decline editing.
    """
    cfg = cfg or RefineConfig()
    if scribble_source == "simulated":
        if gt is None:
            raise ValueError("simulated scribbles require a ground-truth mask")
        def provider(k, rnd, current):
            return simulate_scribbles(current, gt.data[k], k, min_component)
    else:
        provider = scribble_source

    fused = fuse_predictions(probgroup, cfg.threshold)
    queue = rank_slices(fused, cfg, mode)
    mask = fused.mask.data.copy()
    log = SessionLog(mode=mode, config=cfg.to_json(),
                     queue=[[k, s] for k, s in queue.entries])
    history: list[tuple[int, bool]] = []

    while (k := next_slice(queue, history, cfg.early_stop_count)) is not None:
        t0 = time.perf_counter()
        score = dict(queue.entries)[k]
        dice_before = metrics.dice(mask[k], gt.data[k]) if gt is not None else None
        rounds = []
        for rnd in range(max_rounds):
            scribbles = provider(k, rnd, mask[k])
            if not scribbles.strokes:
                break
            mask[k] = refine_slice(stack.data[k], fused.mean_map[k], mask[k], scribbles, cfg)
            rounds.append(scribbles.to_json())
        edited = bool(rounds)
        event = {"slice": int(k), "score": float(score), "edited": edited, "rounds": rounds}
        if gt is not None:
            event["dice_before"] = dice_before
            event["dice_after"] = metrics.dice(mask[k], gt.data[k]) if edited else None
        log.events.append(event)
        log.timings.append(time.perf_counter() - t0)
        history.append((int(k), edited))

    return BinaryMask(mask), log


def replay_session(stack: Stack, probgroup: ProbabilityGroup, log: SessionLog) -> BinaryMask:
    """Re-run the recorded scribbles deterministically; the result is
    bit-identical to the original session's final mask."""
    cfg = RefineConfig.from_json(log.config)
    fused = fuse_predictions(probgroup, cfg.threshold)
    mask = fused.mask.data.copy()
    for event in log.events:
        k = event["slice"]
        for rnd in event["rounds"]:
            scribbles = ScribbleSet.from_json(rnd)
            mask[k] = refine_slice(stack.data[k], fused.mean_map[k], mask[k], scribbles, cfg)
    return BinaryMask(mask)


def exhaustive_review(stack: Stack, probgroup: ProbabilityGroup, gt: BinaryMask,
                      cfg: RefineConfig | None = None, min_component: int = 20,
                      max_rounds: int = 2) -> BinaryMask:
    """Reference baseline: the user checks every slice in index order."""
    cfg = cfg or RefineConfig()
    fused = fuse_predictions(probgroup, cfg.threshold)
    mask = fused.mask.data.copy()
    for k in range(stack.num_slices):
        for _ in range(max_rounds):
            scribbles = simulate_scribbles(mask[k], gt.data[k], k, min_component)
            if not scribbles.strokes:
                break
            mask[k] = refine_slice(stack.data[k], fused.mean_map[k], mask[k], scribbles, cfg)
    return BinaryMask(mask)
