"""Command-line interface for fusion, ranking, refinement, evaluation,
synthetic benchmarks, batch sessions, and the HTTP service."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ugseg import geodesic, levelset, metrics, pipeline, report
from ugseg.core import (
    BinaryMask,
    ProbabilityGroup,
    RefineConfig,
    Stack,
    load_scribbles,
    normalize_slice,
    rasterize_scribbles,
    read_mask,
    read_probability_group,
    read_stack,
    read_ugstack,
    write_stack,
    write_ugstack,
)
from ugseg.uncertainty import fuse_predictions, rank_slices, slice_uncertainty, naive_slice_uncertainty


def _read_scalar_volume(path) -> np.ndarray:
    arr, header = read_ugstack(path)
    if header["kind"] not in ("stack", "uncertainty"):
        raise SystemExit(f"expected a scalar volume, got kind {header['kind']!r}")
    return np.asarray(arr, dtype=np.float64)


def _load_config(path) -> RefineConfig:
    if path is None:
        return RefineConfig()
    return RefineConfig.from_json(json.loads(Path(path).read_text()))


def cmd_fuse(args):
    pg = read_probability_group(args.probs)
    fused = fuse_predictions(pg, args.threshold)
    if args.out_mean:
        write_ugstack(fused.mean_map, args.out_mean, "stack", "f32")
    if args.out_var:
        write_ugstack(fused.variance_map, args.out_var, "uncertainty", "f32")
    if args.out_mask:
        write_stack(fused.mask, args.out_mask)
    print(json.dumps({"n_predictors": pg.n, "num_slices": int(pg.data.shape[1])}))


def cmd_rank(args):
    import math

    var, _ = read_ugstack(args.var)
    mask = read_mask(args.mask)
    cfg = RefineConfig(m_prime_fraction=args.fraction)
    entries = []
    for k in range(var.shape[0]):
        if args.mode == "normalized":
            s = slice_uncertainty(var[k], mask.data[k], cfg.zeta)
        else:
            s = naive_slice_uncertainty(var[k])
        entries.append((k, s))
    entries.sort(key=lambda e: (-e[1], e[0]))
    out = [{"slice": k, "score": s} for k, s in entries]
    cutoff = math.ceil(args.fraction * len(out))
    print(json.dumps(out if args.json else {"queue": out, "cutoff": cutoff}))


def cmd_geodesic(args):
    stack = read_stack(args.image)
    scribbles = load_scribbles(args.scribbles)
    norm = normalize_slice(stack.data[args.slice])
    fg, bg = rasterize_scribbles(scribbles, *norm.shape)
    eta = geodesic.scribble_likelihood(norm, fg, bg, args.gamma, args.D)
    write_ugstack(eta[None], args.out_eta, "uncertainty", "f32")
    print(json.dumps({"slice": args.slice, "eta_min": float(eta.min()), "eta_max": float(eta.max())}))


def cmd_refine(args):
    stack = read_stack(args.image)
    prob = _read_scalar_volume(args.prob)
    mask = read_mask(args.mask)
    scribbles = load_scribbles(args.scribbles)
    cfg = _load_config(args.config)
    k = args.slice
    out = mask.data.copy()
    out[k] = pipeline.refine_slice(stack.data[k], prob[k], mask.data[k], scribbles, cfg)
    write_stack(BinaryMask(out), args.out)
    print(json.dumps({"slice": k, "foreground_pixels": int(out[k].sum())}))


def cmd_eval(args):
    pred = read_mask(args.pred)
    gt = read_mask(args.gt)
    var = _read_scalar_volume(args.var) if args.var else None
    spacing = None
    rows = []
    for k in range(pred.data.shape[0]):
        rep = metrics.slice_report(
            pred.data[k], gt.data[k],
            uncertainty=None if var is None else var[k],
            ueo_threshold=args.ueo_threshold,
        )
        rep = {"slice": k, **rep}
        rows.append(rep)
    dices = [r["dice"] for r in rows]
    out = {
        "per_slice": rows,
        "aggregate": {"dice_mean": float(np.mean(dices)), "dice_std": float(np.std(dices))},
    }
    assds = [r["assd"] for r in rows if r["assd"] is not None]
    if assds:
        out["aggregate"]["assd_mean"] = float(np.mean(assds))
        out["aggregate"]["assd_std"] = float(np.std(assds))
    print(json.dumps(out, indent=None if args.json else 2))
    if args.report_dir:
        written = report.render_eval_report(rows, args.report_dir, variance=var)
        print(json.dumps({"report_files": [str(p) for p in written]}), file=sys.stderr)


def cmd_session(args):
    stack = read_stack(args.image)
    pg = read_probability_group(args.probs)
    gt = read_mask(args.gt) if args.gt else None
    cfg = _load_config(args.config)
    if args.mode != "simulated":
        raise SystemExit("only --mode simulated is available from the CLI; use `serve` for interactive sessions")
    final, log = pipeline.run_session(stack, pg, gt=gt, scribble_source="simulated", cfg=cfg)
    write_stack(final, args.out)
    Path(args.log).write_text(json.dumps(log.to_json()))
    if args.report_dir:
        report.render_session_report(log.to_json(), args.report_dir)
    print(json.dumps({"fetched": len(log.events),
                      "edited": sum(1 for e in log.events if e["edited"])}))


def cmd_synth(args):
    spec = pipeline.SynthSpec.from_json(json.loads(Path(args.spec).read_text())) if args.spec else pipeline.SynthSpec()
    result = pipeline.generate_synthetic_stack(spec, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_stack(result.stack, out / "stack")
    write_stack(result.gt, out / "gt")
    write_stack(result.probgroup, out / "probs")
    meta = {"seed": args.seed, "hard_slices": list(result.hard_slices), "spec": spec.to_json()}
    (out / "meta.json").write_text(json.dumps(meta))
    print(json.dumps(meta))


def cmd_serve(args):
    import uvicorn

    from ugseg.service import create_app

    uvicorn.run(create_app(args.data_dir), host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ugseg")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fuse", help="fuse N probability predictions")
    f.add_argument("--probs", required=True)
    f.add_argument("--out-mean")
    f.add_argument("--out-var")
    f.add_argument("--out-mask")
    f.add_argument("--threshold", type=float, default=0.5)
    f.set_defaults(func=cmd_fuse)

    r = sub.add_parser("rank", help="rank slices by uncertainty")
    r.add_argument("--var", required=True)
    r.add_argument("--mask", required=True)
    r.add_argument("--mode", choices=["normalized", "naive"], default="normalized")
    r.add_argument("--fraction", type=float, default=0.6)
    r.add_argument("--json", action="store_true")
    r.set_defaults(func=cmd_rank)

    g = sub.add_parser("geodesic", help="scribble likelihood map (debug path)")
    g.add_argument("--image", required=True)
    g.add_argument("--slice", type=int, required=True)
    g.add_argument("--scribbles", required=True)
    g.add_argument("--gamma", type=float, default=1.0)
    g.add_argument("--D", type=float, default=4.0)
    g.add_argument("--out-eta", required=True)
    g.set_defaults(func=cmd_geodesic)

    rf = sub.add_parser("refine", help="refine one slice with scribbles")
    rf.add_argument("--image", required=True)
    rf.add_argument("--prob", required=True)
    rf.add_argument("--mask", required=True)
    rf.add_argument("--slice", type=int, required=True)
    rf.add_argument("--scribbles", required=True)
    rf.add_argument("--config")
    rf.add_argument("--out", required=True)
    rf.set_defaults(func=cmd_refine)

    e = sub.add_parser("eval", help="segmentation/uncertainty metrics")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--var")
    e.add_argument("--ueo-threshold", type=float, default=0.05)
    e.add_argument("--json", action="store_true")
    e.add_argument("--report-dir")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("session", help="batch refinement session")
    s.add_argument("--image", required=True)
    s.add_argument("--probs", required=True)
    s.add_argument("--gt")
    s.add_argument("--mode", default="simulated")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--log", required=True)
    s.add_argument("--report-dir")
    s.set_defaults(func=cmd_session)

    sy = sub.add_parser("synth", help="generate a synthetic benchmark stack")
    sy.add_argument("--spec")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out-dir", required=True)
    sy.set_defaults(func=cmd_synth)

    sv = sub.add_parser("serve", help="run the HTTP refinement service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8080)
    sv.add_argument("--data-dir")
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
