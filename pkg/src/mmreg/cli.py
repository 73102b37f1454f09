"""Command-line entry points: ``mmreg register | warp | jacobian | metrics | synth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .fields import identity_map, jacobian_determinant, warp_image, warp_mask
from .metrics import detj_stats, dice, evaluate_masks, reliability
from .optim import LOSSES, RegistrationConfig, RegistrationError, register
from .synth import TEMPLATES, SynthConfig, make_pair

DEFAULTS = RegistrationConfig.defaults()


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True))


def _mean_displacement(phi) -> float:
    return float(np.mean(np.linalg.norm(phi - identity_map(phi.shape[1:]), axis=0)))


def cmd_register(args) -> dict:
    fixed, spacing = io.load_image(args.fixed)
    moving, _ = io.load_image(args.moving)
    cfg = RegistrationConfig(
        tau_lb=args.tau_lb,
        tau_ub=args.tau_ub,
        gamma_scale=args.gamma_scale,
        loss=args.loss,
        learning_rate=args.lr,
        iterations=args.iters,
        euler_steps=args.steps,
        optimizer=args.optimizer,
        seed=args.seed,
    )
    res = register(fixed, moving, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_field(out / "phi_f", res.phi_f, "deformation", spacing)
    io.write_field(out / "phi_b", res.phi_b, "deformation", spacing)
    io.write_field(out / "warped_moving", warp_image(moving, res.phi_f), "image", spacing)
    io.write_field(out / "warped_fixed", warp_image(fixed, res.phi_b), "image", spacing)
    io.write_field(out / "mu", res.mu, "scalar-field", spacing)
    with open(out / "loss.csv", "w") as fh:
        fh.write("iter,loss\n")
        for i, v in enumerate(res.loss_trace):
            fh.write(f"{i},{float(v)!r}\n")
    summary = {
        "forward": res.detj.as_dict(),
        "backward": res.detj_backward.as_dict(),
        "mean_displacement_px": _mean_displacement(res.phi_f),
        "best_iteration": res.best_iteration,
        "best_loss": res.best_loss,
        "initial_loss": float(res.loss_trace[0]),
        "loss": cfg.loss_for(fixed.ndim),
        "seconds": res.seconds,
    }
    (out / "detj.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_warp(args) -> dict:
    src = io.read_field(args.input) if Path(args.input).suffix != ".pgm" else None
    if src is None:
        data, spacing, kind = io.read_pgm(args.input), None, "image"
    else:
        data, spacing, kind = src.data, src.spacing, src.kind
    phi = io.read_field(args.phi)
    if phi.kind != "deformation":
        raise io.FieldFileError("wrong-kind", f"{args.phi}: expected a deformation, found {phi.kind}")
    if args.nearest or kind == "mask":
        out = warp_mask(data, phi.data)
    else:
        out = warp_image(data, phi.data)
    path = io.write_field(args.out, out, kind, spacing or phi.spacing)
    return {"output": str(path), "nearest": bool(args.nearest or kind == "mask")}


def cmd_jacobian(args) -> dict:
    phi = io.read_field(args.phi)
    if phi.kind != "deformation":
        raise io.FieldFileError("wrong-kind", f"{args.phi}: expected a deformation, found {phi.kind}")
    record = {}
    if args.out:
        record["output"] = str(io.write_field(args.out, jacobian_determinant(phi.data), "scalar-field", phi.spacing))
    if args.summary or not args.out:
        record.update(detj_stats(phi.data).as_dict())
    return record


def _read_mask(path):
    f = io.read_field(path)
    if f.kind != "mask":
        raise io.FieldFileError("wrong-kind", f"{path}: expected a mask, found {f.kind}")
    return f


def cmd_metrics(args) -> dict:
    if args.batch:
        if args.reliability is None:
            raise ValueError("--batch requires --reliability D")
        listing = Path(args.batch)
        cases = []
        for line in listing.read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"{listing}: each line needs 'fixed_mask moved_mask', got {line!r}")
            a, b = (p if Path(p).is_absolute() else str(listing.parent / p) for p in parts)
            cases.append(dice(_read_mask(a).data, _read_mask(b).data, args.label))
        return {
            "cases": len(cases),
            "dice": cases,
            "threshold": args.reliability,
            "reliability": reliability(cases, args.reliability),
        }
    if not (args.fixed_mask and args.moved_mask):
        raise ValueError("metrics needs --fixed-mask and --moved-mask, or --batch")
    a = _read_mask(args.fixed_mask)
    b = _read_mask(args.moved_mask)
    labels = None if args.label is None else [args.label]
    return evaluate_masks(a.data, b.data, labels, spacing=a.spacing, hd=args.hd).as_dict()


def cmd_synth(args) -> dict:
    dims = (args.size,) * args.ndim
    cfg = SynthConfig(
        dims=dims,
        cutoff=args.cutoff,
        amplitude=args.amplitude,
        template=args.preset,
        seed=args.seed,
        spacing=None if args.spacing is None else (args.spacing,) * args.ndim,
    )
    pair = make_pair(cfg)
    out = Path(args.out)
    sp = cfg.grid.spacing
    io.write_field(out / "fixed", pair.fixed, "image", sp)
    io.write_field(out / "moving", pair.moving, "image", sp)
    io.write_field(out / "fixed_mask", pair.fixed_mask, "mask", sp)
    io.write_field(out / "moving_mask", pair.moving_mask, "mask", sp)
    io.write_field(out / "phi_gt_f", pair.phi_f, "deformation", sp)
    io.write_field(out / "phi_gt_b", pair.phi_b, "deformation", sp)
    return {"output": str(out), "dims": list(dims), "dice_unregistered": dice(pair.fixed_mask, pair.moving_mask)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmreg", description="Moving-mesh diffeomorphic image registration")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("register", help="register a moving image onto a fixed image", formatter_class=fmt)
    p.add_argument("--fixed", required=True, help="fixed image (field file or .pgm)")
    p.add_argument("--moving", required=True, help="moving image (field file or .pgm)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tau-lb", type=float, default=DEFAULTS["tau_lb"], help="monitor lower bound")
    p.add_argument("--tau-ub", type=float, default=DEFAULTS["tau_ub"], help="monitor upper bound")
    p.add_argument("--lambda", dest="gamma_scale", type=float, default=DEFAULTS["gamma_scale"], help="curl magnitude bound")
    p.add_argument("--loss", choices=LOSSES, default=DEFAULTS["loss"], help="default: mse in 2D, ncc in 3D")
    p.add_argument("--lr", type=float, default=DEFAULTS["learning_rate"], help="step size")
    p.add_argument("--iters", type=int, default=DEFAULTS["iterations"], help="optimiser iterations")
    p.add_argument("--steps", type=int, default=DEFAULTS["euler_steps"], help="Euler steps over artificial time")
    p.add_argument("--optimizer", choices=("adam", "gd"), default=DEFAULTS["optimizer"], help="update rule")
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"], help="recorded for provenance; the run is deterministic")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("warp", help="resample an image or mask through a deformation", formatter_class=fmt)
    p.add_argument("--input", required=True, help="image or mask to resample")
    p.add_argument("--phi", required=True, help="deformation field file")
    p.add_argument("--out", required=True, help="output field file")
    p.add_argument("--nearest", action="store_true", help="nearest-neighbour sampling (implied for masks)")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("jacobian", help="Jacobian determinant of a deformation", formatter_class=fmt)
    p.add_argument("--phi", required=True, help="deformation field file")
    p.add_argument("--out", help="write the determinant as a scalar field")
    p.add_argument("--summary", action="store_true", help="print min, max and %% of det <= 0")
    p.set_defaults(func=cmd_jacobian)

    p = sub.add_parser("metrics", help="Dice / Hausdorff / reliability", formatter_class=fmt)
    p.add_argument("--fixed-mask", help="reference label map")
    p.add_argument("--moved-mask", help="warped label map")
    p.add_argument("--label", type=int, default=None, help="default: every label (1 in batch mode)")
    p.add_argument("--hd", action="store_true", help="also report Hausdorff distance in mm")
    p.add_argument("--batch", help="text file with one 'fixed_mask moved_mask' pair per line")
    p.add_argument("--reliability", type=float, default=None, metavar="D", help="Dice threshold for R(D) in batch mode")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("synth", help="generate a synthetic pair with ground truth", formatter_class=fmt)
    p.add_argument("--preset", choices=TEMPLATES, default="annulus", help="template shape")
    p.add_argument("--size", type=int, default=64, help="samples per axis")
    p.add_argument("--ndim", type=int, choices=(2, 3), default=2, help="image dimension")
    p.add_argument("--amplitude", type=float, default=2.0, help="raw monitor amplitude of the ground truth")
    p.add_argument("--cutoff", type=float, default=0.05, help="low-pass cutoff (cycles/pixel)")
    p.add_argument("--spacing", type=float, default=None, help="isotropic spacing in mm")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def _error_code(exc: Exception) -> str:
    if isinstance(exc, io.FieldFileError):
        return exc.code
    if isinstance(exc, RegistrationError):
        return "divergent"
    if isinstance(exc, FileNotFoundError):
        return "not-found"
    if isinstance(exc, ValueError):
        return "invalid-input"
    return "internal"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "metrics" and args.batch and args.label is None:
        args.label = 1
    try:
        record = args.func(args)
    except Exception as exc:  # one-line machine-parsable failure
        msg = str(exc).replace("\n", " ")
        print(f"error: {_error_code(exc)}: {msg}", file=sys.stderr)
        return 1
    _emit(record)
    return 0


if __name__ == "__main__":
    sys.exit(main())
