"""Command-line entry point.

Exit status: 0 on success, 1 on usage or configuration errors, 2 when the
requested work fails at run time. Logs go to stderr; the paths of written
files (and evaluation numbers) go to stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .errors import ConfigError, SweError
from .evaluation import emit_report, run_experiment
from .finn import FinnParams
from .inversion import infer_topography
from .render import frame_of, render
from .scenario import (
    FIELD_ONLY, Sequence, gaussian_ic, generate_dataset, read_checkpoint, read_field, read_manifest,
    read_sequence, write_field, write_sequence,
)
from .swe import reference_rollout
from .topography import KINDS, TopoSpec, generate
from .training import evaluate, train

log = logging.getLogger("finnswe")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected x,y, got {text!r}")
    return float(parts[0]), float(parts[1])


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key = value configuration file")
    common.add_argument(
        "--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
        help="override one configuration key; repeatable, applied after --config",
    )
    common.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="finnswe", description="Shallow-water surrogate training and topography inference.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="simulate a dataset directory")
    g.add_argument("--role", choices=("train", "infer", "test"), required=True)
    g.add_argument("--count", type=_positive_int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True, metavar="DIR")

    t = sub.add_parser("topo", parents=[common], help="write a topography field file")
    t.add_argument("--kind", choices=KINDS, default="bumpy")
    t.add_argument("--beta", type=float, default=1.0)
    t.add_argument("--rotation", type=float, default=0.0, metavar="RAD")
    t.add_argument("--topo-seed", type=int, default=1)
    t.add_argument("--out", required=True)

    s = sub.add_parser("simulate", parents=[common], help="single reference rollout")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--h-file", metavar="F", help="field or sequence file holding H")
    src.add_argument("--flat-depth", type=float, metavar="M", help="use a flat H of this depth")
    s.add_argument("--ic", type=_pair, required=True, metavar="X0,Y0", help="bump centre in metres")
    s.add_argument("--out", required=True, metavar="SEQ")

    tr = sub.add_parser("train", parents=[common], help="fit the stencil networks")
    tr.add_argument("--data", required=True, metavar="DIR")
    tr.add_argument("--out", required=True, metavar="CKPT")
    tr.add_argument("--log", metavar="FILE", help="per-epoch loss log")
    tr.add_argument("--init", choices=("random", "oracle"), default="random")

    i = sub.add_parser("infer", parents=[common], help="infer H with frozen networks")
    i.add_argument("--data", required=True, metavar="DIR")
    i.add_argument("--checkpoint", required=True, metavar="CKPT")
    i.add_argument("--out", required=True, metavar="HFILE")
    i.add_argument("--log", metavar="FILE", help="per-iteration objective log")
    i.add_argument("--snapshot-every", type=int, metavar="K", help="store H every K iterations")
    i.add_argument("--snapshot-dir", metavar="DIR", help="default: <out>.snapshots")

    e = sub.add_parser("eval", parents=[common], help="rollout MSE of a dataset")
    e.add_argument("--data", required=True, metavar="DIR")
    e.add_argument("--checkpoint", required=True, metavar="CKPT")
    e.add_argument("--h", metavar="HFILE", help="replace every sequence's topography with this field")

    r = sub.add_parser("report", parents=[common], help="repeated train/infer/test runs")
    seeds = r.add_mutually_exclusive_group(required=True)
    seeds.add_argument("--seeds", type=_seed_list, metavar="S1,S2,...")
    seeds.add_argument("--repetitions", type=int, metavar="R", help="seeds 0..R-1")
    r.add_argument("--out", required=True, metavar="FILE")
    r.add_argument("--fmt", choices=("text-table", "csv"), default="text-table")
    r.add_argument("--workdir", metavar="DIR", help="keep intermediate datasets here")

    d = sub.add_parser("render", parents=[common], help="heatmap or csv of one frame")
    d.add_argument("--in", dest="input", required=True, metavar="FIELD_OR_SEQ")
    d.add_argument("--frame", type=int, default=0, metavar="K")
    d.add_argument("--field", choices=("eta", "u", "v", "H"), default="eta")
    d.add_argument("--out", required=True, metavar="PATH")
    d.add_argument("--fmt", choices=("pgm", "csv"), default="pgm")
    d.add_argument("--negate-depth", action="store_true", help="render -H (topography inputs only)")
    return p


def _is_field_file(path) -> bool:
    with open(path, "rb") as fh:
        head = fh.read(8)
    return len(head) == 8 and bool(int.from_bytes(head[4:8], "little") & FIELD_ONLY)


def cmd_generate(args, conf) -> None:
    cfg = config_mod.sim_config(conf)
    shared = args.role != "train"
    m = generate_dataset(
        args.out, args.role, args.count, args.seed, cfg, conf["sim.sigma_m"],
        beta=conf["topo.beta"] if shared else None,
        topo_seed=conf["topo.seed"] if shared else None,
        amplitude_m=conf["topo.amplitude_m"], steepness=conf["topo.steepness"],
    )
    print(Path(args.out) / "manifest.txt")
    log.info("%d %s sequences, %d steps each", len(m), args.role, cfg.steps)


def cmd_topo(args, conf) -> None:
    cfg = config_mod.sim_config(conf)
    try:
        spec = TopoSpec(
            kind=args.kind, rotation_rad=args.rotation, depth_scale=args.beta, seed=args.topo_seed,
            amplitude_m=conf["topo.amplitude_m"], steepness=conf["topo.steepness"],
        )
    except SweError as exc:
        raise UsageError(str(exc)) from None
    write_field(args.out, generate(cfg.grid, spec), cfg.dx_m, cfg.g_m_s2)
    print(args.out)


def cmd_simulate(args, conf) -> None:
    cfg = config_mod.sim_config(conf)
    if args.h_file is not None:
        H, _ = read_field(args.h_file)
        if H.shape != cfg.grid.shape:
            raise SweError(f"{args.h_file}: H is {H.shape[0]}x{H.shape[1]}, configured grid is {cfg.grid.nx}x{cfg.grid.ny}")
    else:
        H = np.full(cfg.grid.shape, args.flat_depth)
    x0, y0 = args.ic
    sigma = conf["sim.sigma_m"]
    eta0 = gaussian_ic(cfg.grid, x0, y0, sigma)
    eta, u, v = reference_rollout(eta0, H, cfg)
    write_sequence(args.out, Sequence(H, eta, u, v, cfg, (x0, y0, sigma)))
    print(args.out)


def _load_params(path, conf) -> FinnParams:
    params, _ = read_checkpoint(path, hidden_width=conf["train.hidden_width"])
    return params


def cmd_train(args, conf) -> None:
    tcfg = config_mod.train_config(conf)
    manifest = read_manifest(args.data)
    init = None
    if args.init == "oracle":
        init = FinnParams.oracle(manifest.cfg.g_m_s2, tcfg.hidden_width)
    result = train(manifest, tcfg, init=init, checkpoint_path=args.out, log_path=args.log)
    if result.aborted:
        log.warning("training stopped early; checkpoint holds epoch %d", result.best_epoch)
    print(args.out)
    if args.log:
        print(args.log)


def cmd_infer(args, conf) -> None:
    icfg = config_mod.infer_config(conf)
    if args.snapshot_every is not None:
        if args.snapshot_every < 1:
            raise UsageError("--snapshot-every must be >= 1")
        icfg.snapshot_every = args.snapshot_every
    manifest = read_manifest(args.data)
    params = _load_params(args.checkpoint, conf)
    result = infer_topography(manifest, params, icfg, log_path=args.log)
    dx, g = manifest.cfg.dx_m, manifest.cfg.g_m_s2
    write_field(args.out, result.H, dx, g)
    print(args.out)
    if args.log:
        print(args.log)
    if result.snapshots:
        snap_dir = Path(args.snapshot_dir or f"{args.out}.snapshots")
        snap_dir.mkdir(parents=True, exist_ok=True)
        for it, H in sorted(result.snapshots.items()):
            path = snap_dir / f"H_iter_{it:05d}.swe"
            write_field(path, H, dx, g)
            print(path)
    log.info("best iteration %d, data term %.6e", result.best_iteration, result.inference_error)


def cmd_eval(args, conf) -> None:
    manifest = read_manifest(args.data)
    params = _load_params(args.checkpoint, conf)
    H = None
    if args.h is not None:
        H, _ = read_field(args.h)
    err = evaluate(manifest, params, H=H, window=conf["infer.window"], batch_size=conf["infer.batch_size"])
    print(f"error = {err!r}")


def cmd_report(args, conf) -> None:
    seeds = args.seeds if args.seeds is not None else list(range(args.repetitions))
    if not seeds:
        raise UsageError("at least one repetition is required")
    report = run_experiment(seeds, config_mod.experiment_config(conf), args.workdir, workers=conf["report.workers"])
    emit_report(report, args.out, args.fmt)
    print(args.out)


def cmd_render(args, conf) -> None:
    if _is_field_file(args.input):
        if args.field != "H" and args.field != "eta":
            raise UsageError(f"{args.input} is a field file; only H can be rendered")
        values = frame_of(read_field(args.input)[0][None], args.frame)
        is_depth = True
    else:
        seq = read_sequence(args.input)
        if args.field == "H":
            values, is_depth = frame_of(seq.H[None], args.frame), True
        else:
            values, is_depth = frame_of(getattr(seq, args.field), args.frame), False
    if args.negate_depth and not is_depth:
        raise UsageError("--negate-depth applies to topography inputs only")
    render(values, args.out, args.fmt, negate=args.negate_depth)
    print(args.out)


COMMANDS = {
    "generate": cmd_generate,
    "topo": cmd_topo,
    "simulate": cmd_simulate,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "report": cmd_report,
    "render": cmd_render,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", force=True,
    )
    try:
        conf = config_mod.resolve(args.config, args.overrides)
        if args.print_config:
            sys.stdout.write(config_mod.dump(conf))
            return 0
        COMMANDS[args.command](args, conf)
    except (UsageError, ConfigError) as exc:
        print(f"finnswe {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (SweError, OSError, ValueError) as exc:
        print(f"finnswe {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
