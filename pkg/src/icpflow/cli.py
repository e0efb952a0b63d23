"""Command-line frontend: estimate, track, evaluate and synth.

Exit codes: 0 success, 2 malformed input, 3 invalid configuration or scene spec.
"""
import argparse
import sys
from dataclasses import fields
from pathlib import Path

from .config import ConfigError, PipelineConfig
from .evaluation import EvalReport, GroundTruth, evaluate
from .flow import (LengthMismatch, direct_pair_flow, ego_between, estimate_pair,
                   relative_egos, track_sequence)
from .formats import (FormatError, read_flow, read_labels, read_pose, read_scan,
                      write_flow, write_sample)
from .synth import InvalidSpec, SceneSpec, generate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3


def _flag(name):
    return "--" + name.replace("_", "-")


def _add_dataclass_flags(parser, cls, skip=()):
    group = parser.add_argument_group(f"{cls.__name__} fields")
    for f in fields(cls):
        if f.name in skip:
            continue
        default = f.default
        if isinstance(default, bool):
            group.add_argument(_flag(f.name), dest=f.name, action="store_true", default=None)
        elif isinstance(default, tuple):
            group.add_argument(_flag(f.name), dest=f.name, type=float, nargs=2,
                               metavar=("LO", "HI"), default=None)
        else:
            kind = type(default)
            group.add_argument(_flag(f.name), dest=f.name, type=kind, default=None,
                               help=f"default {default!r}")


def _overrides(args, cls):
    out = {}
    for f in fields(cls):
        v = getattr(args, f.name, None)
        if v is not None:
            out[f.name] = tuple(v) if isinstance(v, list) else v
    return out


def _config(args):
    return PipelineConfig(**_overrides(args, PipelineConfig)).validate()


def _write_flows(out_dir, flows, timestamp):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, flow in enumerate(flows, start=1):
        write_flow(out / f"flow_000_{k:03d}.icff", flow, timestamp)


def cmd_estimate(args):
    config = _config(args)
    src, dst = read_scan(args.src), read_scan(args.dst)
    ego = ego_between(read_pose(args.src_pose), read_pose(args.dst_pose))
    flow = estimate_pair(src, dst, ego, config).flow
    write_flow(args.out, flow, src.timestamp)
    return EXIT_OK


def cmd_track(args):
    config = _config(args)
    if len(args.scans) < 2:
        raise FormatError("track needs at least two scans")
    if len(args.scans) != len(args.poses):
        raise FormatError("need one pose file per scan")
    scans = [read_scan(p) for p in args.scans]
    poses = [read_pose(p) for p in args.poses]
    if args.no_intermediate:
        flows = [direct_pair_flow(scans[0], scans[k], ego_between(poses[0], poses[k]), config)
                 for k in range(1, len(scans))]
    else:
        flows = track_sequence(scans, relative_egos(poses), config)
    _write_flows(args.out_dir, flows, scans[0].timestamp)
    return EXIT_OK


def cmd_evaluate(args):
    pred, gt = read_flow(args.pred), read_flow(args.gt)
    labels, scan = read_labels(args.labels), read_scan(args.scan)
    if not args.dt > 0 or not args.half_extent > 0:
        raise ConfigError("dt and half-extent must be > 0")
    if not (len(pred) == len(gt) == len(labels) == len(scan)):
        raise LengthMismatch(
            f"lengths differ: pred {len(pred)}, gt {len(gt)}, labels {len(labels)}, "
            f"scan {len(scan)}")
    report = evaluate(pred, GroundTruth(gt, labels, args.dt), scan, args.half_extent)
    sys.stdout.write(report.table())
    if args.out:
        Path(args.out + ".txt").write_text(report.to_text(), encoding="utf-8")
        Path(args.out + ".json").write_text(report.to_json(), encoding="utf-8")
    return EXIT_OK


def cmd_synth(args):
    try:
        spec = SceneSpec(**_overrides(args, SceneSpec))
    except TypeError as exc:
        raise InvalidSpec(str(exc)) from None
    write_sample(args.out_dir, generate(spec))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="icpflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def pipeline_parser(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--dump-config", action="store_true",
                       help="print the resolved configuration and exit")
        _add_dataclass_flags(p, PipelineConfig)
        return p

    p = pipeline_parser("estimate", "scene flow for one scan pair")
    p.add_argument("--src", help="source scan (.icpf)")
    p.add_argument("--dst", help="target scan (.icpf)")
    p.add_argument("--src-pose", help="source pose (4x4 text)")
    p.add_argument("--dst-pose", help="target pose (4x4 text)")
    p.add_argument("--out", help="output flow (.icff)")
    p.set_defaults(func=cmd_estimate, needs=("src", "dst", "src_pose", "dst_pose", "out"))

    p = pipeline_parser("track", "frame-0 to frame-k flows over a sequence")
    p.add_argument("--scans", nargs="+", default=[])
    p.add_argument("--poses", nargs="+", default=[])
    p.add_argument("--out-dir")
    p.add_argument("--no-intermediate", action="store_true",
                   help="estimate each frame-0 to frame-k pair directly instead of chaining")
    p.set_defaults(func=cmd_track, needs=("out_dir",))

    p = sub.add_parser("evaluate", help="score a predicted flow against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--scan", required=True)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--half-extent", type=float, default=32.0)
    p.add_argument("--out", help="report prefix; writes PREFIX.txt and PREFIX.json")
    p.set_defaults(func=cmd_evaluate, needs=())

    p = sub.add_parser("synth", help="write a seeded synthetic clip")
    p.add_argument("--out-dir", required=True)
    _add_dataclass_flags(p, SceneSpec)
    p.set_defaults(func=cmd_synth, needs=())
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "dump_config", False):
            sys.stdout.write(_config(args).dump())
            return EXIT_OK
        missing = [n for n in args.needs if getattr(args, n) in (None, [])]
        if missing:
            parser.error("missing " + ", ".join(_flag(n) for n in missing))
        return args.func(args)
    except (ConfigError, InvalidSpec) as exc:
        print(f"icpflow: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, LengthMismatch) as exc:
        print(f"icpflow: malformed input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
