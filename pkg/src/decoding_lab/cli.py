"""Command-line entry point: ``decoding-lab <command> [options]``.

Exit codes: 0 success, 1 invalid input, 2 sequence-space budget exceeded,
3 a verification check failed.
"""
import argparse
import hashlib
import json
import platform
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .decoders import DecoderSpec, decode
from .distributions import format_sequence, load_json, model_from_json
from .errors import BudgetExceeded
from .losses import LossSpec, expected_risk, oracle_optimal
from .ntp import wrap

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_VERIFY = 0, 1, 2, 3
COMMANDS = ("decode", "oracle", "risk", "sweep", "verify", "plot")


def build_parser():
    parser = argparse.ArgumentParser(prog="decoding-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON config file, or the name of a shipped fixture such as b7.json")
        p.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")
        p.add_argument("--output-dir", default="out", help="directory for outputs and manifest.json")
        p.add_argument("--override", nargs="+", default=[], metavar="KEY=VALUE",
                       help="override config fields; unknown keys are rejected")

    p = sub.add_parser("decode", help="run one decoder on a distribution")
    common(p)
    p.add_argument("--decoder", default='{"kind": "kt_lookahead", "K": 1, "T": 1}', help="decoder spec JSON")

    p = sub.add_parser("oracle", help="enumerate g-scores and the optimal output set")
    common(p)
    p.add_argument("--N", type=int, default=1, help="gram length of the Hamming loss")

    p = sub.add_parser("risk", help="exact expected risk of a decoder")
    common(p)
    p.add_argument("--decoder", default='{"kind": "kt_lookahead", "K": 1, "T": 1}', help="decoder spec JSON")
    p.add_argument("--loss", default='{"kind": "ngram_hamming", "N": 1}', help="loss spec JSON")

    p = sub.add_parser("sweep", help="lookahead optimality on random Markov chains")
    common(p, config_required=False)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--full-scale", action="store_true", help="full grid, 200 trials (hours)")
    scale.add_argument("--ci-scale", action="store_true", help="reduced grid, 50 trials")

    p = sub.add_parser("verify", help="run the verification suite")
    common(p, config_required=False)

    p = sub.add_parser("plot", help="figure CSVs and SVGs from a sweep CSV")
    common(p, config_required=False)
    p.add_argument("--input", required=True, help="sweep CSV written by the sweep command")
    return parser


def resolve_config(name):
    """A path on disk, else a fixture shipped inside the package."""
    path = Path(name)
    if path.exists():
        return path
    shipped = resources.files("decoding_lab") / "data" / name
    if shipped.is_file():
        return Path(str(shipped))
    raise FileNotFoundError(f"config {name!r} not found on disk or among shipped fixtures")


def _sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _versions():
    import matplotlib
    return {"decoding_lab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "matplotlib": matplotlib.__version__, "kernel_backend": _kernels.backend()}


def write_manifest(out_dir, command, config, seed, outputs):
    manifest = {
        "command": command,
        "config_sha256": _sha256_bytes(_canonical(config).encode()),
        "seed": seed,
        "versions": _versions(),
        "outputs": {p.name: _sha256_bytes(p.read_bytes()) for p in sorted(outputs)},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _decoder_spec(args):
    data = json.loads(args.decoder)
    for item in args.override:
        key, sep, raw = item.partition("=")
        if not sep or key not in DecoderSpec.__dataclass_fields__:
            raise ValueError(f"unknown decoder override {item!r}")
        data[key] = raw if key in ("kind", "tie_policy") else float(raw)
    return DecoderSpec.from_json(data)


def _no_overrides(args):
    if args.override:
        raise ValueError(f"{args.command} takes no overrides, got {args.override}")


def _single(model):
    if len(model.inputs) != 1:
        raise ValueError("this command needs a single distribution, not a conditional model")
    return model.inputs[0][2]


def cmd_decode(args, out_dir):
    raw = load_json(resolve_config(args.config))
    dist = _single(model_from_json(raw))
    spec = _decoder_spec(args)
    spec.check_length(dist.L)
    rng = np.random.default_rng(args.seed)
    ntp = wrap(dist)
    y = decode(ntp, spec, rng, dist.L)
    text = format_sequence(y, dist.vocab_size)
    print(text)
    path = out_dir / "decode.json"
    path.write_text(json.dumps({"output": text, "queries": ntp.query_count}, indent=2, sort_keys=True) + "\n")
    return {"distribution": raw, "decoder": spec.to_json()}, [path]


def cmd_oracle(args, out_dir):
    _no_overrides(args)
    raw = load_json(resolve_config(args.config))
    dist = _single(model_from_json(raw))
    result = oracle_optimal(dist, args.N)
    for y in result.optimal_set:
        print(format_sequence(y, dist.vocab_size))
    path = out_dir / "oracle.csv"
    result.write_csv(path)
    return {"distribution": raw, "N": args.N}, [path]


def cmd_risk(args, out_dir):
    raw = load_json(resolve_config(args.config))
    model = model_from_json(raw)
    spec = _decoder_spec(args)
    loss_data = json.loads(args.loss)
    unknown = set(loss_data) - {"kind", "N"}
    if unknown:
        raise ValueError(f"unknown loss fields {sorted(unknown)}")
    loss = LossSpec(**loss_data)
    report = expected_risk(model, spec, loss)
    text = report.dumps()
    print(text)
    path = out_dir / "risk.json"
    path.write_text(text + "\n")
    return {"model": raw, "decoder": spec.to_json(), "loss": loss_data}, [path]


def cmd_sweep(args, out_dir):
    from .experiments.sweep import SweepConfig, default_workers, run_sweep
    if args.config:
        config = SweepConfig.from_json(load_json(resolve_config(args.config)))
    elif args.full_scale:
        config = SweepConfig.full_scale()
    else:
        config = SweepConfig.ci_scale()
    config = config.with_overrides(args.override + [f"master_seed={args.seed}"])
    result = run_sweep(config, workers=args.workers or default_workers())
    path = out_dir / "sweep.csv"
    result.write_csv(path)
    for alpha, m, L in result.skipped:
        print(f"skipped alpha={alpha} m={m} L={L}: over the sequence budget", file=sys.stderr)
    print(f"{len(result.rows)} rows written to {path}")
    return config.to_json(), [path]


def cmd_verify(args, out_dir):
    from .experiments.verify import verify_all
    _no_overrides(args)
    report = verify_all(args.seed)
    for item in report:
        print(f"{item['status']}  {item['check_id']}")
    path = out_dir / "verify.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    failed = any(item["status"] != "PASS" for item in report)
    return {"suite": [r["check_id"] for r in report]}, [path], failed


def cmd_plot(args, out_dir):
    from .experiments.plots import emit_plots
    from .experiments.sweep import SweepResult
    _no_overrides(args)
    result = SweepResult.read_csv(args.input)
    written = emit_plots(result, out_dir)
    if not written:
        print("no rows to plot; nothing written", file=sys.stderr)
    return {"input_sha256": _sha256_bytes(Path(args.input).read_bytes())}, written


HANDLERS = {"decode": cmd_decode, "oracle": cmd_oracle, "risk": cmd_risk,
            "sweep": cmd_sweep, "verify": cmd_verify, "plot": cmd_plot}


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = Path(args.output_dir)
    try:
        if not 0 <= args.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        out_dir.mkdir(parents=True, exist_ok=True)
        outcome = HANDLERS[args.command](args, out_dir)
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    config, outputs, *failed = outcome
    write_manifest(out_dir, args.command, config, args.seed, outputs)
    return EXIT_VERIFY if failed and failed[0] else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
