"""Command-line entry point: ``hyperattn {gen,verify,bench,alpha}``."""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import io_format
from .approx_d import estimate_kappa_alpha
from .bench import run_bench, summarize
from .core import AttentionInputs
from .diagnostics import alpha_sweep, verify_spectral
from .heavy_sketch import SketchParams, sketch_heavy_mask
from .hyper import HyperParams
from .lsh import LshParams, sort_lsh_mask
from .masks import SparseMask, empty_mask
from .synthetic import GENERATORS, make_inputs

DENSE_LIMIT = 8192


@dataclass
class RunConfig:
    subcommand: str
    n: Optional[int] = None
    d: int = 16
    seed: int = 0
    b: int = 256
    m: int = 256
    epsilon: float = 0.5
    mask: str = "sortlsh"
    mode: str = "practical"
    causal: bool = False
    scale: bool = True
    generator: str = "gaussian"
    out: Optional[str] = None
    repeat: int = 1


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _shift(text: str):
    return text if text == "auto" else float(text)


def _threads(args) -> Optional[int]:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("HATN_THREADS")
    return int(env) if env else None


@contextlib.contextmanager
def _output(path: Optional[str]):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _load_inputs(args, seed: int) -> AttentionInputs:
    if args.q or args.k or args.v:
        if not (args.q and args.k and args.v):
            raise SystemExit("--q, --k and --v must be given together")
        q, k, v = (io_format.read_matrix(p) for p in (args.q, args.k, args.v))
        if args.scale:
            q = q / np.sqrt(q.shape[1])
        return AttentionInputs(q, k, v)
    return make_inputs(args.generator, args.n, args.d, seed, args.scale)


def _build_mask(args, inputs: AttentionInputs, seed: int):
    n = inputs.n
    if args.mask == "none":
        return empty_mask(n)
    if args.mask == "sortlsh":
        return sort_lsh_mask(inputs.q, inputs.k, min(args.b, n), LshParams.for_length(n, seed))
    if args.mask == "sketch":
        return sketch_heavy_mask(inputs.q, inputs.k, SketchParams(tau=args.tau, seed=seed))
    entries = io_format.read_matrix(args.mask_file).astype(np.int64)
    return SparseMask.from_pairs(n, entries[:, 0], entries[:, 1])


def _kappa_alpha(args, inputs: AttentionInputs, mask) -> tuple[float, float]:
    """Resolve ``--kappa`` / ``--alpha``; ``auto`` measures them on the inputs."""
    if args.mode != "theoretical" or (args.kappa != "auto" and args.alpha != "auto"):
        return _number(args.kappa), _number(args.alpha)
    probe = mask if mask is not None else empty_mask(inputs.n)
    est = estimate_kappa_alpha(inputs.q, inputs.k, probe, seed=args.seed)
    kappa = est.kappa if args.kappa == "auto" else float(args.kappa)
    alpha = est.alpha if args.alpha == "auto" else float(args.alpha)
    return kappa, alpha


def _number(value) -> float:
    return math.inf if value == "auto" else float(value)


def cmd_verify(args) -> int:
    reports = []
    config = _config(args, "verify")
    for r in range(args.repeat):
        seed = args.seed + r
        inputs = _load_inputs(args, seed)
        config.n, config.d = inputs.n, inputs.d
        mask = None if args.causal else _build_mask(args, inputs, seed)
        kappa, alpha = _kappa_alpha(args, inputs, mask)
        params = HyperParams(
            block_size=min(args.b, inputs.n),
            m=inputs.n if args.complete_cover else args.m,
            mode=args.mode,
            epsilon=args.epsilon,
            kappa=kappa,
            alpha=alpha,
            causal_base_threshold=args.threshold,
            seed=seed,
            mask="none" if args.mask == "none" else "sortlsh",
            complete_cover=args.complete_cover,
            shift=args.shift,
        )
        reports.append(verify_spectral(inputs, mask, params, args.epsilon, causal=args.causal))
    pass_rate = sum(rep.passed for rep in reports) / len(reports)
    doc = {
        "config": asdict(config),
        "pass_rate": pass_rate,
        "passed": pass_rate >= args.pass_threshold,
        "reports": [json.loads(io_format.report_json(rep)) for rep in reports],
    }
    with _output(args.out) as fh:
        fh.write(json.dumps(doc, sort_keys=True) + "\n")
    return 0 if pass_rate >= args.pass_threshold else 1


def cmd_bench(args) -> int:
    params = HyperParams(block_size=args.b, m=args.m, causal_base_threshold=args.threshold, seed=args.seed)
    rows = run_bench(args.grid, args.exact_grid, args.d, params, args.repeats, args.causal, args.seed)
    summary = summarize(rows, args.grid, args.exact_grid)
    with _output(args.out) as fh:
        io_format.write_csv(rows, fh)
    print(json.dumps(summary), file=sys.stderr)
    return 0


def cmd_alpha(args) -> int:
    rows = []
    for r in range(args.repeat):
        rows.extend(
            alpha_sweep(args.n_grid, args.d, args.seed + r, args.generator, args.exclude_prefix, args.scale)
        )
    with _output(args.out) as fh:
        io_format.write_csv(rows, fh)
    return 0


def cmd_gen(args) -> int:
    # Files hold raw inputs; verify applies --scale when it loads them.
    inputs = make_inputs(args.generator, args.n, args.d, args.seed, scale=False)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for name in ("q", "k", "v"):
        io_format.write_matrix(out / f"{name}.hatn", getattr(inputs, name), args.dtype)
    return 0


def _config(args, sub: str) -> RunConfig:
    return RunConfig(
        subcommand=sub,
        n=getattr(args, "n", None),
        d=args.d,
        seed=args.seed,
        b=getattr(args, "b", 256),
        m=getattr(args, "m", 256),
        epsilon=getattr(args, "epsilon", 0.5),
        mask=getattr(args, "mask", "sortlsh"),
        mode=getattr(args, "mode", "practical"),
        causal=getattr(args, "causal", False),
        scale=getattr(args, "scale", True),
        generator=getattr(args, "generator", "gaussian"),
        out=args.out,
        repeat=getattr(args, "repeat", 1),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperattn", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--d", type=int, default=None, help="head dimension (default 16; bench 64)")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--threads", type=int, default=None, help="cap BLAS threads (env HATN_THREADS)")
    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("--generator", choices=GENERATORS, default="gaussian")
    scale = argparse.ArgumentParser(add_help=False)
    scale.add_argument("--scale", dest="scale", action="store_true", default=True,
                       help="divide Q by sqrt(d) before use (default)")
    scale.add_argument("--no-scale", dest="scale", action="store_false")

    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("verify", parents=[common, gen, scale], help="check the spectral error bound")
    p.add_argument("--n", type=int, default=None, help="sequence length (required unless --q/--k/--v)")
    p.add_argument("--b", type=int, default=256)
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--mask", choices=("sortlsh", "sketch", "file", "none"), default="sortlsh")
    p.add_argument("--mask-file", default=None, help="HATN matrix of (row, col) pairs")
    p.add_argument("--tau", type=float, default=8.0, help="heaviness threshold for --mask sketch")
    p.add_argument("--mode", choices=("practical", "theoretical"), default="practical")
    p.add_argument("--kappa", type=_shift, default="auto", help="theoretical mode; 'auto' measures it")
    p.add_argument("--alpha", type=_shift, default="auto", help="theoretical mode; 'auto' measures it")
    p.add_argument("--causal", action="store_true")
    p.add_argument("--threshold", type=int, default=4096, help="causal base-case size")
    p.add_argument("--shift", type=_shift, default="auto", help="exponent shift, a number or 'auto'")
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--pass-threshold", type=float, default=0.9)
    p.add_argument("--complete-cover", action="store_true", help="use every column once (exact)")
    p.add_argument("--allow-large", action="store_true", help=f"allow n > {DENSE_LIMIT}")
    p.add_argument("--q", default=None)
    p.add_argument("--k", default=None)
    p.add_argument("--v", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", parents=[common], help="time approximate vs exact attention")
    p.add_argument("--grid", type=_int_list, default=[8192, 16384, 32768, 65536])
    p.add_argument("--exact-grid", type=_int_list, default=[1024, 2048, 4096])
    p.add_argument("--b", type=int, default=256)
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--causal", action="store_true")
    p.add_argument("--threshold", type=int, default=4096)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("alpha", parents=[common, gen, scale], help="alpha/n across sequence lengths")
    p.add_argument("--n-grid", type=_int_list, default=[512, 1024, 2048, 4096])
    p.add_argument("--exclude-prefix", type=int, default=0)
    p.add_argument("--repeat", type=int, default=1)
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("gen", parents=[common, gen], help="write unscaled synthetic Q, K, V files")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dtype", choices=("f32", "f64"), default="f64")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.d is None:
        args.d = 64 if args.subcommand == "bench" else 16
    if args.subcommand == "verify":
        if args.n is None and not args.q:
            parser.error("verify needs --n (or --q/--k/--v input files)")
        if args.mask == "file" and not args.mask_file:
            parser.error("--mask file needs --mask-file")
    if args.subcommand == "verify" and (args.n or 0) > DENSE_LIMIT and not args.allow_large:
        parser.error(f"--n {args.n} exceeds the dense-oracle limit {DENSE_LIMIT}; pass --allow-large")
    threads = _threads(args)
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                return args.func(args)
        return args.func(args)
    except (ValueError, io_format.MatrixFormatError) as exc:
        parser.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
