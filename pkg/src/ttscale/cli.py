"""Command-line entry point.

Subcommands: ``run`` (configured evaluation), ``theory`` (oracle CSV
sweeps), ``bench-overhead`` (execution-mode benchmark), and ``augment``
(dump augmented prompts/images for one record). Exit code 0 only when all
requested work completed, in particular when every record scored.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Optional, Sequence

from .core import GenerationConfig, QuestionRecord
from .runner import RunConfig, augment_dump, bench_overhead, run_eval, write_overhead_csv
from .theory import k_n, p_answer, p_token, uniform_chain


def _int_list(raw: str) -> list[int]:
    return [int(s) for s in raw.split(",") if s.strip()]


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_file(args.config)
    report = run_eval(cfg)
    print(
        f"{report['benchmark']} / {report['method']}: mean {report['mean_score']:.4f} "
        f"over {report['scored']} records ({report['failures']} failed)"
    )
    print(f"per-record: {report['per_record_path']}")
    print(f"aggregate:  {report['aggregate_path']}")
    return 0 if report["failures"] == 0 else 1


def _write_csv(path: Optional[str], header: Sequence[str], rows: Sequence[Sequence]) -> None:
    out = open(path, "w", encoding="utf-8", newline="") if path else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if path:
            out.close()


def _cmd_theory(args: argparse.Namespace) -> int:
    if args.kn:
        rows = [(n, f"{k_n(n):.8f}") for n in _int_list(args.kn)]
        _write_csv(args.out, ["n", "k_n"], rows)
        return 0
    if args.chain:
        parts = args.chain.split(",")
        if len(parts) != 5:
            print("--chain expects P,DELTA,N,S_ANSWER,T_MAX", file=sys.stderr)
            return 2
        p, delta, n, s_answer = float(parts[0]), float(parts[1]), int(parts[2]), float(parts[3])
        t_max = int(parts[4])
        rows = []
        for t in range(1, t_max + 1):
            cp = uniform_chain(p, delta, n, s_answer, t)
            rows.append((t, f"{p_token(cp):.8f}", f"{p_answer(cp):.8f}"))
        _write_csv(args.out, ["T", "p_token", "p_answer"], rows)
        return 0
    print("theory requires --kn or --chain", file=sys.stderr)
    return 2


def _cmd_bench(args: argparse.Namespace) -> int:
    model = None
    fixture = None
    if args.model:
        from .generator import ToyModel, ToyModelSpec

        model = ToyModel(ToyModelSpec.from_file(args.model))
        if not args.prompt:
            print("--prompt is required with a custom --model", file=sys.stderr)
            return 2
        from .core import AugmentedInput

        fixture = AugmentedInput(prompt=args.prompt, origin_id="bench")
    reports = bench_overhead(
        model=model,
        n_aug_list=_int_list(args.n),
        mode=args.mode,
        repeats=args.repeats,
        fixture_input=fixture,
    )
    if args.out:
        write_overhead_csv(reports, args.out)
        print(f"wrote {args.out}")
    else:
        for r in reports:
            print(
                f"n_aug={r.n_aug:<3d} mode={r.mode:<10s} "
                f"wall={r.wall_time_s_per_query * 1e3:8.2f} ms  peak={r.peak_memory_bytes / 1e6:.1f} MB"
            )
    return 0


def _cmd_augment(args: argparse.Namespace) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        record = QuestionRecord.from_dict(json.load(fh))
    cfg = GenerationConfig(
        n_aug=args.n,
        modality=args.modality,
        image_strength=args.strength,
        consistency_enforcement=not args.no_consistency,
    )
    written = augment_dump(record, cfg, args.seed, args.out)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttscale", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configured evaluation")
    run_p.add_argument("--config", required=True, help="path to a RunConfig JSON file")
    run_p.set_defaults(fn=_cmd_run)

    theory_p = sub.add_parser("theory", help="emit oracle CSV sweeps")
    theory_p.add_argument("--kn", help="comma-separated n values for the expected-maximum sweep")
    theory_p.add_argument("--chain", help="P,DELTA,N,S_ANSWER,T_MAX for the selection-chain sweep")
    theory_p.add_argument("--out", help="CSV output path (default: stdout)")
    theory_p.set_defaults(fn=_cmd_theory)

    bench_p = sub.add_parser("bench-overhead", help="time sequential vs parallel execution")
    bench_p.add_argument("--n", default="1,2,4,8,16", help="comma-separated augmentation counts")
    bench_p.add_argument("--mode", default="both", choices=["sequential", "parallel", "both"])
    bench_p.add_argument("--repeats", type=int, default=5)
    bench_p.add_argument("--model", help="toy model spec JSON (default: built-in fixture)")
    bench_p.add_argument("--prompt", help="fixture prompt when using a custom model")
    bench_p.add_argument("--out", help="CSV output path")
    bench_p.set_defaults(fn=_cmd_bench)

    aug_p = sub.add_parser("augment", help="dump augmented prompts and images for one record")
    aug_p.add_argument("--input", required=True, help="JSON file holding one question record")
    aug_p.add_argument("--out", required=True, help="output directory")
    aug_p.add_argument("--n", type=int, default=16)
    aug_p.add_argument("--seed", type=int, default=0)
    aug_p.add_argument("--modality", default="both", choices=["text", "image", "both"])
    aug_p.add_argument("--strength", default="high", choices=["low", "medium", "high"])
    aug_p.add_argument("--no-consistency", action="store_true")
    aug_p.set_defaults(fn=_cmd_augment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
