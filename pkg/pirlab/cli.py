"""
Command-line front end for pirlab.

Usage:
    python -m pirlab capacity K N
    python -m pirlab plan K N DESIRED [--symbolic | --seed S]
    python -m pirlab run --scheme capacity -K 2 -N 2 --desired 1 --seed 7 [--length L]
    python -m pirlab verify --scheme grouped22 --privacy exhaustive --correctness
    python -m pirlab table --kmax 5 --nmax 5 --format csv

Exit codes: 0 success, 1 verification or decode failure, 2 usage error,
3 capability refusal. Logs go to stderr (and PIRLAB_LOG_FILE when set) so
standard output stays byte-identical across identical invocations.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from pirlab import __version__
from pirlab.config import settings
from pirlab.exceptions import CapabilityRefusedError, InvalidArgumentError, PIRLabError, UsageError
from pirlab.messages import derive_seed, generate_messages
from pirlab.models import (
    MessageStore,
    RunConfig,
    RunSummary,
    SchemeParams,
    SchemeRun,
    VerifySummary,
    format_fraction,
)
from pirlab.scheme import (
    build_plan,
    capacity,
    capacity_lower_bound,
    plan_rate,
    randomize,
    render_plan,
    render_queries,
)
from pirlab.schemes import REGISTRY, SchemeProvider, describe_schemes, get_scheme
from pirlab.verifier import (
    check_correctness,
    check_privacy_exhaustive,
    check_privacy_sampled,
    check_structural_privacy,
    compare_rate,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_REFUSED = 3

logger = logging.getLogger("pirlab.cli")


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None):
    """Setup logging configuration."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=handlers,
        force=True,
    )
    return logging.getLogger("pirlab")


def _emit(text: str, output: Optional[str] = None) -> None:
    if output:
        Path(output).write_text(text if text.endswith("\n") else text + "\n")
        logger.info(f"Wrote {output}")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _check_size(K: int, N: int) -> SchemeParams:
    if K < 1 or N < 1:
        raise UsageError(f"K and N must be at least 1, got K={K}, N={N}")
    if K > settings.max_kn or N > settings.max_kn:
        raise UsageError(
            f"K={K}, N={N} exceeds the configured maximum {settings.max_kn} (PIRLAB_MAX_KN)"
        )
    return SchemeParams(K=K, N=N)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_capacity(args: argparse.Namespace) -> int:
    if args.K < 1 or args.N < 1:
        raise UsageError(f"K and N must be at least 1, got K={args.K}, N={args.N}")
    value = capacity(SchemeParams(K=args.K, N=args.N))
    _emit(f"{format_fraction(value)} (≈ {float(value):.6f})")
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    params = _check_size(args.K, args.N)
    if not 1 <= args.desired <= params.K:
        raise UsageError(f"desired index {args.desired} outside [1, {params.K}]")
    plan = build_plan(params, args.desired)
    if args.seed is None:
        _emit(render_plan(plan), args.output)
    else:
        queries, _ = randomize(plan, args.seed)
        _emit(render_queries(queries), args.output)
    return EXIT_OK


def _run_config(args: argparse.Namespace, provider: SchemeProvider) -> RunConfig:
    defaults = provider.default_params()
    config = RunConfig(
        scheme_id=provider.scheme_id,
        K=args.K if args.K is not None else defaults.K,
        N=args.N if args.N is not None else defaults.N,
        desired=args.desired,
        seed=args.seed,
        trials=getattr(args, "trials", 1),
        output_format=args.format,
        output_path=args.output,
    )
    _check_size(config.K, config.N)
    provider.check_params(config.params)
    return config


def _parse_desired(value: str):
    return value if value == "all" else int(value)


def retrieve(
    provider: SchemeProvider, params: SchemeParams, desired: int, seed: int, length: Optional[int]
) -> Tuple[List[SchemeRun], int, bool]:
    """Retrieve one message, chunked into runs of the scheme's native length.

    Returns the runs, the message length and whether the decoded message matched.
    """
    chunk = provider.message_length(params)
    if not provider.binary:
        if length not in (None, chunk):
            raise UsageError(f"{provider.scheme_id} retrieves exactly {chunk} {provider.unit} per run")
        store = provider.generate_store(params, derive_seed(seed, 0))
        run = provider.run(params, desired, store, seed)
        return [run], chunk, run.decoded == provider.desired_message(store, desired)

    length = length or chunk
    if length < 1:
        raise UsageError(f"--length must be at least 1, got {length}")
    store = generate_messages(params, length, derive_seed(seed, 0))
    chunks = -(-length // chunk)
    padded = np.zeros((params.K, chunks * chunk), dtype=np.uint8)
    padded[:, :length] = store.bits
    padded_store = MessageStore(bits=padded)

    runs = []
    decoded: List[int] = []
    for c in range(chunks):
        window = padded_store.window(c * chunk, (c + 1) * chunk)
        run = provider.run(params, desired, window, derive_seed(seed, 1, c))
        runs.append(run)
        decoded.extend(run.decoded)
    ok = tuple(decoded[:length]) == tuple(int(b) for b in store.message(desired))
    logger.debug(f"Retrieved W{desired} ({length} {provider.unit}s) in {chunks} chunk(s)")
    return runs, length, ok


def cmd_run(args: argparse.Namespace) -> int:
    provider = get_scheme(args.scheme)
    config = _run_config(args, provider)
    if config.output_format == "csv":
        raise UsageError("run supports --format text or json")
    params = config.params

    summaries = []
    for desired in config.desired_indices():
        runs, length, ok = retrieve(provider, params, desired, config.seed, args.length)
        report = compare_rate(runs)
        summaries.append(
            RunSummary(
                scheme_id=provider.scheme_id,
                params=params,
                desired=desired,
                seed=config.seed,
                message_bits=length,
                chunks=len(runs),
                rate=report.achieved,
                capacity=report.capacity,
                bits_up=sum(r.upload_bits for r in runs),
                bits_down=sum(r.download_total for r in runs),
                decode_ok=ok,
            )
        )

    if config.output_format == "json":
        text = json.dumps([s.model_dump(mode="json") for s in summaries], indent=2)
    else:
        lines = []
        for s in summaries:
            lines.append(f"scheme {s.scheme_id} ({s.params}) desired={s.desired} seed={s.seed}")
            lines.append(f"  message {s.message_bits} {provider.unit}(s) in {s.chunks} chunk(s)")
            lines.append(f"  rate {s.rate} (capacity {s.capacity})")
            lines.append(f"  up {s.bits_up} bits, down {s.bits_down} {provider.unit}s")
            lines.append(f"  decode {'OK' if s.decode_ok else 'FAILED'}")
        text = "\n".join(lines)
    _emit(text, config.output_path)
    return EXIT_OK if all(s.decode_ok for s in summaries) else EXIT_FAILURE


def _verify_text(summary: VerifySummary) -> str:
    lines = []
    if summary.privacy:
        p = summary.privacy
        lines.append(f"privacy ({p.mode}): {p.verdict}")
        for v in p.per_database:
            detail = " ".join(
                str(x) for x in (
                    f"TV={v.tv_distance}" if v.tv_distance is not None else None,
                    f"support={v.support_size}" if v.support_size is not None else None,
                    f"p={v.p_value:.4g}" if v.p_value is not None else None,
                    v.profile,
                ) if x
            )
            lines.append(f"  DB{v.database}: {v.verdict} {detail}".rstrip())
        if p.witness:
            w = p.witness
            parts = [f"DB{w.database}", f"desired {w.desired_pair[0]} vs {w.desired_pair[1]}"]
            if w.signature:
                parts.append(f"signature {w.signature}")
            if w.detail:
                parts.append(w.detail)
            lines.append("  witness: " + "; ".join(parts))
        lines.extend(f"  note: {note}" for note in p.notes)
    if summary.correctness:
        c = summary.correctness
        lines.append(
            f"correctness: {'pass' if c.passed else 'fail'} "
            f"({c.retrievals} retrievals, {len(c.failures)} failures)"
        )
        for f in c.failures[:5]:
            lines.append(f"  seed={f.seed} desired={f.desired} bit={f.bit_index}")
    if summary.rate:
        r = summary.rate
        lines.append(f"rate: {r.achieved} (capacity {r.capacity}, bound {r.lower_bound})")
        if r.exceeds_capacity:
            lines.append("  rate exceeds capacity")
    lines.append(f"verdict: {'PASS' if summary.passed else 'FAIL'}")
    return "\n".join(lines)


def cmd_verify(args: argparse.Namespace) -> int:
    provider = get_scheme(args.scheme)
    config = _run_config(args, provider)
    params = config.params

    privacy = None
    if args.privacy == "structural":
        privacy = check_structural_privacy(provider.scheme_id, params)
    elif args.privacy == "exhaustive":
        privacy = check_privacy_exhaustive(provider.scheme_id, params)
    elif args.privacy == "sampled":
        privacy = check_privacy_sampled(provider.scheme_id, params, trials=args.samples, seed_base=config.seed)

    correctness = None
    if args.correctness:
        correctness = check_correctness(provider.scheme_id, params, config.trials, seed_base=config.seed)

    runs = [
        provider.run(params, d, provider.generate_store(params, derive_seed(config.seed, d)), config.seed)
        for d in config.desired_indices()
    ]
    rate = compare_rate(runs)

    passed = (
        (privacy is None or privacy.passed)
        and (correctness is None or correctness.passed)
        and not (provider.private and rate.exceeds_capacity)
    )
    summary = VerifySummary(privacy=privacy, correctness=correctness, rate=rate, passed=passed)
    if config.output_path:
        _emit(summary.model_dump_json(indent=2), config.output_path)
    if config.output_format == "json":
        _emit(summary.model_dump_json(indent=2))
    else:
        _emit(_verify_text(summary))
    return EXIT_OK if passed else EXIT_FAILURE


def rate_table(kmax: int, nmax: int) -> pd.DataFrame:
    """Achieved rate, capacity and the 1 - 1/N bound for every (K, N) in range."""
    rows = []
    for K in range(1, kmax + 1):
        for N in range(1, nmax + 1):
            params = SchemeParams(K=K, N=N)
            achieved = plan_rate(build_plan(params, 1))
            cap = capacity(params)
            rows.append(
                {
                    "K": K,
                    "N": N,
                    "achieved_num": achieved.numerator,
                    "achieved_den": achieved.denominator,
                    "capacity_num": cap.numerator,
                    "capacity_den": cap.denominator,
                    "bound": format_fraction(capacity_lower_bound(N)),
                }
            )
    return pd.DataFrame(rows)


def cmd_table(args: argparse.Namespace) -> int:
    _check_size(args.kmax, args.nmax)
    table = rate_table(args.kmax, args.nmax)
    if args.format == "csv":
        text = table.to_csv(index=False)
    elif args.format == "json":
        text = table.to_json(orient="records", indent=2)
    else:
        text = table.to_string(index=False)
    _emit(text, args.output)
    mismatched = table[
        (table.achieved_num != table.capacity_num) | (table.achieved_den != table.capacity_den)
    ]
    if not mismatched.empty:
        logger.error(f"Achieved rate differs from capacity in {len(mismatched)} row(s)")
        return EXIT_FAILURE
    return EXIT_OK


# ============================================================================
# ARGUMENTS
# ============================================================================

def _add_scheme_arguments(parser: argparse.ArgumentParser, desired_default) -> None:
    parser.add_argument(
        "--scheme", default="capacity", choices=sorted(REGISTRY), help=f"Scheme id. {describe_schemes()}"
    )
    parser.add_argument("-K", type=int, default=None, help="Number of messages (scheme default if omitted)")
    parser.add_argument("-N", type=int, default=None, help="Number of databases (scheme default if omitted)")
    parser.add_argument(
        "--desired", type=_parse_desired, default=desired_default, help="Desired message index or 'all'"
    )
    parser.add_argument("--seed", type=int, default=settings.default_seed, help="Seed for all randomness")
    parser.add_argument("--output", type=str, default=None, help="Write output (or report) to this file")


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(prog="pirlab", description="Capacity-achieving PIR scheme toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        type=str,
        default=settings.log_level,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level",
    )
    parser.add_argument("--log-file", type=str, default=settings.log_file, help="Log file path")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capacity", help="Print the capacity for K messages and N databases")
    p.add_argument("K", type=int)
    p.add_argument("N", type=int)
    p.set_defaults(handler=cmd_capacity)

    p = sub.add_parser("plan", help="Print the query plan as a column-per-database table")
    p.add_argument("K", type=int)
    p.add_argument("N", type=int)
    p.add_argument("desired", type=int)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--symbolic", action="store_true", help="Symbolic bits a1, b2, ... (default)")
    mode.add_argument("--seed", type=int, default=None, help="Concrete bit references for this seed")
    p.add_argument("--output", type=str, default=None)
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser("run", help="Run one end-to-end retrieval")
    _add_scheme_arguments(p, desired_default=1)
    p.add_argument("--length", type=int, default=None, help="Message length; chunked into native runs")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("verify", help="Run privacy, correctness and rate checks")
    _add_scheme_arguments(p, desired_default="all")
    p.add_argument("--privacy", choices=["structural", "exhaustive", "sampled"], default=None)
    p.add_argument("--correctness", action="store_true", help="Run retrieve-and-compare trials")
    p.add_argument("--trials", type=int, default=10, help="Correctness trials")
    p.add_argument("--samples", type=int, default=settings.sampled_trials, help="Sampled-mode trials")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("table", help="Achieved rate vs capacity grid")
    p.add_argument("--kmax", type=int, default=5)
    p.add_argument("--nmax", type=int, default=5)
    p.add_argument("--format", choices=["text", "csv", "json"], default="text")
    p.add_argument("--output", type=str, default=None)
    p.set_defaults(handler=cmd_table)

    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function for the pirlab command line."""
    args = parse_arguments(argv)
    setup_logging(args.log_level, args.log_file)

    try:
        return args.handler(args)
    except (UsageError, InvalidArgumentError, ValidationError) as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except CapabilityRefusedError as e:
        logger.error(f"Refused: {e}")
        return EXIT_REFUSED
    except PIRLabError as e:
        logger.error(f"Failed: {e}")
        return EXIT_FAILURE
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
