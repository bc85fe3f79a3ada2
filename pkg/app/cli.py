"""
twinmesh command line.

    twinmesh serve --config config/environments/development.json
    twinmesh bench dynamic --max-pairs 40 --trials 500 --out dynamic.csv
    twinmesh bench static --tags 1,3,5 --max-pairs 100 --trials 500 --out static.csv
    twinmesh admin grant --principal alice --device truck-1 --tag pressure --action read
    twinmesh admin --config config/environments/production.json acl

Exit codes: 0 success, 1 server/request failure, 2 configuration error,
3 every benchmark trial aborted.
"""

import argparse
import json
import os
import sys
from typing import List, Optional

import httpx
import structlog

from app.core.config import Settings
from app.core.errors import ConfigError, InvariantViolation
from app.core.logging import configure_logging

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_REQUEST_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_ABORTED = 3


def _load_settings(path: Optional[str]) -> Settings:
    return Settings.from_file(path) if path else Settings()


def _tag_counts(raw: str) -> List[int]:
    try:
        counts = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}")
    if not counts or min(counts) < 1:
        raise argparse.ArgumentTypeError("every series needs at least one tag")
    return counts


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Environment JSON (config/environments/*.json)")
    common.add_argument("--log-level", help="Override the configured log level")

    parser = argparse.ArgumentParser(prog="twinmesh", description="Edge digital twins with tag-based access control")
    commands = parser.add_subparsers(dest="command", required=True)

    serve = commands.add_parser("serve", parents=[common], help="Run the edge service and its HTTP surface")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)

    bench = commands.add_parser("bench", parents=[common], help="Tag-scaling benchmarks")
    bench.add_argument("experiment", choices=["dynamic", "static"])
    bench.add_argument("--max-pairs", type=int)
    bench.add_argument("--trials", type=int)
    bench.add_argument("--tags", type=_tag_counts, default=[1, 3, 5], help="Static series, e.g. 1,3,5")
    bench.add_argument("--out", help="CSV output path")
    bench.add_argument("--verify", action="store_true", help="Check tag attachments and twin projections per step")
    bench.add_argument("--timeout-ms", type=int, help="Device conformance timeout")

    admin = commands.add_parser("admin", parents=[common], help="Administer a running service or local files")
    admin.add_argument("--url", help="Service base URL (default from settings)")
    admin.add_argument("--user", default=os.environ.get("TWINMESH_ADMIN_USER", "admin"))
    admin.add_argument("--password", default=os.environ.get("TWINMESH_ADMIN_PASSWORD"))
    actions = admin.add_subparsers(dest="action", required=True)

    for name in ("grant", "revoke"):
        sub = actions.add_parser(name)
        sub.add_argument("--principal", required=True)
        sub.add_argument("--device", required=True)
        sub.add_argument("--tag", required=True)
        sub.add_argument("--action", dest="grant_action", choices=["read", "write"], default="read")

    push = actions.add_parser("push-tags", help="Sticky tags for everything a device reports")
    push.add_argument("--device", required=True)
    push.add_argument("--tags", required=True, help="Comma-separated tag names")

    twins = actions.add_parser("twins", help="Show a device's base shadow and twins")
    twins.add_argument("--device", required=True)

    actions.add_parser("reap", help="Put idle twins to sleep now")
    actions.add_parser("acl", help="Print the policy as Mosquitto ACL lines (from local files)")

    hashing = actions.add_parser("hash-password", help="Print a credential-file entry")
    hashing.add_argument("--principal", required=True)
    hashing.add_argument("--secret", required=True)
    hashing.add_argument("--roles", default="app", help="Comma-separated roles")
    return parser


# --- serve ------------------------------------------------------------------------


def cmd_serve(args: argparse.Namespace, config: Settings) -> int:
    import uvicorn

    from app.edge import build_runtime
    from app.main import create_app

    runtime = build_runtime(config)
    uvicorn.run(
        create_app(runtime),
        host=args.host or config.http_host,
        port=args.port or config.http_port,
        log_config=None,
    )
    return EXIT_OK


# --- bench ------------------------------------------------------------------------


def cmd_bench(args: argparse.Namespace, config: Settings) -> int:
    from app.evaluation import BenchmarkHarness, emit_csv, run_dynamic_scaling, run_static_scaling, summarize

    trials = args.trials or config.bench_trials
    harness = BenchmarkHarness(
        device_timeout_ms=args.timeout_ms or config.bench_device_timeout_ms,
        verify_invariants=args.verify,
    )
    try:
        if args.experiment == "dynamic":
            max_pairs = 40 if args.max_pairs is None else args.max_pairs
            run = run_dynamic_scaling(max_pairs=max_pairs, trials=trials, harness=harness)
        else:
            max_pairs = 100 if args.max_pairs is None else args.max_pairs
            run = run_static_scaling(tags_per_pair=args.tags, max_pairs=max_pairs, trials=trials, harness=harness)
    except InvariantViolation as e:
        logger.error("benchmark_invariant_violated", experiment=args.experiment, reason=str(e))
        print(f"Invariant violated: {e}", file=sys.stderr)
        return EXIT_ABORTED
    finally:
        harness.close()

    summaries = summarize(run.records)
    if args.out:
        emit_csv(summaries, args.out)

    for point in summaries:
        series = "" if point.tags_per_pair is None else f" tags={point.tags_per_pair}"
        print(
            f"{point.experiment.value}{series} pairs={point.pair_count:>3} "
            f"mean={point.mean_ms:.4f}ms ci99=[{point.ci99_low_ms:.4f}, {point.ci99_high_ms:.4f}] n={point.n}"
        )
    print(f"trials={run.trials} completed={run.completed} aborted={run.aborted}")

    if run.all_aborted:
        logger.error("benchmark_aborted", experiment=args.experiment, trials=run.trials)
        return EXIT_ABORTED
    return EXIT_OK


# --- admin ------------------------------------------------------------------------


def admin_client(args: argparse.Namespace, config: Settings) -> httpx.Client:
    base_url = args.url or f"http://{config.http_host}:{config.http_port}"
    return httpx.Client(base_url=base_url, auth=(args.user, args.password or ""), timeout=10.0)


def _print_json(body) -> None:
    print(json.dumps(body, indent=2, sort_keys=True))


def cmd_admin_offline(args: argparse.Namespace, config: Settings) -> int:
    from app.security.policy import AccessPolicy, load_policy, to_mosquitto_acl
    from app.security.principals import load_credentials, password_entry

    if args.action == "hash-password":
        roles = [role.strip() for role in args.roles.split(",") if role.strip()]
        print(password_entry(args.principal, args.secret, roles))
        return EXIT_OK

    policy = load_policy(config.policy_file) if config.policy_file else AccessPolicy()
    principals = load_credentials(config.credentials_file).principals() if config.credentials_file else []
    print(to_mosquitto_acl(policy, principals), end="")
    return EXIT_OK


def cmd_admin(args: argparse.Namespace, config: Settings) -> int:
    if args.action in ("acl", "hash-password"):
        return cmd_admin_offline(args, config)

    with admin_client(args, config) as client:
        try:
            if args.action in ("grant", "revoke"):
                body = {
                    "principal": args.principal,
                    "device": args.device,
                    "tag": args.tag,
                    "action": args.grant_action,
                }
                path = "/admin/grants" if args.action == "grant" else "/admin/grants/revoke"
                response = client.post(path, json=body)
            elif args.action == "push-tags":
                tags = [tag.strip() for tag in args.tags.split(",") if tag.strip()]
                response = client.post(f"/admin/things/{args.device}/tags", json={"tags": tags})
            elif args.action == "twins":
                response = client.get(f"/admin/things/{args.device}/twins")
            else:
                response = client.post("/admin/reap")
            response.raise_for_status()
        except httpx.HTTPStatusError as e:
            print(f"Request failed ({e.response.status_code}): {e.response.text}", file=sys.stderr)
            return EXIT_REQUEST_FAILED
        except httpx.HTTPError as e:
            print(f"Cannot reach {client.base_url}: {e}", file=sys.stderr)
            return EXIT_REQUEST_FAILED

    _print_json(response.json())
    return EXIT_OK


COMMANDS = {"serve": cmd_serve, "bench": cmd_bench, "admin": cmd_admin}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_settings(args.config)
        configure_logging(args.log_level or config.log_level, config.log_json)
        return COMMANDS[args.command](args, config)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
