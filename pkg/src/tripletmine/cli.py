"""Thin command-line client for the tripletmine service.

Every subcommand builds a request, sends it to the service and renders the
response. By default the service app runs in-process behind an ASGI
transport (no socket, still the same HTTP surface); pass --server to talk
to a running instance instead, or use `tripletmine serve` to start one.

Exit codes: 0 success, 1 runtime failure, 2 configuration/usage error.
"""
from __future__ import annotations

import argparse
import asyncio
import csv
import json
import sys
from pathlib import Path

import httpx
from pydantic import ValidationError

from .config import RunConfig, SweepSpec
from .errors import ConfigError
from .mining import STRATEGY_NAMES
from .sampler import load_dataset_csv
from .trainer import MiningMethod

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

METHOD_NAMES = tuple(m.value for m in MiningMethod)


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=payload)

    from .service.app import create_app  # deferred: only needed in-process

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://tripletmine", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _print_detail(payload) -> None:
    detail = payload.get("detail", payload) if isinstance(payload, dict) else payload
    if isinstance(detail, list):  # pydantic validation errors
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []))
            print(f"config error at {loc}: {item.get('msg')}", file=sys.stderr)
    else:
        print(f"error: {detail}", file=sys.stderr)


def _handle_failure(resp: httpx.Response) -> int:
    try:
        payload = resp.json()
    except json.JSONDecodeError:
        payload = resp.text
    _print_detail(payload)
    return EXIT_CONFIG if resp.status_code in (400, 422) else EXIT_RUNTIME


def _print_summary(body: dict) -> None:
    for key, value in body.get("metrics", {}).items():
        print(f"{key}: {value}")
    for name, path in body.get("artifacts", {}).items():
        print(f"{name}: {path}")


def _build_run_config(args: argparse.Namespace, default_out: str) -> RunConfig:
    """Merge config file (if any) with command-line overrides, then validate."""
    if args.config:
        config_path = Path(args.config)
        if not config_path.exists():
            raise ConfigError(f"config file does not exist: {config_path}")
        try:
            data = json.loads(config_path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config file {config_path} must hold a JSON object")
    else:
        data = {}
    if getattr(args, "dataset_csv", None):
        data["dataset"] = {"csv_path": args.dataset_csv}
    data.setdefault("dataset", {"synthetic": {}})
    train = data.setdefault("train", {})
    for attr, key in (
        ("strategy", "strategy"),
        ("method", "method"),
        ("pool_window", "pool_window"),
        ("margin", "margin"),
        ("lr", "learning_rate"),
        ("iterations", "iterations"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            train[key] = value
    if args.seed is not None:
        data["seed"] = args.seed
    data["out_dir"] = args.out if args.out is not None else data.get("out_dir", default_out)
    if getattr(args, "checkpoint", None):
        data["checkpoint_in"] = args.checkpoint
    if getattr(args, "checkpoint_out", None):
        data["checkpoint_out"] = args.checkpoint_out
    if getattr(args, "from_scratch", False):
        data["from_scratch"] = True
    return RunConfig.model_validate(data)


def cmd_pretrain(args: argparse.Namespace) -> int:
    config = _build_run_config(args, "runs/pretrain")
    resp = _post(args.server, "/runs/pretrain", {"config": config.model_dump(mode="json")})
    if resp.status_code != 200:
        return _handle_failure(resp)
    _print_summary(resp.json())
    return EXIT_OK


def cmd_finetune(args: argparse.Namespace) -> int:
    config = _build_run_config(args, "runs/finetune")
    resp = _post(args.server, "/runs/finetune", {"config": config.model_dump(mode="json")})
    if resp.status_code != 200:
        return _handle_failure(resp)
    _print_summary(resp.json())
    return EXIT_OK


def cmd_mine(args: argparse.Namespace) -> int:
    features_path = Path(args.features)
    if not features_path.exists():
        raise ConfigError(f"feature file does not exist: {features_path}")
    dataset = load_dataset_csv(features_path)
    request = {
        "features": dataset.vectors.tolist(),
        "labels": [dataset.label_names[lab] for lab in dataset.labels],
        "strategy": args.strategy,
        "margin": args.margin,
        "seed": args.seed if args.seed is not None else 0,
        "normalize": not args.raw,
    }
    resp = _post(args.server, "/mine", request)
    if resp.status_code != 200:
        return _handle_failure(resp)
    body = resp.json()
    out_path = Path(args.out or "triplets.csv")
    if out_path.parent != Path():
        out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["anchor", "positive", "negative"])
        writer.writerows(body["triplets"])
    print(f"selected {body['count']} triplets -> {out_path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _build_run_config(args, "runs/eval")
    request = {
        "checkpoint": args.checkpoint,
        "dataset": config.dataset.model_dump(mode="json"),
        "eval": config.eval.model_dump(mode="json"),
        "seed": config.seed,
    }
    resp = _post(args.server, "/eval", request)
    if resp.status_code != 200:
        return _handle_failure(resp)
    body = resp.json()
    print(f"verification_accuracy: {body['accuracy']}")
    print(f"pairs: {body['pairs']}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "eval.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _parse_pk_combos(text: str) -> list[tuple[int, int]]:
    combos = []
    for chunk in text.split(","):
        parts = chunk.lower().split("x")
        if len(parts) != 2:
            raise ConfigError(f"bad PK combo {chunk!r}; expected the form 12x2")
        try:
            combos.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ConfigError(f"bad PK combo {chunk!r}; expected the form 12x2") from None
    return combos


def cmd_bench(args: argparse.Namespace) -> int:
    config = _build_run_config(args, "runs/bench")
    sweep: dict = {"kind": args.sweep, "seeds": [int(s) for s in args.seeds.split(",") if s != ""]}
    if args.sweep == "strategies":
        names = args.strategies if args.strategies is not None else ",".join(STRATEGY_NAMES)
        sweep["strategies"] = [s for s in names.split(",") if s]
    elif args.sweep == "pk":
        if not args.pk_combos:
            raise ConfigError("pk sweep needs --pk-combos, e.g. --pk-combos 12x2,8x3")
        sweep["pk_combos"] = _parse_pk_combos(args.pk_combos)
    else:
        names = args.methods if args.methods is not None else ",".join(METHOD_NAMES)
        sweep["methods"] = [m for m in names.split(",") if m]
    SweepSpec.model_validate(sweep)  # fail fast client-side
    resp = _post(
        args.server,
        "/runs/bench",
        {"config": config.model_dump(mode="json"), "sweep": sweep},
    )
    if resp.status_code != 200:
        return _handle_failure(resp)
    body = resp.json()
    print(f"{len(body['rows'])} runs -> {body['csv_path']}")
    for row in body["rows"]:
        print(f"  {row['cell']} seed={row['seed']}: verif_acc={row['verif_acc']}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("tripletmine.service.app:app", host=args.host, port=args.port)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run config JSON file")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--server", default=None, help="service URL; default runs in-process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripletmine",
        description="Triplet-loss metric learning with hard-example mining.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("pretrain", help="softmax pretraining; writes a checkpoint")
    _add_common(pre)
    pre.add_argument("--dataset-csv", help="dataset CSV (label,x_0,...); default synthetic")
    pre.add_argument("--lr", type=float, default=None)
    pre.add_argument("--iterations", type=int, default=None)
    pre.add_argument("--checkpoint-out", default=None)
    pre.set_defaults(func=cmd_pretrain)

    fin = sub.add_parser("finetune", help="triplet-loss finetuning from a checkpoint")
    _add_common(fin)
    fin.add_argument("--dataset-csv", help="dataset CSV (label,x_0,...); default synthetic")
    fin.add_argument("--strategy", choices=STRATEGY_NAMES, default=None)
    fin.add_argument("--method", choices=METHOD_NAMES, default=None)
    fin.add_argument("--pool-window", dest="pool_window", type=int, default=None)
    fin.add_argument("--margin", type=float, default=None)
    fin.add_argument("--lr", type=float, default=None)
    fin.add_argument("--iterations", type=int, default=None)
    fin.add_argument("--checkpoint", default=None, help="pretrained checkpoint to start from")
    fin.add_argument("--checkpoint-out", default=None)
    fin.add_argument("--from-scratch", action="store_true", help="start from random weights")
    fin.set_defaults(func=cmd_finetune)

    mn = sub.add_parser("mine", help="mine triplets from a feature CSV")
    mn.add_argument("--features", required=True, help="feature CSV (label,x_0,...)")
    mn.add_argument("--strategy", choices=STRATEGY_NAMES, default="all")
    mn.add_argument("--margin", type=float, default=0.2)
    mn.add_argument("--seed", type=int, default=None)
    mn.add_argument("--raw", action="store_true", help="skip L2 normalization of the features")
    mn.add_argument("--out", default=None, help="output triplet CSV (default triplets.csv)")
    mn.add_argument("--server", default=None, help="service URL; default runs in-process")
    mn.set_defaults(func=cmd_mine)

    ev = sub.add_parser("eval", help="pair-verification accuracy of a checkpoint")
    _add_common(ev)
    ev.add_argument("--dataset-csv", help="dataset CSV (label,x_0,...); default synthetic")
    ev.add_argument("--checkpoint", required=True)
    ev.set_defaults(func=cmd_eval)

    bn = sub.add_parser("bench", help="comparison sweeps over strategies, PK combos or methods")
    _add_common(bn)
    bn.add_argument("--dataset-csv", help="dataset CSV (label,x_0,...); default synthetic")
    bn.add_argument("--sweep", choices=("strategies", "pk", "methods"), required=True)
    bn.add_argument("--strategies", default=None, help="comma list; default all five")
    bn.add_argument("--pk-combos", dest="pk_combos", default=None, help="e.g. 12x2,8x3,4x6,2x12")
    bn.add_argument("--methods", default=None, help="comma list; default all three")
    bn.add_argument("--seeds", default="0", help="comma list of run seeds")
    bn.add_argument("--checkpoint", default=None, help="shared pretrained checkpoint")
    bn.add_argument("--from-scratch", action="store_true")
    bn.set_defaults(func=cmd_bench)

    sv = sub.add_parser("serve", help="start the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    sv.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            print(f"config error at {loc}: {err['msg']}", file=sys.stderr)
        return EXIT_CONFIG
    except httpx.HTTPError as exc:
        print(f"error talking to service: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # runtime failure inside an in-process run
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
