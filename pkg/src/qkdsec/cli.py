"""Command-line client for thresholds, tables, simulation, and inspection.

By default commands run against an in-process instance of the HTTP
service (no sockets involved); ``--server URL`` points them at a remote
instance instead, and ``qkdsec serve`` starts one.

Exit codes: 0 success, 2 usage error (unknown protocol, bad arguments),
3 numerical failure.  Human-readable output carries 6 significant
digits; ``--format json``/``csv`` carry 15 and omit the timestamp so
reruns are byte-identical.
"""

import argparse
import asyncio
import json
import sys

import httpx

from .schemas import CSV_HEADER

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def request(args, method, path, **kw):
    """One HTTP exchange, in-process unless ``--server`` was given."""
    if args.server:
        with httpx.Client(base_url=args.server, timeout=600.0) as client:
            return client.request(method, path, **kw)

    from httpx import ASGITransport, AsyncClient

    from .service import create_app

    async def go():
        transport = ASGITransport(app=create_app())
        async with AsyncClient(transport=transport, base_url="http://qkdsec") as client:
            return await client.request(method, path, **kw)

    return asyncio.run(go())


def bail(resp):
    detail = resp.json().get("detail", resp.text)
    print(f"error: {detail}", file=sys.stderr)
    return EXIT_NUMERICAL if resp.status_code >= 500 else EXIT_USAGE


def emit(text, out):
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def machine_json(payload):
    """Deterministic JSON: sorted keys, timestamps stripped."""

    def strip(obj):
        if isinstance(obj, dict):
            return {k: strip(v) for k, v in obj.items() if k != "timestamp"}
        if isinstance(obj, list):
            return [strip(v) for v in obj]
        return obj

    return json.dumps(strip(payload), indent=2, sort_keys=True) + "\n"


def threshold_text(rec):
    return (
        f"protocol      {rec['protocol']}\n"
        f"bound         {rec['bound']}\n"
        f"epsilon_star  {rec['epsilon_star']:.6g}\n"
        f"p_star        {rec['p_star']:.6g}\n"
        f"fidelity_star {rec['fidelity_star']:.6g}\n"
    )


def csv_row(rec):
    cells = [rec["protocol"], rec["bound"]] + [
        f"{rec[k]:.15g}" for k in ("epsilon_star", "p_star", "fidelity_star")
    ]
    return ",".join(cells)


def cmd_threshold(args):
    resp = request(
        args, "POST", "/threshold", json={"protocol": args.protocol, "bound": args.bound}
    )
    if resp.status_code != 200:
        return bail(resp)
    rec = resp.json()
    if args.format == "json":
        emit(machine_json(rec), args.out)
    elif args.format == "csv":
        emit(CSV_HEADER + "\n" + csv_row(rec) + "\n", args.out)
    else:
        emit(threshold_text(rec), args.out)
    return 0


def cmd_table(args):
    resp = request(args, "GET", "/table")
    if resp.status_code != 200:
        return bail(resp)
    body = resp.json()
    rows, failures = body["rows"], body.get("failures", {})
    if args.format == "json":
        emit(machine_json(body), args.out)
    elif args.format == "csv":
        emit("\n".join([CSV_HEADER] + [csv_row(r) for r in rows]) + "\n", args.out)
    else:
        lines = [f"{'protocol':<10} {'bound':<8} {'eps*':>9} {'p*':>9} {'F*':>9}"]
        for r in rows:
            lines.append(
                f"{r['protocol']:<10} {r['bound']:<8} "
                f"{r['epsilon_star']:>9.6g} {r['p_star']:>9.6g} {r['fidelity_star']:>9.6g}"
            )
        emit("\n".join(lines) + "\n", args.out)
    for name, msg in failures.items():
        print(f"error: {name}: {msg}", file=sys.stderr)
    return EXIT_NUMERICAL if failures else 0


def cmd_simulate(args):
    payload = {
        "protocol": args.protocol,
        "p": args.p,
        "rounds": args.rounds,
        "seed": args.seed,
        "shuffle": args.shuffle,
    }
    resp = request(args, "POST", "/simulate", json=payload)
    if resp.status_code != 200:
        return bail(resp)
    rec = resp.json()
    if args.format == "json":
        emit(machine_json(rec), args.out)
    else:
        emit(
            f"protocol           {rec['protocol']}\n"
            f"p                  {rec['p']:.6g}\n"
            f"rounds             {rec['rounds']}\n"
            f"sift_successes     {rec['sift_successes']}\n"
            f"mismatches         {rec['mismatches']}\n"
            f"empirical_error    {rec['empirical_error']:.6g}\n"
            f"empirical_success  {rec['empirical_success']:.6g}\n"
            f"analytic_error     {rec['analytic_error']:.6g}\n"
            f"z                  {rec['z']:.6g}\n"
            f"rng                {rec['rng_algorithm']}\n",
            args.out,
        )
    return 0


def cmd_inspect(args):
    resp = request(args, "GET", f"/inspect/{args.protocol}")
    if resp.status_code != 200:
        return bail(resp)
    rec = resp.json()
    if args.format == "json":
        emit(machine_json(rec), args.out)
    else:
        sizes = ",".join(map(str, rec["orbit_sizes"]))
        emit(
            f"protocol         {rec['protocol']}\n"
            f"signals (n, d)   {rec['n']}, {rec['d']}\n"
            f"group order      {rec['group_order']}\n"
            f"aut_t order      {rec['aut_t_order']}\n"
            f"|T|              {rec['t_count']}\n"
            f"orbits           {rec['orbit_count']} (sizes {sizes})\n"
            f"filtered orbits  {rec['filtered_orbits']}\n"
            f"fixed-space dim  {rec['fixed_space_dim']}\n"
            f"default bound    {rec['default_bound']}\n",
            args.out,
        )
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qkdsec",
        description="Secure error-rate thresholds for spherical-code QKD protocols.",
    )
    parser.add_argument("--server", default=None, help="base URL of a running service")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="threshold of one protocol")
    p.add_argument("--protocol", required=True)
    p.add_argument("--bound", choices=["hashing", "css"], default=None)
    p.add_argument("--format", choices=["text", "json", "csv"], default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("table", help="all spherical-code thresholds")
    p.add_argument("--format", choices=["text", "json", "csv"], default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("simulate", help="Monte Carlo protocol run")
    p.add_argument("--protocol", required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--shuffle", action="store_true")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inspect", help="structural counts of a protocol")
    p.add_argument("--protocol", required=True)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
