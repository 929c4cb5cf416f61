"""``threshattn`` command line: generate / run / verify / bench.

Exit codes: 0 success, 1 usage error (bad flags, invalid spec, unreadable
file, size guard), 2 verification failure (goodness violated, a bound fails,
or random_embed could not produce a good instance).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import bench as benchmod
from .brute import brute_force_support
from .container import ContainerError, load, save
from .grover import GroverConfig, build_support_grover
from .hsr import build_support_hsr
from .instances import GenerationError, Instance, InstanceSpec, generate
from .ledger import QueryCostLedger
from .linalg import check_goodness
from .reference import DENSE_GUARD, exact_attention
from .sparse import build_B, certify, error_report, sparse_attention

RUN_SCHEMA = 1
METHODS = ("exact", "brute", "hsr", "grover-sampled", "grover-analytic")
EXIT_USAGE = 1
EXIT_VERIFY = 2
_DEFAULT_ETA = object()   # 0.01 for gram_exact, measured for random_embed


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _eta(text: str):
    if text == "measured":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'measured', got {text!r}") from None


def _spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, help="sequence length (>= 2)")
    p.add_argument("--d", type=int, help="embedding dimension (random_embed; gram_exact uses d = n)")
    p.add_argument("--k", type=int, help="per-row support bound")
    p.add_argument("--tau", type=float, help="threshold (default 2 ln n)")
    p.add_argument("--eta", type=_eta, default=_DEFAULT_ETA, help="off-support bound, or 'measured' for random_embed")
    p.add_argument("--mode", choices=("gram_exact", "random_embed"), default="gram_exact")
    p.add_argument("--seed", type=int, default=0)


def _spec_from(args) -> InstanceSpec:
    if args.n is None or args.k is None:
        raise UsageError("--n and --k are required to generate an instance")
    eta = args.eta
    if eta is _DEFAULT_ETA:
        eta = None if args.mode == "random_embed" else 0.01
    try:
        return InstanceSpec(n=args.n, k=args.k, tau=args.tau, eta=eta, seed=args.seed,
                            mode=args.mode, d=args.d).resolved()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _instance(args) -> Instance:
    if args.instance:
        try:
            return load(args.instance)
        except (OSError, ContainerError) as exc:
            raise UsageError(f"cannot read {args.instance}: {exc}") from None
    return generate(_spec_from(args))


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def checksum(m: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(m, dtype="<f8").tobytes()).hexdigest()


def find_supports(inst: Instance, method: str, seed: int, ledger: QueryCostLedger):
    q, k_mat, tau = inst.q, inst.k_mat, inst.spec.tau
    if method == "brute":
        return brute_force_support(q, k_mat, tau, ledger)
    if method == "hsr":
        return build_support_hsr(q, k_mat, tau, ledger)
    if method in ("grover-sampled", "grover-analytic"):
        cfg = GroverConfig(mode=method.split("-", 1)[1], seed=seed)
        return build_support_grover(q, k_mat, tau, cfg, ledger)
    raise UsageError(f"unknown method {method!r}")


def run_record(inst: Instance, method: str, seed: int) -> dict:
    spec = inst.spec
    lg = QueryCostLedger()
    t0 = time.perf_counter()
    record = {"schema": RUN_SCHEMA, "method": method, "n": inst.n, "d": spec.d, "k": spec.k,
              "tau": spec.tau, "eta": spec.eta, "seed": seed, "support_match": None,
              "error": None, "note": None}
    if method == "exact":
        out = exact_attention(inst.q, inst.k_mat, inst.v, lg).matrix
        b = None
    else:
        support = find_supports(inst, method, seed, lg)
        record["support_match"] = support.same_as(inst.truth)
        b = build_B(support, spec.tau)
        out = sparse_attention(b, inst.v, lg).matrix
    wall = (time.perf_counter() - t0) * 1e3
    record["checksum"] = checksum(out)
    record["ledger"] = lg.to_json()
    record["wall_ms"] = round(wall, 3) if os.environ.get(benchmod.WALLCLOCK_ENV) == "1" else None
    if b is not None:
        if inst.n > DENSE_GUARD:
            record["note"] = f"dense comparison skipped: n > {DENSE_GUARD}"
        else:
            rep = check_goodness(inst.q, inst.k_mat, spec.tau, spec.k, spec.eta)
            if rep.is_good:
                record["error"] = error_report(inst.q, inst.k_mat, inst.v, b, spec.eta, k=spec.k).to_json()
            else:
                record["note"] = "dense comparison skipped: " + "; ".join(rep.failures())
    return record


def cmd_generate(args) -> int:
    if not args.out:
        raise UsageError("generate needs --out")
    spec = _spec_from(args)
    try:
        inst = generate(spec)
    except GenerationError as exc:
        print(f"generate: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    save(inst, args.out)
    print(_dump(inst.goodness.to_json()))
    return 0


def cmd_run(args) -> int:
    inst = _instance(args)
    rec = run_record(inst, args.method, args.seed)
    _emit(_dump(rec) + "\n", args.out)
    return 0


def cmd_verify(args) -> int:
    inst = _instance(args)
    spec = inst.spec
    if inst.n > DENSE_GUARD:
        raise UsageError(f"verify needs n <= {DENSE_GUARD}, got n={inst.n}")
    rep = check_goodness(inst.q, inst.k_mat, spec.tau, spec.k, spec.eta)
    if not rep.is_good:
        print("REFUSED instance is not (tau, k)-good: " + "; ".join(rep.failures()))
        return EXIT_VERIFY
    b = build_B(brute_force_support(inst.q, inst.k_mat, spec.tau), spec.tau)
    checks = certify(inst.q, inst.k_mat, inst.v, b, spec.eta, k=spec.k)
    lines = []
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append((f"{status} {c.name}: measured={c.measured!r} bound={c.bound!r} "
                      f"slack={c.slack!r} margin={c.margin!r}"))
    failed = sum(not c.passed for c in checks)
    lines.append(f"{'FAILED' if failed else 'OK'} {len(checks) - failed}/{len(checks)} checks passed")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_VERIFY if failed else 0


def cmd_bench(args) -> int:
    try:
        grid = benchmod.parse_grid(args.grid)
        records = benchmod.run_grid(grid, args.repeats, args.seed)
    except benchmod.GridError as exc:
        raise UsageError(str(exc)) from None
    except GenerationError as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    _emit(benchmod.to_csv(records, benchmod.summarize(records)), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="threshattn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a seeded instance container")
    _spec_flags(g)
    g.add_argument("--out", help="container path")
    g.set_defaults(fn=cmd_generate)

    for name, fn, helptext in (("run", cmd_run, "run one pipeline, print a JSON record"),
                               ("verify", cmd_verify, "certify every error bound on an instance")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("instance", nargs="?", help="container path (else generated from spec flags)")
        _spec_flags(s)
        s.add_argument("--out", help="also write the output to this file")
        if name == "run":
            s.add_argument("--method", choices=METHODS, required=True)
        s.set_defaults(fn=fn)

    b = sub.add_parser("bench", help="scaling grid, CSV with a regression summary")
    b.add_argument("--grid", help="e.g. 'n=2^8..2^13;k=8;d=16;method=brute,grover-sampled;rows=32'")
    b.add_argument("--repeats", type=int, default=3, help="seeds per grid point")
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--out", help="also write the CSV to this file")
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"threshattn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
