"""Command-line front end: ``lagp predict``, ``lagp benchmark`` and ``lagp gen``.

Exit codes: 0 on success, 1 when some prediction locations failed
numerically, 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time

import numpy as np

from .data import LhsSpec, borehole, gp_sample_path, lhs_sample
from .emulate import EmulationJob, emulate, fidelity_schedule
from .errors import LagpError
from .gp import DEFAULT_ETA, Design, Hyperparameters
from .local import LocalDesignParams

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class InputError(Exception):
    """Bad input file or flag; reported on stderr with exit code 2."""


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _parse_header(path: str, header: list[str], allow_y: bool, require_y: bool) -> tuple[int, bool]:
    names = [h.strip() for h in header]
    has_y = bool(names) and names[-1] == "y"
    if require_y and not has_y:
        raise InputError(f"{path}:1: header must end with column 'y'")
    if has_y and not allow_y:
        raise InputError(f"{path}:1: unexpected column 'y'")
    xs = names[:-1] if has_y else names
    expected = [f"x{i + 1}" for i in range(len(xs))]
    if not xs or xs != expected:
        want = "x1..xp,y" if require_y else "x1..xp"
        raise InputError(f"{path}:1: header must be {want}, got {','.join(names)}")
    return len(xs), has_y


def read_table(path: str, *, require_y: bool, allow_y: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Read an ``x1..xp[,y]`` CSV into (inputs, responses or None)."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        except csv.Error as exc:
            raise InputError(f"{path}:1: {exc}") from None
        p, has_y = _parse_header(path, header, allow_y, require_y)
        width = p + has_y
        rows = []
        try:
            for row in reader:
                line = reader.line_num
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != width:
                    raise InputError(f"{path}:{line}: expected {width} fields, got {len(row)}")
                try:
                    vals = [float(c) for c in row]
                except ValueError:
                    raise InputError(f"{path}:{line}: non-numeric field") from None
                if not all(math.isfinite(v) for v in vals):
                    raise InputError(f"{path}:{line}: non-finite value")
                rows.append(vals)
        except csv.Error as exc:
            raise InputError(f"{path}:{reader.line_num}: {exc}") from None
    if not rows:
        raise InputError(f"{path}: no data rows")
    A = np.array(rows, dtype=np.float64)
    return (A[:, :p], A[:, p]) if has_y else (A, None)


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from None


def _default_workers() -> str:
    return os.environ.get("LAGP_WORKERS", "1")


def _workers(text: str) -> list[int]:
    try:
        vals = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise InputError(f"--workers must be positive integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise InputError(f"--workers must be positive integers, got {text!r}")
    return vals


def _params(args, n: int, n_close: int | None) -> LocalDesignParams:
    return LocalDesignParams(
        n0=args.n0, n=n, n_close=n_close, theta0=args.theta0,
        eta=args.eta, stages=args.stages, method=args.method,
    )


def cmd_predict(args) -> int:
    X, y = read_table(args.design, require_y=True)
    P, P_y = read_table(args.pred, require_y=False)
    if P.shape[1] != X.shape[1]:
        raise InputError(f"{args.pred}: {P.shape[1]} input columns, design has {X.shape[1]}")
    workers = _workers(args.workers)
    if len(workers) != 1:
        raise InputError("predict takes a single --workers value")
    chunk = None
    if args.chunk_offset is not None or args.chunk_len is not None:
        off = args.chunk_offset or 0
        length = args.chunk_len if args.chunk_len is not None else P.shape[0] - off
        chunk = (off, length)
    design = Design(X, y)
    job = EmulationJob(
        design, P, _params(args, args.n, args.close),
        workers=workers[0], backend_mix=args.backend_mix, chunk=chunk,
    )
    start, stop = job.window()
    res = emulate(job)

    out, close = _open_out(args.out)
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(P.shape[1])]
                   + ["mean", "scale2", "dof", "variance", "theta_hat", "n_chosen"])
        for s in range(len(res)):
            pred = res.predictions[s]
            xs = [_fmt(v) for v in P[start + s]]
            if pred is None:
                w.writerow(xs + ["nan"] * 5 + ["0"])
            else:
                w.writerow(xs + [_fmt(pred.mean), _fmt(pred.scale2), str(int(pred.dof)),
                                 _fmt(pred.variance), _fmt(res.per_location_theta[s]),
                                 str(len(res.chosen_indices[s]))])
    finally:
        if close:
            out.close()

    t = res.timing
    print(f"predicted {len(res)} locations in {t['total']:.2f}s "
          f"(design search {t['design']:.2f}s, mle {t['mle']:.2f}s); "
          f"{res.n_failed} failed", file=sys.stderr)
    for s, err in enumerate(res.errors):
        if err is not None:
            print(f"location {start + s}: {err}", file=sys.stderr)
    if P_y is not None:
        ok = np.array([p is not None for p in res.predictions])
        if ok.any():
            mse = float(np.mean((res.mean[ok] - P_y[start:stop][ok]) ** 2))
            print(f"mse={_fmt(mse)}", file=sys.stderr)
    return EXIT_PARTIAL if res.n_failed else EXIT_OK


def _seeds(seed: int, N: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence([seed, N]).generate_state(2, dtype=np.uint64)
    return int(a), int(b)


def cmd_benchmark(args) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"--sizes must be a comma list of integers, got {args.sizes!r}") from None
    if not sizes or any(N < 1000 for N in sizes):
        raise InputError("--sizes entries must be at least 1000")
    workers = _workers(args.workers)
    out, close = _open_out(args.out)
    failed = 0
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["N", "n", "n_close", "workers", "seconds", "mse"])
        for N in sizes:
            s_design, s_pred = _seeds(args.seed, N)
            X = lhs_sample(LhsSpec(N, 8, s_design))
            P = lhs_sample(LhsSpec(N, 8, s_pred))
            design, P_y = Design(X, borehole(X)), borehole(P)
            n, n_close = fidelity_schedule(N)
            if args.n is not None:
                n = args.n
            if args.close is not None:
                n_close = args.close
            params = _params(args, n, n_close)
            for nw in workers:
                t0 = time.perf_counter()
                res = emulate(EmulationJob(design, P, params, workers=nw, backend_mix=args.backend_mix))
                secs = time.perf_counter() - t0
                failed += res.n_failed
                mse = float(np.nanmean((res.mean - P_y) ** 2))
                w.writerow([N, n, n_close, nw, f"{secs:.3f}", _fmt(mse)])
                out.flush()
    finally:
        if close:
            out.close()
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_gen(args) -> int:
    if args.n < 1:
        raise InputError(f"--n must be positive, got {args.n}")
    if args.response == "borehole" and args.p != 8:
        raise InputError(f"borehole responses need --p 8, got {args.p}")
    if args.p < 1:
        raise InputError(f"--p must be positive, got {args.p}")
    s_design, s_resp = _seeds(args.seed, 0)
    X = lhs_sample(LhsSpec(args.n, args.p, s_design))
    if args.response == "borehole":
        y = borehole(X)
    else:
        y = gp_sample_path(X, Hyperparameters(args.theta, args.eta), s_resp)
    out, close = _open_out(args.out)
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(args.p)] + ["y"])
        for row, v in zip(X, y):
            w.writerow([_fmt(c) for c in row] + [_fmt(v)])
    finally:
        if close:
            out.close()
    return EXIT_OK


def _add_local_flags(sp, n_default):
    sp.add_argument("--n", type=int, default=n_default, help="local design size")
    sp.add_argument("--n0", type=int, default=6, help="nearest neighbours to start from")
    sp.add_argument("--close", type=int, default=None, help="candidate pool size N'")
    sp.add_argument("--theta0", type=float, default=None, help="starting lengthscale")
    sp.add_argument("--eta", type=float, default=DEFAULT_ETA, help="nugget")
    sp.add_argument("--stages", type=int, default=2)
    sp.add_argument("--method", choices=("alc", "nn"), default="alc")
    sp.add_argument("--workers", default=_default_workers(),
                    help="worker processes (default $LAGP_WORKERS or 1)")
    sp.add_argument("--backend-mix", type=float, default=0.8,
                    help="share of locations scored with the batch evaluator")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lagp", description="Local approximate GP emulation.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("predict", help="predict at every row of a CSV")
    sp.add_argument("--design", required=True, help="CSV with header x1..xp,y")
    sp.add_argument("--pred", required=True, help="CSV with header x1..xp (optional trailing y)")
    sp.add_argument("--out", default="-", help="output CSV (default stdout)")
    _add_local_flags(sp, 50)
    sp.add_argument("--chunk-offset", type=int, default=None)
    sp.add_argument("--chunk-len", type=int, default=None)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("benchmark", help="borehole accuracy and timing sweep")
    sp.add_argument("--sizes", default="1000,2000,4000")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="-")
    _add_local_flags(sp, None)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("gen", help="write a Latin hypercube design with responses")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--response", choices=("borehole", "gp"), default="borehole")
    sp.add_argument("--theta", type=float, default=0.5, help="lengthscale for --response gp")
    sp.add_argument("--eta", type=float, default=DEFAULT_ETA)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"lagp {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LagpError as exc:
        # invalid parameter combinations surface here before any work starts
        print(f"lagp {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
