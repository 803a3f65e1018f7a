"""Command-line front end.

Subcommands: simulate-paths, yield-curve, bond-curve, calibrate, price,
mc-check. Exit codes: 0 success, 1 usage error, 2 calibration failure
(no-arbitrage or constraint), 3 statistical failure.

CSV column orders are fixed:

* simulate-paths: ``path_id,time,xi,pi,bond_price``
* yield-curve: ``sigma,T,yield``
* bond-curve: ``T,bond_price,forward_rate,yield``
* calibrate input: ``maturity,yield`` with an optional ``slope`` column
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import derivatives as drv
from . import fx
from .exceptions import CalibrationError, CryptoRatesError, UnsupportedModelError
from .kernels import (
    Bessel3,
    Bessel4,
    BesselN,
    ComplexBessel3,
    SovereignGBM,
    initial_state,
    model_from_dict,
)
from .mc_oracle import Z_THRESHOLD, TestReport, kernel_values, martingale_test, price_claim, price_path_claim, strictness_test
from .numerics import QuadratureSpec
from .stochastic import DEFAULT_SEED, RngStream, VolatilityCurve, simulate_paths
from .term_structure import (
    bessel4_curve,
    bond_price_from_variance,
    calibrate_bessel3,
    calibrate_bessel4,
    forward_rate,
    yield_curve,
)

EXIT_OK, EXIT_USAGE, EXIT_CALIBRATION, EXIT_STATISTICAL = 0, 1, 2, 3
T_ZERO = 1e-8

# instrument kind -> model families it can be priced under
CAPABILITIES = {
    "digital": ("bessel3",),
    "caplet": ("bessel3",),
    "bond-call": ("bessel4",),
    "bond-put": ("bessel4",),
    "fx-crypto-crypto": ("bessel3", "bessel4", "bessel-n", "complex-bessel3"),
    "fx-crypto-usd": ("bessel3",),
}


class UsageError(Exception):
    pass


# --- argument parsing -----------------------------------------------------


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=d(DEFAULT_SEED), help=f"RNG seed (default {DEFAULT_SEED})")
    g.add_argument("--samples", type=int, default=d(100_000), help="Monte Carlo sample count (default 1e5)")
    g.add_argument("--out", type=Path, default=d(None), help="output file (default stdout)")
    g.add_argument("--format", choices=("csv", "json"), default=d(None), help="output format")
    g.add_argument("--tol", type=float, default=d(None), help="tolerance override (quadrature rel_tol / identity check)")
    return p


def _model_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model")
    g.add_argument("--model", default="bessel3", help="bessel3 | bessel4 | bessel-n:<n> | complex-bessel3")
    g.add_argument("--model-file", type=Path, help="model JSON, overrides --model")
    g.add_argument("--delta", default="0.05,0,0", help="complex-bessel3 imaginary centre (comma list)")
    g.add_argument("--sigma", type=float, help="constant volatility")
    g.add_argument("--vol-file", type=Path, help="volatility curve JSON, overrides --sigma")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cryptorates",
        description="Zero-short-rate term structures from reciprocal Bessel kernels.",
        parents=[_global_flags(True)],
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    glob, model = _global_flags(False), _model_flags()

    sp = sub.add_parser("simulate-paths", parents=[glob, model], help="sample factor paths")
    sp.add_argument("--paths", type=int, default=6)
    sp.add_argument("--horizon", type=float, default=2.0, help="bond maturity and last grid time")
    sp.add_argument("--step", type=float, default=0.01)

    yc = sub.add_parser("yield-curve", parents=[glob, model], help="initial yield curves for several sigmas")
    yc.add_argument("--sigmas", default="0.3,0.6,0.9", help="comma list of constant volatilities")
    yc.add_argument("--t-max", type=float, default=50.0)
    yc.add_argument("--step", type=float, default=0.1)

    bc = sub.add_parser("bond-curve", parents=[glob, model], help="initial bond, forward and yield curves")
    bc.add_argument("--t-max", type=float, default=10.0)
    bc.add_argument("--step", type=float, default=0.1)

    ca = sub.add_parser("calibrate", parents=[glob, model], help="volatility curve from yield quotes")
    ca.add_argument("--input", type=Path, required=True, help="CSV with maturity,yield[,slope]")

    pr = sub.add_parser("price", parents=[glob, model], help="price an instrument")
    pr.add_argument("--instrument", required=True, help="instrument JSON or a path to one")
    pr.add_argument("--method", default=None, help="closed-form | series | series(k) | quadrature | mc | radial-quadrature")
    pr.add_argument("--check", action="store_true", help="run the Monte Carlo oracle alongside")
    pr.add_argument("--identity", action="store_true", help="report the limiting-case identity where one exists")

    mc = sub.add_parser("mc-check", parents=[glob, model], help="martingale and strictness checks")
    mc.add_argument("--maturity", type=float, default=2.0)
    mc.add_argument("--inner", type=float, default=1.0)
    mc.add_argument("--corrupt-bond", type=float, default=None, help=argparse.SUPPRESS)
    return parser


# --- shared helpers -------------------------------------------------------


def _family(model) -> str:
    if isinstance(model, ComplexBessel3):
        return "complex-bessel3"
    if isinstance(model, BesselN):
        return {3: "bessel3", 4: "bessel4"}.get(model.order, "bessel-n")
    return type(model).__name__


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def _load_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read JSON from {path}: {exc}") from exc


def resolve_model(args):
    if args.model_file:
        return model_from_dict(_load_json(args.model_file))
    name = args.model
    if name == "bessel3":
        return Bessel3()
    if name == "bessel4":
        return Bessel4()
    if name.startswith("bessel-n:"):
        try:
            order = int(name.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad model {name!r}") from exc
        return model_from_dict({"model": "bessel-n", "order": order})
    if name == "complex-bessel3":
        return ComplexBessel3.normalized((0.0, 0.0, 1.0), tuple(_floats(args.delta)))
    raise UsageError(f"unknown model {name!r}; use bessel3 | bessel4 | bessel-n:<n> | complex-bessel3")


def resolve_curve(args, default_sigma: float) -> VolatilityCurve:
    if args.vol_file:
        return VolatilityCurve.from_dict(_load_json(args.vol_file))
    return VolatilityCurve.constant(args.sigma if args.sigma is not None else default_sigma)


def _default_sigma(model) -> float:
    return 0.6 if _family(model) == "bessel4" else 0.75


def _grid(t_max: float, step: float) -> np.ndarray:
    if not (t_max > 0 and step > 0):
        raise UsageError("grid bounds must be positive")
    n = int(round(t_max / step))
    return np.linspace(0.0, n * step, n + 1)


def _emit(args, header, rows, json_obj=None):
    fmt = args.format or ("json" if json_obj is not None and header is None else "csv")
    if fmt == "json":
        if json_obj is None:
            json_obj = [dict(zip(header, r)) for r in rows]
        text = json.dumps(json_obj, indent=2) + "\n"
    else:
        if header is None:
            raise UsageError("this command only writes JSON")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# --- commands -------------------------------------------------------------


def cmd_simulate_paths(args) -> int:
    model = resolve_model(args)
    curve = resolve_curve(args, _default_sigma(model))
    if args.paths < 0:
        raise UsageError("--paths must be >= 0")
    grid = _grid(args.horizon, args.step)
    T = float(grid[-1])
    init = initial_state(model)
    paths = simulate_paths(curve, init, grid[1:], args.paths, RngStream(args.seed))
    closed = _family(model) != "bessel-n"
    rows = []
    for p in range(args.paths):
        X = np.vstack([init.vector, paths[p]])
        pi, _ = kernel_values(model, X)
        xi = np.linalg.norm(X, axis=1)
        if closed:
            S = curve.variance_to(T) - curve.variance_to(grid)
            bonds = [float(bond_price_from_variance(model, X[k], max(S[k], 0.0))) for k in range(grid.size)]
        else:
            bonds = [""] * grid.size
        rows.extend([p, float(grid[k]), float(xi[k]), float(pi[k]), bonds[k]] for k in range(grid.size))
    _emit(args, ["path_id", "time", "xi", "pi", "bond_price"], rows)
    return EXIT_OK


def cmd_yield_curve(args) -> int:
    model = resolve_model(args)
    grid = _grid(args.t_max, args.step)
    Tq = np.where(grid == 0, T_ZERO, grid)
    rows = []
    for s in _floats(args.sigmas):
        Y = yield_curve(model, VolatilityCurve.constant(s), Tq)
        rows.extend([s, float(T), float(y)] for T, y in zip(grid, Y))
    _emit(args, ["sigma", "T", "yield"], rows)
    return EXIT_OK


def cmd_bond_curve(args) -> int:
    model = resolve_model(args)
    curve = resolve_curve(args, _default_sigma(model))
    grid = _grid(args.t_max, args.step)
    Tq = np.where(grid == 0, T_ZERO, grid)
    state = initial_state(model)
    P = bond_price_from_variance(model, state, curve.variance_to(Tq))
    f = forward_rate(model, state, curve, Tq)
    Y = yield_curve(model, curve, Tq)
    rows = [[float(T), float(p), float(r), float(y)] for T, p, r, y in zip(grid, P, f, Y)]
    _emit(args, ["T", "bond_price", "forward_rate", "yield"], rows)
    return EXIT_OK


def _read_yield_csv(path: Path):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = [f.strip() for f in (reader.fieldnames or [])]
            if fields[:2] != ["maturity", "yield"]:
                raise UsageError("calibration CSV needs columns maturity,yield[,slope]")
            T, Y, S = [], [], []
            for row in reader:
                row = {k.strip(): v for k, v in row.items()}
                T.append(float(row["maturity"]))
                Y.append(float(row["yield"]))
                if "slope" in fields:
                    S.append(float(row["slope"]))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(f"malformed calibration CSV: {exc}") from exc
    if not T:
        raise UsageError("calibration CSV has no rows")
    return np.array(T), np.array(Y), (np.array(S) if S else None)


def cmd_calibrate(args) -> int:
    model = resolve_model(args)
    T, Y, slope = _read_yield_csv(args.input)
    order = np.argsort(T, kind="stable")
    T, Y = T[order], Y[order]
    fam = _family(model)
    if fam == "bessel3":
        if np.any(T <= 0):
            raise UsageError("Bessel(3) calibration needs positive maturities")
        curve = calibrate_bessel3(zip(T.tolist(), Y.tolist()))
        out = curve.to_dict()
    elif fam == "bessel4":
        if slope is None:
            if T.size < 3:
                raise UsageError("need a slope column or at least three rows")
            slope = np.gradient(Y, T, edge_order=2)
        else:
            slope = slope[order]
        sig2 = calibrate_bessel4(T, Y, slope)
        out = bessel4_curve(T[T > 0], sig2).to_dict()
        out["sigma_sq"] = sig2.tolist()
    else:
        raise UnsupportedModelError(f"calibration is available for bessel3 and bessel4, not {fam}")
    _emit(args, None, None, out)
    return EXIT_OK


def _instrument(text: str) -> dict:
    text = text.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad instrument JSON: {exc}") from exc
    return _load_json(Path(text))


def _capability_error(kind, fam):
    lines = [f"instrument {kind!r} is not available under model {fam!r}", "capability matrix:"]
    lines += [f"  {k:<18} {', '.join(v)}" for k, v in CAPABILITIES.items()]
    return UnsupportedModelError("\n".join(lines))


def _z(quote_value, est) -> float:
    return (quote_value - est.mean) / est.std_err if est.std_err > 0 else 0.0


def cmd_price(args) -> int:
    model = resolve_model(args)
    curve = resolve_curve(args, _default_sigma(model))
    data = _instrument(args.instrument)
    try:
        kind, spec = drv.instrument_from_dict(data)
    except CryptoRatesError as exc:
        raise UsageError(str(exc)) from exc
    fam = _family(model)
    if fam not in CAPABILITIES[kind]:
        raise _capability_error(kind, fam)
    rng = RngStream(args.seed)
    n = args.samples
    quad = QuadratureSpec(0.0, 1.0, 1e-14, args.tol or 1e-12)
    method = args.method
    result: dict = {}
    mc = None

    if kind == "digital":
        if method not in (None, "closed-form", "mc"):
            raise UsageError("digital supports closed-form or mc")
        S = curve.variance_to(spec.T) - curve.variance_to(spec.t)
        payoff = lambda X: (np.asarray(bond_price_from_variance(model, X, S)) > spec.K).astype(float)  # noqa: E731
        if method == "mc":
            est = price_claim(model, curve, payoff, spec.t, n, rng, vectorized=True)
            quote = drv.PriceQuote(est.mean, "mc", est.std_err)
        else:
            quote = drv.PriceQuote(drv.digital_call_price(model, None, spec, curve), "closed-form", 0.0)
        if args.check:
            mc = price_claim(model, curve, payoff, spec.t, n, rng, vectorized=True)
        if args.identity:
            result["identity"] = {"name": "P_0t", "target": float(bond_price_from_variance(model, initial_state(model), curve.variance_to(spec.t)))}

    elif kind == "caplet":
        K, N = drv.strike_notional(spec)
        S = curve.variance_to(spec.T) - curve.variance_to(spec.t)
        tau = spec.T - spec.t

        def pay(states):
            P = np.asarray(bond_price_from_variance(model, states[0], S))
            return spec.X * np.maximum((1.0 / P - 1.0) / tau - spec.R, 0.0)

        if method == "mc":
            est = price_path_claim(model, curve, pay, [spec.t, spec.T], n, rng)
            quote = drv.PriceQuote(est.mean, "mc", est.std_err)
        elif method in (None, "quadrature", "closed-form"):
            quote = drv.caplet_price(model, spec, curve, quad=quad)
        else:
            raise UsageError("caplet supports quadrature or mc")
        if args.check:
            mc = price_path_claim(model, curve, pay, [spec.t, spec.T], n, rng)
        if args.identity:
            st = initial_state(model)
            P0t = float(bond_price_from_variance(model, st, curve.variance_to(spec.t)))
            P0T = float(bond_price_from_variance(model, st, curve.variance_to(spec.T)))
            result["identity"] = {"name": "X(P_0t-P_0T)/(T-t) at R=0", "target": spec.X * (P0t - P0T) / tau}

    elif kind in ("bond-call", "bond-put"):
        S = curve.variance_to(spec.T) - curve.variance_to(spec.t)
        sign = 1.0 if kind == "bond-call" else -1.0
        payoff = lambda X: np.maximum(sign * (np.asarray(bond_price_from_variance(model, X, S)) - spec.K), 0.0)  # noqa: E731
        if method == "mc":
            est = price_claim(model, curve, payoff, spec.t, n, rng, vectorized=True)
            quote = drv.PriceQuote(est.mean, "mc", est.std_err)
        else:
            fn = drv.bond_call_b4 if kind == "bond-call" else drv.bond_put_b4
            m = "quadrature" if method in (None, "closed-form") else method
            try:
                quote = fn(spec, curve, m, model=model, quad=quad)
                if args.identity:
                    other = "series" if m == "quadrature" else "quadrature"
                    result["identity"] = {"name": f"{other} method", "target": fn(spec, curve, other, model=model).value}
            except CryptoRatesError as exc:
                if "method" in str(exc):
                    raise UsageError(str(exc)) from exc
                raise
        if args.check:
            mc = price_claim(model, curve, payoff, spec.t, n, rng, vectorized=True)

    elif kind == "fx-crypto-crypto":
        try:
            market = fx.MultiCurrencyMarket.from_dict(data["market"])
            i, j, T, K = data["i"], data["j"], float(data["T"]), float(data["K"])
        except KeyError as exc:
            raise UsageError(f"fx-crypto-crypto needs market, i, j, T, K ({exc})") from exc
        quote = fx.crypto_crypto_call_mc(market, i, j, T, K, n, rng)
        if args.identity:
            ci = market[i]
            P = float(bond_price_from_variance(ci.model, initial_state(ci.model), ci.curve.variance_to(T)))
            result["identity"] = {"name": "S0 P^i_0T at K=0", "target": ci.scale / market[j].scale * P}

    else:  # fx-crypto-usd
        try:
            usd = SovereignGBM(float(data.get("r", 0.0)), float(data.get("lambda", 0.0)), float(data.get("usd0", 1.0)))
            T, K = float(data["T"]), float(data["K"])
        except KeyError as exc:
            raise UsageError(f"fx-crypto-usd needs T and K ({exc})") from exc
        m = method or "radial-quadrature"
        quote = fx.crypto_usd_call(model, usd, T, K, m, rng, curve=curve, n_samples=n)
        if args.check:
            q = fx.crypto_usd_call_joint_mc(model, usd, T, K, curve=curve, n_samples=n, rng=rng.substream(2**32))
            result["mc"] = {"mean": q.value, "std_err": q.err_est, "z": (quote.value - q.value) / q.err_est}

    result = {**quote.to_dict(), **result}
    if mc is not None:
        result["mc"] = {"mean": mc.mean, "std_err": mc.std_err, "n_samples": mc.n_samples, "z": _z(quote.value, mc)}
    if "identity" in result:
        ident = result["identity"]
        ident["diff"] = quote.value - ident["target"]
    _emit(args, None, None, result)
    if "mc" in result and abs(result["mc"]["z"]) > Z_THRESHOLD:
        return EXIT_STATISTICAL
    return EXIT_OK


def cmd_mc_check(args) -> int:
    model = resolve_model(args)
    curve = resolve_curve(args, _default_sigma(model))
    rng = RngStream(args.seed)
    fam = _family(model)
    reports: list[TestReport] = []
    if fam == "bessel-n":
        est = price_claim(model, curve, lambda X: 1.0, args.maturity, args.samples, rng, vectorized=True)
        gap_z = (1.0 - est.mean) / est.std_err
        reports.append(TestReport("supermartingale", est.mean, 1.0, est.std_err, bool(gap_z > Z_THRESHOLD), {"gap_z": gap_z}))
    else:
        bond_fn = None
        if args.corrupt_bond is not None:
            factor = args.corrupt_bond

            def bond_fn(m, X, S):
                return factor * np.asarray(bond_price_from_variance(m, X, S))

        reports.append(martingale_test(model, curve, args.maturity, args.inner, args.samples, rng.substream(0), bond_fn=bond_fn))
        reports.append(strictness_test(model, curve, args.maturity, args.samples, rng.substream(1)))
    ok = all(r.passed for r in reports)
    _emit(args, None, None, {"pass": ok, "reports": [r.to_dict() for r in reports]})
    if not ok:
        failed = ", ".join(f"{r.name} (z={r.z:.2f})" for r in reports if not r.passed)
        print(f"statistical failure: {failed}", file=sys.stderr)
        return EXIT_STATISTICAL
    return EXIT_OK


COMMANDS = {
    "simulate-paths": cmd_simulate_paths,
    "yield-curve": cmd_yield_curve,
    "bond-curve": cmd_bond_curve,
    "calibrate": cmd_calibrate,
    "price": cmd_price,
    "mc-check": cmd_mc_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        sys.stderr.close()
        return EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as exc:
        where = f" (maturity {exc.maturity})" if exc.maturity is not None else ""
        print(f"calibration error{where}: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except UnsupportedModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CryptoRatesError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
