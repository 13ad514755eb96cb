"""Command-line driver: sample, solve-r, estimate, norm, scan, fit-scaling.

Each subcommand reads a flat key=value config plus a few path overrides,
calls the corresponding library operation, and writes CSV reports (with a
provenance comment carrying the config hash and seed) and matplotlib figures
into the output directory.  Exit code 0 on success; errors print one
machine-readable ``ERROR <code>: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .ef_dynamics import evolve_snapshot_ef
from .estimation import ObservableSpec, estimate_fidelity, estimate_observable, estimate_pauli
from .experiments import (
    build_state,
    fit_variance_scaling,
    parse_config,
    read_table_csv,
    write_csv,
)
from .reconstruction import load_r, save_r, solve_chain
from .shadow_norm import depth_scan, pauli_shadow_norm_from_ef
from .stabilizer import CircuitSpec, PauliString, SnapshotStore, run_protocol


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _provenance(cfg) -> str:
    return f"config_sha256={cfg.hash()} seed={cfg.get('seed', '-')}"


def _parse_d_w(cfg):
    raw = cfg.get("d_w", "2")
    return None if raw in ("exact", "none") else int(raw)


# ---------------------------------------------------------------------------
# observable specs
# ---------------------------------------------------------------------------

def parse_observables(spec: str, n: int, state_label: str, extent_cap: int = 12):
    """Observable strings -> list of (id, kind, payload).

    Forms: ``zk:2`` or ``zk:1..6`` (contiguous Z strings), ``pauli:<expr>``
    with expr like ``0.5*ZZII+1*IXXI`` or a bare Pauli string, and
    ``fidelity:self|ghz|cluster|mixed|file:<path>``.
    """
    kind, _, arg = spec.partition(":")
    if kind == "zk":
        if ".." in arg:
            lo, hi = arg.split("..")
            ks = range(int(lo), int(hi) + 1)
        else:
            ks = [int(arg)]
        out = []
        for k in ks:
            if not 1 <= k <= n:
                raise CliError("bad-observable", f"zk weight {k} outside 1..{n}")
            out.append((f"Z^{k}", "pauli", PauliString.z_string(n, k)))
        return out
    if kind == "pauli":
        terms = []
        for piece in arg.replace("-", "+-").split("+"):
            piece = piece.strip()
            if not piece:
                continue
            if "*" in piece:
                coef_s, _, label = piece.partition("*")
                coef = float(coef_s)
            else:
                coef, label = 1.0, piece
                if label.startswith("-"):
                    coef, label = -1.0, label[1:]
            terms.append((coef, PauliString.from_label(label, n=n)))
        if not terms:
            raise CliError("bad-observable", f"empty Pauli expression {arg!r}")
        if len(terms) == 1 and terms[0][0] == 1.0:
            return [(arg, "pauli", terms[0][1])]
        return [(arg, "terms", ObservableSpec.from_pauli_terms(n, terms, label=arg))]
    if kind == "fidelity":
        if arg == "mixed":
            return [("F(mixed)", "fidelity", ObservableSpec.maximally_mixed(n))]
        label = state_label if arg == "self" else arg
        state = build_state(label, n)
        obs = ObservableSpec.from_stabilizer_state(state, label=f"F({label})",
                                                   extent_cap=extent_cap)
        return [(f"F({label})", "fidelity", obs)]
    raise CliError("bad-observable", f"unknown observable spec {spec!r}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_sample(cfg, out: Path, figures: bool) -> int:
    label = cfg.require("state")
    n = cfg.get_int("n")
    depth = cfg.get_int("L")
    samples = cfg.get_int("samples")
    seed = cfg.get_int("seed", 0)
    state = build_state(label, n)
    store = run_protocol(state, CircuitSpec(n, depth, seed=seed), samples,
                         state_label=label)
    path = out / cfg.get("snapshots_out", f"snapshots_{label}_n{n}_L{depth}.txt")
    store.save(path)
    print(f"wrote {path} ({len(store)} snapshots)")
    return 0


def cmd_solve_r(cfg, out: Path, figures: bool) -> int:
    n = cfg.get_int("n")
    depth = cfg.get_int("L")
    seed = cfg.get_int("seed", 0)
    tol = cfg.get_float("tol", 1e-3)
    r = solve_chain(
        n,
        depth,
        d_w=_parse_d_w(cfg),
        d_r=cfg.get_int("d_r", 6),
        tol=tol,
        max_iters=cfg.get_int("max_iters", 20000),
        seed=seed,
    )
    path = out / cfg.get("r_out", f"r_n{n}_L{depth}.txt")
    save_r(r, path)
    if r.status != "solved":
        print(f"warning: solve unconverged (loss={r.loss:.3e})", file=sys.stderr)
    print(f"wrote {path} (loss={r.loss:.3e}, status={r.status})")
    if figures and r.history:
        from . import figures as figs

        figs.save_loss_history(out / f"solve_loss_n{n}_L{depth}.png", r.history, tol=tol)
    return 0


def _load_inputs(cfg, snapshots, r_file):
    snap_path = snapshots or cfg.get("snapshots")
    r_path = r_file or cfg.get("r_file")
    if not snap_path:
        raise CliError("missing-input", "no snapshot file given (config key 'snapshots')")
    if not r_path:
        raise CliError("missing-input", "no r-file given (config key 'r_file')")
    try:
        store = SnapshotStore.load(snap_path)
    except FileNotFoundError as exc:
        raise CliError("missing-input", f"snapshot file not found: {snap_path}") from exc
    try:
        r = load_r(r_path)
    except FileNotFoundError as exc:
        raise CliError("missing-input", f"r-file not found: {r_path}") from exc
    if store.n != r.n:
        raise CliError("metadata-mismatch",
                       f"snapshots have n={store.n} but r-file has n={r.n}")
    if not math.isinf(r.depth) and int(r.depth) != store.depth:
        raise CliError("metadata-mismatch",
                       f"snapshots have L={store.depth} but r-file has L={int(r.depth)}")
    return store, r


def cmd_estimate(cfg, out: Path, figures: bool, snapshots=None, r_file=None) -> int:
    store, r = _load_inputs(cfg, snapshots, r_file)
    n = store.n
    obs_spec = cfg.require("observable")
    extent_cap = cfg.get_int("extent_cap", 12)
    observables = parse_observables(obs_spec, n, store.state_label, extent_cap)
    agg = cfg.get("aggregation")
    rows = []
    for obs_id, kind, payload in observables:
        if kind == "pauli":
            mode, groups = _parse_aggregation(agg, default="mean")
            res = estimate_pauli(store, r, payload, aggregation=mode, groups=groups)
        elif kind == "terms":
            mode, groups = _parse_aggregation(agg, default="mean")
            res = estimate_observable(store, r, payload, aggregation=mode, groups=groups)
        else:
            _, groups = _parse_aggregation(agg, default="mom:12")
            res = estimate_fidelity(store, r, payload, groups=groups or 12)
        rows.append(
            (obs_id, n, store.depth, res.samples, res.estimate, res.variance,
             res.stderr, _agg_label(res))
        )
    path = out / cfg.get("estimates_out", "estimates.csv")
    write_csv(
        path,
        ["observable_id", "n", "L", "M", "estimate", "variance", "stderr", "aggregation"],
        rows,
        _provenance(cfg),
    )
    print(f"wrote {path} ({len(rows)} observables)")
    if figures:
        from . import figures as figs

        figs.save_estimates(out / "estimates.png", [(r0[0], r0[4], r0[6]) for r0 in rows])
    return 0


def _parse_aggregation(agg, default):
    raw = agg or default
    if raw == "mean":
        return "mean", None
    if raw.startswith("mom"):
        _, _, g = raw.partition(":")
        return "median_of_means", int(g) if g else 12
    raise CliError("bad-aggregation", f"unknown aggregation {raw!r}")


def _agg_label(res) -> str:
    if res.aggregation == "mean":
        return "mean"
    return f"mom:{res.groups}"


def cmd_norm(cfg, out: Path, figures: bool) -> int:
    n = cfg.get_int("n")
    ks = cfg.get_ints("k_values")
    depths = cfg.get_ints("l_values")
    d_w = _parse_d_w(cfg)
    seed = cfg.get_int("seed", 0)
    rows = []
    for ell in depths:
        ef = evolve_snapshot_ef(CircuitSpec(n, ell, seed=seed), d_w=d_w)
        for k in ks:
            norm = pauli_shadow_norm_from_ef(ef, (1 << k) - 1)
            rows.append((k, ell, norm))
    path = out / cfg.get("norms_out", "norms.csv")
    write_csv(path, ["k", "L", "norm"], rows, _provenance(cfg))
    print(f"wrote {path} ({len(rows)} rows)")
    if figures:
        from . import figures as figs

        figs.save_norms(out / "norms.png", rows)
    return 0


def cmd_scan(cfg, out: Path, figures: bool) -> int:
    n = cfg.get_int("n")
    ks = cfg.get_ints("k_values")
    depths = cfg.get_ints("l_values")
    results = depth_scan(
        ks,
        depths,
        n=n,
        d_w=_parse_d_w(cfg),
        d_r=cfg.get_int("d_r", 6),
        method=cfg.get("method", "ef"),
        seed=cfg.get_int("seed", 0),
    )
    rows = []
    for res in results:
        for ell, norm in zip(res.depths, res.norms):
            rows.append((res.k, ell, norm, res.l_star, res.fit_a, res.fit_b))
    path = out / cfg.get("scan_out", "scan.csv")
    write_csv(path, ["k", "L", "norm", "l_star", "fit_a", "fit_b"], rows, _provenance(cfg))
    print(f"wrote {path} (fit a={results[0].fit_a:.4f}, b={results[0].fit_b:.4f})")
    if figures:
        from . import figures as figs

        figs.save_depth_scan(out / "scan.png", results)
    return 0


def cmd_fit_scaling(cfg, out: Path, figures: bool, table=None) -> int:
    table_path = table or cfg.get("table")
    if not table_path:
        raise CliError("missing-input", "no variance table given (config key 'table')")
    header, raw_rows = read_table_csv(table_path)
    cols = {name: i for i, name in enumerate(header)}
    var_col = cols.get("variance", cols.get("var_f"))
    if var_col is None or "n" not in cols or "L" not in cols:
        raise CliError("bad-table", f"table needs columns n, L, variance; got {header}")
    points = [(int(r[cols["n"]]), int(r[cols["L"]]), float(r[var_col])) for r in raw_rows]
    try:
        fit = fit_variance_scaling(points, alpha=cfg.get_float("alpha", 0.72))
    except ValueError as exc:
        raise CliError("insufficient-points", str(exc)) from exc
    rows = [
        (n, ell, v, float(np.log(v)), fit.const + fit.c * n / (ell + 1) ** fit.alpha,
         res, fit.c, fit.alpha)
        for (n, ell, v), res in zip(fit.rows, fit.residuals)
    ]
    path = out / cfg.get("scaling_out", "scaling_fit.csv")
    write_csv(
        path,
        ["n", "L", "var_f", "ln_var", "fit_ln_var", "residual", "c", "alpha"],
        rows,
        _provenance(cfg),
    )
    print(f"wrote {path} (c={fit.c:.4f}, alpha={fit.alpha})")
    if figures:
        from . import figures as figs

        figs.save_scaling_fit(out / "scaling_fit.png", fit)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shadowtomo",
        description="Shadow tomography with finite-depth brick-wall Clifford circuits",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sample", "solve-r", "estimate", "norm", "scan", "fit-scaling"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=".")
        p.add_argument("--no-figures", action="store_true")
        if name == "estimate":
            p.add_argument("--snapshots")
            p.add_argument("--r-file")
        if name == "fit-scaling":
            p.add_argument("--table")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        figures = not args.no_figures
        if args.command == "sample":
            return cmd_sample(cfg, out, figures)
        if args.command == "solve-r":
            return cmd_solve_r(cfg, out, figures)
        if args.command == "estimate":
            return cmd_estimate(cfg, out, figures, snapshots=args.snapshots,
                                r_file=args.r_file)
        if args.command == "norm":
            return cmd_norm(cfg, out, figures)
        if args.command == "scan":
            return cmd_scan(cfg, out, figures)
        if args.command == "fit-scaling":
            return cmd_fit_scaling(cfg, out, figures, table=args.table)
        raise CliError("bad-command", f"unknown command {args.command!r}")
    except CliError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError, ValueError) as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
