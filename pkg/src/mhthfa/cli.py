"""Command-line interface: ``mhthfa {fit,grid,predict,simulate,evaluate}``.

Exit codes: 0 success, 2 input error, 3 fit failure, 4 constraint violation.
"""

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .evaluation import adjusted_rand_index, confusion_matrix
from .exceptions import (
    ConstraintViolation,
    DegenerateLikelihoodError,
    FitFailure,
    SchemaVersionError,
)
from .fit import FitConfig, grid_search, responsibilities, sample_mixture
from .hthfa import check_constraints
from .io import (
    InputError,
    ModelFormatError,
    SerializedModel,
    fit_metadata,
    load_csv,
    load_model,
    save_model,
    split_semisupervised,
    standardize,
)

EXIT_OK, EXIT_INPUT, EXIT_FIT, EXIT_CONSTRAINT = 0, 2, 3, 4

log = logging.getLogger("mhthfa")


def parse_int_set(text):
    """Parse ``"3"``, ``"1-6"``, ``"1..6"`` or ``"1,2,5"`` (mixtures allowed) into sorted ints."""
    out = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        sep = ".." if ".." in part else ("-" if "-" in part[1:] else None)
        try:
            if sep is None:
                out.add(int(part))
            else:
                lo, hi = part.split(sep, 1) if sep == ".." else part.rsplit("-", 1)
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ValueError
                out.update(range(lo, hi + 1))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer, range or list: {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer set: {text!r}")
    return sorted(out)


def _write_rows(path, header, rows):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def _fmt(v):
    return repr(float(v))


def _load_training_data(args):
    ds = load_csv(args.data, label_column=args.labels, unlabelled_token=args.unlabelled_token)
    if args.hide_fraction is not None:
        if ds.labels is None:
            raise InputError("--hide-fraction needs --labels")
        ds = split_semisupervised(ds, args.hide_fraction, args.split_seed)
        log.info("hidden labels per class: %s", ds.unlabelled_counts)
    if args.standardize:
        ds = standardize(ds)
    return ds


def _config(args, ds):
    semi = args.semi_supervised or args.hide_fraction is not None
    labels = ds.labels if semi else None
    return FitConfig(
        max_iterations=args.max_iter,
        epsilon=args.epsilon,
        n_starts=args.starts,
        seed=args.seed,
        labels=labels,
    ), semi


def _run_grid(args, ds, G_set, q_set, r_set):
    config, semi = _config(args, ds)
    entries = grid_search(ds.matrix, G_set, q_set, r_set, config, n_jobs=args.jobs)
    return entries, semi


def _score(ds, truth, semi, result):
    if truth is None:
        return None
    rows = truth > 0
    if semi:
        rows &= ds.labels == 0
    if not np.any(rows):
        return None
    return adjusted_rand_index(truth[rows], result.map_labels[rows])


def _grid_rows(entries, ds, truth, semi):
    rows = []
    for e in entries:
        if e.result is None:
            rows.append(["MHTHFA", e.G, e.q, e.r, "", "", "", "", "", f"{e.seconds:.1f}", e.error])
            continue
        res = e.result
        ari = _score(ds, truth, semi, res)
        rows.append(
            [
                "MHTHFA",
                e.G,
                e.q,
                e.r,
                f"{res.log_likelihood:.4f}",
                f"{res.bic:.4f}",
                "" if ari is None else f"{ari:.4f}",
                res.iterations,
                int(res.converged),
                f"{e.seconds:.1f}",
                "",
            ]
        )
    return rows


GRID_HEADER = ["model", "G", "q", "r", "loglik", "BIC", "ARI", "iterations", "converged", "seconds", "error"]


def _save_best(path, entries, ds):
    best = next(e for e in entries if e.result is not None)
    sm = SerializedModel(
        best.result.model,
        metadata=dict(fit_metadata(best.result), G=best.G, q=best.q, r=best.r),
        column_names=ds.column_names,
        center=ds.center,
        scale=ds.scale,
    )
    save_model(sm, path)
    return best


def _training_truth(args):
    """Full labels before any hiding, for scoring."""
    if args.labels is None:
        return None
    full = load_csv(args.data, label_column=args.labels, unlabelled_token=args.unlabelled_token)
    return full.labels


def cmd_fit(args):
    ds = _load_training_data(args)
    truth = _training_truth(args)
    entries, semi = _run_grid(args, ds, [args.G], args.q, args.r)
    best = entries[0]
    if best.result is None:
        raise FitFailure(best.error)
    if args.out:
        _save_best(args.out, entries, ds)
    res = best.result
    ari = _score(ds, truth, semi, res)
    print(f"G={best.G} q={best.q} r={best.r} loglik={res.log_likelihood:.4f} BIC={res.bic:.4f} "
          f"iterations={res.iterations} converged={res.converged}"
          + ("" if ari is None else f" ARI={ari:.4f}"))
    return EXIT_OK


def cmd_grid(args):
    ds = _load_training_data(args)
    truth = _training_truth(args)
    entries, semi = _run_grid(args, ds, args.G_set, args.q_set, args.r_set)
    _write_rows(args.table, GRID_HEADER, _grid_rows(entries, ds, truth, semi))
    if args.out:
        _save_best(args.out, entries, ds)
    return EXIT_OK


def cmd_predict(args):
    sm = load_model(args.model)
    columns = list(sm.column_names) or None
    ds = load_csv(args.data, label_column=args.labels, columns=columns)
    X = ds.matrix
    if sm.center is not None:
        X = (X - sm.center) / sm.scale
    G = sm.model.dims[0]
    if X.shape[1] != sm.model.dims[1]:
        raise InputError(f"data have {X.shape[1]} columns, model expects {sm.model.dims[1]}")
    z = responsibilities(X, sm.model)
    labels = np.argmax(z, axis=1) + 1
    rows = [[_fmt(v) for v in zi] + [int(k)] for zi, k in zip(z, labels)]
    _write_rows(args.out, [f"z{g + 1}" for g in range(G)] + ["map"], rows)
    return EXIT_OK


def cmd_simulate(args):
    sm = load_model(args.model)
    if args.n < 1:
        raise InputError("--n must be positive")
    G, p, q, r = sm.model.dims
    rng = np.random.default_rng(args.seed)
    x, comp, lat = sample_mixture(sm.model, args.n, rng, latents=True)
    if sm.center is not None:
        x = x * sm.scale + sm.center
    names = list(sm.column_names) or [f"x{j + 1}" for j in range(p)]
    header = names + ["component"]
    if args.latents:
        header += ["w"] + [f"v{j + 1}" for j in range(r)] + [f"u{j + 1}" for j in range(q)]
    rows = []
    for i in range(args.n):
        row = [_fmt(v) for v in x[i]] + [int(comp[i])]
        if args.latents:
            row += [_fmt(lat["w"][i])] + [_fmt(v) for v in lat["v"][i]] + [_fmt(v) for v in lat["u"][i]]
        rows.append(row)
    _write_rows(args.out, header, rows)
    return EXIT_OK


def _read_column(spec):
    path, sep, col = spec.rpartition(":")
    if not sep or not path:
        raise InputError(f"expected <csv>:<column>, got {spec!r}")
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or col not in reader.fieldnames:
            raise InputError(f"{path}: no column '{col}'")
        return [row[col].strip() for row in reader]


def cmd_evaluate(args):
    a = _read_column(args.true)
    b = _read_column(args.pred)
    if len(a) != len(b):
        raise InputError(f"label columns differ in length ({len(a)} vs {len(b)})")
    table, rows, cols = confusion_matrix(a, b, return_labels=True)
    print(f"ARI={adjusted_rand_index(a, b):.6f}")
    width = max(len(str(v)) for v in list(rows) + list(cols) + [table.max()]) + 2
    print("true\\pred".ljust(width) + "".join(str(c).rjust(width) for c in cols))
    for name, line in zip(rows, table):
        print(str(name).ljust(width) + "".join(str(v).rjust(width) for v in line))
    return EXIT_OK


def _add_training_options(sp):
    sp.add_argument("--data", required=True, help="CSV file with a header row")
    sp.add_argument("--labels", help="label column (excluded from features; used for ARI)")
    sp.add_argument("--unlabelled-token", default=None, help="label token meaning 'unlabelled'")
    sp.add_argument("--semi-supervised", action="store_true", help="use the known labels in the likelihood")
    sp.add_argument("--hide-fraction", type=float, default=None,
                    help="hide this fraction of labels at random (implies --semi-supervised)")
    sp.add_argument("--split-seed", type=int, default=0)
    sp.add_argument("--standardize", action="store_true", help="z-score every column before fitting")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epsilon", type=float, default=0.01)
    sp.add_argument("--starts", type=int, default=5)
    sp.add_argument("--max-iter", type=int, default=500)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", help="write the best model to this JSON file")


def build_parser():
    parser = argparse.ArgumentParser(prog="mhthfa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="fit one model (q/r ranges pick the best by BIC)")
    _add_training_options(sp)
    sp.add_argument("--G", type=int, required=True)
    sp.add_argument("--q", type=parse_int_set, required=True)
    sp.add_argument("--r", type=parse_int_set, required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("grid", help="fit a (G, q, r) grid and rank by BIC")
    _add_training_options(sp)
    sp.add_argument("--G-set", type=parse_int_set, required=True)
    sp.add_argument("--q-set", type=parse_int_set, required=True)
    sp.add_argument("--r-set", type=parse_int_set, required=True)
    sp.add_argument("--table", default=None, help="results table CSV (default stdout)")
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("predict", help="posterior memberships and MAP labels")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--labels", help="label column to ignore")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("simulate", help="draw rows from a saved model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--latents", action="store_true", help="append w, v and u columns")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("evaluate", help="ARI and confusion table of two label columns")
    sp.add_argument("--true", required=True, help="<csv>:<column>")
    sp.add_argument("--pred", required=True, help="<csv>:<column>")
    sp.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        if args.command in ("fit", "grid"):
            qs = args.q if args.command == "fit" else args.q_set
            rs = args.r if args.command == "fit" else args.r_set
            ds_p = len(load_csv(args.data, label_column=args.labels).column_names)
            if not any(check_constraints(ds_p, q, r) for q in qs for r in rs):
                bad = check_constraints(ds_p, qs[0], rs[0])
                raise ConstraintViolation(f"no admissible (q, r) for p = {ds_p}: {', '.join(bad.failed)}", bad.failed)
        return args.func(args)
    except ConstraintViolation as exc:
        print(f"constraint violation: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except (FitFailure, DegenerateLikelihoodError) as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (InputError, ModelFormatError, SchemaVersionError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
