"""Command line entry point: ``champrec <command> [options]``.

Exit codes: 0 success, 1 user error (bad flags, bad input, diverged
training), 2 internal error. Output files are written atomically, so a
failed command never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import data, evaluation, recommender, slopeone, svd
from .ratings import DataError, build_training_set, dataset_stats

log = logging.getLogger("champrec")

USER_ERRORS = (
    DataError,
    svd.ModelError,
    evaluation.EvalError,
    data.ApiError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ValueError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- output helpers ------------------------------------------------------------


def _write_atomic(path: str, payload: str | bytes) -> None:
    target = Path(path)
    mode = "wb" if isinstance(payload, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(payload)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _emit(args, text: str) -> None:
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _render(args, doc: dict, text: str, csv_header=None, csv_rows=None) -> str:
    if args.format == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.format == "csv":
        if csv_header is None:
            csv_header, csv_rows = ("key", "value"), [(k, v) for k, v in doc.items() if not isinstance(v, (list, dict))]
        return _rows_csv(csv_header, csv_rows)
    return text


def _hyperparams(args) -> svd.Hyperparams:
    h = svd.preset(args.preset, seed=args.seed)
    overrides = {
        k: getattr(args, k)
        for k in ("f", "epochs", "gamma", "lam", "init_std", "fold_in_lambda")
        if getattr(args, k, None) is not None
    }
    return h.replace(**overrides)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _read_values(path: str) -> list[float]:
    """Numbers from a file: one per line or comma separated; a non-numeric
    first line is treated as a header."""
    text = Path(path).read_text(encoding="utf-8")
    vals = []
    for lineno, line in enumerate(text.splitlines(), 1):
        for tok in line.replace(",", " ").split():
            try:
                vals.append(float(tok))
            except ValueError:
                if lineno == 1:
                    break
                raise DataError(f"{path}:{lineno}: not a number: {tok!r}") from None
    return vals


def _dataset(path: str):
    return build_training_set(data.load_csv(path))


def _timestamp(args) -> datetime:
    if args.timestamp:
        return datetime.fromisoformat(args.timestamp)
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    return datetime.now(timezone.utc).replace(microsecond=0)


def _api_config(args) -> data.ApiConfig:
    mode = "live" if args.live else "fixture"
    if mode == "fixture" and not args.fixtures:
        raise UsageError("--fixtures DIR is required unless --live is given")
    return data.ApiConfig(
        base_url=args.base_url or f"https://{args.region}.api.riotgames.com",
        region=args.region,
        mode=mode,
        fixture_dir=args.fixtures,
        max_requests=args.max_requests,
        window_seconds=args.window,
    )


# -- commands ------------------------------------------------------------------


def cmd_fetch(args) -> None:
    records = data.fetch_player_masteries(args.summoner, _api_config(args))
    if args.format == "json":
        text = json.dumps(data.records_to_entries(records), indent=2) + "\n"
    else:
        text = data.format_csv(records)
    _emit(args, text)


def cmd_synth(args) -> None:
    if args.kind == "two-archetype":
        cfg = data.two_archetype_config(args.users, args.items, seed=args.seed)
    else:
        cfg = data.skewed_config(args.users, args.items, seed=args.seed)
    records = data.generate_synthetic(cfg)
    if args.fixtures:
        Path(args.fixtures).mkdir(parents=True, exist_ok=True)
        by: dict[str, list] = {}
        for r in records:
            by.setdefault(r.player_id, []).append(r)
        for pid, rows in by.items():
            _write_atomic(str(Path(args.fixtures) / f"{pid}.json"),
                          json.dumps(data.records_to_entries(rows)) + "\n")
    _emit(args, data.format_csv(records))


def cmd_train(args) -> None:
    if not args.out:
        raise UsageError("--out MODEL is required")
    d = _dataset(args.data)
    h = _hyperparams(args)
    log.info("training on %d rows (%d players, %d champions), %s", len(d), d.n_users, d.n_items, h)
    model, trace = svd.train(d, h)
    _write_atomic(args.out, svd.dumps_model(model))
    doc = {"objective": trace, "hyperparams": h.__dict__, "n_rows": len(d)}
    text = "".join(f"epoch {k + 1:3d}  objective {j:.6g}\n" for k, j in enumerate(trace))
    out = _render(args, doc, text, ("epoch", "objective"), [(k + 1, repr(j)) for k, j in enumerate(trace)])
    if args.trace:
        _write_atomic(args.trace, out)
    else:
        sys.stdout.write(out)


def cmd_recommend(args) -> None:
    model = svd.load_model(args.model)
    if args.summoner:
        records = data.fetch_player_masteries(args.summoner, _api_config(args))
        player = args.summoner
    elif args.data and args.player:
        records = [r for r in data.load_csv(args.data) if r.player_id == args.player]
        player = args.player
        if not records:
            raise DataError(f"player {player!r} not found in {args.data}")
    else:
        raise UsageError("give --summoner (with --fixtures or --live) or --data and --player")
    if args.k <= 0:
        raise UsageError("-k must be positive")
    recs = recommender.recommend(model, records, args.k)
    catalog = data.load_catalog(args.catalog) if args.catalog else None
    fmt = "text" if args.format == "text" else "json"
    if args.format == "csv":
        names = [catalog.name(c) if catalog else None for c, _ in recs.items]
        text = _rows_csv(("rank", "champion_id", "name", "score"),
                         [(k + 1, c, n or f"#{c}", repr(s)) for k, ((c, s), n) in enumerate(zip(recs.items, names))])
    else:
        text = recommender.format_recommendations(recs, catalog, fmt, now=_timestamp(args))
    _emit(args, text)


def cmd_cv(args) -> None:
    d = _dataset(args.data)
    res = evaluation.kfold_cv(d, _hyperparams(args), args.folds, args.seed)
    doc = {"mean_rmse": res.mean_rmse, "fold_rmse": res.fold_rmse, "fold_sizes": res.fold_sizes,
           "skipped": res.skipped}
    text = "".join(f"fold {k + 1}: rmse {r:.6f} ({n} rows, {s} skipped)\n"
                   for k, (r, n, s) in enumerate(zip(res.fold_rmse, res.fold_sizes, res.skipped)))
    text += f"mean rmse {res.mean_rmse:.6f}\n"
    rows = [(k + 1, repr(r), n, s) for k, (r, n, s) in enumerate(zip(res.fold_rmse, res.fold_sizes, res.skipped))]
    _emit(args, _render(args, doc, text, ("fold", "rmse", "rows", "skipped"), rows))


def cmd_gridsearch(args) -> None:
    d = _dataset(args.data)
    grid = evaluation.HyperGrid(tuple(args.epochs_values), tuple(args.lambda_values), tuple(args.gamma_values))
    best, table = evaluation.grid_search(d, grid, args.folds, args.seed, base=_hyperparams(args))
    if args.format == "csv":
        text = evaluation.grid_table_csv(table)
    else:
        doc = {"best": {"epochs": best.epochs, "lam": best.lam, "gamma": best.gamma},
               "table": [{**r, "mean_rmse": None if r["diverged"] else r["mean_rmse"]} for r in table]}
        text = "".join(
            f"epochs={r['epochs']:<4d} lam={r['lam']:<8g} gamma={r['gamma']:<8g} "
            + ("diverged\n" if r["diverged"] else f"rmse={r['mean_rmse']:.6f}\n")
            for r in table
        ) + f"best: epochs={best.epochs} lam={best.lam:g} gamma={best.gamma:g}\n"
        text = _render(args, doc, text)
    _emit(args, text)


def bias_study(records, h: svd.Hyperparams, cohort: int, decile: float, seed: int, k: int = 5) -> dict:
    """Popularity share of SVD vs Slope One top-k lists over a query cohort."""
    d = build_training_set(records)
    model, _ = svd.train(d, h)
    so = slopeone.train_slope_one(d)
    by: dict[str, list] = {}
    for r in records:
        by.setdefault(r.player_id, []).append(r)
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(d.n_users, size=min(cohort, d.n_users), replace=False).tolist())
    svd_lists, so_lists = [], []
    for u in chosen:
        prof = recommender.top_champions(by[d.user_ids[u]])
        svd_lists.append(recommender.recommend_from_profile(model, prof, k))
        scores = slopeone.predict_all_slope_one(so, list(prof.entries))
        so_lists.append(recommender.RecommendationList(
            prof.player_id, tuple(recommender.rank_items(scores, so.item_ids, prof.champions, k)), k))
    return {
        "svd_share": evaluation.popularity_share(svd_lists, d, decile),
        "slope_one_share": evaluation.popularity_share(so_lists, d, decile),
        "popular_items": sorted(evaluation.popular_items(d, decile)),
        "cohort": len(chosen),
        "decile": decile,
    }


def cmd_bias(args) -> None:
    res = bias_study(data.load_csv(args.data), _hyperparams(args), args.cohort, args.decile, args.seed, args.k)
    text = (f"top-{res['decile']:g} popularity share over {res['cohort']} players: "
            f"svd {res['svd_share']:.3f}, slope-one {res['slope_one_share']:.3f}\n")
    _emit(args, _render(args, res, text))


def cmd_hitrate(args) -> None:
    d = _dataset(args.data)
    h = _hyperparams(args)
    res = evaluation.hit_rate_at_k(d, h, args.k, args.seed, args.users, untrained=args.untrained)
    mean_prof = float(np.mean(res.profile_sizes)) if res.profile_sizes else 0.0
    baseline = evaluation.random_hit_rate(d.n_items, round(mean_prof), args.k) if res.trials else 0.0
    doc = {"hit_rate": res.rate, "hits": res.hits, "trials": res.trials, "k": args.k,
           "random_baseline": baseline}
    text = f"hit rate@{args.k}: {res.rate:.4f} ({res.hits}/{res.trials}); random baseline {baseline:.4f}\n"
    _emit(args, _render(args, doc, text))


def cmd_ztest(args) -> None:
    z, p = evaluation.z_test_one_sided(_read_values(args.a), _read_values(args.b))
    doc = {"z": z, "p": p, "alternative": "mean(a) > mean(b)"}
    _emit(args, _render(args, doc, f"z = {z:.6f}\np = {p:.6g}\n"))


def cmd_hist(args) -> None:
    values = _read_values(args.values)
    edges = args.edges if args.edges else list(np.arange(args.low, args.high + args.width / 2, args.width))
    counts = evaluation.histogram(values, edges)
    if args.format == "json":
        doc = {"bins": [{"bin_low": lo, "bin_high": hi, "count": int(c)}
                        for lo, hi, c in zip(edges[:-1], edges[1:], counts)]}
        text = json.dumps(doc, indent=2) + "\n"
    elif args.format == "text":
        peak = max(int(counts.max()), 1)
        text = "".join(f"[{lo:g}, {hi:g}) {int(c):6d} {'#' * round(40 * c / peak)}\n"
                       for lo, hi, c in zip(edges[:-1], edges[1:], counts))
    else:
        text = evaluation.histogram_csv(counts, edges)
    _emit(args, text)


def cmd_stats(args) -> None:
    st = dataset_stats(_dataset(args.data))
    doc = {"n_users": st.n_users, "n_items": st.n_items, "n_rows": st.n_rows,
           "rows_per_user": st.rows_per_user, "rating_histogram": st.rating_histogram}
    text = (f"{st.n_rows} ratings, {st.n_users} players, {st.n_items} champions, "
            f"{st.rows_per_user:.1f} ratings per player\n")
    _emit(args, _render(args, doc, text))


# -- parser --------------------------------------------------------------------


def _common(p, fmt_default="text", formats=("text", "json", "csv")):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", help="write primary output here instead of stdout")
    p.add_argument("--format", choices=formats, default=fmt_default)


def _model_flags(p, default_preset="paper-tuned"):
    p.add_argument("--preset", choices=sorted(svd.PRESETS), default=default_preset)
    p.add_argument("--f", type=int, help="latent dimensionality (default 100)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--gamma", type=float, help="learning rate")
    p.add_argument("--lam", type=float, help="regularization")
    p.add_argument("--init-std", type=float, dest="init_std")
    p.add_argument("--fold-in-lambda", type=float, dest="fold_in_lambda")


def _api_flags(p):
    p.add_argument("--fixtures", help="directory of <summoner>.json mastery fixtures")
    p.add_argument("--live", action="store_true", help=f"query the live API (key from ${data.API_KEY_ENV})")
    p.add_argument("--region", default="na1")
    p.add_argument("--base-url")
    p.add_argument("--max-requests", type=int, default=20)
    p.add_argument("--window", type=float, default=1.0, help="rate-limit window in seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="champrec", description="Champion recommender built on mastery points.")
    parser.add_argument("--config", help="JSON file of option defaults (keys as flag names)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fetch", help="download a player's mastery entries")
    p.add_argument("--summoner", required=True)
    _api_flags(p)
    _common(p, "csv", ("csv", "json"))
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("synth", help="generate a synthetic mastery dataset (CSV)")
    p.add_argument("--kind", choices=("two-archetype", "skewed"), default="two-archetype")
    p.add_argument("--users", type=int, default=300)
    p.add_argument("--items", type=int, default=40)
    p.add_argument("--fixtures", help="also write one fixture JSON per player here")
    _common(p, "csv", ("csv",))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the factor model")
    p.add_argument("--data", required=True)
    p.add_argument("--trace", help="write the objective trace here instead of stdout")
    _model_flags(p)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recommend", help="recommend champions for a player")
    p.add_argument("--model", required=True)
    p.add_argument("--summoner")
    p.add_argument("--data", help="dataset CSV to take the player's records from")
    p.add_argument("--player")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--catalog", help="champion_id,name CSV")
    p.add_argument("--timestamp", help="ISO time to stamp into the output (default now)")
    _api_flags(p)
    _common(p, "json")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("cv", help="k-fold cross-validated RMSE")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)
    _model_flags(p)
    _common(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("gridsearch", help="grid search over epochs, lambda, gamma")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--epochs-values", type=_ints, default=[20])
    p.add_argument("--lambda-values", type=_floats, default=[0.005, 0.02, 0.1, 0.4])
    p.add_argument("--gamma-values", type=_floats, default=[0.0005, 0.001, 0.005])
    _model_flags(p)
    _common(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("bias", help="popularity share of SVD vs Slope One")
    p.add_argument("--data", required=True)
    p.add_argument("--cohort", type=int, default=100)
    p.add_argument("--decile", type=float, default=0.10)
    p.add_argument("-k", type=int, default=5)
    _model_flags(p)
    _common(p)
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("hitrate", help="leave-one-out hit rate@k")
    p.add_argument("--data", required=True)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--users", type=int, help="number of players to sample (default all)")
    p.add_argument("--untrained", action="store_true", help="use the random initial factors")
    _model_flags(p)
    _common(p)
    p.set_defaults(func=cmd_hitrate)

    p = sub.add_parser("ztest", help="one-sided two-sample Z-test, H1: mean(a) > mean(b)")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    _common(p)
    p.set_defaults(func=cmd_ztest)

    p = sub.add_parser("hist", help="histogram counts as CSV plot data")
    p.add_argument("--values", required=True)
    p.add_argument("--edges", type=_floats, help="explicit bin edges")
    p.add_argument("--low", type=float, default=0.5)
    p.add_argument("--high", type=float, default=10.5)
    p.add_argument("--width", type=float, default=1.0)
    _common(p, "csv")
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("stats", help="dataset summary")
    p.add_argument("--data", required=True)
    _common(p)
    p.set_defaults(func=cmd_stats)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults from ``--config`` (explicit flags still win)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    try:
        cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    args = parser.parse_args(argv)
    explicit = set()
    for tok in argv:
        if tok.startswith("--"):
            explicit.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    for key, value in cfg.items():
        key = key.replace("-", "_")
        if key == "api_key":
            raise UsageError(f"the API key is read only from ${data.API_KEY_ENV}")
        if not hasattr(args, key):
            raise UsageError(f"unknown config key {key!r} for command {args.command}")
        if key not in explicit:
            setattr(args, key, value)
    return args


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"champrec {args.command}: {exc}", file=sys.stderr)
        return 1
    except USER_ERRORS as exc:
        print(f"champrec {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort guard
        log.exception("internal error")
        print(f"champrec {args.command}: internal error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
