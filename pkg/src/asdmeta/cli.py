"""Command-line front end: ingest/validate, synthesize, select, bootstrap,
correlate, embed, report.

Every output file is written atomically and embeds the master seed, the
toolkit version, and the effective algorithm configuration, so rerunning a
command with the same config and seed reproduces it byte for byte at any
worker count. Execution detail (out-dir, threads, input paths) is not part
of the echoed config.

Exit codes: 0 success, 1 validation failure (bad config, bad schema, missing
artifacts), 2 runtime error. Errors are emitted as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Any, Sequence

import numpy as np

from . import __version__, embed, fileio, forest, ga, hier, meta, streams, synth, tabular

log = logging.getLogger(__name__)

PAIR_COLUMNS = ["METRIC_NAME", "SITE_ID", "REPLICATE", "METRIC_VALUE", "ACCURACY"]

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "synth.n_sites": 20,
    "synth.size_min": 26,
    "synth.size_max": 184,
    "synth.d": 62,
    "synth.k_informative": 6,
    "synth.effect_size": 2.0,
    "synth.base_noise": 1.0,
    "synth.quality_slope": 0.0,
    "synth.label_balance": 0.5,
    "forest.n_trees": 100,
    "forest.max_features": None,
    "forest.min_samples_leaf": 1,
    "forest.bootstrap": True,
    "ga.n_iter": 30,
    "ga.n_pop": 300,
    "ga.r_cross": 0.9,
    "ga.r_mut": None,
    "ga.tournament_size": 3,
    "cv.k": 3,
    "cv.stratified": False,
    "hier.epsilon": 0.01,
    "hier.max_rounds": 5,
    "bootstrap.replicates": 50,
    "bootstrap.frac": 0.5,
    "embed.perplexity": 5.0,
    "embed.iterations": 1000,
    "embed.learning_rate": 100.0,
}

_OPTIONAL_KEYS = {"forest.max_features", "ga.r_mut"}


class CLIError(Exception):
    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


class MissingArtifactError(CLIError):
    pass


def _coerce(key: str, raw: str) -> Any:
    if raw == "" or raw.lower() == "none":
        if key in _OPTIONAL_KEYS:
            return None
        raise CLIError(f"config key {key}: empty value not allowed")
    default = DEFAULTS[key]
    kind = type(default) if default is not None else float if key == "ga.r_mut" else int
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise CLIError(f"config key {key}: cannot parse {raw!r} as {kind.__name__}") from None


def load_config_file(path: str) -> dict[str, Any]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    if not os.path.exists(path):
        raise CLIError(f"config file not found: {path}")
    values: dict[str, Any] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CLIError(f"{path}: line {lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in DEFAULTS:
                raise CLIError(f"{path}: line {lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, raw)
    return values


def effective_config(args: argparse.Namespace) -> dict[str, Any]:
    config = dict(DEFAULTS)
    if getattr(args, "config", None):
        config.update(load_config_file(args.config))
    for key in DEFAULTS:
        flag = key.replace(".", "_")
        value = getattr(args, flag, None)
        if value is not None:
            config[key] = value
    return config


def _meta(config: dict[str, Any]) -> dict[str, Any]:
    echo = {k: config[k] for k in sorted(config)}
    return {"seed": config["seed"], "version": __version__, "config": echo}


def _forest_config(config: dict[str, Any]) -> forest.ForestConfig:
    return forest.ForestConfig(
        n_trees=config["forest.n_trees"],
        max_features=config["forest.max_features"],
        min_samples_leaf=config["forest.min_samples_leaf"],
        bootstrap=config["forest.bootstrap"],
    )


def _ga_config(config: dict[str, Any]) -> ga.GAConfig:
    return ga.GAConfig(
        n_iter=config["ga.n_iter"],
        n_pop=config["ga.n_pop"],
        r_cross=config["ga.r_cross"],
        r_mut=config["ga.r_mut"],
        tournament_size=config["ga.tournament_size"],
    )


def _out(args, *parts) -> str:
    return os.path.join(args.out_dir, *parts)


def _resolve_input(args, attr: str, default_name: str, what: str) -> str:
    explicit = getattr(args, attr, None)
    if explicit:
        if not os.path.exists(explicit):
            raise MissingArtifactError(f"{what} file not found: {explicit}")
        return explicit
    candidate = _out(args, default_name)
    if os.path.exists(candidate):
        return candidate
    raise MissingArtifactError(
        f"no {what} input: pass --{attr.replace('_', '-')} or run 'synth' into {args.out_dir}")


def _site_filename(site: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in site)


# -- subcommands -----------------------------------------------------------

def cmd_validate(args) -> int:
    report = []
    ok = True
    jobs = [("features", args.features, tabular.load_feature_table),
            ("phenotypes", args.phenotypes, tabular.load_phenotypes),
            ("scan_params", args.scan_params, tabular.load_scan_params)]
    if not any(path for _, path, _ in jobs):
        raise CLIError("nothing to validate: pass --features/--phenotypes/--scan-params")
    for kind, path, loader in jobs:
        if not path:
            continue
        entry: dict[str, Any] = {"kind": kind, "path": path}
        try:
            loaded = loader(path)
            entry["valid"] = True
            if kind == "features":
                entry.update(rows=loaded.n, feature_columns=loaded.d,
                             sites=len(set(loaded.site_ids)))
            else:
                entry["rows"] = len(loaded)
        except (tabular.TableFormatError, OSError) as exc:
            entry.update(valid=False, error=str(exc))
            ok = False
        report.append(entry)
    print(json.dumps({"valid": ok, "files": report}, indent=2))
    return 0 if ok else 1


def cmd_synth(args, config: dict[str, Any]) -> int:
    if getattr(args, "features", None):
        raise CLIError("synth generates data; do not pass input paths")
    table, truth_mask, phenotypes, schedule = synth.generate_size_quality_study(
        n_sites=config["synth.n_sites"],
        size_range=(config["synth.size_min"], config["synth.size_max"]),
        quality_slope=config["synth.quality_slope"],
        seed=streams.derive(config["seed"], "synth"),
        d=config["synth.d"],
        k_informative=config["synth.k_informative"],
        effect_size=config["synth.effect_size"],
        base_noise=config["synth.base_noise"],
        label_balance=config["synth.label_balance"],
    )
    meta_block = _meta(config)
    os.makedirs(args.out_dir, exist_ok=True)
    tabular.save_feature_table(table, _out(args, "features.csv"), meta=meta_block)
    flat_phenotypes = [rec for site in phenotypes.values() for rec in site]
    tabular.save_phenotypes(flat_phenotypes, _out(args, "phenotypes.csv"), meta=meta_block)
    scan_records = synth.synth_scan_params(
        [p.site_id for p in schedule], streams.derive(config["seed"], "synth", "scan"))
    tabular.save_scan_params(scan_records, _out(args, "scan_params.csv"), meta=meta_block)
    fileio.atomic_write_text(
        _out(args, "truth_mask.txt"),
        fileio.metadata_comments(meta_block) + tabular.mask_to_string(truth_mask) + "\n")
    fileio.write_csv(
        _out(args, "synth_schedule.csv"),
        ["SITE_ID", "DATA_SIZE", "NOISE_SCALE"],
        [[p.site_id, p.size, p.noise_scale] for p in schedule],
        meta=meta_block)
    log.info("synthesized %d subjects over %d sites into %s",
             table.n, len(schedule), args.out_dir)
    return 0


def cmd_select(args, config: dict[str, Any]) -> int:
    table = tabular.load_feature_table(_resolve_input(args, "features", "features.csv", "features"))
    gacfg = replace(_ga_config(config), seed=streams.derive(config["seed"], "select"))
    histories = hier.run_rounds_by_site(
        table, gacfg, _forest_config(config), k=config["cv.k"],
        epsilon=config["hier.epsilon"], max_rounds=config["hier.max_rounds"],
        threads=args.threads)
    meta_block = _meta(config)
    os.makedirs(_out(args, "rounds"), exist_ok=True)
    for site, history in histories.items():
        payload = dict(meta_block)
        payload["site_id"] = site
        payload.update(hier.history_to_dict(history))
        fileio.write_json(_out(args, "rounds", f"{_site_filename(site)}.json"), payload)
    rows = hier.site_wise_eval(table, histories)
    hier.write_site_report(rows, _out(args, "selection_report.csv"), meta=meta_block)
    return 0


def _load_histories(args, table: tabular.FeatureTable) -> dict[str, hier.RoundHistory]:
    histories = {}
    missing = []
    for site in dict.fromkeys(table.site_ids):
        path = _out(args, "rounds", f"{_site_filename(site)}.json")
        if not os.path.exists(path):
            missing.append(path)
            continue
        with open(path, encoding="utf-8") as fh:
            histories[site] = hier.history_from_dict(json.load(fh))
    if missing:
        raise MissingArtifactError(
            "missing round histories (run 'select' first): " + ", ".join(missing))
    return histories


def cmd_bootstrap(args, config: dict[str, Any]) -> int:
    table = tabular.load_feature_table(_resolve_input(args, "features", "features.csv", "features"))
    phenotypes = tabular.load_phenotypes(
        _resolve_input(args, "phenotypes", "phenotypes.csv", "phenotypes"))
    histories = _load_histories(args, table)
    fcfg = _forest_config(config)
    phen_by_site: dict[str, list[tabular.PhenotypeRecord]] = {}
    subject_site = dict(zip(table.subject_ids, table.site_ids))
    for rec in phenotypes:
        site = subject_site.get(rec.subject_id)
        if site is not None:
            phen_by_site.setdefault(site, []).append(rec)

    pair_rows: dict[str, list[list[Any]]] = {m: [] for m in meta.PHENOTYPE_METRICS}
    for site, site_table in tabular.partition_by_site(table).items():
        stats_list = meta.bootstrap_site(
            site_table, phen_by_site.get(site, []), histories[site].final_mask,
            b_replicates=config["bootstrap.replicates"], frac=config["bootstrap.frac"],
            fcfg=fcfg, k=config["cv.k"],
            seed=streams.derive(config["seed"], "bootstrap", site),
            threads=args.threads)
        for replicate, stats in enumerate(stats_list):
            for metric in meta.PHENOTYPE_METRICS:
                value = stats.metric(metric)
                if value is None:
                    continue
                pair_rows[metric].append([metric, site, replicate, value, stats.accuracy])
    meta_block = _meta(config)
    for metric, rows in pair_rows.items():
        fileio.write_csv(_out(args, f"pairs_{metric}.csv"), PAIR_COLUMNS, rows,
                         meta=meta_block)
    return 0


def read_pair_table(path: str) -> list[tuple[str, str, int, float, float]]:
    body = list(tabular._data_rows(path))
    if not body or body[0][1] != PAIR_COLUMNS:
        raise tabular.TableFormatError(f"{path}: not a pair-table file")
    rows = []
    for lineno, cells in body[1:]:
        if len(cells) != len(PAIR_COLUMNS):
            raise tabular.TableFormatError(f"{path}: line {lineno}: bad cell count")
        rows.append((cells[0], cells[1], int(cells[2]), float(cells[3]), float(cells[4])))
    return rows


def cmd_correlate(args, config: dict[str, Any]) -> int:
    meta_block = _meta(config)
    failures = []
    missing = []
    for metric in meta.PHENOTYPE_METRICS:
        path = _out(args, f"pairs_{metric}.csv")
        if not os.path.exists(path):
            missing.append(path)
            continue
        rows = read_pair_table(path)
        try:
            result = meta.correlate([(value, acc) for _, _, _, value, acc in rows])
        except ValueError as exc:
            failures.append(f"{metric}: {exc}")
            continue
        payload = dict(meta_block)
        payload.update(metric=metric, pooling="bootstrap-replicates",
                       r=result.r, p=result.p_value, n=result.n)
        fileio.write_json(_out(args, f"correlation_{metric}.json"), payload)
    if missing and len(missing) == len(meta.PHENOTYPE_METRICS):
        raise MissingArtifactError(
            "no pair tables found (run 'bootstrap' first): " + ", ".join(missing))

    report_path = _out(args, "selection_report.csv")
    if os.path.exists(report_path):
        rows = hier.read_site_report(report_path)
        last = {}
        sizes = {}
        for row in rows:
            if row.site_id not in last or row.round_index > last[row.site_id][0]:
                last[row.site_id] = (row.round_index, row.acc_mean)
            sizes[row.site_id] = row.data_size
        pairs = [(float(sizes[s]), last[s][1]) for s in last]
        try:
            result = meta.correlate(pairs)
            payload = dict(meta_block)
            payload.update(metric="data_size", pooling="site-level",
                           r=result.r, p=result.p_value, n=result.n)
            fileio.write_json(_out(args, "correlation_size_site_level.json"), payload)
        except ValueError as exc:
            failures.append(f"site-level data_size: {exc}")
    if failures:
        raise CLIError("correlation failed for: " + "; ".join(failures), exit_code=2)
    return 0


def cmd_embed(args, config: dict[str, Any]) -> int:
    records = tabular.load_scan_params(
        _resolve_input(args, "scan_params", "scan_params.csv", "scan parameters"))
    report_path = _out(args, "selection_report.csv")
    if not os.path.exists(report_path):
        raise MissingArtifactError(
            f"missing {report_path} (run 'select' first); embedding labels "
            f"need per-site accuracies")
    rows = hier.read_site_report(report_path)
    accuracy_by_site: dict[str, tuple[int, float]] = {}
    for row in rows:
        current = accuracy_by_site.get(row.site_id)
        if current is None or row.round_index > current[0]:
            accuracy_by_site[row.site_id] = (row.round_index, row.acc_mean)

    vectors = embed.encode_scan_conditions(records)
    unknown = [v.site_id for v in vectors if v.site_id not in accuracy_by_site]
    if unknown:
        raise MissingArtifactError(
            f"sites missing from the selection report: {', '.join(unknown)}")
    matrix = embed.standardize(embed.scan_matrix(vectors))
    ecfg = embed.EmbeddingConfig(
        perplexity=config["embed.perplexity"],
        iterations=config["embed.iterations"],
        learning_rate=config["embed.learning_rate"],
        seed=streams.derive(config["seed"], "embed"),
    )
    coords, kl_history = embed.tsne(matrix, ecfg)
    meta_block = _meta(config)
    fileio.write_csv(
        _out(args, "embedding.csv"),
        ["SITE_ID", "X", "Y", "ACCURACY"],
        [[v.site_id, float(coords[i, 0]), float(coords[i, 1]),
          accuracy_by_site[v.site_id][1]] for i, v in enumerate(vectors)],
        meta=meta_block)
    fileio.write_csv(
        _out(args, "embedding_kl.csv"),
        ["ITERATION", "KL"],
        [[i, float(kl)] for i, kl in enumerate(kl_history)],
        meta=meta_block)
    return 0


def _read_embedding(path: str) -> list[tuple[str, float, float, float]]:
    body = list(tabular._data_rows(path))
    rows = []
    for _, cells in body[1:]:
        rows.append((cells[0], float(cells[1]), float(cells[2]), float(cells[3])))
    return rows


def cmd_report(args, config: dict[str, Any]) -> int:
    from . import figures

    report_path = _out(args, "selection_report.csv")
    if not os.path.exists(report_path):
        raise MissingArtifactError(f"missing artifacts: {report_path} (run 'select' first)")
    rows = hier.read_site_report(report_path)

    bundle: dict[str, Any] = dict(_meta(config))
    bundle["selection"] = [
        {"site_id": r.site_id, "data_size": r.data_size, "round": r.round_index,
         "acc_mean": r.acc_mean, "acc_std": r.acc_std} for r in rows]

    correlations = {}
    names = list(meta.PHENOTYPE_METRICS) + ["size_site_level"]
    for name in names:
        path = _out(args, f"correlation_{name}.json")
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
            correlations[name] = {k: payload[k] for k in ("metric", "pooling", "r", "p", "n")}
    bundle["correlations"] = correlations

    embedding_path = _out(args, "embedding.csv")
    embedding_rows = _read_embedding(embedding_path) if os.path.exists(embedding_path) else []
    bundle["embedding"] = [
        {"site_id": s, "x": x, "y": y, "accuracy": a} for s, x, y, a in embedding_rows]

    truth_path = _out(args, "truth_mask.txt")
    if os.path.exists(truth_path):
        with open(truth_path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
        if lines:
            bundle["truth_mask"] = lines[0]

    figures_dir = _out(args, "figures")
    os.makedirs(figures_dir, exist_ok=True)
    rendered = []
    figures.site_accuracy_figure(rows, os.path.join(figures_dir, "accuracy_by_site.png"))
    rendered.append("accuracy_by_site.png")
    figures.rounds_figure(rows, os.path.join(figures_dir, "accuracy_by_round.png"))
    rendered.append("accuracy_by_round.png")

    last: dict[str, tuple[int, float]] = {}
    sizes: dict[str, int] = {}
    for row in rows:
        if row.site_id not in last or row.round_index > last[row.site_id][0]:
            last[row.site_id] = (row.round_index, row.acc_mean)
        sizes[row.site_id] = row.data_size
    corr = None
    if "size_site_level" in correlations:
        c = correlations["size_site_level"]
        corr = meta.CorrelationResult(c["r"], c["p"], c["n"])
    figures.size_accuracy_figure(
        [float(sizes[s]) for s in last], [last[s][1] for s in last], corr,
        os.path.join(figures_dir, "size_vs_accuracy.png"))
    rendered.append("size_vs_accuracy.png")

    panels = {}
    for metric in ("mean_age", "age_std", "fm_ratio", "eye_median"):
        path = _out(args, f"pairs_{metric}.csv")
        if not os.path.exists(path):
            continue
        pair_rows = read_pair_table(path)
        c = correlations.get(metric)
        panels[metric] = (
            [v for _, _, _, v, _ in pair_rows],
            [a for _, _, _, _, a in pair_rows],
            meta.CorrelationResult(c["r"], c["p"], c["n"]) if c else None,
        )
    if panels:
        figures.phenotype_figure(panels, os.path.join(figures_dir, "phenotypes.png"))
        rendered.append("phenotypes.png")

    if embedding_rows:
        xy = np.array([[x, y] for _, x, y, _ in embedding_rows])
        figures.embedding_figure(
            [s for s, _, _, _ in embedding_rows], xy,
            [a for _, _, _, a in embedding_rows],
            os.path.join(figures_dir, "scan_embedding.png"))
        rendered.append("scan_embedding.png")

    bundle["figures"] = rendered
    fileio.write_json(_out(args, "report.json"), bundle)
    return 0


# -- parser / dispatch -----------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # machine-readable on bad usage
        json.dump({"error": "usage", "message": message}, sys.stderr)
        sys.stderr.write("\n")
        raise SystemExit(1)


def _add_shared(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--seed", type=int, default=None, help="master seed")
    sub.add_argument("--out-dir", default="out", help="artifact directory")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker processes for fitness/bootstrap evaluation")
    sub.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asdmeta", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("validate", help="validate input files")
    _add_shared(p)
    p.add_argument("--features")
    p.add_argument("--phenotypes")
    p.add_argument("--scan-params", dest="scan_params")

    p = commands.add_parser("synth", help="generate a synthetic multi-site dataset")
    _add_shared(p)
    p.add_argument("--n-sites", dest="synth_n_sites", type=int)
    p.add_argument("--size-min", dest="synth_size_min", type=int)
    p.add_argument("--size-max", dest="synth_size_max", type=int)
    p.add_argument("--d", dest="synth_d", type=int)
    p.add_argument("--k-informative", dest="synth_k_informative", type=int)
    p.add_argument("--effect-size", dest="synth_effect_size", type=float)
    p.add_argument("--base-noise", dest="synth_base_noise", type=float)
    p.add_argument("--quality-slope", dest="synth_quality_slope", type=float)
    p.add_argument("--label-balance", dest="synth_label_balance", type=float)

    p = commands.add_parser("select", help="hierarchical GA feature selection per site")
    _add_shared(p)
    p.add_argument("--features")
    p.add_argument("--n-iter", dest="ga_n_iter", type=int)
    p.add_argument("--n-pop", dest="ga_n_pop", type=int)
    p.add_argument("--r-cross", dest="ga_r_cross", type=float)
    p.add_argument("--r-mut", dest="ga_r_mut", type=float)
    p.add_argument("--tournament-size", dest="ga_tournament_size", type=int)
    p.add_argument("--n-trees", dest="forest_n_trees", type=int)
    p.add_argument("--k", dest="cv_k", type=int)
    p.add_argument("--epsilon", dest="hier_epsilon", type=float)
    p.add_argument("--max-rounds", dest="hier_max_rounds", type=int)

    p = commands.add_parser("bootstrap", help="subsample sites and score accuracy/phenotypes")
    _add_shared(p)
    p.add_argument("--features")
    p.add_argument("--phenotypes")
    p.add_argument("--replicates", dest="bootstrap_replicates", type=int)
    p.add_argument("--frac", dest="bootstrap_frac", type=float)
    p.add_argument("--n-trees", dest="forest_n_trees", type=int)
    p.add_argument("--k", dest="cv_k", type=int)

    p = commands.add_parser("correlate", help="Pearson r/p summaries per metric")
    _add_shared(p)

    p = commands.add_parser("embed", help="t-SNE embedding of scan conditions")
    _add_shared(p)
    p.add_argument("--scan-params", dest="scan_params")
    p.add_argument("--perplexity", dest="embed_perplexity", type=float)
    p.add_argument("--iterations", dest="embed_iterations", type=int)
    p.add_argument("--learning-rate", dest="embed_learning_rate", type=float)

    p = commands.add_parser("report", help="aggregate artifacts into JSON + figures")
    _add_shared(p)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help/--version or usage errors
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args)
        config = effective_config(args)
        os.makedirs(args.out_dir, exist_ok=True)
        handler = {
            "synth": cmd_synth,
            "select": cmd_select,
            "bootstrap": cmd_bootstrap,
            "correlate": cmd_correlate,
            "embed": cmd_embed,
            "report": cmd_report,
        }[args.command]
        return handler(args, config)
    except (tabular.TableFormatError, CLIError) as exc:
        code = getattr(exc, "exit_code", 1)
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return code
    except Exception as exc:  # runtime failures
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
