"""Command-line front end: ``devprints <command> [options]``.

Commands: synth, ingest, entropy, topics, process, stats and report (all of
them in sequence).  Options may also come from a ``--config`` file of
``key = value`` lines (``#`` starts a comment, keys are option names with
dashes or underscores).  Explicit flags override the file.

Exit codes: 0 success, 1 usage error, 2 input validation failure, 3
numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import re
import sys
import tempfile
from collections import OrderedDict
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from . import eventlog as ev
from . import ngram, process, stats, svg, synth, topics

logger = logging.getLogger("devprints")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
ENV_OUT = "DEVPRINTS_OUT"
DEFAULT_OUT = "devprints-out"
# options that never influence output bytes, so they stay out of the config digest
_UNDIGESTED = {"config", "jobs", "out", "verbose", "command", "handler", "timing"}


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- output helpers ----------------------------------------------------------------------------


def write_atomic(path: Path, text: str) -> None:
    """Write through a temporary file in the same directory, then rename over the target."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _num(x: float) -> str:
    if isinstance(x, float) and not math.isfinite(x):
        return "NA" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return f"{x:.10g}"


class Run:
    """Resolved options of one command plus provenance stamping."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out or os.environ.get(ENV_OUT) or DEFAULT_OUT)
        self.digest = config_digest(args)

    @property
    def meta(self) -> dict:
        return {"tool": "devprints", "version": __version__, "command": self.args.command,
                "seed": self.args.seed, "config": self.digest}

    @property
    def stamp(self) -> str:
        return f"devprints {self.args.command} seed={self.args.seed} config={self.digest}"

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        buf = io.StringIO()
        buf.write(f"# {self.stamp}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, float) else v for v in row])
        return self.text(name, buf.getvalue())

    def json(self, name: str, obj: dict) -> Path:
        return self.text(name, json.dumps({"_meta": self.meta, **obj}, indent=2, ensure_ascii=False) + "\n")

    def text(self, name: str, text: str) -> Path:
        path = self.out / name
        write_atomic(path, text)
        logger.info("wrote %s", path)
        return path


def _file_digest(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        return path
    return hashlib.sha256(p.read_bytes()).hexdigest()[:16]


def config_digest(args: argparse.Namespace) -> str:
    """Digest of every output-relevant option; file arguments contribute their content hash."""
    items = {}
    for key, value in sorted(vars(args).items()):
        if key in _UNDIGESTED or callable(value):
            continue
        if key in _PATH_OPTIONS and value:
            value = [_file_digest(v) for v in value] if isinstance(value, list) else _file_digest(value)
        items[key] = value
    blob = json.dumps(items, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def read_table(path: str | Path) -> list[dict[str, str]]:
    """CSV rows as dicts; lines starting with ``#`` are provenance comments and skipped."""
    lines = [l for l in _read_text(path).splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def _pmap(fn: Callable, items: list, jobs: int) -> list:
    """Order-preserving map, optionally over worker processes."""
    if jobs > 1 and len(items) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _load_canonical(run: Run, case_key: str) -> ev.EventLog:
    path = run.args.log or run.out / "events.jsonl"
    try:
        log = ev.loads_jsonl(_read_text(path), case_key=case_key)
    except (json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"{path} is not a canonical event log ({exc})") from None
    if not log.sessions:
        raise InputError(f"{path} holds no events")
    return log


# -- grouping ------------------------------------------------------------------------------------------


def resolve_groups(args: argparse.Namespace, cases: Sequence[str]) -> tuple[dict[str, str], list[str] | None]:
    """Case -> group label from an explicit CSV, a score table (rank or quantile) or nothing.

    Returns the mapping and, when the scheme implies one, a display order of the groups.
    """
    if getattr(args, "groups", None):
        rows = read_table(args.groups)
        if rows and not {"case", "group"} <= set(rows[0]):
            raise InputError(f"{args.groups} needs columns case,group")
        return {r["case"]: r["group"] for r in rows}, None
    if getattr(args, "scores", None):
        rows = read_table(args.scores)
        id_col, score_col = args.id_column, args.score_column
        if rows and not {id_col, score_col} <= set(rows[0]):
            raise InputError(f"{args.scores} needs columns {id_col},{score_col}")
        try:
            scores = {r[id_col]: float(r[score_col]) for r in rows if r[id_col] in set(cases)}
        except ValueError as exc:
            raise InputError(f"bad score in {args.scores}: {exc}") from None
        if args.quantiles:
            lo, hi = args.quantiles
            mapping = stats.group_by_quantile(scores, lo, hi)
            order = [f">Q{int(hi * 100)}", "Others", f"<Q{int(lo * 100)}"]
        else:
            mapping = stats.group_by_rank(scores, args.top, args.bottom)
            order = [f"Top{args.top}", "Others", f"Bottom{args.bottom}"]
        return mapping, order
    return {}, None


# -- commands ------------------------------------------------------------------------------------------


def cmd_synth(run: Run) -> int:
    a = run.args
    spec = synth.SyntheticSpec(
        participants=a.participants, profiles=a.profiles, sessions=(a.sessions_min, a.sessions_max),
        session_length=a.session_length, planted_gap=not a.no_gap, top=a.top, bottom=a.bottom,
        seed=a.seed, secret=a.secret.encode("utf-8"),
    )
    data = synth.generate_log(spec)
    meta_line = json.dumps({ev.META_KEY: run.meta}, separators=(",", ":")) + "\n"
    run.text("log.jsonl", meta_line + data.jsonl())
    run.csv("participants.csv", ["username", "graduation", "profile", "score"],
            ([p.username, p.graduation, p.profile, f"{p.score:.1f}"] for p in data.participants))
    run.json("profiles.json", {"profiles": [
        {"name": p.name, "density": p.density, "states": list(p.states), "start": list(p.start),
         "transitions": [list(r) for r in p.transitions],
         "commands": [[list(c) for c in cmds] for cmds in p.commands]}
        for p in data.profiles
    ]})
    print(f"synthesized {len(data.records)} events for {len(data.participants)} participants "
          f"({len(data.profiles)} profiles) into {run.out}")
    return EXIT_OK


def cmd_ingest(run: Run) -> int:
    a = run.args
    logs = []
    for path in a.inputs:
        try:
            data = Path(path).read_bytes()
        except FileNotFoundError:
            raise InputError(f"file not found: {path}") from None
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc}") from None
        try:
            logs.append(ev.parse_events(data, a.case_key))
        except ev.ParseError as exc:
            raise InputError(f"{path}: {exc}") from None
    log = ev.merge_logs(logs)
    for err in log.errors:
        logger.warning("record %d rejected: %s", err.index, err.message)
    tamper = ev.verify_hashes(log, a.secret.encode("utf-8"))
    if tamper.tampered:
        logger.warning("%d event(s) fail the hash check", tamper.tampered)
    clean = ev.dedupe(log)
    duplicates = len(log) - len(clean)
    if a.activity_map:
        try:
            amap = ev.ActivityMap.from_csv(a.activity_map)
        except FileNotFoundError:
            raise InputError(f"file not found: {a.activity_map}") from None
        except (KeyError, ValueError, re.error) as exc:
            raise InputError(f"bad activity map {a.activity_map}: {exc}") from None
    else:
        amap = ev.DEFAULT_ACTIVITY_MAP
    clean = ev.recode_activities(clean, amap)

    meta_line = json.dumps({ev.META_KEY: run.meta}, separators=(",", ":")) + "\n"
    run.text("events.jsonl", meta_line + ev.dumps_jsonl(clean))
    run.text("events.csv", f"# {run.stamp}\n" + ev.dumps_csv(clean))
    summary = {
        "inputs": [Path(p).name for p in a.inputs],
        "events": len(clean),
        "cases": len(clean.sessions),
        "rejected_records": [{"index": e.index, "message": e.message} for e in log.errors],
        "duplicates_removed": duplicates,
        "hash_check": tamper.counts,
        "activities": dict(sorted(_count(e.activity_name for e in clean.events()).items())),
    }
    run.json("ingest.json", summary)
    print(f"ingested {len(clean)} events for {len(clean.sessions)} cases; "
          f"rejected {len(log.errors)}, duplicates {duplicates}, tampered {tamper.tampered}")
    if tamper.tampered:
        print(f"warning: {tamper.tampered} event(s) failed the hash check", file=sys.stderr)
    return EXIT_OK


def _count(items: Iterable[str]) -> dict[str, int]:
    out: dict[str, int] = {}
    for x in items:
        out[x] = out.get(x, 0) + 1
    return out


def _entropy_task(task):
    name, sentences, n, folds, seed, smoothing = task
    return name, n, ngram.kfold_cross_entropy(sentences, [n], folds, seed, smoothing)[n]


def cmd_entropy(run: Run) -> int:
    a = run.args
    corpora: "OrderedDict[str, list]" = OrderedDict()
    if not a.text_only:
        log = _load_canonical(run, a.session_key)
        for level in a.levels:
            corpora[level] = list(ev.to_sentences(log.sessions, level).sentences)
    if a.english:
        text = synth.english_text() if a.english == "builtin" else _read_text(a.english)
        corpora["english"] = ngram.tokenize_text(text)
    if not corpora:
        raise UsageError("nothing to analyse: give a log, --english, or both")
    for name, sentences in corpora.items():
        if len(sentences) < a.folds:
            raise InputError(f"{name} corpus has {len(sentences)} sentence(s), fewer than {a.folds} folds")
    smoothing = ngram.Smoothing(a.smoothing, k=a.add_k, min_count=a.min_count)
    tasks = [(name, s, n, a.folds, a.seed, smoothing) for name, s in corpora.items() for n in a.orders]
    try:
        results = _pmap(_entropy_task, tasks, a.jobs)
    except ngram.ZeroProbabilityError as exc:
        raise NumericalError(f"{exc}; use katz or additive smoothing") from None
    rows, curves = [], OrderedDict()
    for name, n, rep in results:
        for f in rep.folds:
            rows.append([name, n, f.fold, f.entropy, f.perplexity, f.oov_rate])
        curves.setdefault(name, []).append((n, rep.mean))
    run.csv("entropy.csv", ["level", "n", "fold", "entropy_bits", "perplexity", "oov_rate"], rows)
    run.text("entropy.svg", svg.line_chart(curves, "Cross-entropy by n-gram order", "n",
                                           "bits per token", comment=run.stamp))
    for name, pts in curves.items():
        print(f"{name}: " + ", ".join(f"H({n})={h:.3f}" for n, h in pts))
    return EXIT_OK


def cmd_topics(run: Run) -> int:
    a = run.args
    log = _load_canonical(run, a.doc_key)
    corpus = ev.to_sentences(log.sessions, a.level)
    dtm = topics.build_docs(corpus.sentences, a.ngram_order, doc_ids=corpus.case_ids)
    ks = range(a.k_min, a.k_max + 1)
    fit = dict(iterations=a.iterations, burn_in=a.burn_in, alpha=a.alpha, beta=a.beta)
    report = topics.select_k(dtm, ks, seed=a.seed, keep_models=True, jobs=a.jobs, **fit)
    model = report.models[report.chosen_k]
    prints = topics.extract_fingerprints(model, top_n=a.top_n)

    run.csv("selection.csv", ["k", "ngram_order", "metric", "raw", "normalized"], report.rows())
    run.json("fingerprints.json", {
        "level": a.level,
        "ngram_order": a.ngram_order,
        "chosen_k": report.chosen_k,
        "best_k": {m: report.argbest(m) for m in report.raw},
        "documents": len(dtm.doc_ids),
        "distinct_patterns": prints.distinct_patterns,
        "fingerprints": [
            {"topic": f.topic, "members": list(f.members),
             "top_terms": [[t, round(w, 10)] for t, w in f.top_terms]}
            for f in prints.fingerprints
        ],
        "assignment": dict(sorted(prints.assignment.items())),
    })
    curves = {m: list(zip(report.ks, report.normalized[m])) for m in report.normalized}
    run.text("selection.svg", svg.line_chart(curves, "Topic-count selection metrics", "k",
                                             "normalized score", comment=run.stamp))
    run.text("fingerprints.svg", svg.bar_chart(
        [str(f.topic) for f in prints.fingerprints], [len(f.members) for f in prints.fingerprints],
        f"Members per fingerprint (k={report.chosen_k})", "topic", "participants", comment=run.stamp))

    if a.heldout_orders:
        sessions = _load_canonical(run, a.session_key)
        sentences = ev.to_sentences(sessions.sessions, a.level).sentences
        if len(sentences) < a.folds:
            raise InputError(f"{len(sentences)} sessions, fewer than {a.folds} folds")
        table = topics.kfold_lda_entropy(sentences, a.heldout_orders, ks, a.folds, a.seed, **fit)
        rows = [[w, k, fold, h] for (w, k), hs in sorted(table.items()) for fold, h in enumerate(hs)]
        run.csv("lda_entropy.csv", ["ngram_order", "k", "fold", "entropy_bits"], rows)
        curves = OrderedDict()
        for (w, k), hs in sorted(table.items()):
            curves.setdefault(f"w={w}", []).append((k, sum(hs) / len(hs)))
        run.text("lda_entropy.svg", svg.line_chart(curves, "Held-out LDA entropy", "k",
                                                   "bits per term", comment=run.stamp))
    print(f"chosen k={report.chosen_k}; {prints.distinct_patterns} distinct fingerprints over "
          f"{len(dtm.doc_ids)} documents")
    return EXIT_OK


def _split_traces(session: ev.Session, trace_key: str, level: str) -> list[tuple[str, ...]]:
    traces: "OrderedDict[str, list[str]]" = OrderedDict()
    for e in session.events:
        traces.setdefault(e.get(trace_key, ""), []).append(ev.event_token(e, level))
    return [tuple(t) for t in traces.values()]


def _process_task(task):
    case, traces, interactions, min_freq = task
    net, metrics = process.evaluate(traces, interactions, min_freq)
    return case, net, metrics


def cmd_process(run: Run) -> int:
    a = run.args
    log = _load_canonical(run, a.case_key)
    cases = [s.case_id for s in log.sessions]
    groups, _ = resolve_groups(a, cases)
    assignment = {}
    if a.fingerprints:
        try:
            assignment = json.loads(_read_text(a.fingerprints))["assignment"]
        except (json.JSONDecodeError, KeyError):
            raise InputError(f"{a.fingerprints} is not a fingerprint report") from None
    tasks = [(s.case_id, _split_traces(s, a.trace_key, a.level), len(s.events), a.min_edge_frequency)
             for s in log.sessions]
    results = _pmap(_process_task, tasks, a.jobs)
    rows = []
    for case, net, m in results:
        rows.append([case, groups.get(case, ""), assignment.get(case, ""), m.interactions, m.fitness,
                     m.precision, m.generalization, m.simplicity, m.average,
                     f"{m.duration:.3f}" if a.timing else ""])
        safe = re.sub(r"[^A-Za-z0-9_.-]", "_", case)
        run.text(f"nets/{safe}.dot", f"// {run.stamp}\n" + net.to_dot(f"case_{safe}"))
    run.csv("process.csv", ["case", "group", "fingerprint", "interactions", "fitness", "precision",
                            "generalization", "simplicity", "average", "duration"], rows)
    print(f"evaluated {len(rows)} process model(s)")
    return EXIT_OK


STAT_METRICS = ("fitness", "precision", "generalization", "simplicity", "average", "interactions")


def cmd_stats(run: Run) -> int:
    a = run.args
    table = read_table(a.input)
    if not table:
        raise InputError(f"{a.input} has no rows")
    missing = [c for c in [a.case_column, *a.metrics] if c not in table[0]]
    if missing:
        raise InputError(f"{a.input} lacks column(s): {', '.join(missing)}")
    cases = [r[a.case_column] for r in table]
    mapping, order = resolve_groups(a, cases)
    if not mapping:
        if a.group_column not in table[0]:
            raise InputError(f"{a.input} lacks the group column {a.group_column!r}")
        mapping = {r[a.case_column]: r[a.group_column] for r in table}
    labelled = [r for r in table if mapping.get(r[a.case_column])]
    if len(labelled) < len(table):
        logger.warning("%d case(s) without a group are left out", len(table) - len(labelled))
    present = sorted({mapping[r[a.case_column]] for r in labelled})
    if a.group_order:
        order = list(a.group_order)
    order = [g for g in (order or present) if g in present] + [g for g in present if g not in (order or [])]
    if len(order) < 2:
        raise InputError(f"need at least two groups, found {order}")

    def values(metric: str, rows) -> list[float]:
        try:
            return [float(r[metric]) for r in rows]
        except ValueError as exc:
            raise InputError(f"non-numeric {metric}: {exc}") from None

    normality, anova_rows, tukey_rows, failures = [], [], [], []
    md = [f"<!-- {run.stamp} -->", "", "# Group comparison", "",
          f"Groups: " + ", ".join(f"{g} (n={sum(mapping[r[a.case_column]] == g for r in labelled)})"
                                  for g in order), ""]
    md += ["## Shapiro-Wilk", "", "| Metric | W | p-value |", "|---|---|---|"]
    for metric in a.metrics:
        x = values(metric, labelled)
        try:
            sw = stats.shapiro_wilk(x)
            normality.append([metric, sw.n, sw.w, sw.p_value])
            md.append(f"| {metric} | {sw.w:.5f} | {sw.p_value:.5f} |")
        except ValueError as exc:
            normality.append([metric, len(x), "NA", "NA"])
            md.append(f"| {metric} | NA | NA |")
            logger.warning("Shapiro-Wilk for %s: %s", metric, exc)
    md += ["", "## One-way ANOVA and Tukey HSD", ""]
    for metric in a.metrics:
        groups = OrderedDict((g, values(metric, [r for r in labelled if mapping[r[a.case_column]] == g]))
                             for g in order)
        md += [f"### {metric}", ""]
        try:
            res = stats.anova_oneway(list(groups.values()))
            tk = stats.tukey_hsd(groups, a.alpha)
        except ValueError as exc:
            failures.append(metric)
            logger.warning("ANOVA for %s: %s", metric, exc)
            md += [f"Not computable: {exc}", ""]
            continue
        anova_rows.append([metric, "groups", res.df_between, res.ss_between, res.ms_between,
                           res.f_value, res.p_value])
        anova_rows.append([metric, "residuals", res.df_within, res.ss_within, res.ms_within, "", ""])
        md += ["| Source | Df | Sum Sq | Mean Sq | F-value | p-value |", "|---|---|---|---|---|---|",
               f"| groups | {res.df_between} | {res.ss_between:.5f} | {res.ms_between:.6f} | "
               f"{res.f_value:.3f} | {res.p_value:.5f}{stats.stars(res.p_value, a.alpha)} |",
               f"| residuals | {res.df_within} | {res.ss_within:.5f} | {res.ms_within:.6f} | | |", "",
               "| Pair | Diff | Lower | Upper | p-adj |", "|---|---|---|---|---|"]
        for p in tk.pairs:
            tukey_rows.append([metric, p.label, p.diff, p.lower, p.upper, p.p_adj,
                               "yes" if p.reject(a.alpha) else "no"])
            md.append(f"| {p.label} | {p.diff:.5f} | {p.lower:.5f} | {p.upper:.5f} | "
                      f"{p.p_adj:.5f}{stats.stars(p.p_adj, a.alpha)} |")
        md.append("")
    md.append(f"\\* significant at p < {a.alpha}")
    run.csv("stats_normality.csv", ["metric", "n", "w", "p_value"], normality)
    run.csv("stats_anova.csv", ["metric", "source", "df", "sum_sq", "mean_sq", "f_value", "p_value"],
            anova_rows)
    run.csv("stats_tukey.csv", ["metric", "pair", "diff", "lower", "upper", "p_adj", "reject"], tukey_rows)
    run.text("stats.md", "\n".join(md) + "\n")
    if failures and len(failures) == len(a.metrics):
        raise NumericalError("no metric could be compared: " + ", ".join(failures))
    for row in anova_rows[::2]:
        print(f"{row[0]}: F={_num(row[5])} p={_num(row[6])}{stats.stars(row[6], a.alpha)}")
    return EXIT_OK


def cmd_report(run: Run) -> int:
    """Run the whole pipeline into one output directory."""
    a = run.args
    common = ["--seed", str(a.seed), "--jobs", str(a.jobs), "--out", str(run.out)]
    inputs = list(a.inputs)
    scores = a.scores
    if a.synthetic or not inputs:
        _dispatch(common + ["synth", "--participants", str(a.participants), "--profiles", str(a.profiles)])
        inputs = [str(run.out / "log.jsonl")]
        scores = scores or str(run.out / "participants.csv")
    _dispatch(common + ["ingest", *inputs])
    _dispatch(common + ["entropy", "--english", "builtin", "--orders", *map(str, a.orders)])
    _dispatch(common + ["topics", "--k-min", str(a.k_min), "--k-max", str(a.k_max),
                        "--iterations", str(a.iterations), "--burn-in", str(a.burn_in)])
    grouping = ["--scores", scores, "--top", str(a.top), "--bottom", str(a.bottom)] if scores else []
    _dispatch(common + ["process", "--fingerprints", str(run.out / "fingerprints.json"), *grouping])
    if scores:
        _dispatch(common + ["stats", "--input", str(run.out / "process.csv")])
    else:
        logger.warning("no scores given; skipping group statistics")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------------------

_PATH_OPTIONS = {"inputs", "log", "activity_map", "english", "fingerprints", "groups", "scores", "input"}


def _grouping_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("grouping (optional)")
    g.add_argument("--groups", help="CSV with columns case,group")
    g.add_argument("--scores", help="CSV of per-case scores (e.g. participants.csv from synth)")
    g.add_argument("--id-column", default="username")
    g.add_argument("--score-column", default="score")
    g.add_argument("--top", type=int, default=5, help="size of the top-ranked group")
    g.add_argument("--bottom", type=int, default=5, help="size of the bottom-ranked group")
    g.add_argument("--quantiles", type=float, nargs=2, metavar=("LOW", "HIGH"),
                   help="group by score quantiles instead of rank counts")


def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    def default(value):
        return argparse.SUPPRESS if suppress else value

    p.add_argument("--seed", type=int, default=default(0))
    p.add_argument("--jobs", type=int, default=default(1), help="worker processes (never changes output bytes)")
    p.add_argument("--config", default=default(None), help="key = value option file; flags override it")
    p.add_argument("--out", default=default(None), help=f"output directory (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    p.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="devprints", description="Developer fingerprints from IDE event logs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    # the same options are accepted after the command name; they only override when given
    common = _Parser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_parser = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add_parser(*a, parents=[common], **kw)

    p = sub.add_parser("synth", help="generate a seeded synthetic PyCharm/Mooshak log")
    p.add_argument("--participants", type=int, default=37)
    p.add_argument("--profiles", type=int, default=19)
    p.add_argument("--sessions-min", type=int, default=3)
    p.add_argument("--sessions-max", type=int, default=6)
    p.add_argument("--session-length", type=int, default=30)
    p.add_argument("--no-gap", action="store_true", help="assign profiles without the planted score effect")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--bottom", type=int, default=5)
    p.add_argument("--secret", default="", help="hash secret")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("ingest", help="parse, check, dedupe and recode raw logs")
    p.add_argument("inputs", nargs="+", help="JSON array or JSON-lines files")
    p.add_argument("--case-key", default="username")
    p.add_argument("--activity-map", help="CSV with columns pattern_field,pattern,activity")
    p.add_argument("--secret", default=os.environ.get("DEVPRINTS_SECRET", ""), help="hash secret")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("entropy", help="k-fold n-gram cross-entropy curves")
    p.add_argument("--log", help="canonical log (default OUT/events.jsonl)")
    p.add_argument("--levels", nargs="+", default=["activity", "command"],
                   choices=["activity", "command", "category"])
    p.add_argument("--orders", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--session-key", default="session")
    p.add_argument("--smoothing", default="katz", choices=["katz", "additive", "mle"])
    p.add_argument("--add-k", type=float, default=1.0)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--english", help="plain-text file to compare against, or 'builtin'")
    p.add_argument("--text-only", action="store_true", help="skip the event log")
    p.set_defaults(handler=cmd_entropy)

    p = sub.add_parser("topics", help="LDA topic-count selection and fingerprints")
    p.add_argument("--log", help="canonical log (default OUT/events.jsonl)")
    p.add_argument("--doc-key", default="username", help="attribute defining one document")
    p.add_argument("--level", default="command", choices=["activity", "command", "category"])
    p.add_argument("--ngram-order", type=int, default=1)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--alpha", type=float, default=None, help="default 50/k")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--top-n", type=int, default=8)
    p.add_argument("--heldout-orders", type=int, nargs="*", default=[],
                   help="also compute held-out entropy over sessions for these n-gram orders")
    p.add_argument("--session-key", default="session")
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(handler=cmd_topics)

    p = sub.add_parser("process", help="per-case process discovery and quality metrics")
    p.add_argument("--log", help="canonical log (default OUT/events.jsonl)")
    p.add_argument("--case-key", default="username", help="one model per value (e.g. graduation)")
    p.add_argument("--trace-key", default="session")
    p.add_argument("--level", default="activity", choices=["activity", "command", "category"])
    p.add_argument("--min-edge-frequency", type=int, default=1)
    p.add_argument("--fingerprints", help="fingerprints.json from the topics command")
    p.add_argument("--timing", action="store_true", help="fill the duration column (not reproducible)")
    _grouping_options(p)
    p.set_defaults(handler=cmd_process)

    p = sub.add_parser("stats", help="Shapiro-Wilk, one-way ANOVA and Tukey HSD by group")
    p.add_argument("--input", help="per-case CSV (default OUT/process.csv)")
    p.add_argument("--metrics", nargs="+", default=list(STAT_METRICS))
    p.add_argument("--case-column", default="case")
    p.add_argument("--group-column", default="group")
    p.add_argument("--group-order", nargs="+")
    p.add_argument("--alpha", type=float, default=stats.ALPHA)
    _grouping_options(p)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("report", help="run synth/ingest/entropy/topics/process/stats end to end")
    p.add_argument("inputs", nargs="*", help="raw logs (omit to use a synthetic one)")
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--participants", type=int, default=37)
    p.add_argument("--profiles", type=int, default=19)
    p.add_argument("--scores", help="CSV of per-case scores for grouping")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--bottom", type=int, default=5)
    p.add_argument("--orders", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=300)
    p.set_defaults(handler=cmd_report)
    return parser


def load_config(path: str) -> dict[str, str]:
    cfg = {}
    for i, raw in enumerate(_read_text(path).splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


_GLOBAL_DESTS = {"seed", "jobs", "config", "out", "verbose"}


def _config_argv(parser: argparse.ArgumentParser, cfg: dict[str, str], skip: set[str]) -> list[str]:
    """Translate config entries that ``parser`` knows into option tokens."""
    tokens = []
    for action in parser._actions:
        if action.dest not in cfg or action.dest in skip or not action.option_strings:
            continue
        value = cfg[action.dest]
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(flag)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config {action.dest}: expected true/false, got {value!r}")
        elif action.nargs in ("+", "*") or isinstance(action.nargs, int):
            tokens += [flag, *value.replace(",", " ").split()]
        else:
            tokens += [flag, value]
    return tokens


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = load_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    global_tokens = _config_argv(parser, cfg, skip={"config"})
    sub_tokens = _config_argv(subparser, cfg, skip=_GLOBAL_DESTS)
    known = {a.dest for sp in parser._subparsers._group_actions[0].choices.values() for a in sp._actions}
    known |= {a.dest for a in parser._actions}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    # config tokens go first so that explicit flags, parsed later, win
    i = list(argv).index(args.command)
    argv = global_tokens + list(argv[:i]) + [args.command] + sub_tokens + list(argv[i + 1:])
    return parser.parse_args(argv)


def _dispatch(argv: Sequence[str]) -> int:
    args = parse_args(argv)
    if args.command == "stats" and not args.input:
        args.input = str(Path(args.out or os.environ.get(ENV_OUT) or DEFAULT_OUT) / "process.csv")
    return args.handler(Run(args))


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    verbose = "-v" in argv or "--verbose" in argv
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return _dispatch(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
