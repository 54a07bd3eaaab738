"""Command-line entry point: ``vove <command> --config run.json ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from vove import attributes, explain, metrics, pairs, store, training
from vove.config import RunConfig, load_config
from vove.errors import ValidationError

log = logging.getLogger("vove")


class CommandError(Exception):
    pass


def _path(args, cfg: RunConfig, key: str, required: bool = True, must_exist: bool = True) -> Path | None:
    value = getattr(args, key, None) or cfg.paths.get(key)
    if value is None:
        if required:
            raise CommandError(f"missing required path --{key.replace('_', '-')}")
        return None
    p = Path(value)
    if must_exist and not p.exists():
        raise CommandError(f"{key}: path does not exist: {p}")
    return p


def _out(args) -> Path:
    if not args.out:
        raise CommandError("missing --out")
    return Path(args.out)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_build_labels(args, cfg):
    src = _path(args, cfg, "annotations")
    out = _out(args)
    n = attributes.build_label_file(src, out)
    print(f"wrote {n} speaker labels to {out}")


def cmd_train(args, cfg):
    manifest_path = _path(args, cfg, "manifest")
    labels_path = _path(args, cfg, "labels")
    audio_root = _path(args, cfg, "audio_root", required=False)
    out = _out(args)
    manifest = store.read_manifest(manifest_path)
    labels = attributes.read_labels(labels_path)
    state, tlog = training.train(manifest, labels, cfg.model, cfg.frontend, audio_root=audio_root)
    out.parent.mkdir(parents=True, exist_ok=True)
    training.save_checkpoint(state, out)
    log_path = _path(args, cfg, "train_log", required=False, must_exist=False) or out.with_suffix(".train.jsonl")
    _write(log_path, tlog.to_jsonl())
    print(f"trained {state.epoch} epoch(s), selected epoch {tlog.selected_epoch} by {tlog.selection} loss; "
          f"checkpoint {out}")


def cmd_extract(args, cfg):
    manifest = store.read_manifest(_path(args, cfg, "manifest"))
    state = training.load_checkpoint(_path(args, cfg, "checkpoint"))
    audio_root = _path(args, cfg, "audio_root", required=False)
    out = _out(args)
    emb, errors = training.extract(manifest, state, audio_root)
    out.parent.mkdir(parents=True, exist_ok=True)
    store.write_store(emb, out)
    err_path = out.with_suffix(".errors.tsv")
    if errors:
        _write(err_path, "".join(f"{e.utterance_id}\t{e.audio_path}\t{e.message}\n" for e in errors))
        print(f"{len(errors)} utterance(s) failed; see {err_path}", file=sys.stderr)
    print(f"wrote {len(emb)} embeddings to {out}")


def _class_report(scores: list[metrics.ClassificationScores]) -> str:
    lines = []
    for s in scores:
        t = f"{s.threshold:g}"
        lines += [
            f"tau={t} precision_mean={s.precision_mean:.6f} precision_std={s.precision_std:.6f}",
            f"tau={t} recall_mean={s.recall_mean:.6f} recall_std={s.recall_std:.6f}",
            f"tau={t} f1_mean={s.f1_mean:.6f} f1_std={s.f1_std:.6f}",
            f"tau={t} n_samples={s.n_samples} skipped_precision={s.skipped['precision']} "
            f"skipped_recall={s.skipped['recall']} skipped_f1={s.skipped['f1']}",
        ]
    return "\n".join(lines) + "\n"


def cmd_eval_class(args, cfg):
    pred = store.read_store(_path(args, cfg, "pred_store"))
    pred.require_vove()
    gt_store_path = _path(args, cfg, "gt_store", required=False)
    out = _out(args)
    if gt_store_path is not None:
        gt = store.read_store(gt_store_path)
        index = gt.index
        missing = [u for u in pred.ids if u not in index]
        if missing:
            raise ValidationError(f"utterances without ground truth: {missing}")
        y = np.stack([gt.vectors[index[u]] for u in pred.ids]) if pred.ids else np.zeros((0, pred.dim))
    else:
        labels = attributes.read_labels(_path(args, cfg, "labels"))
        joined = store.join_manifest(pred, store.read_manifest(_path(args, cfg, "manifest")))
        missing = sorted({s for s in joined.speakers if s not in labels})
        if missing:
            raise ValidationError(f"no soft label for speakers: {missing}")
        y = np.stack([labels[s] for s in joined.speakers]) if pred.ids else np.zeros((0, pred.dim))
    thresholds = args.tau or cfg.metrics.thresholds
    scores = [metrics.classification_scores(pred.vectors, y, t) for t in thresholds]
    _write(out, _class_report(scores))
    _write(out.with_suffix(".json"), json.dumps([asdict(s) for s in scores], indent=2) + "\n")
    print(f"{'tau':>5} {'precision':>18} {'recall':>18} {'F1':>18}")
    for s in scores:
        print(f"{s.threshold:>5g} {s.precision_mean:>9.4f} ± {s.precision_std:.4f} "
              f"{s.recall_mean:>9.4f} ± {s.recall_std:.4f} {s.f1_mean:>9.4f} ± {s.f1_std:.4f}")


def cmd_eval_sim(args, cfg):
    emb = store.read_store(_path(args, cfg, "store"))
    joined = store.join_manifest(emb, store.read_manifest(_path(args, cfg, "manifest")))
    out = _out(args)
    m = cfg.metrics
    report = metrics.similarity_report(joined, m.n_per_speaker, m.repeats, m.ks, cfg.seed)
    _write(out, report.to_text())
    _write(out.with_suffix(".json"), report.to_json())
    print(report.table(), end="")


def cmd_build_pairs(args, cfg):
    p = cfg.pairs
    set_kind = args.set_kind or p.set_kind
    manifest = store.read_manifest(_path(args, cfg, "manifest"))
    out = _out(args)
    thresholds = dict(dissimilar_threshold=p.dissimilar_threshold, similar_threshold=p.similar_threshold)
    if args.kind == "inter":
        emb = store.read_store(_path(args, cfg, "store"))
        items = pairs.build_inter_pairs(emb, manifest, set_kind, p.n_pairs, cfg.seed, p.gender_control,
                                        p.exclude_gender_attrs, **thresholds)
    else:
        gt = store.read_store(_path(args, cfg, "gt_store"))
        synth = store.read_store(_path(args, cfg, "synth_store"))
        wer_path = _path(args, cfg, "wer", required=False)
        wer = None
        if wer_path is not None:
            wer = {}
            for lineno, line in enumerate(wer_path.read_text(encoding="utf-8").splitlines(), 1):
                if line.strip():
                    uid, _, value = line.partition("\t")
                    try:
                        wer[uid] = float(value)
                    except ValueError:
                        raise ValidationError(f"{wer_path}:{lineno}: expected utterance_id<TAB>wer") from None
        items = pairs.build_intra_pairs(gt, synth, manifest, set_kind, p.n_pairs, cfg.seed, wer,
                                        p.selection_policy, p.exclude_gender_attrs, **thresholds)
    out.parent.mkdir(parents=True, exist_ok=True)
    pairs.write_pairs(items, out)
    print(f"wrote {len(items)} {args.kind} {set_kind} pairs to {out}")


def cmd_export_abx(args, cfg):
    items = pairs.read_pairs(_path(args, cfg, "pairs"))
    manifest = store.read_manifest(_path(args, cfg, "manifest"))
    audio_root = _path(args, cfg, "audio_root", required=False)
    out = _out(args)
    a = cfg.abx
    fake_a, fake_b = args.fake_a or a.fake_audio_a, args.fake_b or a.fake_audio_b
    if not fake_a or not fake_b:
        raise CommandError("a fake pair is required: --fake-a/--fake-b or abx.fake_audio_a/_b in the config")
    fake = pairs.FakePair(fake_a, fake_b, args.fake_label or a.fake_label, args.fake_answer or a.fake_answer)
    pkg = pairs.export_abx(items, manifest, fake, out, audio_root, cfg.seed)
    print(f"wrote {len(pkg.trials)} trials (1 fake) to {out}")


def cmd_score_abx(args, cfg):
    responses = pairs.read_responses(_path(args, cfg, "responses"))
    key = pairs.read_answer_key(_path(args, cfg, "answer_key"))
    out = _out(args)
    score = pairs.score_abx(responses, key)
    lines = [
        f"accuracy={score.accuracy:.2f}",
        f"n_responses={score.n_responses}",
        f"retained_respondents={len(score.retained_respondents)}",
        f"excluded_respondents={len(score.excluded_respondents)}",
    ]
    lines += [f"accuracy[{a}]={v:.2f}" for a, v in score.per_attribute.items()]
    _write(out, "\n".join(lines) + "\n")
    _write(out.with_suffix(".json"), json.dumps(asdict(score), indent=2) + "\n")
    print(f"ABX accuracy {score.accuracy:.2f}% over {score.n_responses} responses "
          f"({len(score.excluded_respondents)} respondent(s) excluded)")


def cmd_explain(args, cfg):
    emb = store.read_store(_path(args, cfg, "store"))
    emb.require_vove()
    out = _out(args)
    index = emb.index
    wanted = args.utterances
    unknown = [u for u in wanted if u not in index]
    if unknown:
        raise ValidationError(f"utterances not in store: {unknown}")
    if len(wanted) == 1:
        entries = explain.profile(emb[wanted[0]], cfg.explain.top_n, cfg.explain.floor)
        text = explain.profile_text(wanted[0], entries)
        structured = json.dumps({"utterance_id": wanted[0], "profile": entries}, indent=2) + "\n"
    elif len(wanted) == 2:
        rep = explain.diff_report(emb[wanted[0]], emb[wanted[1]])
        text = f"[{wanted[0]} vs {wanted[1]}]\n" + rep.to_text()
        structured = rep.to_json()
    else:
        raise CommandError("explain takes one utterance (profile) or two (difference)")
    _write(out, text)
    _write(out.with_suffix(".json"), structured)
    print(text, end="")


COMMANDS = {
    "build-labels": cmd_build_labels,
    "train": cmd_train,
    "extract": cmd_extract,
    "eval-class": cmd_eval_class,
    "eval-sim": cmd_eval_sim,
    "build-pairs": cmd_build_pairs,
    "export-abx": cmd_export_abx,
    "score-abx": cmd_score_abx,
    "explain": cmd_explain,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vove", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, *path_keys):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output path")
        for key in path_keys:
            p.add_argument("--" + key.replace("_", "-"), dest=key)
        return p

    add("build-labels", "annotations")
    add("train", "manifest", "labels", "audio_root", "train_log")
    add("extract", "manifest", "checkpoint", "audio_root")
    p = add("eval-class", "pred_store", "gt_store", "labels", "manifest")
    p.add_argument("--tau", type=float, action="append", help="threshold; repeatable")
    add("eval-sim", "store", "manifest")
    p = add("build-pairs", "store", "gt_store", "synth_store", "manifest", "wer")
    p.add_argument("--kind", choices=("inter", "intra"), default="inter")
    p.add_argument("--set-kind", choices=("dissimilar", "similar"))
    p = add("export-abx", "pairs", "manifest", "audio_root")
    p.add_argument("--fake-a")
    p.add_argument("--fake-b")
    p.add_argument("--fake-label")
    p.add_argument("--fake-answer", choices=("A", "B"))
    add("score-abx", "responses", "answer_key")
    p = add("explain", "store")
    p.add_argument("utterances", nargs="+", metavar="UTTERANCE_ID")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        COMMANDS[args.command](args, cfg)
    except (CommandError, ValidationError, FileNotFoundError, IndexError) as exc:
        print(f"vove {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
