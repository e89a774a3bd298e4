"""Command-line interface.

Every command is driven by (config file, flags, seed); flags override
file values, which override profile defaults.  Exit codes: 0 success,
1 configuration error, 2 file/format error, 3 runtime error.
"""

from __future__ import annotations

import json
import logging
import os
import sys

import click

from . import synthetic
from .config import build_config
from .corpus import (Vocabulary, encode_sequence, iter_corpus_lines, tokenize,
                     clean_text)
from .errors import ConfigError, KreplyError
from .metrics import evaluate_run
from .session import Session
from .synthetic import SynthSpec

log = logging.getLogger("kreply")


def _common(f):
    f = click.option("--config", "config_path", type=click.Path(exists=False),
                     default=None, help="INI config file.")(f)
    f = click.option("--profile", type=click.Choice(["paper", "desk"]),
                     default=None, help="Hyperparameter profile.")(f)
    f = click.option("--seed", type=int, default=None, help="Root random seed.")(f)
    return f


def _cfg(config_path, profile, seed, **overrides):
    overrides = dict(overrides)
    overrides["seed"] = seed
    return build_config(config_path, profile, overrides)


def _apply_flags(session: Session, **flags) -> None:
    for key, value in flags.items():
        if value is not None:
            setattr(session.cfg, key, value)


def _ensure_parent(path) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


@click.group()
def cli() -> None:
    """Joint latent-word inference and diverse response generation."""


@cli.command()
@_common
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--bags", default=2000, show_default=True)
@click.option("--topic-vocab", default=50, show_default=True)
@click.option("--filler-vocab", default=100, show_default=True)
@click.option("--topics-per-post", default=3, show_default=True)
@click.option("--responses-per-bag", default=3, show_default=True)
def synth(config_path, profile, seed, out_dir, bags, topic_vocab, filler_vocab,
          topics_per_post, responses_per_bag) -> None:
    """Write a synthetic corpus, its topic oracle, and a stopword list."""
    cfg = _cfg(config_path, profile, seed)
    spec = SynthSpec(bags=bags, topic_vocab=topic_vocab, filler_vocab=filler_vocab,
                     topics_per_post=topics_per_post,
                     responses_per_bag=responses_per_bag, seed=cfg.seed)
    paths = synthetic.write_corpus_files(spec, out_dir)
    for role, path in sorted(paths.items()):
        log.info("%s: %s", role, path)


@cli.command()
@_common
@click.option("--train", "train_corpus", type=click.Path(), default=None)
@click.option("--vocab-out", required=True, type=click.Path())
@click.option("--bags-out", type=click.Path(), default=None)
def prep(config_path, profile, seed, train_corpus, vocab_out, bags_out) -> None:
    """Build the vocabulary (and optionally encoded bags) from a corpus."""
    cfg = _cfg(config_path, profile, seed, train_corpus=train_corpus)
    if not cfg.train_corpus:
        raise ConfigError("prep needs a training corpus (--train or [paths])")

    def streams():
        for _ln, post, responses in iter_corpus_lines(cfg.train_corpus):
            yield tokenize(clean_text(post, cfg.profile))
            for r in responses:
                yield tokenize(clean_text(r, cfg.profile))

    vocab = Vocabulary.from_streams(streams(), cfg.vocab_size)
    _ensure_parent(vocab_out)
    vocab.save(vocab_out)
    log.info("vocabulary: %d tokens -> %s", len(vocab), vocab_out)
    if bags_out:
        from .corpus import load_bags
        bags = load_bags(cfg.train_corpus, vocab, cfg.min_response_chars,
                         cfg.max_len, cfg.profile)
        _ensure_parent(bags_out)
        with open(bags_out, "w", encoding="utf-8") as fh:
            for bag in bags:
                fh.write(json.dumps({"post": bag.post, "responses": bag.responses})
                         + "\n")
        log.info("encoded bags: %d -> %s", len(bags), bags_out)


def _fresh_session(cfg) -> Session:
    if not cfg.vocab_path:
        raise ConfigError("a vocabulary file is required (--vocab or [paths])")
    vocab = Vocabulary.load(cfg.vocab_path)
    return Session.fresh(cfg, vocab)


@cli.command("pretrain-infer")
@_common
@click.option("--train", "train_corpus", type=click.Path(), default=None)
@click.option("--vocab", "vocab_path", type=click.Path(), default=None)
@click.option("--stopwords", "stopwords_path", type=click.Path(), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
def pretrain_infer(config_path, profile, seed, train_corpus, vocab_path,
                   stopwords_path, epochs, out_path) -> None:
    """Pretrain the latent-word inference network on post keywords."""
    cfg = _cfg(config_path, profile, seed, train_corpus=train_corpus,
               vocab_path=vocab_path, stopwords_path=stopwords_path,
               pretrain_infer_epochs=epochs)
    if not cfg.train_corpus:
        raise ConfigError("pretrain-infer needs a training corpus")
    session = _fresh_session(cfg)
    bags = session.load_split(cfg.train_corpus)
    session.trainer.pretrain_inference(bags, cfg.pretrain_infer_epochs)
    _ensure_parent(out_path)
    session.save(out_path)
    log.info("checkpoint: %s", out_path)


@cli.command("pretrain-gen")
@_common
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--train", "train_corpus", type=click.Path(), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
def pretrain_gen(config_path, profile, seed, ckpt_path, train_corpus, epochs,
                 out_path) -> None:
    """Pretrain the generation network at z = argmax p(z|x)."""
    session = Session.from_checkpoint(ckpt_path)
    _apply_flags(session, seed=seed, train_corpus=train_corpus,
                 pretrain_gen_epochs=epochs)
    if not session.cfg.train_corpus:
        raise ConfigError("pretrain-gen needs a training corpus")
    bags = session.load_split(session.cfg.train_corpus)
    session.trainer.pretrain_generation(bags, session.cfg.pretrain_gen_epochs)
    _ensure_parent(out_path)
    session.save(out_path)
    log.info("checkpoint: %s", out_path)


@cli.command("train-rl")
@_common
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--train", "train_corpus", type=click.Path(), default=None)
@click.option("--valid", "valid_corpus", type=click.Path(), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--log", "log_path", type=click.Path(), default=None,
              help="Epoch stats JSON-Lines file.")
@click.option("--out", "out_path", required=True, type=click.Path())
def train_rl(config_path, profile, seed, ckpt_path, train_corpus, valid_corpus,
             epochs, log_path, out_path) -> None:
    """Joint reinforcement training of both networks."""
    session = Session.from_checkpoint(ckpt_path, run_log=log_path)
    _apply_flags(session, seed=seed, train_corpus=train_corpus,
                 valid_corpus=valid_corpus, rl_epochs=epochs)
    if not session.cfg.train_corpus:
        raise ConfigError("train-rl needs a training corpus")
    if log_path:
        _ensure_parent(log_path)
    train_bags = session.load_split(session.cfg.train_corpus)
    valid_bags = (session.load_split(session.cfg.valid_corpus)
                  if session.cfg.valid_corpus else None)
    session.trainer.train_rl(train_bags, valid_bags, session.cfg.rl_epochs)
    _ensure_parent(out_path)
    session.save(out_path)
    log.info("checkpoint: %s", out_path)


@cli.command()
@_common
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", type=click.Path(), default=None)
@click.option("--n-top", type=int, default=None)
@click.option("--k", "decode_k", type=int, default=None)
@click.option("--beam", "beam_width", type=int, default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
def generate(config_path, profile, seed, ckpt_path, corpus_path, n_top,
             decode_k, beam_width, out_path) -> None:
    """Select K diverse latent words per post and beam-decode one response each."""
    session = Session.from_checkpoint(ckpt_path)
    _apply_flags(session, seed=seed, n_top=n_top, decode_k=decode_k,
                 beam_width=beam_width, test_corpus=corpus_path)
    if not session.cfg.test_corpus:
        raise ConfigError("generate needs an input corpus (--corpus or [paths])")
    bags = session.load_split(session.cfg.test_corpus)
    _ensure_parent(out_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        for idx, bag in enumerate(bags):
            latents, responses = session.respond(bag.post, idx)
            rec = {
                "post": bag.post_text,
                "latents": [session.vocab.tokens[z] for z in latents],
                "responses": [session.ids_to_text(r) for r in responses],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            if (idx + 1) % 50 == 0:
                log.info("generated %d/%d posts", idx + 1, len(bags))
    log.info("results: %s", out_path)


def _read_results(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if not all(key in obj for key in ("post", "latents", "responses")):
                from .errors import CorpusFormatError
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected post/latents/responses keys")
            rows.append(obj)
    return rows


def _reference_map(path):
    refs: dict[str, list[str]] = {}
    for _ln, post, responses in iter_corpus_lines(path):
        refs.setdefault(post, []).extend(responses)
    return refs


@cli.command()
@_common
@click.option("--results", "results_path", required=True, type=click.Path())
@click.option("--references", "refs_path", required=True, type=click.Path())
@click.option("--top-k", default=3, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def evaluate(config_path, profile, seed, results_path, refs_path, top_k,
             out_path) -> None:
    """BLEU-1..4 and distinct-1/2 of a generation results file."""
    cfg = _cfg(config_path, profile, seed)
    report = evaluate_run(_read_results(results_path), _reference_map(refs_path),
                          top_k, cfg.to_dict())
    if out_path:
        _ensure_parent(out_path)
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        log.info("report: %s", out_path)
    click.echo(report.to_text())


@cli.command("ablate-latent-size")
@_common
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--pools", default="10,50,200", show_default=True,
              help="Comma-separated candidate pool sizes.")
@click.option("--top-k", default=3, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
def ablate_latent_size(config_path, profile, seed, ckpt_path, corpus_path,
                       pools, top_k, out_dir) -> None:
    """Generate + evaluate across candidate pool sizes; emit a comparison table."""
    try:
        sizes = [int(s) for s in pools.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse --pools {pools!r}") from exc
    if not sizes:
        raise ConfigError("--pools needs at least one size")
    os.makedirs(out_dir, exist_ok=True)
    refs = _reference_map(corpus_path)
    table: dict[str, dict] = {}
    for size in sizes:
        session = Session.from_checkpoint(ckpt_path)
        _apply_flags(session, seed=seed, test_corpus=corpus_path, n_top=size)
        bags = session.load_split(corpus_path)
        results = []
        for idx, bag in enumerate(bags):
            latents, responses = session.respond(bag.post, idx)
            results.append({
                "post": bag.post_text,
                "latents": [session.vocab.tokens[z] for z in latents],
                "responses": [session.ids_to_text(r) for r in responses],
            })
        out_path = os.path.join(out_dir, f"results_pool{size}.jsonl")
        with open(out_path, "w", encoding="utf-8") as fh:
            for rec in results:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        report = evaluate_run(results, refs, top_k, session.cfg.to_dict())
        table[str(size)] = report.means
        log.info("pool %d evaluated", size)
    with open(os.path.join(out_dir, "ablation.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(table, sort_keys=True, indent=2) + "\n")
    header = "pool    " + "".join(f"{k:>11}" for k in
                                  ("bleu_1", "bleu_2", "bleu_3", "bleu_4",
                                   "distinct_1", "distinct_2"))
    click.echo(header)
    for size in sizes:
        means = table[str(size)]
        click.echo(f"{size:<8}" + "".join(
            f"{means[k]:>11.3f}" for k in ("bleu_1", "bleu_2", "bleu_3",
                                           "bleu_4", "distinct_1", "distinct_2")))


@cli.command("export-attention")
@_common
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--limit", default=10, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def export_attention(config_path, profile, seed, ckpt_path, corpus_path, limit,
                     out_path) -> None:
    """Write attention traces for each (post, selected latent) pair."""
    session = Session.from_checkpoint(ckpt_path)
    _apply_flags(session, seed=seed)
    bags = session.load_split(corpus_path)[:limit]
    _ensure_parent(out_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        for idx, bag in enumerate(bags):
            latents = session.select_latents(bag.post, idx)
            for z in latents:
                ids, trace = session.gen.greedy_decode(bag.post, z,
                                                       session.cfg.max_len)
                rec = {
                    "post": session.vocab.decode(bag.post),
                    "latent": session.vocab.tokens[z],
                    "z_weights": trace.z_weights,
                    "step_weights": trace.step_weights,
                    "response": session.vocab.decode(ids),
                }
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    log.info("traces: %s", out_path)


@cli.command()
@_common
@click.option("--checkpoint", "ckpt_path", required=True, type=click.Path())
def repl(config_path, profile, seed, ckpt_path) -> None:
    """Read posts from stdin, print K latent words and responses each."""
    session = Session.from_checkpoint(ckpt_path)
    _apply_flags(session, seed=seed)
    idx = 0
    click.echo("enter a post per line (ctrl-d to quit)", err=True)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        ids = encode_sequence(tokenize(clean_text(line, session.cfg.profile)),
                              session.vocab, session.cfg.max_len)
        latents, responses = session.respond(ids, idx)
        for z, resp in zip(latents, responses):
            click.echo(f"[{session.vocab.tokens[z]}] {session.ids_to_text(resp)}")
        idx += 1


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(message)s")
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.exceptions.Abort:
        return 3
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 1
    except KreplyError as exc:
        log.error("%s error: %s", exc.category, exc)
        return {"config": 1, "io": 2}.get(exc.category, 3)
    except OSError as exc:
        log.error("io error: %s", exc)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort mapping
        log.error("runtime error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
