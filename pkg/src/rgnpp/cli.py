"""Command-line interface: generate / train / evaluate / gof /
inspect-attention / complexity over a flat JSON config.

Flags override config-file keys. Every run echoes the fully resolved config
(seed included) into the output directory. Exit codes: 1 for config/schema
errors, 2 for numerical aborts (non-finite loss).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import datagen, evaluation, training
from .embedding import EmbeddingConfig
from .model import ModelConfig, RGNModel, build_params
from .training import NanLossError, TrainConfig


class ConfigError(ValueError):
    pass


MODEL_KEYS = {"num_types", "d_in", "d_e", "num_heads", "num_gat_layers", "dropout_p",
              "leaky_slope", "alpha", "shared_lstm", "tied_payload", "epsilon_t"}
EMBED_KEYS = {"embed_dim", "embedding_base", "time_scale"}
TRAIN_KEYS = {"epochs", "lr", "tbptt_steps", "batch_size", "seed", "clip_norm",
              "mc_samples", "beta_y", "beta_t", "patience", "eval_quad_steps"}
PATH_KEYS = {"train_path", "val_path", "test_path", "data_path", "out_dir", "checkpoint"}
KNOWN_KEYS = MODEL_KEYS | EMBED_KEYS | TRAIN_KEYS | PATH_KEYS


def load_config(path, overrides):
    cfg = {}
    if path:
        try:
            with open(path) as f:
                cfg = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}")
    unknown = set(cfg) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    return cfg


def build_configs(cfg):
    if "num_types" not in cfg:
        raise ConfigError("config requires num_types")
    try:
        model_cfg = ModelConfig(**{k: cfg[k] for k in MODEL_KEYS if k in cfg})
        embed_cfg = EmbeddingConfig(
            d_in=int(cfg.get("embed_dim", model_cfg.d_in)),
            base=float(cfg.get("embedding_base", 10000.0)),
            time_scale=float(cfg.get("time_scale", 1.0)),
        )
        train_cfg = TrainConfig(**{k: cfg[k] for k in TRAIN_KEYS if k in cfg})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    return model_cfg, embed_cfg, train_cfg


def echo_config(out_dir, cfg):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)


def _load_split(path, num_types=None):
    if not path:
        raise ConfigError("dataset path not set")
    if not Path(path).exists():
        raise ConfigError(f"dataset path does not exist: {path}")
    return datagen.load_dataset(path, num_types=num_types)


def _restore_model(checkpoint):
    if not checkpoint or not Path(checkpoint).exists():
        raise ConfigError(f"checkpoint does not exist: {checkpoint}")
    doc_cfg, store = ad.load_checkpoint(checkpoint)
    model_cfg, embed_cfg, _ = build_configs(doc_cfg)
    expected = build_params(model_cfg, embed_cfg, seed=0)
    for name, t in expected.params.items():
        if name not in store:
            raise ConfigError(f"checkpoint missing parameter {name!r}")
        if store[name].data.shape != t.data.shape:
            raise ConfigError(f"checkpoint parameter {name!r}: shape {store[name].data.shape} "
                              f"!= expected {t.data.shape}")
    model = RGNModel(model_cfg, embed_cfg, store=store, seed=int(doc_cfg.get("seed", 0)))
    return model, doc_cfg


# ---------------------------------------------------------------------------
# Subcommands


def cmd_generate(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = datagen.derive_seeds(args.seed, args.num_seq)
    sequences = []
    if args.process == "poisson":
        for i, s in enumerate(seeds):
            sequences.append(datagen.sample_poisson(args.horizon, rate=args.rate,
                                                    seed=s, seq_id=f"poisson-{i}"))
        num_types = 1
    elif args.process == "sine":
        base = args.rate

        def rate_fn(t, base=base):
            return base * (1.0 + 0.5 * np.sin(t))
        for i, s in enumerate(seeds):
            sequences.append(datagen.sample_poisson(args.horizon, rate_fn=rate_fn,
                                                    rate_bound=1.5 * base, seed=s,
                                                    seq_id=f"sine-{i}"))
        num_types = 1
    elif args.process == "hawkes":
        mu = np.asarray(json.loads(args.mu), dtype=np.float64)
        A = np.asarray(json.loads(args.alpha), dtype=np.float64)
        spec = datagen.HawkesSpec(mu=mu, excitation=A, beta_decay=args.beta_decay)
        spec.check_stationary()
        for i, s in enumerate(seeds):
            sequences.append(datagen.sample_hawkes(spec, args.horizon, seed=s,
                                                   seq_id=f"hawkes-{i}"))
        num_types = spec.num_types
    else:
        raise ConfigError(f"unknown process {args.process!r}")
    fracs = tuple(float(x) for x in args.split_fracs.split(","))
    train_s, val_s, test_s = datagen.split_dataset(sequences, fractions=fracs, seed=args.seed)
    datagen.save_dataset(out_dir / "train.jsonl", train_s)
    datagen.save_dataset(out_dir / "val.jsonl", val_s)
    datagen.save_dataset(out_dir / "test.jsonl", test_s)
    echo_config(out_dir, {"command": "generate", "process": args.process, "rate": args.rate,
                          "mu": args.mu, "alpha": args.alpha, "beta_decay": args.beta_decay,
                          "horizon": args.horizon, "num_seq": args.num_seq, "seed": args.seed,
                          "split_fracs": args.split_fracs, "num_types": num_types})
    print(f"wrote {len(train_s)}/{len(val_s)}/{len(test_s)} sequences to {out_dir}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config, _train_overrides(args))
    model_cfg, embed_cfg, train_cfg = build_configs(cfg)
    out_dir = Path(cfg.get("out_dir", "runs/train"))
    out_dir.mkdir(parents=True, exist_ok=True)
    train_seqs = _load_split(cfg.get("train_path"), model_cfg.num_types)
    val_seqs = _load_split(cfg.get("val_path"), model_cfg.num_types)
    if not train_seqs:
        raise ConfigError(f"empty training dataset: {cfg.get('train_path')}")
    echo_config(out_dir, cfg)
    model = RGNModel(model_cfg, embed_cfg, seed=train_cfg.seed)
    config_doc = {k: cfg[k] for k in cfg if k in MODEL_KEYS | EMBED_KEYS}
    config_doc["num_types"] = model_cfg.num_types
    config_doc["seed"] = train_cfg.seed
    try:
        training.train(train_seqs, val_seqs, model, train_cfg, out_dir=out_dir,
                       model_config_doc=config_doc, log=print)
    except NanLossError as exc:
        with open(out_dir / "abort.json", "w") as f:
            json.dump(exc.diagnostics, f, indent=2)
        print(f"aborted: {exc}", file=sys.stderr)
        return 2
    print(f"training complete; artifacts in {out_dir}")
    return 0


def cmd_evaluate(args):
    model, doc_cfg = _restore_model(args.checkpoint)
    seqs = _load_split(args.data, model.cfg.num_types)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nll, acc, rmse = evaluation.metrics(model, seqs, quad_steps=args.quad_steps)
    ll = evaluation.per_sequence_loglik(model, seqs, quad_steps=args.quad_steps)
    with open(out_dir / "metrics.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["nll_per_event", "type_acc", "time_rmse"])
        w.writerow([f"{nll:.12g}", f"{acc:.12g}", f"{rmse:.12g}"])
    with open(out_dir / "metrics.json", "w") as f:
        json.dump({"nll_per_event": nll, "type_acc": acc, "time_rmse": rmse, **ll}, f, indent=2)
    echo_config(out_dir, {"command": "evaluate", "checkpoint": args.checkpoint,
                          "data": args.data, "quad_steps": args.quad_steps, **doc_cfg})
    print(f"nll/event {nll:.4f}, acc {acc:.4f}, rmse {rmse:.4f}")
    return 0


def cmd_gof(args):
    model, doc_cfg = _restore_model(args.checkpoint)
    seqs = _load_split(args.data, model.cfg.num_types)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report, quartiles = evaluation.gof_report(model, seqs, quad_steps=args.quad_steps)
    evaluation.write_pp_csv(out_dir / "pp.csv", report)
    evaluation.write_gof_json(out_dir / "gof.json", report, quartiles)
    echo_config(out_dir, {"command": "gof", "checkpoint": args.checkpoint,
                          "data": args.data, "quad_steps": args.quad_steps, **doc_cfg})
    print(f"KS D={report.ks_statistic:.4f} (5% crit {report.critical_5pct:.4f}, "
          f"pass={report.pass_5pct})")
    return 0


def cmd_inspect_attention(args):
    model, doc_cfg = _restore_model(args.checkpoint)
    seqs = _load_split(args.data, model.cfg.num_types)
    if args.sequence_index >= len(seqs):
        raise ConfigError(f"sequence index {args.sequence_index} out of range ({len(seqs)} sequences)")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.attention_dump(model, seqs[args.sequence_index], out_dir / "attention.csv")
    echo_config(out_dir, {"command": "inspect-attention", "checkpoint": args.checkpoint,
                          "data": args.data, "sequence_index": args.sequence_index, **doc_cfg})
    print(f"attention written to {out_dir / 'attention.csv'}")
    return 0


def cmd_complexity(args):
    cfg = load_config(args.config, {})
    model_cfg, embed_cfg, _ = build_configs(cfg)
    report = evaluation.complexity_report(model_cfg, embed_cfg, args.seq_len)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "complexity.json", "w") as f:
        json.dump(report, f, indent=2)
    echo_config(out_dir, {**cfg, "command": "complexity", "seq_len": args.seq_len})
    print(json.dumps(report))
    return 0


def _train_overrides(args):
    return {k: getattr(args, k) for k in
            ["num_types", "d_in", "d_e", "num_heads", "num_gat_layers", "dropout_p",
             "alpha", "epochs", "lr", "tbptt_steps", "batch_size", "seed", "clip_norm",
             "mc_samples", "beta_y", "beta_t", "train_path", "val_path", "out_dir"]}


def build_parser():
    p = argparse.ArgumentParser(prog="rgnpp",
                                description="Recurrent graph network point-process toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate synthetic datasets")
    g.add_argument("--process", choices=["poisson", "sine", "hawkes"], required=True)
    g.add_argument("--rate", type=float, default=1.0)
    g.add_argument("--mu", type=str, default="[0.2, 0.2]", help="JSON list of base rates (hawkes)")
    g.add_argument("--alpha", type=str, default="[[0.5, 0.3], [0.3, 0.5]]",
                   help="JSON excitation matrix (hawkes)")
    g.add_argument("--beta-decay", type=float, default=1.0)
    g.add_argument("--horizon", type=float, required=True)
    g.add_argument("--num-seq", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--split-fracs", type=str, default="0.8,0.1,0.1")
    g.add_argument("--out-dir", type=str, required=True)
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", type=str, default=None)
    for key, typ in [("num_types", int), ("d_in", int), ("d_e", int), ("num_heads", int),
                     ("num_gat_layers", int), ("dropout_p", float), ("alpha", float),
                     ("epochs", int), ("lr", float), ("tbptt_steps", int), ("batch_size", int),
                     ("seed", int), ("clip_norm", float), ("mc_samples", int),
                     ("beta_y", float), ("beta_t", float)]:
        t.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None)
    t.add_argument("--train-path", dest="train_path", type=str, default=None)
    t.add_argument("--val-path", dest="val_path", type=str, default=None)
    t.add_argument("--out-dir", dest="out_dir", type=str, default=None)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--quad-steps", type=int, default=100)
    e.add_argument("--out-dir", required=True)
    e.set_defaults(fn=cmd_evaluate)

    q = sub.add_parser("gof", help="time-rescaling goodness of fit")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--quad-steps", type=int, default=100)
    q.add_argument("--out-dir", required=True)
    q.set_defaults(fn=cmd_gof)

    a = sub.add_parser("inspect-attention", help="export per-event attention matrices")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--sequence-index", type=int, default=0)
    a.add_argument("--out-dir", required=True)
    a.set_defaults(fn=cmd_inspect_attention)

    c = sub.add_parser("complexity", help="attention-activation and FLOP report")
    c.add_argument("--config", type=str, required=True)
    c.add_argument("--seq-len", type=int, required=True)
    c.add_argument("--out-dir", required=True)
    c.set_defaults(fn=cmd_complexity)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
