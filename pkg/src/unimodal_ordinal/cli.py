"""Command-line front end.

Subcommands::

    gen-data   write a synthetic ordinal CSV and print its class histogram
    pmf        print a head's class scores and masses (or a sweep over f)
    train      train one model; writes checkpoint.json, history.csv, config.json
    eval       metrics of a checkpoint on a CSV, one row per prediction rule
    sweep      train the ten reference arms and concatenate their histories

Data goes to stdout or files, diagnostics to stderr.  ``train`` writes to
``--out`` or, failing that, under ``$UNIMODAL_ORDINAL_RUNS`` (default
``runs/``).
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from decimal import Decimal
from pathlib import Path

from . import data as D
from . import heads as H
from . import losses as L
from . import metrics as M
from . import network as N
from .errors import ConfigError, DataError, DomainError, TrainingDivergedError

log = logging.getLogger("unimodal_ordinal")

RUNS_ENV = "UNIMODAL_ORDINAL_RUNS"

LOSS_ALIASES = {
    "ce": L.LossKind.CROSS_ENTROPY.value,
    "emd": L.LossKind.SQUARED_EMD.value,
    "regression": L.LossKind.SQUASHED_REGRESSION.value,
}

CONFIG_DEFAULTS = {
    "data": None,
    "valid_data": None,
    "valid_fraction": 0.1,
    "num_classes": None,
    "head": "poisson",
    "loss": None,
    "tau": 1.0,
    "hidden": [64, 32],
    "epochs": 100,
    "batch_size": 32,
    "lr": 1e-3,
    "l2": 1e-4,
    "patience": 10,
    "lr_floor": 1e-5,
    "seed": 0,
    "out": None,
}

# (arm name, head, loss, tau) -- tau None means learned
SWEEP_ARMS = (
    ("baseline_ce", N.SOFTMAX, "cross_entropy", 1.0),
    ("baseline_regression", N.REGRESSION, "squashed_regression", 1.0),
    ("poisson_ce_tau1", H.POISSON, "cross_entropy", 1.0),
    ("poisson_ce_learned", H.POISSON, "cross_entropy", None),
    ("poisson_emd_tau1", H.POISSON, "squared_emd", 1.0),
    ("poisson_emd_learned", H.POISSON, "squared_emd", None),
    ("binomial_ce_tau1", H.BINOMIAL, "cross_entropy", 1.0),
    ("binomial_ce_learned", H.BINOMIAL, "cross_entropy", None),
    ("binomial_emd_tau1", H.BINOMIAL, "squared_emd", 1.0),
    ("binomial_emd_learned", H.BINOMIAL, "squared_emd", None),
)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _num(key, value, kind=float, positive=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config.{key}: expected a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"config.{key}: expected an integer, got {value!r}")
    value = kind(value)
    if positive and not value > 0:
        raise ConfigError(f"config.{key}: must be positive, got {value!r}")
    return value


def resolve_config(raw: dict) -> dict:
    """Validate a flat config document and fill defaults.  Unknown keys are errors."""
    unknown = sorted(set(raw) - set(CONFIG_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join('config.' + k for k in unknown)}")
    cfg = {**CONFIG_DEFAULTS, **raw}
    if not cfg["data"]:
        raise ConfigError("config.data: a training CSV path is required")
    if cfg["head"] not in N.MODEL_HEADS:
        raise ConfigError(f"config.head: must be one of {N.MODEL_HEADS}, got {cfg['head']!r}")
    loss = cfg["loss"]
    if loss is None:
        loss = L.LossKind.SQUASHED_REGRESSION.value if cfg["head"] == N.REGRESSION else L.LossKind.CROSS_ENTROPY.value
    loss = LOSS_ALIASES.get(loss, loss)
    try:
        N._check_loss(cfg["head"], loss)
    except ValueError as exc:
        raise ConfigError(f"config.loss: {exc}") from None
    cfg["loss"] = loss
    if cfg["tau"] != "learned":
        cfg["tau"] = _num("tau", cfg["tau"], positive=True)
    hidden = cfg["hidden"]
    if isinstance(hidden, str):
        hidden = [h for h in hidden.split(",") if h.strip()]
        try:
            hidden = [int(h) for h in hidden]
        except ValueError:
            raise ConfigError(f"config.hidden: expected comma-separated integers, got {cfg['hidden']!r}") from None
    if not isinstance(hidden, list) or not hidden:
        raise ConfigError("config.hidden: expected a non-empty list of layer widths")
    cfg["hidden"] = [_num(f"hidden[{i}]", h, int, positive=True) for i, h in enumerate(hidden)]
    for key in ("epochs", "batch_size", "patience"):
        cfg[key] = _num(key, cfg[key], int, positive=True)
    cfg["seed"] = _num("seed", cfg["seed"], int)
    cfg["num_classes"] = _num("num_classes", cfg["num_classes"], int, allow_none=True)
    if cfg["num_classes"] is not None and cfg["num_classes"] < 2:
        raise ConfigError("config.num_classes: must be >= 2")
    for key in ("lr", "lr_floor"):
        cfg[key] = _num(key, cfg[key], positive=True)
    cfg["l2"] = _num("l2", cfg["l2"])
    if cfg["l2"] < 0:
        raise ConfigError("config.l2: must be nonnegative")
    if cfg["lr_floor"] > cfg["lr"]:
        raise ConfigError("config.lr_floor: must not exceed config.lr")
    cfg["valid_fraction"] = _num("valid_fraction", cfg["valid_fraction"])
    if not 0 < cfg["valid_fraction"] < 1:
        raise ConfigError("config.valid_fraction: must lie in (0, 1)")
    for key in ("data", "valid_data", "out"):
        if cfg[key] is not None and not isinstance(cfg[key], str):
            raise ConfigError(f"config.{key}: expected a path string")
    if cfg["out"] is None:
        tau = "learned" if cfg["tau"] == "learned" else f"tau{cfg['tau']:g}"
        cfg["out"] = str(Path(os.environ.get(RUNS_ENV, "runs")) / f"{cfg['head']}_{loss}_{tau}_seed{cfg['seed']}")
    return cfg


def train_config(cfg: dict) -> N.TrainConfig:
    learned = cfg["tau"] == "learned"
    return N.TrainConfig(
        head=cfg["head"],
        loss=cfg["loss"],
        tau=1.0 if learned else cfg["tau"],
        learn_tau=learned,
        hidden=tuple(cfg["hidden"]),
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        l2=cfg["l2"],
        patience=cfg["patience"],
        lr_floor=cfg["lr_floor"],
        seed=cfg["seed"],
    )


def load_train_valid(cfg: dict):
    ds = D.load_csv(cfg["data"], cfg["num_classes"])
    if cfg["valid_data"]:
        valid = D.load_csv(cfg["valid_data"], ds.num_classes)
        return ds, valid
    return D.split(ds, cfg["valid_fraction"], cfg["seed"])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    spec = D.SyntheticSpec(
        n_samples=args.n, n_features=args.d, num_classes=args.k, noise_std=args.noise, seed=args.seed
    )
    ds = D.generate_synthetic(spec)
    D.save_csv(ds, args.out)
    print("class,count")
    for c, n in enumerate(ds.class_counts()):
        print(f"{c},{n}")
    return 0


def _parse_sweep(text: str):
    try:
        start, stop, step = (Decimal(x) for x in text.split(":"))
    except (ValueError, ArithmeticError):
        raise argparse.ArgumentTypeError(f"--sweep expects start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("--sweep needs step > 0 and stop >= start")
    n = int((stop - start) / step) + 1
    # decimal arithmetic keeps grid points such as 1.0 exact
    return [float(start + i * step) for i in range(n)]


def cmd_pmf(args) -> int:
    cfg = H.HeadConfig(args.head, args.k, args.tau)
    if args.sweep is not None:
        values = _parse_sweep(args.sweep)
        print("f,class,h,prob")
        for f in values:
            h = H.head_logits(f, cfg)
            p = H.head_forward(f, cfg)
            for j in range(args.k):
                print(f"{f!r},{j},{float(h[j])!r},{float(p[j])!r}")
        return 0
    if args.param is None:
        raise DomainError("pmf needs --param or --sweep")
    h = H.head_logits(args.param, cfg)
    p = H.head_forward(args.param, cfg)
    print("class,h,prob")
    for j in range(args.k):
        print(f"{j},{float(h[j])!r},{float(p[j])!r}")
    return 0


def _config_from_args(args) -> dict:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: not valid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{args.config}: config must be a flat JSON object")
    for key in CONFIG_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    if isinstance(raw.get("tau"), str) and raw["tau"] != "learned":
        try:
            raw["tau"] = float(raw["tau"])
        except ValueError:
            raise ConfigError(f"config.tau: expected a number or 'learned', got {raw['tau']!r}") from None
    return resolve_config(raw)


def run_training(cfg: dict):
    train_set, valid_set = load_train_valid(cfg)
    model, history = N.train(train_set, valid_set, train_config(cfg))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    N.save_checkpoint(model, out / "checkpoint.json")
    N.write_history(history, out / "history.csv")
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return model, history, out


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    _, history, out = run_training(cfg)
    last = history[-1]
    log.info("finished %d epochs: qwk_argmax=%.4f acc_argmax=%.4f", len(history), last["qwk_argmax"], last["acc_argmax"])
    print(out)
    return 0


def cmd_eval(args) -> int:
    model = N.load_checkpoint(args.model)
    ds = D.load_csv(args.data, model.num_classes)
    if ds.num_features != model.layer_dims[0]:
        raise DataError(f"{args.data}: {ds.num_features} features but model expects {model.layer_dims[0]}")
    r_arg, r_exp = N.evaluate_model(model, ds.features, ds.labels)
    print(M.MetricsReport.csv_header())
    print(r_arg.to_csv_row())
    print(r_exp.to_csv_row())
    return 0


def arm_config(head, loss, tau, base: N.TrainConfig) -> N.TrainConfig:
    d = asdict(base)
    d.update(head=head, loss=loss, tau=1.0 if tau is None else tau, learn_tau=tau is None)
    return N.TrainConfig(**d)


def run_sweep(train_set, valid_set, base: N.TrainConfig, arms=SWEEP_ARMS):
    """Train every arm; returns ``(histories, failures)`` keyed by arm name."""
    histories, failures = {}, {}
    for name, head, loss, tau in arms:
        try:
            _, histories[name] = N.train(train_set, valid_set, arm_config(head, loss, tau, base))
        except (TrainingDivergedError, ValueError, FloatingPointError) as exc:
            failures[name] = str(exc)
            log.error("arm %s failed: %s", name, exc)
    return histories, failures


def cmd_sweep(args) -> int:
    ds = D.load_csv(args.data)
    train_set, valid_set = D.split(ds, args.valid_fraction, args.seed)
    base = N.TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    histories, failures = run_sweep(train_set, valid_set, base)
    cols = ["arm", *N.HISTORY_COLUMNS]
    with open(args.out, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for name, history in histories.items():
            for row in history:
                vals = [name] + [N.format_value(row[c]) for c in N.HISTORY_COLUMNS]
                fh.write(",".join(vals) + "\n")
    for name, history in histories.items():
        log.info("%-22s qwk_argmax=%.4f top3=%.4f", name, history[-1]["qwk_argmax"], history[-1]["top3"])
    if failures:
        for name, msg in failures.items():
            print(f"arm {name} failed: {msg}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p = argparse.ArgumentParser(prog="unimodal-ordinal", description=__doc__.split("\n")[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="generate a synthetic ordinal dataset")
    g.add_argument("--out", required=True, help="CSV path to write")
    g.add_argument("--n", type=int, default=2000, help="number of examples (default 2000)")
    g.add_argument("--d", type=int, default=2, help="feature width (default 2)")
    g.add_argument("--k", type=int, default=5, help="number of classes (default 5)")
    g.add_argument("--noise", type=float, default=0.5, help="latent noise std (default 0.5)")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    m = sub.add_parser("pmf", parents=[common], help="tabulate a head's distribution")
    m.add_argument("--head", choices=H.KINDS, required=True)
    m.add_argument("--k", type=int, required=True, help="number of classes")
    m.add_argument("--tau", type=float, default=1.0, help="temperature (default 1)")
    m.add_argument("--param", type=float, help="lambda (poisson) or p (binomial)")
    m.add_argument("--sweep", metavar="START:STOP:STEP", help="tabulate a grid of parameter values instead")
    m.set_defaults(func=cmd_pmf)

    t = sub.add_parser("train", parents=[common], help="train one model")
    t.add_argument("--config", help="flat JSON config; flags override its keys")
    t.add_argument("--data")
    t.add_argument("--valid-data", dest="valid_data")
    t.add_argument("--valid-fraction", dest="valid_fraction", type=float)
    t.add_argument("--num-classes", dest="num_classes", type=int)
    t.add_argument("--head", choices=N.MODEL_HEADS)
    t.add_argument("--loss", choices=sorted(set(LOSS_ALIASES) | set(LOSS_ALIASES.values())))
    t.add_argument("--tau", help="positive number or 'learned'")
    t.add_argument("--hidden", help="comma-separated widths, e.g. 64,32")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--l2", type=float)
    t.add_argument("--patience", type=int)
    t.add_argument("--lr-floor", dest="lr_floor", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    e.add_argument("--model", required=True, help="checkpoint.json from a train run")
    e.add_argument("--data", required=True, help="CSV to evaluate on")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", parents=[common], help="train all reference arms")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="combined history CSV with an arm column")
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    s.add_argument("--valid-fraction", dest="valid_fraction", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, DomainError, TrainingDivergedError, FileNotFoundError, ValueError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
