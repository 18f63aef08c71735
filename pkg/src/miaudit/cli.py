"""Command-line entry point: ``miaudit {gen,audit,mcmc-check,threshold,attack-signals}``.

Exit status is 0 on success, 2 for configuration errors and 1 for failures
at run time.
"""
import argparse
import logging
import os
import sys
from dataclasses import replace

from . import experiments
from ._core import BACKEND
from .attacks import AttackConfig
from .config import AttackSpec, ConfigError, load_config
from .graph import write_graph

log = logging.getLogger("miaudit")


def _common(p):
    p.add_argument("--config", metavar="PATH", help="experiment config file")
    p.add_argument("--seed", type=int, help="override [experiment] seed")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes for model training")


def build_parser():
    parser = argparse.ArgumentParser(prog="miaudit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("gen", help="write the configured dataset in graph text format"))
    _common(sub.add_parser("audit", help="run the membership game and all configured attacks"))
    _common(sub.add_parser("mcmc-check", help="compare the MCMC sampler with exact enumeration"))
    _common(sub.add_parser("threshold", help="estimate low-FPR thresholds from simulated targets"))
    p = sub.add_parser("attack-signals", help="score an external signals CSV")
    _common(p)
    p.add_argument("--signals", required=True, metavar="CSV")
    p.add_argument("--method", action="append", choices=["base", "rmia", "lira", "mca"],
                   help="attack to run (repeatable); default: the config's attacks")
    p.add_argument("--mode", choices=["online", "offline"], default="online")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=0.5)
    return parser


def _resolve(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, data=replace(cfg.data, seed=args.seed))
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = replace(cfg, jobs=args.jobs)
    out = args.out or cfg.out
    return cfg, out


def _run(args):
    cfg, out = _resolve(args)
    if args.command == "gen":
        os.makedirs(out, exist_ok=True)
        g = experiments.build_graph(cfg)
        path = os.path.join(out, "graph.txt")
        write_graph(g, path)
        print(f"wrote {path}: n={g.n} d={g.d} c={g.num_classes} edges={len(g.edges)}")
    elif args.command == "audit":
        rows = experiments.run_audit(cfg, out, cfg.jobs)
        print(f"{'attack':<16}{'mode':<9}{'AUC (%)':>18}{'TPR@1% (%)':>18}{'TPR@0.1% (%)':>18}")
        for name, mode, am, asd, t1m, t1s, t01m, t01s, _ in rows:
            print(f"{name:<16}{mode:<9}{100 * am:>10.2f} ± {100 * asd:<5.2f}{100 * t1m:>10.2f} ± {100 * t1s:<5.2f}"
                  f"{100 * t01m:>10.2f} ± {100 * t01s:<5.2f}")
    elif args.command == "mcmc-check":
        if cfg.mcmc.n > 14:
            raise ConfigError("[mcmc] n must be <= 14 for exact enumeration")
        rep = experiments.run_mcmc_check(cfg, out, cfg.jobs)
        for k, v in rep.items():
            print(f"{k} = {v}")
    elif args.command == "threshold":
        rows = experiments.run_threshold(cfg, out, cfg.jobs)
        print("attack,rule,threshold,target_fpr,realized_fpr,realized_tpr")
        for r in rows:
            print(",".join(str(x) for x in r[:6]))
    elif args.command == "attack-signals":
        if args.method:
            attacks = []
            for m in args.method:
                ac = AttackConfig(method=m, mode=args.mode, alpha=args.alpha, gamma=args.gamma, lam=args.lam,
                                  seed=cfg.seed)
                try:
                    ac.validate()
                except ValueError as e:
                    raise ConfigError(str(e)) from None
                attacks.append(AttackSpec(ac.label(), ac))
        else:
            attacks = list(cfg.attacks)
        res = experiments.run_attack_signals(args.signals, attacks, out)
        for name in res:
            print(f"wrote {os.path.join(out, f'scores_{name}.csv')}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    log.info("kernel backend: %s", BACKEND)
    try:
        return _run(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
