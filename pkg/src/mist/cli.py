"""``mist`` command-line interface.

Results go to stdout as ``key=value`` lines.  Exit status is 0 on success,
2 for invalid input and 3 for numerical failures.  Vertices are 1-indexed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from .data import Dataset, RngStream, load_csv, save_csv, studentize
from .ensemble import (DEFAULT_L, DEFAULT_L_RANGE, DEFAULT_MODEL_L_RANGE, ensemble_estimate,
                       make_config)
from .errors import NumericalError, ValidationError
from .functionals import Functional
from .inference import (DEFAULT_B, estimate_with_confidence, model_fit_test, pairwise_edge_test,
                        pairwise_estimates, write_edge_report)
from .structure import (chow_liu, dependence_direction, pairwise_decomposition, parse_tree,
                        ratio_decomposition, write_edge_list)
from .synthetic import DEFAULT_NOISE_STD, ChainSpec, CycleSpec, gen_chain, gen_cycle

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _num(x) -> str:
    return format(float(x), ".17g")


def _emit(**kv) -> None:
    for k, v in kv.items():
        print(f"{k}={_num(v) if isinstance(v, float) else v}")


def _edges_text(edges) -> str:
    return ";".join(f"{i + 1}-{k + 1}" for i, k in sorted(edges))


def _add_data(p):
    p.add_argument("--data", required=True, help="CSV file, one row per sample")
    p.add_argument("--no-header", action="store_true", help="first row is data")
    p.add_argument("--studentize", action="store_true", help="divide columns by their std")


def _add_functional(p):
    p.add_argument("--functional", choices=("shannon", "renyi"), default="renyi")
    p.add_argument("--alpha", type=float, default=None, help="Renyi order in [0, 1]")


def _add_ensemble(p):
    p.add_argument("--estimator", choices=("plugin", "odin1", "odin2"), default="odin1")
    p.add_argument("--L", type=int, default=DEFAULT_L)
    p.add_argument("--l-min", type=float, default=None,
                   help=f"default {DEFAULT_L_RANGE[0]:g} for pairs, {DEFAULT_MODEL_L_RANGE[0]:g} for model fits")
    p.add_argument("--l-max", type=float, default=None,
                   help=f"default {DEFAULT_L_RANGE[1]:g} for pairs, {DEFAULT_MODEL_L_RANGE[1]:g} for model fits")
    p.add_argument("--weight-mode", choices=("exact", "relaxed"), default="exact")
    p.add_argument("--tau", type=float, default=None, help="relaxed bound (default 1/sqrt(N))")
    p.add_argument("--bandwidth", type=float, default=None, help="plug-in bandwidth")
    p.add_argument("--s-smoothness", type=int, default=None)
    p.add_argument("--delta", type=float, default=1.0)


def _add_boot(p, default_b=DEFAULT_B):
    p.add_argument("--B", type=int, default=default_b, help="bootstrap replicates")
    p.add_argument("--seed", type=int, default=0)


def _load(args) -> Dataset:
    data = load_csv(args.data, has_header=False if args.no_header else None)
    return studentize(data) if args.studentize else data


def _functional(args) -> Functional:
    return Functional(args.functional, args.alpha)


def _config(args, kind: str, n: int, d: int):
    if args.bandwidth is not None and args.estimator != "plugin":
        raise ValidationError("--bandwidth applies to --estimator plugin only")
    return make_config(args.estimator, kind, n, d, L=args.L, l_min=args.l_min, l_max=args.l_max,
                       weight_mode=args.weight_mode, tau=args.tau, bandwidth=args.bandwidth,
                       s_smoothness=args.s_smoothness, delta=args.delta)


def _result_lines(r) -> None:
    _emit(estimate=r.estimate, boot_mean=r.boot_mean, boot_var=r.boot_var, n_boot=r.n_boot,
          null_value=r.null_value, sidedness=r.sidedness, p_value=r.p_value)


def cmd_gen(args) -> None:
    if args.family == "chain":
        if args.b is not None:
            raise ValidationError("--b applies to the cycle family only")
        data = gen_chain(ChainSpec(args.n, args.a, args.seed, args.noise_std))
    else:
        data = gen_cycle(CycleSpec(args.n, args.a, 0.0 if args.b is None else args.b, args.seed,
                                   args.noise_std))
    if args.studentize:
        data = studentize(data)
    save_csv(data, args.out)
    _emit(out=args.out, n_samples=data.n_samples, dim=data.dim)


def cmd_estimate(args) -> None:
    data = _load(args)
    f = _functional(args)
    if (args.pair is None) == (args.tree is None):
        raise ValidationError("give exactly one of --pair or --tree")
    if args.pair is not None:
        i, k = args.pair
        if not (1 <= i <= data.dim and 1 <= k <= data.dim) or i == k:
            raise ValidationError(f"--pair needs two distinct columns in 1..{data.dim}")
        target, kind = pairwise_decomposition(i - 1, k - 1), "pairwise"
    else:
        target, kind = ratio_decomposition(parse_tree(args.tree, data.dim)), "model"
    cfg = _config(args, kind, data.n_samples, data.dim)
    if args.B == 0:
        _emit(estimate=ensemble_estimate(data, target, f, cfg).estimate)
        return
    _result_lines(estimate_with_confidence(data, target, f, cfg, args.B, RngStream(args.seed)))


def cmd_edges(args) -> None:
    data = _load(args)
    f = _functional(args)
    cfg = _config(args, "pairwise", data.n_samples, data.dim)
    rep = pairwise_edge_test(data, f, cfg, args.gamma, args.B, RngStream(args.seed))
    if args.out:
        write_edge_report(rep, args.out)
    _emit(edges=_edges_text(rep.rejected_edges), n_edges=len(rep.rejected_edges),
          gamma=rep.gamma_level, fdr_bound=rep.fdr_estimate)


def _tree_text(tree) -> str:
    """Tree in the ``--tree`` flag syntax, e.g. ``1 2;2 3``."""
    return ";".join(f"{i + 1} {k + 1}" for i, k in tree.edges)


def _cl_tree(data, f, args):
    cfg = _config(args, "pairwise", data.n_samples, data.dim)
    return chow_liu(pairwise_estimates(data, f, cfg), dependence_direction(f))


def cmd_fit(args) -> None:
    data = _load(args)
    f = _functional(args)
    if (args.tree is None) == (not args.chow_liu):
        raise ValidationError("give exactly one of --tree or --chow-liu")
    tree = parse_tree(args.tree, data.dim) if args.tree else _cl_tree(data, f, args)
    cfg = _config(args, "model", data.n_samples, data.dim)
    res = model_fit_test(data, tree, f, cfg, args.B, RngStream(args.seed))
    _emit(tree=_tree_text(tree))
    _result_lines(res)


def cmd_chow_liu(args) -> None:
    data = _load(args)
    f = _functional(args)
    tree = _cl_tree(data, f, args)
    if args.out:
        write_edge_list(tree, args.out)
    _emit(tree=_tree_text(tree), edges=_edges_text(tree.edges))


def _parse_sweep(text: str, experiment: str):
    pts = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            if ":" in tok:
                a, b = tok.split(":")
                pts.append((float(a), float(b)))
            else:
                pts.append((float(tok), None))
        except ValueError:
            raise ValidationError(f"bad sweep point {tok!r}; use a or a:b") from None
    if not pts:
        raise ValidationError("empty --sweep")
    return tuple(pts)


def cmd_experiment(args) -> int:
    from .experiments import ExperimentConfig, load_config_file, run_experiment

    raw = {}
    if args.manifest:
        raw = load_config_file(args.manifest).get("config", {})
    elif args.config:
        raw = load_config_file(args.config)
    if args.name:
        raw["experiment"] = args.name
    if "experiment" not in raw:
        raise ValidationError("name an experiment or pass --config/--manifest")
    overrides = {"n_trials": args.trials, "n_samples": args.n, "bootstrap_B": args.B,
                 "master_seed": args.seed, "output_dir": args.out, "gamma_level": args.gamma,
                 "weight_mode": args.weight_mode, "L": args.L, "l_min": args.l_min,
                 "l_max": args.l_max, "tau": args.tau, "fit_tree": args.fit_tree}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if args.sweep:
        raw["sweep"] = [list(p) for p in _parse_sweep(args.sweep, raw["experiment"])]
    if args.estimators:
        raw["estimators"] = [e.strip() for e in args.estimators.split(",") if e.strip()]
    if args.functional:
        raw["functional"] = {"kind": args.functional, "alpha": args.alpha}
    cfg = ExperimentConfig.from_dict(raw)
    res = run_experiment(cfg)
    _emit(output_dir=str(res.output_dir), n_rows=len(res.rows), n_failed=res.n_failed)
    if res.n_failed and not args.allow_failures:
        print(f"error: {res.n_failed} trial(s) failed; see manifest.json", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_plot(args) -> None:
    from .plots import emit_plots

    for path in emit_plots(args.dir):
        _emit(wrote=str(path))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mist", description="Ensemble KDE estimates of pairwise and tree-model "
                     "information, dependence tests and Chow-Liu structure learning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("gen", help="generate chain or cycle data")
    p.add_argument("family", choices=("chain", "cycle"))
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=DEFAULT_NOISE_STD)
    p.add_argument("--studentize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("estimate", help="estimate a pairwise or tree-model functional")
    _add_data(p)
    p.add_argument("--pair", type=int, nargs=2, metavar=("I", "K"))
    p.add_argument("--tree", help='edge list such as "1 2;2 3"')
    _add_functional(p)
    _add_ensemble(p)
    _add_boot(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("edges", help="BH-controlled pairwise dependence tests")
    _add_data(p)
    _add_functional(p)
    _add_ensemble(p)
    _add_boot(p)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--out", help="per-pair CSV report")
    p.set_defaults(func=cmd_edges)

    p = sub.add_parser("fit", help="test a tree model against the data")
    _add_data(p)
    p.add_argument("--tree", help='edge list such as "1 2;2 3"')
    p.add_argument("--chow-liu", action="store_true", help="learn the tree first")
    _add_functional(p)
    _add_ensemble(p)
    _add_boot(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("chow-liu", help="learn a dependence tree")
    _add_data(p)
    _add_functional(p)
    _add_ensemble(p)
    p.add_argument("--out", help="edge-list file")
    p.set_defaults(func=cmd_chow_liu)

    p = sub.add_parser("experiment", help="run a Monte Carlo sweep")
    p.add_argument("name", nargs="?", choices=("fdr_sweep", "cl_fit_sweep", "cycle_fit_sweep"))
    p.add_argument("--config", help="JSON config; flags override its values")
    p.add_argument("--manifest", help="rerun the config stored in a manifest.json")
    p.add_argument("--trials", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--sweep", help="comma list of a values, or a:b pairs for the cycle")
    p.add_argument("--estimators", help="comma list from plugin,odin1,odin2")
    p.add_argument("--functional", choices=("shannon", "renyi"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--B", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--l-min", type=float)
    p.add_argument("--l-max", type=float)
    p.add_argument("--weight-mode", choices=("exact", "relaxed"))
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--fit-tree", choices=("chow_liu", "chain"),
                   help="tree tested by the fit sweeps (default: Chow-Liu on each trial)")
    p.add_argument("--allow-failures", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="render SVG figures from a report directory")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        code = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
