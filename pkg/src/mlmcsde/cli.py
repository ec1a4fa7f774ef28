"""Benchmark command line: point estimates, variance scans, cost scans,
and per-level work profiles, written as CSV for the plotting frontend.

All randomness flows through the counter-based generator, so rerunning a
subcommand with the same arguments reproduces the output byte for byte,
independent of --threads.
"""

import argparse
import csv
import io
import os
import sys

from . import __version__
from .engine import LevelStats, MlmcConfig, _Sampler, run
from .linearize import augment
from .models import (
    builtin_payoffs,
    gbm_system,
    heston_system,
)
from .schemes import SCHEMES, ConfigurationError

DEFAULT_EPS = [2e-2, 1e-2, 5e-3, 2e-3, 1e-3]
DEFAULT_COST_M = [2, 3, 4, 5, 7]
SCAN_LEVELS = range(1, 7)
DEFAULT_SCAN_SAMPLES = 100_000

_MODELS = {"heston": heston_system, "gbm": gbm_system}

# --param keys routed to the payoff factory instead of the model
_PAYOFF_PARAMS = {"strike", "component"}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as configuration errors."""

    def error(self, message):
        raise ConfigurationError(message)


def _parse_params(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigurationError(f"--param expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _read_config(path):
    """key=value file with the same grammar as the flags; '#' comments."""
    values = {}
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}")
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def build_parser():
    p = _Parser(prog="mlmc-bench", description=__doc__)
    p.add_argument("subcommand",
                   choices=["estimate", "variance-scan", "cost-scan",
                            "work-profile"])
    p.add_argument("--model", choices=sorted(_MODELS))
    p.add_argument("--payoff", choices=sorted(builtin_payoffs()))
    p.add_argument("--scheme", action="append", choices=sorted(SCHEMES))
    p.add_argument("--ito-linearize", action="store_true", default=None)
    p.add_argument("--refine", action="append", type=int, metavar="M")
    p.add_argument("--eps", action="append", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--samples", type=int,
                   help="fixed per-level path count for variance scans")
    p.add_argument("--max-level", type=int)
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="model or payoff parameter override")
    p.add_argument("--config", metavar="FILE",
                   help="key=value defaults; flags take precedence")
    return p


def _resolve(args):
    """Fold config-file values under the flags and apply defaults."""
    cfg = _read_config(args.config) if args.config else {}

    def pick(name, default, parse=lambda s: s):
        flag = getattr(args, name)
        if flag is not None:
            return flag
        if name in cfg:
            return parse(cfg[name])
        return default

    def split(parse):
        return lambda s: [parse(tok) for tok in s.split(",") if tok.strip()]

    spec = argparse.Namespace(
        subcommand=args.subcommand,
        model=pick("model", "heston"),
        payoff=pick("payoff", "sin"),
        schemes=pick("scheme", ["euler"], split(str)),
        ito_linearize=pick("ito_linearize", None,
                           lambda s: s.lower() in ("1", "true", "yes")),
        refine=pick("refine", None, split(int)),
        eps=pick("eps", DEFAULT_EPS, split(float)),
        seed=pick("seed", 0, int),
        threads=pick("threads", os.cpu_count() or 1, int),
        samples=pick("samples", DEFAULT_SCAN_SAMPLES, int),
        max_level=pick("max_level", 12, int),
        out=pick("out", None),
        params=_parse_params(args.param) if args.param else
        _parse_params(cfg.get("param", "").split(",") if cfg.get("param")
                      else []),
    )
    if spec.refine is None:
        # the full refinement sweep is a cost-scan default; fixed-sample
        # variance scans at M=7, level 6 would run for hours
        spec.refine = DEFAULT_COST_M if args.subcommand == "cost-scan" else [2]
    if not spec.schemes or not spec.refine or not spec.eps:
        raise ConfigurationError(
            "need at least one scheme, one refinement factor and one eps")
    for M in spec.refine:
        if M < 2:
            raise ConfigurationError(f"refinement factor must be >= 2, got {M}")
    return spec


def _build_model(spec):
    factory = _MODELS[spec.model]
    kwargs = {}
    for key, raw in spec.params.items():
        if key in _PAYOFF_PARAMS:
            continue
        try:
            kwargs[key] = float(raw)
        except ValueError:
            raise ConfigurationError(f"--param {key}: not a number: {raw!r}")
    if spec.model == "heston" and ("S0_1" in kwargs or "S0_2" in kwargs):
        base = heston_system().initial_state
        kwargs["S0"] = (kwargs.pop("S0_1", base[0]), kwargs.pop("S0_2", base[1]))
    try:
        return factory(**kwargs)
    except TypeError as e:
        raise ConfigurationError(f"bad model parameter: {e}")


def _build_payoff(spec, system):
    component = int(spec.params.get("component", system.d))
    factory = builtin_payoffs()[spec.payoff]
    if spec.payoff == "call":
        return factory(float(spec.params.get("strike", 1.0)),
                       component=component)
    if spec.payoff == "quadratic":
        return factory(component, component, d=system.d)
    return factory(component, d=system.d)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(out_path, header, rows):
    buf = io.StringIO()
    buf.write(f"# mlmc-bench {__version__}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _coupled_setup(system, payoff, scheme, ito_linearize):
    """Resolve the system/payoff the evolvers actually see."""
    if bool(ito_linearize) or scheme == "approx-milstein":
        aug = augment(system, payoff)
        return aug.system, aug.selector
    return system, payoff


def _mlmc_config(spec, scheme, M, eps):
    return MlmcConfig(epsilon=eps, M=M, scheme=scheme,
                      ito_linearize=spec.ito_linearize,
                      max_level=spec.max_level, global_seed=spec.seed,
                      threads=spec.threads)


def variance_scan(spec):
    system = _build_model(spec)
    payoff = _build_payoff(spec, system)
    rows = []
    for scheme in spec.schemes:
        run_system, run_payoff = _coupled_setup(system, payoff, scheme,
                                                spec.ito_linearize)
        for M in spec.refine:
            config = _mlmc_config(spec, scheme, M, 1.0)
            sampler = _Sampler(run_system, run_payoff, config)
            for level in SCAN_LEVELS:
                stats = LevelStats(level=level,
                                   h=run_system.horizon * M ** (-level))
                sampler.extend(stats, spec.samples)
                sampler.next_path.pop(level, None)
                V = stats.variance
                rows.append([scheme, M, level, stats.h, V, V / stats.h,
                             stats.n])
    _write_csv(spec.out, ["scheme", "M", "level", "h_l", "V_l", "V_l_over_h_l",
                          "N_used"], rows)
    return 0


def cost_scan(spec):
    system = _build_model(spec)
    payoff = _build_payoff(spec, system)
    rows = []
    all_converged = True
    for scheme in spec.schemes:
        for M in spec.refine:
            for eps in spec.eps:
                r = run(system, payoff, _mlmc_config(spec, scheme, M, eps))
                all_converged &= r.converged
                rows.append([scheme, M, eps, r.total_cost,
                             eps * eps * r.total_cost,
                             max(s.level for s in r.levels), r.estimate,
                             r.converged])
    _write_csv(spec.out, ["scheme", "M", "eps", "K", "eps2K", "L_final",
                          "estimate", "converged"], rows)
    return 0 if all_converged else 2


def work_profile(spec):
    system = _build_model(spec)
    payoff = _build_payoff(spec, system)
    M = spec.refine[0]
    eps = min(spec.eps)
    rows = []
    all_converged = True
    for scheme in spec.schemes:
        r = run(system, payoff, _mlmc_config(spec, scheme, M, eps))
        all_converged &= r.converged
        total = sum(s.step_cost for s in r.levels)
        for s in r.levels:
            rows.append([scheme, s.level, s.step_cost / total])
    _write_csv(spec.out, ["scheme", "level", "fraction_of_total_steps"], rows)
    return 0 if all_converged else 2


def estimate(spec):
    system = _build_model(spec)
    payoff = _build_payoff(spec, system)
    rows = []
    all_converged = True
    for scheme in spec.schemes:
        r = run(system, payoff,
                _mlmc_config(spec, scheme, spec.refine[0], spec.eps[0]))
        all_converged &= r.converged
        rows.append([scheme, r.M, r.epsilon, r.total_cost,
                     r.epsilon ** 2 * r.total_cost,
                     max(s.level for s in r.levels), r.estimate, r.converged])
        print(f"{scheme}: estimate={r.estimate:.10g} eps={r.epsilon:g} "
              f"M={r.M} levels={max(s.level for s in r.levels)} "
              f"cost={r.total_cost:.6g} converged={r.converged}")
        for s in r.levels:
            print(f"  level {s.level}: h={s.h:.6g} N={s.n} "
                  f"mean={s.mean:+.6e}")
    if spec.out:
        _write_csv(spec.out, ["scheme", "M", "eps", "K", "eps2K", "L_final",
                              "estimate", "converged"], rows)
    return 0 if all_converged else 2


_SUBCOMMANDS = {
    "estimate": estimate,
    "variance-scan": variance_scan,
    "cost-scan": cost_scan,
    "work-profile": work_profile,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        spec = _resolve(args)
        return _SUBCOMMANDS[spec.subcommand](spec)
    except ConfigurationError as e:
        print(f"mlmc-bench: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
