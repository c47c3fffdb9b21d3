"""Command-line entry point: ``scrambling <command> [options]``.

Every command reads its parameters from built-in defaults, then the matching
``[section]`` of an optional INI file (``--config``), then command-line
options.  Outputs go to ``--out-dir`` only: CSV tables, a copy of the resolved
configuration, and PNG figures unless ``--no-plot`` is given.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, exact, lg_model, metrics, scaling, verification

log = logging.getLogger("scrambling")

DEFAULTS: dict[str, dict[str, object]] = {
    "ideal-growth": {
        "n_list": "250,500,1000",
        "delta": 0.66,
        "d": 1.0,
        "t_min": 0.01,
        "t_max": 100.0,
        "n_times": 400,
        "k_lo": 2.0,
        "sat_frac": 0.5,
        "calibrate": False,
        "d_khz": exact.ADAMANTANE_D_KHZ,
        "target_rate": 7.41,
        "target_exponent": 4.2,
    },
    "decoherent-growth": {
        "n": 1000,
        "delta": 0.66,
        "d": 1.0,
        "law": "power",
        "gamma1_list": "0,0.0005,0.001,0.002,0.004",
        "alpha": 1.0,
        "p_list": "0.01,0.05,0.1",
        "scale": 1.0,
        "t_min": 0.01,
        "t_max": 2000.0,
        "n_times": 400,
        "plateau_tol": 1e-3,
    },
    "spectrum-scan": {
        "n": 10,
        "delta": 0.66,
        "d": 1.0,
        "alpha": 1.0,
        "gamma1_max": 0.5,
        "n_gamma": 51,
    },
    "kloc-scan": {
        "n": 200000,
        "delta": 0.78,
        "d": 1.0,
        "p_list": "",
        "p_min": 0.001,
        "p_max": 0.11,
        "n_p": 24,
        "p_c": lg_model.ANSATZ_DEFAULTS["p_c"],
        "s": lg_model.ANSATZ_DEFAULTS["s"],
        "nu": lg_model.ANSATZ_DEFAULTS["nu"],
        "alpha0": lg_model.ANSATZ_DEFAULTS["alpha0"],
        "alpha_inf": lg_model.ANSATZ_DEFAULTS["alpha_inf"],
        "scale": 1.0,
        "rates_csv": "",
        "fit_lo": 0.03,
        "fit_hi": 0.11,
    },
    "exact-verify": {
        "n_list": "2,3,4,5",
        "draws": 5,
        "times": 10,
        "t_max": 2.0,
        "p_list": "0.1,0.5",
        "tol": 1e-9,
        "inject_fault": False,
    },
    "fit": {
        "mode": "synthetic",
        "n": 2000,
        "delta": 0.78,
        "d": 1.0,
        "t_max": 60.0,
        "n_times": 6001,
        "p_list": "0,0.01,0.02,0.04,0.06,0.08,0.1",
        "chi1_list": "",
        "alpha_list": "",
        "scale": 0.01,
        "k_lo": 2.0,
        "sat_frac": 0.5,
        "fidelity_csv": "",
        "k_csv": "",
        "p": 0.0,
    },
}

HELP = {
    "ideal-growth": "leak-free cluster-size growth K0(t) for several system sizes",
    "decoherent-growth": "cluster-size growth with leakage, one trace per gamma1 or p",
    "spectrum-scan": "eigenvalues of the rate-model generator over a gamma1 grid",
    "kloc-scan": "localization cluster size over a grid of perturbation strengths",
    "exact-verify": "small-system cross-checks of the three cluster-size routes",
    "fit": "decay-rate and growth-law fits from simulated or supplied traces",
}


class ConfigError(ValueError):
    pass


def _convert(key: str, raw, default):
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def ints(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


def resolve_config(command: str, path: str | None, overrides: dict[str, object]) -> dict[str, object]:
    defaults = DEFAULTS[command]
    cfg = dict(defaults)
    if path:
        parser = configparser.ConfigParser()
        if not parser.read(path, encoding="utf-8"):
            raise ConfigError(f"cannot read config file {path}")
        if parser.has_section(command):
            for key, raw in parser.items(command):
                if key not in defaults:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{command}]")
                cfg[key] = _convert(key, raw, defaults[key])
    for key, raw in overrides.items():
        if raw is not None:
            cfg[key] = _convert(key, raw, defaults[key])
    return cfg


def config_text(command: str, cfg: dict[str, object]) -> str:
    parser = configparser.ConfigParser()
    parser[command] = {k: str(v) for k, v in cfg.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


class Run:
    """Output bookkeeping shared by all commands."""

    def __init__(self, command: str, cfg: dict, out_dir: Path, seed: int, threads: int, plot: bool):
        self.command = command
        self.cfg = cfg
        self.out_dir = out_dir
        self.seed = seed
        self.threads = max(1, threads)
        self.plot = plot
        text = config_text(command, cfg)
        digest = hashlib.sha256(f"{text}seed={seed}\n".encode()).hexdigest()[:16]
        self.header = [
            f"scrambling {__version__} command={command} seed={seed} config_sha256={digest} "
            f"numpy={np.__version__} scipy={scipy.__version__}"
        ]
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{command}.config.ini").write_text(f"# {self.header[0]}\n" + text, encoding="utf-8")

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def map(self, fn, items):
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))

    def figure(self, fn, name: str, *args, **kw) -> None:
        if not self.plot:
            return
        from . import plotting

        getattr(plotting, fn)(self.path(name), *args, **kw)

    def table(self, name: str, columns, rows) -> Path:
        import csv

        p = self.path(name)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {self.header[0]}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        return p


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _time_grid(t_min: float, t_max: float, count: int) -> np.ndarray:
    if not 0 < t_min < t_max:
        raise ConfigError("need 0 < t_min < t_max")
    return np.concatenate([[0.0], np.geomspace(t_min, t_max, count)])


# -- commands -----------------------------------------------------------------


def cmd_ideal_growth(run: Run) -> int:
    c = run.cfg
    sizes = ints(c["n_list"])
    if not sizes:
        raise ConfigError("n_list is empty")
    d = 1.0 if c["calibrate"] else c["d"]
    times = _time_grid(c["t_min"], c["t_max"], c["n_times"])

    def one(n):
        p = lg_model.LgParams(n, d, c["delta"])
        return lg_model.evolve_amplitudes(lg_model.upsilon_from_params(p), lg_model.unit_vector(n), times).K

    traces = dict(zip(sizes, run.map(one, sizes)))
    run.table("ideal_growth.csv", ["t_ms", "n", "K"], ((t, n, k) for n in sizes for t, k in zip(times, traces[n])))
    fits = []
    for n in sizes:
        try:
            fits.append((f"growth n={n}", scaling.fit_growth(times, traces[n], n, c["k_lo"], c["sat_frac"])))
        except ValueError as exc:
            log.warning("n=%d: no growth fit (%s)", n, exc)
            fits.append((f"growth n={n}", None))
    scaling.write_fit_report(run.path("ideal_growth_fit.csv"), fits, run.header)
    if c["calibrate"]:
        n = max(sizes)
        base = dict(fits)[f"growth n={n}"]
        if base is None:
            raise ConfigError("calibration needs a growth window for the largest n")
        rows = []
        # K(t; d) = K(d t; 1): a coupling only rescales time, hence the rate
        for conv in exact.UNIT_CONVENTIONS:
            dv = exact.khz_to_rad_per_ms(c["d_khz"], conv)
            rate = base.rate * dv
            rows.append((conv, dv, rate, base.exponent, base.rms_log_residual,
                         abs(rate / c["target_rate"] - 1), abs(base.exponent - c["target_exponent"])))
        d_fit = c["target_rate"] / base.rate
        rows.append(("fitted", d_fit, c["target_rate"], base.exponent, base.rms_log_residual, 0.0,
                     abs(base.exponent - c["target_exponent"])))
        run.table("calibration.csv", ["convention", "d_rad_per_ms", "rate_per_ms", "exponent", "residual",
                                      "rate_rel_error", "exponent_error"], rows)
        for r in rows:
            print(f"{r[0]:>8}: d={r[1]:.4g} rad/ms  K ~ ({r[2]:.4g}/ms t)^{r[3]:.3f}")
    run.figure("growth", "ideal_growth.png", {f"n={n}": (times, traces[n]) for n in sizes},
               title=f"delta={c['delta']}", fit=dict(fits).get(f"growth n={max(sizes)}"))
    return 0


def _decoherent_laws(c) -> tuple[str, list[tuple[float, lg_model.RateLaw]]]:
    if c["law"] == "power":
        return "gamma1", [(g, lg_model.PowerLaw(g, c["alpha"])) for g in floats(c["gamma1_list"])]
    if c["law"] == "ansatz":
        return "p", [(p, lg_model.Ansatz(p, scale=c["scale"])) for p in floats(c["p_list"])]
    if c["law"] == "log":
        return "gamma1", [(g, lg_model.log_rates(g)) for g in floats(c["gamma1_list"])]
    raise ConfigError(f"unknown law {c['law']!r}; expected power, ansatz or log")


def cmd_decoherent_growth(run: Run) -> int:
    c = run.cfg
    n = c["n"]
    label, laws = _decoherent_laws(c)
    times = _time_grid(c["t_min"], c["t_max"], c["n_times"])
    base = lg_model.LgParams(n, c["d"], c["delta"])

    def one(item):
        value, law = item
        u = lg_model.upsilon_from_params(base.with_rates(law))
        tr = lg_model.evolve_amplitudes(u, lg_model.unit_vector(n), times)
        kl = None
        try:
            kl = lg_model.k_loc(u)
        except lg_model.LocalizationError:
            pass
        return tr, kl

    results = run.map(one, laws)
    rows, summary, curves = [], [], {}
    for (value, _), (tr, kl) in zip(laws, results):
        rows.extend((t, value, k, math.exp(ln)) for t, k, ln in zip(tr.times, tr.K, tr.log_norm))
        tail = tr.K[tr.times >= 0.8 * tr.times[-1]]
        spread = (tail.max() - tail.min()) / tail.mean()
        plateau = bool(spread < c["plateau_tol"] and tail[-1] < 0.5 * n)
        summary.append((value, plateau, tr.K[-1], kl))
        curves[f"{label}={value:g}"] = (tr.times, tr.K)
    run.table("decoherent_growth.csv", ["t_ms", label, "K", "norm"], rows)
    run.table("decoherent_summary.csv", [label, "plateau", "K_final", "K_loc"], summary)
    run.figure("growth", "decoherent_growth.png", curves, title=f"n={n}, delta={c['delta']}")
    return 0


def cmd_spectrum_scan(run: Run) -> int:
    c = run.cfg
    n = c["n"]
    if n > lg_model.DENSE_EIGEN_MAX:
        raise ConfigError(f"spectrum-scan needs n <= {lg_model.DENSE_EIGEN_MAX}")
    params = lg_model.LgParams(n, c["d"], c["delta"], lg_model.PowerLaw(0.0, c["alpha"]))
    gammas = np.linspace(0.0, c["gamma1_max"], c["n_gamma"])
    w = lg_model.transition_rates(params)

    def one(g1):
        return lg_model.eigenvalues(lg_model.build_upsilon(w, g1 * params.levels ** c["alpha"]))

    lams = np.array(run.map(one, gammas))
    gc = lg_model.gamma_crit(params) if n > 1 else 0.0
    run.table("spectrum_scan.csv", ["gamma1", "index", "re_lambda", "im_lambda"],
              ((g, i + 1, lam.real, lam.imag) for g, row in zip(gammas, lams) for i, lam in enumerate(row)))
    run.table("gamma_crit.csv", ["n", "delta", "alpha", "gamma_crit"], [(n, c["delta"], c["alpha"], gc)])
    print(f"gamma_crit = {gc:.6g} 1/ms")
    run.figure("spectrum_scan", "spectrum_scan.png", gammas, lams, gc)
    return 0


def _load_rate_table(path: str) -> list[tuple[float, float, float]]:
    import csv

    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = [h.strip() for h in next(reader)]
        if header != ["p", "gamma1", "alpha"]:
            raise ConfigError(f"{path}: expected header p,gamma1,alpha")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append(tuple(float(x) for x in row))
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: malformed row") from exc
    return rows


def cmd_kloc_scan(run: Run) -> int:
    c = run.cfg
    n = c["n"]
    if c["rates_csv"]:
        table = _load_rate_table(c["rates_csv"])
        laws = [(p, lg_model.PowerLaw(g1, a)) for p, g1, a in table]
    else:
        ps = floats(c["p_list"]) or list(np.geomspace(c["p_min"], c["p_max"], c["n_p"]))
        ansatz = {k: c[k] for k in ("p_c", "s", "nu", "alpha0", "alpha_inf", "scale")}
        laws = [(p, lg_model.Ansatz(p, **ansatz)) for p in ps if p != c["p_c"]]
    w = lg_model.transition_rates(lg_model.LgParams(n, c["d"], c["delta"]))
    levels = np.arange(1, n + 1, dtype=float)

    def one(item):
        p, law = item
        g1, a = law.effective()
        try:
            return p, lg_model.k_loc(lg_model.build_upsilon(w, law.rates(levels))), g1, a
        except lg_model.LocalizationError as exc:
            log.warning("p=%g: %s", p, exc)
            return p, None, g1, a

    rows = run.map(one, laws)
    lg_model.write_kloc_csv(run.path("kloc_scan.csv"), rows, run.header)
    ok = [(p, k) for p, k, _, _ in rows if k is not None]
    fits = []
    strong = None
    try:
        strong = scaling.powerlaw_fit([p for p, _ in ok], [k for _, k in ok], (c["fit_lo"], c["fit_hi"]))
    except ValueError as exc:
        log.warning("strong-branch fit skipped: %s", exc)
    fits.append(("K_loc strong branch", strong))
    weak = None
    if not c["rates_csv"]:
        try:
            weak = scaling.powerlaw_fit([p for p, _ in ok], [k for _, k in ok], (0.0, c["p_c"]))
        except ValueError as exc:
            log.warning("weak-branch fit skipped: %s", exc)
    fits.append(("K_loc weak branch", weak))
    scaling.write_fit_report(run.path("kloc_fit.csv"), fits, run.header)
    if strong is not None:
        print(f"strong-branch slope {strong.exponent:.3f} over p in [{strong.window[0]:.3g}, {strong.window[1]:.3g}]")
    if weak is not None:
        print(f"weak-branch slope {weak.exponent:.3f}")
    run.figure("kloc_scan", "kloc_scan.png", [r[0] for r in rows], [r[1] for r in rows],
               None if c["rates_csv"] else c["p_c"], strong)
    return 0


def cmd_exact_verify(run: Run) -> int:
    c = run.cfg
    sizes = ints(c["n_list"])
    if not sizes or max(sizes) > 5 or min(sizes) < 1:
        raise ConfigError("exact-verify supports 1 <= n <= 5")
    results = verification.run_suite(sizes, c["draws"], c["times"], c["t_max"], floats(c["p_list"]),
                                     run.seed, c["tol"], c["inject_fault"])
    run.table("exact_verify.csv", ["check", "n", "max_deviation", "tolerance", "samples", "status"],
              ((r.name, r.n, r.max_deviation, r.tolerance, r.samples, "pass" if r.passed else "FAIL") for r in results))
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{'pass' if r.passed else 'FAIL'}  {r.name:<36} n={r.n}  max dev {r.max_deviation:.2e} (tol {r.tolerance:.0e})")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _synthetic_traces(c) -> list[tuple[float, scaling.TimeSeries, scaling.TimeSeries, tuple[float, float]]]:
    n = c["n"]
    params = lg_model.LgParams(n, c["d"], c["delta"])
    times = np.linspace(0.0, c["t_max"], c["n_times"])
    tr = lg_model.evolve_amplitudes(lg_model.upsilon_from_params(params), lg_model.unit_vector(n), times)
    k = scaling.TimeSeries(times, tr.K)
    ps = floats(c["p_list"])
    chi1s, alphas = floats(c["chi1_list"]), floats(c["alpha_list"])
    if chi1s or alphas:
        if not (len(chi1s) == len(alphas) == len(ps)):
            raise ConfigError("chi1_list and alpha_list must match p_list in length")
        truth = list(zip(chi1s, alphas))
    else:
        truth = []
        for p in ps:
            truth.append((0.0, float("nan")) if p == 0 else lg_model.Ansatz(p, scale=c["scale"]).effective())
    out = []
    for p, (chi1, alpha) in zip(ps, truth):
        fid = scaling.synthetic_fidelity(k, chi1, 0.0 if chi1 == 0 else alpha)
        keep = fid.y > 1e-250
        out.append((p, scaling.TimeSeries(fid.t[keep], fid.y[keep]), k, (chi1, alpha)))
    return out


def cmd_fit(run: Run) -> int:
    c = run.cfg
    if c["mode"] == "synthetic":
        traces = _synthetic_traces(c)
    elif c["mode"] == "files":
        if not c["fidelity_csv"] or not c["k_csv"]:
            raise ConfigError("files mode needs fidelity_csv and k_csv")
        traces = [(c["p"], scaling.ingest_series(c["fidelity_csv"], "fidelity_trace"),
                   scaling.ingest_series(c["k_csv"], "k_trace"), (math.nan, math.nan))]
    else:
        raise ConfigError(f"unknown mode {c['mode']!r}; expected synthetic or files")
    n = c["n"]
    fits, truth_rows, curves = [], [], {}
    for p, fid, k, (chi1, alpha) in traces:
        kmax = c["sat_frac"] * (n if c["mode"] == "synthetic" else k.y.max() / c["sat_frac"])
        rate = scaling.log_derivative(fid)
        fit = None
        if np.max(np.abs(rate.y)) > 1e-12:
            try:
                fit = scaling.fit_decay_scaling(fid, k, (c["k_lo"], kmax))
            except ValueError as exc:
                log.warning("p=%g: decay fit skipped (%s)", p, exc)
        fits.append((f"decay p={p:g}", fit))
        truth_rows.append((p, chi1, alpha, None if fit is None else fit.prefactor, None if fit is None else fit.exponent))
        curves[f"p={p:g}"] = (np.interp(rate.t, k.t, k.y), rate.y)
    k0 = traces[0][2]
    try:
        growth = scaling.fit_growth(k0.t, k0.y, n if c["mode"] == "synthetic" else int(k0.y.max() / c["sat_frac"]) + 1,
                                    c["k_lo"], c["sat_frac"])
    except ValueError as exc:
        log.warning("growth fit skipped (%s)", exc)
        growth = None
    fits.append(("growth", growth))
    scaling.write_fit_report(run.path("fit_report.csv"), fits, run.header)
    if c["mode"] == "synthetic":
        run.table("fit_truth.csv", ["p", "chi1_true", "alpha_true", "chi1_fit", "alpha_fit"], truth_rows)
    for name, f in fits:
        print(f"{name:<16} " + ("(no decay)" if f is None else f"prefactor {f.prefactor:.5g}  exponent {f.exponent:.4f}"))
    run.figure("decay_rates", "decay_rates.png", curves)
    return 0


COMMANDS = {
    "ideal-growth": cmd_ideal_growth,
    "decoherent-growth": cmd_decoherent_growth,
    "spectrum-scan": cmd_spectrum_scan,
    "kloc-scan": cmd_kloc_scan,
    "exact-verify": cmd_exact_verify,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file; the section named after the command is read")
    common.add_argument("--out-dir", default="out", help="directory for all outputs (default: out)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized inputs (default: 0)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for parameter sweeps")
    common.add_argument("--no-plot", action="store_true", help="skip PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="scrambling", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in DEFAULTS.items():
        sp = sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
        for key, val in defaults.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(val, bool):
                sp.add_argument(flag, dest=key, action="store_const", const=True, default=None,
                                help=f"enable (default: {val})")
            else:
                sp.add_argument(flag, dest=key, default=None, metavar=type(val).__name__.upper(),
                                help=f"default: {val}")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {k: getattr(args, k) for k in DEFAULTS[args.command]}
    try:
        cfg = resolve_config(args.command, args.config, overrides)
        run = Run(args.command, cfg, Path(args.out_dir), args.seed, args.threads, not args.no_plot)
        return COMMANDS[args.command](run)
    except (ConfigError, ValueError) as exc:
        print(f"scrambling {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
