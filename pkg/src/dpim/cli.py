"""Command-line pipeline: model, spectrum, parametrisation, reduced model, FRC and whisker outputs.

Exit codes
----------
0 success, 2 configuration or usage error, 3 model error, 4 spectral
error, 5 parametrisation error, 6 reduced-model or continuation error,
7 oracle error, 8 output error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import SCHEMA_VERSION, __version__

log = logging.getLogger("dpim")

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_SPECTRAL, EXIT_PARAM, EXIT_ROM, EXIT_ORACLE, EXIT_OUTPUT = 0, 2, 3, 4, 5, 6, 7, 8
OUTPUT_ENV = "DPIM_OUTPUT_DIR"
COMMANDS = ("run", "spectrum", "parametrise", "frc", "whisker", "oracle")


class StageError(RuntimeError):
    def __init__(self, code: int, stage: str, exc: BaseException):
        super().__init__(f"{stage} failed: {exc}")
        self.code = code


def _stage(code: int, name: str):
    """Decorator mapping any exception raised in a stage to its exit code."""

    def wrap(fn):
        def inner(*a, **k):
            try:
                return fn(*a, **k)
            except StageError:
                raise
            except Exception as exc:  # noqa: BLE001
                raise StageError(code, name, exc) from exc

        return inner

    return wrap


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpim", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version",
                   version=f"dpim {__version__} (coefficient schema {SCHEMA_VERSION})")
    p.add_argument("--print-defaults", action="store_true", help="print the default configuration and exit")
    sub = p.add_subparsers(dest="command")
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("config", nargs="?", help="TOML configuration (defaults if omitted)")
        s.add_argument("--output", help=f"output directory (overrides config; {OUTPUT_ENV} overrides both)")
        s.add_argument("--style", choices=("graph", "cnf", "rnf"))
        s.add_argument("--order", type=int, help="asymptotic order o")
        s.add_argument("--eps-order", type=int, help="forcing order o_eps (0 selects the undeformed-manifold mode)")
        s.add_argument("--truncation", choices=("asymptotic", "coupled", "disjoint"))
        s.add_argument("--reparametrise-per-point", action="store_true",
                       help="recompute forcing coefficients at every continuation step")
        s.add_argument("--report-spectrum", action="store_true", help="print the spectrum report")
        s.add_argument("--report-monomials", action="store_true", help="print the kept-monomial table")
        s.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads")
        s.add_argument("--no-plots", action="store_true")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _set_threads(n):
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _apply_overrides(cfg, args):
    p = cfg.data["parametrisation"]
    if args.style:
        p["style"] = args.style
    if args.order is not None:
        p["order"] = args.order
    if args.eps_order is not None:
        p["eps_order"] = args.eps_order
    if args.truncation:
        p["truncation"] = args.truncation
    if args.reparametrise_per_point:
        cfg.data["continuation"]["reparametrise_per_point"] = True
    if args.no_plots:
        cfg.data["output"]["plots"] = False
    out = os.environ.get(OUTPUT_ENV) or args.output
    if out:
        cfg.data["output"]["directory"] = out
    cfg._validate()
    return cfg


def monomial_table(rule, n_master: int) -> tuple[list, int]:
    """Rows ``(p_bar, p_tilde, count)`` of kept cells and their total."""
    from math import comb

    from .polyalgebra import kept_cells

    rows = []
    for pb, pt in kept_cells(rule):
        rows.append((pb, pt, comb(pb + 2 * n_master - 1, 2 * n_master - 1) * (pt + 1)))
    return rows, sum(r[2] for r in rows)


class Pipeline:
    """Stages of a run sharing one configuration and output directory."""

    def __init__(self, cfg, args):
        self.cfg = cfg
        self.args = args
        self.out = Path(cfg.output["directory"])
        self.summary: dict = {"schema_version": SCHEMA_VERSION, "version": __version__, "artifacts": []}
        self.model = self.basis = self.param = None

    def _artifact(self, path):
        self.summary["artifacts"].append(str(Path(path).name))
        return path

    @_stage(EXIT_OUTPUT, "output")
    def prepare(self):
        self.out.mkdir(parents=True, exist_ok=True)

    @_stage(EXIT_MODEL, "model")
    def build_model(self):
        import numpy as np

        from . import model as mdl

        m = self.cfg.model
        src = m["source"]
        if src == "duffing":
            model = mdl.builtin_duffing(m["omega0"], m["xi"], m["g"], m["h"], kappa=1.0)
        elif src == "arch2":
            model = mdl.builtin_arch2()
        elif src == "vk_beam":
            model = mdl.builtin_vk_beam(m["n_modes"], bc=m["bc"])
        elif src == "random":
            model = mdl.random_rayleigh_model(seed=m["seed"])
        else:
            model = mdl.load_model(self.cfg.model_path())
        d = self.cfg.damping
        if d["kind"] == "rayleigh":
            alpha = d["alpha"]
            if d["alpha_over_omega1"]:
                w, _ = mdl.undamped_modes(model.M, model.K)
                alpha = w[0] * d["alpha_over_omega1"]
            model = model.with_damping(mdl.rayleigh(model.M, model.K, alpha, d["beta"]))
        elif d["kind"] == "modal":
            w, phi = mdl.undamped_modes(model.M, model.K)
            xi = np.zeros(model.N)
            xi[: len(d["modal_xi"])] = d["modal_xi"]
            Mp = model.M @ phi
            model = model.with_damping(Mp @ np.diag(2 * xi * w) @ Mp.T)
        model.validate()
        self.model = model
        log.info("model %s with N=%d", model.name, model.N)

    @_stage(EXIT_SPECTRAL, "spectrum")
    def spectrum(self):
        from .spectral import SpectralError, eigen_residuals, solve_dense_linearized, solve_real_mode_basis, spectrum_report

        masters = [int(k) for k in self.cfg.masters["modes"]]
        dps = self.cfg.parametrisation["precision_dps"] or None
        try:
            from .numerics import Backend

            self.basis = solve_real_mode_basis(self.model, masters, backend=Backend(dps) if dps else None)
        except SpectralError as exc:
            log.info("real-mode basis unavailable (%s); using the dense first-order solver", exc)
            self.basis = solve_dense_linearized(self.model, masters)
        rep = json.loads(spectrum_report(self.basis))
        rep["residuals"] = eigen_residuals(self.model, self.basis)
        path = self.out / "spectrum.json"
        path.write_text(json.dumps(rep, indent=1, sort_keys=True))
        self._artifact(path)
        self.summary["spectrum"] = {"omega_rad": [float(x) for x in self.basis.omega],
                                    "omega_cycles": [float(x) / (2 * 3.141592653589793) for x in self.basis.omega],
                                    "xi": [float(x) for x in self.basis.xi],
                                    "max_residual": max(rep["residuals"].values())}
        if self.args.report_spectrum:
            print(json.dumps(rep, indent=1, sort_keys=True))

    # -- forcing helpers
    def forcing_setup(self):
        import numpy as np

        from .model import ForcingSpec, ForcingTerm, epsilon_load

        f = self.cfg.forcing
        omega0 = f["omega0"] or float(self.basis.omega[0])
        if f["kappa"]:
            F1 = ForcingSpec((ForcingTerm("mode", 1.0, int(f["mode"])),), omega0).force_vector(self.model)
            eps = [float(k) for k in f["kappa"]]
        else:
            F1 = self.model.forcing_spec(omega0).force_vector(self.model)
            eps = [float(f["eps"])]
        if not np.any(F1):
            log.warning("forcing vector is zero; the response is the trivial branch")
        lo, hi = f["window"]
        window = (lo, hi) if f["window_absolute"] else (lo * omega0, hi * omega0)
        meta = self.model.meta or {}
        phi_max, L = float(meta.get("phi_max", 1.0)), float(meta.get("L_CH", 1.0))
        self.summary["forcing"] = {
            "omega0_rad": omega0, "omega0_cycles": omega0 / (2 * np.pi), "window": list(window), "eps": eps,
            "eps_load": [epsilon_load(e, phi_max, L, omega0) for e in eps],
        }
        return omega0, F1, eps, window, phi_max / L

    @_stage(EXIT_PARAM, "parametrisation")
    def parametrise(self):
        import numpy as np

        from .parametrisation import compute_parametrisation, save_json

        omega0, F1, eps, window, _ = self.forcing_setup()
        rule = self.cfg.rule()
        p = self.cfg.parametrisation
        self.E = F1 / 2
        self.param = compute_parametrisation(self.model, self.basis, self.E, omega0, style=p["style"], rule=rule,
                                             eta=p["eta"], solver=p["solver"])
        path = save_json(self.param, self.out / "parametrisation.json")
        self._artifact(path)
        rlog = [r.as_dict() for r in self.param.log]
        lp = self.out / "resonance_log.json"
        lp.write_text(json.dumps(rlog, indent=1, sort_keys=True))
        self._artifact(lp)
        st = self.param.stats
        self.summary["parametrisation"] = {
            "rule": rule.describe(), "style": p["style"],
            "orders": {str(k): {"monomials": v["monomials"], "seconds": round(v["seconds"], 6)}
                       for k, v in st.get("orders", {}).items()},
            "total_monomials": st.get("total_monomials"), "seconds": round(st.get("seconds", 0.0), 6),
            "legacy_forcing": st.get("legacy_forcing", False),
            "resonance_log": rlog,
        }
        print(f"parametrisation {rule.describe()}, style {p['style']}: "
              f"{st.get('total_monomials')} monomials in {st.get('seconds', 0.0):.3f} s")
        for k, v in sorted(st.get("orders", {}).items()):
            print(f"  order {k}: {v['monomials']} monomials, {v['seconds']:.4f} s")
        # superharmonic windows need resonant forcing monomials
        w_master = float(self.basis.omega[0])
        ratio_lo, ratio_hi = w_master / window[1], w_master / window[0]
        superharmonic = any(ratio_lo <= k <= ratio_hi for k in range(2, 8))
        forced = [r for r in rlog if r["members"] and sum(r["alpha"][-2:]) > 0]
        if superharmonic and not forced:
            msg = ("resonance log has no forcing monomials although the window is superharmonic; "
                   "check eta or the forcing order")
            print("WARNING: " + msg)
            self.summary["warnings"] = self.summary.get("warnings", []) + [msg]
        for e, el in zip(eps, self.summary["forcing"]["eps_load"]):
            print(f"  eps = {e:.6g}: eps_load = {el:.6g}")
        if self.args.report_monomials:
            self.report_monomials()
        return np.asarray(self.E)

    def report_monomials(self):
        rule = self.cfg.rule()
        n = len(self.cfg.masters["modes"])
        rows, total = monomial_table(rule, n)
        print(f"kept cells for {rule.describe()}, n = {n}: {len(rows)} cells, {total} monomials")
        print("p_bar p_tilde count")
        for r in rows:
            print(f"{r[0]:5d} {r[1]:7d} {r[2]:5d}")
        return rows

    def _observable(self, mode: int):
        from .oracle import modal_observable

        return modal_observable(self.model, min(mode, self.model.N))

    @_stage(EXIT_ROM, "reduced model")
    def frc(self):
        from . import plotting
        from .parametrisation import compute_parametrisation
        from .rom import ReducedDynamics, continue_frc

        omega0, F1, eps, window, scale = self.forcing_setup()
        c = self.cfg.continuation
        rom = ReducedDynamics(self.param)
        obs = self._observable(self.cfg.output["observable_mode"])
        rebuild = None
        if c["reparametrise_per_point"]:
            p = self.cfg.parametrisation

            def rebuild(om):
                new = compute_parametrisation(self.model, self.basis, self.E, om, style=p["style"],
                                              rule=self.cfg.rule(), eta=p["eta"], solver=p["solver"],
                                              reuse=self.param)
                return ReducedDynamics(new)

        self.rom_branches = []
        peaks = []
        for i, e in enumerate(eps):
            t0 = time.perf_counter()
            br = continue_frc(rom, window, e, H=c["harmonics"], observable=obs, scale=scale,
                              n_fourier=c["n_fourier"] or None, stability=c["stability"], rebuild=rebuild,
                              ds=c["ds"], ds_max=c["ds_max"], max_steps=c["max_steps"])
            path = br.to_csv(self.out / f"frc_rom_{i}.csv")
            self._artifact(path)
            self.rom_branches.append(br)
            pk = br.peak() if len(br) else (float("nan"), float("nan"))
            peaks.append({"eps": e, "omega_peak": pk[0], "amplitude_peak": pk[1], "points": len(br),
                          "folds": len(br.fold_points()), "seconds": round(time.perf_counter() - t0, 4)})
            print(f"ROM FRC eps={e:.6g}: peak {pk[1]:.6g} at Omega={pk[0]:.6g} rad "
                  f"({pk[0] / 6.283185307179586:.6g} cycles), {len(br.fold_points())} folds")
        self.summary["rom_frc"] = peaks
        if self.cfg.output["plots"]:
            fig = plotting.plot_frc(self.rom_branches, [f"ROM eps={e:.3g}" for e in eps], self.out / "frc_rom.png")
            self._artifact(fig)

    @_stage(EXIT_ORACLE, "oracle")
    def oracle(self):
        import numpy as np

        from . import plotting
        from .oracle import HBConfig, hbm_full, time_integrate_full

        omega0, F1, eps, window, scale = self.forcing_setup()
        o = self.cfg.oracle
        c = self.cfg.continuation
        obs = self._observable(self.cfg.output["observable_mode"])
        hcfg = HBConfig(o["harmonics"], o["n_fourier"] or None, c["ds"], c["ds_max"], c["max_steps"], False)
        res = []
        branches = []
        for i, e in enumerate(eps):
            entry = {"eps": e}
            if o["hbm"]:
                br = hbm_full(self.model, e * F1, window, hcfg, observable=obs, scale=scale)
                self._artifact(br.to_csv(self.out / f"frc_oracle_{i}.csv"))
                branches.append(br)
                entry["omega_peak"], entry["amplitude_peak"] = br.peak()
                print(f"oracle FRC eps={e:.6g}: peak {entry['amplitude_peak']:.6g} at Omega={entry['omega_peak']:.6g}")
            if o["time_integration"]:
                xi = float(self.basis.xi[0]) or 0.01
                rows = []
                for om in np.linspace(window[0], window[1], o["ti_frequencies"]):
                    n_per = int(max(100, 20 / (xi * om) * om / (2 * np.pi) * 2))
                    rows.append((om, time_integrate_full(self.model, e * F1, om, n_periods=n_per,
                                                         observable=obs, scale=scale)))
                path = self.out / f"ti_oracle_{i}.csv"
                with open(path, "w") as fh:
                    fh.write("omega,amplitude\n")
                    for om, a in rows:
                        fh.write(f"{om!r},{a!r}\n")
                self._artifact(path)
            res.append(entry)
        self.summary["oracle"] = res
        if branches and self.cfg.output["plots"]:
            allb = list(getattr(self, "rom_branches", [])) + branches
            labels = [f"ROM eps={e:.3g}" for e in eps][: len(allb) - len(branches)] + \
                     [f"full HB eps={e:.3g}" for e in eps]
            self._artifact(plotting.plot_frc(allb, labels, self.out / "frc_compare.png"))

    @_stage(EXIT_ROM, "whisker")
    def whisker(self):
        import numpy as np

        from . import plotting
        from .rom import ReducedDynamics, whisker_snapshot, write_whisker_csv

        omega0, F1, eps, window, scale = self.forcing_setup()
        w = self.cfg.whisker
        rom = ReducedDynamics(self.param)
        mode = w["slave_mode"] if w["slave_mode"] <= self.model.N else 1
        obs = self._observable(mode)
        g = np.linspace(-w["radius"], w["radius"], w["grid"])
        snaps = []
        for k in range(w["phases"]):
            phase = 2 * np.pi * k / w["phases"]
            rows = whisker_snapshot(rom, phase, g, g, eps[0], obs)
            snaps.append((k, phase, rows))
            if self.cfg.output["plots"]:
                self._artifact(plotting.plot_whisker(rows, self.out / f"whisker_{k}.png",
                                                     title=f"phase {phase:.3f}"))
        self._artifact(write_whisker_csv(self.out / "whisker.csv", snaps))
        self.summary["whisker"] = {"phases": w["phases"], "slave_mode": mode}

    @_stage(EXIT_OUTPUT, "output")
    def write_summary(self):
        path = self.out / "summary.json"
        self.summary["config"] = self.cfg.to_dict()
        path.write_text(json.dumps(self.summary, indent=1, sort_keys=True, default=float))
        return path


def run_command(cmd: str, cfg, args) -> int:
    pipe = Pipeline(cfg, args)
    pipe.prepare()
    pipe.build_model()
    pipe.spectrum()
    if cmd == "spectrum":
        pipe.write_summary()
        return EXIT_OK
    pipe.parametrise()
    if cmd in ("run", "frc"):
        pipe.frc()
    if cmd == "oracle" or (cmd == "run" and (cfg.oracle["hbm"] or cfg.oracle["time_integration"])):
        if cmd == "oracle" and not (cfg.oracle["hbm"] or cfg.oracle["time_integration"]):
            cfg.data["oracle"]["hbm"] = True
        pipe.oracle()
    if cmd == "whisker" or (cmd == "run" and cfg.whisker["enabled"]):
        pipe.whisker()
    path = pipe.write_summary()
    print(f"summary written to {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    from .config import ConfigError, defaults_toml, load_config

    if args.print_defaults:
        print(defaults_toml(), end="")
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    _set_threads(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.report_monomials and args.command != "run" and args.command != "parametrise":
            Pipeline(cfg, args).report_monomials()
        return run_command(args.command, cfg, args)
    except ConfigError as exc:
        print(f"error: configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
