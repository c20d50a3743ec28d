"""Command-line entry point ``tensortomo``.

Subcommands: ``phantom``, ``forward``, ``reconstruct``, ``decompose``,
``verify`` and ``benchmark``.  Exit status is 0 on success, 1 for
configuration errors, 2 for numerical failures and 3 for I/O errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .decomposition import ConvergenceError, decompose
from .field import TensorField, l2_error, stacked_phantom
from .io import (
    SinogramRecord,
    atomic_write,
    read_field,
    read_sinogram,
    write_field,
    write_pgm,
    write_sinogram,
)
from .oracle import SuiteConfig, run_identity_suite
from .reconstruction import (
    add_noise,
    pipeline_datasets,
    reconstruct_from_lrt,
    reconstruct_from_trt,
)
from .transforms import MissingDataError, WeightedDataset, make_dataset

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("tensortomo")


class NumericalFailure(RuntimeError):
    """A result breached its configured tolerance."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _preview_slice(data: np.ndarray) -> np.ndarray:
    while data.ndim > 2:
        data = data[..., data.shape[-1] // 2]
    return data


def _previews(cfg: ExperimentConfig, out: Path, stem: str, u: TensorField) -> None:
    if cfg.preview:
        for c in range(u.data.shape[0]):
            write_pgm(out / f"{stem}_c{c}.pgm", _preview_slice(u.data[c]))


def _record_name(family: str, order: int, ell) -> str:
    return f"{family}_k{order}_l{'-'.join(str(e) for e in ell)}.sgrm"


def _report(cfg: ExperimentConfig, body: str) -> str:
    return cfg.to_text() + body


# --- subcommands ------------------------------------------------------------------


def cmd_phantom(cfg: ExperimentConfig, out: Path, args) -> int:
    grid = cfg.make_grid()
    comps, f = stacked_phantom(grid, cfg.m, cfg.seed, cfg.phantom_spec())
    dec = decompose(f, cfg.decompose_tol)
    errs = [l2_error(a, b) for a, b in zip(dec.components, comps)]
    write_field(out / "f.sttf", f)
    for i, v in enumerate(comps):
        write_field(out / f"v{i}.sttf", v)
    _previews(cfg, out, "f", f)
    body = f"decomposition_residual = {dec.residual:.6e}\n"
    body += "".join(f"decomposition_error_v{i} = {e:.6e}\n" for i, e in enumerate(errs))
    atomic_write(out / "phantom.txt", _report(cfg, body).encode())
    log.info("phantom: rank %d on %s grid, decomposition residual %.3e", cfg.m, grid.shape, dec.residual)
    return EXIT_OK


def _forward_records(cfg: ExperimentConfig, f: TensorField):
    dirs = cfg.make_directions(f.grid.shape[0])
    pgrid = cfg.make_pgrid(f.grid)
    for pipe in cfg.pipelines():
        families = [(pipe, 0)] + [("w" + pipe, k) for k in range(1, f.rank + 1)]
        for family, k in families:
            ds = make_dataset(f, family, k, dirs, pgrid, cfg.interp_order)
            for ell, s in ds.entries.items():
                yield SinogramRecord(family, k, ell, s)


def cmd_forward(cfg: ExperimentConfig, out: Path, args) -> int:
    f = read_field(args.input or out / "f.sttf")
    if f.rank != cfg.m or f.dim != cfg.n:
        raise ConfigError(f"field has n={f.dim}, m={f.rank}; config says n={cfg.n}, m={cfg.m}")
    count = 0
    for rec in _forward_records(cfg, f):
        name = _record_name(rec.family, rec.order, rec.ell)
        write_sinogram(out / name, rec)
        if cfg.preview:
            write_pgm(out / name.replace(".sgrm", ".pgm"), rec.sinogram.data)
        count += 1
    log.info("forward: wrote %d sinogram records", count)
    return EXIT_OK


def _load_datasets(src: Path, m: int) -> dict[tuple[str, int], WeightedDataset]:
    files = sorted(src.glob("*.sgrm"))
    if not files:
        raise MissingDataError(f"no sinogram files found in {src}")
    entries: dict[tuple[str, int], dict] = {}
    for path in files:
        rec = read_sinogram(path)
        entries.setdefault((rec.family, rec.order), {})[rec.ell] = rec.sinogram
    return {key: WeightedDataset(key[0], key[1], m, ents) for key, ents in entries.items()}


def _load_truth(src: Path, m: int):
    paths = [src / f"v{i}.sttf" for i in range(m + 1)]
    return [read_field(p) for p in paths] if all(p.exists() for p in paths) else None


def cmd_reconstruct(cfg: ExperimentConfig, out: Path, args) -> int:
    cfg.require_pipeline()
    src = Path(args.input) if args.input else out
    data = _load_datasets(src, cfg.m)
    truth = _load_truth(src, cfg.m)
    if cfg.noise > 0:
        rng = np.random.default_rng(cfg.seed)
        data = {key: add_noise(ds, cfg.noise, rng) for key, ds in sorted(data.items())}
    grid = cfg.make_grid()
    status = EXIT_OK
    for pipe in cfg.pipelines():
        if (pipe, 0) not in data:
            raise MissingDataError(f"{pipe} dataset is missing")
        weighted = {k: ds for (fam, k), ds in data.items() if fam == "w" + pipe}
        solver = reconstruct_from_lrt if pipe == "lrt" else reconstruct_from_trt
        rep = solver(data[(pipe, 0)], weighted, grid, cfg.m, truth, cfg.cutoff, cfg.interp_order)
        for i, v in enumerate(rep.components):
            write_field(out / f"rec_{pipe}_v{i}.sttf", v)
        _previews(cfg, out, f"rec_{pipe}", rep.compose())
        body = f"noise = {cfg.noise}\n" + rep.to_text()
        atomic_write(out / f"reconstruct_{pipe}.txt", _report(cfg, body).encode())
        atomic_write(out / f"reconstruct_{pipe}.csv", rep.to_csv().encode())
        if rep.composed_error is not None:
            log.info("reconstruct %s: composed relative error %.3e", pipe, rep.composed_error)
            if cfg.error_tol and rep.composed_error > cfg.error_tol:
                log.error("reconstruct %s: error exceeds tolerance %.1e", pipe, cfg.error_tol)
                status = EXIT_NUMERICAL
        else:
            log.info("reconstruct %s: done (no ground truth found)", pipe)
    return status


def cmd_decompose(cfg: ExperimentConfig, out: Path, args) -> int:
    f = read_field(args.input or out / "f.sttf")
    dec = decompose(f, cfg.decompose_tol)
    for i, v in enumerate(dec.components):
        write_field(out / f"dec_v{i}.sttf", v)
    body = f"gauge = {dec.gauge}\nresidual = {dec.residual:.6e}\n"
    body += "".join(f"divergence_residual_v{i} = {r:.6e}\n" for i, r in enumerate(dec.divergence_residuals))
    atomic_write(out / "decompose.txt", _report(cfg, body).encode())
    log.info("decompose: residual %.3e", dec.residual)
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: Path, args) -> int:
    suite = SuiteConfig(
        grid=cfg.verify_grid,
        directions=cfg.verify_directions,
        seed=cfg.seed,
        tolerance_scale=cfg.tolerance_scale,
    )
    report = run_identity_suite(suite)
    atomic_write(out / "verify.txt", report.to_text().encode())
    atomic_write(out / "verify.csv", report.to_csv().encode())
    for r in report.results:
        log.info("%s %s: %.3e (tolerance %.1e)", "PASS" if r.passed else "FAIL", r.name, r.residual, r.tolerance)
    if not report.passed:
        log.error("verify: failing identities: %s", ", ".join(report.failures()))
        return EXIT_NUMERICAL
    return EXIT_OK


BENCH_COLUMNS = [
    "pipeline", "grid", "directions", "forward_s", "correction_s", "invert_s", "solve_s", "total_s", "composed_error",
]


def benchmark_rows(cfg: ExperimentConfig):
    """One row per pipeline and grid size of the sweep."""
    cfg.require_pipeline()
    for pipe in cfg.pipelines():
        for size in cfg.sweep:
            grid = cfg.make_grid(size)
            dirs = cfg.make_directions(size)
            pgrid = cfg.make_pgrid(grid)
            comps, f = stacked_phantom(grid, cfg.m, cfg.seed, cfg.phantom_spec())
            t0 = time.perf_counter()
            base, weighted = pipeline_datasets(f, pipe, dirs, pgrid, cfg.interp_order)
            forward = time.perf_counter() - t0
            solver = reconstruct_from_lrt if pipe == "lrt" else reconstruct_from_trt
            rep = solver(base, weighted, grid, cfg.m, comps, cfg.cutoff, cfg.interp_order)
            row = {
                "pipeline": pipe,
                "grid": size,
                "directions": len(dirs),
                "forward_s": forward,
                "correction_s": sum(s["correction_seconds"] for s in rep.stages),
                "invert_s": sum(s["invert_seconds"] for s in rep.stages),
                "solve_s": sum(s["solve_seconds"] for s in rep.stages),
                "total_s": forward + sum(s["seconds"] for s in rep.stages),
                "composed_error": rep.composed_error,
            }
            row.update({f"error_v{i}": e for i, e in enumerate(rep.component_errors)})
            yield row


def cmd_benchmark(cfg: ExperimentConfig, out: Path, args) -> int:
    rows = []
    for row in benchmark_rows(cfg):
        rows.append(row)
        log.info("benchmark %s grid %d: error %.3e, %.1f s", row["pipeline"], row["grid"], row["composed_error"], row["total_s"])
    columns = BENCH_COLUMNS + [f"error_v{i}" for i in range(cfg.m + 1)]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.6e}" if isinstance(v, float) else v) for k, v in row.items()})
    atomic_write(out / "benchmark.csv", buf.getvalue().encode())
    for pipe in cfg.pipelines():
        errs = [r["composed_error"] for r in rows if r["pipeline"] == pipe]
        monotone = all(b < a for a, b in zip(errs, errs[1:]))
        log.info("benchmark %s: error %s with resolution", pipe, "decreases" if monotone else "does not decrease")
    return EXIT_OK


COMMANDS = {
    "phantom": (cmd_phantom, "generate a phantom field and its ground-truth components"),
    "forward": (cmd_forward, "compute sinogram records of a field"),
    "reconstruct": (cmd_reconstruct, "recover the components from sinogram records"),
    "decompose": (cmd_decompose, "split a field into solenoidal and potential parts"),
    "verify": (cmd_verify, "run the operator identity suite"),
    "benchmark": (cmd_benchmark, "time the pipelines across the grid sweep"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tensortomo", description="Tomography of symmetric tensor fields.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--input", help="input file or directory")
        p.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s", force=True)
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        out = Path(cfg.out)
        return func(cfg, out, args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (OSError, MissingDataError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (ConvergenceError, NumericalFailure, ValueError, ArithmeticError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
