#!/usr/bin/env python3
"""
CV-QKD Desk - Command-Line Entry Point

    python -m src.main simulate --config run.cfg [--seed N] [--out DIR]
    python -m src.main boundary --config run.cfg
    python -m src.main distill  --config run.cfg
    python -m src.main report   --config run.cfg

Exit codes: 0 success, 2 configuration error, 3 infeasible parameters,
4 aborted session, 1 anything else.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

# Project root on sys.path so `python src/main.py` works too
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from config.settings import Settings
from src.core.artifacts import RunArtifacts
from src.core.gaussian_source import CalibrationError, estimate_channel, measure, squeezing_db
from src.core.reporting import (
    BOUNDARY_HEADER,
    POINTS_HEADER,
    STAGE_HEADER,
    boundary_rows,
    format_stage_table,
    key_hex,
    point_rows,
    stage_rows,
)
from src.core.run_config import ConfigError, RunConfig, load_config
from src.core.security import Attack, ensemble_rates
from src.processors.distillation import (
    PointClass,
    StageReport,
    classify_points,
    eve_bound,
    postselect,
    sift,
    stage_accounting,
)
from src.protocol.session import SessionAborted, SessionResult, run_session

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_ABORTED = 4


class InfeasibleParameters(RuntimeError):
    """The configured channel yields no secret key."""


def build_stage_report(config: RunConfig, result: SessionResult) -> StageReport:
    ctx = config.security_context()
    raw = ensemble_rates(ctx)
    return stage_accounting(
        n_symbols=config.n_symbols,
        symbol_rate_hz=config.symbol_rate_hz,
        attack=config.attack,
        raw_i_ab=raw.i_ab,
        raw_eve=raw.eve_info,
        kept=result.kept,
        eve_bits_per_symbol=result.eve_bits_per_symbol,
        leakage_bits=result.leakage_bits,
        final_bits=result.final_bits,
    )


class QKDDesk:
    """Runs one subcommand against a RunConfig and writes its artifacts."""

    def __init__(self, command: str, config: RunConfig):
        self.command = command
        self.config = config
        self.artifacts = RunArtifacts(command, Path(config.out_dir), config.to_dict())

    def run(self) -> int:
        handler = getattr(self, f"cmd_{self.command}")
        return handler()

    def cmd_simulate(self) -> int:
        cfg = self.config
        source = cfg.source()
        alice, bob = measure(
            source, cfg.channel(), cfg.timing(), cfg.n_symbols, cfg.seed,
            np.random.default_rng([cfg.seed, 2]), np.random.default_rng([cfg.seed, 3]),
        )
        pairs = sift(alice, bob, source.V)
        selection = postselect(
            pairs, cfg.security_context(), cfg.attack, enabled=cfg.postselect, efficiency=cfg.reconciliation_efficiency
        )
        classes = classify_points(pairs, selection)
        self.artifacts.write_csv("points", "points.csv", POINTS_HEADER, point_rows(pairs, selection, classes))

        same = alice.basis == bob.basis
        summary = {
            "symbols": cfg.n_symbols,
            "sifted": len(pairs),
            "kept": int(len(selection.kept)),
            "classes": {c.value: int(np.count_nonzero(classes == c.value)) for c in PointClass},
            "squeezing_db": squeezing_db(source.r),
            "eve_bits_per_symbol": eve_bound(selection.kept_assessments(), cfg.attack, cfg.eve_bound),
        }
        if np.count_nonzero(same) >= 2:
            est = estimate_channel(alice.value[same], bob.value[same], basis=alice.basis[same])
            summary["estimate"] = {"V": est.V, "eta": est.eta, "delta": est.delta, "samples": est.samples}
        self.artifacts.write_json("summary", "summary.json", summary)

        if not len(selection.kept):
            raise InfeasibleParameters("no sifted point survives post-selection")
        return EXIT_OK

    def cmd_boundary(self) -> int:
        ctx = self.config.security_context()
        rows = boundary_rows(ctx)
        self.artifacts.write_csv("boundary", "boundary.csv", BOUNDARY_HEADER, rows)
        column = 1 if ctx.attack is Attack.COLLECTIVE else 2
        if all(row[column] == "" for row in rows):
            raise InfeasibleParameters(f"no boundary exists for the {ctx.attack.value} attack on this grid")
        return EXIT_OK

    def _session(self) -> tuple[SessionResult, StageReport]:
        result = run_session(self.config)
        self.artifacts.write_bytes("transcript", "transcript.bin", result.transcript.dump())
        if result.aborted:
            raise SessionAborted(result.reason)
        report = build_stage_report(self.config, result)
        self.artifacts.write_csv("stage_report", "stage_report.csv", STAGE_HEADER, stage_rows(report))
        self.artifacts.write_text("stage_table", "stage_table.txt", format_stage_table(report))
        return result, report

    def cmd_distill(self) -> int:
        result, report = self._session()
        self.artifacts.write_text("alice_key", "alice_key.hex", key_hex(result.alice_key))
        self.artifacts.write_text("bob_key", "bob_key.hex", key_hex(result.bob_key))
        self.artifacts.write_json("summary", "summary.json", {
            **result.stats,
            "qber_estimate": result.qber_est,
            "qber_measured": result.qber_actual,
            "eve_bits_per_symbol": result.eve_bits_per_symbol,
            "magnitudes_announced": result.leakage.magnitudes_announced,
            "stages": report.to_dict(),
        })
        if result.final_bits == 0:
            raise InfeasibleParameters("privacy amplification left no key")
        return EXIT_OK

    def cmd_report(self) -> int:
        _, report = self._session()
        title = f"eta={self.config.eta} delta={self.config.delta} V={self.config.V} ({report.attack.value})"
        print(format_stage_table(report, title))
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkd", description="Continuous-variable QKD simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("simulate", "per-point scatter with post-selection classes"),
        ("boundary", "post-selection boundary curves for both attacks"),
        ("distill", "full two-party session, keys written as hex"),
        ("report", "stage table for one session"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="run configuration file (key = value lines)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", type=Path, help="override the output directory")
        p.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Parse arguments, run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else Settings.log_level(),
        format=Settings.LOG_FORMAT,
    )
    for issue in Settings.validate():
        log = logger.error if issue["level"] == "error" else logger.warning
        log(issue["msg"])

    try:
        config = load_config(args.config) if args.config else RunConfig()
        config = config.with_overrides(seed=args.seed, out_dir=str(args.out) if args.out else None)
        return QKDDesk(args.command, config).run()
    except (ConfigError, CalibrationError, FileNotFoundError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except InfeasibleParameters as e:
        logger.warning(f"Infeasible parameters: {e}")
        return EXIT_INFEASIBLE
    except SessionAborted as e:
        logger.error(f"Session aborted: {e}")
        return EXIT_ABORTED
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return EXIT_FAILURE
    except Exception as e:
        logger.exception(f"Run failed: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
