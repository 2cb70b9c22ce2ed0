"""Subcommands simulate | intensity | verify and the argument parser."""
import argparse
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ...lib.common_utils import setup_logging
from ...lib.errors import (EXIT_NUMERICAL, EXIT_PASS, EXIT_STATISTICAL_FAIL, HazardLabError,
                           ValidationError)
from ..compensators.engine import azema_path, general_compensator_eq5, jeulin_yor_transform
from ..compensators.intensities import FORMULAS, named_intensity
from ..compensators.kernels import kernel_for_window
from ..compensators.windows import DelayLaw, LocalJumpWindow
from ..levy.levy_system import LevySystemSpec, intensity_default_region
from ..models.model_spec import ModelSpec, ObservationSchedule, StoppingRule
from ..reports.writers import write_summary, write_table
from ..verification.harness import (VerificationSetup, records_frame, run_paths, verify,
                                    with_sigma)
from .config import RunConfig, load_config

logger = setup_logging(__name__)

CHAIN_HIT = 'chain_hit'
DEFAULT_REGION = 'default_region'
LEVY_FORMULAS = {
    CHAIN_HIT: 'sum_{j in D} q_{eps j}',
    DEFAULT_REGION: '1{eps not in D} sum_{j in D} q_{eps j} 1{X_t <= x}',
}


def _require_seed(config: RunConfig) -> int:
    seed = config.verification.seed
    if seed is None:
        raise ValidationError("verification.seed is required (or pass --seed)")
    return seed


def _setup(config: RunConfig, model: ModelSpec, schedule: ObservationSchedule,
           times: Optional[Sequence[float]] = None) -> VerificationSetup:
    v = config.verification
    compensator_model = with_sigma(model, v.compensator_sigma) if v.compensator_sigma else None
    return VerificationSetup(
        model=model, schedule=schedule,
        times=tuple(v.times if times is None else times),
        compensator_model=compensator_model, bias_factor=v.bias_factor,
        orthogonality_s=v.orthogonality_s, max_step=v.max_step, bridge=v.bridge,
        crossing_time=v.crossing_time,
    )


def intensity_window(config: RunConfig, model: ModelSpec, schedule: ObservationSchedule) -> LocalJumpWindow:
    """The window (S, T] requested by the intensity section."""
    c = config.intensity
    S = c.window_start
    v2 = schedule.next_time_after(S) - S
    if not math.isfinite(v2):
        raise ValidationError(f"window_start={S} lies at or after the last observation time")
    T = S + v2 if c.window_end is None else c.window_end
    if not S < T <= S + v2 + 1e-12:
        raise ValidationError(f"window_end must lie in ({S}, {S + v2}], got {T}")
    regime = model.regime0 if c.regime is None else c.regime
    if not 0 <= regime < model.n_regimes:
        raise ValidationError(f"intensity.regime={regime} outside state space of size {model.n_regimes}")
    rate = model.generator.exit_rate(regime) if schedule.observe_regime_jumps else 0.0
    x_s = model.x0 if c.x_s is None else c.x_s
    return LocalJumpWindow(S, min(T, S + v2), x_s, regime, v2, DelayLaw(rate, v2), c.survivor)


def intensity_curve(config: RunConfig) -> Tuple[pd.DataFrame, pd.DataFrame, Dict[str, object]]:
    """(curve, atoms, summary) of the configured window and engine."""
    model = config.model.build()
    schedule = config.schedule.build()
    window = intensity_window(config, model, schedule)
    engine = config.intensity.engine
    knots = window.S + np.linspace(0.0, window.length, config.intensity.n_knots)[1:]
    atoms: List[Tuple[float, float]] = []

    if model.stopping_rule != StoppingRule.FIRST_PASSAGE:
        if engine != 'named':
            raise ValidationError(f"engine '{engine}' needs a first-passage model")
        if model.stopping_rule == StoppingRule.CHAIN_HIT:
            formula = CHAIN_HIT
            rate = LevySystemSpec.from_model(model).hit_rate(window.regime_s)
        else:
            formula = DEFAULT_REGION
            rate = intensity_default_region(model, window.x_s, window.regime_s)
        values = np.full(len(knots), rate)
        text = LEVY_FORMULAS[formula]
    else:
        kernel = kernel_for_window(window, model)
        if engine == 'named':
            pairs = [named_intensity(window, model, float(t)) for t in knots]
            values = np.array([p[0] for p in pairs])
            formula = pairs[0][1]
            text = FORMULAS[formula]
        else:
            if engine == 'eq5-generic':
                path = general_compensator_eq5(window, kernel, config.intensity.n_knots)
            else:
                path = jeulin_yor_transform(azema_path(window, kernel, config.intensity.n_knots))
            values = path.density[1:]
            atoms = list(path.atoms)
            formula = engine
            text = '-f_u / f + (h / f) kappa / P(T - S >= u)'

    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(knots))])
    curve = pd.DataFrame({'t': knots, 'intensity': values, 'cumulative': cumulative})
    atom_frame = pd.DataFrame(atoms, columns=['t', 'mass'])
    summary = {
        'command': 'intensity',
        'engine': engine,
        'formula': formula,
        'formula_text': text,
        'window': {'S': window.S, 'T': window.T, 'x_s': window.x_s, 'regime': window.regime_s,
                   'v2': window.v2},
        'final_intensity': float(values[-1]),
        'n_atoms': len(atoms),
    }
    return curve, atom_frame, summary


def cmd_intensity(config: RunConfig) -> int:
    curve, atoms, summary = intensity_curve(config)
    out, fmt = config.output.out, config.output.format
    write_table(curve, out, config.name, 'intensity', fmt)
    write_table(atoms, out, config.name, 'atoms', fmt)
    write_summary(summary, out, config.name, 'intensity_summary')
    logger.info(f"Intensity by formula '{summary['formula']}': {summary['formula_text']}")
    return EXIT_PASS


def cmd_simulate(config: RunConfig) -> int:
    seed = _require_seed(config)
    model = config.model.build()
    schedule = config.schedule.build()
    setup = _setup(config, model, schedule, times=(schedule.horizon,))
    n_paths = config.verification.n_paths
    records = run_paths(setup, seed, n_paths)

    frame = records_frame(records)
    defaulted = float(np.mean([r.tau <= schedule.horizon for r in records])) if records else 0.0
    summary = {
        'command': 'simulate',
        'seed': seed,
        'n_paths': n_paths,
        'horizon': schedule.horizon,
        'default_fraction': defaulted,
        'default_fraction_se': math.sqrt(defaulted * (1.0 - defaulted) / n_paths) if n_paths else 0.0,
    }
    write_table(frame, config.output.out, config.name, 'paths', config.output.format)
    write_summary(summary, config.output.out, config.name, 'simulate_summary')
    return EXIT_PASS


def cmd_verify(config: RunConfig) -> int:
    seed = _require_seed(config)
    model = config.model.build()
    schedule = config.schedule.build()
    setup = _setup(config, model, schedule)
    v = config.verification
    outcome = verify(setup, seed, v.n_paths, v.z_max)

    out, fmt = config.output.out, config.output.format
    write_table(outcome.residual.to_frame(), out, config.name, 'residual', fmt)
    write_table(outcome.orthogonality.to_frame(), out, config.name, 'orthogonality', fmt)
    passed = outcome.passed and not outcome.residual.inconclusive
    write_summary({
        'command': 'verify',
        'seed': seed,
        'passed': passed,
        'residual': outcome.residual.summary(),
        'orthogonality': outcome.orthogonality.summary(),
    }, out, config.name, 'verify_summary')
    return EXIT_PASS if passed else EXIT_STATISTICAL_FAIL


COMMANDS = {
    'simulate': cmd_simulate,
    'intensity': cmd_intensity,
    'verify': cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='hazardlab',
                                     description='Default-time compensators: simulate, evaluate, verify')
    parser.add_argument('command', choices=sorted(COMMANDS), help='Subcommand to run')
    parser.add_argument('--config', required=True, help='Path to a JSON run config')
    parser.add_argument('--seed', type=int, help='Override verification.seed')
    parser.add_argument('--out', help='Output directory or s3://bucket/prefix')
    parser.add_argument('--format', choices=['csv', 'json', 'parquet'], help='Table format')
    return parser


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.seed is not None:
        config.verification.seed = args.seed
    if args.out is not None:
        config.output.out = args.out
    if args.format is not None:
        config.output.format = args.format
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = apply_overrides(load_config(args.config), args)
        logger.info(f"Running '{args.command}' for config '{config.name}'")
        return COMMANDS[args.command](config)
    except HazardLabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Error running {args.command}: {str(e)}", exc_info=True)
        return EXIT_NUMERICAL
