import argparse
import logging
import os
from typing import Any, Dict

from dsiscan import dataio, genmodel, spectral
from dsiscan.commands import STATUS_OK, apply_log_level, build_config
from dsiscan.schemas import GrowthModelParams, SynthConfig

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    p = subparsers.add_parser("synth", help="Draw a synthetic log-periodic size sample with its ground truth")
    p.add_argument("--config", help="JSON file with synth fields")
    p.add_argument("--n", type=float, help="preferential attachment exponent")
    p.add_argument("--t0", dest="T0", type=float, help="growth temperature")
    p.add_argument("--gamma", type=float)
    p.add_argument("--kappa", type=int)
    p.add_argument("--w0", type=float)
    p.add_argument("--w1", type=float, help="log-periodic amplitude; 0 disables the oscillation")
    p.add_argument("--omega", type=float, help="target angular log-frequency (solves gamma and n)")
    p.add_argument("--exponent", type=float, help="target tail exponent m when --omega is given")
    p.add_argument("--s-min", type=float)
    p.add_argument("--s-max", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--log-level")
    p.set_defaults(handler=run)


def model_params(cfg: SynthConfig) -> GrowthModelParams:
    if cfg.omega is not None:
        exponent = cfg.exponent if cfg.exponent is not None else cfg.n
        return genmodel.params_for_omega(cfg.omega, cfg.kappa, exponent, T0=cfg.T0, w0=cfg.w0, w1=cfg.w1)
    return GrowthModelParams(n=cfg.n, T0=cfg.T0, gamma=cfg.gamma, kappa=cfg.kappa, w0=cfg.w0, w1=cfg.w1)


def ground_truth(cfg: SynthConfig, params: GrowthModelParams) -> Dict[str, Any]:
    omega = genmodel.predict_omega(params.gamma, params.kappa)
    truth: Dict[str, Any] = {
        "params": params.model_dump(),
        "predicted_omega": omega,
        "scaling_ratio": spectral.scaling_ratio(omega),
        "tail_exponent": genmodel.logperiodic_exponent(params),
        "log_periodic": params.w1 != 0,
        "s_min": cfg.s_min,
        "s_max": cfg.s_max,
        "count": cfg.count,
        "seed": cfg.seed,
    }
    if params.w1 == 0:
        truth["note"] = "no log-periodicity"
    return truth


def synthesize(cfg: SynthConfig) -> Dict[str, Any]:
    params = model_params(cfg)
    sample = genmodel.sample_logperiodic(params, cfg.s_min, cfg.s_max, cfg.count, cfg.seed)
    truth = ground_truth(cfg, params)
    os.makedirs(cfg.out, exist_ok=True)
    dataio.save_sizes(os.path.join(cfg.out, "sizes.csv"), sample)
    dataio.write_json(os.path.join(cfg.out, "ground_truth.json"), truth)
    logger.info("Synthetic sample of %d sizes written to %s", sample.count, cfg.out)
    return truth


def run(args: argparse.Namespace) -> int:
    cfg = build_config(args, SynthConfig)
    apply_log_level(cfg.log_level)
    truth = synthesize(cfg)
    print(
        f"{STATUS_OK} {cfg.count} sizes written to {cfg.out} "
        f"(omega={truth['predicted_omega']:.3f}, ratio={truth['scaling_ratio']:.3f})"
    )
    return 0
