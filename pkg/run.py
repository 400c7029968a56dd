import argparse
import sys

from app.main import main

STUDY_HELP = {
    "verify": "run the discrete identity checks (nonzero exit if any check fails)",
    "rve": "representative volume element estimates of abar and Q",
    "gk": "windowed Green-Kubo estimate of Q on the doubled torus",
    "clt": "variance of the commutator and corrector functionals under CLT scaling",
    "pathwise": "solution functionals, two-scale commutator error and the pathwise identity",
    "normality": "Kolmogorov and Wasserstein distances of rescaled abar fluctuations",
    "moments": "second moments of the corrector and flux corrector",
}


def build_parser() -> argparse.ArgumentParser:
    # CLI 인자 파서 생성
    parser = argparse.ArgumentParser(description="Discrete stochastic homogenization fluctuation lab")
    sub = parser.add_subparsers(dest="kind", required=True)

    for kind, help_text in STUDY_HELP.items():
        p = sub.add_parser(kind, help=help_text)
        p.add_argument("--config", type=str, default=None, help="TOML experiment config")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. --set solver.tol=1e-8 (repeatable)")
        p.add_argument("--seed", type=int, default=None, help="master seed (unsigned 64-bit)")
        p.add_argument("--workers", type=int, default=None, help="worker processes (default: available CPUs)")
        p.add_argument("--out", type=str, default=None, help="output directory (env: HOMOG_OUTPUT_DIR)")
        p.add_argument("--log-file", type=str, default=None, help="loguru log file")
    return parser


if __name__ == "__main__":
    args = build_parser().parse_args()
    sys.exit(main(args.kind, args.config, args.overrides, args.seed, args.workers, args.out, args.log_file))
