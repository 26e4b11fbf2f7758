"""Reference external predictor: reads an instance export, writes constant-velocity predictions.

Usage: python -m estpred.echo_predictor INSTANCES_CSV PREDICTIONS_CSV
"""
import sys

from .predictors import predict_constant_velocity, write_predictions
from .windowing import read_instances


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print(__doc__.strip().splitlines()[-1], file=sys.stderr)
        return 2
    instances = read_instances(argv[0])
    write_predictions(argv[1], [predict_constant_velocity(i) for i in instances])
    return 0


if __name__ == "__main__":
    sys.exit(main())
