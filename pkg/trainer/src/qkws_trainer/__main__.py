"""Train on a dataset directory and export an engine model.

    python -m qkws_trainer --data DIR --output model.qkws [--log train.json]
"""

import argparse
import json
import sys

from .data import load_dataset
from .export import export_model
from .train import TrainConfig, train_toy


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qkws_trainer")
    parser.add_argument("--data", required=True, help="directory of sample*.npz")
    parser.add_argument("--output", required=True, help="model file to write")
    parser.add_argument("--log", help="training log JSON path")
    parser.add_argument("--layers", type=int, default=2)
    parser.add_argument("--units", type=int, default=8)
    parser.add_argument("--epochs", type=int, default=300)
    parser.add_argument("--quant-epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    dataset = load_dataset(args.data)
    feature_size = dataset[0][0].shape[1]
    num_classes = max(max(labels) for _, labels in dataset) + 1
    config = TrainConfig(
        layers=args.layers,
        units=args.units,
        feature_size=feature_size,
        num_classes=num_classes,
        epochs=args.epochs,
        quant_epochs=args.quant_epochs,
        seed=args.seed,
    )
    result = train_toy(dataset, config)
    phones = ["<blank>"] + [f"p{i}" for i in range(1, num_classes)]
    export_model(result.model, args.output, phones)
    if args.log:
        with open(args.log, "w") as f:
            json.dump({"history": result.history}, f, indent=2)
    print(f"final per-frame CTC loss {result.final_loss:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
