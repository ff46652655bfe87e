"""cglab-extract: dump pooled encoder embeddings over a concept grid."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractionJob, extract
from .sprites import DATASETS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cglab-extract", description=__doc__)
    parser.add_argument("--model", default="resnet18",
                        help="toycnn, resnet18/34/50, or vit_b_16")
    parser.add_argument("--dataset", default="sprites-smoke",
                        choices=sorted(DATASETS))
    parser.add_argument("--out", required=True)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--limit", type=int, default=0,
                        help="only the first N tuples (0 = all)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mapping", default="",
                        help="dataset->space mapping JSON")
    parser.add_argument("--pretrained", action="store_true",
                        help="load published weights (needs their hub); "
                             "default is seeded random init, tagged "
                             "random_baseline=true")
    parser.add_argument("--l2-normalize", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExtractionJob(
        model_id=args.model, dataset_id=args.dataset, output_path=args.out,
        batch_size=args.batch_size, device=args.device,
        pretrained=args.pretrained, l2_normalize=args.l2_normalize,
        limit=args.limit, seed=args.seed, mapping_path=args.mapping)
    try:
        path = extract(job)
    except (ValueError, OSError) as exc:
        print(f"cglab-extract: {exc}", file=sys.stderr)
        return 1
    print(f"cglab-extract: wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
