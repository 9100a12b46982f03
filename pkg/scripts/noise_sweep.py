#!/usr/bin/env python3
"""Token-recovery sweep over channel settings.

Runs the end-to-end pipeline (embed, channel, three-stage recovery) for each
channel spec and reports per-stage token recovery, effective capacity, and
text-stream usage, aggregated over seeds.

Example:
    python3 scripts/noise_sweep.py --seeds 5 \
        --channels "gaussian:0.005;gaussian:0.02;quantize:16;rescale:0.5"
"""

import argparse
import os

from vqstego.config import default_config, load_config
from vqstego.pipeline import rows_to_jsonl, run_sweep

DEFAULT_CHANNELS = ("lossless;gaussian:0.005;gaussian:0.01;gaussian:0.02;"
                    "quantize:64;quantize:32;quantize:16;rescale:0.5;rescale:2")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--channels", default=DEFAULT_CHANNELS,
                        help="semicolon-separated channel specs")
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--message-bits", type=int, default=500)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="sweep_out")
    args = parser.parse_args()

    cfg = load_config(args.config) if args.config else default_config()
    result = run_sweep(cfg, channels=args.channels.split(";"),
                       n_seeds=args.seeds, jobs=args.jobs,
                       message_bits=args.message_bits)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "sweep_rows.jsonl"), "w") as f:
        f.write(rows_to_jsonl(result["rows"]))
    with open(os.path.join(args.out, "sweep_table.txt"), "w") as f:
        f.write(result["table"] + "\n")
    print(result["table"])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
