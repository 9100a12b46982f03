#!/usr/bin/env python3
"""Correction-stream budget sweep over max_tokens.

Measures how the realized text payload (bits the second stego stream can
carry) and the end-to-end recovery metrics change with the text length
budget, aggregated over seeds.

Example:
    python3 scripts/text_budget_sweep.py --max-tokens 50,100,200 --seeds 10
"""

import argparse
import os
from dataclasses import replace

from vqstego import channel as chan
from vqstego.config import default_config, load_config
from vqstego.pipeline import rows_to_jsonl, run_sweep


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--max-tokens", default="50,100,200",
                        help="comma-separated text-length budgets")
    parser.add_argument("--channel", default="gaussian:0.02",
                        help="channel spec used for every run")
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--message-bits", type=int, default=500)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="text_sweep_out")
    args = parser.parse_args()

    cfg = load_config(args.config) if args.config else default_config()
    cfg = replace(cfg, channel=chan.parse_channel(args.channel,
                                                  cfg.channel.noise_seed))
    result = run_sweep(cfg,
                       max_tokens=[int(v) for v in args.max_tokens.split(",")],
                       n_seeds=args.seeds, jobs=args.jobs,
                       message_bits=args.message_bits)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "text_sweep_rows.jsonl"), "w") as f:
        f.write(rows_to_jsonl(result["rows"]))
    with open(os.path.join(args.out, "text_sweep_table.txt"), "w") as f:
        f.write(result["table"] + "\n")
    print(result["table"])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
