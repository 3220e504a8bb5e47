"""Command-line front end.

    mvshort synth --out bench --seed 0
    mvshort pipeline --config bench/pipeline.ini
    mvshort stats --config bench/pipeline.ini

Exit status: 0 success, 1 usage error, 2 configuration or parameter error,
3 data or file-format error.
"""

import argparse
import logging
import os
import sys

from . import pipeline
from .config import ConfigError, load_config, parse_transform
from .descriptors import DEFAULT_CHANNELS, apply_transforms, load_descriptors, load_projection, save_descriptors
from .errors import DataError, FormatError, ParameterError
from .synth import SynthSpec, generate_synthetic

log = logging.getLogger("mvshort")

EXIT_USAGE, EXIT_CONFIG, EXIT_DATA = 1, 2, 3

SUBCOMMANDS = {
    "transform": "apply a descriptor transform chain to one file",
    "train-vocab": "train the k-means vocabularies",
    "train-desc-pca": "train descriptor projections named in transforms",
    "encode": "quantize and encode multi-vocabulary BOW vectors",
    "train-reduction": "train the joint PCA-whitening model",
    "reduce": "project BOW vectors to short vectors",
    "index": "build the search index",
    "search": "rank the database for every query",
    "eval": "compute per-query AP and mAP",
    "stats": "quantization complexity and unique-assignment curve",
    "synth": "write a synthetic benchmark and config",
    "pipeline": "run every stage in order",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _shared(p):
    p.add_argument("--config", help="pipeline config file (INI)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="sampling / generator seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="mvshort", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    for name, text in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=text)
        _shared(p)
        if name == "transform":
            p.add_argument("--input", required=True, help="descriptor file")
            p.add_argument("--output", required=True, help="transformed descriptor file")
            p.add_argument("--chain", required=True,
                           help="e.g. 'power:0.5' or 'power:0.5+projection:p.mvpj'")
        elif name == "synth":
            d = SynthSpec()
            p.add_argument("--n-images", type=int, default=d.n_images)
            p.add_argument("--n-queries", type=int, default=d.n_queries)
            p.add_argument("--positives", type=int, default=d.positives_per_query)
            p.add_argument("--train-images", type=int, default=d.n_train_images)
            p.add_argument("--descriptors", type=int, default=d.descriptors_per_image)
            p.add_argument("--dim", type=int, default=d.dim)
            p.add_argument("--patterns", type=int, default=d.n_patterns)
            p.add_argument("--pattern-spread", type=float, default=d.pattern_spread)
            p.add_argument("--noise", type=float, default=d.noise)
            p.add_argument("--clutter", type=float, default=d.clutter)
            p.add_argument("--channels", default=",".join(DEFAULT_CHANNELS))
            p.add_argument("--k", type=int, default=256, help="vocabulary size in the written config")
    return parser


def _config(args):
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    overrides = {}
    if args.out:
        overrides["out"] = os.path.abspath(args.out)
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


DEFAULT_SYNTH_CONFIG = """\
# Four vocabularies over power-law transformed descriptors of one channel.
[pipeline]
manifest = db.manifest
train_manifest = train.manifest
ground_truth = gt.txt
out = run
ssr_beta = 0.5
idf = false
d_out = 128
training_tag = synthetic-train
"""


def write_synth_config(path, k, channel="r1.00", exponents=(1.0, 0.4, 0.5, 0.6)):
    parts = [DEFAULT_SYNTH_CONFIG]
    for i, beta in enumerate(exponents, 1):
        transform = "none" if beta == 1.0 else f"power:{beta:g}"
        parts.append(f"\n[vocab.v{i}]\nchannel = {channel}\nk = {k}\nseed = {i}\n"
                     f"transform = {transform}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(parts))


def _synth(args):
    channels = tuple(c.strip() for c in args.channels.split(",") if c.strip())
    spec = SynthSpec(seed=args.seed or 0, n_images=args.n_images, n_queries=args.n_queries,
                     positives_per_query=args.positives, n_train_images=args.train_images,
                     descriptors_per_image=args.descriptors, dim=args.dim,
                     n_patterns=args.patterns, pattern_spread=args.pattern_spread,
                     noise=args.noise, clutter=args.clutter, channels=channels)
    out = args.out or "synth"
    generate_synthetic(spec, out)
    channel = "r1.00" if "r1.00" in channels else channels[0]
    write_synth_config(os.path.join(out, "pipeline.ini"), args.k, channel)
    print(f"wrote synthetic benchmark to {out}")


def _transform(args):
    steps = []
    for step in parse_transform(args.chain):
        if step.kind == "pca":
            raise ConfigError("transform needs a trained projection file, not pca:D")
        steps.append(step.value if step.kind == "power" else load_projection(step.path))
    X = load_descriptors(args.input)
    save_descriptors(args.output, apply_transforms(X, steps))


def _stats(cfg, threads):
    complexity, curve = pipeline.stats(cfg, threads)
    print(f"complexity\t{complexity}")
    if curve is not None:
        for i, count in enumerate(curve, 1):
            print(f"unique\t{i}\t{count}")


def _print_eval(aps, m_ap):
    for query_id, ap in aps.items():
        print(f"AP\t{query_id}\t{ap:.6f}")
    print(f"mAP\t{m_ap:.6f}")


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.threads < 1:
        print("mvshort: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "synth":
            _synth(args)
        elif args.command == "transform":
            _transform(args)
        else:
            cfg = _config(args)
            if args.command == "stats":
                _stats(cfg, args.threads)
            elif args.command == "pipeline":
                _print_eval(*pipeline.run_all(cfg, args.threads))
            elif args.command == "eval":
                _print_eval(*pipeline.run_stage("eval", cfg))
            else:
                for path in pipeline.run_stage(args.command, cfg, args.threads):
                    log.info("wrote %s", path)
    except (ConfigError, ParameterError) as exc:
        print(f"mvshort: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, OSError) as exc:
        print(f"mvshort: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
