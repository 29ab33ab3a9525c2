from __future__ import annotations

from argparse import ArgumentParser
from argparse import Namespace
from collections.abc import Sequence
from logging import getLogger

from cnsnet.commands.evaluate import evaluate
from cnsnet.commands.infer import infer
from cnsnet.commands.selftest import selftest
from cnsnet.commands.synth import synth
from cnsnet.commands.train import train
from cnsnet.config import ABLATIONS
from cnsnet.config import GridPolicy
from cnsnet.config import set_config
from cnsnet.core.errors import CNSNetError
from cnsnet.core.runtime import runtime
from cnsnet.metrics.quality import MetricConvention

logger = getLogger(__name__)


def _common(parser: ArgumentParser) -> None:
    parser.add_argument('--config', help='flat key = value config document')
    parser.add_argument('--data', help='dataset root in the ISTD layout (default: $CNSNET_DATA, else synthetic)')
    parser.add_argument('--seed', type=int)
    parser.add_argument(
        '--paper-scale', '--full-scale', dest='full_scale', action='store_true', help='256px patches, batch 8, 200 epochs'
    )
    parser.add_argument('--ablation', action='append', choices=sorted(ABLATIONS), default=[])
    parser.add_argument('--log-level', choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'))


def parser_args(argv: Sequence[str] | None = None) -> Namespace:
    parser = ArgumentParser(prog='cnsnet', description='shadow removal with regional normalization and masked attention')
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('synth', help='write synthetic triplets in the ISTD layout')
    _common(p)
    p.add_argument('--out', required=True)
    p.add_argument('--count', type=int, default=500)
    p.add_argument('--split', choices=('train', 'test'), default='train')

    p = commands.add_parser('train', help='train a model')
    _common(p)
    p.add_argument('--out', default='runs/default')
    p.add_argument('--checkpoint', help='resume from this checkpoint')

    p = commands.add_parser('eval', help='pooled lab / psnr / ssim metrics on a split')
    _common(p)
    p.add_argument('--checkpoint')
    p.add_argument('--identity', action='store_true', help='score the input images themselves')
    p.add_argument('--split', choices=('train', 'test'), default='test')
    p.add_argument('--count', type=int, help='synthetic triplets to score without --data')
    p.add_argument('--report', help='write the metrics as json')
    p.add_argument('--grid-policy', type=GridPolicy, choices=list(GridPolicy), default=GridPolicy.INTERPOLATE)
    p.add_argument(
        '--convention',
        '--psnr',
        dest='convention',
        type=MetricConvention,
        choices=list(MetricConvention),
        default=MetricConvention.MASKED_IMAGE,
        help='how psnr and ssim see the S / NS / ALL regions',
    )
    p.add_argument('--workers', type=int, default=1)

    p = commands.add_parser('infer', help='remove the shadow of one image')
    _common(p)
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--image', required=True)
    p.add_argument('--mask', required=True)
    p.add_argument('--out', default='.')
    p.add_argument('--grid-policy', type=GridPolicy, choices=list(GridPolicy), default=GridPolicy.INTERPOLATE)

    p = commands.add_parser('selftest', help='run the invariant battery')
    _common(p)
    p.add_argument('--learning', action='store_true', help='also train briefly and compare against baselines and ablations')

    return parser.parse_args(argv)


def run(args: Namespace) -> int:
    config = set_config(args)
    with runtime(config):
        if args.command == 'synth':
            return synth(config, args.out, args.count, args.split)
        if args.command == 'train':
            return train(config, args.out, args.checkpoint)
        if args.command == 'eval':
            return evaluate(
                config,
                args.checkpoint,
                identity=args.identity,
                split=args.split,
                count=args.count,
                report=args.report,
                grid_policy=args.grid_policy,
                convention=args.convention,
                match_config=bool(args.config or args.ablation or args.full_scale),
                workers=args.workers,
            )
        if args.command == 'infer':
            infer(args.checkpoint, args.image, args.mask, args.out, args.grid_policy)
            return 0
        return selftest(config, learning=args.learning)


def main(argv: Sequence[str] | None = None) -> int:
    args = parser_args(argv)
    try:
        return run(args)
    except CNSNetError as e:
        logger.error('%s: %s', type(e).__name__, e)
        return 1


if __name__ == '__main__':
    raise SystemExit(main())
