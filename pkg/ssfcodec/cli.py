#!/usr/bin/env python3
"""
Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data or training
error, 3 decode error. Set SSF_DETERMINISTIC=true (the default) for
bit-exact encode/decode across runs.
"""
import os
import sys
import argparse
import logging
from dataclasses import replace

from ssfcodec import setup_logging, set_deterministic
from ssfcodec.config import get_config
from ssfcodec.errors import SSFError, UsageError

logger = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """Reports usage problems as UsageError instead of exiting with status 2"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def build_parser():
    parser = ArgumentParser(prog='ssfcodec', description='Scale-space flow video compression')
    parser.add_argument('--profile', default=None, help='config profile (desk, paper, testing)')
    parser.add_argument('--log-level', default=None, help='override SSF_LOG_LEVEL')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=ArgumentParser)
    commands.required = True

    p = commands.add_parser('gen-data', help='write a synthetic frame sequence')
    p.add_argument('--frames', type=int, required=True)
    p.add_argument('--size', type=int, required=True)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)
    p.add_argument('--bit-depth', type=int, choices=[8, 16], default=16)

    p = commands.add_parser('train', help='train one model')
    p.add_argument('--config', default=None, help='flat key=value training config')
    p.add_argument('--data', required=True)
    p.add_argument('--lambda', dest='lmbda', type=float, default=None)
    p.add_argument('--family', choices=['conv', 'swin', 'flawin'], default=None)
    p.add_argument('--max-steps', type=int, default=None)
    p.add_argument('--log', default=None, help='training CSV log (default: next to the checkpoint)')
    p.add_argument('--out', required=True)

    p = commands.add_parser('sweep', help='train and evaluate one model per lambda')
    p.add_argument('--config', default=None)
    p.add_argument('--data', required=True)
    p.add_argument('--eval-data', default=None)
    p.add_argument('--lambdas', type=_float_list, default=None)
    p.add_argument('--family', choices=['conv', 'swin', 'flawin'], default=None)
    p.add_argument('--out', required=True)

    p = commands.add_parser('compress', help='compress a frame directory into one stream')
    p.add_argument('--ckpt', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--gop', type=int, default=None)
    p.add_argument('--out', required=True)

    p = commands.add_parser('decompress', help='decode a stream into 16-bit PNG frames')
    p.add_argument('--ckpt', required=True)
    p.add_argument('--in', dest='stream', required=True)
    p.add_argument('--out', required=True)

    p = commands.add_parser('eval', help='rate-distortion point of a checkpoint on a dataset')
    p.add_argument('--ckpt', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--gop', type=int, default=None)
    p.add_argument('--estimate', action='store_true', help="also report the model's rate estimate")
    p.add_argument('--payload-only', action='store_true', help='exclude the stream header from bpp')
    p.add_argument('--report', required=True)

    p = commands.add_parser('rd-curve', help='collect eval reports into one RD curve')
    p.add_argument('--reports', required=True, help='glob of report JSON files')
    p.add_argument('--no-plot', action='store_true')
    p.add_argument('--out', required=True, help='output prefix')

    p = commands.add_parser('model-info', help='parameter counts per sub-network')
    p.add_argument('--family', choices=['conv', 'swin', 'flawin'], default=None)
    p.add_argument('--ckpt', default=None)
    return parser


def _train_config(args, profile):
    from ssfcodec.training import TrainConfig

    cfg = TrainConfig.from_profile(profile)
    if args.config:
        cfg = TrainConfig.from_file(args.config, cfg)
    changes = {k: v for k, v in dict(lmbda=getattr(args, 'lmbda', None), family=args.family,
                                        max_steps=getattr(args, 'max_steps', None)).items() if v is not None}
    return replace(cfg, **changes)


def cmd_gen_data(args, profile):
    from ssfcodec.data import gen_synthetic, save_frames

    dataset = gen_synthetic(args.frames, args.size, args.seed)
    save_frames(dataset.frames, args.out, args.bit_depth)
    print(f"Wrote {args.frames} frames of {args.size}x{args.size} to {args.out}")
    return 0


def cmd_train(args, profile):
    from ssfcodec.data import load_dataset
    from ssfcodec.training import train

    cfg = _train_config(args, profile)
    dataset = load_dataset(args.data, 'train', chunk_length=cfg.chunk_length)
    log_path = args.log or os.path.splitext(args.out)[0] + '.csv'
    result = train(dataset, cfg, args.out, log_path, profile=profile)
    last = result.history.iloc[-1]
    print(f"Trained {cfg.family} at lambda={cfg.lmbda:g}: final loss {last['loss']:.6f}; checkpoint {args.out}")
    return 0


def cmd_sweep(args, profile):
    from ssfcodec.data import load_dataset
    from ssfcodec.training import sweep

    cfg = _train_config(args, profile)
    dataset = load_dataset(args.data, 'train', chunk_length=cfg.chunk_length, gop_size=profile.TEST_GOP_SIZE)
    eval_dataset = load_dataset(args.eval_data, 'test', gop_size=profile.TEST_GOP_SIZE) if args.eval_data else None
    lambdas = args.lambdas or profile.LAMBDA_SWEEP
    result = sweep(dataset, lambdas, cfg, args.out, eval_dataset, profile=profile)
    print(result.table.to_string(index=False))
    return 0


def cmd_compress(args, profile):
    from ssfcodec.checkpoint import load_checkpoint
    from ssfcodec.codec.pipeline import GopPlan, compress_gop
    from ssfcodec.data import load_dataset

    codec, _ = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data, 'test')
    stream = compress_gop(dataset.frames, codec, GopPlan(args.gop or profile.TEST_GOP_SIZE))
    directory = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(directory, exist_ok=True)
    with open(args.out, 'wb') as f:
        f.write(stream.to_bytes())
    print(f"Compressed {dataset.num_frames} frames into {stream.total_bytes} bytes: {args.out}")
    return 0


def cmd_decompress(args, profile):
    from ssfcodec.checkpoint import load_checkpoint
    from ssfcodec.codec.pipeline import decompress_gop
    from ssfcodec.data import save_frames
    from ssfcodec.errors import DataError

    codec, _ = load_checkpoint(args.ckpt)
    try:
        with open(args.stream, 'rb') as f:
            data = f.read()
    except OSError as e:
        raise DataError(f"Could not read stream {args.stream}: {e}")
    frames = decompress_gop(data, codec)
    save_frames(frames, args.out, bit_depth=16)
    print(f"Decoded {len(frames)} frames to {args.out}")
    return 0


def cmd_eval(args, profile):
    from ssfcodec.checkpoint import load_checkpoint
    from ssfcodec.data import load_dataset
    from ssfcodec.evaluation import eval_model, write_report

    codec, metadata = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data, 'test', gop_size=args.gop or profile.TEST_GOP_SIZE)
    result = eval_model(codec, dataset, lmbda=metadata.get('lambda'),
                        include_header=not args.payload_only and profile.BPP_INCLUDE_HEADER,
                        estimate=args.estimate, psnr_cap=profile.PSNR_CAP_DB)
    write_report(result, args.report)
    point = result.point
    line = f"{point.family}: {point.bpp:.4f} bpp, {point.psnr_db:.2f} dB"
    if point.estimated_bpp is not None:
        line += f" (model estimate {point.estimated_bpp:.4f} bpp)"
    print(line)
    return 0


def cmd_rd_curve(args, profile):
    from ssfcodec.evaluation import emit_rd_curve, load_points

    points = load_points(args.reports)
    written = emit_rd_curve(points, args.out, plot=not args.no_plot)
    print('\n'.join(written))
    return 0


def cmd_model_info(args, profile):
    from ssfcodec.checkpoint import load_checkpoint
    from ssfcodec.codec.models import CodecConfig, build_codec
    from ssfcodec.training import parameter_report

    if args.ckpt:
        codec, _ = load_checkpoint(args.ckpt)
    else:
        codec = build_codec(CodecConfig.from_profile(profile, family=args.family), seed=profile.SEED)
    print(f"family: {codec.family}")
    print(parameter_report(codec).to_string(index=False))
    return 0


COMMANDS = {
    'gen-data': cmd_gen_data,
    'train': cmd_train,
    'sweep': cmd_sweep,
    'compress': cmd_compress,
    'decompress': cmd_decompress,
    'eval': cmd_eval,
    'rd-curve': cmd_rd_curve,
    'model-info': cmd_model_info,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        profile = get_config(args.profile)
    except UsageError as e:
        print(e, file=sys.stderr)
        return e.exit_code
    except KeyError as e:
        print(f"ssfcodec: {e.args[0]}", file=sys.stderr)
        return UsageError.exit_code
    except SystemExit as e:
        return e.code or 0

    setup_logging(args.log_level or profile.LOG_LEVEL, profile.LOG_DIR, profile.LOG_TO_STDOUT)
    set_deterministic(profile.DETERMINISTIC)
    try:
        return COMMANDS[args.command](args, profile)
    except SSFError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
