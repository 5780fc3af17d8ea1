"""
Model commands: training and batch prediction
"""
import argparse
import os
from typing import Tuple

from commands.common import banner, output_paths, require_file, tail_start
from src.config import AddressConfig, ModelConfig, RunConfig
from src.errors import ConfigurationError
from src.model.checkpoint import CheckpointMeta, load_checkpoint, save_checkpoint
from src.model.inference import predict_trace, write_predictions
from src.model.training import train
from src.model.transformer import TransformerModel
from src.traces.labeling import read_dataset
from src.traces.trace_io import read_trace


def _warn_if_overridden(config: RunConfig, key: str, stored: int):
    if config.verbose and getattr(config, key) != stored:
        print(f"⚠ WARNING: {key}={getattr(config, key)} ignored; the dataset was built with {key}={stored}")


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    """Train on ``dataset.tsv`` (or the given file) and write the model, checkpoints and reports"""
    paths = output_paths(config)
    dataset_path = args.dataset or paths['dataset']
    require_file(dataset_path, "dataset file")

    samples, meta = read_dataset(dataset_path)
    _warn_if_overridden(config, 'history_length', meta.history_length)
    _warn_if_overridden(config, 'k_max', meta.k_max)
    model_config = ModelConfig.for_geometry(
        meta.address_config, meta.history_length, meta.k_max,
        d_model=config.d_model, heads=config.heads, d_ff=config.d_ff, n_layers=config.n_layers,
        dropout=config.dropout, dtype=config.dtype,
    )
    train_config = config.train_config().model_copy(
        update={'checkpoint_dir': config.checkpoint_dir or paths['checkpoints']}
    )

    checkpoint_info = {'address_config': meta.address_config, 'history_length': meta.history_length,
                       'k_max': meta.k_max}
    params, report = train(samples, model_config, train_config, exact_set_eval=args.exact_set,
                           beam_width=config.beam_width, k_max=meta.k_max,
                           checkpoint_info=checkpoint_info, verbose=config.verbose)

    save_checkpoint(paths['model'], params, **checkpoint_info)
    with open(paths['train_report'], 'w', encoding='utf-8') as f:
        f.write(report.deterministic_json() + '\n')
    with open(paths['train_timing'], 'w', encoding='utf-8') as f:
        f.write(report.timing().model_dump_json(indent=2) + '\n')

    if config.verbose:
        print(f"✓ Model saved to {paths['model']}")
    return 0


def load_model(config: RunConfig, checkpoint_path: str) -> Tuple[TransformerModel, CheckpointMeta]:
    """
    Load a checkpoint and check it against the run's address geometry

    Raises:
        ConfigurationError: the checkpoint does not exist or was trained for a different geometry
    """
    if not checkpoint_path or not os.path.isfile(checkpoint_path):
        raise ConfigurationError(f"checkpoint not found: {checkpoint_path}")
    params, meta = load_checkpoint(checkpoint_path)
    if meta.address is not None and meta.address != config.address_config():
        raise ConfigurationError(
            f"checkpoint {checkpoint_path} was trained for address_bits={meta.address.address_bits} "
            f"page_bits={meta.address.page_bits} block_bits={meta.address.block_bits}; "
            f"the run is configured for {config.address_bits}/{config.page_bits}/{config.block_bits}"
        )
    return TransformerModel(params), meta


def model_geometry(config: RunConfig, meta: CheckpointMeta) -> Tuple[AddressConfig, int, int]:
    """Address geometry, history length and k_max to run a checkpoint with"""
    address = meta.address or config.address_config()
    history_length = meta.history_length or config.history_length
    k_max = meta.k_max or config.k_max
    return address, history_length, k_max


def cmd_predict(args: argparse.Namespace, config: RunConfig) -> int:
    """Write ``predictions.tsv`` for every position of the trace (the tail when split)"""
    paths = output_paths(config)
    require_file(args.trace, "trace file")
    checkpoint_path = config.checkpoint or paths['model']
    model, meta = load_model(config, checkpoint_path)
    address, history_length, k_max = model_geometry(config, meta)

    if config.verbose:
        banner("🔮 PREDICT")
        print(f"📋 Trace: {args.trace}")
        print(f"📋 Checkpoint: {checkpoint_path}")
    trace = read_trace(args.trace, address)
    start = tail_start(len(trace), config.train_fraction)
    predictions = predict_trace(model, trace, address, history_length, k_max, config.beam_width,
                                start=start, verbose=config.verbose)
    write_predictions(predictions, paths['predictions'])
    if config.verbose:
        print(f"✅ {len(predictions)} predictions written to {paths['predictions']}")
        print("=" * 80 + "\n")
    return 0


def register(subparsers):
    """Add the ``train`` and ``predict`` subcommands"""
    train_parser = subparsers.add_parser('train', help='Train the model on a dataset')
    train_parser.add_argument('dataset', nargs='?', default=None,
                              help='Dataset file (default: <out-dir>/dataset.tsv)')
    train_parser.add_argument('--epochs', type=int, default=None)
    train_parser.add_argument('--batch-size', dest='batch_size', type=int, default=None)
    train_parser.add_argument('--exact-set', action='store_true',
                              help='Also report exact-set accuracy on held-out samples each epoch')
    train_parser.set_defaults(handler=cmd_train)

    predict_parser = subparsers.add_parser('predict', help='Predict prefetch addresses for a trace')
    predict_parser.add_argument('trace', help='Trace file')
    predict_parser.add_argument('--checkpoint', default=None, help='Model file (default: <out-dir>/model.tmap)')
    predict_parser.add_argument('--beam-width', dest='beam_width', type=int, default=None)
    predict_parser.add_argument('--train-fraction', dest='train_fraction', type=float, default=None)
    predict_parser.set_defaults(handler=cmd_predict)
