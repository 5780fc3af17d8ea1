"""
Configuration module for the toolkit

Environment-backed defaults live on ``Config``; every run is described by a
validated ``RunConfig`` which projects into the per-module configs.
"""
import os
from typing import Any, Dict, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.errors import ConfigurationError

# Load environment variables
load_dotenv()


def _env_flag(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ('1', 'true', 'yes', 'on')


class Config:
    """Application configuration"""

    # Output / reproducibility
    OUT_DIR = os.getenv('TRANSFORMAP_OUT_DIR', 'out')
    SEED = int(os.getenv('TRANSFORMAP_SEED', 0))

    # Finite-value check after every tensor forward op (slow)
    DEBUG_CHECKS = _env_flag('TRANSFORMAP_DEBUG_CHECKS', '0')

    # Console progress output
    VERBOSE = _env_flag('TRANSFORMAP_VERBOSE', '1')

    # Checkpoint container
    CHECKPOINT_MAGIC = b'TMAPCKPT'
    CHECKPOINT_VERSION = 1

    # Documented output file names (relative to --out-dir)
    TRACE_FILE = 'trace.txt'
    DATASET_FILE = 'dataset.tsv'
    DATASET_SUMMARY_FILE = 'dataset_summary.json'
    MODEL_FILE = 'model.tmap'
    CHECKPOINT_SUBDIR = 'checkpoints'
    TRAIN_REPORT_FILE = 'train_report.json'
    TRAIN_TIMING_FILE = 'train_timing.json'
    PREDICTIONS_FILE = 'predictions.tsv'
    REPORT_FILE = 'report.csv'
    REPORT_AVERAGE_FILE = 'report_average.csv'

    @classmethod
    def get_output_paths(cls, out_dir: Optional[str] = None) -> Dict[str, str]:
        """
        Get the documented output paths as a dictionary

        Args:
            out_dir: Output directory (default: Config.OUT_DIR)

        Returns:
            Dictionary mapping output kind to file path
        """
        base = out_dir or cls.OUT_DIR
        return {
            'trace': os.path.join(base, cls.TRACE_FILE),
            'dataset': os.path.join(base, cls.DATASET_FILE),
            'dataset_summary': os.path.join(base, cls.DATASET_SUMMARY_FILE),
            'model': os.path.join(base, cls.MODEL_FILE),
            'checkpoints': os.path.join(base, cls.CHECKPOINT_SUBDIR),
            'train_report': os.path.join(base, cls.TRAIN_REPORT_FILE),
            'train_timing': os.path.join(base, cls.TRAIN_TIMING_FILE),
            'predictions': os.path.join(base, cls.PREDICTIONS_FILE),
            'report': os.path.join(base, cls.REPORT_FILE),
            'report_average': os.path.join(base, cls.REPORT_AVERAGE_FILE),
        }

    @classmethod
    def validate(cls):
        """Validate environment-provided configuration"""
        if cls.SEED < 0:
            raise ConfigurationError("TRANSFORMAP_SEED must be a non-negative integer")
        if not cls.OUT_DIR:
            raise ConfigurationError("TRANSFORMAP_OUT_DIR must not be empty")
        return True


class AddressConfig(BaseModel):
    """Page/block bit geometry of a byte address"""

    model_config = ConfigDict(frozen=True, extra='forbid')

    address_bits: int = Field(64, description="Bit count of a full byte address")
    page_bits: int = Field(12, description="log2(page size)")
    block_bits: int = Field(6, description="log2(block size)")

    @model_validator(mode='after')
    def _check_geometry(self) -> 'AddressConfig':
        if not 0 < self.block_bits < self.page_bits <= self.address_bits <= 64:
            raise ValueError(
                f"require 0 < block_bits < page_bits <= address_bits <= 64, got "
                f"block_bits={self.block_bits}, page_bits={self.page_bits}, address_bits={self.address_bits}"
            )
        return self

    @property
    def block_index_bits(self) -> int:
        """n: width of a block index inside a page"""
        return self.page_bits - self.block_bits

    @property
    def page_address_bits(self) -> int:
        """m: width of the page number"""
        return self.address_bits - self.page_bits

    @property
    def block_address_bits(self) -> int:
        """m + n: width of one encoded block address"""
        return self.address_bits - self.block_bits

    @property
    def block_size(self) -> int:
        return 1 << self.block_bits

    @property
    def page_size(self) -> int:
        return 1 << self.page_bits

    @property
    def blocks_per_page(self) -> int:
        return 1 << self.block_index_bits

    def token_length(self, history_length: int) -> int:
        """Binary input length for a history of ``history_length`` addresses"""
        return history_length * self.block_address_bits


class ModelConfig(BaseModel):
    """Transformer hyperparameters and vocabulary geometry"""

    model_config = ConfigDict(frozen=True, extra='forbid')

    d_model: int = 64
    heads: int = 4
    d_ff: int = 256
    n_layers: int = 2
    vocab_in: int = 2
    vocab_out: int = Field(..., description="2^n block indexes + BEGIN, END, PAD")
    max_in_len: int
    max_out_len: int
    dropout: float = 0.0
    dtype: Literal['float32', 'float64'] = 'float32'

    @model_validator(mode='after')
    def _check_dimensions(self) -> 'ModelConfig':
        for name in ('d_model', 'heads', 'd_ff', 'n_layers', 'vocab_out', 'max_in_len', 'max_out_len'):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.vocab_in != 2:
            raise ValueError("vocab_in is fixed at 2 (tokens 0 and 1)")
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model ({self.d_model}) must be divisible by heads ({self.heads})")
        if self.d_model % 2 != 0:
            raise ValueError(f"d_model ({self.d_model}) must be even for sinusoidal positional encoding")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        return self

    @classmethod
    def for_geometry(cls, address_config: AddressConfig, history_length: int, k_max: int,
                     **overrides: Any) -> 'ModelConfig':
        """
        Derive vocabulary and sequence lengths from the address geometry

        Args:
            address_config: Address geometry
            history_length: t, number of history addresses per sample
            k_max: Maximum predicted indexes per sample
            **overrides: Any other ModelConfig field

        Returns:
            ModelConfig
        """
        return cls(
            vocab_out=address_config.blocks_per_page + 3,
            max_in_len=address_config.token_length(history_length),
            max_out_len=k_max + 2,
            **overrides,
        )

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    def parameter_count(self) -> int:
        """
        Closed-form parameter count

        embeddings 2d + V*d, projection d*V, and per layer pair
        encoder 4d^2 + FFN + 2 norms, decoder 8d^2 + FFN + 3 norms,
        with FFN = 2*d*d_ff + d_ff + d and a norm = 2d.
        """
        d, f, v = self.d_model, self.d_ff, self.vocab_out
        per_layer = 12 * d * d + 4 * d * f + 2 * f + 12 * d
        return 2 * d + 2 * v * d + self.n_layers * per_layer


class TrainConfig(BaseModel):
    """Optimizer, schedule and loop settings"""

    model_config = ConfigDict(frozen=True, extra='forbid')

    epochs: int = Field(30, ge=0)
    batch_size: int = Field(64, ge=1)
    seed: int = Field(0, ge=0)
    warmup_steps: int = Field(2000, ge=1)
    lr_scale: float = Field(1.0, gt=0.0)
    clip_norm: Optional[float] = Field(1.0, gt=0.0)
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    holdout_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    checkpoint_dir: Optional[str] = None


class CacheConfig(BaseModel):
    """Set-associative cache geometry"""

    model_config = ConfigDict(frozen=True, extra='forbid')

    sets: int = Field(2048, ge=1)
    ways: int = Field(16, ge=1)
    block_bits: int = Field(6, ge=0)

    @model_validator(mode='after')
    def _check_sets(self) -> 'CacheConfig':
        if self.sets & (self.sets - 1):
            raise ValueError(f"sets must be a power of two, got {self.sets}")
        return self


PrefetcherName = Literal['none', 'nextline', 'bo', 'isb', 'transformap']


class RunConfig(BaseModel):
    """Merged, flat view of every configurable key; unknown keys are rejected"""

    model_config = ConfigDict(frozen=True, extra='forbid')

    # reproducibility / output
    seed: int = Field(default_factory=lambda: Config.SEED, ge=0)
    out_dir: str = Field(default_factory=lambda: Config.OUT_DIR)
    verbose: bool = Field(default_factory=lambda: Config.VERBOSE)

    # address geometry
    address_bits: int = 64
    page_bits: int = 12
    block_bits: int = 6

    # labeling
    history_length: int = Field(8, ge=1)
    window: int = Field(64, ge=1)
    k_max: int = Field(8, ge=1)
    train_fraction: float = Field(1.0, gt=0.0, le=1.0)

    # model
    d_model: int = 64
    heads: int = 4
    d_ff: int = 256
    n_layers: int = 2
    dropout: float = 0.0
    dtype: Literal['float32', 'float64'] = 'float32'

    # training
    epochs: int = Field(30, ge=0)
    batch_size: int = Field(64, ge=1)
    warmup_steps: int = Field(2000, ge=1)
    lr_scale: float = Field(1.0, gt=0.0)
    clip_norm: Optional[float] = 1.0
    holdout_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    checkpoint_dir: Optional[str] = None

    # inference
    beam_width: int = Field(2, ge=1)

    # cache / simulation
    cache_sets: int = 2048
    cache_ways: int = 16
    prefetch_delay: int = Field(0, ge=0)

    # prefetcher selection
    prefetcher: PrefetcherName = 'none'
    checkpoint: Optional[str] = None
    predictions: Optional[str] = None
    nextline_degree: int = Field(1, ge=1)
    bo_rr_entries: int = Field(64, ge=1)
    bo_max_offset: int = Field(16, ge=1)
    bo_round_length: int = Field(256, ge=1)
    isb_last_entries: int = Field(256, ge=1)
    isb_pair_entries: int = Field(4096, ge=1)

    # synthetic traces
    synth_kind: str = 'constant-stride'
    synth_length: int = Field(10000, ge=1)
    synth_seed: Optional[int] = None
    synth_start: int = Field(0, ge=0)
    synth_stride: int = 64
    synth_pages: int = Field(64, ge=1)
    synth_period: int = Field(8, ge=1)
    synth_addresses: Optional[str] = None
    synth_instr_gap: int = Field(10, ge=1)

    @model_validator(mode='after')
    def _check_as_whole(self) -> 'RunConfig':
        # Each projection raises on its own inconsistencies
        try:
            address = self.address_config()
            self.model_config_for(address)
            self.train_config()
            self.cache_config()
        except ValidationError as e:
            raise ValueError(str(e)) from None
        if self.k_max > address.blocks_per_page:
            raise ValueError(f"k_max ({self.k_max}) exceeds blocks per page ({address.blocks_per_page})")
        return self

    def address_config(self) -> AddressConfig:
        return AddressConfig(address_bits=self.address_bits, page_bits=self.page_bits,
                             block_bits=self.block_bits)

    def model_config_for(self, address_config: Optional[AddressConfig] = None) -> ModelConfig:
        return ModelConfig.for_geometry(
            address_config or self.address_config(), self.history_length, self.k_max,
            d_model=self.d_model, heads=self.heads, d_ff=self.d_ff, n_layers=self.n_layers,
            dropout=self.dropout, dtype=self.dtype,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, seed=self.seed,
            warmup_steps=self.warmup_steps, lr_scale=self.lr_scale, clip_norm=self.clip_norm,
            holdout_fraction=self.holdout_fraction, checkpoint_dir=self.checkpoint_dir,
        )

    def cache_config(self) -> CacheConfig:
        return CacheConfig(sets=self.cache_sets, ways=self.cache_ways, block_bits=self.block_bits)

    @property
    def effective_synth_seed(self) -> int:
        return self.seed if self.synth_seed is None else self.synth_seed

    @classmethod
    def from_mapping(cls, values: Dict[str, Any]) -> 'RunConfig':
        """
        Validate a merged key/value mapping

        Args:
            values: Keys from the config file and CLI overrides

        Returns:
            RunConfig

        Raises:
            ConfigurationError: Unknown key or invalid value, with every problem listed
        """
        try:
            return cls(**values)
        except ValidationError as e:
            problems = []
            for err in e.errors():
                key = '.'.join(str(part) for part in err.get('loc', ())) or 'config'
                problems.append(f"{key}: {err.get('msg')}")
            raise ConfigurationError("Invalid configuration: " + "; ".join(problems)) from e
