"""
Public package exports for the subband GAN voice conversion toolkit.

Keeping the main helpers here makes both the CLI script and any future integrations
import from a single stable location.
"""

from .audio import Waveform, load_and_resample, write_wav
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .conversion_service import Converter, evaluate_checkpoint, invert_cached_mel, preprocess_corpus
from .evaluator import compute_cls, compute_f0_diff, m_f0_diff
from .features import MelSpectrogram, mel_spectrogram
from .manifest import DatasetManifest, load_manifest
from .networks import SubbandGAN
from .trainer import pretrain_style_encoder, train, train_step
from .vocoder import load_vocoder

__all__ = [
    'Waveform',
    'load_and_resample',
    'write_wav',
    'load_checkpoint',
    'save_checkpoint',
    'RunConfig',
    'load_run_config',
    'Converter',
    'evaluate_checkpoint',
    'invert_cached_mel',
    'preprocess_corpus',
    'compute_cls',
    'compute_f0_diff',
    'm_f0_diff',
    'MelSpectrogram',
    'mel_spectrogram',
    'DatasetManifest',
    'load_manifest',
    'SubbandGAN',
    'pretrain_style_encoder',
    'train',
    'train_step',
    'load_vocoder',
]
