"""Fine-grained temporal segmentation with sparse-coding features and a skip-chain CRF."""

from .crf import CrfWeights, energy, hamming, joint_feature, loss_augmented_decode, viterbi_decode
from .data import PreprocessStats, apply_preprocess, fit_preprocess, load_labels, load_sequence
from .features import extract_features, split_code, temporal_pool
from .lasso import LassoConfig, SparseCode, encode_sequence, gram_inverse, kkt_residual, sparse_encode
from .metrics import edit_score, frame_accuracy, median_filter, segmental_f1, segments_from_labels
from .training import ModelBundle, TrainConfig, fit, init_dictionary

__version__ = "0.1.0"
