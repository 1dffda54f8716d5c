from .augment import augment, augment_noise, augment_rotate, augment_temporal_jitter
from .dtw import WarpPath, align_to_template, class_medoid, dtw_banded
from .io import (FEAT_DIM, DatasetManifest, LandmarkSequence, SampleEntry, load_sequence,
                 read_slrb, save_sequence, write_slrb)
from .pipeline import prepare_eval, prepare_train, stack
from .preprocess import resample_cubic, standardize, wrist_center, zscore
from .synth import synth_generate
