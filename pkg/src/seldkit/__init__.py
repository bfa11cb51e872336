"""seldkit: reverberant sound-scene synthesis and SELD evaluation.

Generates multichannel scene datasets in first-order Ambisonics and
rigid-sphere tetrahedral microphone formats with per-event spatial
annotations, and scores sound-event localization-and-detection estimates
with segment ER/F, Hungarian-matched DOA error and frame recall under a
fixed four-fold cross-validation protocol.
"""

from .array_model import (EIGENMIKE_TETRA, FORMAT_FOA, FORMAT_MIC,
                          MicChannel, MicGeometry, PhysicalConstants,
                          foa_response, legendre_p, measurement_doa_grid,
                          rigid_sphere_response, sph_hankel2_deriv,
                          steering_vectors)
from .core import (METRIC_FRAME_HOP_S, SPHERICAL_COORDINATE_CONVENTION,
                   AnnotationSet, Doa, EventInstance, FrameWiseOutput,
                   MultichannelAudio, events_to_frames, frames_to_events,
                   read_annotation_csv, write_annotation_csv)
from .dsp import (ImpulseResponseStft, Spectrogram, StftConfig,
                  estimate_ir_stft, fft_convolve, generate_mls, istft,
                  measure_snr, mix_at_snr, stft)
from .eval_harness import CvReport, FoldPlan, evaluate_cv, fold_plan
from .scene_synth import (DatasetConfig, RoomProfile, SceneDescription,
                          SceneSpec, SourceBank, generate_dataset,
                          procedural_bank, render_scene, sample_scene)
from .seld_metrics import (DoaFrameLists, MetricsAccumulator, MetricsReport,
                           SegmentCounts, doa_error, er_fscore, frame_recall,
                           hungarian_assign, rank_methods, score_recording,
                           segment_sed_counts, spherical_distance)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
