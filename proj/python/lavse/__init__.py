"""Lip-image audio-visual speech enhancement."""

from ._lavse import (
    AeModel,
    LavseError,
    SeModel,
    build_corpus,
    compression_report,
    eofp_decode,
    eofp_encode,
    evaluate,
    gen_clean,
    gen_noise,
    log1p_features,
    measure_snr,
    mix_at_snr,
    read_lip_frames,
    si_sdr,
    stoi,
    train_se,
)

__all__ = [
    "AeModel",
    "LavseError",
    "SeModel",
    "build_corpus",
    "compression_report",
    "eofp_decode",
    "eofp_encode",
    "evaluate",
    "gen_clean",
    "gen_noise",
    "log1p_features",
    "measure_snr",
    "mix_at_snr",
    "read_lip_frames",
    "si_sdr",
    "stoi",
    "train_se",
]
