//! Numerical primitives shared by the feature families.

mod functionals;
mod lpc;
mod pitch;
mod spectral;
mod teager;
mod track;

pub use functionals::{
    apply_functionals, apply_functionals_to_columns, column_functionals, percentile, Functional,
    FunctionalSet,
};
pub use lpc::{formants_f1_f2, lpc, lpc_with_error, lsp_frequencies, pre_emphasis, PRE_EMPHASIS};
pub use pitch::{
    analyze_pitch, estimate_f0, frame_log_energy_db, F0Track, PitchAnalysis, PitchConfig,
    F0_MAX_HZ, F0_MIN_HZ, VOICING_THRESHOLD,
};
pub use spectral::{
    bark, bark_band_energies, dct_matrix, log_mel_bands, mfcc, mfcc_frame, power_spectrum,
    MelFilterbank, BARK_BANDS, LOG_FLOOR,
};
pub use teager::teager_energy;
pub use track::{delta, delta_column, FeatureTrack};
