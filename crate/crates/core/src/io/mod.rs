//! File formats, dataset manifests, run configuration and the synthetic
//! cohort generator.

mod atlas_csv;
mod bytes;
mod config;
mod freesurfer;
mod manifest;
mod smmn;
mod synth;

pub use atlas_csv::{parse_atlas_csv, parse_label_names, read_atlas_csv, write_atlas_csv};
pub use config::RunConfig;
pub use freesurfer::{
    encode_fs_curv, encode_fs_surface, parse_fs_curv, parse_fs_surface, read_fs_curv, read_fs_surface, write_fs_curv,
    write_fs_surface,
};
pub use manifest::{
    load_manifest, qc_filter, write_manifest, DatasetManifest, ManifestEntry, Split, EULER_QC_THRESHOLD,
};
pub use smmn::{
    encode_model, encode_subject, parse_model, parse_subject, read_model, read_subject, write_model, write_subject,
    SubjectFeatures, SMMN_MAGIC, SMMN_VERSION,
};
pub use synth::{
    fibonacci_sphere, synth_dataset, synth_generate, synthetic_atlas, SynthConfig, SynthDataset, SynthSubject,
    SynthTruth, CONTROL, PATIENT,
};
