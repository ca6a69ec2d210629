//! On-disk traces (`.lens.jsonl`) and derived curve caches (`.curves.jsonl`).

mod cache;
mod codec;
mod format;
mod record;
mod validate;

pub use cache::{
    build_curve_cache, detect_input, load_profiles, read_curve_cache, CacheHeader, CacheSummary, CachedRecord,
    CurveCache, InputKind, LoadedProfiles, CACHE_VERSION,
};
pub use codec::{pack_f32, pack_f64, pack_u32, unpack_f32, unpack_f64, unpack_u32};
pub use format::{read_trace, write_trace, TraceReader, TraceWriter};
pub use record::{
    LayerLensFrame, LayerPayload, LensNormalization, PayloadKind, SamplingParams, SequenceRecord, TraceHeader,
    SCHEMA_VERSION,
};
pub use validate::{validate_trace, Finding, ValidationReport, FINAL_LAYER_TOLERANCE, SPOT_CHECK_STRIDE};
