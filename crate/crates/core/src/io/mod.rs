//! Persistence and file interchange.

mod document;
mod note;
mod trace;
mod url;
mod wav;

pub use document::{DocumentError, ModelDocument, FORMAT_VERSION};
pub use note::BenchNote;
pub use trace::{trace_csv, write_trace_csv};
pub use url::{parse_app_url, Action, AppUrl, UrlError, SCHEME};
pub use wav::{
    export_wav, import_signal, normalize_target, rate_sidecar, write_raw_signal, ChannelLayout, SampleFormat, WavError,
    WavOptions, WavReport,
};
