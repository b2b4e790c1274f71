//! WAV export of sound buffers and import of input signals.

use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use hound::{SampleFormat as HoundFormat, WavSpec, WavWriter};

use crate::network::ModuleId;
use crate::sim::SoundBuffers;

/// Peak level after normalisation, in linear gain (−1 dBFS).
pub fn normalize_target() -> f64 {
    10f64.powf(-1.0 / 20.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleFormat {
    #[default]
    Float32,
    Pcm16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelLayout {
    /// One file with one channel per observer.
    #[default]
    Interleaved,
    /// One mono file per observer, named `<stem>_<id>.wav`.
    Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WavOptions {
    pub format: SampleFormat,
    pub normalize: bool,
    pub layout: ChannelLayout,
    /// Observers to export, in file channel order; all when `None`.
    pub channels: Option<Vec<ModuleId>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavReport {
    pub files: Vec<PathBuf>,
    /// Gain applied before encoding.
    pub gain: f64,
    /// Samples outside [−1, 1] clamped by 16-bit encoding.
    pub clipped: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("no sound channel for observer(s) {0:?}")]
    EmptyChannelSet(Vec<ModuleId>),
    #[error("unsupported signal format: {0}")]
    UnsupportedFormat(String),
    #[error("signal rate {found} Hz does not match model rate {expected} Hz")]
    RateMismatch { expected: u32, found: u32 },
}

fn split_path(path: &Path, id: ModuleId) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "wav".into());
    path.with_file_name(format!("{stem}_{id}.{ext}"))
}

fn write(path: &Path, rate: u32, format: SampleFormat, gain: f64, chans: &[&[f64]], length: usize) -> Result<u64, WavError> {
    let spec = WavSpec {
        channels: chans.len() as u16,
        sample_rate: rate,
        bits_per_sample: match format {
            SampleFormat::Float32 => 32,
            SampleFormat::Pcm16 => 16,
        },
        sample_format: match format {
            SampleFormat::Float32 => HoundFormat::Float,
            SampleFormat::Pcm16 => HoundFormat::Int,
        },
    };
    let mut w = WavWriter::new(BufWriter::new(File::create(path)?), spec)?;
    let mut clipped = 0;
    for n in 0..length {
        for c in chans {
            let s = c.get(n).copied().unwrap_or(0.0) * gain;
            match format {
                SampleFormat::Float32 => w.write_sample(s as f32)?,
                SampleFormat::Pcm16 => {
                    if s.abs() > 1.0 {
                        clipped += 1;
                    }
                    w.write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)?
                }
            }
        }
    }
    w.finalize()?;
    Ok(clipped)
}

/// Writes `buffers` as RIFF/WAVE. A run without observers exports one silent
/// channel of the run length.
pub fn export_wav(buffers: &SoundBuffers, path: &Path, options: &WavOptions) -> Result<WavReport, WavError> {
    let silence = vec![0.0; buffers.length];
    let mut selected: Vec<(ModuleId, &[f64])> = match &options.channels {
        None => buffers.channels.iter().map(|c| (c.module, c.samples.as_slice())).collect(),
        Some(ids) => {
            let missing: Vec<ModuleId> = ids.iter().copied().filter(|&id| buffers.channel(id).is_none()).collect();
            if !missing.is_empty() || ids.is_empty() {
                return Err(WavError::EmptyChannelSet(missing));
            }
            ids.iter().map(|&id| (id, buffers.channel(id).unwrap().samples.as_slice())).collect()
        }
    };
    if selected.is_empty() {
        selected.push((ModuleId(0), &silence));
    }
    let gain = if options.normalize {
        let peak = selected.iter().flat_map(|(_, s)| s.iter()).fold(0.0f64, |p, s| p.max(s.abs()));
        if peak > 0.0 {
            normalize_target() / peak
        } else {
            1.0
        }
    } else {
        1.0
    };
    let mut files = Vec::new();
    let mut clipped = 0;
    match options.layout {
        ChannelLayout::Interleaved => {
            let chans: Vec<&[f64]> = selected.iter().map(|(_, s)| *s).collect();
            clipped += write(path, buffers.sample_rate, options.format, gain, &chans, buffers.length)?;
            files.push(path.to_path_buf());
        }
        ChannelLayout::Split => {
            for (id, s) in &selected {
                let p = split_path(path, *id);
                clipped += write(&p, buffers.sample_rate, options.format, gain, &[s], buffers.length)?;
                files.push(p);
            }
        }
    }
    Ok(WavReport { files, gain, clipped })
}

/// Path of the rate declaration for a headerless signal file.
pub fn rate_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".rate");
    PathBuf::from(s)
}

/// Writes a headerless little-endian f64 signal with its rate sidecar.
pub fn write_raw_signal(path: &Path, rate: u32, samples: &[f64]) -> std::io::Result<()> {
    let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
    std::fs::write(path, bytes)?;
    std::fs::write(rate_sidecar(path), format!("{rate}\n"))
}

/// Loads a mono input signal at `model_rate`. WAV files are recognised by
/// their RIFF header; anything else is read as raw f64 with a `.rate` sidecar.
pub fn import_signal(path: &Path, model_rate: u32) -> Result<Vec<f64>, WavError> {
    let mut head = [0u8; 4];
    let n = File::open(path)?.read(&mut head)?;
    if n == 4 && &head == b"RIFF" {
        return import_wav(path, model_rate);
    }
    let rate_text = std::fs::read_to_string(rate_sidecar(path)).map_err(|_| {
        WavError::UnsupportedFormat(format!("{} is not WAV and has no .rate sidecar", path.display()))
    })?;
    let rate: u32 = rate_text
        .trim()
        .parse()
        .map_err(|_| WavError::UnsupportedFormat(format!("bad rate declaration `{}`", rate_text.trim())))?;
    if rate != model_rate {
        return Err(WavError::RateMismatch { expected: model_rate, found: rate });
    }
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(WavError::UnsupportedFormat(format!("raw length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn import_wav(path: &Path, model_rate: u32) -> Result<Vec<f64>, WavError> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(WavError::UnsupportedFormat(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_rate != model_rate {
        return Err(WavError::RateMismatch { expected: model_rate, found: spec.sample_rate });
    }
    match (spec.sample_format, spec.bits_per_sample) {
        (HoundFormat::Float, 32) => Ok(r.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?),
        (HoundFormat::Int, bits @ (16 | 24)) => {
            let scale = (1i64 << (bits - 1)) as f64;
            Ok(r.samples::<i32>().map(|s| s.map(|v| v as f64 / scale)).collect::<Result<_, _>>()?)
        }
        (f, bits) => Err(WavError::UnsupportedFormat(format!("{bits}-bit {f:?}"))),
    }
}
