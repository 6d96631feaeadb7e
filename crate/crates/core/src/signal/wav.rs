use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Signal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

/// Reads a mono PCM16 or float32 WAV file at its native rate.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::MonoRequired(spec.channels));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!("{fmt:?} with {bits} bits per sample")))
        }
    };
    Signal::new(samples, spec.sample_rate)
}

/// Reads a mono WAV file and rejects any rate other than `expected`.
pub fn read_wav_at(path: impl AsRef<Path>, expected: u32) -> Result<Signal> {
    let signal = read_wav(path)?;
    if signal.sample_rate() != expected {
        return Err(Error::UnsupportedSampleRate { got: signal.sample_rate(), expected });
    }
    Ok(signal)
}

/// PCM16 output is clipped to [-1, 1) and rounded to the nearest step.
pub fn write_wav(path: impl AsRef<Path>, signal: &Signal, format: WavFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &x in signal.samples() {
        match format {
            WavFormat::Float32 => writer.write_sample(x as f32)?,
            WavFormat::Pcm16 => {
                let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q)?
            }
        }
    }
    writer.finalize()?;
    Ok(())
}
