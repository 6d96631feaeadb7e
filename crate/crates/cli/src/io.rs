use std::io::Write;
use std::path::Path;

use rmdereverb::rir::Rir;
use rmdereverb::signal::{read_wav_at, write_wav, Signal, WavFormat, DEFAULT_SAMPLE_RATE};
use rmdereverb::{Error, Result};
use tempfile::NamedTempFile;

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed command never leaves a truncated output behind.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir)?;
    fill(tmp.path())?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |tmp| {
        let mut f = std::fs::File::create(tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
        Ok(())
    })
}

pub fn write_wav_atomic(path: &Path, signal: &Signal) -> Result<()> {
    write_atomic(path, |tmp| write_wav(tmp, signal, WavFormat::Float32))
}

fn is_text(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "txt")
}

/// `.txt` signals use the RIR text layout and keep full precision.
pub fn read_signal(path: &Path) -> Result<Signal> {
    if is_text(path) {
        let r = Rir::read_text(path)?;
        if r.sample_rate() != DEFAULT_SAMPLE_RATE {
            return Err(Error::UnsupportedSampleRate { got: r.sample_rate(), expected: DEFAULT_SAMPLE_RATE });
        }
        return Signal::new(r.taps().to_vec(), r.sample_rate());
    }
    read_wav_at(path, DEFAULT_SAMPLE_RATE)
}

pub fn write_signal(path: &Path, signal: &Signal) -> Result<()> {
    if is_text(path) {
        let mut text = format!("# sample_rate={}\n", signal.sample_rate());
        for x in signal.samples() {
            text.push_str(&format!("{x:e}\n"));
        }
        return write_text_atomic(path, &text);
    }
    write_wav_atomic(path, signal)
}

/// `.txt` files hold one tap per line; anything else is read as WAV.
pub fn read_rir(path: &Path) -> Result<Rir> {
    if is_text(path) {
        return Rir::read_text(path);
    }
    let s = read_signal(path)?;
    Rir::new(s.samples().to_vec(), s.sample_rate())
}

pub fn write_rir(path: &Path, rir: &Rir) -> Result<()> {
    if is_text(path) {
        return write_text_atomic(path, &rir.to_text());
    }
    let signal = Signal::new(rir.taps().to_vec(), rir.sample_rate())?;
    write_wav_atomic(path, &signal)
}
