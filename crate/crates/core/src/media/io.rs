use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::{AudioClip, ImageTensor};
use crate::error::{Error, Result};

fn malformed(path: &Path, reason: impl ToString) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Reads an 8-bit grayscale or RGB PNG. Other depths and color types are
/// rejected rather than converted.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let file = BufReader::new(File::open(path)?);
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| malformed(path, e))?;
    let (color, depth, width, height) = {
        let info = reader.info();
        (info.color_type, info.bit_depth, info.width as usize, info.height as usize)
    };
    if depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedBitDepth(format!(
            "{}: {}-bit PNG",
            path.display(),
            depth as u8
        )));
    }
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(malformed(path, format!("unsupported color type {other:?}"))),
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| malformed(path, "image too large"))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| malformed(path, e))?;
    let interleaved = &buf[..frame.buffer_size()];
    let plane = width * height;
    let mut data = vec![0u8; channels * plane];
    for (i, px) in interleaved.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * plane + i] = v;
        }
    }
    ImageTensor::new(channels, height, width, data)
}

pub fn save_png(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (channels, height, width) = img.shape();
    let plane = height * width;
    let mut interleaved = vec![0u8; img.len()];
    for i in 0..plane {
        for c in 0..channels {
            interleaved[i * channels + c] = img.data()[c * plane + i];
        }
    }
    let w = BufWriter::new(File::create(path)?);
    let mut encoder = png::Encoder::new(w, width as u32, height as u32);
    encoder.set_color(if channels == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| malformed(path, e))?;
    writer
        .write_image_data(&interleaved)
        .map_err(|e| malformed(path, e))?;
    writer.finish().map_err(|e| malformed(path, e))?;
    Ok(())
}

/// Reads a RIFF WAV holding 16-bit integer PCM, mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => malformed(path, other),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedAudio(format!(
            "{}: need 16-bit integer PCM, got {}-bit {:?}",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedAudio(format!(
            "{}: need mono, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| malformed(path, e))?;
    AudioClip::new(samples, spec.sample_rate)
}

pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| malformed(path, e))?;
    for &s in clip.samples() {
        writer.write_sample(s).map_err(|e| malformed(path, e))?;
    }
    writer.finalize().map_err(|e| malformed(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_rgb_and_gray() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = ImageTensor::new(3, 2, 3, (0..18).map(|v| v * 13).collect()).unwrap();
        let p = dir.path().join("rgb.png");
        save_png(&rgb, &p).unwrap();
        assert_eq!(load_png(&p).unwrap(), rgb);

        let gray = ImageTensor::new(1, 3, 2, vec![0, 1, 127, 128, 254, 255]).unwrap();
        let p = dir.path().join("gray.png");
        save_png(&gray, &p).unwrap();
        assert_eq!(load_png(&p).unwrap(), gray);
    }

    #[test]
    fn png_one_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageTensor::new(3, 1, 1, vec![9, 200, 31]).unwrap();
        let p = dir.path().join("px.png");
        save_png(&img, &p).unwrap();
        assert_eq!(load_png(&p).unwrap(), img);
    }

    #[test]
    fn png_sixteen_bit_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("deep.png");
        {
            let w = BufWriter::new(File::create(&p).unwrap());
            let mut enc = png::Encoder::new(w, 2, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let mut writer = enc.write_header().unwrap();
            writer.write_image_data(&[0, 1, 2, 3]).unwrap();
        }
        let err = load_png(&p).unwrap_err();
        assert!(matches!(err, Error::UnsupportedBitDepth(_)), "{err}");
        assert!(err.to_string().contains("unsupported bit depth"));
    }

    #[test]
    fn png_garbage_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.png");
        std::fs::write(&p, b"definitely not a png").unwrap();
        assert!(matches!(load_png(&p), Err(Error::Malformed { .. })));
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let clip = AudioClip::new(vec![i16::MIN, -1, 0, 1, i16::MAX, 1234], 22_050).unwrap();
        let p = dir.path().join("a.wav");
        save_wav(&clip, &p).unwrap();
        assert_eq!(load_wav(&p).unwrap(), clip);
    }

    fn write_raw_wav(path: &Path, spec: hound::WavSpec, n: usize) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for i in 0..n {
            match spec.sample_format {
                hound::SampleFormat::Float => w.write_sample(i as f32 * 0.01).unwrap(),
                hound::SampleFormat::Int => w.write_sample(i as i16).unwrap(),
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn wav_stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        write_raw_wav(&p, spec, 8);
        assert!(matches!(load_wav(&p), Err(Error::UnsupportedAudio(_))));
    }

    #[test]
    fn wav_float_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        write_raw_wav(&p, spec, 8);
        assert!(matches!(load_wav(&p), Err(Error::UnsupportedAudio(_))));
    }

    #[test]
    fn wav_empty_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        write_raw_wav(&p, spec, 0);
        assert!(load_wav(&p).is_err());
    }
}
