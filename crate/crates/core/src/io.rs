//! PGM, CSV and packed-bit file formats.
//!
//! - PGM: binary `P5`, 8-bit; values are normalized by `maxval` on input and
//!   rounded from `[0, 1]` to `0..=255` on output.
//! - Image CSV: a header row `c0,c1,…` followed by one row of floats per
//!   image row.
//! - Threshold-map CSV: header `blockw,blockh`, the block size, then one row
//!   of integer thresholds per block row.
//! - QISB: `b"QISB"`, `u32` jot count `M`, `u32` frame count `T` (little
//!   endian), then `T` planes of `⌈M/8⌉` bytes, bit `m` of a plane at byte
//!   `m/8`, bit position `m%8` (least significant first).

use std::io::{Read, Write};

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageDecoder, ImageEncoder};

use crate::error::{QisError, Result};
use crate::forward::{check_dims, BitCube, IntensityImage, ThresholdMap};

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(QisError::Format(msg.into()))
}

impl From<csv::Error> for QisError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => QisError::Io(io),
            other => QisError::Format(format!("CSV: {other:?}")),
        }
    }
}

fn image_err(e: image::ImageError) -> QisError {
    match e {
        image::ImageError::IoError(io) => QisError::Io(io),
        other => QisError::Format(format!("PGM: {other}")),
    }
}

/// Reads an 8-bit binary PGM.
pub fn read_pgm(mut r: impl Read) -> Result<IntensityImage> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if !data.starts_with(b"P5") {
        return format_err("not a binary PGM (expected P5)");
    }
    let dec = PnmDecoder::new(std::io::Cursor::new(&data)).map_err(image_err)?;
    if dec.color_type() != image::ColorType::L8 {
        return format_err("only 8-bit PGM is supported");
    }
    let (w, h) = dec.dimensions();
    let mut buf = vec![0u8; dec.total_bytes() as usize];
    dec.read_image(&mut buf).map_err(image_err)?;
    // The decoder has already rescaled samples from maxval to 255.
    let px = buf.iter().map(|&b| f64::from(b) / 255.0).collect();
    IntensityImage::new(w as usize, h as usize, px)
}

/// Writes values in `[0, 1]` as an 8-bit binary PGM; out-of-range values are
/// clipped.
pub fn write_pgm(w: impl Write, width: usize, height: usize, values: &[f64]) -> Result<()> {
    check_dims(width, height, values.len())?;
    let bytes: Vec<u8> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    PnmEncoder::new(w)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&bytes, width as u32, height as u32, ExtendedColorType::L8)
        .map_err(image_err)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Reads a rectangular grid of floats. A non-numeric first row is treated as
/// a header.
pub fn read_csv_grid(r: impl Read) -> Result<(usize, usize, Vec<f64>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in csv_reader(r).records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Option<Vec<f64>> = rec.iter().map(|f| f.parse::<f64>().ok()).collect();
        match parsed {
            Some(v) => rows.push(v),
            None if i == 0 => continue,
            None => return format_err(format!("non-numeric CSV row {}", i + 1)),
        }
    }
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 {
        return format_err("CSV grid is empty");
    }
    if rows.iter().any(|r| r.len() != width) {
        return format_err("CSV rows have different lengths");
    }
    let height = rows.len();
    Ok((width, height, rows.into_iter().flatten().collect()))
}

/// Reads a normalized intensity image from CSV.
pub fn read_image_csv(r: impl Read) -> Result<IntensityImage> {
    let (w, h, v) = read_csv_grid(r)?;
    IntensityImage::new(w, h, v)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .flexible(true)
        .from_writer(w)
}

/// Writes a float grid with a `c0,c1,…` header.
pub fn write_csv_grid(w: impl Write, width: usize, height: usize, values: &[f64]) -> Result<()> {
    check_dims(width, height, values.len())?;
    let mut out = csv_writer(w);
    out.write_record((0..width).map(|i| format!("c{i}")))?;
    for row in values.chunks(width) {
        out.write_record(row.iter().map(f64::to_string))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a table with a header row.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(QisError::Dimension(format!(
                "table row has {} cells for {} columns",
                r.len(),
                header.len()
            )));
        }
        out.write_record(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a threshold map.
pub fn write_threshold_map(w: impl Write, map: &ThresholdMap) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["blockw", "blockh"])?;
    out.write_record([map.block_w().to_string(), map.block_h().to_string()])?;
    for row in map.q_values().chunks(map.blocks_x()) {
        out.write_record(row.iter().map(u32::to_string))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a threshold map written by [`write_threshold_map`].
pub fn read_threshold_map(r: impl Read) -> Result<ThresholdMap> {
    let mut records = csv_reader(r).into_records();
    let header = records.next().transpose()?;
    if !header.is_some_and(|h| h.len() == 2 && &h[0] == "blockw" && &h[1] == "blockh") {
        return format_err("threshold map must start with 'blockw,blockh'");
    }
    let parse_ints = |rec: csv::StringRecord| -> Result<Vec<u32>> {
        rec.iter()
            .map(|f| {
                f.parse::<u32>()
                    .map_err(|_| QisError::Format(format!("bad threshold-map entry '{f}'")))
            })
            .collect()
    };
    let size = match records.next().transpose()? {
        Some(rec) => parse_ints(rec)?,
        None => Vec::new(),
    };
    let [bw, bh] = size[..] else {
        return format_err("threshold-map block size needs two entries");
    };
    let mut rows = Vec::new();
    for rec in records {
        rows.push(parse_ints(rec?)?);
    }
    let bx = rows.first().map_or(0, Vec::len);
    if bx == 0 || rows.iter().any(|r| r.len() != bx) {
        return format_err("threshold-map grid is empty or ragged");
    }
    let by = rows.len();
    ThresholdMap::new(
        bx * bw as usize,
        by * bh as usize,
        bw as usize,
        bh as usize,
        rows.into_iter().flatten().collect(),
    )
}

const QISB_MAGIC: &[u8; 4] = b"QISB";

/// Writes a bit cube in QISB format.
pub fn write_qisb(mut w: impl Write, bits: &BitCube) -> Result<()> {
    let m = bits.jots();
    let m32 = u32::try_from(m).map_err(|_| QisError::Format("too many jots for QISB".into()))?;
    let t32 = u32::try_from(bits.frames())
        .map_err(|_| QisError::Format("too many frames for QISB".into()))?;
    w.write_all(QISB_MAGIC)?;
    w.write_all(&m32.to_le_bytes())?;
    w.write_all(&t32.to_le_bytes())?;
    let mut plane = vec![0u8; m.div_ceil(8)];
    for t in 0..bits.frames() {
        plane.fill(0);
        for (i, &b) in bits.plane(t).iter().enumerate() {
            plane[i / 8] |= b << (i % 8);
        }
        w.write_all(&plane)?;
    }
    Ok(())
}

/// Reads a QISB file, returning `(M, T, bits)` with bits frame-major.
pub fn read_qisb_raw(mut r: impl Read) -> Result<(usize, usize, Vec<u8>)> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head)
        .map_err(|_| QisError::Format("truncated QISB header".into()))?;
    if &head[..4] != QISB_MAGIC {
        return format_err("not a QISB file");
    }
    let m = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
    let t = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
    let stride = m.div_ceil(8);
    let mut packed = vec![0u8; stride * t];
    r.read_exact(&mut packed)
        .map_err(|_| QisError::Format("truncated QISB planes".into()))?;
    let mut bits = Vec::with_capacity(m * t);
    for plane in packed.chunks(stride.max(1)).take(t) {
        bits.extend((0..m).map(|i| (plane[i / 8] >> (i % 8)) & 1));
    }
    Ok((m, t, bits))
}

/// Reads a QISB file into a cube with the given jot-grid width.
pub fn read_qisb(r: impl Read, jot_width: usize) -> Result<BitCube> {
    let (m, t, bits) = read_qisb_raw(r)?;
    if jot_width == 0 || m % jot_width != 0 {
        return Err(QisError::Dimension(format!(
            "{m} jots do not form rows of {jot_width}"
        )));
    }
    BitCube::new(jot_width, m / jot_width, t, bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_with_comment() {
        let vals = [0.0, 1.0, 128.0 / 255.0, 3.0 / 255.0, 0.5, 1.0];
        let mut buf = Vec::new();
        write_pgm(&mut buf, 3, 2, &vals).unwrap();
        let img = read_pgm(&buf[..]).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.pixels()[2], 128.0 / 255.0);
        let mut commented = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        commented.extend_from_slice(&[0, 255]);
        assert_eq!(read_pgm(&commented[..]).unwrap().pixels(), &[0.0, 1.0]);
        assert!(read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
    }

    #[test]
    fn csv_grid_round_trip() {
        let v = [0.125, 0.5, 1.0, 0.0, 0.3, 0.7];
        let mut buf = Vec::new();
        write_csv_grid(&mut buf, 3, 2, &v).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("c0,c1,c2\n"));
        let (w, h, back) = read_csv_grid(&buf[..]).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back, v);
    }

    #[test]
    fn threshold_map_round_trip() {
        let m = ThresholdMap::new(8, 4, 4, 2, vec![1, 2, 3, 16]).unwrap();
        let mut buf = Vec::new();
        write_threshold_map(&mut buf, &m).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "blockw,blockh\n4,2\n1,2\n3,16\n"
        );
        assert_eq!(read_threshold_map(&buf[..]).unwrap(), m);
    }

    #[test]
    fn qisb_round_trip_and_layout() {
        let bits: Vec<u8> = (0..30).map(|i| u8::from(i % 3 == 0)).collect();
        let cube = BitCube::new(5, 2, 3, bits).unwrap();
        let mut buf = Vec::new();
        write_qisb(&mut buf, &cube).unwrap();
        assert_eq!(&buf[..4], b"QISB");
        assert_eq!(&buf[4..8], &10u32.to_le_bytes());
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        assert_eq!(buf.len(), 12 + 3 * 2);
        // Jots 0, 3, 6, 9 of frame 0 are set.
        assert_eq!(buf[12], 0b0100_1001);
        assert_eq!(buf[13], 0b0000_0010);
        assert_eq!(read_qisb(&buf[..], 5).unwrap(), cube);
        assert!(read_qisb(&buf[..15], 5).is_err());
    }
}
