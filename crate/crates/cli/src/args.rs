use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use qis_core::corpus;
use qis_core::{io, IntensityImage, QisError, SensorConfig, SynthesisKernel};
use serde::{Deserialize, Serialize};

/// Sensor parameters shared by most commands.
#[derive(Args, Debug, Clone, Serialize)]
pub struct SensorArgs {
    /// Sensor gain in photons per unit intensity per pixel.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Jots per pixel as `KXxKY` (a bare perfect square `n` means `√n×√n`).
    #[arg(long, default_value = "2x2", value_parser = parse_pair)]
    pub k: (u32, u32),
    /// Temporal frames.
    #[arg(long = "t", default_value_t = 25)]
    pub frames: u32,
    /// Largest threshold the sensor supports.
    #[arg(long, default_value_t = 16)]
    pub q_max: u32,
    /// Shutter duty cycle in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Base seed of every random draw.
    #[arg(long, env = "QIS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Synthesis kernel: boxcar, linear-bspline, quadratic-bspline, cubic-bspline.
    #[arg(long, default_value = "boxcar")]
    pub kernel: SynthesisKernel,
}

impl SensorArgs {
    /// Validated sensor configuration; `default_alpha` fills a missing gain.
    pub fn config(&self, default_alpha: impl FnOnce(&SensorConfig) -> f64) -> Result<SensorConfig> {
        let (kx, ky) = self.k;
        let probe = SensorConfig::new(1.0, kx, ky, self.frames, self.q_max)?;
        let alpha = self.alpha.unwrap_or_else(|| default_alpha(&probe));
        Ok(SensorConfig::new(alpha, kx, ky, self.frames, self.q_max)?
            .with_tau(self.tau)?
            .with_seed(self.seed))
    }
}

/// Where the ground-truth image comes from.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ImageArgs {
    /// Input image (8-bit binary PGM, or CSV of floats in [0, 1]).
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Built-in scene used when no image is given.
    #[arg(long, default_value = "ramp")]
    pub scene: String,
    /// Width of a built-in scene in pixels.
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// Height of a built-in scene in pixels.
    #[arg(long, default_value_t = 32)]
    pub height: usize,
}

impl ImageArgs {
    pub fn load(&self) -> Result<IntensityImage> {
        match &self.image {
            Some(p) => read_image(p),
            None => scene(&self.scene, self.width, self.height),
        }
    }
}

/// Reads a PGM or CSV image, chosen by extension.
pub fn read_image(path: &Path) -> Result<IntensityImage> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let r = std::io::BufReader::new(file);
    let img = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => io::read_image_csv(r),
        _ => io::read_pgm(r),
    };
    img.with_context(|| format!("reading {}", path.display()))
}

/// A scene of the built-in corpus by name.
pub fn scene(name: &str, width: usize, height: usize) -> Result<IntensityImage> {
    let all = corpus::default_corpus(width, height)?;
    let names: Vec<&str> = all.iter().map(|c| c.name.as_str()).collect();
    let hit = all.iter().find(|c| c.name == name).ok_or_else(|| {
        QisError::Config(format!(
            "unknown scene '{name}' (expected one of {})",
            names.join(", ")
        ))
    })?;
    Ok(hit.image.clone())
}

/// Parses `AxB` or a perfect square `n`.
pub fn parse_pair(s: &str) -> std::result::Result<(u32, u32), String> {
    let bad = || format!("expected AxB or a perfect square, got '{s}'");
    if let Some((a, b)) = s.split_once(['x', 'X']) {
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        return Ok((a, b));
    }
    let n: u32 = s.trim().parse().map_err(|_| bad())?;
    let r = (f64::from(n).sqrt().round()) as u32;
    if r * r == n {
        Ok((r, r))
    } else {
        Err(bad())
    }
}

/// Parses a comma-separated list of floats.
pub fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: '{v}'"))
        })
        .collect()
}

/// Replaces `--config FILE` with the file's `key = value` lines as flags.
///
/// The file's flags are inserted directly after the subcommand so explicit
/// command-line flags given later take precedence. Blank lines and lines
/// starting with `#` are ignored; `_` in keys is read as `-`.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(args.len());
    let mut config: Option<String> = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let p = it
                .next()
                .ok_or_else(|| QisError::Config("--config needs a file".into()))?;
            config = Some(p);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            out.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(out);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| QisError::Config(format!("{path}:{}: expected key = value", i + 1)))?;
        flags.push(format!("--{}={}", k.trim().replace('_', "-"), v.trim()));
    }
    // Position after the program name and the subcommand.
    let at = out.len().min(2);
    out.splice(at..at, flags);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs() {
        assert_eq!(parse_pair("2x2"), Ok((2, 2)));
        assert_eq!(parse_pair("4X1"), Ok((4, 1)));
        assert_eq!(parse_pair("16"), Ok((4, 4)));
        assert!(parse_pair("6").is_err());
        assert!(parse_pair("ax2").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("1, 0.2,0.04"), Ok(vec![1.0, 0.2, 0.04]));
        assert!(parse_list("1,,2").is_err());
    }

    #[test]
    fn config_lines_become_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        fs::write(&p, "# comment\nalpha = 300\nq_max=8\n\n").unwrap();
        let args: Vec<String> = [
            "qis",
            "simulate",
            "--config",
            p.to_str().unwrap(),
            "--t",
            "5",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let out = expand_config(args).unwrap();
        assert_eq!(
            out,
            ["qis", "simulate", "--alpha=300", "--q-max=8", "--t", "5"]
        );
    }
}
