//! Run manifests and cross-seed learning curves.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};

pub const VERSION_TAG: &str = concat!("sidlab-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub env: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    /// The hash covers the config and the first seed.
    pub fn new(config: &Config, seeds: Vec<u64>, env: &str, outputs: Vec<String>) -> Self {
        RunManifest {
            config_hash: config.hash(seeds.first().copied().unwrap_or(config.run.seed)),
            seeds,
            version: VERSION_TAG.into(),
            env: env.into(),
            outputs,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `(cumulative env steps, episode return)` for every episode of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCurve {
    pub env: String,
    pub points: Vec<(u64, f64)>,
}

impl RunCurve {
    /// Parses a metrics CSV (header required; only `env_steps` and `return`
    /// are read).
    pub fn parse_metrics(env: &str, text: &str, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Metrics {
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| bad(format!("missing column `{name}`")))
        };
        let (steps_col, ret_col) = (col("env_steps")?, col("return")?);
        let mut points = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            let get = |c: usize| fields.get(c).map(|f| f.trim()).ok_or_else(|| bad(format!("row {} too short", i + 1)));
            let steps = get(steps_col)?.parse::<u64>().map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            let ret = get(ret_col)?.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            points.push((steps, ret));
        }
        Ok(RunCurve { env: env.into(), points })
    }

    /// Reads `metrics.csv` and the env name from `manifest.json` in a run
    /// directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = RunManifest::read(&dir.join("manifest.json"))?;
        let path = dir.join("metrics.csv");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse_metrics(&manifest.env, &text, &path)
    }
}

/// Per-bucket mean and population standard deviation across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub env: String,
    pub bucket_size: u64,
    pub bucket_starts: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Buckets every run by environment steps. A run's value in a bucket is the
/// mean return of its episodes ending there, carried forward through empty
/// buckets. Leading buckets before every run has a value are dropped.
pub fn aggregate(runs: &[RunCurve], bucket_size: u64) -> Result<CurveSummary> {
    let first = runs.first().ok_or(Error::NoRuns)?;
    if bucket_size == 0 {
        return Err(Error::Config("bucket size must be positive".into()));
    }
    if let Some(other) = runs.iter().find(|r| r.env != first.env) {
        return Err(Error::MismatchedEnv(first.env.clone(), other.env.clone()));
    }
    let last_bucket = runs
        .iter()
        .flat_map(|r| r.points.iter().map(|p| p.0 / bucket_size))
        .max();
    let Some(last_bucket) = last_bucket else {
        return Ok(CurveSummary {
            env: first.env.clone(),
            bucket_size,
            bucket_starts: vec![],
            mean: vec![],
            std: vec![],
        });
    };
    let n_buckets = last_bucket as usize + 1;
    let per_run: Vec<Vec<Option<f64>>> = runs
        .iter()
        .map(|r| {
            let mut sums = vec![(0.0, 0usize); n_buckets];
            for &(steps, ret) in &r.points {
                let b = (steps / bucket_size) as usize;
                sums[b].0 += ret;
                sums[b].1 += 1;
            }
            let mut carried = None;
            sums.iter()
                .map(|&(s, c)| {
                    if c > 0 {
                        carried = Some(s / c as f64);
                    }
                    carried
                })
                .collect()
        })
        .collect();
    let mut summary = CurveSummary {
        env: first.env.clone(),
        bucket_size,
        bucket_starts: vec![],
        mean: vec![],
        std: vec![],
    };
    for b in 0..n_buckets {
        let vals: Option<Vec<f64>> = per_run.iter().map(|v| v[b]).collect();
        let Some(vals) = vals else { continue };
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        summary.bucket_starts.push(b as u64 * bucket_size);
        summary.mean.push(mean);
        summary.std.push(var.max(0.0).sqrt());
    }
    Ok(summary)
}

impl CurveSummary {
    pub fn is_empty(&self) -> bool {
        self.bucket_starts.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# std is the population standard deviation across runs (divide by n)\n");
        out.push_str("bucket_start,mean,std\n");
        for i in 0..self.bucket_starts.len() {
            writeln!(out, "{},{},{}", self.bucket_starts[i], self.mean[i], self.std[i]).unwrap();
        }
        out
    }

    /// Line chart of the mean with a shaded +-1 std band.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const PAD: f64 = 50.0;
        let x_max = self.bucket_starts.last().copied().unwrap_or(0).max(1) as f64;
        let (lo, hi) = self
            .mean
            .iter()
            .zip(&self.std)
            .fold((0.0f64, 0.0f64), |(lo, hi), (m, s)| (lo.min(m - s), hi.max(m + s)));
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let px = |x: u64| PAD + x as f64 / x_max * (W - 2.0 * PAD);
        let py = |y: f64| H - PAD - (y - lo) / (hi - lo) * (H - 2.0 * PAD);
        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        )
        .unwrap();
        writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
        writeln!(
            svg,
            r#"<line x1="{PAD}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
            y = H - PAD,
            x2 = W - PAD
        )
        .unwrap();
        writeln!(svg, r#"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{y}" stroke="black"/>"#, y = H - PAD).unwrap();
        if !self.is_empty() {
            let upper: Vec<String> = self
                .bucket_starts
                .iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(&x, (m, s))| format!("{:.2},{:.2}", px(x), py(m + s)))
                .collect();
            let lower: Vec<String> = self
                .bucket_starts
                .iter()
                .zip(self.mean.iter().zip(&self.std))
                .rev()
                .map(|(&x, (m, s))| format!("{:.2},{:.2}", px(x), py(m - s)))
                .collect();
            writeln!(
                svg,
                r##"<polygon class="band" points="{} {}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##,
                upper.join(" "),
                lower.join(" ")
            )
            .unwrap();
            let line: Vec<String> = self
                .bucket_starts
                .iter()
                .zip(&self.mean)
                .map(|(&x, &m)| format!("{:.2},{:.2}", px(x), py(m)))
                .collect();
            writeln!(
                svg,
                r##"<polyline class="mean" points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
                line.join(" ")
            )
            .unwrap();
        }
        writeln!(
            svg,
            r#"<text x="{x}" y="{y}" text-anchor="middle" font-size="12">environment steps (0 to {x_max})</text>"#,
            x = W / 2.0,
            y = H - 15.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="15" y="{y}" font-size="12" transform="rotate(-90 15 {y})" text-anchor="middle">return ({lo:.3} to {hi:.3})</text>"#,
            y = H / 2.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{x}" y="25" text-anchor="middle" font-size="14">{}</text>"#,
            escape(&self.env),
            x = W / 2.0
        )
        .unwrap();
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `curves.csv` and `curves.svg` into `dir`.
pub fn emit_plot_data(summary: &CurveSummary, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if summary.is_empty() {
        return Err(Error::NoRuns);
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("curves.csv");
    std::fs::write(&csv, summary.to_csv()).map_err(|e| Error::io(&csv, e))?;
    let svg = dir.join("curves.svg");
    std::fs::write(&svg, summary.to_svg()).map_err(|e| Error::io(&svg, e))?;
    Ok((csv, svg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(points: &[(u64, f64)]) -> RunCurve {
        RunCurve {
            env: "flytrap".into(),
            points: points.to_vec(),
        }
    }

    #[test]
    fn single_run_zero_std() {
        let s = aggregate(&[curve(&[(5, 0.0), (15, 1.0), (35, 1.0)])], 10).unwrap();
        assert_eq!(s.bucket_starts, vec![0, 10, 20, 30]);
        assert_eq!(s.mean, vec![0.0, 1.0, 1.0, 1.0]);
        assert!(s.std.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn population_std() {
        let a = curve(&[(10, 0.0), (20, 0.0)]);
        let b = curve(&[(10, 1.0), (20, 1.0)]);
        let s = aggregate(&[a, b], 10).unwrap();
        assert_eq!(s.mean, vec![0.5, 0.5]);
        assert_eq!(s.std, vec![0.5, 0.5]);
    }

    #[test]
    fn leading_empty_buckets_omitted() {
        let a = curve(&[(25, 1.0)]);
        let b = curve(&[(5, 0.0), (31, 0.0)]);
        let s = aggregate(&[a, b], 10).unwrap();
        assert_eq!(s.bucket_starts, vec![20, 30]);
        assert_eq!(s.mean, vec![0.5, 0.5]);
    }

    #[test]
    fn mismatched_envs_rejected() {
        let mut b = curve(&[(1, 0.0)]);
        b.env = "distraction".into();
        assert!(matches!(aggregate(&[curve(&[(1, 0.0)]), b], 10), Err(Error::MismatchedEnv(..))));
        assert!(matches!(aggregate(&[], 10), Err(Error::NoRuns)));
    }

    #[test]
    fn csv_round_trips_through_aggregate_of_one() {
        let s = aggregate(&[curve(&[(3, 0.25), (14, 0.5), (29, 0.75)])], 10).unwrap();
        // curves.csv rows read back as a one-episode-per-bucket run
        let text: String = s
            .to_csv()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.replace("bucket_start,mean,std", "env_steps,return,std") + "\n")
            .collect();
        let back = RunCurve::parse_metrics("flytrap", &text, Path::new("curves.csv")).unwrap();
        let again = aggregate(&[back], 10).unwrap();
        assert_eq!(again.bucket_starts, s.bucket_starts);
        assert_eq!(again.mean, s.mean);
    }

    #[test]
    fn svg_parses() {
        let s = aggregate(&[curve(&[(3, 0.0), (14, 0.5)]), curve(&[(8, 1.0), (19, 1.0)])], 10).unwrap();
        let svg = s.to_svg();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc.descendants().any(|n| n.attribute("class") == Some("mean")));
        assert!(doc.descendants().any(|n| n.attribute("class") == Some("band")));
    }

    #[test]
    fn metrics_parse_errors() {
        let p = Path::new("m.csv");
        assert!(RunCurve::parse_metrics("x", "", p).is_err());
        assert!(RunCurve::parse_metrics("x", "episode,return\n0,1\n", p).is_err());
        assert!(RunCurve::parse_metrics("x", "env_steps,return\n5,abc\n", p).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            runs in prop::collection::vec(prop::collection::vec((0u64..200, 0.0f64..1.0), 1..20), 1..5),
            rot in 0usize..5,
        ) {
            let curves: Vec<RunCurve> = runs.iter().map(|p| {
                let mut p = p.clone();
                p.sort_by_key(|x| x.0);
                curve(&p)
            }).collect();
            let mut rotated = curves.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
            let a = aggregate(&curves, 25).unwrap();
            let b = aggregate(&rotated, 25).unwrap();
            prop_assert_eq!(&a.bucket_starts, &b.bucket_starts);
            for i in 0..a.mean.len() {
                prop_assert!((a.mean[i] - b.mean[i]).abs() < 1e-12);
                prop_assert!((a.std[i] - b.std[i]).abs() < 1e-12);
                prop_assert!(a.std[i] >= 0.0);
            }
            prop_assert!(a.bucket_starts.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
