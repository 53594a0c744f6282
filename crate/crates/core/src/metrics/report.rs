//! Plain-text tables and plot-data files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunMetrics;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub label: String,
    pub metrics: RunMetrics,
}

/// Empirical CDF as `(value, F(value))` at each distinct sample, ending at 1.0.
pub fn ecdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        let f = if i + 1 == xs.len() {
            1.0
        } else {
            (i + 1) as f64 / n
        };
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    out
}

/// Fraction of samples `<= x`.
pub fn ecdf_at(samples: &[f64], x: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|&&s| s <= x).count() as f64 / samples.len() as f64
}

/// Linear-interpolated sample quantile (`q` in `[0, 1]`).
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    if xs.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
}

/// Bin count from the Freedman–Diaconis width `2 * IQR * n^(-1/3)`.
///
/// Degenerate samples (empty, constant, or zero IQR) get a single bin.
pub fn freedman_diaconis_bins(samples: &[f64]) -> usize {
    if samples.len() < 2 {
        return 1;
    }
    let iqr = quantile(samples, 0.75) - quantile(samples, 0.25);
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let width = 2.0 * iqr * (samples.len() as f64).powf(-1.0 / 3.0);
    if width <= 0.0 || max <= min {
        return 1;
    }
    ((max - min) / width).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width bins over `[min, max]`; the last bin is closed on the right.
pub fn histogram(samples: &[f64], bins: usize) -> Vec<HistogramBin> {
    if samples.is_empty() || bins == 0 {
        return Vec::new();
    }
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let width = if max > min {
        (max - min) / bins as f64
    } else {
        1.0
    };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: min + i as f64 * width,
            hi: if i + 1 == bins && max > min {
                max
            } else {
                min + (i + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for &x in samples {
        let idx = (((x - min) / width) as usize).min(bins - 1);
        out[idx].count += 1;
    }
    out
}

fn fmt_ratio(r: &super::Ratio) -> String {
    if r.defined {
        format!("{:.1}", r.pct)
    } else {
        "n/a".into()
    }
}

/// Tab-separated summary, one row per variant.
pub fn summary_table(rows: &[VariantRow]) -> String {
    let mut s = String::from(
        "variant\tepisodes\tmean_score\tmean_runtime\tmean_steps\tmemories_saved_pct\tmemory_recall_pct\tcross_team_recall_pct\tcross_team_entry_recall_pct\n",
    );
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{:.2}\t{:.2}\t{}\t{}\t{}\t{}",
            r.label,
            m.episodes,
            m.mean_score.map_or("n/a".into(), |x| format!("{x:.4}")),
            m.mean_runtime,
            m.mean_steps,
            fmt_ratio(&m.memories_saved),
            fmt_ratio(&m.memory_recall),
            fmt_ratio(&m.cross_team_recall),
            fmt_ratio(&m.cross_team_entry_recall),
        );
    }
    s
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `summary.tsv`, `summary.json`, and per-variant CDF and histogram
/// files for runtimes and step counts. Returns the paths written.
pub fn write_report(dir: &Path, rows: &[VariantRow]) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put("summary.tsv".into(), summary_table(rows))?;
    put("summary.json".into(), serde_json::to_string_pretty(rows)?)?;
    for r in rows {
        let label = sanitize(&r.label);
        let series: [(&str, Vec<f64>); 2] = [
            (
                "runtime",
                r.metrics.runtimes.iter().map(|&x| x as f64).collect(),
            ),
            (
                "steps",
                r.metrics.step_counts.iter().map(|&x| x as f64).collect(),
            ),
        ];
        for (name, xs) in series {
            let mut cdf = String::from("value\tcdf\n");
            for (x, f) in ecdf(&xs) {
                let _ = writeln!(cdf, "{x}\t{f}");
            }
            put(format!("cdf_{label}_{name}.tsv"), cdf)?;
            let mut hist = String::from("lo\thi\tcount\n");
            for b in histogram(&xs, freedman_diaconis_bins(&xs)) {
                let _ = writeln!(hist, "{}\t{}\t{}", b.lo, b.hi, b.count);
            }
            put(format!("hist_{label}_{name}.tsv"), hist)?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_is_monotone_and_ends_at_one() {
        let c = ecdf(&[3.0, 1.0, 2.0, 2.0, 5.0]);
        assert_eq!(c.first().unwrap(), &(1.0, 0.2));
        assert_eq!(c[1], (2.0, 0.6));
        assert_eq!(c.last().unwrap().1, 1.0);
        assert!(c.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn fd_bins_match_hand_computation() {
        // 1..=8: q25 = 2.75, q75 = 6.25, IQR = 3.5, width = 7 / 2 = 3.5,
        // range 7 -> 2 bins.
        let xs: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(freedman_diaconis_bins(&xs), 2);
        assert_eq!(freedman_diaconis_bins(&[4.0; 10]), 1);
        assert_eq!(freedman_diaconis_bins(&[1.0]), 1);
    }

    #[test]
    fn histogram_counts_all_samples() {
        let xs: Vec<f64> = (0..100).map(|i| (i * 7 % 31) as f64).collect();
        let h = histogram(&xs, 5);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 100);
        assert_eq!(h.len(), 5);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[10.0], 0.9), 10.0);
    }
}
