//! Deterministic synthetic fixtures: a weekday yield panel for pipeline and
//! count-identity checks, and the damped-sinusoid corpus used by the GAN
//! benchmark.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;

use crate::ingest::YieldPanel;
use crate::sampling::SampleSet;

/// Weekday panel of exactly `len` rows starting 1962-01-02, with yield-like
/// random walks and recession flags set over the given `[start, end)` index
/// runs.
pub fn synthetic_weekday_panel(len: usize, recession_runs: &[(usize, usize)], seed: u64) -> YieldPanel {
    let mut dates = Vec::with_capacity(len);
    let mut day = NaiveDate::from_ymd_opt(1962, 1, 2).unwrap();
    while dates.len() < len {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(day);
        }
        day = day.succ_opt().unwrap();
    }

    let mut rng = crate::rng::stream(seed, "toy-panel");
    let mut y1 = Vec::with_capacity(len);
    let mut y10 = Vec::with_capacity(len);
    let mut level: f64 = 4.0;
    let mut spread: f64 = 1.0;
    for _ in 0..len {
        level = (level + rng.gen_range(-0.05..0.05)).clamp(0.2, 14.0);
        spread = (spread + rng.gen_range(-0.02..0.02)).clamp(-0.5, 3.0);
        y1.push(level);
        y10.push((level + spread).clamp(0.1, 15.0));
    }
    let mut rec = vec![0u8; len];
    for &(a, b) in recession_runs {
        for r in rec.iter_mut().take(b.min(len)).skip(a) {
            *r = 1;
        }
    }
    YieldPanel::new(dates, y1, y10, rec).expect("synthetic panel is valid")
}

/// Two-feature damped sinusoids with a high-frequency indicator attribute.
///
/// Both features share a per-sample frequency regime; the indicator marks the
/// fast regime (about 30% of samples), mirroring a rare-event attribute the
/// generator must reproduce jointly with the series.
pub fn damped_sinusoid_corpus(n: usize, t: usize, seed: u64) -> SampleSet {
    let mut rng = crate::rng::stream(seed, "toy-sinusoids");
    let mut features = Vec::with_capacity(n * t * 2);
    let mut attrs = Vec::with_capacity(n);
    for _ in 0..n {
        let fast = rng.gen_bool(0.3);
        let omega: f64 = if fast { rng.gen_range(0.5..0.8) } else { rng.gen_range(0.15..0.3) };
        let amp: f64 = rng.gen_range(0.5..2.0);
        let decay: f64 = rng.gen_range(0.01..0.05);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let level: f64 = rng.gen_range(2.0..6.0);
        let level2: f64 = level + rng.gen_range(0.2..1.0);
        for step in 0..t {
            let s = step as f64;
            let envelope = amp * (-decay * s).exp();
            features.push(level + envelope * (omega * s + phase).sin());
            features.push(level2 + envelope * (omega * s + phase).cos());
        }
        attrs.push(f64::from(fast));
    }
    SampleSet::new(t, 2, features, attrs, vec!["recession".into()])
        .expect("toy corpus is valid")
}
