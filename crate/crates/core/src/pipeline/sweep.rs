//! Repeated runs over one configuration axis.

use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;
use serde_json::json;

use crate::corpus::{read_records, RawRecord};
use crate::error::{Error, Result};
use crate::eval::mean_std;

use super::{embed_stage, run_from_space, Prepared, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SamplesPerClass,
    KReal,
    EmbeddingDim,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SamplesPerClass => "samples_per_class",
            SweepAxis::KReal => "k_real",
            SweepAxis::EmbeddingDim => "embedding_dim",
        }
    }

    fn apply(self, config: &mut RunConfig, value: usize) {
        match self {
            SweepAxis::SamplesPerClass => config.generate.samples_per_class = value,
            SweepAxis::KReal => config.k_per_class = value,
            SweepAxis::EmbeddingDim => config.embed.dim = value,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "samples_per_class" => Ok(SweepAxis::SamplesPerClass),
            "k_real" => Ok(SweepAxis::KReal),
            "embedding_dim" => Ok(SweepAxis::EmbeddingDim),
            _ => Err(Error::InvalidConfig(format!(
                "unknown sweep axis `{s}`; expected samples_per_class, k_real or embedding_dim"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: usize,
    pub repetition: usize,
    pub seed: u64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub value: usize,
    pub runs: usize,
    pub micro_mean: f64,
    pub micro_std: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
}

pub fn sweep(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[usize],
    repetitions: usize,
) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    let schema = config.schema()?;
    let records = read_records(&config.corpus, &schema).map_err(|e| e.in_stage("ingest"))?;
    sweep_records(config, &records, axis, values, repetitions)
}

/// Repetition `r` runs with root seed `config.seed + r` for every value, so
/// values are compared on the same splits. Synthetic-count sweeps reuse one
/// embedding per repetition since generation does not feed back into it.
pub fn sweep_records(
    config: &RunConfig,
    records: &[RawRecord],
    axis: SweepAxis,
    values: &[usize],
    repetitions: usize,
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::with_capacity(values.len() * repetitions);
    for rep in 0..repetitions {
        let mut base = config.clone();
        base.seed = config.seed.wrapping_add(rep as u64);
        let mut cached = None;
        for &value in values {
            let mut cfg = base.clone();
            axis.apply(&mut cfg, value);
            cfg.validate()?;
            let out = if axis == SweepAxis::SamplesPerClass {
                if cached.is_none() {
                    let prep = Prepared::from_records(&cfg, records)?;
                    let space = embed_stage(&cfg, &prep)?;
                    cached = Some((prep, space));
                }
                let (prep, space) = cached.as_ref().expect("filled above");
                run_from_space(&cfg, prep, space.clone(), Vec::<(&str, Duration)>::new())?
            } else {
                let prep = Prepared::from_records(&cfg, records)?;
                super::run_prepared(&cfg, &prep)?
            };
            points.push(SweepPoint {
                value,
                repetition: rep,
                seed: cfg.seed,
                micro_f1: out.report.eval.micro_f1,
                macro_f1: out.report.eval.macro_f1,
            });
        }
    }
    Ok(points)
}

/// Mean and sample standard deviation per value, in first-seen order.
pub fn summarize(points: &[SweepPoint]) -> Vec<SweepSummary> {
    let mut values: Vec<usize> = Vec::new();
    for p in points {
        if !values.contains(&p.value) {
            values.push(p.value);
        }
    }
    values
        .into_iter()
        .map(|v| {
            let micro: Vec<f64> = points.iter().filter(|p| p.value == v).map(|p| p.micro_f1).collect();
            let macro_: Vec<f64> = points.iter().filter(|p| p.value == v).map(|p| p.macro_f1).collect();
            let (micro_mean, micro_std) = mean_std(&micro);
            let (macro_mean, macro_std) = mean_std(&macro_);
            SweepSummary {
                value: v,
                runs: micro.len(),
                micro_mean,
                micro_std,
                macro_mean,
                macro_std,
            }
        })
        .collect()
}

pub fn sweep_table(axis: SweepAxis, summary: &[SweepSummary]) -> String {
    let mut s = format!("{:>18}  runs  micro_f1          macro_f1\n", axis.name());
    for row in summary {
        s.push_str(&format!(
            "{:>18}  {:>4}  {:.4} ± {:.4}   {:.4} ± {:.4}\n",
            row.value, row.runs, row.micro_mean, row.micro_std, row.macro_mean, row.macro_std
        ));
    }
    s
}

/// `sweep.jsonl` (one line per run, then one per value) and `sweep.txt`.
pub fn write_sweep(dir: &Path, axis: SweepAxis, points: &[SweepPoint]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = summarize(points);
    let mut lines = String::new();
    for p in points {
        lines.push_str(&json!({"kind": "run", "axis": axis, "point": p}).to_string());
        lines.push('\n');
    }
    for s in &summary {
        lines.push_str(&json!({"kind": "summary", "axis": axis, "summary": s}).to_string());
        lines.push('\n');
    }
    let jsonl = dir.join("sweep.jsonl");
    std::fs::write(&jsonl, lines).map_err(|e| Error::io(&jsonl, e))?;
    let txt = dir.join("sweep.txt");
    std::fs::write(&txt, sweep_table(axis, &summary)).map_err(|e| Error::io(&txt, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planted::{make_planted_corpus, PlantedConfig};

    #[test]
    fn axis_names_round_trip() {
        for axis in [SweepAxis::SamplesPerClass, SweepAxis::KReal, SweepAxis::EmbeddingDim] {
            assert_eq!(axis.name().parse::<SweepAxis>().unwrap(), axis);
        }
        assert!("nope".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn single_value_sweep_matches_a_run() {
        let planted = make_planted_corpus(&PlantedConfig {
            docs_per_class: 20,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = RunConfig {
            global_fields: vec!["user".into()],
            local_fields: vec!["tag".into()],
            k_per_class: 4,
            seed: 7,
            ..Default::default()
        };
        cfg.embed.dim = 12;
        cfg.embed.epochs = 2;
        cfg.generate.samples_per_class = 5;
        cfg.train.epochs = 2;
        for axis in [SweepAxis::SamplesPerClass, SweepAxis::KReal] {
            let value = match axis {
                SweepAxis::SamplesPerClass => 5,
                _ => 4,
            };
            let points = sweep_records(&cfg, &planted.records, axis, &[value], 1).unwrap();
            let prep = Prepared::from_records(&cfg, &planted.records).unwrap();
            let direct = super::super::run_prepared(&cfg, &prep).unwrap();
            assert_eq!(points[0].micro_f1, direct.report.eval.micro_f1);
            assert_eq!(points[0].macro_f1, direct.report.eval.macro_f1);
        }
    }

    #[test]
    fn summary_statistics() {
        let p = |value, micro| SweepPoint {
            value,
            repetition: 0,
            seed: 0,
            micro_f1: micro,
            macro_f1: micro,
        };
        let s = summarize(&[p(1, 0.5), p(2, 0.9), p(1, 0.7)]);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].value, 1);
        assert!((s[0].micro_mean - 0.6).abs() < 1e-12);
        assert!((s[0].micro_std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].runs, 1);
    }
}
