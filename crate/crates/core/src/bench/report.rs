use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::ncap::{CaseTag, Stage, StageLatencyRecord};
use crate::registry::ClassKey;

/// Summary of one column of microsecond samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageStats {
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl StageStats {
    /// `None` for an empty sample.
    pub fn of(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Some(Self {
            min: sorted[0],
            mean: sorted.iter().sum::<f64>() / n as f64,
            median,
            max: sorted[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub case: CaseTag,
    pub records: Vec<StageLatencyRecord>,
    /// Indexed like `Stage::ALL`.
    pub stages: Vec<StageStats>,
    pub total: StageStats,
    /// Directory fetches the NCAP issued while this case was measured.
    pub registry_fetches: u64,
}

impl CaseReport {
    pub fn from_records(
        case: CaseTag,
        records: Vec<StageLatencyRecord>,
        registry_fetches: u64,
    ) -> Option<Self> {
        let stages = Stage::ALL
            .iter()
            .map(|&s| StageStats::of(&records.iter().map(|r| r.micros(s)).collect::<Vec<_>>()))
            .collect::<Option<Vec<_>>>()?;
        let total = StageStats::of(&records.iter().map(|r| r.total_micros()).collect::<Vec<_>>())?;
        Some(Self {
            case,
            records,
            stages,
            total,
            registry_fetches,
        })
    }

    pub fn stage(&self, stage: Stage) -> &StageStats {
        &self.stages[stage.index()]
    }
}

/// Outcome of checking that the directory served each key of a TIM once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CacheOnceReport {
    pub pass: bool,
    pub served: BTreeMap<ClassKey, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub iterations: usize,
    pub inject_delay_us: u64,
    pub case_a: CaseReport,
    pub case_b: CaseReport,
    pub cache_once: CacheOnceReport,
}

fn cells(out: &mut String, s: &StageStats) {
    let _ = write!(
        out,
        " {:.1} | {:.1} | {:.1} | {:.1} |",
        s.min, s.mean, s.median, s.max
    );
}

impl BenchReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# NCAP association latency\n");
        let _ = writeln!(
            out,
            "{} iterations per case, directory delay {} µs. Times in µs.\n",
            self.iterations, self.inject_delay_us
        );
        let _ = writeln!(
            out,
            "Case A: TEDS in the local cache. Case B: TEDS fetched from the directory.\n"
        );
        out.push_str(
            "| Stage | A min | A mean | A median | A max | B min | B mean | B median | B max |\n",
        );
        out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        for s in Stage::ALL {
            let _ = write!(out, "| {} |", s.label());
            cells(&mut out, self.case_a.stage(s));
            cells(&mut out, self.case_b.stage(s));
            out.push('\n');
        }
        out.push_str("| Total |");
        cells(&mut out, &self.case_a.total);
        cells(&mut out, &self.case_b.total);
        out.push('\n');
        let _ = writeln!(
            out,
            "\nDirectory fetches: case A {}, case B {}.",
            self.case_a.registry_fetches, self.case_b.registry_fetches
        );
        let counts: Vec<String> = self
            .cache_once
            .served
            .iter()
            .map(|(k, n)| format!("{k}={n}"))
            .collect();
        let _ = writeln!(
            out,
            "Cache-once check: {} (GETs served per key: {}).",
            if self.cache_once.pass { "pass" } else { "FAIL" },
            counts.join(", ")
        );
        out
    }

    /// `case,iteration,stage,micros`, one row per stage and a `Total` row
    /// per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case,iteration,stage,micros\n");
        for case in [&self.case_a, &self.case_b] {
            for (i, r) in case.records.iter().enumerate() {
                for s in Stage::ALL {
                    let _ = writeln!(
                        out,
                        "{:?},{},{},{:.3}",
                        case.case,
                        i + 1,
                        s.label(),
                        r.micros(s)
                    );
                }
                let _ = writeln!(
                    out,
                    "{:?},{},Total,{:.3}",
                    case.case,
                    i + 1,
                    r.total_micros()
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use uuid::Uuid;

    #[test]
    fn stats_examples() {
        let s = StageStats::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!((s.min, s.mean, s.median, s.max), (1.0, 4.0, 2.5, 10.0));
        let one = StageStats::of(&[7.0]).unwrap();
        assert_eq!(
            (one.min, one.mean, one.median, one.max),
            (7.0, 7.0, 7.0, 7.0)
        );
        assert!(StageStats::of(&[]).is_none());
    }

    fn record(stage_ns: [u64; 5], case: CaseTag) -> StageLatencyRecord {
        StageLatencyRecord {
            seq: 0,
            uuid: Uuid::nil(),
            case,
            coalesced: false,
            stage_ns,
            total_ns: stage_ns.iter().sum(),
        }
    }

    #[test]
    fn table_shape() {
        let a = CaseReport::from_records(
            CaseTag::A,
            vec![record([1000, 2000, 3000, 0, 4000], CaseTag::A)],
            0,
        )
        .unwrap();
        let b = CaseReport::from_records(
            CaseTag::B,
            vec![record([1000, 2000, 3000, 900_000, 4000], CaseTag::B)],
            1,
        )
        .unwrap();
        let report = BenchReport {
            iterations: 1,
            inject_delay_us: 0,
            case_a: a,
            case_b: b,
            cache_once: CacheOnceReport {
                pass: true,
                served: BTreeMap::new(),
            },
        };
        let md = report.to_markdown();
        let rows: Vec<&str> = md
            .lines()
            .filter(|l| l.starts_with("| ") && !l.starts_with("| Stage"))
            .map(|l| l[2..].split(" |").next().unwrap())
            .collect();
        assert_eq!(
            rows,
            [
                "Packet Decoder",
                "UUID Processor",
                "Local Cache",
                "LDAP Query",
                "TEDS Decoder",
                "Total"
            ]
        );
        assert!(md.contains("| Total | 10.0 | 10.0 | 10.0 | 10.0 | 910.0 |"));
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + 12);
        assert!(csv.contains("B,1,LDAP Query,900.000\n"));
        assert!(csv.contains("A,1,Total,10.000\n"));
    }

    proptest! {
        #[test]
        fn total_mean_is_sum_of_stage_means(
            rows in prop::collection::vec(prop::array::uniform5(0u64..10_000_000), 1..40)
        ) {
            let records = rows.into_iter().map(|r| record(r, CaseTag::B)).collect();
            let c = CaseReport::from_records(CaseTag::B, records, 0).unwrap();
            let sum: f64 = c.stages.iter().map(|s| s.mean).sum();
            prop_assert!((sum - c.total.mean).abs() < 1e-6);
            for s in &c.stages {
                prop_assert!(s.min <= s.median && s.median <= s.max);
                prop_assert!(s.min <= s.mean && s.mean <= s.max);
            }
        }
    }
}
