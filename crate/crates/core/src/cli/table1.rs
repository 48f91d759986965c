use std::fmt::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::labeling::{build_dataset, prepare_sections};
use crate::market_data::{aggregate_period, ingest_daily_csv, Frequency};
use crate::synthetic::generate_universe;

use super::RunConfig;

/// Dataset counts for one strategy configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table1Row {
    pub strategy: String,
    pub frequency: Frequency,
    pub bins: usize,
    pub samples: usize,
    pub sections: usize,
    pub include_null: bool,
}

/// Builds the labelled dataset of each config and counts samples and
/// sections. Configs without a data file use their synthetic market,
/// generated in memory.
pub fn replicate_table1(configs: &[&Path]) -> Result<Vec<Table1Row>> {
    configs
        .iter()
        .map(|path| {
            let cfg = RunConfig::load(path)?;
            let panel = match &cfg.data_path {
                Some(p) => ingest_daily_csv(p)?,
                None => generate_universe(&cfg.synth.spec())?,
            };
            let table = aggregate_period(&panel, cfg.frequency)?;
            let sections = prepare_sections(&table, 0..table.period_count())?;
            let ds = build_dataset(&sections, &cfg.scheme()?)?;
            let strategy = cfg.name.clone().unwrap_or_else(|| {
                path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
            });
            Ok(Table1Row {
                strategy,
                frequency: cfg.frequency,
                bins: cfg.bins,
                samples: ds.samples.len(),
                sections: ds.sections,
                include_null: cfg.include_null,
            })
        })
        .collect()
}

pub fn format_table1(rows: &[Table1Row]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:<9} {:>5} {:>12} {:>9} {:>10}",
        "Strategy", "Frequency", "Bins", "Samples", "Sections", "Null-label"
    );
    for r in rows {
        let freq = r.frequency.to_string();
        let freq = format!("{}{}", freq[..1].to_uppercase(), &freq[1..]);
        let _ = writeln!(
            s,
            "{:<10} {:<9} {:>5} {:>12} {:>9} {:>10}",
            r.strategy,
            freq,
            r.bins,
            r.samples,
            r.sections,
            if r.include_null { "w/" } else { "w/o" }
        );
    }
    s
}
