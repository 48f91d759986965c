//! Daily bars in, normalized 20-period feature windows out.

mod bars;
mod periods;
mod windows;

pub use bars::{ingest_daily_csv, read_daily_csv, DailyBar, Panel, CSV_HEADER};
pub use periods::{aggregate_period, Frequency, PeriodRecord, PeriodTable};
pub use windows::{
    build_cross_section, build_windows, normalize_cross_section, CrossSection, FeatureWindow,
    WindowMatrix, FEATURES, WINDOW_LEN,
};
