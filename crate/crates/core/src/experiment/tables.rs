//! Figure tables aggregated across seeds from completed run directories.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::config::AgentKind;
use crate::experiment::run::INCOMPLETE_MARKER;
use crate::experiment::PlannedRun;
use crate::metrics::median;

pub const TABLE_SCHEMA: &str = "# schema: figure-table v1";

/// Files written by [`figure_tables`].
pub const TABLE_FILES: [&str; 4] = [
    "fig2_win_percentage.csv",
    "fig3_mean_reward.csv",
    "fig4_utilization.csv",
    "fig5_fairness.csv",
];

/// Parsed long-format summary of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SummaryTable {
    pub scalars: BTreeMap<String, String>,
    /// `(metric, vsp_id) -> value`
    pub per_vsp: BTreeMap<(String, usize), f64>,
}

impl SummaryTable {
    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).and_then(|v| v.parse().ok())
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(File::open(path)?))
}

pub fn read_summary(path: &Path) -> Result<SummaryTable> {
    let mut t = SummaryTable::default();
    for rec in reader(path)?.records() {
        let rec = rec?;
        let (metric, vsp, value) = (&rec[0], &rec[1], &rec[2]);
        if vsp.is_empty() {
            t.scalars.insert(metric.to_string(), value.to_string());
        } else {
            let id = vsp
                .parse()
                .map_err(|_| Error::Io(format!("{}: bad vsp_id '{vsp}'", path.display())))?;
            let v = value
                .parse()
                .map_err(|_| Error::Io(format!("{}: bad value '{value}'", path.display())))?;
            t.per_vsp.insert((metric.to_string(), id), v);
        }
    }
    Ok(t)
}

/// Per-episode mean rewards from an episodes.csv.
pub fn read_episode_rewards(path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        out.push(
            rec[1]
                .parse()
                .map_err(|_| Error::Io(format!("{}: bad reward '{}'", path.display(), &rec[1])))?,
        );
    }
    Ok(out)
}

/// Outcome of table generation.
#[derive(Debug, Clone, Default)]
pub struct TableReport {
    pub written: Vec<PathBuf>,
    /// Planned run directories with no complete result.
    pub missing: Vec<PathBuf>,
}

fn finite_median(mut xs: Vec<f64>) -> Option<f64> {
    xs.retain(|x| x.is_finite());
    median(&xs).ok()
}

fn fmt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn table(path: &Path, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{TABLE_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header)?;
    Ok(w)
}

/// Reads `plan.json` under `out_dir` and writes the four figure tables there,
/// taking the median across seeds. Runs without a complete summary are listed
/// in `missing_runs.txt` and skipped.
pub fn figure_tables(out_dir: &Path) -> Result<TableReport> {
    let plan: Vec<PlannedRun> = serde_json::from_slice(&fs::read(out_dir.join("plan.json"))?)
        .map_err(|e| Error::Io(format!("plan.json: {e}")))?;

    type Key = (AgentKind, String);
    let mut summaries: BTreeMap<Key, Vec<SummaryTable>> = BTreeMap::new();
    let mut rewards: BTreeMap<Key, Vec<Vec<f64>>> = BTreeMap::new();
    let mut report = TableReport::default();
    for r in &plan {
        let summary = r.dir.join("summary.csv");
        if r.dir.join(INCOMPLETE_MARKER).exists() || !summary.exists() {
            report.missing.push(r.dir.clone());
            continue;
        }
        let key = (r.agent, r.point.clone());
        summaries.entry(key.clone()).or_default().push(read_summary(&summary)?);
        rewards
            .entry(key)
            .or_default()
            .push(read_episode_rewards(&r.dir.join("episodes.csv"))?);
    }

    let path = out_dir.join(TABLE_FILES[0]);
    let mut w = table(&path, &["agent", "point", "vsp_id", "win_pct_median", "seeds"])?;
    for ((agent, point), runs) in &summaries {
        let ids: std::collections::BTreeSet<usize> = runs
            .iter()
            .flat_map(|t| t.per_vsp.keys().filter(|(m, _)| m == "win_pct").map(|(_, i)| *i))
            .collect();
        for id in ids {
            let xs = runs
                .iter()
                .filter_map(|t| t.per_vsp.get(&("win_pct".to_string(), id)).copied())
                .collect();
            w.write_record([
                agent.to_string(),
                point.clone(),
                id.to_string(),
                fmt(finite_median(xs)),
                runs.len().to_string(),
            ])?;
        }
    }
    w.flush()?;
    report.written.push(path);

    let path = out_dir.join(TABLE_FILES[1]);
    let mut w = table(&path, &["agent", "point", "episode", "mean_reward_median", "seeds"])?;
    for ((agent, point), runs) in &rewards {
        let len = runs.iter().map(Vec::len).max().unwrap_or(0);
        for ep in 0..len {
            let xs: Vec<f64> = runs.iter().filter_map(|r| r.get(ep).copied()).collect();
            let n = xs.len();
            w.write_record([
                agent.to_string(),
                point.clone(),
                (ep + 1).to_string(),
                fmt(finite_median(xs)),
                n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    report.written.push(path);

    for (file, metric) in [(TABLE_FILES[2], "final_utilization"), (TABLE_FILES[3], "jain")] {
        let path = out_dir.join(file);
        let mut w = table(
            &path,
            &[
                "agent",
                "point",
                "max_blocks",
                "vsp_count",
                &format!("{metric}_median"),
                "seeds",
            ],
        )?;
        for ((agent, point), runs) in &summaries {
            let first = &runs[0];
            let xs = runs.iter().filter_map(|t| t.scalar(metric)).collect();
            w.write_record([
                agent.to_string(),
                point.clone(),
                first.scalars.get("max_blocks").cloned().unwrap_or_default(),
                first.scalars.get("vsp_count").cloned().unwrap_or_default(),
                fmt(finite_median(xs)),
                runs.len().to_string(),
            ])?;
        }
        w.flush()?;
        report.written.push(path);
    }

    let mut listing = String::new();
    for m in &report.missing {
        listing.push_str(&m.display().to_string());
        listing.push('\n');
    }
    fs::write(out_dir.join("missing_runs.txt"), listing)?;
    Ok(report)
}
