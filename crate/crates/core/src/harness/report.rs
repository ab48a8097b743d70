use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::error::{Error, Result};
use crate::imageops::io::{load_png, write_atomic};
use crate::par;
use crate::quality::{format_db, psd_profile};
use crate::skysim::{load_sample, scan_dataset, Split};

pub const METHOD_BICUBIC: &str = "Bicubic";
pub const METHOD_PRETRAIN: &str = "Pretrain";
pub const METHOD_FINETUNE_ALL: &str = "Fine-tune-all";
pub const METHOD_WITH_ALTITUDE: &str = "With-altitude";
pub const METHOD_META_UNADAPTED: &str = "Meta-unadapted";
pub const METHOD_META_ADAPTED: &str = "Meta-adapted";

/// High-frequency cutoff for the PSD summary, as a fraction of Nyquist.
const PSD_CUTOFF: f64 = 0.5;

/// One scene at one altitude scored by one method (means over its patches).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scene: String,
    pub altitude_m: f64,
    pub method: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub gmsd: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Config(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let header = ["scene", "altitude_m", "method", "psnr_db", "ssim", "gmsd"].map(String::from);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.scene.clone(),
                r.altitude_m.to_string(),
                r.method.clone(),
                format_db(r.psnr_db),
                fmt(r.ssim),
                fmt(r.gmsd),
            ]
        })
        .collect();
    write_atomic(path, &csv_bytes(&header, &body)?)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

/// Sort key placing the known method rows in a fixed order.
pub fn method_rank(method: &str) -> (usize, f64, String) {
    let fixed = [METHOD_BICUBIC, METHOD_PRETRAIN, METHOD_FINETUNE_ALL];
    if let Some(i) = fixed.iter().position(|m| *m == method) {
        return (i, 0.0, String::new());
    }
    if let Some(a) = method
        .strip_prefix("Fine-tune-")
        .and_then(|s| s.strip_suffix('m'))
        .and_then(|s| s.parse().ok())
    {
        return (3, a, String::new());
    }
    let tail = [
        METHOD_WITH_ALTITUDE,
        METHOD_META_UNADAPTED,
        METHOD_META_ADAPTED,
    ];
    match tail.iter().position(|m| *m == method) {
        Some(i) => (4 + i, 0.0, String::new()),
        None => (7, 0.0, method.to_string()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSummary {
    pub methods: Vec<String>,
    pub altitudes: Vec<f64>,
    pub files: Vec<PathBuf>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    psnr: f64,
    ssim: f64,
    gmsd: f64,
}

/// Merges every `report_dir/results/*.csv` into `report.csv` (one metric per
/// column) and `report.md` (methods by altitudes), and writes PSD-per-altitude
/// tables for the test split when the dataset is present.
pub fn cmd_report(cfg: &RunConfig) -> Result<ReportSummary> {
    let results_dir = cfg.report_dir.join("results");
    let mut files: Vec<PathBuf> = match std::fs::read_dir(&results_dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(&results_dir, e)),
    };
    files.sort();
    let mut table: BTreeMap<(usize, u64, String, String), BTreeMap<u64, Acc>> = BTreeMap::new();
    let mut altitudes: Vec<f64> = Vec::new();
    for f in &files {
        for r in read_results(f)? {
            let (rank, sub, name) = method_rank(&r.method);
            let acc = table
                .entry((rank, sub.to_bits(), name, r.method.clone()))
                .or_default()
                .entry(r.altitude_m.to_bits())
                .or_default();
            acc.n += 1;
            acc.psnr += r.psnr_db;
            acc.ssim += r.ssim;
            acc.gmsd += r.gmsd;
            altitudes.push(r.altitude_m);
        }
    }
    altitudes.sort_by(f64::total_cmp);
    altitudes.dedup();

    let mut long = Vec::new();
    let mut md = String::from("| Method |");
    for a in &altitudes {
        md.push_str(&format!(" {a} m |"));
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(altitudes.len()));
    md.push('\n');
    let mut methods = Vec::new();
    for ((_, _, _, method), cells) in &table {
        methods.push(method.clone());
        md.push_str(&format!("| {method} |"));
        for a in &altitudes {
            match cells.get(&a.to_bits()) {
                Some(acc) => {
                    let n = acc.n as f64;
                    let (p, s, g) = (acc.psnr / n, acc.ssim / n, acc.gmsd / n);
                    long.push(vec![
                        method.clone(),
                        a.to_string(),
                        format_db(p),
                        fmt(s),
                        fmt(g),
                    ]);
                    md.push_str(&format!(" {:.2}<br>{s:.4}<br>{g:.4} |", p));
                }
                None => md.push_str(" - |"),
            }
        }
        md.push('\n');
    }
    md.push_str("\nCells: Y-PSNR (dB) / SSIM / GMSD.\n");

    let header = ["method", "altitude_m", "psnr_db", "ssim", "gmsd"].map(String::from);
    let mut written = Vec::new();
    let report_csv = cfg.report_dir.join("report.csv");
    write_atomic(&report_csv, &csv_bytes(&header, &long)?)?;
    written.push(report_csv);
    let report_md = cfg.report_dir.join("report.md");
    write_atomic(&report_md, md.as_bytes())?;
    written.push(report_md);
    written.extend(write_psd(cfg)?);
    Ok(ReportSummary {
        methods,
        altitudes,
        files: written,
    })
}

/// Mean radial log-power and high-frequency ratio of the test-split HR
/// images per altitude.
fn write_psd(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dirs = scan_dataset(&cfg.data_root, Split::Test)?;
    if dirs.is_empty() {
        return Ok(Vec::new());
    }
    let profiles = par::map(&dirs, |_, d| -> Result<(f64, crate::quality::PsdProfile)> {
        let meta = load_sample(d)?.meta;
        Ok((
            meta.altitude_m,
            psd_profile(&load_png(&d.join("hr.png"))?, PSD_CUTOFF)?,
        ))
    });
    let mut by_alt: BTreeMap<u64, Vec<crate::quality::PsdProfile>> = BTreeMap::new();
    let mut alts = Vec::new();
    for p in profiles {
        let (a, prof) = p?;
        if !by_alt.contains_key(&a.to_bits()) {
            alts.push(a);
        }
        by_alt.entry(a.to_bits()).or_default().push(prof);
    }
    alts.sort_by(f64::total_cmp);
    let bins = by_alt
        .values()
        .flatten()
        .map(|p| p.mean_log_power.len())
        .min()
        .unwrap_or(0);
    let header: Vec<String> = std::iter::once("radius".to_string())
        .chain(alts.iter().map(|a| crate::skysim::altitude_dir(*a)))
        .collect();
    let mean_over = |a: f64, f: &dyn Fn(&crate::quality::PsdProfile) -> f64| {
        let v = &by_alt[&a.to_bits()];
        v.iter().map(f).sum::<f64>() / v.len() as f64
    };
    let rows: Vec<Vec<String>> = (0..bins)
        .map(|b| {
            std::iter::once(b.to_string())
                .chain(
                    alts.iter()
                        .map(|&a| fmt(mean_over(a, &|p| p.mean_log_power[b]))),
                )
                .collect()
        })
        .collect();
    let psd = cfg.report_dir.join("psd.csv");
    write_atomic(&psd, &csv_bytes(&header, &rows)?)?;
    let mut hf_header = header.clone();
    hf_header[0] = "metric".into();
    let hf_row: Vec<String> = std::iter::once("hf_ratio".to_string())
        .chain(
            alts.iter()
                .map(|&a| format!("{:.8}", mean_over(a, &|p| p.hf_ratio))),
        )
        .collect();
    let hf = cfg.report_dir.join("psd_hf.csv");
    write_atomic(&hf, &csv_bytes(&hf_header, &[hf_row])?)?;
    Ok(vec![psd, hf])
}
