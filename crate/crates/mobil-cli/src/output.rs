//! Trace files: `<hash>.csv`, `<hash>.meta` and an optional `<hash>.svg`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mobil_core::experiment::Algorithm;
use mobil_core::{ExperimentConfig, RunOutput, TraceRecord, TRACE_COLUMNS, VI_COLUMNS};
use sha2::{Digest, Sha256};

pub const OUT_DIR_VAR: &str = "MOBIL_OUT_DIR";

pub fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// First 16 hex digits of the SHA-256 of the canonical config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.canonical().as_bytes());
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn row(rec: &TraceRecord, vi: bool) -> Vec<String> {
    let mut out = vec![rec.n.to_string()];
    out.extend(
        [rec.w_n, rec.loss, rec.grad_norm, rec.pred_err_sq, rec.model_loss, rec.pi_gap, rec.avg_weighted_regret, rec.j_estimate]
            .iter()
            .map(f64::to_string),
    );
    if vi {
        out.extend([rec.err_gap, rec.gamma_n].iter().map(|v| v.unwrap_or(f64::NAN).to_string()));
    }
    out
}

fn write_csv(path: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<()> {
    let vi = cfg.algorithm == Algorithm::MirrorProx;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = TRACE_COLUMNS.to_vec();
    if vi {
        header.extend(VI_COLUMNS);
    }
    w.write_record(&header)?;
    for rec in &out.trace {
        w.write_record(row(rec, vi))?;
    }
    w.flush()?;
    Ok(())
}

fn meta_text(cfg: &ExperimentConfig, out: &RunOutput) -> String {
    format!("{}version={}\noutput_index={}\n", cfg.canonical(), mobil_core::VERSION, out.output_index)
}

/// Log-log chart of the running regret (the ERR gap for Mirror-Prox runs).
pub fn svg_chart(out: &RunOutput, title: &str) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let pts: Vec<(f64, f64)> = out
        .trace
        .iter()
        .filter(|r| r.avg_weighted_regret > 0.0 && r.avg_weighted_regret.is_finite())
        .map(|r| ((r.n as f64).log10(), r.avg_weighted_regret.log10()))
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{pad}\" y=\"25\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n"
    );
    if pts.len() >= 2 {
        let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
        let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
        let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * pad);
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = write!(
            svg,
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{}\"/>\n\
             <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <text x=\"{pad}\" y=\"{lb}\" font-family=\"sans-serif\" font-size=\"11\">log10 n: {x0:.2} .. {x1:.2}</text>\n\
             <text x=\"5\" y=\"{pad}\" font-family=\"sans-serif\" font-size=\"11\">{y1:.2}</text>\n\
             <text x=\"5\" y=\"{b}\" font-family=\"sans-serif\" font-size=\"11\">{y0:.2}</text>\n",
            path.join(" "),
            b = h - pad,
            r = w - pad,
            lb = h - pad + 20.0,
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes all files for one run and returns the CSV path. Nothing is left behind on failure.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = config_hash(cfg);
    let csv_path = dir.join(format!("{stem}.csv"));
    let meta_path = dir.join(format!("{stem}.meta"));
    let svg_path = dir.join(format!("{stem}.svg"));
    let result = (|| -> Result<()> {
        write_csv(&csv_path, cfg, out).with_context(|| format!("writing {}", csv_path.display()))?;
        fs::write(&meta_path, meta_text(cfg, out)).with_context(|| format!("writing {}", meta_path.display()))?;
        if cfg.output_svg {
            let title = format!("{} / {} / p={}", cfg.algorithm.as_str(), cfg.model_oracle.as_str(), cfg.p);
            fs::write(&svg_path, svg_chart(out, &title)).with_context(|| format!("writing {}", svg_path.display()))?;
        }
        Ok(())
    })();
    if result.is_err() {
        remove_partial(&[&csv_path, &meta_path, &svg_path]);
    }
    result.map(|_| csv_path)
}

fn remove_partial(paths: &[&Path]) {
    for p in paths {
        let _ = fs::remove_file(p);
    }
}
