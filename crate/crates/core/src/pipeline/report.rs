//! Report tables, a markdown summary, SVG figures and the run manifest.
//!
//! Every writer is a pure function of its inputs, so a rerun with the same
//! inputs and seed produces byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corr::CorrelationReport;
use super::holdout::HoldoutReport;
use super::ladder::LadderReport;
use super::PipelineError;
use crate::ingest::Condition;
use crate::stats::TestResult;

/// Compact, round-trippable number formatting: plain decimals in the
/// everyday range, scientific notation for very small or large values.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "NA".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-4..1e9).contains(&a) || a.is_infinite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt_num)
}

pub fn write_ladder_csv<W: Write>(sink: W, report: &LadderReport) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "ladder",
        "rung",
        "name",
        "formula",
        "n_params",
        "loglik",
        "aic",
        "delta_aic",
        "compared_to",
        "statistic",
        "df",
        "p_raw",
        "p_adjusted",
        "method",
        "converged",
        "singular",
        "redundant",
        "dropped",
    ])?;
    for r in &report.rungs {
        let t = r.test.as_ref();
        w.write_record([
            r.ladder.clone(),
            r.rung.to_string(),
            r.name.clone(),
            r.formula(),
            r.model.n_params.to_string(),
            fmt_num(r.model.loglik),
            fmt_num(r.model.aic()),
            fmt_num(r.delta_aic),
            r.compared_to.map_or_else(|| "NA".into(), |c| c.to_string()),
            opt(t.map(|t| t.statistic)),
            opt(t.map(|t| t.df)),
            opt(t.map(|t| t.p_raw)),
            opt(t.and_then(|t| t.p_adjusted)),
            if t.and_then(|t| t.p_adjusted).is_some() {
                report.fdr.as_str().into()
            } else {
                "NA".into()
            },
            r.model.converged.to_string(),
            r.model.singular.to_string(),
            r.redundant.to_string(),
            r.model.dropped_columns.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_contrasts_csv<W: Write>(sink: W, tests: &[TestResult], method: &str) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "label",
        "statistic",
        "df",
        "p_raw",
        "p_adjusted",
        "alternative",
        "method",
    ])?;
    for t in tests {
        w.write_record([
            t.label.clone(),
            fmt_num(t.statistic),
            fmt_num(t.df),
            fmt_num(t.p_raw),
            opt(t.p_adjusted),
            t.alternative.as_str().into(),
            method.into(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-condition observed and predicted means with standard errors.
pub fn write_conditions_csv<W: Write>(sink: W, report: &HoldoutReport) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["condition", "source", "n", "mean", "se"])?;
    for c in &report.conditions {
        w.write_record([
            c.condition.as_str().into(),
            "observed".into(),
            c.n.to_string(),
            fmt_num(c.observed.mean),
            fmt_num(c.observed.se),
        ])?;
        for (m, p) in report.models.iter().zip(&c.predicted) {
            w.write_record([
                c.condition.as_str().into(),
                m.label.clone(),
                c.n.to_string(),
                fmt_num(p.mean),
                fmt_num(p.se),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_correlation_csv<W: Write>(sink: W, reports: &[CorrelationReport]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["x", "y", "scope", "n", "r"])?;
    for rep in reports {
        w.write_record([
            rep.x.clone(),
            rep.y.clone(),
            "all".into(),
            rep.n_stimuli.to_string(),
            fmt_num(rep.r),
        ])?;
        for c in &rep.per_condition {
            w.write_record([
                rep.x.clone(),
                rep.y.clone(),
                c.condition.as_str().into(),
                c.n.to_string(),
                opt(c.r),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_scatter_csv<W: Write>(sink: W, reports: &[CorrelationReport]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["x_column", "y_column", "frame_id", "condition", "x", "y"])?;
    for rep in reports {
        for p in &rep.scatter {
            w.write_record([
                rep.x.clone(),
                rep.y.clone(),
                p.frame_id.clone(),
                p.condition.as_str().into(),
                fmt_num(p.x),
                fmt_num(p.y),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn p_text(p: f64) -> String {
    if p < 1e-4 {
        "< 0.0001".into()
    } else {
        format!("= {p:.4}")
    }
}

/// Human-readable overview of whichever analyses were run.
pub fn summary_markdown(
    ladder: Option<&LadderReport>,
    holdout: Option<&HoldoutReport>,
    correlations: &[CorrelationReport],
) -> String {
    let mut s = String::from("# N400 analysis summary\n");
    if let Some(l) = ladder {
        let _ = writeln!(s, "\n## Model ladders\n");
        let _ = writeln!(
            s,
            "FDR method: {} over {} likelihood-ratio tests.\n",
            l.fdr.as_str(),
            l.tests_mut_count()
        );
        let _ = writeln!(
            s,
            "| ladder | rung | n_params | logLik | dAIC | test | p (adj) | flags |"
        );
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
        for r in &l.rungs {
            let test = match &r.test {
                Some(t) if r.redundant => format!("redundant (chi2({}) = 0)", t.df),
                Some(t) => format!("chi2({}) = {:.2}", t.df, t.statistic),
                None => "-".into(),
            };
            let p = r.test.as_ref().and_then(|t| t.p_adjusted).map_or("-".into(), p_text);
            let mut flags = Vec::new();
            if r.model.singular {
                flags.push("singular");
            }
            if !r.model.converged {
                flags.push("not converged");
            }
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.2} | {:.2} | {} | {} | {} |",
                r.ladder,
                r.name,
                r.model.n_params,
                r.model.loglik,
                r.delta_aic,
                test,
                p,
                flags.join(", ")
            );
        }
        for label in l.labels() {
            if let Some(best) = l.best(label) {
                let _ = writeln!(
                    s,
                    "\nBest rung for `{label}` by AIC: {} (dAIC {:.2}).",
                    best.name, best.delta_aic
                );
            }
        }
    }
    if let Some(h) = holdout {
        let _ = writeln!(s, "\n## Held-out predictions\n");
        let _ = writeln!(
            s,
            "{} training rows, {} held-out rows (fraction {}, seed {}{}).\n",
            h.n_train,
            h.n_test,
            h.spec.fraction,
            h.spec.seed,
            if h.spec.stratify {
                ", stratified by condition"
            } else {
                ""
            }
        );
        for m in &h.models {
            let _ = writeln!(s, "- `{}`: {} (held-out RMSE {:.4})", m.label, m.model.spec, m.rmse);
        }
        let _ = writeln!(
            s,
            "\n| condition | n | observed | {} |",
            h.models
                .iter()
                .map(|m| m.label.as_str())
                .collect::<Vec<_>>()
                .join(" | ")
        );
        let _ = writeln!(s, "|---|---|---|{}", "---|".repeat(h.models.len()));
        for c in &h.conditions {
            let preds: Vec<String> = c
                .predicted
                .iter()
                .map(|p| format!("{:.3} ± {:.3}", p.mean, p.se))
                .collect();
            let _ = writeln!(
                s,
                "| {} | {} | {:.3} ± {:.3} | {} |",
                c.condition,
                c.n,
                c.observed.mean,
                c.observed.se,
                preds.join(" | ")
            );
        }
        let _ = writeln!(s, "\n| contrast | t | df | p (adj, {}) |", h.fdr.as_str());
        let _ = writeln!(s, "|---|---|---|---|");
        for t in &h.contrasts {
            let _ = writeln!(
                s,
                "| {} | {:.3} | {:.1} | {} |",
                t.label,
                t.statistic,
                t.df,
                p_text(t.p())
            );
        }
    }
    if !correlations.is_empty() {
        let _ = writeln!(s, "\n## Predictor correlations\n");
        let _ = writeln!(s, "| x | y | stimuli | r |");
        let _ = writeln!(s, "|---|---|---|---|");
        for c in correlations {
            let _ = writeln!(s, "| {} | {} | {} | {:.3} |", c.x, c.y, c.n_stimuli, c.r);
        }
        if let Some(i) = super::corr::stronger_correlation(correlations) {
            if correlations.len() > 1 {
                let _ = writeln!(
                    s,
                    "\nStrongest correlation: `{}` vs `{}` (r = {:.3}).",
                    correlations[i].x, correlations[i].y, correlations[i].r
                );
            }
        }
    }
    s
}

impl LadderReport {
    fn tests_mut_count(&self) -> usize {
        self.rungs.iter().filter(|r| !r.redundant && r.test.is_some()).count()
    }
}

// ---- SVG ----

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

fn svg_open(title: &str, width: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{H}\" viewBox=\"0 0 {width} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        width / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Horizontal bars of AIC change relative to each ladder's baseline.
pub fn aic_svg(report: &LadderReport) -> String {
    let bars: Vec<(String, f64)> = report
        .rungs
        .iter()
        .filter(|r| r.rung > 0)
        .map(|r| (format!("{} {}", r.ladder, r.name), r.delta_aic))
        .collect();
    let height = H.max(MARGIN * 2.0 + 22.0 * bars.len() as f64);
    let mut s = svg_open("AIC change from baseline (lower is better)", W)
        .replace(&format!("height=\"{H}\""), &format!("height=\"{height}\""))
        .replace(&format!("0 0 {W} {H}"), &format!("0 0 {W} {height}"));
    let (lo, hi) = padded_range(bars.iter().map(|b| b.1).chain([0.0]));
    let left = 240.0;
    let x = |v: f64| left + (v - lo) / (hi - lo) * (W - left - 20.0);
    let _ = writeln!(
        s,
        "<line x1=\"{0:.1}\" y1=\"{1}\" x2=\"{0:.1}\" y2=\"{2}\" stroke=\"black\"/>",
        x(0.0),
        MARGIN - 10.0,
        height - MARGIN + 10.0
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = MARGIN + 22.0 * i as f64;
        let (a, b) = (x(0.0).min(x(*v)), x(0.0).max(x(*v)));
        let _ = writeln!(
            s,
            "<rect x=\"{a:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"16\" fill=\"{}\"/>",
            (b - a).max(0.5),
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            left - 6.0,
            y + 12.0,
            escape(label)
        );
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">{:.1}</text>", b + 4.0, y + 12.0, v);
    }
    s.push_str("</svg>\n");
    s
}

/// Observed and predicted condition means with standard-error bars.
pub fn conditions_svg(report: &HoldoutReport) -> String {
    let mut s = svg_open("Held-out amplitude by condition", W);
    let series: Vec<(String, Vec<(f64, f64)>)> = std::iter::once((
        "observed".to_string(),
        report
            .conditions
            .iter()
            .map(|c| (c.observed.mean, c.observed.se))
            .collect(),
    ))
    .chain(report.models.iter().enumerate().map(|(m, model)| {
        (
            model.label.clone(),
            report
                .conditions
                .iter()
                .map(|c| (c.predicted[m].mean, c.predicted[m].se))
                .collect(),
        )
    }))
    .collect();
    let (lo, hi) = padded_range(
        series
            .iter()
            .flat_map(|(_, pts)| pts.iter().flat_map(|(m, se)| [m - se, m + se])),
    );
    let y = |v: f64| H - MARGIN - (v - lo) / (hi - lo) * (H - 2.0 * MARGIN);
    let slot = (W - 2.0 * MARGIN) / Condition::ALL.len() as f64;
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
        H - MARGIN,
        W - MARGIN
    );
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>",
        H - MARGIN
    );
    for (v, label) in [(lo, fmt_tick(lo)), (hi, fmt_tick(hi))] {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>",
            MARGIN - 4.0,
            y(v) + 4.0
        );
    }
    for (ci, c) in report.conditions.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            MARGIN + slot * (ci as f64 + 0.5),
            H - MARGIN + 16.0,
            c.condition
        );
    }
    let k = series.len() as f64;
    for (si, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        for (ci, (m, se)) in pts.iter().enumerate() {
            let cx = MARGIN + slot * (ci as f64 + (si as f64 + 1.0) / (k + 1.0));
            let _ = writeln!(
                s,
                "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"{color}\"/>",
                y(m - se),
                y(m + se)
            );
            let _ = writeln!(
                s,
                "<circle cx=\"{cx:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{color}\"/>",
                y(*m)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{}</text>",
            W - MARGIN - 120.0,
            MARGIN + 14.0 * si as f64,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    format!("{v:.2}")
}

/// One scatter panel per correlation report, coloured by condition.
pub fn scatter_svg(reports: &[CorrelationReport]) -> String {
    let panel = W;
    let width = panel * reports.len().max(1) as f64;
    let mut s = svg_open("Stimulus-level predictor correlation", width);
    for (pi, rep) in reports.iter().enumerate() {
        let ox = panel * pi as f64;
        let (xlo, xhi) = padded_range(rep.scatter.iter().map(|p| p.x));
        let (ylo, yhi) = padded_range(rep.scatter.iter().map(|p| p.y));
        let px = |v: f64| ox + MARGIN + (v - xlo) / (xhi - xlo) * (panel - 2.0 * MARGIN);
        let py = |v: f64| H - MARGIN - (v - ylo) / (yhi - ylo) * (H - 2.0 * MARGIN);
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{MARGIN}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
            ox + MARGIN,
            panel - 2.0 * MARGIN,
            H - 2.0 * MARGIN
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{} (r = {:.3})</text>",
            ox + panel / 2.0,
            MARGIN - 8.0,
            escape(&format!("{} vs {}", rep.y, rep.x)),
            rep.r
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            ox + panel / 2.0,
            H - MARGIN + 30.0,
            escape(&rep.x)
        );
        for p in &rep.scatter {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2\" fill=\"{}\" fill-opacity=\"0.6\"/>",
                px(p.x),
                py(p.y),
                PALETTE[p.condition.index() % PALETTE.len()]
            );
        }
        for c in Condition::ALL {
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{}\">{c}</text>",
                ox + panel - MARGIN + 4.0,
                MARGIN + 14.0 * (c.index() as f64 + 1.0),
                PALETTE[c.index() % PALETTE.len()]
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

// ---- manifest ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun an analysis: input digests, seed, tool
/// version and every setting including defaults. Deliberately free of
/// timestamps and host details so reruns produce identical manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub settings: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool: "n400".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: None,
            inputs: Vec::new(),
            settings: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> io::Result<()> {
        self.inputs.push(InputDigest {
            role: role.into(),
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.settings.insert(key.into(), value.to_string());
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes report files into a directory, recording each name for the manifest.
pub struct BundleWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl BundleWriter {
    pub fn create(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Create `name` and hand a buffered writer to `fill`.
    pub fn file<F>(&mut self, name: &str, fill: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&mut io::BufWriter<fs::File>) -> Result<(), PipelineError>,
    {
        let mut w = io::BufWriter::new(fs::File::create(self.dir.join(name))?);
        fill(&mut w)?;
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<(), PipelineError> {
        self.file(name, |w| Ok(w.write_all(content.as_bytes())?))
    }

    pub fn ladder(&mut self, report: &LadderReport) -> Result<(), PipelineError> {
        self.file("ladder.csv", |w| write_ladder_csv(w, report))?;
        self.text("fig_aic.svg", &aic_svg(report))
    }

    pub fn holdout(&mut self, report: &HoldoutReport) -> Result<(), PipelineError> {
        self.file("contrasts.csv", |w| {
            write_contrasts_csv(w, &report.contrasts, report.fdr.as_str())
        })?;
        self.file("conditions.csv", |w| write_conditions_csv(w, report))?;
        self.text("fig_conditions.svg", &conditions_svg(report))
    }

    pub fn correlations(&mut self, reports: &[CorrelationReport]) -> Result<(), PipelineError> {
        self.file("correlation.csv", |w| write_correlation_csv(w, reports))?;
        self.file("scatter.csv", |w| write_scatter_csv(w, reports))?;
        self.text("fig_scatter.svg", &scatter_svg(reports))
    }

    /// Write `manifest.json` listing everything written so far.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<Vec<String>, PipelineError> {
        manifest.outputs = self.written.clone();
        manifest.outputs.push("manifest.json".into());
        let json = serde_json::to_string_pretty(&manifest)?;
        self.text("manifest.json", &(json + "\n"))?;
        Ok(self.written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(-1234.25), "-1234.25");
        assert_eq!(fmt_num(1e-300), "1e-300");
        assert_eq!(fmt_num(2.5e-7), "2.5e-7");
        assert_eq!(fmt_num(f64::NAN), "NA");
        for v in [1e-300, 0.1234567890123, 3.3e12, -7.0e-5] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn manifest_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let mut m = Manifest::new("test");
        m.input("stimuli", &p).unwrap();
        m.set("fdr", "by");
        let mut b = BundleWriter::create(&dir.path().join("out")).unwrap();
        b.text("a.md", "hi\n").unwrap();
        let written = b.finish(m).unwrap();
        assert_eq!(written, vec!["a.md", "manifest.json"]);
        let back: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
        assert_eq!(back.outputs, vec!["a.md", "manifest.json"]);
        assert_eq!(back.settings["fdr"], "by");
    }
}
