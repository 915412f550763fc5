//! CSV tables and SVG plots computed from result files only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use super::records::{load_results, ResultRecord, RunData};
use super::HarnessError;
use crate::simulate::{EpisodeTrace, Severity};

/// Two parameter vectors closer than this in the unit cube count as the same attack.
pub const UNIQUE_TOL: f64 = 1e-6;

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn severity_color(s: Severity) -> &'static str {
    match s {
        Severity::Safe => "#4caf50",
        Severity::OppositeLane => "#ffc107",
        Severity::Offroad => "#ff7043",
        Severity::Collision => "#b71c1c",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SeverityCounts {
    pub safe: usize,
    pub opposite_lane: usize,
    pub offroad: usize,
    pub collision: usize,
    pub failed: usize,
}

impl SeverityCounts {
    fn add(&mut self, r: &ResultRecord) {
        match r.severity {
            Some(Severity::Safe) => self.safe += 1,
            Some(Severity::OppositeLane) => self.opposite_lane += 1,
            Some(Severity::Offroad) => self.offroad += 1,
            Some(Severity::Collision) => self.collision += 1,
            None => self.failed += 1,
        }
    }

    pub fn evaluated(&self) -> usize {
        self.safe + self.opposite_lane + self.offroad + self.collision
    }

    pub fn get(&self, s: Severity) -> usize {
        match s {
            Severity::Safe => self.safe,
            Severity::OppositeLane => self.opposite_lane,
            Severity::Offroad => self.offroad,
            Severity::Collision => self.collision,
        }
    }

    /// Percentage of evaluated episodes with severity `s`.
    pub fn percent(&self, s: Severity) -> f64 {
        let n = self.evaluated();
        if n == 0 {
            0.0
        } else {
            100.0 * self.get(s) as f64 / n as f64
        }
    }
}

/// Everything `emit_report` computed, keyed the same way as the CSV rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    /// (scenario, pattern) -> counts.
    pub severity: BTreeMap<(String, String), SeverityCounts>,
    /// (scenario, pattern, strategy) -> cumulative unique successes after each iteration.
    pub curves: BTreeMap<(String, String, String), Vec<usize>>,
    /// (scenario, objective) -> counts.
    pub objectives: BTreeMap<(String, String), SeverityCounts>,
    /// (scenario, command, target) -> (runs, evaluated, successes, runs with a success).
    pub hijack: BTreeMap<(String, String, String), (usize, usize, usize, usize)>,
    pub written: Vec<PathBuf>,
    /// Files that could not be used, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

fn is_success(r: &ResultRecord) -> bool {
    r.severity.is_some_and(|s| s >= Severity::OppositeLane)
}

/// Cumulative count of distinct successful parameter vectors after each of
/// the first `len` iterations, pooled over `runs` in order.
pub fn unique_success_curve(runs: &[&RunData], len: usize) -> Vec<usize> {
    let mut seen: Vec<&[f64]> = Vec::new();
    let mut curve = Vec::with_capacity(len);
    for it in 0..len {
        for run in runs {
            let Some(r) = run.records.get(it) else { continue };
            if !is_success(r) {
                continue;
            }
            let dup = seen.iter().any(|u| {
                u.len() == r.unit.len()
                    && u.iter().zip(&r.unit).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= UNIQUE_TOL
            });
            if !dup {
                seen.push(&r.unit);
            }
        }
        curve.push(seen.len());
    }
    curve
}

fn write_file(path: &Path, text: &str, written: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))?;
    written.push(path.to_path_buf());
    Ok(())
}

/// Read result files and write the report tables and plots into `out`.
/// Unreadable files are skipped and listed in [`Report::skipped`].
pub fn emit_report(files: &[PathBuf], out: &Path) -> Result<Report, HarnessError> {
    if files.is_empty() {
        return Err(HarnessError::Config("no result files given".into()));
    }
    let mut report = Report::default();
    let mut files = files.to_vec();
    files.sort();
    files.dedup();
    let mut runs = Vec::new();
    for f in &files {
        match load_results(f) {
            Ok(run) => runs.push(run),
            Err(e) => report.skipped.push((f.clone(), e.to_string())),
        }
    }
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;

    for run in &runs {
        let c = &run.header.config;
        let sev = report
            .severity
            .entry((c.scenario.to_string(), c.pattern.to_string()))
            .or_default();
        run.records.iter().for_each(|r| sev.add(r));
        let obj = report
            .objectives
            .entry((c.scenario.to_string(), c.objective.to_string()))
            .or_default();
        run.records.iter().for_each(|r| obj.add(r));
        if let Some(t) = c.target {
            let row = report
                .hijack
                .entry((c.scenario.to_string(), c.command().name().to_string(), t.name().to_string()))
                .or_default();
            let successes = run.records.iter().filter(|r| r.hijack.is_some_and(|h| h.success)).count();
            row.0 += 1;
            row.1 += run.records.iter().filter(|r| !r.is_failure()).count();
            row.2 += successes;
            row.3 += usize::from(successes > 0);
        }
    }

    let mut groups: BTreeMap<(String, String, String), Vec<&RunData>> = BTreeMap::new();
    for run in &runs {
        let c = &run.header.config;
        groups
            .entry((c.scenario.to_string(), c.pattern.to_string(), c.strategy.to_string()))
            .or_default()
            .push(run);
    }
    let len = runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
    for (key, group) in &groups {
        report.curves.insert(key.clone(), unique_success_curve(group, len));
    }

    let mut written = Vec::new();
    write_file(&out.join("severity.csv"), &severity_csv(&report), &mut written)?;
    write_file(&out.join("severity.svg"), &severity_svg(&report), &mut written)?;
    write_file(&out.join("successes.csv"), &curves_csv(&report), &mut written)?;
    write_file(&out.join("successes.svg"), &curves_svg(&report), &mut written)?;
    write_file(&out.join("objectives.csv"), &objectives_csv(&report), &mut written)?;
    write_file(&out.join("hijack.csv"), &hijack_csv(&report), &mut written)?;

    let paths_dir = out.join("paths");
    fs::create_dir_all(&paths_dir).map_err(|e| HarnessError::io(&paths_dir, e))?;
    let mut paths_csv = String::from("run,series,frame,x,y\n");
    for run in &runs {
        match overlay(run) {
            Ok(series) => {
                for (label, pts) in &series {
                    for (k, (x, y)) in pts.iter().enumerate() {
                        let _ = writeln!(paths_csv, "{},{label},{k},{x},{y}", run.header.name);
                    }
                }
                let svg = overlay_svg(&run.header.name, &series);
                write_file(&paths_dir.join(format!("{}.svg", run.header.name)), &svg, &mut written)?;
            }
            Err(e) => report.skipped.push((run.path.clone(), format!("path overlay: {e}"))),
        }
    }
    write_file(&out.join("paths.csv"), &paths_csv, &mut written)?;
    report.written = written;
    Ok(report)
}

fn severity_csv(r: &Report) -> String {
    let mut s = String::from("scenario,pattern,evaluated,safe,opposite_lane,offroad,collision,failed\n");
    for ((sc, pat), c) in &r.severity {
        let _ = writeln!(
            s,
            "{sc},{pat},{},{},{},{},{},{}",
            c.evaluated(),
            c.safe,
            c.opposite_lane,
            c.offroad,
            c.collision,
            c.failed
        );
    }
    s
}

fn curves_csv(r: &Report) -> String {
    let mut s = String::from("scenario,pattern,strategy,iteration,unique_successes\n");
    for ((sc, pat, st), curve) in &r.curves {
        for (i, v) in curve.iter().enumerate() {
            let _ = writeln!(s, "{sc},{pat},{st},{i},{v}");
        }
    }
    s
}

fn objectives_csv(r: &Report) -> String {
    let mut s = String::from(
        "scenario,objective,evaluated,safe_pct,collision_pct,offroad_pct,opposite_lane_pct,any_infraction_pct\n",
    );
    for ((sc, obj), c) in &r.objectives {
        let any = c.percent(Severity::OppositeLane) + c.percent(Severity::Offroad) + c.percent(Severity::Collision);
        let _ = writeln!(
            s,
            "{sc},{obj},{},{},{},{},{},{}",
            c.evaluated(),
            c.percent(Severity::Safe),
            c.percent(Severity::Collision),
            c.percent(Severity::Offroad),
            c.percent(Severity::OppositeLane),
            any
        );
    }
    s
}

fn hijack_csv(r: &Report) -> String {
    let mut s = String::from("scenario,command,target,runs,evaluated,successes,success_pct,runs_with_success\n");
    for ((sc, cmd, tgt), (runs, n, ok, runs_ok)) in &r.hijack {
        let pct = if *n == 0 { 0.0 } else { 100.0 * *ok as f64 / *n as f64 };
        let _ = writeln!(s, "{sc},{cmd},{tgt},{runs},{n},{ok},{pct},{runs_ok}");
    }
    s
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn severity_svg(r: &Report) -> String {
    let row_h = 22.0;
    let left = 220.0;
    let bar_w = 400.0;
    let h = 40.0 + row_h * r.severity.len() as f64 + 30.0;
    let mut s = svg_open(left + bar_w + 20.0, h);
    let _ = writeln!(s, "<text x=\"10\" y=\"18\">infraction severity (% of evaluated episodes)</text>");
    for (i, ((sc, pat), c)) in r.severity.iter().enumerate() {
        let y = 30.0 + i as f64 * row_h;
        let _ = writeln!(s, "<text x=\"10\" y=\"{}\">{} / {}</text>", y + 14.0, escape(sc), escape(pat));
        let mut x = left;
        for sev in Severity::ALL {
            let w = bar_w * c.percent(sev) / 100.0;
            if w > 0.0 {
                let _ = writeln!(
                    s,
                    "<rect x=\"{x:.2}\" y=\"{y}\" width=\"{w:.2}\" height=\"{}\" fill=\"{}\"><title>{} {}</title></rect>",
                    row_h - 4.0,
                    severity_color(sev),
                    sev.name(),
                    c.get(sev)
                );
            }
            x += w;
        }
    }
    let y = h - 12.0;
    for (k, sev) in Severity::ALL.iter().enumerate() {
        let x = 10.0 + k as f64 * 120.0;
        let _ = writeln!(s, "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>", y - 9.0, severity_color(*sev));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{y}\">{}</text>", x + 14.0, sev.name());
    }
    s.push_str("</svg>\n");
    s
}

fn curves_svg(r: &Report) -> String {
    let (w, h) = (640.0, 400.0);
    let (l, rt, t, b) = (50.0, 200.0, 20.0, 40.0);
    let len = r.curves.values().map(Vec::len).max().unwrap_or(0).max(1);
    let ymax = r.curves.values().flat_map(|c| c.iter().copied()).max().unwrap_or(0).max(1);
    let px = |i: usize| l + (w - l - rt) * i as f64 / (len.max(2) - 1) as f64;
    let py = |v: usize| h - b - (h - t - b) * v as f64 / ymax as f64;
    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<path d=\"M{l} {t} V{} H{}\" stroke=\"black\" fill=\"none\"/>",
        h - b,
        w - rt
    );
    let _ = writeln!(s, "<text x=\"{l}\" y=\"{}\">0</text>", h - b + 14.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", w - rt, h - b + 14.0, len);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{ymax}</text>", l - 4.0, t + 8.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">iteration</text>", (l + w - rt) / 2.0, h - 8.0);
    let _ = writeln!(s, "<text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">unique successful attacks</text>", h / 2.0, h / 2.0);
    for (k, ((sc, pat, st), curve)) in r.curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        for (i, v) in curve.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if i == 0 { "M" } else { " L" }, px(i), py(*v));
        }
        if curve.is_empty() {
            let _ = write!(d, "M{l} {:.2} H{}", py(0), w - rt);
        }
        let _ = writeln!(s, "<path d=\"{d}\" stroke=\"{color}\" fill=\"none\" stroke-width=\"1.5\"/>");
        let y = t + 14.0 * k as f64 + 10.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{y}\" fill=\"{color}\">{} {} {}</text>",
            w - rt + 8.0,
            escape(sc),
            escape(pat),
            escape(st)
        );
    }
    s.push_str("</svg>\n");
    s
}

type Series = Vec<(String, Vec<(f64, f64)>)>;

fn read_episode(path: &Path) -> Result<EpisodeTrace, String> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    EpisodeTrace::read_jsonl(BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))
}

fn path_of(t: &EpisodeTrace) -> Vec<(f64, f64)> {
    let mut p = t.positions();
    p.push((t.final_state.x, t.final_state.y));
    p
}

/// Baseline, target (for hijack runs), best-scoring and most severe episode paths.
fn overlay(run: &RunData) -> Result<Series, String> {
    let dir = run.dir();
    let mut series = vec![("baseline".to_string(), path_of(&read_episode(&dir.join(&run.header.baseline))?))];
    if let Some(t) = &run.header.target {
        series.push(("target".to_string(), path_of(&read_episode(&dir.join(t))?)));
    }
    let best = run.summary.as_ref().and_then(|s| s.best_iteration).or_else(|| {
        run.records
            .iter()
            .filter_map(|r| r.score.map(|s| (r.iteration, s)))
            .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                Some(a) if a.1 >= x.1 => Some(a),
                _ => Some(x),
            })
            .map(|x| x.0)
    });
    let worst = run
        .records
        .iter()
        .filter(|r| r.severity.is_some())
        .fold(None, |acc: Option<&ResultRecord>, r| match acc {
            Some(a) if a.severity >= r.severity => Some(a),
            _ => Some(r),
        });
    for (label, rec) in [("best", best.and_then(|i| run.records.get(i))), ("most_severe", worst)] {
        if let Some(ep) = rec.and_then(|r| r.episode.as_ref()) {
            series.push((label.to_string(), path_of(&read_episode(&dir.join(ep))?)));
        }
    }
    Ok(series)
}

fn overlay_svg(name: &str, series: &Series) -> String {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad = 5.0;
    let span = (x1 - x0).max(y1 - y0).max(1.0) + 2.0 * pad;
    let size = 480.0;
    let k = size / span;
    let mx = |x: f64| (x - x0 + pad) * k;
    let my = |y: f64| size - (y - y0 + pad) * k;
    let mut s = svg_open(size, size + 40.0);
    let _ = writeln!(s, "<text x=\"8\" y=\"{}\">{}</text>", size + 16.0, escape(name));
    for (i, (label, p)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (j, (x, y)) in p.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if j == 0 { "M" } else { " L" }, mx(*x), my(*y));
        }
        let dash = if label == "baseline" || label == "target" { " stroke-dasharray=\"6 3\"" } else { "" };
        let _ = writeln!(s, "<path d=\"{d}\" stroke=\"{color}\" fill=\"none\" stroke-width=\"1.5\"{dash}/>");
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{label}</text>",
            8.0 + 90.0 * i as f64,
            size + 32.0
        );
    }
    s.push_str("</svg>\n");
    s
}
