//! Stage orchestration: simulate, qc, assoc, select, train, evaluate, report.
//!
//! Each stage writes into `<out>/<stage>.partial/` and renames it to
//! `<out>/<stage>/` only after every file, including `manifest.tsv`, has
//! been written. TSV outputs start with a `#` provenance line.

pub mod config;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use config::{parse_override, threshold_label, ModelChoice, PipelineConfig};

use crate::assoc::{self, AssocResult, FitStatus};
use crate::error::Error;
use crate::genotype::{read_bed_bim_fam, write_bed_bim_fam, GenotypeMatrix};
use crate::metrics::{f1_optimal_threshold, roc_export, roc_tsv, MetricsReport};
use crate::nn::{self, Dataset};
use crate::qc::run_qc;
use crate::synth::generate;

/// Failure of a pipeline command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    Usage(String),
    /// Unreadable, malformed or degenerate data (exit 2).
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub const STAGES: [&str; 7] = ["simulate", "qc", "assoc", "select", "train", "evaluate", "report"];

/// Resolved configuration plus the provenance line stamped on outputs.
pub struct Context {
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
    pub provenance: String,
}

impl Context {
    pub fn new(config: PipelineConfig) -> Self {
        let provenance = format!(
            "# gwasnet {} config={} seed={}",
            env!("CARGO_PKG_VERSION"),
            config.hash(),
            config.seed
        );
        Context {
            out_dir: config.out_dir.clone(),
            config,
            provenance,
        }
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out_dir.join(stage)
    }

    fn table(&self, body: &str) -> Vec<u8> {
        format!("{}\n{body}", self.provenance).into_bytes()
    }
}

struct StageWriter {
    partial: PathBuf,
    target: PathBuf,
    files: Vec<String>,
    committed: bool,
}

impl StageWriter {
    fn begin(ctx: &Context, stage: &str) -> CliResult<Self> {
        let target = ctx.stage_dir(stage);
        let partial = ctx.out_dir.join(format!("{stage}.partial"));
        if partial.exists() {
            fs::remove_dir_all(&partial).map_err(|e| io_err(&partial, e))?;
        }
        fs::create_dir_all(&partial).map_err(|e| io_err(&partial, e))?;
        Ok(StageWriter {
            partial,
            target,
            files: Vec::new(),
            committed: false,
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.partial.join(name)
    }

    fn write(&mut self, name: &str, data: &[u8]) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, data).map_err(|e| io_err(&p, e))
    }

    fn commit(mut self, ctx: &Context) -> CliResult<PathBuf> {
        let mut names = self.files.clone();
        names.sort();
        names.dedup();
        let mut body = String::from("file\tbytes\tsha256\n");
        for n in &names {
            let p = self.partial.join(n);
            let data = fs::read(&p).map_err(|e| io_err(&p, e))?;
            let _ = writeln!(body, "{n}\t{}\t{}", data.len(), hex::encode(Sha256::digest(&data)));
        }
        let manifest = ctx.table(&body);
        self.write("manifest.tsv", &manifest)?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| io_err(&self.target, e))?;
        }
        fs::rename(&self.partial, &self.target).map_err(|e| io_err(&self.target, e))?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for StageWriter {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.partial);
        }
    }
}

fn read_matrix(prefix: &Path) -> CliResult<GenotypeMatrix> {
    log::info!("reading {}.bed/.bim/.fam", prefix.display());
    Ok(read_bed_bim_fam(prefix)?)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Non-comment lines of a TSV written by this pipeline.
fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty())
}

pub fn cmd_simulate(ctx: &Context) -> CliResult<PathBuf> {
    let spec = ctx.config.simulate.spec(ctx.config.seed);
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    log::info!("simulating {} samples x {} variants", spec.n_samples, spec.n_variants);
    let (matrix, truth) = generate(&spec)?;
    let mut w = StageWriter::begin(ctx, "simulate")?;
    let prefix = w.path("cohort");
    write_bed_bim_fam(&matrix, &prefix)?;
    w.files.pop();
    for ext in ["bed", "bim", "fam"] {
        w.files.push(format!("cohort.{ext}"));
    }
    w.write("truth.tsv", &ctx.table(&truth.to_tsv()))?;
    w.commit(ctx)
}

pub fn cmd_qc(ctx: &Context, bfile: &Path) -> CliResult<PathBuf> {
    let matrix = read_matrix(bfile)?;
    let (kept, report) = run_qc(&matrix, &ctx.config.qc)?;
    log::info!(
        "qc kept {} of {} samples and {} of {} variants",
        kept.n_samples(),
        matrix.n_samples(),
        kept.n_variants(),
        matrix.n_variants()
    );
    let mut w = StageWriter::begin(ctx, "qc")?;
    let prefix = w.path("qc");
    write_bed_bim_fam(&kept, &prefix)?;
    w.files.pop();
    for ext in ["bed", "bim", "fam"] {
        w.files.push(format!("qc.{ext}"));
    }
    w.write("qc_report.tsv", &ctx.table(&report.to_tsv()))?;
    w.commit(ctx)
}

pub fn cmd_assoc(ctx: &Context, bfile: &Path) -> CliResult<PathBuf> {
    let matrix = read_matrix(bfile)?;
    if matrix.phenotypes().iter().all(Option::is_none) {
        return Err(CliError::Data(format!(
            "{}.fam: no case/control phenotypes",
            bfile.display()
        )));
    }
    let (results, summary) = assoc::scan(&matrix, ctx.config.family_alpha)?;
    log::info!(
        "scanned {} variants, lambda_gc {:.4}, bonferroni {:.3e}",
        results.len(),
        summary.lambda_gc,
        summary.bonferroni_alpha
    );
    let mut body = String::new();
    let _ = writeln!(body, "# lambda_gc\t{}", summary.lambda_gc);
    let _ = writeln!(body, "# m_tested\t{}", summary.m_tested);
    let _ = writeln!(body, "# bonferroni_alpha\t{}", summary.bonferroni_alpha);
    body.push_str(&assoc::assoc_tsv(&results, matrix.variants()));
    let mut w = StageWriter::begin(ctx, "assoc")?;
    w.write("assoc.tsv", &ctx.table(&body))?;
    let manhattan = assoc::manhattan_export(&results, matrix.variants(), summary.bonferroni_alpha);
    w.write("manhattan.tsv", &ctx.table(&manhattan))?;
    w.commit(ctx)
}

fn na_f64(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

/// Parse the association table written by `assoc`.
pub fn read_assoc_tsv(path: &Path) -> CliResult<Vec<AssocResult>> {
    let text = read_text(path)?;
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut lines = data_lines(&text);
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split('\t').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or_else(|| bad(format!("missing column {name}")));
    let (c_snp, c_n, c_or, c_stat, c_p, c_pgc, c_status) =
        (col("SNP")?, col("NMISS")?, col("OR")?, col("STAT")?, col("P")?, col("P_GC")?, col("STATUS")?);
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != header.len() {
            return Err(bad(format!("row {}: {} fields, expected {}", k + 1, f.len(), header.len())));
        }
        let status = FitStatus::parse(f[c_status]).ok_or_else(|| bad(format!("row {}: unknown status", k + 1)))?;
        let odds_ratio = na_f64(f[c_or]);
        out.push(AssocResult {
            variant_id: f[c_snp].to_string(),
            n_used: f[c_n].parse().map_err(|_| bad(format!("row {}: bad NMISS", k + 1)))?,
            beta0: f64::NAN,
            beta1: odds_ratio.ln(),
            se1: f64::NAN,
            odds_ratio,
            chi2_wald: na_f64(f[c_stat]),
            p: na_f64(f[c_p]),
            p_gc: na_f64(f[c_pgc]),
            status,
        });
    }
    Ok(out)
}

fn selection_file(t: f64) -> String {
    format!("snps_{}.txt", threshold_label(t))
}

pub fn cmd_select(ctx: &Context, assoc_file: &Path) -> CliResult<PathBuf> {
    let results = read_assoc_tsv(assoc_file)?;
    let mut w = StageWriter::begin(ctx, "select")?;
    let mut summary = String::from("threshold\tn_selected\n");
    for &t in &ctx.config.thresholds {
        let ids = assoc::select_snps(&results, t, ctx.config.raw_p);
        log::info!("threshold {t:e}: {} SNPs", ids.len());
        let _ = writeln!(summary, "{}\t{}", threshold_label(t), ids.len());
        let mut body = ids.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        w.write(&selection_file(t), &ctx.table(&body))?;
    }
    w.write("selection.tsv", &ctx.table(&summary))?;
    w.commit(ctx)
}

pub fn read_selection(path: &Path) -> CliResult<Vec<String>> {
    Ok(data_lines(&read_text(path)?).map(|l| l.trim().to_string()).collect())
}

/// Samples with a phenotype, features = the named variants in the given
/// order (NaN for missing calls). Also returns the sample row indices.
pub fn build_dataset(matrix: &GenotypeMatrix, ids: &[String]) -> CliResult<(Dataset, Vec<usize>)> {
    let index = matrix.variant_index();
    let cols: Vec<usize> = ids
        .iter()
        .map(|id| index.get(id.as_str()).copied().ok_or_else(|| Error::UnknownId(id.clone())))
        .collect::<Result<_, _>>()?;
    let pheno = matrix.phenotypes();
    let rows: Vec<usize> = (0..matrix.n_samples()).filter(|&i| pheno[i].is_some()).collect();
    let p = cols.len();
    let mut x = vec![0.0; rows.len() * p];
    let mut codes = vec![0u8; matrix.n_samples()];
    for (c, &j) in cols.iter().enumerate() {
        matrix.decode_variant_into(j, &mut codes);
        for (r, &i) in rows.iter().enumerate() {
            x[r * p + c] = if codes[i] < 3 { codes[i] as f64 } else { f64::NAN };
        }
    }
    let y = rows.iter().map(|&i| pheno[i].unwrap()).collect();
    Ok((
        Dataset {
            n: rows.len(),
            p,
            x,
            y,
            feature_names: ids.to_vec(),
        },
        rows,
    ))
}

const PARTS: [&str; 3] = ["train", "valid", "test"];

fn split_tsv(matrix: &GenotypeMatrix, rows: &[usize], split: &nn::Split) -> String {
    let mut part = vec![""; rows.len()];
    for (name, idx) in PARTS.iter().zip([&split.train, &split.valid, &split.test]) {
        for &r in idx {
            part[r] = name;
        }
    }
    let mut s = String::from("sample\tpartition\n");
    for (r, &i) in rows.iter().enumerate() {
        let _ = writeln!(s, "{}\t{}", matrix.samples()[i].sample_id, part[r]);
    }
    s
}

pub fn cmd_train(ctx: &Context, bfile: &Path, select_dir: &Path) -> CliResult<PathBuf> {
    let matrix = read_matrix(bfile)?;
    let mut w = StageWriter::begin(ctx, "train")?;
    for (k, &t) in ctx.config.thresholds.iter().enumerate() {
        let label = threshold_label(t);
        let ids = read_selection(&select_dir.join(selection_file(t)))?;
        let (data, rows) = build_dataset(&matrix, &ids)?;
        let cfg = ctx.config.train_config(k);
        let split = if data.p == 0 {
            // nothing to learn from: evaluate falls back to the training prevalence
            log::warn!("threshold {label}: no SNPs selected, no model trained");
            nn::split_indices(data.n, cfg.split, cfg.seed)
        } else {
            log::info!("threshold {label}: training {} on {} SNPs", cfg.preset, data.p);
            let out = nn::train(&data, &cfg)?;
            let model_path = w.path(&format!("model_{label}.bin"));
            nn::save_model(&out.model, &model_path)?;
            w.write(&format!("trainlog_{label}.tsv"), &ctx.table(&out.log.to_tsv()))?;
            out.split
        };
        w.write(&format!("split_{label}.tsv"), &ctx.table(&split_tsv(&matrix, &rows, &split)))?;
    }
    w.commit(ctx)
}

fn read_split(path: &Path, matrix: &GenotypeMatrix, rows: &[usize]) -> CliResult<[Vec<usize>; 3]> {
    let text = read_text(path)?;
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let ids = matrix.sample_index();
    let pos: HashMap<usize, usize> = rows.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    let mut parts: [Vec<usize>; 3] = Default::default();
    for line in data_lines(&text).skip(1) {
        let (id, part) = line.split_once('\t').ok_or_else(|| bad(format!("malformed row {line:?}")))?;
        let i = ids.get(id).ok_or_else(|| bad(format!("unknown sample {id}")))?;
        let r = *pos.get(i).ok_or_else(|| bad(format!("sample {id} has no phenotype")))?;
        let k = PARTS.iter().position(|p| *p == part).ok_or_else(|| bad(format!("unknown partition {part}")))?;
        parts[k].push(r);
    }
    Ok(parts)
}

pub fn cmd_evaluate(ctx: &Context, bfile: &Path, select_dir: &Path, train_dir: &Path) -> CliResult<PathBuf> {
    let matrix = read_matrix(bfile)?;
    let positive = ctx.config.positive_class;
    let mut w = StageWriter::begin(ctx, "evaluate")?;
    for &t in &ctx.config.thresholds {
        let label = threshold_label(t);
        let ids = read_selection(&select_dir.join(selection_file(t)))?;
        let (data, rows) = build_dataset(&matrix, &ids)?;
        let [train_rows, valid_rows, test_rows] = read_split(&train_dir.join(format!("split_{label}.tsv")), &matrix, &rows)?;
        let predict: Box<dyn Fn(&[usize]) -> CliResult<Vec<f64>>> = if data.p == 0 {
            let cases = train_rows.iter().filter(|&&r| data.y[r] == 1).count();
            let prevalence = cases as f64 / train_rows.len().max(1) as f64;
            Box::new(move |r: &[usize]| Ok(vec![prevalence; r.len()]))
        } else {
            let model = nn::load_model(&train_dir.join(format!("model_{label}.bin")))?;
            let data = &data;
            Box::new(move |r: &[usize]| Ok(nn::predict_proba(&model, data, r)?))
        };
        let labels = |r: &[usize]| -> Vec<u8> { r.iter().map(|&i| data.y[i]).collect() };
        let pv = predict(&valid_rows)?;
        let pt = predict(&test_rows)?;
        // the decision threshold is tuned on validation and reused on test
        let cut = f1_optimal_threshold(&labels(&valid_rows), &pv, positive);
        let mut preds = String::from("sample\tpartition\tlabel\tprob_case\n");
        for (part, (r, p)) in ["valid", "test"].iter().zip([(&valid_rows, &pv), (&test_rows, &pt)]) {
            let y = labels(r);
            let m = MetricsReport::compute(&y, p, cut, positive);
            log::info!("threshold {label} {part}: AUC {:.4}", m.auc);
            w.write(&format!("metrics_{part}_{label}.tsv"), &ctx.table(&m.to_tsv()))?;
            let roc = roc_export(&y, p)
                .ok_or_else(|| CliError::Data(format!("threshold {label}: {part} split holds a single class")))?;
            w.write(&format!("roc_{part}_{label}.tsv"), &ctx.table(&roc_tsv(&roc)))?;
            for (k, &row) in r.iter().enumerate() {
                let _ = writeln!(
                    preds,
                    "{}\t{part}\t{}\t{}",
                    matrix.samples()[rows[row]].sample_id,
                    y[k],
                    p[k]
                );
            }
        }
        w.write(&format!("predictions_{label}.tsv"), &ctx.table(&preds))?;
    }
    w.commit(ctx)
}

pub const REPORT_HEADER: &str = "threshold\tSens\tSpec\tGini\tLogLoss\tAUC\tMSE";

/// Parse a metrics file into (Sens, Spec, Gini, LogLoss, AUC, MSE).
pub fn read_metrics(path: &Path) -> CliResult<[f64; 6]> {
    let text = read_text(path)?;
    let bad = || CliError::Data(format!("{}: malformed metrics file", path.display()));
    let mut lines = data_lines(&text);
    let header: Vec<&str> = lines.next().ok_or_else(bad)?.split('\t').collect();
    let row: Vec<&str> = lines.next().ok_or_else(bad)?.split('\t').collect();
    let mut out = [0.0; 6];
    for (k, name) in ["Sens", "Spec", "Gini", "LogLoss", "AUC", "MSE"].iter().enumerate() {
        let c = header.iter().position(|h| h == name).ok_or_else(bad)?;
        out[k] = na_f64(row.get(c).ok_or_else(bad)?);
    }
    Ok(out)
}

pub fn cmd_report(ctx: &Context, run_dir: &Path) -> CliResult<PathBuf> {
    let eval_dir = run_dir.join("evaluate");
    let present: Vec<f64> = ctx
        .config
        .thresholds
        .iter()
        .copied()
        .filter(|&t| eval_dir.join(format!("metrics_test_{}.tsv", threshold_label(t))).exists())
        .collect();
    if present.is_empty() {
        return Err(CliError::Data(format!("{}: no evaluation outputs found", eval_dir.display())));
    }
    let manhattan_src = run_dir.join("assoc").join("manhattan.tsv");
    let manhattan = fs::read(&manhattan_src).map_err(|e| io_err(&manhattan_src, e))?;
    let mut w = StageWriter::begin(ctx, "report")?;
    for part in ["valid", "test"] {
        let mut table = format!("{REPORT_HEADER}\n");
        for &t in &present {
            let label = threshold_label(t);
            let m = read_metrics(&eval_dir.join(format!("metrics_{part}_{label}.tsv")))?;
            let _ = writeln!(table, "{label}\t{}\t{}\t{}\t{}\t{}\t{}", m[0], m[1], m[2], m[3], m[4], m[5]);
        }
        let name = if part == "valid" { "validation_table.tsv" } else { "test_table.tsv" };
        w.write(name, &ctx.table(&table))?;
    }
    for &t in &present {
        let label = threshold_label(t);
        let src = eval_dir.join(format!("roc_test_{label}.tsv"));
        let data = fs::read(&src).map_err(|e| io_err(&src, e))?;
        w.write(&format!("roc_{label}.tsv"), &data)?;
    }
    w.write("manhattan.tsv", &manhattan)?;
    w.commit(ctx)
}

/// Default genotype input of a stage when no `--bfile` is given.
pub fn default_bfile(ctx: &Context, stage: &str) -> PathBuf {
    match stage {
        "qc" => ctx
            .config
            .input_bfile
            .clone()
            .unwrap_or_else(|| ctx.stage_dir("simulate").join("cohort")),
        _ => ctx.stage_dir("qc").join("qc"),
    }
}

/// Every stage in order. Simulation is skipped when `input.bfile` is set.
pub fn cmd_run(ctx: &Context) -> CliResult<()> {
    if ctx.config.input_bfile.is_none() {
        cmd_simulate(ctx)?;
    }
    cmd_qc(ctx, &default_bfile(ctx, "qc"))?;
    let bfile = default_bfile(ctx, "assoc");
    cmd_assoc(ctx, &bfile)?;
    cmd_select(ctx, &ctx.stage_dir("assoc").join("assoc.tsv"))?;
    cmd_train(ctx, &bfile, &ctx.stage_dir("select"))?;
    cmd_evaluate(ctx, &bfile, &ctx.stage_dir("select"), &ctx.stage_dir("train"))?;
    cmd_report(ctx, &ctx.out_dir)?;
    Ok(())
}
