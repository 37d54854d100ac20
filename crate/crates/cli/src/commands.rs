use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ats_core::ats::ats_run;
use ats_core::harness::{
    list_images, load_corpus, ratio_sweep, run_experiment, write_table_csv, ExperimentSpec,
};
use ats_core::quantify::Round;
use ats_core::{
    apply_splitting, clip_center, extract_corpus, key_fingerprint, load_image, search_bitrate,
    AtsParams, AtsReport, EmbedConfig, Error, GrayImage, Label, SpamParams, StreamState,
};
use serde_json::json;

use crate::{Cli, Command, Embedding, Format, Global};

/// Exit status and message for a failed command.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidRate(_)
            | Error::InvalidParameter(_)
            | Error::TruthMismatch(_)
            | Error::ClipTooLarge { .. }
            | Error::Parse(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;
type Truth = HashMap<String, Label>;

pub fn run(cli: &Cli) -> CmdResult {
    let g = &cli.global;
    match &cli.command {
        Command::Embed {
            input,
            out,
            embedding,
            key,
        } => embed(g, input, out, embedding, key.unwrap_or(g.seed())),
        Command::Features { input, out } => features(g, input, out.as_deref()),
        Command::Analyze {
            input,
            embedding,
            truth,
            save_model,
        } => analyze(g, input, embedding, truth.as_deref(), save_model.as_deref()),
        Command::Search {
            input,
            algo,
            rates,
            truth,
        } => search(g, input, *algo, rates, truth.as_deref()),
        Command::Stream {
            watch,
            stdin,
            embedding,
            nmin,
            batch_every,
            poll_ms,
            max_images,
            idle_exit,
        } => {
            let split = split_config(g, embedding)?;
            let state =
                StreamState::new(split, params(g), *nmin)?.with_batch_every(*batch_every)?;
            let mut session = StreamSession {
                state,
                clip: g.clip,
                max_images: *max_images,
                seen: 0,
                out: io::stdout().lock(),
            };
            if *stdin {
                session.read_paths(io::stdin().lock())
            } else {
                let dir = watch.as_deref().expect("clap requires --watch or --stdin");
                let idle = idle_exit.map(Duration::from_secs_f64);
                session.watch(dir, Duration::from_millis(*poll_ms), idle)
            }
        }
        Command::Experiment { spec, sweep } => experiment(g, spec, *sweep),
    }
}

fn split_config(g: &Global, e: &Embedding) -> Result<EmbedConfig, Failure> {
    Ok(EmbedConfig::new(e.algo, e.rate, g.seed())?)
}

fn params(g: &Global) -> AtsParams {
    let mut p = AtsParams::default();
    p.learner.fold_seed = g.seed();
    p
}

fn read_truth(path: &Path) -> Result<Truth, Failure> {
    let bad = |m: String| Failure::usage(format!("bad truth file {}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let (Some(id_col), Some(label_col)) = (col("id"), col("label")) else {
        return Err(bad("expected columns `id` and `label`".into()));
    };
    let mut truth = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        let label: Label = rec
            .get(label_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e: Error| bad(e.to_string()))?;
        if truth.insert(id.clone(), label).is_some() {
            return Err(bad(format!("id `{id}` listed twice")));
        }
    }
    Ok(truth)
}

fn embed(g: &Global, input: &Path, out: &Path, e: &Embedding, key: u64) -> CmdResult {
    let cfg = EmbedConfig::new(e.algo, e.rate, key)?;
    let covers = load_corpus(input, g.clip)?;
    let stego = apply_splitting(&covers, &cfg)?;
    fs::create_dir_all(out)?;
    let fingerprint = key_fingerprint(key);
    let mut manifest = csv::Writer::from_path(out.join("manifest.csv")).map_err(csv_failure)?;
    manifest
        .write_record(["id", "rate", "key_fingerprint"])
        .map_err(csv_failure)?;
    for (cover, img) in covers.iter().zip(&stego) {
        img.save_pgm(out.join(format!("{}.pgm", cover.id())))?;
        manifest
            .write_record([cover.id(), &e.rate.to_string(), &fingerprint])
            .map_err(csv_failure)?;
    }
    manifest.flush()?;
    eprintln!("embedded {} images into {}", stego.len(), out.display());
    Ok(())
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn features(g: &Global, input: &Path, out: Option<&Path>) -> CmdResult {
    let images = load_corpus(input, g.clip)?;
    let m = extract_corpus(&images, &SpamParams::default())?;
    match out {
        Some(p) => m.write_csv(BufWriter::new(File::create(p)?))?,
        None => m.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn load_with_truth(
    g: &Global,
    input: &Path,
    truth: Option<&Path>,
) -> Result<(Vec<GrayImage>, Option<Truth>), Failure> {
    let truth = truth.map(read_truth).transpose()?;
    let images = load_corpus(input, g.clip)?;
    Ok((images, truth))
}

fn print_table(report: &AtsReport) {
    if let Some(c) = report.counts {
        eprintln!("Acc,TP,TN,FP,FN");
        eprintln!("{:.4},{},{},{},{}", c.accuracy(), c.tp, c.tn, c.fp, c.fn_);
    }
}

fn analyze(
    g: &Global,
    input: &Path,
    e: &Embedding,
    truth: Option<&Path>,
    save_model: Option<&Path>,
) -> CmdResult {
    let split = split_config(g, e)?;
    let (images, truth) = load_with_truth(g, input, truth)?;
    let run = ats_run(&images, &split, &params(g), truth.as_ref())?;
    if let Some(w) = &run.report.diagnostics.warning {
        eprintln!("warning: {w}");
    }
    if let Some(p) = save_model {
        fs::write(p, run.fitted.model.to_json()?)?;
    }
    let mut out = io::stdout().lock();
    match g.format {
        Format::Json => writeln!(out, "{}", run.report.to_json()?)?,
        Format::Csv => run.report.write_csv(&mut out)?,
    }
    print_table(&run.report);
    Ok(())
}

fn search(
    g: &Global,
    input: &Path,
    algo: ats_core::Algorithm,
    rates: &[f64],
    truth: Option<&Path>,
) -> CmdResult {
    if rates.is_empty() {
        return Err(Failure::usage("--rates is empty"));
    }
    for &r in rates {
        EmbedConfig::new(algo, r, g.seed())?;
    }
    let (images, truth) = load_with_truth(g, input, truth)?;
    let ranked = search_bitrate(&images, algo, g.seed(), rates, &params(g), truth.as_ref())?;
    let mut out = io::stdout().lock();
    match g.format {
        Format::Json => {
            let rows: Vec<_> = ranked
                .iter()
                .map(|e| {
                    json!({
                        "tentative_rate": e.tentative_rate,
                        "score": if e.score.is_finite() { json!(e.score) } else { json!("inf") },
                        "predicted_stego_fraction": e.report.diagnostics.predicted_stego_fraction,
                        "accuracy": e.report.accuracy,
                    })
                })
                .collect();
            let doc = json!({
                "centroid_features": "top 50 by ANOVA, refit per tentative rate",
                "best_rate": ranked[0].tentative_rate,
                "ranked": rows,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        Format::Csv => {
            writeln!(out, "rate,score,predicted_stego_fraction,accuracy")?;
            for e in &ranked {
                let acc = e
                    .report
                    .accuracy
                    .map(|a| format!("{a:.4}"))
                    .unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{:.4},{acc}",
                    e.tentative_rate, e.score, e.report.diagnostics.predicted_stego_fraction
                )?;
            }
        }
    }
    Ok(())
}

struct StreamSession<W: Write> {
    state: StreamState,
    clip: Option<(usize, usize)>,
    max_images: Option<usize>,
    seen: usize,
    out: W,
}

impl<W: Write> StreamSession<W> {
    fn done(&self) -> bool {
        self.max_images.is_some_and(|m| self.seen >= m)
    }

    fn load(&self, path: &Path) -> Result<GrayImage, Error> {
        let img = load_image(path)?;
        match self.clip {
            Some((w, h)) => clip_center(&img, w, h),
            None => Ok(img),
        }
    }

    fn push(&mut self, img: &GrayImage) -> CmdResult {
        self.seen += 1;
        if let Some(round) = self.state.add(img)? {
            self.emit(&round)?;
        }
        Ok(())
    }

    fn emit(&mut self, round: &Round) -> CmdResult {
        writeln!(self.out, "{}", round.to_json_line())?;
        self.out.flush()?;
        if let Some(w) = self
            .state
            .last_report()
            .and_then(|r| r.diagnostics.warning.as_ref())
        {
            eprintln!("warning: round {}: {w}", round.round);
        }
        Ok(())
    }

    fn read_paths<R: BufRead>(&mut self, input: R) -> CmdResult {
        for line in input.lines() {
            let line = line?;
            let path = line.trim();
            if path.is_empty() {
                continue;
            }
            let img = self.load(Path::new(path))?;
            self.push(&img)?;
            if self.done() {
                break;
            }
        }
        Ok(())
    }

    fn watch(&mut self, dir: &Path, poll: Duration, idle_exit: Option<Duration>) -> CmdResult {
        if !dir.is_dir() {
            return Err(Failure::usage(format!(
                "{} is not a directory",
                dir.display()
            )));
        }
        let mut taken: HashSet<PathBuf> = HashSet::new();
        // files that fail to load may still be being written; retry a few times
        let mut failures: HashMap<PathBuf, u32> = HashMap::new();
        let mut last_arrival = Instant::now();
        while !self.done() {
            let fresh: Vec<PathBuf> = list_images(dir)?
                .into_iter()
                .filter(|p| !taken.contains(p))
                .collect();
            let mut progressed = false;
            for path in fresh {
                match self.load(&path) {
                    Ok(img) => {
                        taken.insert(path);
                        self.push(&img)?;
                        progressed = true;
                        last_arrival = Instant::now();
                    }
                    Err(e) => {
                        let n = failures.entry(path.clone()).or_default();
                        *n += 1;
                        if *n >= 3 {
                            eprintln!("warning: skipping {}: {e}", path.display());
                            taken.insert(path);
                        }
                    }
                }
                if self.done() {
                    return Ok(());
                }
            }
            if !progressed {
                if idle_exit.is_some_and(|d| last_arrival.elapsed() >= d) {
                    break;
                }
                std::thread::sleep(poll);
            }
        }
        Ok(())
    }
}

fn experiment(g: &Global, path: &Path, sweep: Option<usize>) -> CmdResult {
    let mut spec = ExperimentSpec::load(path)?;
    if let Some(s) = g.seed {
        spec.seed = s;
    }
    if g.clip.is_some() {
        spec.clip = g.clip;
    }
    let rows = match sweep {
        Some(step) => ratio_sweep(&spec, step)?,
        None => vec![run_experiment(&spec)?],
    };
    for w in rows.iter().flat_map(|r| &r.warnings) {
        eprintln!("warning: {w}");
    }
    let mut out = io::stdout().lock();
    match g.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?,
        Format::Csv => {
            let meta = [
                ("spec", path.display().to_string()),
                ("seed", spec.seed.to_string()),
                ("repeats", spec.repeats.to_string()),
                ("embed_rate", spec.embed.rate().to_string()),
                ("split_rate", spec.split.rate().to_string()),
            ];
            write_table_csv(&mut out, &meta, &rows)?;
        }
    }
    Ok(())
}
