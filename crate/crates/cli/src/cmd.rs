use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use bitext::evalset::{align_references, build_report, sample_questions, AlignedPair, QuestionItem};
use bitext::inference::{BatchOptions, ChatClient};
use bitext::merge::{merge_checkpoints, MergeSpec, NamePolicy};
use bitext::mtmetrics::{bleu_corpus, chrf_pp, evaluate, rouge_l_corpus, tokenize_13a, BleuOptions};
use bitext::pipeline::corpus::{read_jsonl, write_jsonl, Record};
use bitext::pipeline::state::{file_digest, Fingerprint};
use bitext::pipeline::tuples::TupleRecord;
use bitext::pipeline::{
    build_bilingual_tuples, filter_code_samples, filter_parallel_corpus, mix_corpora, translate_records,
    translate_texts, BilingualTuple, CodeHeuristic, InstructionRecord, JobStore, MixSource, ParallelPair, Template,
};
use bitext::quant::{audit_quantized, quantize_checkpoint, QuantPolicy};
use bitext::tensorio::{read_checkpoint, write_checkpoint};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{FileConfig, RunConfig};
use crate::{CliError, Command, Metric, OnMissing, TemplateArg, TranslateMode};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command, file: &FileConfig) -> Result<()> {
    match command {
        Command::Quantize { input, out, skip } => quantize(&input, &out, &skip),
        Command::Merge {
            a,
            b,
            t,
            out,
            on_missing,
            eps,
        } => merge(&a, &b, t, &out, on_missing, eps),
        Command::Score {
            hyp,
            reference,
            metric,
            json,
            report,
        } => score(&hyp, &reference, metric, json, report.as_deref()),
        Command::Tokenize { input } => tokenize(input.as_deref()),
        Command::TranslateCorpus {
            input,
            out,
            mode,
            field,
            template,
            directed,
            state,
            endpoint,
        } => {
            let rc = RunConfig::resolve(file, &endpoint)?;
            translate_corpus(
                &input,
                &out,
                mode,
                &field,
                template,
                directed.as_deref(),
                state.as_deref(),
                &rc,
            )
        }
        Command::Judge {
            input,
            out,
            state,
            stats,
            endpoint,
        } => judge(
            &input,
            &out,
            state.as_deref(),
            stats.as_deref(),
            &RunConfig::resolve(file, &endpoint)?,
        ),
        Command::Pair {
            records,
            instr_ar,
            resp_ar,
            ar_field,
            tuples,
            out,
            directed,
            state,
        } => pair(PairArgs {
            records,
            instr_ar,
            resp_ar,
            ar_field,
            tuples,
            out,
            directed,
            state,
        }),
        Command::FilterCode {
            input,
            out,
            min_code_lines,
            symbol_ratio,
            state,
        } => filter_code(&input, &out, min_code_lines, symbol_ratio, state.as_deref()),
        Command::Mix {
            sources,
            out,
            manifest,
            shuffle,
            seed,
            state,
        } => mix(
            &sources,
            &out,
            manifest,
            shuffle.then_some(seed).flatten(),
            state.as_deref(),
        ),
        Command::SampleEval { en, ar, n, seed, out } => {
            let out = out
                .or_else(|| file.output_dir.clone())
                .ok_or_else(|| CliError::Usage("sample-eval needs --out or output_dir in --config".into()))?;
            sample_eval(&en, &ar, n, seed, &out)
        }
        Command::Report {
            pairs,
            outputs,
            name,
            field,
            json,
        } => report(&pairs, &outputs, &name, &field, json),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `text` to `path` through a sibling temp file.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, text).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

// ---- done markers for local, deterministic commands ----

enum Step {
    Skip,
    Run(Option<JobStore>),
}

/// A finished state whose fingerprint matches and whose outputs all exist
/// means there is nothing to do.
fn begin(state: Option<&Path>, fingerprint: &str, outputs: &[&Path]) -> Result<Step> {
    let Some(path) = state else {
        return Ok(Step::Run(None));
    };
    let mut store = JobStore::open(path)?;
    if store.is_finished() {
        store.bind(fingerprint)?;
        if outputs.iter().all(|p| p.exists()) {
            log::info!("{} already complete", path.display());
            return Ok(Step::Skip);
        }
    }
    Ok(Step::Run(Some(store)))
}

fn finish(store: Option<JobStore>, fingerprint: &str) -> Result<()> {
    if let Some(mut s) = store {
        s.bind(fingerprint)?;
        s.mark_finished()?;
    }
    Ok(())
}

fn fingerprint(kind: &str, inputs: &[&Path], args: &[String]) -> Result<String> {
    let mut fp = Fingerprint::new(kind);
    for p in inputs {
        fp.push_str(&file_digest(p)?);
    }
    for a in args {
        fp.push_str(a);
    }
    Ok(fp.finish())
}

// ---- model files ----

fn quantize(input: &Path, out: &Path, skip: &[String]) -> Result<()> {
    let src = read_checkpoint(input)?;
    let policy = QuantPolicy::new(skip)?;
    let q = quantize_checkpoint(&src, &policy)?;
    let audits = audit_quantized(&src, &q)?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    let mut failed = Vec::new();
    for a in &audits {
        let _ = writeln!(
            w,
            "{}\tamax={:.6e}\tscale={:.6e}\tmax_rel_err={:.4}\t{}",
            a.name,
            a.amax,
            a.scale,
            a.max_rel_error,
            if a.passed() { "ok" } else { "FAIL" }
        );
        if !a.passed() {
            failed.push(a.name.clone());
        }
    }
    let skipped = src.len() - audits.len();
    let _ = writeln!(
        w,
        "quantized {} tensors, kept {skipped} at source precision",
        audits.len()
    );
    if !failed.is_empty() {
        return Err(CliError::Failed(format!(
            "round-trip check failed for {}; nothing written",
            failed.join(", ")
        )));
    }
    write_checkpoint(&q, out)?;
    Ok(())
}

fn merge(a: &Path, b: &Path, t: f64, out: &Path, on_missing: OnMissing, eps: f64) -> Result<()> {
    let spec = MergeSpec {
        t,
        parallel_eps: eps,
        name_policy: match on_missing {
            OnMissing::Error => NamePolicy::Error,
            OnMissing::Copy => NamePolicy::CopyFromPresent,
        },
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let x = read_checkpoint(a)?;
    let y = read_checkpoint(b)?;
    let m = merge_checkpoints(&x, &y, &spec)?;
    write_checkpoint(&m, out)?;
    println!("merged {} tensors at t={t} into {}", m.len(), out.display());
    Ok(())
}

// ---- metrics ----

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn score(hyp: &Path, reference: &Path, metric: Metric, json: bool, report: Option<&Path>) -> Result<()> {
    let h = read_lines(hyp)?;
    let r = read_lines(reference)?;
    if let Some(p) = report {
        let rep = evaluate(&h, &r)?;
        write_atomic(
            p,
            &(serde_json::to_string_pretty(&rep).expect("report serializes") + "\n"),
        )?;
    }
    let line = match metric {
        Metric::All => {
            let rep = evaluate(&h, &r)?;
            if json {
                serde_json::to_string(&rep).expect("report serializes")
            } else {
                rep.summary_line()
            }
        }
        single => {
            let (name, v) = match single {
                Metric::Bleu => ("bleu", bleu_corpus(&h, &r, BleuOptions::default())?),
                Metric::Chrf => ("chrf_pp", chrf_pp(&h, &r)?),
                _ => {
                    if h.len() != r.len() || h.is_empty() {
                        evaluate(&h, &r)?;
                    }
                    ("rouge_l", rouge_l_corpus(&h, &r))
                }
            };
            if json {
                serde_json::json!({ name: v, "n_pairs": h.len() }).to_string()
            } else {
                let label = match name {
                    "bleu" => "BLEU",
                    "chrf_pp" => "chrF++",
                    _ => "ROUGE-L",
                };
                format!("{label} = {v:.1} | n = {}", h.len())
            }
        }
    };
    println!("{line}");
    Ok(())
}

fn tokenize(input: Option<&Path>) -> Result<()> {
    let stdout = io::stdout();
    let mut w = stdout.lock();
    let mut emit = |line: &str| -> Result<()> {
        writeln!(w, "{}", tokenize_13a(line).join(" ")).map_err(io_err(Path::new("<stdout>")))
    };
    match input {
        Some(p) => {
            for l in read_lines(p)? {
                emit(&l)?;
            }
        }
        None => {
            for l in io::stdin().lock().lines() {
                emit(&l.map_err(io_err(Path::new("<stdin>")))?)?;
            }
        }
    }
    Ok(())
}

// ---- model-backed corpus steps ----

fn template(t: TemplateArg) -> Template {
    match t {
        TemplateArg::Teacher => Template::Teacher,
        TemplateArg::Lightweight => Template::Lightweight,
        TemplateArg::Plain => Template::Plain,
    }
}

fn open_store(state: Option<&Path>) -> Result<JobStore> {
    Ok(match state {
        Some(p) => JobStore::open(p)?,
        None => JobStore::in_memory(),
    })
}

fn mark_done(store: &mut JobStore) -> Result<()> {
    Ok(store.mark_finished()?)
}

fn directed_pairs(tuples: &[BilingualTuple]) -> Vec<ParallelPair> {
    tuples.iter().flat_map(BilingualTuple::directed_pairs).collect()
}

#[allow(clippy::too_many_arguments)]
fn translate_corpus(
    input: &Path,
    out: &Path,
    mode: TranslateMode,
    field: &str,
    tmpl: TemplateArg,
    directed: Option<&Path>,
    state: Option<&Path>,
    rc: &RunConfig,
) -> Result<()> {
    let client = ChatClient::http(rc.endpoint.clone())?;
    log::info!("decoding: {}", rc.endpoint.descriptor());
    let opts = BatchOptions::with_concurrency(rc.concurrency);
    let mut store = open_store(state)?;
    match mode {
        TranslateMode::Tuples => {
            let records: Vec<InstructionRecord> = read_jsonl(input)?;
            let tuples = translate_records(&records, template(tmpl), &client, opts, &mut store)?;
            let rows = tuples.iter().zip(&records).map(|(t, r)| TupleRecord {
                tuple: t.clone(),
                source: r.source.clone(),
            });
            write_jsonl(out, rows)?;
            if let Some(d) = directed {
                write_jsonl(d, directed_pairs(&tuples))?;
            }
            println!("translated {} records into {} tuples", records.len(), tuples.len());
        }
        TranslateMode::Text => {
            if directed.is_some() {
                return Err(CliError::Usage("--directed only applies to --mode tuples".into()));
            }
            let records: Vec<Record> = read_jsonl(input)?;
            let texts = records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r.get(field)
                        .and_then(Value::as_str)
                        .map(str::to_owned)
                        .ok_or_else(|| CliError::Failed(format!("record {} has no field `{field}`", i + 1)))
                })
                .collect::<Result<Vec<String>>>()?;
            let outs = translate_texts(&texts, template(tmpl), &client, opts, &mut store)?;
            let rows = records.into_iter().zip(outs).map(|(mut r, t)| {
                r.insert("translation".into(), Value::String(t));
                r
            });
            let n = write_jsonl(out, rows)?;
            println!("translated {n} records");
        }
    }
    mark_done(&mut store)
}

#[derive(Serialize)]
struct StatsFile<'a> {
    #[serde(flatten)]
    stats: &'a bitext::pipeline::FilterStats,
    acceptance_rate: f64,
}

fn judge(input: &Path, out: &Path, state: Option<&Path>, stats_out: Option<&Path>, rc: &RunConfig) -> Result<()> {
    let pairs: Vec<ParallelPair> = read_jsonl(input)?;
    let client = ChatClient::http(rc.endpoint.clone())?;
    log::info!("decoding: {}", rc.endpoint.descriptor());
    let mut store = open_store(state)?;
    let (kept, stats) = filter_parallel_corpus(
        &pairs,
        &client,
        BatchOptions::with_concurrency(rc.concurrency),
        &mut store,
    )?;
    write_jsonl(out, &kept)?;
    if let Some(p) = stats_out {
        let body = StatsFile {
            stats: &stats,
            acceptance_rate: stats.acceptance_rate(),
        };
        write_atomic(
            p,
            &(serde_json::to_string_pretty(&body).expect("stats serialize") + "\n"),
        )?;
    }
    println!("{}", stats.summary_line());
    mark_done(&mut store)
}

// ---- local corpus steps ----

struct PairArgs {
    records: Option<PathBuf>,
    instr_ar: Option<PathBuf>,
    resp_ar: Option<PathBuf>,
    ar_field: String,
    tuples: Option<PathBuf>,
    out: Option<PathBuf>,
    directed: Option<PathBuf>,
    state: Option<PathBuf>,
}

fn read_field(path: &Path, field: &str) -> Result<Vec<String>> {
    let records: Vec<Record> = read_jsonl(path)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.get(field)
                .and_then(Value::as_str)
                .map(str::to_owned)
                .ok_or_else(|| CliError::Failed(format!("{}:{}: no field `{field}`", path.display(), i + 1)))
        })
        .collect()
}

fn pair(a: PairArgs) -> Result<()> {
    let (inputs, outputs): (Vec<&Path>, Vec<&Path>) = match (&a.records, &a.tuples) {
        (Some(r), None) => {
            let (Some(i), Some(s), Some(o)) = (&a.instr_ar, &a.resp_ar, &a.out) else {
                return Err(CliError::Usage(
                    "--records needs --instr-ar, --resp-ar and --out".into(),
                ));
            };
            let mut outs = vec![o.as_path()];
            outs.extend(a.directed.as_deref());
            (vec![r.as_path(), i.as_path(), s.as_path()], outs)
        }
        (None, Some(t)) => {
            let Some(d) = &a.directed else {
                return Err(CliError::Usage("--tuples needs --directed".into()));
            };
            (vec![t.as_path()], vec![d.as_path()])
        }
        _ => return Err(CliError::Usage("give either --records or --tuples".into())),
    };
    let mut args: Vec<String> = vec![a.ar_field.clone()];
    args.extend(outputs.iter().map(|p| p.display().to_string()));
    let fp = fingerprint("cli/pair", &inputs, &args)?;
    let Step::Run(store) = begin(a.state.as_deref(), &fp, &outputs)? else {
        return Ok(());
    };

    let tuples: Vec<BilingualTuple> = if let Some(r) = &a.records {
        let records: Vec<InstructionRecord> = read_jsonl(r)?;
        let instr = read_field(a.instr_ar.as_deref().expect("checked"), &a.ar_field)?;
        let resp = read_field(a.resp_ar.as_deref().expect("checked"), &a.ar_field)?;
        let tuples = build_bilingual_tuples(&records, &instr, &resp)?;
        let rows = tuples.iter().zip(&records).map(|(t, r)| TupleRecord {
            tuple: t.clone(),
            source: r.source.clone(),
        });
        write_jsonl(a.out.as_deref().expect("checked"), rows)?;
        tuples
    } else {
        let rows: Vec<TupleRecord> = read_jsonl(a.tuples.as_deref().expect("checked"))?;
        rows.into_iter().map(|r| r.tuple).collect()
    };
    if let Some(d) = &a.directed {
        write_jsonl(d, directed_pairs(&tuples))?;
    }
    println!("{} tuples, {} directed pairs", tuples.len(), 2 * tuples.len());
    finish(store, &fp)
}

fn filter_code(input: &Path, out: &Path, min_code_lines: usize, symbol_ratio: f64, state: Option<&Path>) -> Result<()> {
    if !(0.0..=1.0).contains(&symbol_ratio) {
        return Err(CliError::Usage("--symbol-ratio must be within 0..=1".into()));
    }
    let fp = fingerprint(
        "cli/filter-code",
        &[input],
        &[
            min_code_lines.to_string(),
            symbol_ratio.to_string(),
            out.display().to_string(),
        ],
    )?;
    let Step::Run(store) = begin(state, &fp, &[out])? else {
        return Ok(());
    };
    let records: Vec<InstructionRecord> = read_jsonl(input)?;
    let total = records.len();
    let h = CodeHeuristic {
        min_code_lines,
        symbol_ratio,
    };
    let (kept, dropped) = filter_code_samples(records, &h);
    write_jsonl(out, &kept)?;
    println!("kept {} of {total}, dropped {dropped}", kept.len());
    finish(store, &fp)
}

fn parse_source(spec: &str) -> Result<MixSource> {
    let (label, rest) = spec
        .split_once('=')
        .filter(|(l, r)| !l.is_empty() && !r.is_empty())
        .ok_or_else(|| CliError::Usage(format!("--source `{spec}` is not LABEL=PATH[:COUNT]")))?;
    let (path, expected) = match rest.rsplit_once(':') {
        Some((p, c)) if !p.is_empty() && !c.is_empty() && c.bytes().all(|b| b.is_ascii_digit()) => {
            let n = c
                .parse()
                .map_err(|_| CliError::Usage(format!("count `{c}` out of range")))?;
            (p, Some(n))
        }
        _ => (rest, None),
    };
    Ok(MixSource {
        label: label.to_string(),
        path: PathBuf::from(path),
        expected,
    })
}

fn mix(specs: &[String], out: &Path, manifest: Option<PathBuf>, seed: Option<u64>, state: Option<&Path>) -> Result<()> {
    let sources = specs.iter().map(|s| parse_source(s)).collect::<Result<Vec<_>>>()?;
    let manifest = manifest.unwrap_or_else(|| with_suffix(out, ".manifest.json"));
    let inputs: Vec<&Path> = sources.iter().map(|s| s.path.as_path()).collect();
    let mut args: Vec<String> = specs.to_vec();
    args.push(format!("{seed:?}"));
    args.push(out.display().to_string());
    args.push(manifest.display().to_string());
    let fp = fingerprint("cli/mix", &inputs, &args)?;
    let Step::Run(store) = begin(state, &fp, &[out, &manifest])? else {
        return Ok(());
    };
    let m = mix_corpora(&sources, out, seed)?;
    write_atomic(&manifest, &m.to_json())?;
    for e in &m.sources {
        println!("{}\t{}", e.label, e.count);
    }
    println!("total\t{}", m.total);
    finish(store, &fp)
}

// ---- evaluation ----

/// One aligned pair as a flat corpus line.
#[derive(Debug, Serialize, Deserialize)]
struct PairRow {
    subject: String,
    item_id: String,
    text: String,
    ar_reference: String,
}

#[derive(Debug, Serialize)]
struct MissRow<'a> {
    subject: &'a str,
    item_id: &'a str,
}

fn sample_eval(en: &Path, ar: &Path, n: usize, seed: u64, out: &Path) -> Result<()> {
    let en_items: Vec<QuestionItem> = read_jsonl(en)?;
    let ar_items: Vec<QuestionItem> = read_jsonl(ar)?;
    let sample = sample_questions(&en_items, n, seed)?;
    let (pairs, misses) = align_references(&sample, &ar_items)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_jsonl(&out.join("sample.jsonl"), &sample)?;
    write_jsonl(
        &out.join("pairs.jsonl"),
        pairs.iter().map(|p| PairRow {
            subject: p.en.subject.clone(),
            item_id: p.en.item_id.clone(),
            text: p.en.text.clone(),
            ar_reference: p.ar_reference.clone(),
        }),
    )?;
    write_jsonl(
        &out.join("misses.jsonl"),
        misses.iter().map(|m| MissRow {
            subject: &m.subject,
            item_id: &m.item_id,
        }),
    )?;
    for m in &misses {
        log::warn!("no reference for ({}, {})", m.subject, m.item_id);
    }
    println!(
        "sampled {} | aligned {} | missing {}",
        sample.len(),
        pairs.len(),
        misses.len()
    );
    Ok(())
}

fn report(pairs: &Path, outputs: &Path, name: &str, field: &str, json: Option<PathBuf>) -> Result<()> {
    let rows: Vec<PairRow> = read_jsonl(pairs)?;
    let aligned: Vec<AlignedPair> = rows
        .into_iter()
        .map(|r| AlignedPair {
            en: QuestionItem {
                subject: r.subject,
                item_id: r.item_id,
                text: r.text,
            },
            ar_reference: r.ar_reference,
        })
        .collect();
    let outs = read_field(outputs, field)?;
    let rep = build_report(&aligned, &outs, name)?;
    let json = json.unwrap_or_else(|| with_suffix(outputs, ".report.json"));
    write_atomic(
        &json,
        &(serde_json::to_string_pretty(&rep).expect("report serializes") + "\n"),
    )?;
    println!("{}", rep.row);
    println!("{}", rep.metrics.summary_line());
    Ok(())
}
