mod common;

use std::fs;
use std::path::Path;

use bitext::inference::{BatchOptions, Completer, InferenceError};
use bitext::pipeline::corpus::{read_jsonl, write_jsonl};
use bitext::pipeline::{
    filter_code_samples, filter_parallel_corpus, mix_corpora, render_judge_prompt, render_translation_prompt,
    translate_records, CodeHeuristic, InstructionRecord, JobStore, MixSource, ParallelPair, Template,
};
use regex::Regex;

fn golden(name: &str) -> Vec<u8> {
    fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

#[test]
fn prompts_match_golden_files() {
    assert_eq!(
        render_translation_prompt("Hello", Template::Teacher)
            .unwrap()
            .as_bytes(),
        golden("teacher_hello.txt")
    );
    assert_eq!(
        render_translation_prompt("Hi", Template::Lightweight)
            .unwrap()
            .as_bytes(),
        golden("lightweight_hi.txt")
    );
    assert_eq!(
        render_judge_prompt("مرحبا", "Hello").unwrap().as_bytes(),
        golden("judge_marhaba_hello.txt")
    );
}

fn rec(i: usize, instruction: &str, response: &str) -> InstructionRecord {
    InstructionRecord {
        id: i.to_string(),
        system: None,
        instruction: instruction.into(),
        response: response.into(),
        source: "orca".into(),
    }
}

/// Second reading of the code heuristic, written with regexes.
fn oracle_is_code(text: &str) -> bool {
    let fence = Regex::new(r"```").unwrap();
    let sig = Regex::new(r"(?m)^\s*(?:(?:def|class|import|function)\s.*|.*[;{}]\s*)$").unwrap();
    let sym = Regex::new(r"[{}();<>=\[\]]").unwrap();
    let chars = text.chars().count();
    fence.is_match(text)
        || sig.find_iter(text).count() >= 3
        || (chars > 0 && sym.find_iter(text).count() * 10 >= chars * 3)
}

#[test]
fn code_filter_agrees_with_regex_oracle() {
    let texts = [
        "What is photosynthesis?",
        "Plants turn light into sugar.",
        "```js\nx()\n```",
        "def a(x):\n  pass\ndef b():\n  pass\nclass C:\n  pass",
        "int x = 1;\nint y = 2;\nreturn x + y;",
        "if (a) {\n  b();\n}",
        "f(x)=[y]",
        "Tell me a story about a class of students.",
        "import this\nimport that\nand more prose",
        "The function of the heart is to pump blood.",
        "a;\nb;\nc;",
        "<<>>",
        "Summarize: the meeting ended early; everyone left.",
        "",
        "Prices (in USD): 5 < 7 = true",
        "function go() \nfunction stop() \nfunction wait() ",
        "Explain recursion in plain words.",
        "Recursion is when a function calls itself.",
        "{ }",
        "x = y",
    ];
    let records: Vec<InstructionRecord> = (0..20)
        .map(|i| rec(i, texts[i], texts[(i * 7 + 3) % 20]))
        .map(|r| {
            if r.instruction.is_empty() {
                rec(13, "fill", &r.response)
            } else {
                r
            }
        })
        .collect();
    let want: Vec<InstructionRecord> = records
        .iter()
        .filter(|r| !(oracle_is_code(&r.instruction) || oracle_is_code(&r.response)))
        .cloned()
        .collect();
    let (kept, dropped) = filter_code_samples(records.clone(), &CodeHeuristic::default());
    assert_eq!(kept, want);
    assert_eq!(kept.len() + dropped, records.len());
    assert!(dropped > 0 && !kept.is_empty());
}

struct ParityJudge;
impl Completer for ParityJudge {
    fn complete(&self, prompt: &str) -> Result<String, InferenceError> {
        let en = prompt.lines().find_map(|l| l.strip_prefix("English: ")).unwrap();
        Ok(if en.len() % 2 == 0 { "accept" } else { "reject" }.into())
    }
}

struct Tagger;
impl Completer for Tagger {
    fn complete(&self, prompt: &str) -> Result<String, InferenceError> {
        Ok(format!("ع:{}", prompt.rsplit(": ").next().unwrap()))
    }
}

#[test]
fn translate_pair_judge_mix_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let records: Vec<InstructionRecord> = (0..6)
        .map(|i| rec(i, &format!("q{i}"), &format!("answer {i}")))
        .collect();

    let opts = BatchOptions::with_concurrency(3);
    let tuples = translate_records(&records, Template::Teacher, &Tagger, opts, &mut JobStore::in_memory()).unwrap();
    let pairs: Vec<ParallelPair> = tuples.iter().flat_map(|t| t.directed_pairs()).collect();
    assert_eq!(pairs.len(), 12);
    write_jsonl(&d.join("orca_pairs.jsonl"), &pairs).unwrap();

    let opus: Vec<ParallelPair> = (0..9)
        .map(|i| ParallelPair {
            ar: format!("جملة {i}"),
            en: "x".repeat(i + 1),
        })
        .collect();
    let (accepted, stats) = filter_parallel_corpus(&opus, &ParityJudge, opts, &mut JobStore::in_memory()).unwrap();
    assert_eq!((stats.candidates, stats.accepted), (9, 4));
    write_jsonl(&d.join("opus_kept.jsonl"), &accepted).unwrap();

    let sources = [
        MixSource {
            label: "orca".into(),
            path: d.join("orca_pairs.jsonl"),
            expected: Some(12),
        },
        MixSource {
            label: "opus".into(),
            path: d.join("opus_kept.jsonl"),
            expected: Some(4),
        },
    ];
    let m1 = mix_corpora(&sources, &d.join("mix1.jsonl"), None).unwrap();
    let m2 = mix_corpora(&sources, &d.join("mix2.jsonl"), None).unwrap();
    assert_eq!(m1.total, 16);
    assert_eq!(m1.to_json(), m2.to_json());
    assert_eq!(
        fs::read(d.join("mix1.jsonl")).unwrap(),
        fs::read(d.join("mix2.jsonl")).unwrap()
    );
    let mixed: Vec<ParallelPair> = read_jsonl(&d.join("mix1.jsonl")).unwrap();
    assert_eq!(&mixed[..12], &pairs[..]);
    assert_eq!(&mixed[12..], &accepted[..]);
}
