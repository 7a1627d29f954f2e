//! Straightforward reference implementations and random fixtures shared by
//! the integration tests. Nothing here calls into the library's metric or
//! merge code.
#![allow(dead_code)]

pub mod stub;

use bitext::tensorio::{Checkpoint, DType, Tensor};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

// ---- 13a tokenizer, one character at a time ----

const RULE1: &str = "{|}~[\\]^_` !\"#$%&()*+:;<=>?@/";

fn rule1(s: &[char]) -> Vec<char> {
    let mut out = Vec::new();
    for &c in s {
        if RULE1.contains(c) {
            out.extend([' ', c, ' ']);
        } else {
            out.push(c);
        }
    }
    out
}

/// Leftmost, non-overlapping rewrite of a two-character pattern.
fn pair_rule(s: &[char], hit: impl Fn(char, char) -> bool, emit: impl Fn(char, char, &mut Vec<char>)) -> Vec<char> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        if i + 1 < s.len() && hit(s[i], s[i + 1]) {
            emit(s[i], s[i + 1], &mut out);
            i += 2;
        } else {
            out.push(s[i]);
            i += 1;
        }
    }
    out
}

fn is_ws(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut s = text.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    for (ent, ch) in [("&quot;", "\""), ("&amp;", "&"), ("&lt;", "<"), ("&gt;", ">")] {
        s = s.replace(ent, ch);
    }
    let mut cs: Vec<char> = format!(" {s} ").chars().collect();
    cs = rule1(&cs);
    let punct = |c: char| c == '.' || c == ',';
    cs = pair_rule(
        &cs,
        |a, b| !a.is_ascii_digit() && punct(b),
        |a, b, o| o.extend([a, ' ', b, ' ']),
    );
    cs = pair_rule(
        &cs,
        |a, b| punct(a) && !b.is_ascii_digit(),
        |a, b, o| o.extend([' ', a, ' ', b]),
    );
    cs = pair_rule(
        &cs,
        |a, b| a.is_ascii_digit() && b == '-',
        |a, b, o| o.extend([a, ' ', b, ' ']),
    );
    let joined: String = cs.into_iter().collect();
    joined
        .split(is_ws)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

// ---- counting helpers over plain vectors ----

fn grams<T: Clone>(xs: &[T], n: usize) -> Vec<Vec<T>> {
    if n == 0 || xs.len() < n {
        return Vec::new();
    }
    (0..=xs.len() - n).map(|i| xs[i..i + n].to_vec()).collect()
}

/// Clipped matches by repeated removal from a pool.
fn clipped<T: PartialEq + Clone>(hyp: &[T], reference: &[T]) -> usize {
    let mut pool = reference.to_vec();
    let mut m = 0;
    for g in hyp {
        if let Some(p) = pool.iter().position(|x| x == g) {
            pool.swap_remove(p);
            m += 1;
        }
    }
    m
}

// ---- BLEU ----

pub fn bleu(hyps: &[String], refs: &[String]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut hl, mut rl) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let (ht, rt) = (tokenize(h), tokenize(r));
        hl += ht.len();
        rl += rt.len();
        for n in 1..=4 {
            let (hg, rg) = (grams(&ht, n), grams(&rt, n));
            totals[n - 1] += hg.len();
            matches[n - 1] += clipped(&hg, &rg);
        }
    }
    if hl == 0 {
        return 0.0;
    }
    let mut precisions = Vec::new();
    let mut k = 0;
    for n in 0..4 {
        if totals[n] == 0 {
            break;
        }
        if matches[n] == 0 {
            k += 1;
            precisions.push(1.0 / (2f64.powi(k) * totals[n] as f64));
        } else {
            precisions.push(matches[n] as f64 / totals[n] as f64);
        }
    }
    let geo = precisions.iter().product::<f64>().powf(1.0 / precisions.len() as f64);
    let bp = if hl < rl {
        (1.0 - rl as f64 / hl as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * geo
}

// ---- chrF++ ----

const PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

fn chrf_words(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in s.split(is_ws).filter(|w| !w.is_empty()) {
        let cs: Vec<char> = w.chars().collect();
        let (first, last) = (cs[0], cs[cs.len() - 1]);
        if cs.len() > 1 && PUNCT.contains(last) {
            out.push(cs[..cs.len() - 1].iter().collect());
            out.push(last.to_string());
        } else if cs.len() > 1 && PUNCT.contains(first) {
            out.push(first.to_string());
            out.push(cs[1..].iter().collect());
        } else {
            out.push(w.to_string());
        }
    }
    out
}

pub fn chrf_pp(hyps: &[String], refs: &[String]) -> f64 {
    // [hyp, ref, match] per order: chars 1..=6 then words 1..=2
    let mut st = [[0usize; 3]; 8];
    for (h, r) in hyps.iter().zip(refs) {
        let hc: Vec<char> = h.chars().filter(|c| !is_ws(*c)).collect();
        let rc: Vec<char> = r.chars().filter(|c| !is_ws(*c)).collect();
        for n in 1..=6 {
            let (hg, rg) = (grams(&hc, n), grams(&rc, n));
            st[n - 1][0] += hg.len();
            st[n - 1][1] += rg.len();
            st[n - 1][2] += clipped(&hg, &rg);
        }
        let (hw, rw) = (chrf_words(h), chrf_words(r));
        for n in 1..=2 {
            let (hg, rg) = (grams(&hw, n), grams(&rw, n));
            st[5 + n][0] += hg.len();
            st[5 + n][1] += rg.len();
            st[5 + n][2] += clipped(&hg, &rg);
        }
    }
    let used: Vec<&[usize; 3]> = st.iter().filter(|s| s[0] > 0 && s[1] > 0).collect();
    if used.is_empty() {
        return 0.0;
    }
    let p = used.iter().map(|s| s[2] as f64 / s[0] as f64).sum::<f64>() / used.len() as f64;
    let r = used.iter().map(|s| s[2] as f64 / s[1] as f64).sum::<f64>() / used.len() as f64;
    if p + r == 0.0 {
        return 0.0;
    }
    100.0 * 5.0 * p * r / (4.0 * p + r)
}

// ---- ROUGE-L ----

fn rouge_tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() || is_mark(c) {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Combining marks from the blocks the fixtures draw on. Deliberately not
/// the regex crate's Unicode tables.
fn is_mark(c: char) -> bool {
    matches!(c, '\u{0300}'..='\u{036F}' | '\u{064B}'..='\u{065F}' | '\u{0670}')
}

fn lcs_memo(a: &[String], b: &[String], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
    if i == a.len() || j == b.len() {
        return 0;
    }
    if let Some(v) = memo[i][j] {
        return v;
    }
    let v = if a[i] == b[j] {
        1 + lcs_memo(a, b, i + 1, j + 1, memo)
    } else {
        lcs_memo(a, b, i + 1, j, memo).max(lcs_memo(a, b, i, j + 1, memo))
    };
    memo[i][j] = Some(v);
    v
}

pub fn rouge_l(hyps: &[String], refs: &[String]) -> f64 {
    let mut total = 0.0;
    for (h, r) in hyps.iter().zip(refs) {
        let (ht, rt) = (rouge_tokens(h), rouge_tokens(r));
        let mut memo = vec![vec![None; rt.len()]; ht.len()];
        let l = lcs_memo(&ht, &rt, 0, 0, &mut memo) as f64;
        if l > 0.0 {
            let (p, rc) = (l / ht.len() as f64, l / rt.len() as f64);
            total += 100.0 * 2.0 * p * rc / (p + rc);
        }
    }
    total / hyps.len() as f64
}

// ---- slerp ----

/// Great-circle interpolation with the angle taken from atan2.
pub fn slerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // |a||b|sin(omega) via the Lagrange identity, exact for collinear inputs.
    let mut cross2 = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let w = a[i] * b[j] - a[j] * b[i];
            cross2 += w * w;
        }
    }
    let cross = cross2.sqrt();
    let lerp = || a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect();
    if aa == 0.0 || bb == 0.0 {
        return lerp();
    }
    let omega = cross.atan2(ab);
    let s = cross / (aa.sqrt() * bb.sqrt());
    if s < 1e-8 {
        return lerp();
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (((1.0 - t) * omega).sin() * x + (t * omega).sin() * y) / s)
        .collect()
}

// ---- random fixtures ----

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

const VOCAB: &[&str] = &[
    "the",
    "cat",
    "sat",
    "on",
    "mat",
    "a",
    "dog",
    "The",
    "CAT",
    "3.5",
    "1,000",
    "5-6",
    "well-known",
    "it's",
    "(x)",
    "end.",
    "hi,",
    "\"q\"",
    "&quot;",
    "a&amp;b",
    "$10",
    "مرحبا",
    "بالعالم",
    "كتاب",
    "مَرْحَبًا",
    "100%",
    "x-y",
    "e.g.",
    "[ref]",
    "{k:v}",
    "é",
    "Ωmega",
    "2024",
    "-",
    ".",
    ",",
    "!!",
    "?",
    "naïve",
    "déjà",
];

pub fn sentence(rng: &mut StdRng, max_words: usize) -> String {
    let n = rng.random_range(0..=max_words);
    let mut s = String::new();
    for i in 0..n {
        if i > 0 {
            s.push_str(if rng.random_bool(0.9) { " " } else { "  " });
        }
        s.push_str(VOCAB[rng.random_range(0..VOCAB.len())]);
    }
    s
}

/// A hypothesis that is usually a noisy copy of the reference.
pub fn corpus(rng: &mut StdRng, segments: usize) -> (Vec<String>, Vec<String>) {
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    for _ in 0..segments {
        let r = sentence(rng, 12);
        let h = if rng.random_bool(0.6) {
            let mut words: Vec<&str> = r.split(' ').collect();
            if !words.is_empty() && rng.random_bool(0.5) {
                let k = rng.random_range(0..words.len());
                words.remove(k);
            }
            if rng.random_bool(0.5) {
                words.push(VOCAB[rng.random_range(0..VOCAB.len())]);
            }
            words.join(" ")
        } else {
            sentence(rng, 12)
        };
        hyps.push(h);
        refs.push(r);
    }
    (hyps, refs)
}

pub fn random_tensor(rng: &mut StdRng, dtype: DType) -> Tensor {
    let rank = rng.random_range(0..=3);
    let shape: Vec<usize> = (0..rank).map(|_| rng.random_range(0..=5)).collect();
    let n: usize = shape.iter().product();
    let data: Vec<u8> = (0..n * dtype.width()).map(|_| rng.random()).collect();
    Tensor::new(dtype, shape, data).unwrap()
}

pub fn random_checkpoint(rng: &mut StdRng) -> Checkpoint {
    let mut c = Checkpoint::new();
    for i in 0..rng.random_range(0..=6) {
        let dtype = DType::ALL[rng.random_range(0..DType::ALL.len())];
        c.insert(
            format!("layer.{i}.w{}", rng.random_range(0..100)),
            random_tensor(rng, dtype),
        );
    }
    for i in 0..rng.random_range(0..=2) {
        c.metadata.insert(format!("k{i}"), sentence(rng, 3));
    }
    c
}

// ---- malformed containers ----

pub fn raw_file(header: &str, data: &[u8]) -> Vec<u8> {
    let mut out = (header.len() as u64).to_le_bytes().to_vec();
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(data);
    out
}

fn split_file(bytes: &[u8]) -> (serde_json::Map<String, serde_json::Value>, Vec<u8>) {
    let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let header = serde_json::from_slice(&bytes[8..8 + n]).unwrap();
    (header, bytes[8 + n..].to_vec())
}

fn offsets(h: &serde_json::Map<String, serde_json::Value>, name: &str) -> (u64, u64) {
    let o = &h[name]["data_offsets"];
    (o[0].as_u64().unwrap(), o[1].as_u64().unwrap())
}

fn set_offsets(h: &mut serde_json::Map<String, serde_json::Value>, name: &str, b: u64, e: u64) {
    h[name]["data_offsets"] = serde_json::json!([b, e]);
}

/// Overlapping, gapped and out-of-range corruptions of a serialized
/// checkpoint whose tensors are all non-empty, at least two of them.
pub fn malformed_variants(valid: &[u8]) -> Vec<(&'static str, Vec<u8>)> {
    let (header, data) = split_file(valid);
    let mut names: Vec<String> = header.keys().filter(|k| *k != "__metadata__").cloned().collect();
    names.sort_by_key(|n| offsets(&header, n).0);
    assert!(names.len() >= 2);
    let last = names.last().unwrap().clone();
    let second = names[1].clone();
    let mut out = Vec::new();

    let mut h = header.clone();
    let (b, e) = offsets(&h, &second);
    set_offsets(&mut h, &second, b - 1, e - 1);
    out.push(("overlap", raw_file(&serde_json::to_string(&h).unwrap(), &data)));

    let mut h = header.clone();
    let (b, e) = offsets(&h, &last);
    set_offsets(&mut h, &last, b + 1, e + 1);
    let mut d = data[..b as usize].to_vec();
    d.push(0);
    d.extend_from_slice(&data[b as usize..]);
    out.push(("gap", raw_file(&serde_json::to_string(&h).unwrap(), &d)));

    out.push((
        "out-of-range",
        raw_file(&serde_json::to_string(&header).unwrap(), &data[..data.len() - 1]),
    ));

    let mut h = header.clone();
    let (b, e) = offsets(&h, &last);
    set_offsets(&mut h, &last, e, b);
    out.push(("reversed", raw_file(&serde_json::to_string(&h).unwrap(), &data)));
    out
}

/// A checkpoint with `n >= 2` non-empty tensors of mixed dtype.
pub fn dense_checkpoint(rng: &mut StdRng, n: usize) -> Checkpoint {
    let mut c = Checkpoint::new();
    for i in 0..n {
        let dtype = DType::ALL[i % DType::ALL.len()];
        let shape = vec![rng.random_range(1..=4), rng.random_range(1..=4)];
        let count: usize = shape.iter().product();
        let data: Vec<u8> = (0..count * dtype.width()).map(|_| rng.random()).collect();
        c.insert(format!("t{i}"), Tensor::new(dtype, shape, data).unwrap());
    }
    c
}
