//! Instruction records and their Arabic counterparts.

use serde::{Deserialize, Serialize};

use super::judge::ParallelPair;
use super::prompts::{render_translation_prompt, Template};
use super::state::{Fingerprint, JobStore};
use super::PipelineError;
use crate::inference::batch::run_indexed;
use crate::inference::{BatchOptions, Completer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    #[serde(default, alias = "system_prompt", skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(alias = "question")]
    pub instruction: String,
    pub response: String,
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilingualTuple {
    pub instr_en: String,
    pub instr_ar: String,
    pub resp_en: String,
    pub resp_ar: String,
}

impl BilingualTuple {
    /// The instruction pair and the response pair, in that order.
    pub fn directed_pairs(&self) -> [ParallelPair; 2] {
        [
            ParallelPair {
                ar: self.instr_ar.clone(),
                en: self.instr_en.clone(),
            },
            ParallelPair {
                ar: self.resp_ar.clone(),
                en: self.resp_en.clone(),
            },
        ]
    }
}

/// A tuple as stored on disk, tagged with its dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleRecord {
    #[serde(flatten)]
    pub tuple: BilingualTuple,
    #[serde(default)]
    pub source: String,
}

pub fn build_bilingual_tuples(
    records: &[InstructionRecord],
    instr_ar: &[String],
    resp_ar: &[String],
) -> Result<Vec<BilingualTuple>, PipelineError> {
    for (what, len) in [
        ("instruction translations", instr_ar.len()),
        ("response translations", resp_ar.len()),
    ] {
        if len != records.len() {
            return Err(PipelineError::LengthMismatch {
                what,
                left: records.len(),
                right: len,
            });
        }
    }
    let mut out = Vec::with_capacity(records.len());
    for (index, ((r, ia), ra)) in records.iter().zip(instr_ar).zip(resp_ar).enumerate() {
        let t = BilingualTuple {
            instr_en: r.instruction.clone(),
            instr_ar: ia.clone(),
            resp_en: r.response.clone(),
            resp_ar: ra.clone(),
        };
        for (field, v) in [
            ("instr_en", &t.instr_en),
            ("instr_ar", &t.instr_ar),
            ("resp_en", &t.resp_en),
            ("resp_ar", &t.resp_ar),
        ] {
            if v.is_empty() {
                return Err(PipelineError::EmptyField { index, field });
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// Translates instruction and response of every record, then pairs them.
/// Prompt `2i` is record `i`'s instruction, `2i + 1` its response.
pub fn translate_records<C: Completer + ?Sized>(
    records: &[InstructionRecord],
    template: Template,
    client: &C,
    opts: BatchOptions<'_>,
    store: &mut JobStore,
) -> Result<Vec<BilingualTuple>, PipelineError> {
    for (index, r) in records.iter().enumerate() {
        if r.instruction.is_empty() {
            return Err(PipelineError::EmptyField {
                index,
                field: "instruction",
            });
        }
        if r.response.is_empty() {
            return Err(PipelineError::EmptyField {
                index,
                field: "response",
            });
        }
    }
    let mut fp = Fingerprint::new("translate-records/v1");
    fp.push_str(template.as_str()).push_str(&client.descriptor());
    fp.push(&(records.len() as u64).to_le_bytes());
    for r in records {
        fp.push_str(&r.instruction).push_str(&r.response);
    }
    let out = run_indexed(
        2 * records.len(),
        &fp.finish(),
        |i| {
            let r = &records[i / 2];
            let text = if i % 2 == 0 { &r.instruction } else { &r.response };
            render_translation_prompt(text, template).expect("validated non-empty")
        },
        client,
        opts,
        store,
    )?;
    let (instr_ar, resp_ar): (Vec<String>, Vec<String>) =
        out.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())).unzip();
    build_bilingual_tuples(records, &instr_ar, &resp_ar)
}

/// Translates free-standing texts, one prompt each, outputs in input order.
pub fn translate_texts<C: Completer + ?Sized>(
    texts: &[String],
    template: Template,
    client: &C,
    opts: BatchOptions<'_>,
    store: &mut JobStore,
) -> Result<Vec<String>, PipelineError> {
    if let Some(index) = texts.iter().position(|t| t.is_empty()) {
        return Err(PipelineError::EmptyField { index, field: "text" });
    }
    let mut fp = Fingerprint::new("translate-texts/v1");
    fp.push_str(template.as_str()).push_str(&client.descriptor());
    fp.push(&(texts.len() as u64).to_le_bytes());
    for t in texts {
        fp.push_str(t);
    }
    Ok(run_indexed(
        texts.len(),
        &fp.finish(),
        |i| render_translation_prompt(&texts[i], template).expect("validated non-empty"),
        client,
        opts,
        store,
    )?)
}
