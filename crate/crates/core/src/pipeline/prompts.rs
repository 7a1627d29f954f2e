//! Prompt templates for the translators and the judge. These strings are
//! sent to models as-is; do not reflow them.

use super::PipelineError;

const TEACHER: &str = "Translate from English to Arabic: {text}";

// The trailing space after "engine." is part of the template.
const LIGHTWEIGHT: &str = "You are a professional translation engine. \n\
Translate English to Modern Standard Arabic.\n\
Reply ONLY with the Arabic translation\u{2014}no quotes, notes, or explanations.\n\
Translate everything that follows into Arabic: {text}";

const PLAIN: &str = "Translate everything that follows into Arabic: {text}";

const JUDGE: &str = "\nYou are a strict bilingual judge. You will be given a translation pair.\n\
Arabic: {ar_text}\n\
English: {en_text}\n\
\n\
If the English is a correct and natural translation of the Arabic, output only:\n\
accept\n\
Otherwise, output only:\n\
reject\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Template {
    /// Minimal instruction used with the large teacher.
    #[default]
    Teacher,
    /// Stricter block used with the small fine-tuned translator.
    Lightweight,
    /// One-line prompt given to every other model at evaluation time.
    Plain,
}

impl Template {
    pub fn parse(s: &str) -> Option<Template> {
        match s {
            "teacher" => Some(Template::Teacher),
            "lightweight" => Some(Template::Lightweight),
            "plain" => Some(Template::Plain),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Template::Teacher => "teacher",
            Template::Lightweight => "lightweight",
            Template::Plain => "plain",
        }
    }
}

pub fn render_translation_prompt(text: &str, template: Template) -> Result<String, PipelineError> {
    if text.is_empty() {
        return Err(PipelineError::EmptyText);
    }
    let body = match template {
        Template::Teacher => TEACHER,
        Template::Lightweight => LIGHTWEIGHT,
        Template::Plain => PLAIN,
    };
    Ok(body.replacen("{text}", text, 1))
}

pub fn render_judge_prompt(ar: &str, en: &str) -> Result<String, PipelineError> {
    if ar.is_empty() || en.is_empty() {
        return Err(PipelineError::EmptyText);
    }
    // Split on the placeholders instead of chained replace so that
    // substituted text containing "{en_text}" stays literal.
    let (head, rest) = JUDGE.split_once("{ar_text}").expect("template has ar slot");
    let (mid, tail) = rest.split_once("{en_text}").expect("template has en slot");
    let mut out = String::with_capacity(JUDGE.len() + ar.len() + en.len());
    out.push_str(head);
    out.push_str(ar);
    out.push_str(mid);
    out.push_str(en);
    out.push_str(tail);
    Ok(out)
}
