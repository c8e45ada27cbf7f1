//! Token-level contribution heatmaps.
//!
//! Maps per-token Evidential Contribution onto color: intensity follows
//! the absolute value (normalized per rollout by the maximum, quantized
//! to 256 levels) and hue encodes the sign, positive green and negative
//! red. Terminal output uses 24-bit color escapes with a bracketed
//! numeric fallback; web output is one self-contained HTML document.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output format of [`render_heatmap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapFormat {
    /// 24-bit color escape sequences.
    Ansi,
    /// Plain text with bracketed numeric annotations.
    Plain,
    /// Self-contained HTML document.
    Html,
}

/// Tokens with their contribution scores and derived shading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapDoc {
    /// Display strings, one per token.
    pub tokens: Vec<String>,
    /// Token-level contributions.
    pub eps: Vec<f64>,
    /// `|eps| / scale` clamped to `[0, 1]`, quantized to 256 levels;
    /// all zero when every contribution is zero.
    pub intensity: Vec<f64>,
    /// Normalization scale actually used.
    pub scale: f64,
}

/// Quantization granularity of the intensity channel.
const LEVELS: f64 = 255.0;

impl HeatmapDoc {
    /// Per-rollout normalization: scale is the maximum |eps|.
    pub fn new(tokens: Vec<String>, eps: Vec<f64>) -> Result<Self> {
        let max = eps.iter().map(|e| e.abs()).fold(0.0, f64::max);
        Self::with_scale(tokens, eps, max)
    }

    /// Absolute-scale mode for cross-rollout comparison: intensities are
    /// normalized by the supplied maximum instead of the rollout's own.
    pub fn with_scale(tokens: Vec<String>, eps: Vec<f64>, scale: f64) -> Result<Self> {
        if tokens.len() != eps.len() {
            return Err(Error::LengthMismatch { expected: tokens.len(), got: eps.len() });
        }
        let intensity = eps
            .iter()
            .map(|e| {
                if scale > 0.0 {
                    ((e.abs() / scale).min(1.0) * LEVELS).round() / LEVELS
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { tokens, eps, intensity, scale })
    }

    /// Terminal rendering with truecolor backgrounds. Positive scores
    /// shade green, negative red, brighter with larger |eps|.
    pub fn to_ansi(&self) -> String {
        let mut out = String::new();
        for ((token, &eps), &intensity) in
            self.tokens.iter().zip(&self.eps).zip(&self.intensity)
        {
            let level = (intensity * LEVELS).round() as u8;
            let (r, g, b) = if eps >= 0.0 {
                (0, level, 0)
            } else {
                (level, 0, 0)
            };
            out.push_str(&format!("\x1b[48;2;{r};{g};{b}m{token}\x1b[0m "));
        }
        out.push('\n');
        out
    }

    /// No-color fallback: every token annotated with its signed score.
    pub fn to_plain(&self) -> String {
        let mut out = String::new();
        for (token, &eps) in self.tokens.iter().zip(&self.eps) {
            out.push_str(&format!("{token}[{eps:+.4}] "));
        }
        out.push('\n');
        out
    }

    /// Single self-contained HTML document; no external assets.
    pub fn to_html(&self) -> String {
        let mut spans = String::new();
        for ((token, &eps), &intensity) in
            self.tokens.iter().zip(&self.eps).zip(&self.intensity)
        {
            let hue = if eps >= 0.0 { "0,160,0" } else { "200,0,0" };
            spans.push_str(&format!(
                "<span title=\"{eps:+.6}\" style=\"background: rgba({hue},{intensity:.4}); \
                 padding: 2px 4px; margin: 1px; border-radius: 3px; display: inline-block;\">{}</span>\n",
                html_escape(token)
            ));
        }
        format!(
            "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\
             <title>Token contribution heatmap</title>\
             <style>body {{ font-family: monospace; line-height: 2.0; }}</style>\
             </head>\n<body>\n<p>scale = {:.6}; green = positive, red = negative; \
             opacity follows |score|</p>\n<div>\n{spans}</div>\n</body></html>\n",
            self.scale
        )
    }
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders token display strings and their contributions in the chosen
/// format. The mapping from |eps| to intensity is monotone and the sign
/// picks the hue.
pub fn render_heatmap(tokens: &[String], eps: &[f64], format: HeatmapFormat) -> Result<String> {
    let doc = HeatmapDoc::new(tokens.to_vec(), eps.to_vec())?;
    Ok(match format {
        HeatmapFormat::Ansi => doc.to_ansi(),
        HeatmapFormat::Plain => doc.to_plain(),
        HeatmapFormat::Html => doc.to_html(),
    })
}
