//! Markdown tables from `omnivat` JSON output.
//!
//! ```text
//! omnivat ablate --seeds 5 --out ablation.json
//! cargo run --example tables -- ablation.json
//! omnivat eval --checkpoint model.ovat suite/target_*.ovem > eval.json
//! cargo run --example tables -- eval.json
//! ```
//!
//! The document kind is detected from its top-level keys.

use std::error::Error;
use std::fs;

use serde_json::Value;

fn pct(v: &Value) -> String {
    v.as_f64().map_or("-".into(), |x| format!("{:.1}", 100.0 * x))
}

fn ablation_table(doc: &Value) -> String {
    let mut out = String::from("| variant | generator | nodes | accuracy | macro-F1 | seeds |\n|---|---|---|---|---|---|\n");
    for e in doc["entries"].as_array().into_iter().flatten() {
        let node = e["node_count"].as_u64().map_or("-".into(), |n| n.to_string());
        let generator = e["generator"].as_str().unwrap_or("-");
        let seeds = e["per_seed"].as_array().map_or(0, Vec::len);
        out += &format!(
            "| {} | {generator} | {node} | {} | {} | {seeds} |\n",
            e["variant"].as_str().unwrap_or("?"),
            pct(&e["mean_accuracy"]),
            pct(&e["mean_macro_f1"])
        );
    }
    out
}

/// One row per metric, one column per domain, plus the average column.
fn eval_table(doc: &Value) -> String {
    let domains = doc["domains"].as_array().cloned().unwrap_or_default();
    let names: Vec<&str> = domains.iter().map(|d| d["domain"].as_str().unwrap_or("?")).collect();
    let mut out = format!("| metric | {} | avg |\n|---|{}---|\n", names.join(" | "), "---|".repeat(names.len()));
    for key in ["accuracy", "macro_f1"] {
        let cells: Vec<String> = domains.iter().map(|d| pct(&d[key])).collect();
        out += &format!("| {key} | {} | {} |\n", cells.join(" | "), pct(&doc["average"][key]));
    }
    let margins: Vec<String> =
        domains.iter().map(|d| d["cosine_margin"].as_f64().map_or("-".into(), |m| format!("{m:.3}"))).collect();
    out += &format!("| cosine_margin | {} | |\n", margins.join(" | "));
    out
}

fn main() -> Result<(), Box<dyn Error>> {
    let paths: Vec<String> = std::env::args().skip(1).collect();
    if paths.is_empty() {
        return Err("usage: tables FILE.json...".into());
    }
    for path in paths {
        let doc: Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
        let table = if doc.get("entries").is_some() {
            ablation_table(&doc)
        } else if doc.get("domains").is_some() {
            eval_table(&doc)
        } else {
            return Err(format!("{path}: neither an ablation report nor an eval summary").into());
        };
        println!("{path}\n\n{table}");
    }
    Ok(())
}
