//! LP-format emission.
//!
//! Output is deterministic: variables and rows appear in model order, and
//! coefficients are printed as exact decimals. Flow variables are named
//! `x_<demand>_<link>_<f|b>_<color>` and selection variables `y_<demand>`,
//! both reversible through [`VariableKey::parse`]. Should any name exceed
//! [`MAX_NAME_LEN`], every name is replaced by a short alias and the alias
//! table is returned with the text.

use std::fmt::Write;

use rust_decimal::Decimal;

use crate::milp::{MilpModel, Relation};

pub const MAX_NAME_LEN: usize = 255;

/// Name of the helper column fixed to zero that carries constant rows;
/// LP readers reject rows without any variable.
pub const ZERO_COLUMN: &str = "zero__";

const TERMS_PER_LINE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct LpDocument {
    pub text: String,
    /// Column name used in `text` for each model variable, by index.
    pub variable_names: Vec<String>,
    /// `(alias, original)` pairs when aliasing was needed.
    pub aliases: Vec<(String, String)>,
}

fn write_terms(out: &mut String, terms: &[(usize, Decimal)], names: &[String]) {
    for (k, (i, c)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let neg = c.is_sign_negative();
        let abs = c.abs();
        match (k == 0, neg) {
            (true, false) => {}
            (true, true) => out.push_str("- "),
            (false, false) => out.push_str(" + "),
            (false, true) => out.push_str(" - "),
        }
        if abs != Decimal::ONE {
            write!(out, "{} ", abs.normalize()).unwrap();
        }
        out.push_str(&names[*i]);
    }
}

pub fn emit_lp_text(model: &MilpModel) -> LpDocument {
    let mut names: Vec<String> = model.variables().iter().map(|k| k.to_string()).collect();
    let mut rows: Vec<String> = model.constraints.iter().map(|c| c.name.clone()).collect();
    let mut aliases = Vec::new();
    if names.iter().chain(&rows).any(|n| n.len() > MAX_NAME_LEN) {
        for (i, n) in names.iter_mut().enumerate() {
            let alias = format!("v{i}");
            aliases.push((alias.clone(), std::mem::replace(n, alias)));
        }
        for (i, n) in rows.iter_mut().enumerate() {
            let alias = format!("r{i}");
            aliases.push((alias.clone(), std::mem::replace(n, alias)));
        }
    }

    let mut out = String::new();
    writeln!(out, "\\ variant {} mode {}", model.variant.name(), model.mode.name()).unwrap();
    out.push_str("Minimize\n obj: ");
    if model.objective.is_empty() {
        out.push('0');
    } else {
        write_terms(&mut out, &model.objective, &names);
    }
    out.push_str("\nSubject To\n");
    let mut uses_zero = false;
    for (c, name) in model.constraints.iter().zip(&rows) {
        write!(out, " {name}: ").unwrap();
        if c.terms.is_empty() {
            uses_zero = true;
            write!(out, "0 {ZERO_COLUMN}").unwrap();
        } else {
            write_terms(&mut out, &c.terms, &names);
        }
        let op = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        writeln!(out, " {op} {}", c.rhs.normalize()).unwrap();
    }
    if uses_zero {
        writeln!(out, "Bounds\n {ZERO_COLUMN} = 0").unwrap();
    }
    out.push_str("Binary\n");
    for n in &names {
        writeln!(out, " {n}").unwrap();
    }
    out.push_str("End\n");
    LpDocument { text: out, variable_names: names, aliases }
}
