//! UAI `MARKOV` model files.
//!
//! Tables are probabilities listed with the last scope variable fastest,
//! which matches the in-memory energy layout. Probabilities map to energies
//! by `-ln`, zeros to `+inf`.

use super::HarnessError;
use crate::model::{FactorDef, FactorGraph};
use crate::scalar::Scalar;

struct Tokens<'a> {
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str, HarnessError> {
        self.iter.next().ok_or_else(|| HarnessError::MalformedUai(format!("file ends before {what}")))
    }

    fn usize(&mut self, what: &str) -> Result<usize, HarnessError> {
        let t = self.next(what)?;
        t.parse().map_err(|_| HarnessError::MalformedUai(format!("expected integer for {what}, got {t:?}")))
    }

    fn f64(&mut self, what: &str) -> Result<f64, HarnessError> {
        let t = self.next(what)?;
        t.parse().map_err(|_| HarnessError::MalformedUai(format!("expected number for {what}, got {t:?}")))
    }
}

pub fn parse_uai<S: Scalar>(text: &str) -> Result<FactorGraph<S>, HarnessError> {
    let mut tok = Tokens { iter: text.split_whitespace() };
    let kind = tok.next("model type")?;
    if !kind.eq_ignore_ascii_case("MARKOV") {
        return Err(HarnessError::MalformedUai(format!("unsupported model type {kind:?}")));
    }
    let n = tok.usize("variable count")?;
    let cards = (0..n).map(|_| tok.usize("cardinality")).collect::<Result<Vec<_>, _>>()?;
    let m = tok.usize("factor count")?;
    let mut scopes = Vec::with_capacity(m);
    for a in 0..m {
        let k = tok.usize("scope size")?;
        let scope = (0..k).map(|_| tok.usize("scope variable")).collect::<Result<Vec<_>, _>>()?;
        if let Some(&v) = scope.iter().find(|&&v| v >= n) {
            return Err(HarnessError::MalformedUai(format!("factor {a} references variable {v}")));
        }
        scopes.push(scope);
    }
    let mut factors = Vec::with_capacity(m);
    for (a, scope) in scopes.into_iter().enumerate() {
        let size = tok.usize("table size")?;
        let expected: usize = scope.iter().map(|&v| cards[v]).product();
        if size != expected {
            return Err(HarnessError::MalformedUai(format!("factor {a} declares {size} entries, scope implies {expected}")));
        }
        let mut energies = Vec::with_capacity(size);
        for _ in 0..size {
            let p = tok.f64("table entry")?;
            if p < 0.0 || p.is_nan() {
                return Err(HarnessError::NegativeProbability { factor: a, value: p });
            }
            energies.push(if p == 0.0 { S::infinity() } else { S::lit(-p.ln()) });
        }
        factors.push(FactorDef::new(scope, energies));
    }
    if let Some(extra) = tok.iter.next() {
        return Err(HarnessError::MalformedUai(format!("trailing token {extra:?}")));
    }
    Ok(FactorGraph::from_tables(&cards, factors)?)
}

pub fn write_uai<S: Scalar>(graph: &FactorGraph<S>) -> String {
    let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
    let mut out = String::from("MARKOV\n");
    out += &format!("{}\n", graph.num_variables());
    out += &join(&mut graph.cardinalities().iter().map(usize::to_string));
    out += &format!("\n{}\n", graph.num_factors());
    for f in graph.factors() {
        out += &format!("{} {}\n", f.arity(), join(&mut f.scope().iter().map(usize::to_string)));
    }
    for f in graph.factors() {
        out += &format!("\n{}\n", f.table_size());
        let probs = f.energies().iter().map(|&e| {
            let p = if e == S::infinity() { 0.0 } else { (-e.as_f64()).exp() };
            format!("{p:e}")
        });
        out += &join(&mut probs.into_iter());
        out.push('\n');
    }
    out
}
