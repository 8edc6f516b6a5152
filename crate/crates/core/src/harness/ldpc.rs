//! Binary LDPC codes: alist parsing, a seeded regular-code generator, and the
//! decoding factor graph for a binary symmetric channel.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::model::{build_graph, FactorDef, FactorGraph, VariableDef};
use crate::oracle::codeword_basis;
use crate::scalar::Scalar;

/// Parity-check structure: `check_scopes[c]` lists the bits in check `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    pub n: usize,
    pub m: usize,
    pub check_scopes: Vec<Vec<usize>>,
}

impl LdpcCode {
    pub fn new(n: usize, check_scopes: Vec<Vec<usize>>) -> Result<Self, HarnessError> {
        if n == 0 {
            return Err(HarnessError::InvalidCode("zero block length".into()));
        }
        for (c, s) in check_scopes.iter().enumerate() {
            if s.is_empty() {
                return Err(HarnessError::InvalidCode(format!("check {c} is empty")));
            }
            if let Some(&b) = s.iter().find(|&&b| b >= n) {
                return Err(HarnessError::InvalidCode(format!("check {c} references bit {b} >= {n}")));
            }
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != s.len() {
                return Err(HarnessError::InvalidCode(format!("check {c} repeats a bit")));
            }
        }
        Ok(Self { n, m: check_scopes.len(), check_scopes })
    }

    pub fn is_codeword(&self, word: &[u8]) -> bool {
        word.len() == self.n && self.syndrome(word).iter().all(|&s| s == 0)
    }

    pub fn syndrome(&self, word: &[u8]) -> Vec<u8> {
        self.check_scopes.iter().map(|s| s.iter().fold(0, |acc, &b| acc ^ (word[b] & 1))).collect()
    }

    /// Code dimension `n - rank(H)` over GF(2).
    pub fn dimension(&self) -> usize {
        codeword_basis(self).len()
    }

    /// Column degrees (number of checks per bit).
    pub fn bit_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for s in &self.check_scopes {
            for &b in s {
                d[b] += 1;
            }
        }
        d
    }
}

fn numbers(line: &str, what: &str) -> Result<Vec<usize>, HarnessError> {
    line.split_whitespace()
        .map(|t| t.parse().map_err(|_| HarnessError::MalformedAlist(format!("bad integer {t:?} in {what}"))))
        .collect()
}

/// Parses MacKay's alist format. Zero padding in index lists is ignored.
pub fn parse_alist(text: &str) -> Result<LdpcCode, HarnessError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| HarnessError::MalformedAlist(format!("file ends before {what}")))
    };
    let header = numbers(next("header")?, "header")?;
    let [n, m] = header[..] else {
        return Err(HarnessError::MalformedAlist("header must be `n m`".into()));
    };
    let _max_degrees = numbers(next("max degrees")?, "max degrees")?;
    let col_deg = numbers(next("column degrees")?, "column degrees")?;
    let row_deg = numbers(next("row degrees")?, "row degrees")?;
    if col_deg.len() != n || row_deg.len() != m {
        return Err(HarnessError::MalformedAlist(format!(
            "expected {n} column and {m} row degrees, got {} and {}",
            col_deg.len(),
            row_deg.len()
        )));
    }
    let mut read_lists = |count: usize, degs: &[usize], bound: usize, what: &str| {
        let mut out = Vec::with_capacity(count);
        for (k, &d) in degs.iter().enumerate() {
            let list: Vec<usize> = numbers(next(what)?, what)?.into_iter().filter(|&v| v != 0).collect();
            if list.len() != d {
                return Err(HarnessError::MalformedAlist(format!("{what} {k} has {} entries, degree {d}", list.len())));
            }
            if let Some(&v) = list.iter().find(|&&v| v > bound) {
                return Err(HarnessError::MalformedAlist(format!("{what} {k} index {v} exceeds {bound}")));
            }
            out.push(list.into_iter().map(|v| v - 1).collect::<Vec<usize>>());
        }
        Ok::<_, HarnessError>(out)
    };
    let cols = read_lists(n, &col_deg, m, "column")?;
    let rows = read_lists(m, &row_deg, n, "row")?;

    for (c, row) in rows.iter().enumerate() {
        for &b in row {
            if !cols[b].contains(&c) {
                return Err(HarnessError::InconsistentAdjacency(format!("row {c} lists bit {b}, column does not")));
            }
        }
    }
    let total_cols: usize = cols.iter().map(Vec::len).sum();
    let total_rows: usize = rows.iter().map(Vec::len).sum();
    if total_cols != total_rows {
        return Err(HarnessError::InconsistentAdjacency(format!("{total_cols} column entries vs {total_rows} row entries")));
    }
    LdpcCode::new(n, rows)
}

/// Writes a code in alist format (unpadded index lists).
pub fn write_alist(code: &LdpcCode) -> String {
    let mut cols = vec![Vec::new(); code.n];
    for (c, s) in code.check_scopes.iter().enumerate() {
        for &b in s {
            cols[b].push(c + 1);
        }
    }
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let col_deg: Vec<usize> = cols.iter().map(Vec::len).collect();
    let row_deg: Vec<usize> = code.check_scopes.iter().map(Vec::len).collect();
    let mut out = format!(
        "{} {}\n{} {}\n{}\n{}\n",
        code.n,
        code.m,
        col_deg.iter().max().unwrap_or(&0),
        row_deg.iter().max().unwrap_or(&0),
        join(&col_deg),
        join(&row_deg)
    );
    for c in &cols {
        out += &join(c);
        out.push('\n');
    }
    for s in &code.check_scopes {
        let one_based: Vec<usize> = s.iter().map(|b| b + 1).collect();
        out += &join(&one_based);
        out.push('\n');
    }
    out
}

/// Random `(dv, dc)`-regular code by socket matching, redrawn until no check
/// repeats a bit and the parity checks have full rank.
pub fn regular_code(n: usize, dv: usize, dc: usize, seed: u64) -> Result<LdpcCode, HarnessError> {
    if dv == 0 || dc == 0 || (n * dv) % dc != 0 {
        return Err(HarnessError::InvalidCode(format!("n * dv = {} not divisible by dc = {dc}", n * dv)));
    }
    let m = n * dv / dc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sockets: Vec<usize> = (0..n).flat_map(|b| std::iter::repeat_n(b, dv)).collect();
    for _ in 0..10_000 {
        sockets.shuffle(&mut rng);
        let scopes: Vec<Vec<usize>> = sockets.chunks(dc).map(|c| c.to_vec()).collect();
        if let Ok(code) = LdpcCode::new(n, scopes) {
            if code.dimension() == n - m {
                return Ok(code);
            }
        }
    }
    Err(HarnessError::InvalidCode(format!("no simple full-rank ({dv},{dc}) code found for n = {n}")))
}

/// Flips every bit of `word` independently with probability `p`.
pub fn bsc_transmit<R: Rng>(word: &[u8], p: f64, rng: &mut R) -> Vec<u8> {
    word.iter().map(|&b| b ^ u8::from(rng.random_bool(p))).collect()
}

/// BSC channel energy `-ln(1-p)` for agreeing bits, `-ln p` otherwise.
pub fn channel_energy(word: &[u8], received: &[u8], p: f64) -> f64 {
    word.iter()
        .zip(received)
        .map(|(a, b)| if a == b { -(1.0 - p).ln() } else { -p.ln() })
        .sum()
}

/// Decoding graph: `n` binary variables, one unary channel factor per bit
/// (in bit order) followed by one parity factor per check.
pub fn ldpc_to_graph<S: Scalar>(code: &LdpcCode, received: &[u8], p: f64) -> Result<FactorGraph<S>, HarnessError> {
    if !(p > 0.0 && p < 0.5) {
        return Err(HarnessError::CrossoverOutOfRange(p));
    }
    if received.len() != code.n {
        return Err(HarnessError::InvalidCode(format!("received {} bits, code has {}", received.len(), code.n)));
    }
    let agree = S::lit(-(1.0 - p).ln());
    let flip = S::lit(-p.ln());
    let mut factors: Vec<FactorDef<S>> = received
        .iter()
        .enumerate()
        .map(|(i, &y)| FactorDef::new(vec![i], if y == 0 { vec![agree, flip] } else { vec![flip, agree] }))
        .collect();
    for s in &code.check_scopes {
        let table = (0..1usize << s.len())
            .map(|cell| if cell.count_ones() % 2 == 0 { S::zero() } else { S::infinity() })
            .collect();
        factors.push(FactorDef::new(s.clone(), table));
    }
    let vars = (0..code.n).map(|i| VariableDef::new(format!("b{i}"), 2)).collect();
    Ok(build_graph(vars, factors)?)
}
