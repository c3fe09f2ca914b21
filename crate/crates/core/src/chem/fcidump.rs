//! FCIDUMP text format: `&FCI` namelist header, then `value i j k l`
//! records with 1-based chemist-notation indices.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::fermion::SecondQuantizedHamiltonian;
use super::integrals::Eri;
use crate::error::{Error, Result};

fn err<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Fcidump {
        line,
        message: message.into(),
    })
}

fn parse_value(s: &str, line: usize) -> Result<f64> {
    s.replace(['D', 'd'], "e")
        .parse()
        .or_else(|_| err(line, format!("bad number {s:?}")))
}

struct Header {
    norb: usize,
    nelec: usize,
    ms2: i32,
}

fn parse_header(text: &str, line: usize) -> Result<Header> {
    let body = text.trim_start().trim_start_matches(['&', '$']);
    let body = body
        .strip_prefix("FCI")
        .or_else(|| body.strip_prefix("fci"))
        .unwrap_or(body);
    let mut fields: HashMap<String, Vec<String>> = HashMap::new();
    let mut current: Option<String> = None;
    for tok in body.split([',', ' ', '\t', '\n', '\r']).filter(|t| !t.is_empty()) {
        let tok = tok
            .trim_end_matches("&END")
            .trim_end_matches("&end")
            .trim_end_matches('/');
        if tok.is_empty() {
            continue;
        }
        if let Some((k, v)) = tok.split_once('=') {
            let key = k.trim().to_ascii_uppercase();
            let vals = fields.entry(key.clone()).or_default();
            if !v.is_empty() {
                vals.push(v.to_string());
            }
            current = Some(key);
        } else if let Some(k) = &current {
            fields.get_mut(k).expect("current key").push(tok.to_string());
        }
    }
    let int = |key: &str| -> Result<Option<i64>> {
        match fields.get(key).and_then(|v| v.first()) {
            None => Ok(None),
            Some(v) => v
                .parse::<i64>()
                .map(Some)
                .or_else(|_| err(line, format!("{key} must be an integer, got {v}"))),
        }
    };
    let norb = int("NORB")?.ok_or(()).or_else(|_| err(line, "header lacks NORB"))?;
    let nelec = int("NELEC")?.ok_or(()).or_else(|_| err(line, "header lacks NELEC"))?;
    let ms2 = int("MS2")?.unwrap_or(0);
    if norb < 1 || nelec < 0 {
        return err(line, format!("invalid NORB={norb} or NELEC={nelec}"));
    }
    Ok(Header {
        norb: norb as usize,
        nelec: nelec as usize,
        ms2: ms2 as i32,
    })
}

/// Parses FCIDUMP text, completing the eightfold symmetry of `(ij|kl)` and
/// the symmetry of `h_ij`.
pub fn fcidump_parse(text: &str) -> Result<SecondQuantizedHamiltonian> {
    let mut lines = text.lines().enumerate();
    let mut header = String::new();
    let mut header_line = 1;
    let mut closed = false;
    for (i, l) in lines.by_ref() {
        if header.is_empty() {
            header_line = i + 1;
            if l.trim().is_empty() {
                continue;
            }
            if !l.trim_start().starts_with(['&', '$']) {
                return err(i + 1, "file must start with an &FCI header");
            }
        }
        header.push_str(l);
        header.push('\n');
        let t = l.trim();
        if t.ends_with("&END") || t.ends_with("&end") || t.ends_with('/') || t.ends_with("$END") || t.ends_with("$end")
        {
            closed = true;
            break;
        }
    }
    if !closed {
        return err(header_line, "unterminated header");
    }
    let h = parse_header(&header, header_line)?;
    let n = h.norb;
    let mut one = DMatrix::<f64>::zeros(n, n);
    let mut seen_one = vec![false; n * n];
    let mut two = Eri::zeros(n);
    let mut seen_two: HashMap<(usize, usize, usize, usize), f64> = HashMap::new();
    let mut core = None;
    for (i, l) in lines {
        let line = i + 1;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 5 {
            return err(line, format!("expected 5 fields, found {}", f.len()));
        }
        let v = parse_value(f[0], line)?;
        let mut idx = [0usize; 4];
        for (d, s) in idx.iter_mut().zip(&f[1..]) {
            *d = s.parse().or_else(|_| err(line, format!("bad index {s:?}")))?;
            if *d > n {
                return err(line, format!("index {d} exceeds NORB={n}"));
            }
        }
        match idx {
            [0, 0, 0, 0] => {
                if core.is_some_and(|c| c != v) {
                    return err(line, "conflicting core energy");
                }
                core = Some(v);
            }
            [_, 0, 0, 0] => {} // orbital energy, unused
            [p, q, 0, 0] if p > 0 && q > 0 => {
                let (p, q) = (p - 1, q - 1);
                for (a, b) in [(p, q), (q, p)] {
                    if seen_one[a * n + b] && one[(a, b)] != v {
                        return err(line, format!("conflicting h({},{})", p + 1, q + 1));
                    }
                    seen_one[a * n + b] = true;
                    one[(a, b)] = v;
                }
            }
            [p, q, r, s] if p > 0 && q > 0 && r > 0 && s > 0 => {
                let key = canonical(p - 1, q - 1, r - 1, s - 1);
                if let Some(&old) = seen_two.get(&key) {
                    if old != v {
                        return err(line, format!("conflicting ({p}{q}|{r}{s})"));
                    }
                }
                seen_two.insert(key, v);
                two.set_symmetric(p - 1, q - 1, r - 1, s - 1, v);
            }
            _ => return err(line, format!("unrecognized index pattern {idx:?}")),
        }
    }
    Ok(SecondQuantizedHamiltonian {
        one_body: one,
        two_body: two,
        core_energy: core.unwrap_or(0.0),
        n_electrons: h.nelec,
        ms2: h.ms2,
    })
}

fn canonical(i: usize, j: usize, k: usize, l: usize) -> (usize, usize, usize, usize) {
    Eri::images(i, j, k, l).into_iter().max().expect("eight images")
}

pub fn fcidump_read(path: impl AsRef<Path>) -> Result<SecondQuantizedHamiltonian> {
    fcidump_parse(&std::fs::read_to_string(path)?)
}

/// Writes unique nonzero integrals with shortest round-trip formatting.
pub fn fcidump_write<W: Write>(sq: &SecondQuantizedHamiltonian, mut w: W) -> Result<()> {
    let n = sq.n_orbitals();
    writeln!(w, " &FCI NORB={n},NELEC={},MS2={},", sq.n_electrons, sq.ms2)?;
    writeln!(w, "  ORBSYM={}", vec!["1,"; n].concat())?;
    writeln!(w, "  ISYM=1,")?;
    writeln!(w, " &END")?;
    for (i, j, k, l) in Eri::unique_indices(n) {
        let v = sq.two_body.get(i, j, k, l);
        if v != 0.0 {
            writeln!(w, "{v:e} {} {} {} {}", i + 1, j + 1, k + 1, l + 1)?;
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let v = sq.one_body[(i, j)];
            if v != 0.0 {
                writeln!(w, "{v:e} {} {} 0 0", i + 1, j + 1)?;
            }
        }
    }
    writeln!(w, "{:e} 0 0 0 0", sq.core_energy)?;
    Ok(())
}
