//! Kautz–Singleton concatenation and the bit-packed test matrix.
//!
//! Columns are stored column-major in 64-bit words so that OR-ing defective
//! columns and support-containment checks run a word at a time.

use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::FieldElement;
use crate::qary::LinearCode;

/// Construction metadata; every field is optional for matrices read from
/// files or built by hand.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MatrixMeta {
    pub w: Option<usize>,
    pub q: Option<u32>,
    pub m: Option<usize>,
    /// Claimed binary minimum distance (twice the outer code's).
    pub d_binary: Option<usize>,
    /// Exact average distance when it is known from the structure: the full
    /// concatenation, or a prefix of one whose last generator row has full
    /// weight (see `prefix_average_distance`).
    #[serde(serialize_with = "serialize_ratio_opt")]
    pub d_formula: Option<Ratio<u128>>,
}

fn serialize_ratio_opt<S: serde::Serializer>(r: &Option<Ratio<u128>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_str(&r.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestMatrix {
    rows: usize,
    cols: usize,
    words: usize,
    bits: Vec<u64>,
    meta: MatrixMeta,
}

#[inline]
pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl TestMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = words_for(rows);
        TestMatrix {
            rows,
            cols,
            words,
            bits: vec![0; words * cols],
            meta: MatrixMeta::default(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m.meta.w = Some(1);
        m
    }

    /// Builds a matrix from row strings of '0'/'1'.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::zeros(rows.len(), n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::parse(i + 1, 1, "ragged rows"));
            }
            for (j, ch) in row.bytes().enumerate() {
                match ch {
                    b'0' => {}
                    b'1' => m.set(i, j, true),
                    _ => return Err(Error::parse(i + 1, j + 1, "expected 0 or 1")),
                }
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn words_per_column(&self) -> usize {
        self.words
    }

    pub fn meta(&self) -> &MatrixMeta {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: MatrixMeta) {
        self.meta = meta;
    }

    #[inline]
    pub(crate) fn packed_columns(&self) -> &[u64] {
        &self.bits[..self.words * self.cols]
    }

    pub fn column(&self, j: usize) -> &[u64] {
        &self.bits[j * self.words..(j + 1) * self.words]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.column(col)[row / 64] >> (row % 64) & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let word = &mut self.bits[col * self.words + row / 64];
        if value {
            *word |= 1 << (row % 64);
        } else {
            *word &= !(1 << (row % 64));
        }
    }

    pub fn column_weight(&self, j: usize) -> usize {
        self.column(j).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// The common column weight, if every column has the same one.
    pub fn constant_weight(&self) -> Option<usize> {
        if let Some(w) = self.meta.w {
            return Some(w);
        }
        let first = self.column_weight(0);
        (1..self.cols)
            .all(|j| self.column_weight(j) == first)
            .then_some(first)
    }

    #[inline]
    pub fn distance(&self, a: usize, b: usize) -> usize {
        self.column(a)
            .iter()
            .zip(self.column(b))
            .map(|(x, y)| (x ^ y).count_ones() as usize)
            .sum()
    }

    /// Keeps the first `n_keep` columns. The average-distance formula no
    /// longer applies unless every column is kept.
    pub fn truncate(&self, n_keep: usize) -> Result<TestMatrix> {
        if n_keep == 0 || n_keep > self.cols {
            return Err(Error::InvalidParams(format!(
                "cannot keep {n_keep} of {} columns",
                self.cols
            )));
        }
        let mut meta = self.meta.clone();
        if n_keep < self.cols {
            meta.d_formula = None;
        }
        Ok(TestMatrix {
            rows: self.rows,
            cols: n_keep,
            words: self.words,
            bits: self.bits[..n_keep * self.words].to_vec(),
            meta,
        })
    }

    /// Columns with the listed indices, in that order.
    pub fn select_columns(&self, cols: &[usize]) -> TestMatrix {
        let mut out = TestMatrix::zeros(self.rows, cols.len());
        for (dst, &src) in cols.iter().enumerate() {
            out.bits[dst * self.words..(dst + 1) * self.words].copy_from_slice(self.column(src));
        }
        out.meta = MatrixMeta {
            d_formula: None,
            ..self.meta.clone()
        };
        out
    }

    fn header_fields(&self) -> [usize; 3] {
        [
            self.meta.w.unwrap_or(0),
            self.meta.q.unwrap_or(0) as usize,
            self.meta.m.unwrap_or(0),
        ]
    }

    /// ASCII `GTM1` form: header, then M row lines of N characters.
    pub fn write_gtm1<W: Write>(&self, out: &mut W) -> Result<()> {
        let [w, q, m] = self.header_fields();
        writeln!(out, "GTM1 {} {} {w} {q} {m}", self.rows, self.cols)?;
        let mut line = vec![b'0'; self.cols + 1];
        line[self.cols] = b'\n';
        for i in 0..self.rows {
            for (j, ch) in line[..self.cols].iter_mut().enumerate() {
                *ch = if self.get(i, j) { b'1' } else { b'0' };
            }
            out.write_all(&line)?;
        }
        Ok(())
    }

    /// Packed `GTMB` form: header, then one base64 line per column holding
    /// its little-endian 64-bit words.
    pub fn write_gtmb<W: Write>(&self, out: &mut W) -> Result<()> {
        let [w, q, m] = self.header_fields();
        writeln!(out, "GTMB {} {} {w} {q} {m}", self.rows, self.cols)?;
        let mut bytes = Vec::with_capacity(self.words * 8);
        for j in 0..self.cols {
            bytes.clear();
            for word in self.column(j) {
                bytes.extend_from_slice(&word.to_le_bytes());
            }
            writeln!(out, "{}", BASE64.encode(&bytes))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self, packed: bool) -> Vec<u8> {
        let mut buf = Vec::new();
        if packed {
            self.write_gtmb(&mut buf).expect("writing to memory");
        } else {
            self.write_gtm1(&mut buf).expect("writing to memory");
        }
        buf
    }

    /// Reads either format, detected from the magic word.
    pub fn read<R: BufRead>(input: R) -> Result<TestMatrix> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(1, 1, "empty matrix file"))??;
        let mut fields = header.split_ascii_whitespace();
        let magic = fields.next().unwrap_or("");
        let nums: Vec<usize> = fields
            .enumerate()
            .map(|(i, f)| {
                f.parse::<usize>()
                    .map_err(|_| Error::parse(1, 1, format!("header field {} is not an integer: {f:?}", i + 2)))
            })
            .collect::<Result<_>>()?;
        if nums.len() != 5 {
            return Err(Error::parse(1, 1, "header must be `<magic> M N w q m`"));
        }
        let (rows, cols) = (nums[0], nums[1]);
        let mut matrix = TestMatrix::zeros(rows, cols);
        match magic {
            "GTM1" => {
                for i in 0..rows {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::parse(i + 2, 1, "missing matrix row"))??;
                    if line.len() != cols {
                        return Err(Error::parse(
                            i + 2,
                            line.len().min(cols) + 1,
                            format!("expected {cols} characters, found {}", line.len()),
                        ));
                    }
                    for (j, ch) in line.bytes().enumerate() {
                        match ch {
                            b'0' => {}
                            b'1' => matrix.set(i, j, true),
                            _ => return Err(Error::parse(i + 2, j + 1, "expected 0 or 1")),
                        }
                    }
                }
            }
            "GTMB" => {
                for j in 0..cols {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::parse(j + 2, 1, "missing column"))??;
                    let bytes = BASE64
                        .decode(line.trim_end())
                        .map_err(|e| Error::parse(j + 2, 1, format!("bad base64: {e}")))?;
                    if bytes.len() != matrix.words * 8 {
                        return Err(Error::parse(j + 2, 1, "column has the wrong length"));
                    }
                    for (k, chunk) in bytes.chunks_exact(8).enumerate() {
                        matrix.bits[j * matrix.words + k] =
                            u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
                    }
                    if rows % 64 != 0 {
                        let last = matrix.bits[j * matrix.words + matrix.words - 1];
                        if last >> (rows % 64) != 0 {
                            return Err(Error::parse(j + 2, 1, "bits set beyond row count"));
                        }
                    }
                }
            }
            other => return Err(Error::parse(1, 1, format!("unknown magic {other:?}"))),
        }
        if let Some(Ok(extra)) = lines.next() {
            if !extra.trim().is_empty() {
                return Err(Error::parse(rows.max(cols) + 2, 1, "trailing data"));
            }
        }

        let (w, q, m) = (nums[2], nums[3], nums[4]);
        if w > 0 {
            if let Some(j) = (0..cols).find(|&j| matrix.column_weight(j) != w) {
                return Err(Error::parse(1, 1, format!("column {j} does not have weight {w}")));
            }
            matrix.meta.w = Some(w);
        }
        if q > 0 && m > 0 {
            if q * m != rows {
                return Err(Error::parse(1, 1, format!("M = {rows} but q*m = {}", q * m)));
            }
            matrix.meta.q = Some(q as u32);
            matrix.meta.m = Some(m);
        }
        Ok(matrix)
    }
}

/// Unit-weight image of a q-ary symbol: the 1 sits at the symbol's index.
pub fn phi(symbol: FieldElement, q: u32) -> Vec<bool> {
    assert!(symbol.0 < q, "symbol outside the alphabet");
    (0..q).map(|i| i == symbol.0).collect()
}

/// Full Kautz–Singleton image of `code`: M = q*m rows, q^k columns.
pub fn concatenate(code: &LinearCode) -> Result<TestMatrix> {
    let n = code
        .size()
        .filter(|&n| n <= u32::MAX as u64)
        .ok_or_else(|| Error::InvalidParams("code too large to concatenate".into()))?;
    concatenate_prefix(code, n as usize)
}

/// The first `n_keep` columns of `concatenate(code)`, without materialising
/// the rest.
pub fn concatenate_prefix(code: &LinearCode, n_keep: usize) -> Result<TestMatrix> {
    let full = code.size();
    if n_keep == 0 || full.is_some_and(|n| n_keep as u64 > n) {
        return Err(Error::InvalidParams(format!(
            "cannot keep {n_keep} columns of a code with {} words",
            full.map_or("more than 2^64".to_string(), |n| n.to_string())
        )));
    }
    let q = code.q() as usize;
    let m = code.length();
    let mut matrix = TestMatrix::zeros(q * m, n_keep);
    let words = matrix.words;
    matrix
        .bits
        .par_chunks_mut(words)
        .enumerate()
        .for_each(|(j, col)| {
            for (block, sym) in code.codeword(j as u64).into_iter().enumerate() {
                let row = block * q + sym.0 as usize;
                col[row / 64] |= 1 << (row % 64);
            }
        });
    let untruncated = full == Some(n_keep as u64);
    let last_row_full = (0..m).all(|j| !code.entry(code.dimension() - 1, j).is_zero());
    matrix.meta = MatrixMeta {
        w: Some(m),
        q: Some(q as u32),
        m: Some(m),
        d_binary: code.d_claimed().map(|d| 2 * d),
        d_formula: (untruncated || last_row_full).then(|| prefix_average_distance(q as u64, m as u64, n_keep as u64)),
    };
    Ok(matrix)
}

/// Average distance D (min over columns of the mean distance to all columns,
/// self included) of the first n columns of a concatenated linear code whose
/// last generator row h has full weight.
///
/// Write n = a q + r. The first a q columns are a cosets of span(h); summed
/// over any such coset the q-ary distance to a fixed word is m(q - 1). The
/// remaining r columns x + c h are pairwise at q-ary distance m, and any other
/// word is at distance 0 from at most one of them in each coordinate, so the
/// minimum row sum is attained inside the partial block:
/// (n - r) m (q - 1)/q + (r - 1) m.
pub fn prefix_average_distance(q: u64, m: u64, n: u64) -> Ratio<u128> {
    let (q, m, n) = (q as u128, m as u128, n as u128);
    let r = n % q;
    if r == 0 {
        return Ratio::new(2 * m * (q - 1), q);
    }
    Ratio::new(2 * m * ((n - r) * (q - 1) + (r - 1) * q), q * n)
}
