//! q-ary linear codes: Reed–Solomon evaluation codes, Gilbert–Varshamov codes
//! built by the method of conditional expectations, and exact minimum-distance
//! enumeration for small instances.
//!
//! Messages are indexed lexicographically with the first generator row as the
//! most significant digit, so message `i` of a code with `k = 2` over GF(q) is
//! `(i / q, i % q)`.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldSpec};

/// Default work budget of `min_distance_exact`, in codeword-coordinate operations.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1 << 24;

/// Largest number of messages `gv_construct` will hold in memory.
pub const MAX_GV_MESSAGES: u64 = 1 << 28;

/// Remaining-trial count up to which the construction compares candidate
/// scores with exact integer arithmetic.
pub const EXACT_TAIL_LIMIT: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearCode {
    field: FieldSpec,
    k: usize,
    m: usize,
    /// Row-major k x m.
    generator: Vec<FieldElement>,
    d_claimed: Option<usize>,
}

impl LinearCode {
    pub fn new(
        field: FieldSpec,
        k: usize,
        m: usize,
        generator: Vec<FieldElement>,
        d_claimed: Option<usize>,
    ) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::InvalidParams(format!(
                "code dimensions must be positive (k={k}, m={m})"
            )));
        }
        if generator.len() != k * m {
            return Err(Error::InvalidParams(format!(
                "generator has {} entries, expected {k}x{m}",
                generator.len()
            )));
        }
        if let Some(bad) = generator.iter().find(|g| g.0 >= field.order()) {
            return Err(Error::InvalidParams(format!(
                "generator entry {bad} outside GF({})",
                field.order()
            )));
        }
        if let Some(j) = (0..m).find(|&j| (0..k).all(|r| generator[r * m + j].is_zero())) {
            return Err(Error::InvalidParams(format!("generator column {j} is all-zero")));
        }
        if let Some(d) = d_claimed {
            if d > m {
                return Err(Error::InvalidParams(format!(
                    "claimed distance {d} exceeds length {m}"
                )));
            }
        }
        Ok(LinearCode {
            field,
            k,
            m,
            generator,
            d_claimed,
        })
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn q(&self) -> u32 {
        self.field.order()
    }

    pub fn dimension(&self) -> usize {
        self.k
    }

    pub fn length(&self) -> usize {
        self.m
    }

    pub fn generator(&self) -> &[FieldElement] {
        &self.generator
    }

    pub fn entry(&self, row: usize, col: usize) -> FieldElement {
        self.generator[row * self.m + col]
    }

    pub fn d_claimed(&self) -> Option<usize> {
        self.d_claimed
    }

    /// Number of codewords q^k, or `None` if it does not fit in a u64.
    pub fn size(&self) -> Option<u64> {
        (self.q() as u64).checked_pow(self.k as u32)
    }

    /// Message digits of lexicographic index `index` (first row most significant).
    pub fn message(&self, mut index: u64) -> Vec<FieldElement> {
        let q = self.q() as u64;
        let mut digits = vec![FieldElement::ZERO; self.k];
        for r in (0..self.k).rev() {
            digits[r] = FieldElement((index % q) as u32);
            index /= q;
        }
        digits
    }

    pub fn encode(&self, message: &[FieldElement]) -> Vec<FieldElement> {
        assert_eq!(message.len(), self.k, "message length must equal the dimension");
        let mut word = vec![FieldElement::ZERO; self.m];
        for (r, &u) in message.iter().enumerate() {
            if u.is_zero() {
                continue;
            }
            let row = &self.generator[r * self.m..(r + 1) * self.m];
            for (c, &g) in word.iter_mut().zip(row) {
                *c = self.field.add(*c, self.field.mul(u, g));
            }
        }
        word
    }

    pub fn codeword(&self, index: u64) -> Vec<FieldElement> {
        self.encode(&self.message(index))
    }

    /// Text form: header `q k m`, then k rows of m integers.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.q(), self.k, self.m);
        for r in 0..self.k {
            let row: Vec<String> = (0..self.m).map(|c| self.entry(r, c).to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, 1, "empty generator file"))?;
        let nums = parse_ints(header, hline + 1)?;
        if nums.len() != 3 {
            return Err(Error::parse(hline + 1, 1, "header must be `q k m`"));
        }
        let (q, k, m) = (nums[0], nums[1] as usize, nums[2] as usize);
        let field = crate::field::build_field(q)?;
        let mut generator = Vec::with_capacity(k * m);
        for _ in 0..k {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::parse(hline + 2, 1, "missing generator row"))?;
            let row = parse_ints(line, ln + 1)?;
            if row.len() != m {
                return Err(Error::parse(ln + 1, 1, format!("expected {m} entries, found {}", row.len())));
            }
            generator.extend(row.into_iter().map(|v| FieldElement(v as u32)));
        }
        LinearCode::new(field, k, m, generator, None)
    }

    pub fn with_d_claimed(mut self, d: Option<usize>) -> Self {
        self.d_claimed = d;
        self
    }

    /// The same code with its last generator row replaced by a codeword of
    /// full weight m whose last message digit is 1 (a change of basis).
    /// Consecutive blocks of q columns of the concatenation are then cosets
    /// of a full-support line, which pins down the average distance of any
    /// prefix. `None` if the search finds no such codeword.
    pub fn with_full_weight_last_row(&self) -> Option<LinearCode> {
        let q = self.q() as u64;
        let heads = q.checked_pow(self.k as u32 - 1).filter(|&n| n <= MAX_GV_MESSAGES)?;
        let h = (0..heads).find_map(|head| {
            let word = self.codeword(head * q + 1);
            word.iter().all(|c| !c.is_zero()).then_some(word)
        })?;
        let mut out = self.clone();
        let last = (self.k - 1) * self.m;
        out.generator[last..].copy_from_slice(&h);
        Some(out)
    }
}

fn parse_ints(line: &str, line_no: usize) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    let mut col = 1;
    for tok in line.split(' ') {
        if !tok.is_empty() {
            let v = tok
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::parse(line_no, col, format!("not an integer: {tok:?}")))?;
            out.push(v);
        }
        col += tok.len() + 1;
    }
    Ok(out)
}

/// Reed–Solomon evaluation code: polynomials of degree < k evaluated at the
/// first n canonical field elements.
pub fn rs_generate(field: &FieldSpec, k: usize, n: usize) -> Result<LinearCode> {
    if k == 0 || k > n || n as u64 > field.order() as u64 {
        return Err(Error::InvalidParams(format!(
            "Reed-Solomon needs 1 <= k <= n <= q (k={k}, n={n}, q={})",
            field.order()
        )));
    }
    let mut generator = Vec::with_capacity(k * n);
    for r in 0..k {
        for point in 0..n as u32 {
            generator.push(field.pow(FieldElement(point), r as u64));
        }
    }
    LinearCode::new(field.clone(), k, n, generator, Some(n - k + 1))
}

// ---------------------------------------------------------------------------
// Binomial tails

fn big_pow(base: u64, exp: usize) -> BigUint {
    num_traits::pow(BigUint::from(base), exp)
}

/// Numerators C(r, i) (q-1)^i of Pr[Bin(r, 1-1/q) = i] over the common
/// denominator q^r, for i in 0..=r.
fn pmf_numerators(r: usize, q: u64) -> Vec<BigUint> {
    let mut out = Vec::with_capacity(r + 1);
    let mut binom = BigUint::one();
    let mut power = BigUint::one();
    for i in 0..=r {
        out.push(&binom * &power);
        binom = binom * BigUint::from((r - i) as u64) / BigUint::from((i + 1) as u64);
        power *= q - 1;
    }
    out
}

fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = den.bits() as i64 - num.bits() as i64 + 64;
    let scaled = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        num / (den << (-shift) as u64)
    };
    let mant = scaled.to_f64().unwrap_or(f64::INFINITY);
    // split the scaling so that neither factor under- or overflows early
    let half = (shift / 2) as i32;
    mant * 2f64.powi(-half) * 2f64.powi(-(shift as i32 - half))
}

/// ln Pr[Bin(r, 1-1/q) = i] for i in 0..=r.
fn ln_pmf_table(r: usize, q: u64) -> Vec<f64> {
    let lq = (q as f64).ln();
    let lq1 = ((q - 1) as f64).ln();
    let mut out = Vec::with_capacity(r + 1);
    let mut ln_binom = 0.0f64;
    for i in 0..=r {
        let term = if q == 2 {
            ln_binom - r as f64 * lq
        } else {
            ln_binom + i as f64 * lq1 - r as f64 * lq
        };
        out.push(term);
        if i < r {
            ln_binom += (((r - i) as f64) / ((i + 1) as f64)).ln();
        }
    }
    out
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Pr[Bin(r, 1 - 1/q) <= threshold].
///
/// Exact rational arithmetic for r <= 64; above that a log-space sum whose
/// absolute error stays below 1e-12.
pub fn binomial_tail(r: usize, q: u64, threshold: i64) -> f64 {
    assert!(q >= 2, "field size must be at least 2");
    if threshold < 0 {
        return 0.0;
    }
    let threshold = threshold as usize;
    if threshold >= r {
        return 1.0;
    }
    if r <= EXACT_TAIL_LIMIT {
        let pmf = pmf_numerators(r, q);
        let num: BigUint = pmf[..=threshold].iter().sum();
        return ratio_to_f64(&num, &big_pow(q, r));
    }
    let table = ln_pmf_table(r, q);
    // sum the side away from the mean to avoid cancellation
    let mean = r as f64 * (1.0 - 1.0 / q as f64);
    if (threshold as f64) < mean {
        log_sum_exp(&table[..=threshold]).exp().min(1.0)
    } else {
        (1.0 - log_sum_exp(&table[threshold + 1..]).exp()).max(0.0)
    }
}

/// Exact test of ((q^k - 1)/(q - 1)) * Pr[Bin(m, 1-1/q) <= d - 1] < 1.
///
/// Codewords that are scalar multiples of each other have the same weight,
/// so the potential only needs to count one message per projective point;
/// when it starts below 1 the conditional-expectation construction reaches
/// distance d.
pub fn gv_feasible(q: u64, k: usize, m: usize, d: usize) -> bool {
    if d == 0 {
        return true;
    }
    if d > m + 1 {
        return false;
    }
    let below: BigUint = pmf_numerators(m, q)[..d.min(m + 1)].iter().sum();
    let messages = big_pow(q, k) - BigUint::one();
    messages * below < big_pow(q, m) * (q - 1)
}

/// Largest k >= 1 with `gv_feasible(q, k, m, d)`, or `None` if k = 1 fails.
pub fn gv_dimension(q: u64, m: usize, d: usize) -> Option<usize> {
    if d <= 1 {
        return Some(m);
    }
    if d > m {
        return None;
    }
    let below: BigUint = pmf_numerators(m, q)[..d].iter().sum();
    let total = big_pow(q, m) * (q - 1);
    let mut best = None;
    let mut power = BigUint::from(q);
    for k in 1..=m {
        if (&power - BigUint::one()) * &below < total {
            best = Some(k);
        } else {
            break;
        }
        power *= q;
    }
    best
}

// ---------------------------------------------------------------------------
// Conditional expectations

/// Score accumulator for candidate values of one generator entry.
struct EntryScores {
    q: usize,
    span: usize,
    counts: Vec<u32>,
    touched: Vec<bool>,
}

impl EntryScores {
    fn new(q: usize, span: usize) -> Self {
        EntryScores {
            q,
            span,
            counts: vec![0; q * span],
            touched: vec![false; q],
        }
    }

    fn reset(&mut self, span: usize) {
        self.span = span;
        self.counts.clear();
        self.counts.resize(self.q * span, 0);
        self.touched.iter_mut().for_each(|t| *t = false);
    }

    #[inline]
    fn add(&mut self, value: u32, idx: usize) {
        self.counts[value as usize * self.span + idx] += 1;
        self.touched[value as usize] = true;
    }

    /// Smallest candidate minimising sum(count[v][i] * weight[i]).
    fn argmin(&self, exact: Option<&[BigUint]>, approx: &[f64]) -> u32 {
        if let Some(v) = self.touched.iter().position(|t| !t) {
            return v as u32;
        }
        let row = |v: usize| &self.counts[v * self.span..(v + 1) * self.span];
        match exact {
            Some(weights) => {
                let mut best: Option<(BigUint, usize)> = None;
                for v in 0..self.q {
                    let score: BigUint = row(v)
                        .iter()
                        .zip(weights)
                        .filter(|(c, _)| **c > 0)
                        .map(|(c, w)| w * *c)
                        .sum();
                    if best.as_ref().map_or(true, |(b, _)| score < *b) {
                        best = Some((score, v));
                    }
                }
                best.map(|(_, v)| v as u32).unwrap_or(0)
            }
            None => {
                let mut best = (f64::INFINITY, 0usize);
                for v in 0..self.q {
                    let score: f64 = row(v)
                        .iter()
                        .zip(approx)
                        .map(|(&c, w)| c as f64 * w)
                        .sum();
                    if score < best.0 {
                        best = (score, v);
                    }
                }
                best.1 as u32
            }
        }
    }
}

/// Conditional-expectation construction state, generator filled column by column.
struct GvBuilder<'a> {
    field: &'a FieldSpec,
    q: usize,
    k: usize,
    m: usize,
    d: usize,
    /// Internal message order: row 0 is the least significant digit.
    weights: Vec<u32>,
    symbols: Vec<FieldElement>,
    generator: Vec<FieldElement>,
}

impl<'a> GvBuilder<'a> {
    fn new(field: &'a FieldSpec, k: usize, m: usize, d: usize) -> Self {
        let n = (field.order() as usize).pow(k as u32);
        GvBuilder {
            field,
            q: field.order() as usize,
            k,
            m,
            d,
            weights: vec![0; n],
            symbols: vec![FieldElement::ZERO; n],
            generator: vec![FieldElement::ZERO; k * m],
        }
    }

    /// Sum over nonzero messages of Pr[weight < d] with `remaining` columns
    /// still random, divided by q - 1 (one term per projective point).
    fn potential(&self, remaining: usize) -> f64 {
        let q = self.q as u64;
        let mut cdf = Vec::with_capacity(self.d + 1);
        for w in 0..=self.d {
            cdf.push(binomial_tail(remaining, q, self.d as i64 - 1 - w as i64));
        }
        self.weights[1..]
            .iter()
            .map(|&w| if (w as usize) < self.d { cdf[w as usize] } else { 0.0 })
            .sum::<f64>()
            / (self.q - 1) as f64
    }

    fn fill_column(&mut self, j: usize, scores: &mut EntryScores) {
        let f = self.field;
        let rem = self.m - j - 1;
        // a message whose symbol here is fixed to zero, rather than nonzero,
        // raises its failure probability by pmf(rem, d - 1 - w)
        let exact = (rem <= EXACT_TAIL_LIMIT).then(|| pmf_numerators(rem, self.q as u64));
        let approx: Vec<f64> = if exact.is_none() {
            let ln = ln_pmf_table(rem, self.q as u64);
            let max = ln.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ln.iter().map(|l| (l - max).exp()).collect()
        } else {
            Vec::new()
        };
        let span = rem + 1;
        let inverses: Vec<FieldElement> = (1..self.q as u32)
            .map(|u| f.inv(FieldElement(u)).expect("nonzero"))
            .collect();

        self.symbols[0] = FieldElement::ZERO;
        let mut block = 1usize;
        for r in 0..self.k {
            scores.reset(span);
            for ur in 1..self.q {
                let inv = inverses[ur - 1];
                for base in 0..block {
                    let u = ur * block + base;
                    let w = self.weights[u] as usize;
                    if w >= self.d || self.d - 1 - w > rem {
                        continue;
                    }
                    let target = f.mul(f.neg(self.symbols[base]), inv);
                    scores.add(target.0, self.d - 1 - w);
                }
            }
            let value = FieldElement(scores.argmin(exact.as_deref(), &approx));
            self.generator[r * self.m + j] = value;
            for ur in 1..self.q {
                let step = f.mul(FieldElement(ur as u32), value);
                for base in 0..block {
                    self.symbols[ur * block + base] = f.add(self.symbols[base], step);
                }
            }
            block *= self.q;
        }

        if (0..self.k).all(|r| self.generator[r * self.m + j].is_zero()) {
            self.generator[j] = FieldElement::ONE;
            for (u, s) in self.symbols.iter_mut().enumerate() {
                *s = FieldElement((u % self.q) as u32);
            }
        }
        for (w, s) in self.weights.iter_mut().zip(&self.symbols) {
            *w += (!s.is_zero()) as u32;
        }
    }
}

/// Result of a traced construction: the code and the potential after each
/// column (entry 0 is the starting value).
#[derive(Clone, Debug)]
pub struct GvTrace {
    pub code: LinearCode,
    pub potential: Vec<f64>,
}

/// Gilbert–Varshamov code of length `m` whose nonzero codewords all have
/// weight >= `d_target`. `k` defaults to the largest GV-feasible dimension
/// and may only be lowered.
pub fn gv_construct(
    field: &FieldSpec,
    m: usize,
    d_target: usize,
    k: Option<usize>,
) -> Result<LinearCode> {
    gv_construct_traced(field, m, d_target, k).map(|t| t.code)
}

pub fn gv_construct_traced(
    field: &FieldSpec,
    m: usize,
    d_target: usize,
    k: Option<usize>,
) -> Result<GvTrace> {
    if m == 0 {
        return Err(Error::InvalidParams("code length must be positive".into()));
    }
    if d_target > m {
        return Err(Error::Infeasible(format!(
            "distance {d_target} exceeds length {m}"
        )));
    }
    let q = field.order() as u64;
    let k_max = gv_dimension(q, m, d_target).ok_or_else(|| {
        Error::Infeasible(format!(
            "GV condition fails at k = 1 for q={q}, m={m}, d={d_target}"
        ))
    })?;
    let k = match k {
        Some(0) => return Err(Error::InvalidParams("dimension must be positive".into())),
        Some(k) if k > k_max => {
            return Err(Error::Infeasible(format!(
                "dimension {k} exceeds the largest GV-feasible dimension {k_max}"
            )))
        }
        Some(k) => k,
        None => k_max,
    };

    if d_target <= 1 {
        // every nonzero codeword already has weight >= 1
        let mut generator = vec![FieldElement::ZERO; k * m];
        for j in 0..m {
            let row = if j < k { j } else { 0 };
            generator[row * m + j] = FieldElement::ONE;
        }
        let code = LinearCode::new(field.clone(), k, m, generator, Some(d_target.max(1).min(m)))?;
        return Ok(GvTrace {
            code,
            potential: vec![0.0],
        });
    }

    let messages = q.checked_pow(k as u32).filter(|&n| n <= MAX_GV_MESSAGES).ok_or(
        Error::BudgetExceeded {
            needed: (q as u128).saturating_pow(k as u32),
            budget: MAX_GV_MESSAGES as u128,
        },
    )?;
    debug_assert!(messages >= 2);

    let mut builder = GvBuilder::new(field, k, m, d_target);
    let mut scores = EntryScores::new(field.order() as usize, m);
    let mut potential = vec![builder.potential(m)];
    for j in 0..m {
        builder.fill_column(j, &mut scores);
        potential.push(builder.potential(m - j - 1));
    }

    // the final potential is the number of light codewords, which must be zero
    if let Some(u) = builder.weights[1..].iter().position(|&w| (w as usize) < d_target) {
        return Err(Error::Infeasible(format!(
            "construction left message {} with weight {} < {d_target}",
            u + 1,
            builder.weights[u + 1]
        )));
    }

    let code = LinearCode::new(field.clone(), k, m, builder.generator, Some(d_target))?;
    Ok(GvTrace { code, potential })
}

// ---------------------------------------------------------------------------
// Exact minimum distance

/// Minimum Hamming weight over all nonzero codewords, by enumeration.
pub fn min_distance_exact(code: &LinearCode) -> Result<usize> {
    min_distance_exact_with_budget(code, DEFAULT_ENUMERATION_BUDGET)
}

pub fn min_distance_exact_with_budget(code: &LinearCode, budget: u128) -> Result<usize> {
    let needed = (code.q() as u128)
        .checked_pow(code.k as u32)
        .and_then(|n| n.checked_mul(code.m as u128))
        .unwrap_or(u128::MAX);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let mut partial = vec![vec![FieldElement::ZERO; code.m]; code.k + 1];
    let mut best = code.m;
    min_weight_rec(code, 0, false, &mut partial, &mut best);
    Ok(best)
}

fn min_weight_rec(
    code: &LinearCode,
    row: usize,
    nonzero: bool,
    partial: &mut [Vec<FieldElement>],
    best: &mut usize,
) {
    if row == code.k {
        if nonzero {
            let w = partial[row].iter().filter(|s| !s.is_zero()).count();
            *best = (*best).min(w);
        }
        return;
    }
    let f = code.field();
    for v in f.elements() {
        let (head, tail) = partial.split_at_mut(row + 1);
        let g = &code.generator[row * code.m..(row + 1) * code.m];
        for ((next, &prev), &gj) in tail[0].iter_mut().zip(&head[row]).zip(g) {
            *next = f.add(prev, f.mul(v, gj));
        }
        min_weight_rec(code, row + 1, nonzero || !v.is_zero(), partial, best);
    }
}
