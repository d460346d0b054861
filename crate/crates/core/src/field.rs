//! Arithmetic over GF(q) for prime q and for GF(2^e), e <= 16.
//!
//! Elements are canonical integers in `[0, q)`: for extension fields the
//! integer's base-p digits are the polynomial coefficients (bit i is the
//! coefficient of x^i). Extension fields multiply through log/antilog tables
//! built over the smallest primitive element.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest supported extension degree for characteristic-2 fields.
pub const MAX_BINARY_DEGREE: u32 = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct FieldElement(pub u32);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn value(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

struct LogTables {
    /// exp[i] = g^i for i in [0, 2(q-1)), so a product never needs a reduction.
    exp: Vec<u32>,
    /// log[a] for a != 0; log[0] is unused.
    log: Vec<u32>,
}

/// A finite field GF(q), q = p^e. Immutable and cheap to clone.
#[derive(Clone)]
pub struct FieldSpec {
    q: u32,
    p: u32,
    e: u32,
    modulus: Vec<u32>,
    tables: Option<Arc<LogTables>>,
}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSpec")
            .field("q", &self.q)
            .field("p", &self.p)
            .field("e", &self.e)
            .field("modulus", &self.modulus)
            .finish()
    }
}

impl PartialEq for FieldSpec {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.modulus == other.modulus
    }
}

impl Eq for FieldSpec {}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut i = 3u64;
    while i * i <= n {
        if n % i == 0 {
            return false;
        }
        i += 2;
    }
    true
}

/// True when `build_field(q)` succeeds.
pub fn is_supported_order(q: u64) -> bool {
    if q > u32::MAX as u64 {
        return false;
    }
    is_prime(q) || (q.is_power_of_two() && q >= 4 && q.trailing_zeros() <= MAX_BINARY_DEGREE)
}

/// Smallest supported field order that is `>= lower`.
pub fn next_supported_order(lower: u64) -> Option<u64> {
    (lower.max(2)..=u32::MAX as u64).find(|&q| is_supported_order(q))
}

pub fn build_field(q: u64) -> Result<FieldSpec> {
    if q > u32::MAX as u64 {
        return Err(Error::NotPrimePower(q));
    }
    if is_prime(q) {
        return Ok(FieldSpec {
            q: q as u32,
            p: q as u32,
            e: 1,
            modulus: Vec::new(),
            tables: None,
        });
    }
    if q.is_power_of_two() && q >= 4 {
        let e = q.trailing_zeros();
        if e > MAX_BINARY_DEGREE {
            return Err(Error::NotPrimePower(q));
        }
        let poly = smallest_irreducible_gf2(e);
        let modulus = (0..=e).map(|i| ((poly >> i) & 1) as u32).collect();
        let tables = binary_log_tables(e, poly);
        return Ok(FieldSpec {
            q: q as u32,
            p: 2,
            e,
            modulus,
            tables: Some(Arc::new(tables)),
        });
    }
    Err(Error::NotPrimePower(q))
}

/// Carry-less product of two GF(2)[x] polynomials encoded as bit masks.
fn clmul(a: u64, b: u64) -> u64 {
    let mut acc = 0u64;
    let mut b = b;
    let mut shift = 0;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a << shift;
        }
        b >>= 1;
        shift += 1;
    }
    acc
}

fn degree(p: u64) -> i32 {
    63 - p.leading_zeros() as i32
}

fn gf2_rem(mut a: u64, b: u64) -> u64 {
    let db = degree(b);
    while a != 0 && degree(a) >= db {
        a ^= b << (degree(a) - db);
    }
    a
}

fn is_irreducible_gf2(poly: u64) -> bool {
    let e = degree(poly);
    if e < 1 {
        return false;
    }
    // any factorisation has a factor of degree <= e/2
    for divisor in 2u64..(1u64 << (e / 2 + 1)) {
        if gf2_rem(poly, divisor) == 0 {
            return false;
        }
    }
    true
}

/// Lexicographically smallest (= smallest integer encoding) monic irreducible
/// polynomial of degree `e` over GF(2).
fn smallest_irreducible_gf2(e: u32) -> u64 {
    let lo = 1u64 << e;
    (lo..lo << 1)
        .find(|&p| is_irreducible_gf2(p))
        .expect("irreducible polynomials exist in every degree")
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut f = 2;
    while f * f <= n {
        if n % f == 0 {
            out.push(f);
            while n % f == 0 {
                n /= f;
            }
        }
        f += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn binary_log_tables(e: u32, poly: u64) -> LogTables {
    let q = 1u64 << e;
    let order = q - 1;
    let mulmod = |a: u64, b: u64| gf2_rem(clmul(a, b), poly);
    let powmod = |mut base: u64, mut n: u64| {
        let mut acc = 1u64;
        while n > 0 {
            if n & 1 == 1 {
                acc = mulmod(acc, base);
            }
            base = mulmod(base, base);
            n >>= 1;
        }
        acc
    };
    let factors = prime_factors(order);
    let generator = (2..q)
        .find(|&g| factors.iter().all(|&f| powmod(g, order / f) != 1))
        .unwrap_or(1);

    let mut exp = vec![0u32; 2 * order as usize];
    let mut log = vec![0u32; q as usize];
    let mut x = 1u64;
    for i in 0..order as usize {
        exp[i] = x as u32;
        exp[i + order as usize] = x as u32;
        log[x as usize] = i as u32;
        x = mulmod(x, generator);
    }
    LogTables { exp, log }
}

impl FieldSpec {
    #[inline]
    pub fn order(&self) -> u32 {
        self.q
    }

    #[inline]
    pub fn characteristic(&self) -> u32 {
        self.p
    }

    #[inline]
    pub fn degree(&self) -> u32 {
        self.e
    }

    /// Modulus coefficients, constant term first; empty for prime fields.
    pub fn modulus(&self) -> &[u32] {
        &self.modulus
    }

    pub fn element(&self, value: u32) -> Result<FieldElement> {
        if value < self.q {
            Ok(FieldElement(value))
        } else {
            Err(Error::InvalidInput(format!(
                "{value} is not an element of GF({})",
                self.q
            )))
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = FieldElement> {
        (0..self.q).map(FieldElement)
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if self.p == 2 {
            FieldElement(a.0 ^ b.0)
        } else {
            let s = a.0 as u64 + b.0 as u64;
            FieldElement((s % self.q as u64) as u32)
        }
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        if self.p == 2 || a.0 == 0 {
            a
        } else {
            FieldElement(self.q - a.0)
        }
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        match &self.tables {
            Some(t) => {
                if a.0 == 0 || b.0 == 0 {
                    FieldElement::ZERO
                } else {
                    FieldElement(t.exp[(t.log[a.0 as usize] + t.log[b.0 as usize]) as usize])
                }
            }
            None => FieldElement(((a.0 as u64 * b.0 as u64) % self.q as u64) as u32),
        }
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a.0 == 0 {
            return Err(Error::DivisionByZero(self.q));
        }
        Ok(match &self.tables {
            Some(t) => FieldElement(t.exp[((self.q - 1) - t.log[a.0 as usize]) as usize]),
            None => {
                // extended Euclid over the integers
                let (mut r0, mut r1) = (self.q as i64, a.0 as i64);
                let (mut s0, mut s1) = (0i64, 1i64);
                while r1 != 0 {
                    let k = r0 / r1;
                    (r0, r1) = (r1, r0 - k * r1);
                    (s0, s1) = (s1, s0 - k * s1);
                }
                FieldElement(s0.rem_euclid(self.q as i64) as u32)
            }
        })
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: FieldElement, n: u64) -> FieldElement {
        if n == 0 {
            return FieldElement::ONE;
        }
        if a.0 == 0 {
            return FieldElement::ZERO;
        }
        match &self.tables {
            Some(t) => {
                let l = (t.log[a.0 as usize] as u64 * (n % (self.q as u64 - 1))) % (self.q as u64 - 1);
                FieldElement(t.exp[l as usize])
            }
            None => {
                let m = self.q as u64;
                let (mut base, mut n, mut acc) = (a.0 as u64, n, 1u64);
                while n > 0 {
                    if n & 1 == 1 {
                        acc = acc * base % m;
                    }
                    base = base * base % m;
                    n >>= 1;
                }
                FieldElement(acc as u32)
            }
        }
    }
}
