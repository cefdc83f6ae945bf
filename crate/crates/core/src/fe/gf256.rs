//! GF(2^8) with primitive polynomial `x^8 + x^4 + x^3 + x^2 + 1`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign};

pub const POLY: u16 = 0x11d;
/// Multiplicative order of the generator.
pub const ORDER: usize = 255;

const fn build_exp() -> [u8; 512] {
    let mut exp = [0u8; 512];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 512 {
        exp[i] = x as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    exp
}

const fn build_log(exp: &[u8; 512]) -> [u8; 256] {
    let mut log = [0u8; 256];
    let mut i = 0;
    while i < ORDER {
        log[exp[i] as usize] = i as u8;
        i += 1;
    }
    log
}

static EXP: [u8; 512] = build_exp();
static LOG: [u8; 256] = build_log(&EXP);

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Gf(pub u8);

impl Gf {
    pub const ZERO: Gf = Gf(0);
    pub const ONE: Gf = Gf(1);

    /// `alpha^e` for any exponent.
    #[inline]
    pub fn alpha_pow(e: usize) -> Gf {
        Gf(EXP[e % ORDER])
    }

    /// Discrete log base `alpha`; `None` for zero.
    #[inline]
    pub fn log(self) -> Option<usize> {
        (self.0 != 0).then(|| LOG[self.0 as usize] as usize)
    }

    pub fn inv(self) -> Option<Gf> {
        self.log().map(|l| Gf(EXP[(ORDER - l) % ORDER]))
    }

    pub fn pow(self, e: usize) -> Gf {
        match self.log() {
            None if e == 0 => Gf::ONE,
            None => Gf::ZERO,
            Some(l) => Gf(EXP[(l * e) % ORDER]),
        }
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Debug for Gf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf({:#04x})", self.0)
    }
}

impl Add for Gf {
    type Output = Gf;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Gf) -> Gf {
        Gf(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf {
    #[inline]
    #[allow(clippy::suspicious_op_assign_impl)] // addition in GF(2^8) is XOR
    fn add_assign(&mut self, rhs: Gf) {
        self.0 ^= rhs.0;
    }
}

impl Mul for Gf {
    type Output = Gf;
    #[inline]
    fn mul(self, rhs: Gf) -> Gf {
        if self.0 == 0 || rhs.0 == 0 {
            return Gf::ZERO;
        }
        Gf(EXP[LOG[self.0 as usize] as usize + LOG[rhs.0 as usize] as usize])
    }
}

impl MulAssign for Gf {
    #[inline]
    fn mul_assign(&mut self, rhs: Gf) {
        *self = *self * rhs;
    }
}
