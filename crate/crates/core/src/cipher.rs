//! First-round AES arithmetic and its GF(16) scale model.
//!
//! Both variants share one code path: a byte is stored in a `u8` and the
//! variant decides the word width, the xtime reduction and the S-box.

use serde::{Deserialize, Serialize};

#[rustfmt::skip]
static SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

/// PRESENT's 4-bit S-box.
static MINI_SBOX: [u8; 16] = [
    0xc, 0x5, 0x6, 0xb, 0x9, 0x0, 0xa, 0xd, 0x3, 0xe, 0xf, 0x8, 0x4, 0x7, 0x1, 0x2,
];

static INV_SBOX: [u8; 256] = invert_256(&SBOX);
static MINI_INV_SBOX: [u8; 16] = invert_16(&MINI_SBOX);

const fn invert_256(t: &[u8; 256]) -> [u8; 256] {
    let mut out = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        out[t[i] as usize] = i as u8;
        i += 1;
    }
    out
}

const fn invert_16(t: &[u8; 16]) -> [u8; 16] {
    let mut out = [0u8; 16];
    let mut i = 0;
    while i < 16 {
        out[t[i] as usize] = i as u8;
        i += 1;
    }
    out
}

/// Multiplication by 2 in GF(2⁸) modulo x⁸+x⁴+x³+x+1.
pub fn xtime(a: u8) -> u8 {
    (a << 1) ^ if a & 0x80 != 0 { 0x1b } else { 0 }
}

/// Multiplication by 2 in GF(2⁴) modulo x⁴+x+1.
pub fn mini_xtime(a: u8) -> u8 {
    debug_assert!(a < 16);
    ((a << 1) & 0xf) ^ if a & 0x8 != 0 { 0x3 } else { 0 }
}

pub fn sbox(a: u8) -> u8 {
    SBOX[a as usize]
}

pub fn inv_sbox(a: u8) -> u8 {
    INV_SBOX[a as usize]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// 4-bit words over GF(16).
    Mini,
    /// AES-128 bytes over GF(256).
    Full,
}

impl Variant {
    pub fn width(self) -> u32 {
        match self {
            Variant::Mini => 4,
            Variant::Full => 8,
        }
    }

    /// Number of values a word can take.
    pub fn size(self) -> usize {
        1 << self.width()
    }

    /// Low bits of the reduction polynomial: bit `j` of `xtime(a)` is
    /// `a[j-1] ⊕ (r[j] ∧ a[w-1])`.
    pub fn reduction(self) -> u8 {
        match self {
            Variant::Mini => 0x3,
            Variant::Full => 0x1b,
        }
    }

    pub fn xtime(self, a: u8) -> u8 {
        match self {
            Variant::Mini => mini_xtime(a),
            Variant::Full => xtime(a),
        }
    }

    pub fn sbox(self, a: u8) -> u8 {
        match self {
            Variant::Mini => MINI_SBOX[a as usize],
            Variant::Full => SBOX[a as usize],
        }
    }

    pub fn inv_sbox(self, a: u8) -> u8 {
        match self {
            Variant::Mini => MINI_INV_SBOX[a as usize],
            Variant::Full => INV_SBOX[a as usize],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mini => "mini",
            Variant::Full => "full",
        }
    }
}

/// The 21 words of one MixColumn evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ByteVar {
    X1,
    X2,
    X3,
    X4,
    X12,
    X23,
    X34,
    X41,
    G,
    /// x̃: xtime of the pair sums.
    T12,
    T23,
    T34,
    T41,
    /// x′ = x̃ ⊕ g.
    P12,
    P23,
    P34,
    P41,
    /// MixColumn outputs.
    M1,
    M2,
    M3,
    M4,
}

use ByteVar::*;

impl ByteVar {
    pub const ALL: [ByteVar; 21] = [
        X1, X2, X3, X4, X12, X23, X34, X41, G, T12, T23, T34, T41, P12, P23, P34, P41, M1, M2,
        M3, M4,
    ];

    pub const INPUTS: [ByteVar; 4] = [X1, X2, X3, X4];
    pub const OUTPUTS: [ByteVar; 4] = [M1, M2, M3, M4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        [
            "x1", "x2", "x3", "x4", "x12", "x23", "x34", "x41", "g", "xt12", "xt23", "xt34",
            "xt41", "xp12", "xp23", "xp34", "xp41", "xm1", "xm2", "xm3", "xm4",
        ][self.index()]
    }

    pub fn from_name(name: &str) -> Option<ByteVar> {
        ByteVar::ALL.into_iter().find(|b| b.name() == name)
    }
}

/// Relations defining a column trace: every non-input word is either
/// the xor of two others or the xtime of one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Xor(ByteVar, ByteVar, ByteVar),
    Xtime(ByteVar, ByteVar),
}

impl Relation {
    /// `Xor(a, b, c)`: `c = a ⊕ b`. `Xtime(a, t)`: `t = xtime(a)`.
    pub const ALL: [Relation; 17] = [
        Relation::Xor(X1, X2, X12),
        Relation::Xor(X2, X3, X23),
        Relation::Xor(X3, X4, X34),
        Relation::Xor(X4, X1, X41),
        Relation::Xor(X12, X34, G),
        Relation::Xtime(X12, T12),
        Relation::Xtime(X23, T23),
        Relation::Xtime(X34, T34),
        Relation::Xtime(X41, T41),
        Relation::Xor(T12, G, P12),
        Relation::Xor(T23, G, P23),
        Relation::Xor(T34, G, P34),
        Relation::Xor(T41, G, P41),
        Relation::Xor(X1, P12, M1),
        Relation::Xor(X2, P23, M2),
        Relation::Xor(X3, P34, M3),
        Relation::Xor(X4, P41, M4),
    ];
}

/// All 21 words of one column, indexed by [`ByteVar::index`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ColumnTrace(pub [u8; 21]);

impl ColumnTrace {
    pub fn new(variant: Variant, x: [u8; 4]) -> ColumnTrace {
        let mut v = [0u8; 21];
        v[..4].copy_from_slice(&x);
        for r in Relation::ALL {
            match r {
                Relation::Xor(a, b, c) => v[c.index()] = v[a.index()] ^ v[b.index()],
                Relation::Xtime(a, t) => v[t.index()] = variant.xtime(v[a.index()]),
            }
        }
        ColumnTrace(v)
    }

    pub fn get(&self, b: ByteVar) -> u8 {
        self.0[b.index()]
    }

    pub fn outputs(&self) -> [u8; 4] {
        ByteVar::OUTPUTS.map(|b| self.get(b))
    }

    pub fn satisfies(&self, variant: Variant) -> bool {
        Relation::ALL.iter().all(|r| match *r {
            Relation::Xor(a, b, c) => self.get(a) ^ self.get(b) == self.get(c),
            Relation::Xtime(a, t) => variant.xtime(self.get(a)) == self.get(t),
        })
    }
}

pub fn mix_column(x: [u8; 4]) -> [u8; 4] {
    ColumnTrace::new(Variant::Full, x).outputs()
}

pub fn mix_column_trace(x: [u8; 4]) -> ColumnTrace {
    ColumnTrace::new(Variant::Full, x)
}

pub fn mini_mix_column(x: [u8; 4]) -> [u8; 4] {
    ColumnTrace::new(Variant::Mini, x).outputs()
}

pub fn mini_mix_column_trace(x: [u8; 4]) -> ColumnTrace {
    ColumnTrace::new(Variant::Mini, x)
}

/// First-round values of one column: `y = k ⊕ p`, `x = S(y)` and the
/// MixColumn trace over `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnValues {
    pub k: [u8; 4],
    pub p: [u8; 4],
    pub y: [u8; 4],
    pub trace: ColumnTrace,
}

impl ColumnValues {
    pub fn new(variant: Variant, k: [u8; 4], p: [u8; 4]) -> ColumnValues {
        let y: [u8; 4] = std::array::from_fn(|i| k[i] ^ p[i]);
        let x = y.map(|v| variant.sbox(v));
        ColumnValues {
            k,
            p,
            y,
            trace: ColumnTrace::new(variant, x),
        }
    }
}

/// The four columns of the first round. ShiftRows is a fixed relabeling and
/// is not modeled: column `c` uses key and plaintext words `4c..4c+4`.
pub fn first_round_intermediates(variant: Variant, k: &[u8; 16], p: &[u8; 16]) -> [ColumnValues; 4] {
    std::array::from_fn(|c| {
        let kc: [u8; 4] = k[4 * c..4 * c + 4].try_into().unwrap();
        let pc: [u8; 4] = p[4 * c..4 * c + 4].try_into().unwrap();
        ColumnValues::new(variant, kc, pc)
    })
}

/// Word operations of one forward column evaluation: 4 key additions,
/// 4 S-box lookups and the 17 MixColumn relations.
pub const OPS_PER_COLUMN_EVALUATION: u64 = 4 + 4 + 17;
