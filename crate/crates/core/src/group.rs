//! Per-block group elements: construction from parameters, identity, inverse,
//! composition and the action on a block of an entity vector.
//!
//! Every group kind is stored as a small real matrix. Complex entries use the
//! real encoding `a + ib -> [[a, -b], [b, a]]`, so a complex `k x k` matrix
//! becomes a real `2k x 2k` matrix acting on interleaved `(re, im)` pairs. The
//! translation group is the one non-linear member: its "matrix" holds the
//! single offset and acts by addition.
//!
//! | kind  | params `q` | rep dim `p` | parameters                         |
//! |-------|-----------|-------------|------------------------------------|
//! | T     | 1         | 1           | offset `δ`                         |
//! | U(1)  | 1         | 2           | phase `φ`                          |
//! | GL1R  | 1         | 1           | non-zero scale `a`                 |
//! | GL1C  | 2         | 2           | complex scale `a + ib`, `a²+b² > 0` |
//! | SO(3) | 3         | 3           | Z-X-Z Euler angles `(φ, θ, ψ)`     |
//! | SU(2) | 3         | 4           | axis-angle `(α, θ, φ)`             |

use core::fmt;
use core::str::FromStr;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{abs, cos, sin, wrap_angle, PI, TAU};

/// Largest per-block matrix dimension (SU(2) in real encoding).
pub const MAX_DIM: usize = 4;
/// Largest number of parameters per block.
pub const MAX_PARAMS: usize = 3;

/// The group a model embeds its relations in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupKind {
    /// Real translations, acting by `x + δ`.
    Translation,
    /// Unit phases acting on `ℂ` as plane rotations.
    U1,
    /// Non-zero real scalings.
    Gl1R,
    /// Non-zero complex scalings.
    Gl1C,
    /// Rotations of `ℝ³`.
    So3,
    /// Special unitary `2 x 2` matrices acting on `ℂ²`.
    Su2,
}

impl GroupKind {
    pub const ALL: [GroupKind; 6] = [
        GroupKind::Translation,
        GroupKind::U1,
        GroupKind::Gl1R,
        GroupKind::Gl1C,
        GroupKind::So3,
        GroupKind::Su2,
    ];

    /// Number of real parameters per block.
    pub const fn param_count(self) -> usize {
        match self {
            GroupKind::Translation | GroupKind::U1 | GroupKind::Gl1R => 1,
            GroupKind::Gl1C => 2,
            GroupKind::So3 | GroupKind::Su2 => 3,
        }
    }

    /// Number of real entity components per block.
    pub const fn rep_dim(self) -> usize {
        match self {
            GroupKind::Translation | GroupKind::Gl1R => 1,
            GroupKind::U1 | GroupKind::Gl1C => 2,
            GroupKind::So3 => 3,
            GroupKind::Su2 => 4,
        }
    }

    /// Whether the group is commutative.
    pub const fn is_abelian(self) -> bool {
        !matches!(self, GroupKind::So3 | GroupKind::Su2)
    }

    /// Compact groups act isometrically on their representation space.
    pub const fn is_isometric(self) -> bool {
        matches!(self, GroupKind::U1 | GroupKind::So3 | GroupKind::Su2)
    }

    /// Stable on-disk tag.
    pub const fn tag(self) -> u8 {
        match self {
            GroupKind::Translation => 0,
            GroupKind::U1 => 1,
            GroupKind::Gl1R => 2,
            GroupKind::Gl1C => 3,
            GroupKind::So3 => 4,
            GroupKind::Su2 => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        GroupKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Short lowercase name used by the CLI and config files.
    pub const fn name(self) -> &'static str {
        match self {
            GroupKind::Translation => "t",
            GroupKind::U1 => "u1",
            GroupKind::Gl1R => "gl1r",
            GroupKind::Gl1C => "gl1c",
            GroupKind::So3 => "so3",
            GroupKind::Su2 => "su2",
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        GroupKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown group kind `{s}` (expected one of t, u1, gl1r, gl1c, so3, su2)"
                ))
            })
    }
}

/// One group element of a single block, stored as a row-major matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMatrix {
    kind: GroupKind,
    entries: [f64; MAX_DIM * MAX_DIM],
}

impl BlockMatrix {
    /// Wraps raw row-major entries without checking any group invariant.
    ///
    /// For [`GroupKind::Translation`] the single entry is the offset.
    pub fn from_entries(kind: GroupKind, entries: &[f64]) -> Result<Self> {
        let n = kind.rep_dim() * kind.rep_dim();
        if entries.len() != n {
            return Err(Error::Shape {
                expected: n,
                actual: entries.len(),
            });
        }
        let mut m = Self::zeros(kind);
        m.entries[..n].copy_from_slice(entries);
        Ok(m)
    }

    fn zeros(kind: GroupKind) -> Self {
        Self {
            kind,
            entries: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    /// The identity element of `kind`.
    pub fn identity(kind: GroupKind) -> Self {
        let mut m = Self::zeros(kind);
        if kind != GroupKind::Translation {
            for i in 0..kind.rep_dim() {
                m.set(i, i, 1.0);
            }
        }
        m
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    /// Side length of the stored matrix (`p`).
    pub fn dim(&self) -> usize {
        self.kind.rep_dim()
    }

    pub fn entries(&self) -> &[f64] {
        let d = self.dim();
        &self.entries[..d * d]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim() + col]
    }

    #[inline]
    fn set(&mut self, row: usize, col: usize, v: f64) {
        let d = self.dim();
        self.entries[row * d + col] = v;
    }

    /// Translation offset. Only meaningful for [`GroupKind::Translation`].
    pub fn offset(&self) -> f64 {
        self.entries[0]
    }

    /// Group product `self · other`; acting with the result equals acting
    /// with `other` first and `self` second.
    pub fn compose(&self, other: &BlockMatrix) -> Result<BlockMatrix> {
        if self.kind != other.kind {
            return Err(Error::InvalidParameter(format!(
                "cannot compose {} with {}",
                self.kind, other.kind
            )));
        }
        Ok(self.compose_unchecked(other))
    }

    fn compose_unchecked(&self, other: &BlockMatrix) -> BlockMatrix {
        let mut out = Self::zeros(self.kind);
        if self.kind == GroupKind::Translation {
            out.entries[0] = self.entries[0] + other.entries[0];
            return out;
        }
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// Group inverse. Compact kinds use the (conjugate) transpose.
    pub fn inverse(&self) -> BlockMatrix {
        let mut out = Self::zeros(self.kind);
        match self.kind {
            GroupKind::Translation => out.entries[0] = -self.entries[0],
            GroupKind::Gl1R => out.entries[0] = 1.0 / self.entries[0],
            GroupKind::Gl1C => {
                let (a, b) = (self.get(0, 0), self.get(1, 0));
                let m2 = a * a + b * b;
                out.set(0, 0, a / m2);
                out.set(1, 1, a / m2);
                out.set(0, 1, b / m2);
                out.set(1, 0, -b / m2);
            }
            GroupKind::U1 | GroupKind::So3 | GroupKind::Su2 => {
                let d = self.dim();
                for i in 0..d {
                    for j in 0..d {
                        out.set(i, j, self.get(j, i));
                    }
                }
            }
        }
        out
    }

    /// Acts on one block of an entity vector.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; self.dim()];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    /// Allocation-free form of [`BlockMatrix::apply`].
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        for len in [x.len(), out.len()] {
            if len != d {
                return Err(Error::Shape {
                    expected: d,
                    actual: len,
                });
            }
        }
        self.apply_unchecked(x, out);
        Ok(())
    }

    #[inline]
    pub(crate) fn apply_unchecked(&self, x: &[f64], out: &mut [f64]) {
        if self.kind == GroupKind::Translation {
            out[0] = x[0] + self.entries[0];
            return;
        }
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let row = &self.entries[i * d..i * d + d];
            *o = row.iter().zip(x).map(|(m, v)| m * v).sum();
        }
    }

    /// Applies the transpose; used to pull gradients back through the action.
    #[inline]
    pub(crate) fn apply_transpose_unchecked(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (j, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = 0.0;
            for (i, xi) in x.iter().enumerate().take(d) {
                acc += self.entries[i * d + j] * xi;
            }
            *o = acc;
        }
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &BlockMatrix) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries())
            .fold(0.0, |acc, (a, b)| f64::max(acc, abs(a - b)))
    }

    /// `‖ab − ba‖_∞` (max-entry norm).
    pub fn commutator_norm(&self, other: &BlockMatrix) -> Result<f64> {
        let ab = self.compose(other)?;
        let ba = other.compose(self)?;
        Ok(ab.max_abs_diff(&ba))
    }

    /// `‖M Mᵀ − I‖_∞`. For complex kinds this is the unitarity defect, since the
    /// real encoding of `Mᴴ` is `Mᵀ`.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.get(i, k) * self.get(j, k);
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max(abs(acc - target));
            }
        }
        worst
    }

    /// Determinant as `(re, im)`. Complex-encoded kinds (U1, GL1C, SU2) report
    /// the complex determinant of the underlying complex matrix; real kinds
    /// have `im = 0`. Translations report `(1, 0)`.
    pub fn determinant(&self) -> (f64, f64) {
        match self.kind {
            GroupKind::Translation => (1.0, 0.0),
            GroupKind::Gl1R => (self.get(0, 0), 0.0),
            GroupKind::U1 | GroupKind::Gl1C => (self.get(0, 0), self.get(1, 0)),
            GroupKind::So3 => {
                let m = |i, j| self.get(i, j);
                let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                    - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                    + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
                (det, 0.0)
            }
            GroupKind::Su2 => {
                let z = |i: usize, j: usize| (self.get(2 * i, 2 * j), self.get(2 * i + 1, 2 * j));
                let (a, b, c, d) = (z(0, 0), z(0, 1), z(1, 0), z(1, 1));
                let ad = cmul(a, d);
                let bc = cmul(b, c);
                (ad.0 - bc.0, ad.1 - bc.1)
            }
        }
    }

    /// Whether entries follow the `[[a, -b], [b, a]]` complex encoding.
    fn complex_encoding_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for bi in (0..d).step_by(2) {
            for bj in (0..d).step_by(2) {
                worst = worst
                    .max(abs(self.get(bi, bj) - self.get(bi + 1, bj + 1)))
                    .max(abs(self.get(bi, bj + 1) + self.get(bi + 1, bj)));
            }
        }
        worst
    }

    /// Checks the defining invariants of the element's group at tolerance `tol`.
    pub fn check_invariants(&self, tol: f64) -> core::result::Result<(), String> {
        if self.entries().iter().any(|v| !v.is_finite()) {
            return Err(String::from("non-finite entry"));
        }
        match self.kind {
            GroupKind::Translation => Ok(()),
            GroupKind::Gl1R => {
                if self.get(0, 0) == 0.0 {
                    Err(String::from("zero scale is not invertible"))
                } else {
                    Ok(())
                }
            }
            GroupKind::Gl1C => {
                let enc = self.complex_encoding_error();
                let (a, b) = (self.get(0, 0), self.get(1, 0));
                if enc > tol {
                    Err(format!("not a complex scaling (encoding defect {enc:e})"))
                } else if a * a + b * b == 0.0 {
                    Err(String::from("zero modulus is not invertible"))
                } else {
                    Ok(())
                }
            }
            GroupKind::U1 | GroupKind::So3 | GroupKind::Su2 => {
                let orth = self.orthogonality_error();
                if orth > tol {
                    return Err(format!("‖MMᵀ − I‖∞ = {orth:e}"));
                }
                if self.kind != GroupKind::So3 {
                    let enc = self.complex_encoding_error();
                    if enc > tol {
                        return Err(format!("complex encoding defect {enc:e}"));
                    }
                }
                if self.kind != GroupKind::U1 {
                    let (re, im) = self.determinant();
                    if abs(re - 1.0) > tol || abs(im) > tol {
                        return Err(format!("det = {re} + {im}i"));
                    }
                }
                Ok(())
            }
        }
    }
}

#[inline]
fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn check_params(kind: GroupKind, params: &[f64]) -> Result<()> {
    if params.len() != kind.param_count() {
        return Err(Error::Shape {
            expected: kind.param_count(),
            actual: params.len(),
        });
    }
    if let Some(bad) = params.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite {kind} parameter {bad}"
        )));
    }
    match kind {
        GroupKind::Gl1R if params[0] == 0.0 => Err(Error::InvalidParameter(String::from(
            "gl1r scale must be non-zero",
        ))),
        GroupKind::Gl1C if params[0] == 0.0 && params[1] == 0.0 => Err(
            Error::InvalidParameter(String::from("gl1c modulus must be positive")),
        ),
        _ => Ok(()),
    }
}

fn rot_z(a: f64) -> [f64; 9] {
    let (s, c) = (sin(a), cos(a));
    [c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]
}

fn rot_x(a: f64) -> [f64; 9] {
    let (s, c) = (sin(a), cos(a));
    [1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c]
}

fn d_rot_z(a: f64) -> [f64; 9] {
    let (s, c) = (sin(a), cos(a));
    [-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0]
}

fn d_rot_x(a: f64) -> [f64; 9] {
    let (s, c) = (sin(a), cos(a));
    [0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s]
}

fn mul3(a: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[i * 3 + j] = (0..3).map(|k| a[i * 3 + k] * b[k * 3 + j]).sum();
        }
    }
    out
}

/// Real encoding of `a0·I + i·scale·(n·σ)` for the Pauli generators.
fn su2_encoded(a0: f64, n: [f64; 3], scale: f64) -> BlockMatrix {
    let [nx, ny, nz] = n;
    // complex entries (re, im), row-major
    let z = [
        (a0, scale * nz),
        (scale * ny, scale * nx),
        (-scale * ny, scale * nx),
        (a0, -scale * nz),
    ];
    let mut m = BlockMatrix::zeros(GroupKind::Su2);
    for (idx, &(re, im)) in z.iter().enumerate() {
        let (i, j) = (idx / 2, idx % 2);
        m.set(2 * i, 2 * j, re);
        m.set(2 * i, 2 * j + 1, -im);
        m.set(2 * i + 1, 2 * j, im);
        m.set(2 * i + 1, 2 * j + 1, re);
    }
    m
}

fn su2_axis(theta: f64, phi: f64) -> [f64; 3] {
    [sin(theta) * cos(phi), sin(theta) * sin(phi), cos(theta)]
}

fn block_from3(kind: GroupKind, e: &[f64; 9]) -> BlockMatrix {
    let mut m = BlockMatrix::zeros(kind);
    m.entries[..9].copy_from_slice(e);
    m
}

/// Builds the block's group element from its parameters.
///
/// SO(3) uses the Z-X-Z Euler rotation `R_z(φ) R_x(θ) R_z(ψ)`; SU(2) uses
/// `cos α·I + i sin α (n̂·σ)` with `n̂ = (sin θ cos φ, sin θ sin φ, cos θ)`.
pub fn build_block(kind: GroupKind, params: &[f64]) -> Result<BlockMatrix> {
    check_params(kind, params)?;
    Ok(build_unchecked(kind, params))
}

pub(crate) fn build_unchecked(kind: GroupKind, params: &[f64]) -> BlockMatrix {
    let mut m = BlockMatrix::zeros(kind);
    match kind {
        GroupKind::Translation | GroupKind::Gl1R => m.entries[0] = params[0],
        GroupKind::U1 => {
            let (s, c) = (sin(params[0]), cos(params[0]));
            m.entries[..4].copy_from_slice(&[c, -s, s, c]);
        }
        GroupKind::Gl1C => {
            let (a, b) = (params[0], params[1]);
            m.entries[..4].copy_from_slice(&[a, -b, b, a]);
        }
        GroupKind::So3 => {
            let r = mul3(&mul3(&rot_z(params[0]), &rot_x(params[1])), &rot_z(params[2]));
            m = block_from3(kind, &r);
        }
        GroupKind::Su2 => {
            let (alpha, theta, phi) = (params[0], params[1], params[2]);
            m = su2_encoded(cos(alpha), su2_axis(theta, phi), sin(alpha));
        }
    }
    m
}

/// Partial derivatives of the stored entries with respect to each parameter.
/// Only the first `kind.param_count()` entries of the result are meaningful.
pub fn block_derivatives(kind: GroupKind, params: &[f64]) -> Result<[BlockMatrix; MAX_PARAMS]> {
    check_params(kind, params)?;
    Ok(derivatives_unchecked(kind, params))
}

pub(crate) fn derivatives_unchecked(kind: GroupKind, params: &[f64]) -> [BlockMatrix; MAX_PARAMS] {
    let mut out = [BlockMatrix::zeros(kind); MAX_PARAMS];
    match kind {
        GroupKind::Translation | GroupKind::Gl1R => out[0].entries[0] = 1.0,
        GroupKind::U1 => {
            let (s, c) = (sin(params[0]), cos(params[0]));
            out[0].entries[..4].copy_from_slice(&[-s, -c, c, -s]);
        }
        GroupKind::Gl1C => {
            out[0].entries[..4].copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            out[1].entries[..4].copy_from_slice(&[0.0, -1.0, 1.0, 0.0]);
        }
        GroupKind::So3 => {
            let (a, b, c) = (params[0], params[1], params[2]);
            let (za, xb, zc) = (rot_z(a), rot_x(b), rot_z(c));
            out[0] = block_from3(kind, &mul3(&mul3(&d_rot_z(a), &xb), &zc));
            out[1] = block_from3(kind, &mul3(&mul3(&za, &d_rot_x(b)), &zc));
            out[2] = block_from3(kind, &mul3(&mul3(&za, &xb), &d_rot_z(c)));
        }
        GroupKind::Su2 => {
            let (alpha, theta, phi) = (params[0], params[1], params[2]);
            let (sa, ca) = (sin(alpha), cos(alpha));
            let (st, ct, sp, cp) = (sin(theta), cos(theta), sin(phi), cos(phi));
            out[0] = su2_encoded(-sa, su2_axis(theta, phi), ca);
            out[1] = su2_encoded(0.0, [ct * cp, ct * sp, -st], sa);
            out[2] = su2_encoded(0.0, [-st * sp, st * cp, 0.0], sa);
        }
    }
    out
}

/// Parameters of the identity element.
pub fn identity_params(kind: GroupKind) -> [f64; MAX_PARAMS] {
    match kind {
        GroupKind::Gl1R | GroupKind::Gl1C => [1.0, 0.0, 0.0],
        _ => [0.0; MAX_PARAMS],
    }
}

/// Maps parameters into their canonical ranges without changing the element.
///
/// Angles wrap into `[0, 2π)`; the SU(2) polar angle is reflected into `[0, π]`
/// with the azimuth shifted by `π`, which leaves the axis unchanged.
pub fn canonicalize(kind: GroupKind, params: &mut [f64]) {
    match kind {
        GroupKind::U1 => params[0] = wrap_angle(params[0]),
        GroupKind::So3 => params.iter_mut().for_each(|p| *p = wrap_angle(*p)),
        GroupKind::Su2 => {
            params[0] = wrap_angle(params[0]);
            let mut theta = wrap_angle(params[1]);
            let mut phi = params[2];
            if theta > PI {
                theta = TAU - theta;
                phi += PI;
            }
            params[1] = theta;
            params[2] = wrap_angle(phi);
        }
        GroupKind::Translation | GroupKind::Gl1R | GroupKind::Gl1C => {}
    }
}

/// Draws parameters for a random element: angles uniform over their canonical
/// ranges, translations uniform in `[-scale, scale]`, scalings with modulus in
/// `[0.5, 1.5]` and uniform sign or phase.
pub fn sample_params<R: Rng + ?Sized>(kind: GroupKind, scale: f64, rng: &mut R, out: &mut [f64]) {
    match kind {
        GroupKind::Translation => out[0] = rng.gen_range(-scale..=scale),
        GroupKind::U1 => out[0] = rng.gen_range(0.0..TAU),
        GroupKind::Gl1R => {
            let m: f64 = rng.gen_range(0.5..1.5);
            out[0] = if rng.gen_bool(0.5) { m } else { -m };
        }
        GroupKind::Gl1C => {
            let m: f64 = rng.gen_range(0.5..1.5);
            let ph: f64 = rng.gen_range(0.0..TAU);
            out[0] = m * cos(ph);
            out[1] = m * sin(ph);
        }
        GroupKind::So3 => out[..3].iter_mut().for_each(|p| *p = rng.gen_range(0.0..TAU)),
        GroupKind::Su2 => {
            out[0] = rng.gen_range(0.0..TAU);
            // uniform axis on the sphere
            let z: f64 = rng.gen_range(-1.0..=1.0);
            out[1] = libm::acos(z);
            out[2] = rng.gen_range(0.0..TAU);
        }
    }
}
