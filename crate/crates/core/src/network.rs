//! Two-layer ReLU networks `u_i = (1/√m) Σ_r v_r σ(W_r·x_i)` whose first
//! layer is stored as `W` (dense), `W = BC` or `W = ABC`.
//!
//! Only the matrix returned by [`Network::trainable`] ever changes; `A`, `C`
//! and the output signs `v` are frozen at construction and shared through an
//! `Arc` between a network and everything derived from it by training.
//!
//! Activation convention: a unit is on when its pre-activation is `≥ 0`, so
//! the ReLU derivative at zero is taken as 1.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::jl::{JlKind, JlOperator};
use crate::linalg::{gaussian_matrix, matmul, matmul_nt, rng_stream, Matrix, NoCount, OpCounter};

/// Rows of `x` must have unit norm within this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Inputs on the unit sphere with labels in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() < 2 {
            return invalid(format!("dataset needs at least 2 samples, got {}", x.rows()));
        }
        if y.len() != x.rows() {
            return invalid(format!("{} labels for {} inputs", y.len(), x.rows()));
        }
        for i in 0..x.rows() {
            let nr = crate::linalg::norm2(x.row(i));
            if (nr - 1.0).abs() > UNIT_NORM_TOL {
                return invalid(format!("input {i} has norm {nr}, expected 1"));
            }
        }
        if let Some(bad) = y.iter().find(|v| !(v.abs() <= 1.0)) {
            return invalid(format!("label {bad} outside [-1, 1]"));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| self.x.row(i).to_vec()).collect();
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Self::new(Matrix::from_rows(&rows)?, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    #[serde(rename = "dense")]
    Dense,
    #[serde(rename = "bc")]
    TwoFactor,
    #[serde(rename = "abc")]
    ThreeFactor,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Dense, Variant::TwoFactor, Variant::ThreeFactor];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dense => "dense",
            Variant::TwoFactor => "bc",
            Variant::ThreeFactor => "abc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Variant::Dense),
            "bc" => Ok(Variant::TwoFactor),
            "abc" => Ok(Variant::ThreeFactor),
            _ => Err(Error::Parse(format!("unknown variant `{s}` (dense|bc|abc)"))),
        }
    }

    fn tag(self) -> u8 {
        match self {
            Variant::Dense => 0,
            Variant::TwoFactor => 1,
            Variant::ThreeFactor => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == t)
            .ok_or_else(|| Error::Parse(format!("bad variant tag {t}")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Width `m`, input dim `d`, projected dim `l` (bc/abc), latent dim `k` (abc).
/// Unused fields are ignored by the variants that do not need them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub m: usize,
    pub d: usize,
    pub l: usize,
    pub k: usize,
}

impl Dims {
    pub fn new(m: usize, d: usize, l: usize, k: usize) -> Self {
        Self { m, d, l, k }
    }

    pub fn validate(&self, variant: Variant) -> Result<()> {
        let need: &[(&str, usize)] = match variant {
            Variant::Dense => &[("m", self.m), ("d", self.d)],
            Variant::TwoFactor => &[("m", self.m), ("d", self.d), ("l", self.l)],
            Variant::ThreeFactor => &[("m", self.m), ("d", self.d), ("l", self.l), ("k", self.k)],
        };
        for (name, v) in need {
            if *v == 0 {
                return invalid(format!("{variant} network needs {name} >= 1"));
            }
        }
        Ok(())
    }

    /// Shape of the trainable matrix.
    pub fn trainable_shape(&self, variant: Variant) -> (usize, usize) {
        match variant {
            Variant::Dense => (self.m, self.d),
            Variant::TwoFactor => (self.m, self.l),
            Variant::ThreeFactor => (self.k, self.l),
        }
    }
}

/// Parts that never change during training.
#[derive(Debug, PartialEq)]
pub struct Frozen {
    /// `m × k`, abc only.
    pub a: Option<Matrix>,
    /// `l × d` projection, bc/abc only.
    pub c: Option<JlOperator>,
    /// Output signs, length `m`.
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    variant: Variant,
    dims: Dims,
    seed: Option<u64>,
    frozen: Arc<Frozen>,
    b: Matrix,
}

/// Per-sample pre-activations (`n × m`) and outputs.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub pre: Matrix,
    pub u: Vec<f64>,
}

/// `z[(i, r)] = v_r · 1{pre_{i,r} ≥ 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationPattern {
    pub z: Matrix,
}

impl ActivationPattern {
    pub fn is_on(&self, i: usize, r: usize) -> bool {
        self.z[(i, r)] != 0.0
    }
}

impl Network {
    /// Seeded initialization: A from `seed+1` (std `1/√k`), C from `seed+2`
    /// (std `1/√l`), v from `seed+3`, B from `seed+4` (std 1).
    pub fn init(variant: Variant, dims: Dims, seed: u64) -> Result<Self> {
        Self::init_with_projection(variant, dims, seed, JlKind::Gaussian)
    }

    pub fn init_with_projection(
        variant: Variant,
        dims: Dims,
        seed: u64,
        projection: JlKind,
    ) -> Result<Self> {
        dims.validate(variant)?;
        let frozen = build_frozen(variant, dims, seed, projection)?;
        let (rows, cols) = dims.trainable_shape(variant);
        let b = gaussian_matrix(rows, cols, 1.0, seed.wrapping_add(4))?;
        Ok(Self { variant, dims, seed: Some(seed), frozen: Arc::new(frozen), b })
    }

    /// Dense network with explicit weights and signs (no seed, so it cannot
    /// be checkpointed).
    pub fn dense_from(w: Matrix, v: Vec<f64>) -> Result<Self> {
        Self::from_parts(Variant::Dense, None, None, v, w)
    }

    /// Assemble a network from explicit parts; dims are inferred.
    pub fn from_parts(
        variant: Variant,
        a: Option<Matrix>,
        c: Option<JlOperator>,
        v: Vec<f64>,
        b: Matrix,
    ) -> Result<Self> {
        if v.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return invalid("output signs must be +1 or -1");
        }
        let m = v.len();
        let dims = match variant {
            Variant::Dense => {
                if a.is_some() || c.is_some() {
                    return invalid("dense network takes no A or C");
                }
                Dims::new(m, b.cols(), 0, 0)
            }
            Variant::TwoFactor => {
                let c = c.as_ref().ok_or_else(|| Error::InvalidArgument("bc needs C".into()))?;
                if a.is_some() {
                    return invalid("bc network takes no A");
                }
                Dims::new(m, c.in_dim(), c.out_dim(), 0)
            }
            Variant::ThreeFactor => {
                let c = c.as_ref().ok_or_else(|| Error::InvalidArgument("abc needs C".into()))?;
                let a = a.as_ref().ok_or_else(|| Error::InvalidArgument("abc needs A".into()))?;
                if a.rows() != m {
                    return invalid(format!("A has {} rows, expected {m}", a.rows()));
                }
                Dims::new(m, c.in_dim(), c.out_dim(), a.cols())
            }
        };
        dims.validate(variant)?;
        if b.shape() != dims.trainable_shape(variant) {
            return invalid(format!(
                "trainable matrix is {:?}, expected {:?}",
                b.shape(),
                dims.trainable_shape(variant)
            ));
        }
        Ok(Self { variant, dims, seed: None, frozen: Arc::new(Frozen { a, c, v }), b })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn m(&self) -> usize {
        self.dims.m
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn frozen(&self) -> &Arc<Frozen> {
        &self.frozen
    }

    pub fn v(&self) -> &[f64] {
        &self.frozen.v
    }

    pub fn a(&self) -> Option<&Matrix> {
        self.frozen.a.as_ref()
    }

    pub fn c(&self) -> Option<&JlOperator> {
        self.frozen.c.as_ref()
    }

    /// `W` for dense, `B` otherwise.
    pub fn trainable(&self) -> &Matrix {
        &self.b
    }

    /// Same frozen parts, new trainable matrix.
    pub fn with_trainable(&self, b: Matrix) -> Result<Self> {
        if b.shape() != self.b.shape() {
            return invalid(format!("trainable shape {:?} != {:?}", b.shape(), self.b.shape()));
        }
        Ok(Self { b, ..self.clone() })
    }

    pub fn shares_frozen(&self, other: &Network) -> bool {
        self.variant == other.variant
            && self.dims == other.dims
            && (Arc::ptr_eq(&self.frozen, &other.frozen) || *self.frozen == *other.frozen)
    }

    /// Inputs as seen by the trainable matrix: `X Cᵀ` for bc/abc, `X` for dense.
    pub fn project(&self, x: &Matrix, ops: &mut impl OpCounter) -> Result<Matrix> {
        if x.cols() != self.dims.d {
            return invalid(format!("network expects {} input columns, got {}", self.dims.d, x.cols()));
        }
        match &self.frozen.c {
            Some(c) => c.apply_counted(x, ops),
            None => Ok(x.clone()),
        }
    }

    /// Forward pass from already projected inputs.
    pub fn forward_projected(&self, xt: &Matrix, ops: &mut impl OpCounter) -> Result<ForwardPass> {
        if xt.cols() != self.b.cols() {
            return invalid(format!("projected input has {} columns, expected {}", xt.cols(), self.b.cols()));
        }
        let pre = match &self.frozen.a {
            None => matmul_nt(xt, &self.b, ops),
            Some(a) => matmul_nt(&matmul_nt(xt, &self.b, ops), a, ops),
        };
        let scale = 1.0 / (self.dims.m as f64).sqrt();
        let v = &self.frozen.v;
        let u = (0..pre.rows())
            .map(|i| {
                let mut acc = 0.0;
                for (p, s) in pre.row(i).iter().zip(v) {
                    if *p >= 0.0 {
                        acc += s * p;
                    }
                }
                acc * scale
            })
            .collect();
        Ok(ForwardPass { pre, u })
    }

    pub fn forward(&self, x: &Matrix) -> Result<Vec<f64>> {
        let xt = self.project(x, &mut NoCount)?;
        Ok(self.forward_projected(&xt, &mut NoCount)?.u)
    }

    /// Pre-activation matrix `n × m`.
    pub fn pre_activations(&self, x: &Matrix) -> Result<Matrix> {
        let xt = self.project(x, &mut NoCount)?;
        Ok(self.forward_projected(&xt, &mut NoCount)?.pre)
    }

    pub fn activation_pattern(&self, x: &Matrix) -> Result<ActivationPattern> {
        Ok(pattern_from_pre(&self.pre_activations(x)?, &self.frozen.v))
    }

    /// Explicit first-layer matrix `C` (`l × d`); `None` for dense.
    pub fn projection_matrix(&self) -> Option<Matrix> {
        self.frozen.c.as_ref().map(|c| c.materialize())
    }

    /// Row `r` of the effective first layer in input space.
    pub fn effective_weight_row(&self, r: usize) -> Result<Vec<f64>> {
        if r >= self.dims.m {
            return invalid(format!("row {r} out of range for width {}", self.dims.m));
        }
        let latent: Vec<f64> = match &self.frozen.a {
            None => self.b.row(r).to_vec(),
            Some(a) => {
                let mut acc = vec![0.0; self.b.cols()];
                for (j, aj) in a.row(r).iter().enumerate() {
                    for (o, bv) in acc.iter_mut().zip(self.b.row(j)) {
                        *o += aj * bv;
                    }
                }
                acc
            }
        };
        match &self.frozen.c {
            None => Ok(latent),
            Some(c) => {
                let row = Matrix::from_vec(1, latent.len(), latent)?;
                Ok(matmul(&row, &c.materialize(), &mut NoCount).into_vec())
            }
        }
    }

    /// Full effective first layer `m × d`.
    pub fn effective_weights(&self) -> Matrix {
        let latent = match &self.frozen.a {
            None => self.b.clone(),
            Some(a) => matmul(a, &self.b, &mut NoCount),
        };
        match &self.frozen.c {
            None => latent,
            Some(c) => matmul(&latent, &c.materialize(), &mut NoCount),
        }
    }

    /// Binary checkpoint: magic, variant, projection kind, dims, seed, then
    /// the trainable matrix. Everything frozen is rebuilt from the seed.
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        let seed = self
            .seed
            .ok_or_else(|| Error::InvalidArgument("network built from explicit parts has no seed".into()))?;
        let kind = match self.frozen.c.as_ref().map(|c| c.kind()) {
            None | Some(JlKind::Gaussian) => 0u8,
            Some(JlKind::FastHadamard) => 1u8,
        };
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&[self.variant.tag(), kind])?;
        for v in [self.dims.m, self.dims.d, self.dims.l, self.dims.k] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&seed.to_le_bytes())?;
        w.write_all(&(self.b.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.b.cols() as u64).to_le_bytes())?;
        for x in self.b.as_slice() {
            w.write_all(&x.to_bits().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Parse("not a network checkpoint".into()));
        }
        let mut tags = [0u8; 2];
        r.read_exact(&mut tags)?;
        let variant = Variant::from_tag(tags[0])?;
        let kind = match tags[1] {
            0 => JlKind::Gaussian,
            1 => JlKind::FastHadamard,
            t => return Err(Error::Parse(format!("bad projection tag {t}"))),
        };
        let mut u = || -> Result<u64> {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            Ok(u64::from_le_bytes(buf))
        };
        let dims = Dims::new(u()? as usize, u()? as usize, u()? as usize, u()? as usize);
        let seed = u()?;
        let (rows, cols) = (u()? as usize, u()? as usize);
        if (rows, cols) != dims.trainable_shape(variant) {
            return Err(Error::Parse(format!("checkpoint matrix {rows}x{cols} does not fit dims")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_bits(u()?));
        }
        let net = Self::init_with_projection(variant, dims, seed, kind)?;
        net.with_trainable(Matrix::from_vec(rows, cols, data)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_checkpoint(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_checkpoint(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"LRNTKNET";

pub(crate) fn pattern_from_pre(pre: &Matrix, v: &[f64]) -> ActivationPattern {
    let z = Matrix::from_fn(pre.rows(), pre.cols(), |i, r| if pre[(i, r)] >= 0.0 { v[r] } else { 0.0 });
    ActivationPattern { z }
}

fn build_frozen(variant: Variant, dims: Dims, seed: u64, projection: JlKind) -> Result<Frozen> {
    let a = match variant {
        Variant::ThreeFactor => Some(gaussian_matrix(
            dims.m,
            dims.k,
            1.0 / (dims.k as f64).sqrt(),
            seed.wrapping_add(1),
        )?),
        _ => None,
    };
    let c = match variant {
        Variant::Dense => None,
        _ => Some(JlOperator::new(projection, dims.l, dims.d, seed.wrapping_add(2))?),
    };
    let mut rng = rng_stream(seed.wrapping_add(3), 0);
    let v = (0..dims.m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    Ok(Frozen { a, c, v })
}
