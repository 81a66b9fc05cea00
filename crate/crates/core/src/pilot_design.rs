//! Deterministic training designs.
//!
//! All matrices here are DFT-structured with 0-indexed exponents: entry
//! `(r, c)` is `e^{-j·r·c·θ}`.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::channel_model::ReflectionSchedule;
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, CMatrix, CVector, Pseudoinverse, ONE};

// The exponent is reduced modulo the period before scaling so large `r·c`
// products keep full precision.
fn dft_block_exact(rows: usize, cols: usize, period: usize) -> CMatrix {
    let theta = TAU / period as f64;
    CMatrix::from_fn(rows, cols, |r, c| Complex64::from_polar(1.0, -theta * ((r * c) % period) as f64))
}

/// `(n+1) × (n+1)` DFT matrix used for the anchor and A2 broadcast phases.
///
/// Column `i` is `[1, v_iᵀ]ᵀ`; row 0 multiplies the direct path.
pub fn dft_extended_matrix(n: usize) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("IRS must have at least one element".into()));
    }
    Ok(dft_block_exact(n + 1, n + 1, n + 1))
}

/// Pilot matrix of one full user group: first `m` rows of the `n`-point DFT.
pub fn group_pilot_matrix(m: usize, n: usize) -> Result<CMatrix> {
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("group pilots need 1 <= m <= n, got m={m}, n={n}")));
    }
    Ok(dft_block_exact(m, n, n))
}

/// `n × n` DFT reflection matrix of one full user group.
pub fn group_reflection_matrix(n: usize) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("IRS must have at least one element".into()));
    }
    Ok(dft_block_exact(n, n, n))
}

/// Number of training symbols for a last group of `m1` users:
/// `⌈m1·n / m⌉`.
pub fn last_group_len(m1: usize, m: usize, n: usize) -> usize {
    (m1 * n).div_ceil(m)
}

/// Pilots (`m1 × n1`) and reflections (`n × n1`) for the last user group,
/// `n1 = ⌈m1·n/m⌉`, with the phase step `2π/n`.
pub fn last_group_design(m1: usize, m: usize, n: usize) -> Result<(CMatrix, CMatrix)> {
    if m1 == 0 || m1 > m || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "last group needs 1 <= m1 <= m and n >= 1, got m1={m1}, m={m}, n={n}"
        )));
    }
    let n1 = last_group_len(m1, m, n);
    Ok((dft_block_exact(m1, n1, n), dft_block_exact(n, n1, n)))
}

/// Stacked system matrix whose row-block `i` is `x_iᵀ ⊗ (H · diag(v_i))`.
///
/// `channel` is `M × N`, `pilots` is `G × τ` (column `i` is `x_i`) and
/// `reflections` is `N × τ`. The result is `(M·τ) × (G·N)` and maps the
/// stacked IRS-user vectors `[h_1; …; h_G]` to the stacked observations.
pub fn stacked_system(channel: &CMatrix, pilots: &CMatrix, reflections: &CMatrix) -> Result<CMatrix> {
    let (m, n) = channel.shape();
    let (g, tau) = pilots.shape();
    if reflections.shape() != (n, tau) {
        return Err(Error::Dimension(format!(
            "reflections are {:?}, expected ({n}, {tau})",
            reflections.shape()
        )));
    }
    let mut b = CMatrix::zeros(m * tau, g * n);
    for i in 0..tau {
        for c in 0..n {
            let v = reflections[(c, i)];
            for k in 0..g {
                let w = pilots[(k, i)] * v;
                for r in 0..m {
                    b[(i * m + r, k * n + c)] = w * channel[(r, c)];
                }
            }
        }
    }
    Ok(b)
}

/// Which protocol step a design serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingStep {
    /// A1 transmits; BS and A2 listen.
    AnchorA1,
    /// A2 transmits; the BS listens.
    AnchorA2,
    /// A2 broadcasts; every user listens.
    A2Broadcast,
    /// IRS off, all users transmit orthogonal pilots.
    DirectChannels,
    /// One user per symbol with a fixed reflection pattern.
    SingleUserSlots,
    /// Users `first_user .. first_user + size` transmit jointly.
    UserGroup { first_user: usize, size: usize },
}

/// Reflection schedule plus the pilot symbols sent alongside it.
///
/// Pilot entries have modulus 1, or 0 where a source stays silent.
#[derive(Debug, Clone)]
pub struct TrainingDesign {
    pub reflection: ReflectionSchedule,
    /// `sources × T`
    pub pilots: CMatrix,
    pub step: TrainingStep,
}

impl TrainingDesign {
    fn checked(reflection: ReflectionSchedule, pilots: CMatrix, step: TrainingStep) -> Result<Self> {
        if reflection.len() != pilots.ncols() {
            return Err(Error::Dimension(format!(
                "{} reflection vectors for {} pilot symbols",
                reflection.len(),
                pilots.ncols()
            )));
        }
        for p in pilots.iter() {
            let r = p.norm();
            if !(r < 1e-12 || (r - 1.0).abs() < 1e-12) {
                return Err(Error::InvalidArgument(format!("pilot symbol modulus {r} is neither 0 nor 1")));
            }
        }
        Ok(Self { reflection, pilots, step })
    }

    /// Single anchor transmitting unit pilots over `[1; V]`, where the
    /// `(n+1) × τ` extended matrix must have rank `n+1`.
    pub fn single_source(extended: &CMatrix, step: TrainingStep) -> Result<Self> {
        let (rows, tau) = extended.shape();
        if rows < 2 {
            return Err(Error::InvalidArgument("extended training matrix needs at least 2 rows".into()));
        }
        let (rank, condition) = numerical_rank(extended);
        if rank < rows {
            return Err(Error::RankDeficient { rank, required: rows, condition });
        }
        let pilots = extended.rows(0, 1).clone_owned();
        let reflection = CMatrix::from_fn(rows - 1, tau, |r, c| extended[(r + 1, c)] / pilots[(0, c)]);
        Self::checked(ReflectionSchedule::new(reflection)?, pilots, step)
    }

    /// Minimum-length anchor design: `τ = n+1` columns of the extended DFT.
    pub fn anchor(n: usize, step: TrainingStep) -> Result<Self> {
        Self::single_source(&dft_extended_matrix(n)?, step)
    }

    /// `K` orthogonal DFT pilots with the IRS off.
    pub fn direct(users: usize, irs_elements: usize) -> Result<Self> {
        if users == 0 {
            return Err(Error::InvalidArgument("need at least one user".into()));
        }
        let pilots = dft_block_exact(users, users, users);
        Self::checked(ReflectionSchedule::off(irs_elements, users), pilots, TrainingStep::DirectChannels)
    }

    /// Users transmit one at a time, all seeing reflection vector `v`.
    pub fn single_user_slots(users: usize, v: &CVector) -> Result<Self> {
        Self::checked(
            ReflectionSchedule::repeated(v, users)?,
            CMatrix::identity(users, users),
            TrainingStep::SingleUserSlots,
        )
    }

    /// Joint design for a group of `size ≤ m` users (full group uses
    /// `τ = n`, a partial one `τ = ⌈size·n/m⌉`).
    pub fn user_group(first_user: usize, size: usize, m: usize, n: usize) -> Result<Self> {
        let (pilots, reflections) = if size == m {
            (group_pilot_matrix(m, n)?, group_reflection_matrix(n)?)
        } else {
            last_group_design(size, m, n)?
        };
        Self::checked(
            ReflectionSchedule::new(reflections)?,
            pilots,
            TrainingStep::UserGroup { first_user, size },
        )
    }

    pub fn len(&self) -> usize {
        self.pilots.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.pilots.ncols() == 0
    }

    pub fn sources(&self) -> usize {
        self.pilots.nrows()
    }

    /// `[a_i; a_i·v_i]` stacked over `i` for single-source designs.
    pub fn extended_matrix(&self) -> Result<CMatrix> {
        if self.sources() != 1 {
            return Err(Error::InvalidArgument("extended matrix is defined for single-source designs".into()));
        }
        let n = self.reflection.elements();
        let v = self.reflection.as_matrix();
        Ok(CMatrix::from_fn(n + 1, self.len(), |r, c| {
            let a = self.pilots[(0, c)];
            if r == 0 {
                a
            } else {
                a * v[(r - 1, c)]
            }
        }))
    }
}

/// A training design together with the right inverse of its training
/// matrix, built once and reused for every received block.
#[derive(Debug, Clone)]
pub struct PreparedTraining {
    pub design: TrainingDesign,
    inverse: Pseudoinverse,
}

impl PreparedTraining {
    /// Single-source anchor training; inverts the extended matrix `[a; a·V]`.
    pub fn anchor(n: usize, step: TrainingStep) -> Result<Self> {
        let design = TrainingDesign::anchor(n, step)?;
        let inverse = Pseudoinverse::full_row_rank(&design.extended_matrix()?)?;
        Ok(Self { design, inverse })
    }

    /// Direct-channel training with the IRS off; inverts the `K × τ` pilots.
    pub fn direct(users: usize, irs_elements: usize) -> Result<Self> {
        let design = TrainingDesign::direct(users, irs_elements)?;
        let inverse = Pseudoinverse::full_row_rank(&design.pilots)?;
        Ok(Self { design, inverse })
    }

    /// `Y A⁺ / √p`, where `A` is the inverted training matrix.
    pub fn estimate(&self, y: &CMatrix, power: f64) -> Result<CMatrix> {
        if !(power > 0.0) {
            return Err(Error::InvalidArgument(format!("pilot power must be positive, got {power}")));
        }
        Ok(self.inverse.solve_right(y)? / Complex64::new(power.sqrt(), 0.0))
    }

    pub fn len(&self) -> usize {
        self.design.len()
    }

    pub fn is_empty(&self) -> bool {
        self.design.is_empty()
    }
}

/// User grouping for Scheme 1 with `M < N`: `L = ⌈K/M⌉` groups, the first
/// `L-1` holding `M` users and the last `M₁ = K - (L-1)M`.
pub fn user_groups(users: usize, m: usize, n: usize) -> Result<Vec<TrainingDesign>> {
    if users == 0 || m == 0 {
        return Err(Error::InvalidArgument("need at least one user and one antenna".into()));
    }
    let groups = users.div_ceil(m);
    (0..groups)
        .map(|l| {
            let first = l * m;
            let size = (users - first).min(m);
            TrainingDesign::user_group(first, size, m, n)
        })
        .collect()
}

/// All-ones reflection vector (`Φ = I`).
pub fn identity_reflection(n: usize) -> CVector {
    CVector::from_element(n, ONE)
}

/// Row `index` of the `n`-point DFT as a reflection vector.
pub fn dft_row_reflection(n: usize, index: usize) -> CVector {
    dft_block_exact(index + 1, n, n).row(index).transpose()
}
