//! Scheme 1: the BS learns the element-wise square of the BS-IRS channel from
//! anchor training, then resolves every user's cascaded channel from user
//! pilots.
//!
//! Phase I (once per anchor coherence window):
//! 1. A1 sends `N+1` pilots; the BS estimates `[h_ba1, H_bsa1]` and A2
//!    estimates `[h_a1a2, h_a1sa2]`, which it feeds back.
//! 2. A2 sends `N+1` pilots; the BS estimates `[h_ba2, H_bsa2]`.
//! 3. `G = H_bsa1 ⊙ H_bsa2 · diag(h_a1sa2)⁻¹ = H_bs ⊙ H_bs`, and a candidate
//!    `H̃_bs` equal to `H_bs` up to a sign per column is built from one
//!    reference row of `G` and the column ratios of `H_bsa1`.
//!
//! Phase II (every user coherence slot): direct channels with the IRS off,
//! then the IRS-user channels by least squares against `H̃_bs`. The column
//! signs of `H̃_bs` cancel in `H̃_bs · diag(h̃_su)`, so the cascaded estimate
//! is unambiguous.

use num_complex::Complex64;
use rand::Rng;

use crate::channel_model::{receive_uplink, Case1Reflection, ChannelRealization, Node, ScenarioConfig};
use crate::error::{Error, Result};
use crate::linalg::{argmax_modulus, principal_sqrt, scale_columns, solve_least_squares, CMatrix, CVector, Pseudoinverse};
use crate::pilot_design::{
    dft_row_reflection, group_pilot_matrix, group_reflection_matrix, identity_reflection, stacked_system, user_groups,
    PreparedTraining, TrainingDesign, TrainingStep,
};

/// Channels estimated from A1's pilots.
#[derive(Debug, Clone)]
pub struct AnchorA1Estimate {
    /// `M × N`
    pub bs_irs_a1: CMatrix,
    pub bs_a1: CVector,
    pub a1_a2: Complex64,
    /// Length `N`; this is what A2 feeds back.
    pub a1_irs_a2: CVector,
}

/// Everything the BS holds after Phase I.
#[derive(Debug, Clone)]
pub struct Phase1State {
    pub bs_irs_a1: CMatrix,
    pub bs_a1: CVector,
    pub a1_a2: Complex64,
    pub a1_irs_a2: CVector,
    pub bs_irs_a2: CMatrix,
    pub bs_a2: CVector,
    /// `G`, the estimate of `H_bs ⊙ H_bs`.
    pub hadamard_square: CMatrix,
    /// `H̃_bs`
    pub candidate: CMatrix,
    /// `α(m, n) = H_bsa1(m, n) / H_bsa1(r_n, n)`
    pub ratios: CMatrix,
    /// Reference row `r_n` used for each column.
    pub reference_rows: Vec<usize>,
}

/// Output of a full estimation run for one user coherence slot.
#[derive(Debug, Clone)]
pub struct CascadedEstimate {
    /// `Ĥ_bsu_k`, `M × N` each.
    pub bs_irs_users: Vec<CMatrix>,
    /// `ĥ_bu_k`, length `M` each.
    pub bs_users: Vec<CVector>,
    pub phase1_pilots: usize,
    pub phase2_pilots: usize,
    /// Complex scalars fed back to the BS in Phase I.
    pub phase1_feedback: usize,
    /// Complex scalars fed back to the BS per Phase II.
    pub phase2_feedback: usize,
}

/// Fails on the first entry not exceeding `eps · max|v|`.
pub(crate) fn guard_divisor(v: &CVector, eps: f64) -> Result<()> {
    let max = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    for (index, x) in v.iter().enumerate() {
        let magnitude = x.norm();
        if !(magnitude > eps * max) {
            return Err(Error::SingularCascade { index, magnitude });
        }
    }
    Ok(())
}

/// Splits an anchor least-squares estimate into `(direct, cascaded)`.
pub(crate) fn anchor_least_squares(y: &CMatrix, training: &PreparedTraining, power: f64) -> Result<(CVector, CMatrix)> {
    let est = training.estimate(y, power)?;
    let direct = est.column(0).clone_owned();
    let cascaded = est.columns(1, est.ncols() - 1).clone_owned();
    Ok((direct, cascaded))
}

/// First half of Phase I, shared with Scheme 2.
pub fn estimate_anchor_a1(y_bs: &CMatrix, y_a2: &CMatrix, training: &PreparedTraining, p1: f64) -> Result<AnchorA1Estimate> {
    if y_a2.nrows() != 1 {
        return Err(Error::Dimension(format!("A2 observation must be one row, got {}", y_a2.nrows())));
    }
    let (bs_a1, bs_irs_a1) = anchor_least_squares(y_bs, training, p1)?;
    let (a1_a2, a1_irs_a2) = anchor_least_squares(y_a2, training, p1)?;
    Ok(AnchorA1Estimate {
        bs_irs_a1,
        bs_a1,
        a1_a2: a1_a2[0],
        a1_irs_a2: a1_irs_a2.row(0).transpose(),
    })
}

/// Phase I: anchor least squares followed by the Hadamard-square recovery.
#[allow(clippy::too_many_arguments)]
pub fn phase1_estimate(
    y_bs_a1: &CMatrix,
    y_a2: &CMatrix,
    y_bs_a2: &CMatrix,
    training_a1: &PreparedTraining,
    training_a2: &PreparedTraining,
    p1: f64,
    p2: f64,
    eps_div: f64,
) -> Result<Phase1State> {
    let a1 = estimate_anchor_a1(y_bs_a1, y_a2, training_a1, p1)?;
    let (bs_a2, bs_irs_a2) = anchor_least_squares(y_bs_a2, training_a2, p2)?;
    if bs_irs_a2.shape() != a1.bs_irs_a1.shape() {
        return Err(Error::Dimension("A1 and A2 training disagree on (M, N)".into()));
    }
    guard_divisor(&a1.a1_irs_a2, eps_div)?;

    let mut hadamard_square = a1.bs_irs_a1.component_mul(&bs_irs_a2);
    for (mut col, d) in hadamard_square.column_iter_mut().zip(a1.a1_irs_a2.iter()) {
        col /= *d;
    }
    let candidate = candidate_bs_irs(&hadamard_square, &a1.bs_irs_a1, eps_div)?;

    Ok(Phase1State {
        bs_irs_a1: a1.bs_irs_a1,
        bs_a1: a1.bs_a1,
        a1_a2: a1.a1_a2,
        a1_irs_a2: a1.a1_irs_a2,
        bs_irs_a2,
        bs_a2,
        hadamard_square,
        candidate: candidate.matrix,
        ratios: candidate.ratios,
        reference_rows: candidate.reference_rows,
    })
}

/// `H̃_bs` together with the quantities it was built from.
#[derive(Debug, Clone)]
pub struct CandidateBsIrs {
    pub matrix: CMatrix,
    pub ratios: CMatrix,
    pub reference_rows: Vec<usize>,
}

/// Builds `H̃_bs(m, n) = α(m, n) · √G(r_n, n)` with the principal root.
///
/// `r_n` is row 0 unless `|H_bsa1(0, n)|` falls below `eps · max_n' |H_bsa1(0, n')|`,
/// in which case the largest-magnitude row of column `n` is used instead.
pub fn candidate_bs_irs(hadamard_square: &CMatrix, bs_irs_a1: &CMatrix, eps_div: f64) -> Result<CandidateBsIrs> {
    if hadamard_square.shape() != bs_irs_a1.shape() {
        return Err(Error::Dimension(format!(
            "G is {:?} but H_bsa1 is {:?}",
            hadamard_square.shape(),
            bs_irs_a1.shape()
        )));
    }
    let (m, n) = bs_irs_a1.shape();
    let row0_max = bs_irs_a1.row(0).iter().map(|x| x.norm()).fold(0.0, f64::max);
    let overall_max = bs_irs_a1.iter().map(|x| x.norm()).fold(0.0, f64::max);

    let mut matrix = CMatrix::zeros(m, n);
    let mut ratios = CMatrix::zeros(m, n);
    let mut reference_rows = Vec::with_capacity(n);
    for col in 0..n {
        let column = bs_irs_a1.column(col);
        let reference = if column[0].norm() > eps_div * row0_max {
            0
        } else {
            argmax_modulus(column.iter()).unwrap_or(0)
        };
        let pivot = column[reference];
        if !(pivot.norm() > eps_div * overall_max) {
            return Err(Error::ReferenceRow { column: col });
        }
        let g = principal_sqrt(hadamard_square[(reference, col)]);
        for row in 0..m {
            let alpha = column[row] / pivot;
            ratios[(row, col)] = alpha;
            matrix[(row, col)] = alpha * g;
        }
        reference_rows.push(reference);
    }
    Ok(CandidateBsIrs {
        matrix,
        ratios,
        reference_rows,
    })
}

/// Least-squares direct BS-user channels from `Y = √p Σ_k h_bu_k x_kᵀ + Z`
/// with the IRS off. `pilots` is `K × τ₃` and needs rank `K`.
pub fn estimate_direct(y: &CMatrix, pilots: &CMatrix, power: f64) -> Result<Vec<CVector>> {
    if !(power > 0.0) {
        return Err(Error::InvalidArgument(format!("pilot power must be positive, got {power}")));
    }
    if pilots.ncols() < pilots.nrows() {
        return Err(Error::RankDeficient {
            rank: pilots.ncols(),
            required: pilots.nrows(),
            condition: f64::INFINITY,
        });
    }
    let est = Pseudoinverse::full_row_rank(pilots)?.solve_right(y)? / Complex64::new(power.sqrt(), 0.0);
    Ok(columns(&est))
}

pub(crate) fn columns(a: &CMatrix) -> Vec<CVector> {
    a.column_iter().map(|c| c.clone_owned()).collect()
}

/// Per-user result of the `M ≥ N` branch.
#[derive(Debug, Clone)]
pub struct Case1Output {
    /// `h̃_su_k`, equal to `h_su_k` up to the column signs of `H̃_bs`.
    pub irs_user: CVector,
    /// `H̃_bs · diag(h̃_su_k)`
    pub cascade: CMatrix,
}

/// `M ≥ N`: one pilot per user. Each observation is the direct-removed
/// signal `ȳ_k = √p H_bs Φ h_su_k + z̄`, with `Φ = diag(reflection)`.
pub fn phase2_case1(observations: &[CVector], candidate: &CMatrix, reflection: &CVector, power: f64) -> Result<Vec<Case1Output>> {
    if !(power > 0.0) {
        return Err(Error::InvalidArgument(format!("pilot power must be positive, got {power}")));
    }
    if reflection.len() != candidate.ncols() {
        return Err(Error::Dimension("reflection length differs from N".into()));
    }
    let system = scale_columns(candidate, reflection);
    let pinv = Pseudoinverse::full_column_rank(&system)?;
    let scale = Complex64::new(1.0 / power.sqrt(), 0.0);
    observations
        .iter()
        .map(|y| {
            let irs_user = pinv.solve_left_vec(y)? * scale;
            let cascade = scale_columns(candidate, &irs_user);
            Ok(Case1Output { irs_user, cascade })
        })
        .collect()
}

/// `M < N`: joint estimate for one user group from the stacked
/// direct-removed observation `[ȳ_1; …; ȳ_τ]` (length `M·τ`).
pub fn phase2_case2(observation: &CVector, candidate: &CMatrix, design: &TrainingDesign, power: f64) -> Result<Vec<CMatrix>> {
    if !(power > 0.0) {
        return Err(Error::InvalidArgument(format!("pilot power must be positive, got {power}")));
    }
    let n = candidate.ncols();
    let stacked = if is_full_dft_group(design, candidate)? {
        solve_full_group(observation, candidate)?
    } else {
        let system = stacked_system(candidate, &design.pilots, design.reflection.as_matrix())?;
        solve_least_squares(&system, observation)?
    } / Complex64::new(power.sqrt(), 0.0);
    Ok((0..design.sources())
        .map(|k| scale_columns(candidate, &stacked.rows(k * n, n).clone_owned()))
        .collect())
}

/// Whether `design` is the full-group DFT design for this `M × N` candidate.
fn is_full_dft_group(design: &TrainingDesign, candidate: &CMatrix) -> Result<bool> {
    let (m, n) = candidate.shape();
    if design.sources() != m || design.len() != n || m > n {
        return Ok(false);
    }
    Ok(design.pilots == group_pilot_matrix(m, n)? && *design.reflection.as_matrix() == group_reflection_matrix(n)?)
}

/// Least-squares solve of the full-group stacked system without forming it.
///
/// With DFT pilots and reflections, `x_{k,t}·v_t[n] = ω^{t(k+n)}`, so
/// `ȳ_t = Σ_s ω^{ts} u_s` where `u_s = Σ_k H[:, s−k] h_k[s−k]` (indices mod
/// `N`). An inverse DFT over the `N` slots recovers every `u_s`, leaving `N`
/// independent `M × M` systems in place of one `MN × MN` system. The result
/// is the same stacked `[h_1; …; h_M]` (unscaled by `√p`).
fn solve_full_group(observation: &CVector, candidate: &CMatrix) -> Result<CVector> {
    let (m, n) = candidate.shape();
    if observation.len() != m * n {
        return Err(Error::Dimension(format!(
            "stacked observation has length {}, expected {}",
            observation.len(),
            m * n
        )));
    }
    let y = CMatrix::from_column_slice(m, n, observation.as_slice());
    let inverse_dft = group_reflection_matrix(n)?.map(|w| w.conj() / n as f64);
    let u = y * inverse_dft;
    let mut stacked = CVector::zeros(m * n);
    for s in 0..n {
        let element = |k: usize| (s + n - k) % n;
        let block = CMatrix::from_fn(m, m, |r, k| candidate[(r, element(k))]);
        let g = solve_least_squares(&block, &u.column(s).clone_owned())?;
        for k in 0..m {
            stacked[k * n + element(k)] = g[k];
        }
    }
    Ok(stacked)
}

/// Stacks the columns of `received − √p·Ĥ_bu·X` into one vector.
fn remove_direct(received: &CMatrix, bs_users: &[CVector], pilots: &CMatrix, power: f64) -> CVector {
    let direct = CMatrix::from_columns(bs_users);
    let residual = received - direct * pilots * Complex64::new(power.sqrt(), 0.0);
    CVector::from_column_slice(residual.as_slice())
}

pub(crate) fn check_dimensions(real: &ChannelRealization, config: &ScenarioConfig) -> Result<()> {
    let got = (real.bs_antennas(), real.irs_elements(), real.users());
    let want = (config.bs_antennas, config.irs_elements, config.users);
    if got != want {
        return Err(Error::Dimension(format!("realization is (M,N,K)={got:?}, config says {want:?}")));
    }
    Ok(())
}

pub(crate) fn noise_variance(config: &ScenarioConfig, noise_on: bool) -> f64 {
    if noise_on {
        config.noise_watts()
    } else {
        0.0
    }
}

pub(crate) fn all_users(k: usize) -> Vec<Node> {
    (0..k).map(Node::User).collect()
}

#[derive(Debug, Clone)]
enum Phase2Design {
    /// `M ≥ N`
    SingleUser { reflection: CVector, slots: TrainingDesign },
    /// `M < N`
    Groups(Vec<TrainingDesign>),
}

/// Training designs and their inverses for one scenario, built once and
/// shared by every trial and user slot.
#[derive(Debug, Clone)]
pub struct Scheme1Plan {
    config: ScenarioConfig,
    anchor_a1: PreparedTraining,
    anchor_a2: PreparedTraining,
    direct: PreparedTraining,
    phase2: Phase2Design,
}

impl Scheme1Plan {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let (m, n, k) = (config.bs_antennas, config.irs_elements, config.users);
        let phase2 = if m >= n {
            let reflection = match config.case1_reflection {
                Case1Reflection::Identity => identity_reflection(n),
                Case1Reflection::DftRow { index } => dft_row_reflection(n, index),
            };
            let slots = TrainingDesign::single_user_slots(k, &reflection)?;
            Phase2Design::SingleUser { reflection, slots }
        } else {
            Phase2Design::Groups(user_groups(k, m, n)?)
        };
        Ok(Self {
            config: config.clone(),
            anchor_a1: PreparedTraining::anchor(n, TrainingStep::AnchorA1)?,
            anchor_a2: PreparedTraining::anchor(n, TrainingStep::AnchorA2)?,
            direct: PreparedTraining::direct(k, n)?,
            phase2,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn phase1_pilots(&self) -> usize {
        self.anchor_a1.len() + self.anchor_a2.len()
    }

    pub fn phase2_pilots(&self) -> usize {
        self.direct.len()
            + match &self.phase2 {
                Phase2Design::SingleUser { slots, .. } => slots.len(),
                Phase2Design::Groups(groups) => groups.iter().map(TrainingDesign::len).sum(),
            }
    }

    /// Phase I with synthesized anchor signals.
    pub fn run_phase1<R: Rng + ?Sized>(&self, real: &ChannelRealization, noise_on: bool, rng: &mut R) -> Result<Phase1State> {
        let cfg = &self.config;
        check_dimensions(real, cfg)?;
        let sigma2 = noise_variance(cfg, noise_on);
        let (p1, p2) = (cfg.p1_watts(), cfg.p2_watts());
        let (d1, d2) = (&self.anchor_a1.design, &self.anchor_a2.design);
        let y_bs_a1 = receive_uplink(&real.uplink_to_bs(&[Node::Anchor1]), &d1.pilots, &d1.reflection, p1, sigma2, rng)?;
        let y_a2 = receive_uplink(&real.a1_to_a2(), &d1.pilots, &d1.reflection, p1, sigma2, rng)?;
        let y_bs_a2 = receive_uplink(&real.uplink_to_bs(&[Node::Anchor2]), &d2.pilots, &d2.reflection, p2, sigma2, rng)?;
        phase1_estimate(&y_bs_a1, &y_a2, &y_bs_a2, &self.anchor_a1, &self.anchor_a2, p1, p2, cfg.eps_div)
    }

    /// Phase II for one user coherence slot, reusing a Phase I state.
    /// Returns the cascaded and the direct channel estimates.
    pub fn run_phase2<R: Rng + ?Sized>(
        &self,
        real: &ChannelRealization,
        state: &Phase1State,
        noise_on: bool,
        rng: &mut R,
    ) -> Result<(Vec<CMatrix>, Vec<CVector>)> {
        let cfg = &self.config;
        check_dimensions(real, cfg)?;
        let sigma2 = noise_variance(cfg, noise_on);
        let p = cfg.p_watts();
        let users = all_users(cfg.users);

        let direct = &self.direct.design;
        let y_direct = receive_uplink(&real.uplink_to_bs(&users), &direct.pilots, &direct.reflection, p, sigma2, rng)?;
        let bs_users = columns(&self.direct.estimate(&y_direct, p)?);

        let mut cascades = Vec::with_capacity(cfg.users);
        match &self.phase2 {
            Phase2Design::SingleUser { reflection, slots } => {
                let received = receive_uplink(&real.uplink_to_bs(&users), &slots.pilots, &slots.reflection, p, sigma2, rng)?;
                let sqrt_p = Complex64::new(p.sqrt(), 0.0);
                let observations: Vec<CVector> = bs_users
                    .iter()
                    .enumerate()
                    .map(|(u, h)| received.column(u) - h * sqrt_p)
                    .collect();
                let out = phase2_case1(&observations, &state.candidate, reflection, p)?;
                cascades.extend(out.into_iter().map(|o| o.cascade));
            }
            Phase2Design::Groups(groups) => {
                for group in groups {
                    let TrainingStep::UserGroup { first_user, size } = group.step else {
                        unreachable!("user_groups yields group designs");
                    };
                    let span = first_user..first_user + size;
                    let received = receive_uplink(
                        &real.uplink_to_bs(&users[span.clone()]),
                        &group.pilots,
                        &group.reflection,
                        p,
                        sigma2,
                        rng,
                    )?;
                    let observation = remove_direct(&received, &bs_users[span], &group.pilots, p);
                    cascades.extend(phase2_case2(&observation, &state.candidate, group, p)?);
                }
            }
        }
        Ok((cascades, bs_users))
    }

    /// One anchor window containing one user slot.
    pub fn run<R: Rng + ?Sized>(&self, real: &ChannelRealization, noise_on: bool, rng: &mut R) -> Result<CascadedEstimate> {
        let state = self.run_phase1(real, noise_on, rng)?;
        let (bs_irs_users, bs_users) = self.run_phase2(real, &state, noise_on, rng)?;
        Ok(CascadedEstimate {
            bs_irs_users,
            bs_users,
            phase1_pilots: self.phase1_pilots(),
            phase2_pilots: self.phase2_pilots(),
            phase1_feedback: self.config.irs_elements,
            phase2_feedback: 0,
        })
    }
}

/// Full Scheme 1 for one anchor window containing one user slot.
pub fn run_scheme1<R: Rng + ?Sized>(
    real: &ChannelRealization,
    config: &ScenarioConfig,
    noise_on: bool,
    rng: &mut R,
) -> Result<CascadedEstimate> {
    Scheme1Plan::new(config)?.run(real, noise_on, rng)
}
