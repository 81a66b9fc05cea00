//! Scheme 2: users estimate their own A2-IRS-user cascades from an A2
//! broadcast and feed them back; the BS combines them with the A1 cascade.
//!
//! `Ĥ_bsu_k = Ĥ_bsa1 · diag(ĥ_a2su_k) · diag(ĥ_a1sa2)⁻¹`, since
//! `h_su ⊙ h_sa2 / (h_sa1 ⊙ h_sa2) = h_su / h_sa1` undoes the A1 column
//! scaling. No square root is taken, so there is no sign ambiguity.

use num_complex::Complex64;
use rand::Rng;

use crate::channel_model::{receive_uplink, ChannelRealization, Node, ScenarioConfig};
use crate::error::{Error, Result};
use crate::linalg::{scale_columns, CMatrix, CVector};
use crate::pilot_design::{PreparedTraining, TrainingStep};
use crate::scheme1::{
    all_users, anchor_least_squares, check_dimensions, columns, estimate_anchor_a1, guard_divisor, noise_variance,
    AnchorA1Estimate, CascadedEstimate,
};

/// What user `k` reports after the A2 broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFeedback {
    /// `ĥ_a2su_k`, length `N`.
    pub a2_irs_user: CVector,
    /// Estimate of the direct A2-user link; kept local, not fed back.
    pub a2_user: Complex64,
}

/// Phase I of Scheme 2: A1 training only.
pub fn phase1_a1_only(y_bs: &CMatrix, y_a2: &CMatrix, training: &PreparedTraining, p1: f64) -> Result<AnchorA1Estimate> {
    estimate_anchor_a1(y_bs, y_a2, training, p1)
}

/// Every user's least-squares estimate from the A2 broadcast. Row `k` of
/// `y_users` is what user `k` received.
pub fn user_estimate_a2_cascade(y_users: &CMatrix, training: &PreparedTraining, power: f64) -> Result<Vec<UserFeedback>> {
    let (direct, cascaded) = anchor_least_squares(y_users, training, power)?;
    Ok((0..y_users.nrows())
        .map(|k| UserFeedback {
            a2_irs_user: cascaded.row(k).transpose(),
            a2_user: direct[k],
        })
        .collect())
}

/// `Ĥ_bsa1 · diag(ĥ_a2su_k ⊘ ĥ_a1sa2)` for each user.
pub fn recover_cascaded(
    bs_irs_a1: &CMatrix,
    a1_irs_a2: &CVector,
    feedback: &[UserFeedback],
    eps_div: f64,
) -> Result<Vec<CMatrix>> {
    let n = bs_irs_a1.ncols();
    if a1_irs_a2.len() != n {
        return Err(Error::Dimension(format!("ĥ_a1sa2 has length {}, expected {n}", a1_irs_a2.len())));
    }
    guard_divisor(a1_irs_a2, eps_div)?;
    feedback
        .iter()
        .map(|f| {
            if f.a2_irs_user.len() != n {
                return Err(Error::Dimension(format!("feedback has length {}, expected {n}", f.a2_irs_user.len())));
            }
            Ok(scale_columns(bs_irs_a1, &f.a2_irs_user.component_div(a1_irs_a2)))
        })
        .collect()
}

/// Training designs and their inverses for one scenario, built once and
/// shared by every trial.
#[derive(Debug, Clone)]
pub struct Scheme2Plan {
    config: ScenarioConfig,
    anchor_a1: PreparedTraining,
    broadcast: PreparedTraining,
    direct: PreparedTraining,
}

impl Scheme2Plan {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let (n, k) = (config.irs_elements, config.users);
        Ok(Self {
            config: config.clone(),
            anchor_a1: PreparedTraining::anchor(n, TrainingStep::AnchorA1)?,
            broadcast: PreparedTraining::anchor(n, TrainingStep::A2Broadcast)?,
            direct: PreparedTraining::direct(k, n)?,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn phase1_pilots(&self) -> usize {
        self.anchor_a1.len()
    }

    pub fn phase2_pilots(&self) -> usize {
        self.direct.len() + self.broadcast.len()
    }

    /// One anchor window containing one user slot.
    ///
    /// Observations are synthesized in the order A1→A2, A2→users, A1→BS,
    /// users→BS so that everything the users see is independent of `M`.
    pub fn run<R: Rng + ?Sized>(&self, real: &ChannelRealization, noise_on: bool, rng: &mut R) -> Result<CascadedEstimate> {
        let cfg = &self.config;
        check_dimensions(real, cfg)?;
        let sigma2 = noise_variance(cfg, noise_on);
        let (p1, pa2, p) = (cfg.p1_watts(), cfg.a2_pilot_watts(), cfg.p_watts());
        let (d1, bc, direct) = (&self.anchor_a1.design, &self.broadcast.design, &self.direct.design);
        let users = all_users(cfg.users);

        let y_a2 = receive_uplink(&real.a1_to_a2(), &d1.pilots, &d1.reflection, p1, sigma2, rng)?;
        let y_users = receive_uplink(&real.a2_to_users(), &bc.pilots, &bc.reflection, pa2, sigma2, rng)?;
        let y_bs = receive_uplink(&real.uplink_to_bs(&[Node::Anchor1]), &d1.pilots, &d1.reflection, p1, sigma2, rng)?;
        let y_direct = receive_uplink(&real.uplink_to_bs(&users), &direct.pilots, &direct.reflection, p, sigma2, rng)?;

        let anchor = phase1_a1_only(&y_bs, &y_a2, &self.anchor_a1, p1)?;
        let feedback = user_estimate_a2_cascade(&y_users, &self.broadcast, pa2)?;
        let bs_irs_users = recover_cascaded(&anchor.bs_irs_a1, &anchor.a1_irs_a2, &feedback, cfg.eps_div)?;
        let bs_users = columns(&self.direct.estimate(&y_direct, p)?);

        Ok(CascadedEstimate {
            bs_irs_users,
            bs_users,
            phase1_pilots: self.phase1_pilots(),
            phase2_pilots: self.phase2_pilots(),
            phase1_feedback: cfg.irs_elements,
            phase2_feedback: cfg.users * cfg.irs_elements,
        })
    }
}

/// Full Scheme 2 for one anchor window containing one user slot.
pub fn run_scheme2<R: Rng + ?Sized>(
    real: &ChannelRealization,
    config: &ScenarioConfig,
    noise_on: bool,
    rng: &mut R,
) -> Result<CascadedEstimate> {
    Scheme2Plan::new(config)?.run(real, noise_on, rng)
}
