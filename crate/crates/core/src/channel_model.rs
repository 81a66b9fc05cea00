//! Scenario geometry, ground-truth channel draws and received training
//! signals.
//!
//! Every link is stored once. Uplink and downlink share the same object
//! (TDD reciprocity), and cascaded channels are derived on demand from the
//! stored links so they can never drift from their definitions.

use std::borrow::Cow;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cscg, cscg_matrix, scale_columns, CMatrix, CVector, ZERO};

pub type Point = [f64; 3];

/// Node positions in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub bs: Point,
    /// Center of the IRS; all elements share this position.
    pub irs: Point,
    pub anchor1: Point,
    pub anchor2: Point,
    pub user_line_start: Point,
    pub user_line_end: Point,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            bs: [5.0, 0.0, 20.0],
            irs: [0.0, 50.0, 2.0],
            anchor1: [2.0, 49.0, 0.0],
            anchor2: [2.0, 51.0, 0.0],
            user_line_start: [3.0, 45.0, 0.0],
            user_line_end: [3.0, 55.0, 0.0],
        }
    }
}

/// Path-loss exponents per link class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossExponents {
    /// BS to A1, A2 and users.
    pub bs_ground: f64,
    /// BS to IRS.
    pub bs_irs: f64,
    /// Every remaining short-range link (IRS-anchor, IRS-user, anchor-anchor, A2-user).
    pub short_range: f64,
}

impl Default for PathLossExponents {
    fn default() -> Self {
        Self {
            bs_ground: 2.5,
            bs_irs: 2.2,
            short_range: 2.1,
        }
    }
}

/// Small-scale fading law applied on top of path loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Fading {
    #[default]
    Rayleigh,
    /// Unit-modulus random-phase specular part plus Rayleigh scatter,
    /// `k_factor` = specular/scatter power ratio (linear).
    Rician { k_factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UserPlacement {
    /// User `k` of `K` sits at fraction `(k + 1/2)/K` of the segment.
    #[default]
    Equispaced,
    /// Each user position is drawn uniformly on the segment per realization.
    UniformRandom,
}

/// Fixed reflection pattern used by Scheme 1 when `M ≥ N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "pattern", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Case1Reflection {
    /// `Φ = I`.
    #[default]
    Identity,
    /// Row `index` of the `N`-point DFT matrix.
    DftRow { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// M
    pub bs_antennas: usize,
    /// N
    pub irs_elements: usize,
    /// Optional `[rows, cols]` of the planar array; must multiply to
    /// `irs_elements`. Absent from a config file means no layout, so files
    /// that change `irs_elements` need not restate it.
    #[serde(default)]
    pub irs_upa: Option<[usize; 2]>,
    /// K
    pub users: usize,
    pub geometry: Geometry,
    /// Path loss at 1 m, in dB.
    pub pathloss_ref_db: f64,
    pub exponents: PathLossExponents,
    /// A1 pilot power.
    pub p1_dbm: f64,
    /// A2 pilot power during the anchor phase.
    pub p2_dbm: f64,
    /// Per-user pilot power.
    pub p_dbm: f64,
    /// A2 broadcast power in Scheme 2; defaults to `p_dbm`.
    pub a2_pilot_dbm: Option<f64>,
    pub noise_dbm: f64,
    pub tc_ms: f64,
    pub tu_ms: f64,
    /// Symbols per second.
    pub symbol_rate: f64,
    pub seed: u64,
    pub fading: Fading,
    pub user_placement: UserPlacement,
    pub case1_reflection: Case1Reflection,
    /// Relative guard for divisions by estimated channel entries.
    pub eps_div: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            bs_antennas: 128,
            irs_elements: 80,
            irs_upa: Some([8, 10]),
            users: 11,
            geometry: Geometry::default(),
            pathloss_ref_db: -30.0,
            exponents: PathLossExponents::default(),
            p1_dbm: 40.0,
            p2_dbm: 40.0,
            p_dbm: 30.0,
            a2_pilot_dbm: None,
            noise_dbm: -109.0,
            tc_ms: 500.0,
            tu_ms: 1.0,
            symbol_rate: 1e6,
            seed: 0,
            fading: Fading::Rayleigh,
            user_placement: UserPlacement::Equispaced,
            case1_reflection: Case1Reflection::Identity,
            eps_div: 1e-12,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.bs_antennas == 0 || self.irs_elements == 0 || self.users == 0 {
            return bad(format!(
                "M, N, K must be positive (got {}, {}, {})",
                self.bs_antennas, self.irs_elements, self.users
            ));
        }
        if let Some([rows, cols]) = self.irs_upa {
            if rows * cols != self.irs_elements {
                return bad(format!(
                    "IRS array {rows}x{cols} does not hold {} elements",
                    self.irs_elements
                ));
            }
        }
        let powers = [
            ("p1_dbm", self.p1_dbm),
            ("p2_dbm", self.p2_dbm),
            ("p_dbm", self.p_dbm),
            ("noise_dbm", self.noise_dbm),
            ("pathloss_ref_db", self.pathloss_ref_db),
            ("a2_pilot_dbm", self.a2_pilot_dbm.unwrap_or(0.0)),
        ];
        for (name, v) in powers {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.noise_watts() <= 0.0 {
            return bad("noise power underflows to zero".into());
        }
        let ex = &self.exponents;
        for (name, v) in [("bs_ground", ex.bs_ground), ("bs_irs", ex.bs_irs), ("short_range", ex.short_range)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("path-loss exponent {name} must be finite and non-negative"));
            }
        }
        if !(self.tc_ms > 0.0 && self.tu_ms > 0.0 && self.symbol_rate > 0.0) {
            return bad("coherence times and symbol rate must be positive".into());
        }
        if self.tu_ms > self.tc_ms {
            return bad("user coherence time exceeds anchor coherence time".into());
        }
        if !(self.eps_div >= 0.0 && self.eps_div < 1.0) {
            return bad("eps_div must lie in [0, 1)".into());
        }
        if let Fading::Rician { k_factor } = self.fading {
            if !(k_factor.is_finite() && k_factor >= 0.0) {
                return bad("Rician k_factor must be finite and non-negative".into());
            }
        }
        if let Case1Reflection::DftRow { index } = self.case1_reflection {
            if index >= self.irs_elements {
                return bad(format!("DFT row {index} out of range for N = {}", self.irs_elements));
            }
        }
        Ok(())
    }

    pub fn p1_watts(&self) -> f64 {
        dbm_to_watts(self.p1_dbm)
    }

    pub fn p2_watts(&self) -> f64 {
        dbm_to_watts(self.p2_dbm)
    }

    pub fn p_watts(&self) -> f64 {
        dbm_to_watts(self.p_dbm)
    }

    pub fn a2_pilot_watts(&self) -> f64 {
        dbm_to_watts(self.a2_pilot_dbm.unwrap_or(self.p_dbm))
    }

    pub fn noise_watts(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    /// Anchor coherence time in symbols (rounded to the nearest symbol).
    pub fn tc_symbols(&self) -> u64 {
        (self.tc_ms * 1e-3 * self.symbol_rate).round() as u64
    }

    pub fn tu_symbols(&self) -> u64 {
        (self.tu_ms * 1e-3 * self.symbol_rate).round() as u64
    }

    /// Fixed user positions under [`UserPlacement::Equispaced`].
    pub fn equispaced_users(&self) -> Vec<Point> {
        (0..self.users)
            .map(|k| {
                let t = (k as f64 + 0.5) / self.users as f64;
                lerp(self.geometry.user_line_start, self.geometry.user_line_end, t)
            })
            .collect()
    }
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Large-scale power gain `γ₀ · d^(−α)` with `γ₀` given in dB.
pub fn path_loss(distance_m: f64, alpha: f64, gamma0_db: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "distance must be positive and finite, got {distance_m}"
        )));
    }
    if !(alpha.is_finite() && gamma0_db.is_finite()) {
        return Err(Error::InvalidArgument("alpha and gamma0 must be finite".into()));
    }
    Ok(10f64.powf(gamma0_db / 10.0) * distance_m.powf(-alpha))
}

/// Ground-truth channels of one coherence window.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// BS-IRS, `M × N`.
    pub bs_irs: CMatrix,
    /// IRS-A1, length `N`.
    pub irs_a1: CVector,
    /// IRS-A2, length `N`.
    pub irs_a2: CVector,
    /// BS-A1, length `M`.
    pub bs_a1: CVector,
    /// BS-A2, length `M`.
    pub bs_a2: CVector,
    pub a1_a2: Complex64,
    /// IRS-user `k`, length `N` each.
    pub irs_users: Vec<CVector>,
    /// BS-user `k`, length `M` each.
    pub bs_users: Vec<CVector>,
    /// A2-user `k` direct link.
    pub a2_users: Vec<Complex64>,
    pub user_positions: Vec<Point>,
}

impl ChannelRealization {
    pub fn bs_antennas(&self) -> usize {
        self.bs_irs.nrows()
    }

    pub fn irs_elements(&self) -> usize {
        self.bs_irs.ncols()
    }

    pub fn users(&self) -> usize {
        self.irs_users.len()
    }

    /// `H_bs · diag(h_sa1)`
    pub fn bs_irs_a1(&self) -> CMatrix {
        scale_columns(&self.bs_irs, &self.irs_a1)
    }

    /// `H_bs · diag(h_sa2)`
    pub fn bs_irs_a2(&self) -> CMatrix {
        scale_columns(&self.bs_irs, &self.irs_a2)
    }

    /// `h_sa2ᵀ · diag(h_sa1)`, stored as a length-`N` vector.
    pub fn a1_irs_a2(&self) -> CVector {
        self.irs_a2.component_mul(&self.irs_a1)
    }

    /// `h_su_kᵀ · diag(h_sa2)`, stored as a length-`N` vector.
    pub fn a2_irs_user(&self, k: usize) -> CVector {
        self.irs_users[k].component_mul(&self.irs_a2)
    }

    /// `H_bs · diag(h_su_k)`
    pub fn bs_irs_user(&self, k: usize) -> CMatrix {
        scale_columns(&self.bs_irs, &self.irs_users[k])
    }

    pub fn bs_irs_users(&self) -> Vec<CMatrix> {
        (0..self.users()).map(|k| self.bs_irs_user(k)).collect()
    }

    /// Links seen by the BS when `sources` transmit.
    pub fn uplink_to_bs(&self, sources: &[Node]) -> UplinkChannel<'_> {
        let direct: Vec<CVector> = sources.iter().map(|s| self.bs_link(*s)).collect();
        let to_irs: Vec<CVector> = sources.iter().map(|s| self.irs_link(*s).clone()).collect();
        UplinkChannel {
            irs_to_rx: Cow::Borrowed(&self.bs_irs),
            direct: CMatrix::from_columns(&direct),
            source_to_irs: CMatrix::from_columns(&to_irs),
        }
    }

    /// A1 transmitting to A2.
    pub fn a1_to_a2(&self) -> UplinkChannel<'_> {
        UplinkChannel {
            irs_to_rx: Cow::Owned(CMatrix::from_row_slice(1, self.irs_elements(), self.irs_a2.as_slice())),
            direct: CMatrix::from_element(1, 1, self.a1_a2),
            source_to_irs: CMatrix::from_columns(&[self.irs_a1.clone()]),
        }
    }

    /// A2 broadcasting to all users; receiver `k` is user `k`.
    pub fn a2_to_users(&self) -> UplinkChannel<'_> {
        let k = self.users();
        let n = self.irs_elements();
        UplinkChannel {
            irs_to_rx: Cow::Owned(CMatrix::from_fn(k, n, |r, c| self.irs_users[r][c])),
            direct: CMatrix::from_fn(k, 1, |r, _| self.a2_users[r]),
            source_to_irs: CMatrix::from_columns(&[self.irs_a2.clone()]),
        }
    }

    fn bs_link(&self, node: Node) -> CVector {
        match node {
            Node::Anchor1 => self.bs_a1.clone(),
            Node::Anchor2 => self.bs_a2.clone(),
            Node::User(k) => self.bs_users[k].clone(),
        }
    }

    fn irs_link(&self, node: Node) -> &CVector {
        match node {
            Node::Anchor1 => &self.irs_a1,
            Node::Anchor2 => &self.irs_a2,
            Node::User(k) => &self.irs_users[k],
        }
    }
}

/// Single-antenna transmitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Anchor1,
    Anchor2,
    User(usize),
}

fn fading_entry<R: Rng + ?Sized>(rng: &mut R, fading: Fading, variance: f64) -> Complex64 {
    match fading {
        Fading::Rayleigh => cscg(rng, variance),
        Fading::Rician { k_factor } => {
            let los = (variance * k_factor / (k_factor + 1.0)).sqrt();
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            Complex64::from_polar(los, phase) + cscg(rng, variance / (k_factor + 1.0))
        }
    }
}

fn fading_vector<R: Rng + ?Sized>(rng: &mut R, fading: Fading, len: usize, variance: f64) -> CVector {
    CVector::from_fn(len, |_, _| fading_entry(rng, fading, variance))
}

/// Draws one realization.
///
/// Draw order is fixed: user positions (if random), then every
/// `M`-independent link, then the `M`-dependent ones. Channels that do not
/// depend on `M` are therefore identical across antenna sweeps for a given
/// seed.
pub fn draw_scenario<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<ChannelRealization> {
    config.validate()?;
    let (m, n, k) = (config.bs_antennas, config.irs_elements, config.users);
    let g = &config.geometry;
    let ex = &config.exponents;
    let g0 = config.pathloss_ref_db;
    let pl = |a: Point, b: Point, alpha: f64| path_loss(distance(a, b), alpha, g0);
    let fading = config.fading;

    let user_positions = match config.user_placement {
        UserPlacement::Equispaced => config.equispaced_users(),
        UserPlacement::UniformRandom => (0..k)
            .map(|_| lerp(g.user_line_start, g.user_line_end, rng.random::<f64>()))
            .collect(),
    };

    let irs_a1 = fading_vector(rng, fading, n, pl(g.irs, g.anchor1, ex.short_range)?);
    let irs_a2 = fading_vector(rng, fading, n, pl(g.irs, g.anchor2, ex.short_range)?);
    let a1_a2 = fading_entry(rng, fading, pl(g.anchor1, g.anchor2, ex.short_range)?);
    let mut irs_users = Vec::with_capacity(k);
    let mut a2_users = Vec::with_capacity(k);
    for &u in &user_positions {
        irs_users.push(fading_vector(rng, fading, n, pl(g.irs, u, ex.short_range)?));
        a2_users.push(fading_entry(rng, fading, pl(g.anchor2, u, ex.short_range)?));
    }

    let bs_irs_var = pl(g.bs, g.irs, ex.bs_irs)?;
    let bs_irs = match fading {
        Fading::Rayleigh => cscg_matrix(rng, m, n, bs_irs_var),
        _ => CMatrix::from_fn(m, n, |_, _| fading_entry(rng, fading, bs_irs_var)),
    };
    let bs_a1 = fading_vector(rng, fading, m, pl(g.bs, g.anchor1, ex.bs_ground)?);
    let bs_a2 = fading_vector(rng, fading, m, pl(g.bs, g.anchor2, ex.bs_ground)?);
    let bs_users = user_positions
        .iter()
        .map(|&u| Ok(fading_vector(rng, fading, m, pl(g.bs, u, ex.bs_ground)?)))
        .collect::<Result<Vec<_>>>()?;

    Ok(ChannelRealization {
        bs_irs,
        irs_a1,
        irs_a2,
        bs_a1,
        bs_a2,
        a1_a2,
        irs_users,
        bs_users,
        a2_users,
        user_positions,
    })
}

/// Ordered IRS reflection vectors, stored as the columns of an `N × T`
/// matrix. Every entry has modulus 1 (element on) or 0 (element off).
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionSchedule(CMatrix);

impl ReflectionSchedule {
    const MODULUS_TOL: f64 = 1e-12;

    pub fn new(columns: CMatrix) -> Result<Self> {
        for (idx, v) in columns.iter().enumerate() {
            let r = v.norm();
            if !(r < Self::MODULUS_TOL || (r - 1.0).abs() < Self::MODULUS_TOL) {
                return Err(Error::InvalidArgument(format!(
                    "reflection entry {idx} has modulus {r}, expected 0 or 1"
                )));
            }
        }
        Ok(Self(columns))
    }

    /// IRS switched off for `len` symbols.
    pub fn off(elements: usize, len: usize) -> Self {
        Self(CMatrix::from_element(elements, len, ZERO))
    }

    /// The same vector `v` repeated for `len` symbols.
    pub fn repeated(v: &CVector, len: usize) -> Result<Self> {
        Self::new(CMatrix::from_fn(v.len(), len, |r, _| v[r]))
    }

    pub fn elements(&self) -> usize {
        self.0.nrows()
    }

    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn vector(&self, i: usize) -> CVector {
        self.0.column(i).clone_owned()
    }
}

/// Links from `S` single-antenna sources to an `R`-dimensional receiver.
#[derive(Debug, Clone)]
pub struct UplinkChannel<'a> {
    /// IRS to receiver, `R × N`.
    pub irs_to_rx: Cow<'a, CMatrix>,
    /// Direct source-receiver links as columns, `R × S`.
    pub direct: CMatrix,
    /// Source-IRS links as columns, `N × S`.
    pub source_to_irs: CMatrix,
}

impl UplinkChannel<'_> {
    pub fn receivers(&self) -> usize {
        self.irs_to_rx.nrows()
    }

    pub fn sources(&self) -> usize {
        self.direct.ncols()
    }

    /// Noiseless received block, `R × T`, before the `√p` power scaling.
    pub fn noiseless(&self, transmit: &CMatrix, schedule: &ReflectionSchedule) -> Result<CMatrix> {
        let (r, n, s) = (self.receivers(), self.irs_to_rx.ncols(), self.sources());
        if self.direct.nrows() != r || self.source_to_irs.shape() != (n, s) {
            return Err(Error::Dimension("inconsistent uplink channel shapes".into()));
        }
        if transmit.nrows() != s {
            return Err(Error::Dimension(format!(
                "transmit matrix has {} rows for {s} sources",
                transmit.nrows()
            )));
        }
        if schedule.len() != transmit.ncols() || schedule.elements() != n {
            return Err(Error::Dimension(format!(
                "schedule is {}x{}, expected {n}x{}",
                schedule.elements(),
                schedule.len(),
                transmit.ncols()
            )));
        }
        // Σ_s x_s,i · diag(v_i) g_s = v_i ⊙ (G x_i)
        let through_irs = (&self.source_to_irs * transmit).component_mul(schedule.as_matrix());
        Ok(&self.direct * transmit + self.irs_to_rx.as_ref() * through_irs)
    }
}

/// Received training block: `√power · (direct + reflected) + noise`.
///
/// `transmit` is `sources × T`; the output is `receivers × T`. A zero
/// `noise_variance` yields the noiseless signal and draws nothing from `rng`.
pub fn receive_uplink<R: Rng + ?Sized>(
    channel: &UplinkChannel<'_>,
    transmit: &CMatrix,
    schedule: &ReflectionSchedule,
    power: f64,
    noise_variance: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    if !(power >= 0.0 && power.is_finite()) || !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "power {power} and noise variance {noise_variance} must be finite and non-negative"
        )));
    }
    let mut y = channel.noiseless(transmit, schedule)? * Complex64::new(power.sqrt(), 0.0);
    if noise_variance > 0.0 {
        y.iter_mut().for_each(|e| *e += cscg(rng, noise_variance));
    }
    Ok(y)
}
