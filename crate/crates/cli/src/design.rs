use std::io::Write;
use std::path::PathBuf;

use anchor_est::pilot_design::{identity_reflection, user_groups};
use anchor_est::{CMatrix, TrainingDesign, TrainingStep};
use clap::{Args, ValueEnum};

use crate::failure::Failure;
use crate::sink;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Step {
    /// A1 pilots with the extended-DFT reflection schedule.
    AnchorA1,
    /// A2 pilots, same schedule as A1.
    AnchorA2,
    /// A2 broadcast to the users.
    Broadcast,
    /// Orthogonal user pilots with the IRS off.
    Direct,
    /// One user per symbol (M >= N).
    Slots,
    /// Joint user groups (M < N).
    Groups,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long, value_enum)]
    step: Step,
    /// IRS elements.
    #[arg(long = "n")]
    irs_elements: usize,
    /// Users (direct, slots, groups).
    #[arg(long = "k", default_value_t = 1)]
    users: usize,
    /// BS antennas (groups).
    #[arg(long = "m", default_value_t = 1)]
    bs_antennas: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub const DESIGN_CSV_HEADER: [&str; 6] = ["design", "matrix", "row", "col", "re", "im"];

fn designs(a: &DesignArgs) -> anchor_est::Result<Vec<(String, TrainingDesign)>> {
    let n = a.irs_elements;
    let one = |name: &str, d: TrainingDesign| Ok(vec![(name.to_string(), d)]);
    match a.step {
        Step::AnchorA1 => one("anchor-a1", TrainingDesign::anchor(n, TrainingStep::AnchorA1)?),
        Step::AnchorA2 => one("anchor-a2", TrainingDesign::anchor(n, TrainingStep::AnchorA2)?),
        Step::Broadcast => one("broadcast", TrainingDesign::anchor(n, TrainingStep::A2Broadcast)?),
        Step::Direct => one("direct", TrainingDesign::direct(a.users, n)?),
        Step::Slots => one("slots", TrainingDesign::single_user_slots(a.users, &identity_reflection(n))?),
        Step::Groups => Ok(user_groups(a.users, a.bs_antennas, n)?
            .into_iter()
            .enumerate()
            .map(|(i, d)| (format!("group-{i}"), d))
            .collect()),
    }
}

/// Long-format CSV: one row per matrix entry of every design.
pub fn run(a: DesignArgs) -> Result<(), Failure> {
    let designs = designs(&a)?;
    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    let io = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(DESIGN_CSV_HEADER).map_err(io)?;
    for (name, d) in &designs {
        for (label, m) in [("pilots", &d.pilots), ("reflection", d.reflection.as_matrix())] {
            write_matrix(&mut w, name, label, m).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Failure::Io(e.to_string()))
}

fn write_matrix<W: Write>(w: &mut csv::Writer<W>, name: &str, label: &str, m: &CMatrix) -> csv::Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            w.write_record([
                name.to_string(),
                label.to_string(),
                r.to_string(),
                c.to_string(),
                format!("{:?}", z.re),
                format!("{:?}", z.im),
            ])?;
        }
    }
    Ok(())
}
