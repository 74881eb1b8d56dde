//! Layered tissue force model for the lumbar epidural region.
//!
//! Each tissue is a nonlinear spring: a cubic in the needle's local
//! penetration depth, with separate before-puncture (BP) and after-puncture
//! (AP) regimes. Depth bands are cumulative from the skin surface and scale
//! with patient body mass; the polynomial coefficients never change.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Average female waist area, cm².
pub const AVG_WAIST_AREA_CM2: f64 = 574.94;
/// Average female waist radius, cm.
pub const AVG_WAIST_RADIUS_CM: f64 = 13.53;
/// Average body mass the default table is fitted for, kg.
pub const AVG_BODY_MASS_KG: f64 = 71.0;

pub const MIN_BODY_MASS_KG: f64 = 30.0;
pub const MAX_BODY_MASS_KG: f64 = 200.0;

/// Multiplier from Touhy-needle force to LOR-syringe force.
pub const LOR_FORCE_SCALE: f64 = 2.0;

/// Default force table (Touhy needle, average body mass).
///
/// Columns: tissue, stage, a0 [N], a1 [N/mm], a2 [N/mm²], a3 [N/mm³],
/// band start [mm], band end [mm].
pub const DEFAULT_FORCE_TABLE: &str = "\
# tissue                stage  a0      a1       a2       a3      start  end
Skin                    BP     0.0075  0.0037   -0.0015  0.0008  0      13.92
Fat                     AP     1.9212  0.1437   -0.1682  0       13.92  17.15
SupraspinousLigament    BP     0.628   0.2637   0.0343   0       17.15  19.37
SupraspinousLigament    AP     1.3855  -0.7174  0.0923   0       19.37  20
InterspinousLigament    BP     1.4021  0.3054   0        0       20     23.18
InterspinousLigament    AP     2.3761  0        0        0       23.18  41.18
LigamentumFlavum        BP     2.3761  0.4783   -0.0186  0       41.18  44.79
LigamentumFlavum        AP     3.861   -0.0539  -0.0375  0       44.79  48.38
EpiduralSpace           None   0       0        0        0       48.38  56.98
";

/// Anatomical layer along the insertion axis.
///
/// `DuraMater` is never part of a model's region stack; it names whatever
/// lies past the epidural space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tissue {
    Skin,
    Fat,
    SupraspinousLigament,
    InterspinousLigament,
    LigamentumFlavum,
    EpiduralSpace,
    DuraMater,
}

impl Tissue {
    /// Layers that make up a model's region stack, shallow to deep.
    pub const LAYERS: [Tissue; 6] = [
        Tissue::Skin,
        Tissue::Fat,
        Tissue::SupraspinousLigament,
        Tissue::InterspinousLigament,
        Tissue::LigamentumFlavum,
        Tissue::EpiduralSpace,
    ];

    pub const ALL: [Tissue; 7] = [
        Tissue::Skin,
        Tissue::Fat,
        Tissue::SupraspinousLigament,
        Tissue::InterspinousLigament,
        Tissue::LigamentumFlavum,
        Tissue::EpiduralSpace,
        Tissue::DuraMater,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tissue::Skin => "Skin",
            Tissue::Fat => "Fat",
            Tissue::SupraspinousLigament => "SupraspinousLigament",
            Tissue::InterspinousLigament => "InterspinousLigament",
            Tissue::LigamentumFlavum => "LigamentumFlavum",
            Tissue::EpiduralSpace => "EpiduralSpace",
            Tissue::DuraMater => "DuraMater",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Tissue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tissue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tissue::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Table(format!("unknown tissue `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Before puncture: elastic deformation of an intact layer.
    BP,
    /// After puncture: cutting plus shaft friction.
    AP,
    /// Single-regime space (the epidural space).
    None,
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BP" => Ok(Stage::BP),
            "AP" => Ok(Stage::AP),
            "NONE" | "-" | "--" => Ok(Stage::None),
            _ => Err(Error::Table(format!("unknown stage `{s}`"))),
        }
    }
}

/// Half-open depth interval `[start, end)` in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBand {
    pub start: f64,
    pub end: f64,
}

impl DepthBand {
    pub fn contains(&self, depth: f64) -> bool {
        depth >= self.start && depth < self.end
    }

    pub fn width(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceRegion {
    pub tissue: Tissue,
    pub stage: Stage,
    /// Cubic coefficients `[a0, a1, a2, a3]` in N, N/mm, N/mm², N/mm³.
    pub coeffs: [f64; 4],
    pub band: DepthBand,
}

impl ForceRegion {
    /// Raw cubic at local depth `u` (mm), unclamped.
    pub fn polynomial(&self, u: f64) -> f64 {
        let [a0, a1, a2, a3] = self.coeffs;
        a0 + u * (a1 + u * (a2 + u * a3))
    }

    /// Supremum of the clamped force over the band, for a model with the
    /// given thickness ratio. Found from the endpoints and the interior
    /// critical points of the cubic.
    pub fn peak_force(&self, thickness_ratio: f64) -> f64 {
        let u_max = self.band.width() / thickness_ratio;
        let [_, a1, a2, a3] = self.coeffs;
        let mut candidates = vec![0.0, u_max];
        // derivative: a1 + 2 a2 u + 3 a3 u²
        if a3 != 0.0 {
            let (a, b, c) = (3.0 * a3, 2.0 * a2, a1);
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                candidates.push((-b + sq) / (2.0 * a));
                candidates.push((-b - sq) / (2.0 * a));
            }
        } else if a2 != 0.0 {
            candidates.push(-a1 / (2.0 * a2));
        }
        candidates
            .into_iter()
            .filter(|u| (0.0..=u_max).contains(u))
            .map(|u| self.polynomial(u).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Parses a force table in the whitespace-separated layout of
/// [`DEFAULT_FORCE_TABLE`]. `#` starts a comment.
pub fn parse_force_table(text: &str) -> Result<Vec<ForceRegion>> {
    let mut regions = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 8 {
            return Err(Error::Table(format!(
                "line {}: expected 8 columns, found {}",
                lineno + 1,
                cols.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            cols[i].parse::<f64>().map_err(|_| {
                Error::Table(format!("line {}: bad number `{}`", lineno + 1, cols[i]))
            })
        };
        regions.push(ForceRegion {
            tissue: cols[0].parse()?,
            stage: cols[1].parse()?,
            coeffs: [num(2)?, num(3)?, num(4)?, num(5)?],
            band: DepthBand { start: num(6)?, end: num(7)? },
        });
    }
    validate_table(&regions)?;
    Ok(regions)
}

fn validate_table(regions: &[ForceRegion]) -> Result<()> {
    let first = regions.first().ok_or_else(|| Error::Table("empty table".into()))?;
    if first.band.start != 0.0 {
        return Err(Error::Table("first band must start at 0".into()));
    }
    for r in regions {
        if r.band.start.partial_cmp(&r.band.end) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Table(format!("{} band start must be below end", r.tissue)));
        }
        if r.tissue == Tissue::DuraMater {
            return Err(Error::Table("DuraMater cannot be a table region".into()));
        }
    }
    for w in regions.windows(2) {
        if w[0].band.end != w[1].band.start {
            return Err(Error::Table(format!(
                "bands must tile: {} ends at {} but {} starts at {}",
                w[0].tissue, w[0].band.end, w[1].tissue, w[1].band.start
            )));
        }
    }
    let epi: Vec<_> = regions.iter().filter(|r| r.tissue == Tissue::EpiduralSpace).collect();
    match epi.as_slice() {
        [r] if r.coeffs == [0.0; 4] && std::ptr::eq(*r, regions.last().unwrap()) => Ok(()),
        [_] => Err(Error::Table(
            "epidural space must be the deepest region with zero force".into(),
        )),
        _ => Err(Error::Table("exactly one EpiduralSpace region required".into())),
    }
}

/// Layer thickness scale for a given body mass, relative to the table.
pub fn thickness_ratio(body_mass: f64) -> f64 {
    let radius = (AVG_WAIST_AREA_CM2 * (body_mass / AVG_BODY_MASS_KG) / std::f64::consts::PI).sqrt();
    (radius / AVG_WAIST_RADIUS_CM).powi(3)
}

/// Per-tissue puncture flags. Once set, a flag stays set for the trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PunctureState {
    flags: [bool; 7],
}

impl PunctureState {
    pub fn is_punctured(&self, tissue: Tissue) -> bool {
        self.flags[tissue.index()]
    }

    pub fn set_punctured(&mut self, tissue: Tissue) {
        self.flags[tissue.index()] = true;
    }

    pub fn punctured(&self) -> Vec<Tissue> {
        Tissue::ALL.iter().copied().filter(|t| self.is_punctured(*t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    FailedEpidural,
    Success,
    DuralPuncture,
}

impl OutcomeKind {
    pub fn label(self) -> &'static str {
        match self {
            OutcomeKind::FailedEpidural => "FailedEpidural",
            OutcomeKind::Success => "Success",
            OutcomeKind::DuralPuncture => "DuralPuncture",
        }
    }
}

impl FromStr for OutcomeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FailedEpidural" => Ok(OutcomeKind::FailedEpidural),
            "Success" => Ok(OutcomeKind::Success),
            "DuralPuncture" => Ok(OutcomeKind::DuralPuncture),
            _ => Err(Error::Format(format!("unknown outcome `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    /// Distance to the epidural window in mm: 0 inside, negative short of
    /// it, positive past it.
    pub signed_error: f64,
}

/// Mass-scaled region stack for one patient. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientModel {
    pub body_mass: f64,
    pub thickness_ratio: f64,
    pub regions: Vec<ForceRegion>,
    pub epidural_window: DepthBand,
}

/// Builds the default patient model for `body_mass` kg.
pub fn build_patient_model(body_mass: f64) -> Result<PatientModel> {
    PatientModel::new(body_mass)
}

impl PatientModel {
    pub fn new(body_mass: f64) -> Result<Self> {
        let table = parse_force_table(DEFAULT_FORCE_TABLE).expect("default table is valid");
        Self::from_table(&table, body_mass)
    }

    /// Scales a validated table's bands to `body_mass`.
    pub fn from_table(table: &[ForceRegion], body_mass: f64) -> Result<Self> {
        if !(MIN_BODY_MASS_KG..=MAX_BODY_MASS_KG).contains(&body_mass) {
            return Err(Error::MassOutOfRange {
                mass: body_mass,
                min: MIN_BODY_MASS_KG,
                max: MAX_BODY_MASS_KG,
            });
        }
        validate_table(table)?;
        let ratio = thickness_ratio(body_mass);
        let regions: Vec<ForceRegion> = table
            .iter()
            .map(|r| ForceRegion {
                band: DepthBand { start: r.band.start * ratio, end: r.band.end * ratio },
                ..r.clone()
            })
            .collect();
        let epidural_window = regions
            .iter()
            .find(|r| r.tissue == Tissue::EpiduralSpace)
            .map(|r| r.band)
            .expect("validated table has an epidural region");
        Ok(PatientModel { body_mass, thickness_ratio: ratio, regions, epidural_window })
    }

    /// Depth of the dura boundary (end of the deepest region).
    pub fn total_depth(&self) -> f64 {
        self.regions.last().map(|r| r.band.end).unwrap_or(0.0)
    }

    fn region_index(&self, depth: f64) -> Result<usize> {
        if !depth.is_finite() || depth < 0.0 {
            return Err(Error::InvalidDepth(depth));
        }
        // bands tile [0, total) in order
        let idx = self.regions.partition_point(|r| r.band.end <= depth);
        if idx >= self.regions.len() {
            return Err(Error::DepthOutOfModel { depth, total: self.total_depth() });
        }
        Ok(idx)
    }

    pub fn layer_at(&self, depth: f64) -> Result<&ForceRegion> {
        self.region_index(depth).map(|i| &self.regions[i])
    }

    /// Layer containing `depth`, with everything past the model reported as
    /// dura. `None` outside the body (negative depth).
    pub fn tissue_at(&self, depth: f64) -> Option<Tissue> {
        match self.layer_at(depth) {
            Ok(r) => Some(r.tissue),
            Err(Error::DepthOutOfModel { .. }) => Some(Tissue::DuraMater),
            Err(_) => None,
        }
    }

    pub fn region(&self, tissue: Tissue, stage: Stage) -> Option<&ForceRegion> {
        self.regions.iter().find(|r| r.tissue == tissue && r.stage == stage)
    }

    /// Band covered by a tissue across all of its stages.
    pub fn tissue_band(&self, tissue: Tissue) -> Option<DepthBand> {
        let mut it = self.regions.iter().filter(|r| r.tissue == tissue);
        let first = it.next()?;
        let end = it.next_back().map_or(first.band.end, |r| r.band.end);
        Some(DepthBand { start: first.band.start, end })
    }

    /// Mass-scaled thickness of a tissue in mm; `None` for the dura.
    pub fn tissue_thickness(&self, tissue: Tissue) -> Option<f64> {
        self.tissue_band(tissue).map(|b| b.width())
    }

    /// Marks every tissue whose BP band lies entirely above `depth`.
    pub fn observe_depth(&self, state: &mut PunctureState, depth: f64) {
        for r in self.regions.iter().filter(|r| r.stage == Stage::BP) {
            if depth >= r.band.end {
                state.set_punctured(r.tissue);
            }
        }
    }

    /// Force past the epidural space: a constant wall equal to the last
    /// non-empty region's force at its deep end.
    pub fn dura_wall_force(&self) -> f64 {
        self.regions
            .iter()
            .rev()
            .find(|r| r.coeffs != [0.0; 4])
            .map(|r| r.polynomial(r.band.width() / self.thickness_ratio).max(0.0))
            .unwrap_or(0.0)
    }

    /// Resistive force on the Touhy needle at `depth`, in N.
    ///
    /// Within a tissue that is already punctured, the AP regime applies over
    /// the whole tissue; on the BP part of its band the local depth is taken
    /// as zero, giving the AP entry force.
    pub fn touhy_force(&self, depth: f64, state: &PunctureState) -> Result<f64> {
        let idx = match self.region_index(depth) {
            Ok(i) => i,
            Err(Error::DepthOutOfModel { .. }) => return Ok(self.dura_wall_force()),
            Err(e) => return Err(e),
        };
        let here = &self.regions[idx];
        let region = match here.stage {
            Stage::BP if state.is_punctured(here.tissue) => {
                self.region(here.tissue, Stage::AP).unwrap_or(here)
            }
            _ => here,
        };
        let u = ((depth - region.band.start) / self.thickness_ratio).max(0.0);
        Ok(region.polynomial(u).max(0.0))
    }

    /// Force on the LOR syringe: twice the Touhy force.
    pub fn lor_force(&self, depth: f64, state: &PunctureState) -> Result<f64> {
        self.touhy_force(depth, state).map(|f| LOR_FORCE_SCALE * f)
    }

    /// Needle force outside the body is zero; inside it follows the model.
    pub fn render_forces(&self, depth: f64, state: &PunctureState) -> (f64, f64) {
        // NaN lands here too
        if depth.is_nan() || depth < 0.0 {
            return (0.0, 0.0);
        }
        let f = self.touhy_force(depth, state).unwrap_or(0.0);
        (f, LOR_FORCE_SCALE * f)
    }

    pub fn classify_outcome(&self, final_depth: f64) -> Outcome {
        let w = self.epidural_window;
        if final_depth < w.start {
            Outcome { kind: OutcomeKind::FailedEpidural, signed_error: final_depth - w.start }
        } else if final_depth < w.end {
            Outcome { kind: OutcomeKind::Success, signed_error: 0.0 }
        } else {
            Outcome { kind: OutcomeKind::DuralPuncture, signed_error: final_depth - w.end }
        }
    }
}
