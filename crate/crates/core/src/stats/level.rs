//! Participant experience levels and questionnaire responses.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Position {
    Resident,
    Attending,
    Unspecified,
}

impl FromStr for Position {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "resident" => Ok(Position::Resident),
            "attending" => Ok(Position::Attending),
            "" | "unspecified" => Ok(Position::Unspecified),
            other => Err(Error::Format(format!("unknown position `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub id: String,
    pub years_experience: Option<f64>,
    pub n_epidurals_estimate: Option<u32>,
    pub position: Position,
    /// Visual analog scale answers, 0 to 100 mm, keyed by question.
    pub vas_responses: BTreeMap<String, f64>,
}

impl ParticipantProfile {
    pub fn new(id: impl Into<String>, years: f64, epidurals: u32, position: Position) -> Self {
        ParticipantProfile {
            id: id.into(),
            years_experience: Some(years),
            n_epidurals_estimate: Some(epidurals),
            position,
            vas_responses: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.years_experience.is_some_and(|y| !(y >= 0.0 && y.is_finite())) {
            return Err(Error::Validation(format!("{}: years of experience must be ≥ 0", self.id)));
        }
        for (q, v) in &self.vas_responses {
            if !(0.0..=100.0).contains(v) {
                return Err(Error::Validation(format!("{}: VAS `{q}` = {v} outside 0 to 100", self.id)));
            }
        }
        Ok(())
    }
}

fn years_level(years: f64) -> u8 {
    if years <= 1.0 {
        1
    } else if years <= 3.0 {
        2
    } else {
        3
    }
}

fn epidurals_level(n: u32) -> u8 {
    if n <= 50 {
        1
    } else if n <= 300 {
        2
    } else {
        3
    }
}

fn position_level(p: Position) -> Option<u8> {
    match p {
        Position::Resident => Some(1),
        Position::Attending => Some(3),
        Position::Unspecified => None,
    }
}

/// Overall level 1 to 3: the mean of the per-category levels that can be
/// resolved, rounded half up.
pub fn assign_level(profile: &ParticipantProfile) -> Result<u8> {
    profile.validate()?;
    let levels: Vec<u8> = [
        profile.years_experience.map(years_level),
        profile.n_epidurals_estimate.map(epidurals_level),
        position_level(profile.position),
    ]
    .into_iter()
    .flatten()
    .collect();
    if levels.is_empty() {
        return Err(Error::Validation(format!("{}: no level category available", profile.id)));
    }
    let mean = levels.iter().map(|&l| l as f64).sum::<f64>() / levels.len() as f64;
    Ok((mean + 0.5).floor() as u8)
}

const PROFILE_COLUMNS: [&str; 4] = ["id", "years_experience", "n_epidurals", "position"];
pub const VAS_PREFIX: &str = "vas_";

/// Reads participant profiles. Required header: `id,years_experience,
/// n_epidurals,position`; any further `vas_<question>` columns hold VAS
/// scores. Empty cells mean "not answered".
pub fn read_profiles_csv(r: impl Read) -> Result<Vec<ParticipantProfile>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 4 || header[..4] != PROFILE_COLUMNS {
        return Err(Error::Format(format!(
            "profiles CSV must start with columns {}",
            PROFILE_COLUMNS.join(",")
        )));
    }
    let mut questions = Vec::new();
    for h in &header[4..] {
        let q = h
            .strip_prefix(VAS_PREFIX)
            .ok_or_else(|| Error::Format(format!("unexpected profiles column `{h}`")))?;
        questions.push(q.to_string());
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let cell = |i: usize| rec.get(i).unwrap_or("").trim();
        let parse_f = |i: usize| -> Result<Option<f64>> {
            let c = cell(i);
            if c.is_empty() {
                return Ok(None);
            }
            c.parse().map(Some).map_err(|_| Error::Format(format!("bad number `{c}`")))
        };
        let epidurals = match cell(2) {
            "" => None,
            c => Some(c.parse().map_err(|_| Error::Format(format!("bad count `{c}`")))?),
        };
        let mut vas = BTreeMap::new();
        for (j, q) in questions.iter().enumerate() {
            if let Some(v) = parse_f(4 + j)? {
                vas.insert(q.clone(), v);
            }
        }
        let p = ParticipantProfile {
            id: cell(0).to_string(),
            years_experience: parse_f(1)?,
            n_epidurals_estimate: epidurals,
            position: cell(3).parse()?,
            vas_responses: vas,
        };
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_profiles_csv(profiles: &[ParticipantProfile], w: impl Write) -> Result<()> {
    let mut questions: Vec<&String> =
        profiles.iter().flat_map(|p| p.vas_responses.keys()).collect();
    questions.sort();
    questions.dedup();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = PROFILE_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(questions.iter().map(|q| format!("{VAS_PREFIX}{q}")));
    out.write_record(&header)?;
    for p in profiles {
        let mut row = vec![
            p.id.clone(),
            p.years_experience.map(|y| y.to_string()).unwrap_or_default(),
            p.n_epidurals_estimate.map(|n| n.to_string()).unwrap_or_default(),
            match p.position {
                Position::Unspecified => String::new(),
                other => format!("{other:?}"),
            },
        ];
        row.extend(
            questions.iter().map(|q| p.vas_responses.get(*q).map(|v| v.to_string()).unwrap_or_default()),
        );
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(years: f64, n: u32, pos: Position) -> ParticipantProfile {
        ParticipantProfile::new("p", years, n, pos)
    }

    #[test]
    fn bins_edges() {
        assert_eq!(years_level(0.0), 1);
        assert_eq!(years_level(1.0), 1);
        assert_eq!(years_level(1.01), 2);
        assert_eq!(years_level(3.0), 2);
        assert_eq!(years_level(3.5), 3);
        assert_eq!(epidurals_level(50), 1);
        assert_eq!(epidurals_level(51), 2);
        assert_eq!(epidurals_level(300), 2);
        assert_eq!(epidurals_level(301), 3);
    }

    #[test]
    fn half_rounds_up() {
        assert_eq!(assign_level(&profile(2.0, 400, Position::Unspecified)).unwrap(), 3);
        assert_eq!(assign_level(&profile(0.5, 100, Position::Unspecified)).unwrap(), 2);
    }

    #[test]
    fn nothing_to_go_on() {
        let p = ParticipantProfile {
            id: "x".into(),
            years_experience: None,
            n_epidurals_estimate: None,
            position: Position::Unspecified,
            vas_responses: BTreeMap::new(),
        };
        assert!(matches!(assign_level(&p), Err(Error::Validation(_))));
        let only_pos = ParticipantProfile { position: Position::Attending, ..p };
        assert_eq!(assign_level(&only_pos).unwrap(), 3);
    }

    #[test]
    fn csv_round_trip() {
        let mut a = profile(4.0, 700, Position::Attending);
        a.id = "a".into();
        a.vas_responses.insert("skin".into(), 62.5);
        let mut b = profile(0.5, 10, Position::Resident);
        b.id = "b".into();
        let mut buf = Vec::new();
        write_profiles_csv(&[a.clone(), b.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,years_experience,n_epidurals,position,vas_skin\n"));
        assert_eq!(read_profiles_csv(buf.as_slice()).unwrap(), vec![a, b]);
    }

    #[test]
    fn csv_rejects_out_of_range_vas() {
        let text = "id,years_experience,n_epidurals,position,vas_q\nx,1,10,Resident,120\n";
        assert!(read_profiles_csv(text.as_bytes()).is_err());
        let bad_header = "name,years\nx,1\n";
        assert!(read_profiles_csv(bad_header.as_bytes()).is_err());
    }
}
