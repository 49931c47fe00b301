//! Paired low-/high-fidelity TKE samples grouped into wall-normal profiles.

mod io;
mod split;
mod standardize;
mod synth;
mod window;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_dataset, read_records, sidecar_path, write_dataset, write_records, DATASET_HEADER};
pub use split::{split_profiles, split_ids, Partition, SplitAssignment, DEFAULT_SPLIT};
pub use standardize::{Standardization, StreamStats, STD_FLOOR};
pub use synth::{boundary_layer_k, synthesize, DiscrepancyLaw, SynthConfig, SYNTHETIC_CASE};
pub use window::{make_windows, Window, DEFAULT_WINDOW_WIDTH};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: negative turbulent kinetic energy {value}")]
    NegativeTke { line: u64, value: f64 },
    #[error("profile {profile} has repeated wall-normal coordinate y = {y}")]
    NonMonotoneProfile { profile: String, y: f64 },
    #[error("profile {profile} has {points} points, at least 3 are required")]
    ShortProfile { profile: String, points: usize },
    #[error("no freestream velocity for case '{case}'")]
    MissingFreestream { case: String },
    #[error("freestream velocity must be positive, got {value}")]
    NonPositiveFreestream { value: f64 },
    #[error("need at least 3 profiles to split, got {count}")]
    TooFewProfiles { count: usize },
    #[error("invalid split fractions {0:?}")]
    InvalidFractions([f64; 3]),
    #[error("{stream} stream has no spread (std below {STD_FLOOR:e})")]
    DegenerateSpread { stream: &'static str },
    #[error("window width must be odd and positive, got {0}")]
    InvalidWindow(usize),
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("freestream sidecar: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One co-located pair of low- and high-fidelity TKE values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    #[serde(rename = "case")]
    pub case_id: String,
    pub station: f64,
    pub x: f64,
    pub y: f64,
    pub k_rans: f64,
    pub k_dns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub x: f64,
    pub y: f64,
    pub k_rans: f64,
    pub k_dns: f64,
}

/// Points of one station sorted by strictly increasing `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub case_id: String,
    pub station: f64,
    pub points: Vec<ProfilePoint>,
}

impl Profile {
    pub fn id(&self) -> String {
        profile_id(&self.case_id, self.station)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn y(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    /// `(k⁺_rans, k⁺_dns)` normalized by the freestream velocity.
    pub fn k_plus(&self, u_inf: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let rans = self.points.iter().map(|p| normalize_k(p.k_rans, u_inf)).collect::<Result<_>>()?;
        let dns = self.points.iter().map(|p| normalize_k(p.k_dns, u_inf)).collect::<Result<_>>()?;
        Ok((rans, dns))
    }
}

pub fn profile_id(case_id: &str, station: f64) -> String {
    format!("{case_id}@{station}")
}

/// Profiles ordered by `(case, station)` with per-case freestream velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub profiles: Vec<Profile>,
    pub u_inf: BTreeMap<String, f64>,
}

impl ProfileSet {
    /// Groups, sorts and validates records. `lines` carries the source line
    /// of each record for diagnostics.
    pub fn from_records(mut records: Vec<(u64, SampleRecord)>, u_inf: BTreeMap<String, f64>) -> Result<Self> {
        for (line, r) in &records {
            for value in [r.k_rans, r.k_dns] {
                if value < 0.0 {
                    return Err(DataError::NegativeTke { line: *line, value });
                }
            }
            let finite = [r.station, r.x, r.y, r.k_rans, r.k_dns].iter().all(|v| v.is_finite());
            if !finite {
                return Err(DataError::Parse {
                    line: *line,
                    message: "non-finite value".into(),
                });
            }
        }
        records.sort_by(|(_, a), (_, b)| {
            a.case_id
                .cmp(&b.case_id)
                .then(a.station.total_cmp(&b.station))
                .then(a.y.total_cmp(&b.y))
        });

        let mut profiles: Vec<Profile> = Vec::new();
        for (_, r) in records {
            let point = ProfilePoint {
                x: r.x,
                y: r.y,
                k_rans: r.k_rans,
                k_dns: r.k_dns,
            };
            match profiles.last_mut() {
                Some(p) if p.case_id == r.case_id && p.station == r.station => p.points.push(point),
                _ => profiles.push(Profile {
                    case_id: r.case_id,
                    station: r.station,
                    points: vec![point],
                }),
            }
        }

        for p in &profiles {
            if p.points.len() < 3 {
                return Err(DataError::ShortProfile {
                    profile: p.id(),
                    points: p.points.len(),
                });
            }
            if let Some(w) = p.points.windows(2).find(|w| w[1].y <= w[0].y) {
                return Err(DataError::NonMonotoneProfile {
                    profile: p.id(),
                    y: w[1].y,
                });
            }
            match u_inf.get(&p.case_id) {
                None => return Err(DataError::MissingFreestream { case: p.case_id.clone() }),
                Some(&u) if !(u > 0.0 && u.is_finite()) => return Err(DataError::NonPositiveFreestream { value: u }),
                Some(_) => {}
            }
        }
        Ok(Self { profiles, u_inf })
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn record_count(&self) -> usize {
        self.profiles.iter().map(Profile::len).sum()
    }

    pub fn u_inf_for(&self, case_id: &str) -> Result<f64> {
        self.u_inf
            .get(case_id)
            .copied()
            .ok_or_else(|| DataError::MissingFreestream { case: case_id.into() })
    }

    pub fn records(&self) -> impl Iterator<Item = SampleRecord> + '_ {
        self.profiles.iter().flat_map(|p| {
            p.points.iter().map(move |pt| SampleRecord {
                case_id: p.case_id.clone(),
                station: p.station,
                x: pt.x,
                y: pt.y,
                k_rans: pt.k_rans,
                k_dns: pt.k_dns,
            })
        })
    }

    pub fn profile(&self, id: &str) -> Option<&Profile> {
        self.profiles.iter().find(|p| p.id() == id)
    }
}

/// `k⁺ = k / U∞²`.
pub fn normalize_k(k: f64, u_inf: f64) -> Result<f64> {
    if !(u_inf > 0.0) {
        return Err(DataError::NonPositiveFreestream { value: u_inf });
    }
    Ok(k / (u_inf * u_inf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(case: &str, station: f64, y: f64, kr: f64, kd: f64) -> (u64, SampleRecord) {
        (
            0,
            SampleRecord {
                case_id: case.into(),
                station,
                x: station,
                y,
                k_rans: kr,
                k_dns: kd,
            },
        )
    }

    fn uinf(case: &str) -> BTreeMap<String, f64> {
        BTreeMap::from([(case.to_string(), 1.0)])
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_k(0.5, 2.0).unwrap(), 0.125);
        assert_eq!(normalize_k(0.0, 3.0).unwrap(), 0.0);
        assert!(matches!(normalize_k(1.0, 0.0), Err(DataError::NonPositiveFreestream { .. })));
        assert!(matches!(normalize_k(1.0, -2.0), Err(DataError::NonPositiveFreestream { .. })));
    }

    #[test]
    fn groups_and_sorts_profiles() {
        let records = vec![
            rec("b", 1.0, 0.3, 1.0, 1.0),
            rec("a", 2.0, 0.2, 1.0, 1.0),
            rec("b", 1.0, 0.1, 1.0, 1.0),
            rec("a", 2.0, 0.1, 1.0, 1.0),
            rec("b", 1.0, 0.2, 1.0, 1.0),
            rec("a", 2.0, 0.3, 1.0, 1.0),
        ];
        let map = BTreeMap::from([("a".to_string(), 1.0), ("b".to_string(), 2.0)]);
        let ps = ProfileSet::from_records(records, map).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps.profiles[0].id(), "a@2");
        assert_eq!(ps.profiles[1].y(), vec![0.1, 0.2, 0.3]);
        assert_eq!(ps.record_count(), 6);
    }

    #[test]
    fn rejects_short_profiles() {
        let records = vec![rec("a", 0.0, 0.1, 1.0, 1.0), rec("a", 0.0, 0.2, 1.0, 1.0)];
        let err = ProfileSet::from_records(records, uinf("a")).unwrap_err();
        assert!(matches!(err, DataError::ShortProfile { points: 2, .. }));
    }

    #[test]
    fn rejects_repeated_y() {
        let records = vec![
            rec("a", 0.0, 0.1, 1.0, 1.0),
            rec("a", 0.0, 0.2, 1.0, 1.0),
            rec("a", 0.0, 0.2, 1.0, 1.0),
        ];
        let err = ProfileSet::from_records(records, uinf("a")).unwrap_err();
        assert!(matches!(err, DataError::NonMonotoneProfile { .. }));
    }

    #[test]
    fn rejects_missing_freestream() {
        let records = (0..3).map(|i| rec("a", 0.0, i as f64, 1.0, 1.0)).collect();
        let err = ProfileSet::from_records(records, uinf("other")).unwrap_err();
        assert!(matches!(err, DataError::MissingFreestream { case } if case == "a"));
    }

    proptest! {
        #[test]
        fn normalization_is_homogeneous(k in 0.0f64..10.0, alpha in 0.0f64..10.0, u in 0.1f64..10.0) {
            let lhs = normalize_k(alpha * k, u).unwrap();
            let rhs = alpha * normalize_k(k, u).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-14 * (1.0 + rhs.abs()));
        }

        #[test]
        fn normalization_inverts(k in 0.0f64..10.0, u in 0.1f64..10.0) {
            let back = normalize_k(k, u).unwrap() * u * u;
            prop_assert!((back - k).abs() <= 1e-15 * (1.0 + k));
        }
    }
}
