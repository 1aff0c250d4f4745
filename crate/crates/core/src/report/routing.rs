//! Which authority handles a report, and which auditor vets it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Location, ReportId, ReportType};
use crate::hash::{sha256_parts, Digest};
use crate::keys::PublicKey;
use crate::wire::{DecodeError, Reader, Writer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("no authority is responsible for this type and location")]
    NoResponsibleAuthority,
    #[error("authority directory is empty")]
    EmptyDirectory,
    #[error("auditor registry is empty")]
    EmptyRegistry,
}

/// Service-area region; bounds are inclusive, coordinates in microdegrees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    BoundingBox {
        min_lat: i32,
        min_lon: i32,
        max_lat: i32,
        max_lon: i32,
    },
    /// Vertices as `(lat, lon)`; even-odd rule.
    Polygon {
        vertices: Vec<(i32, i32)>,
    },
}

impl Region {
    pub fn everywhere() -> Self {
        Region::BoundingBox { min_lat: -90_000_000, min_lon: -180_000_000, max_lat: 90_000_000, max_lon: 180_000_000 }
    }

    pub fn contains(&self, l: Location) -> bool {
        match self {
            Region::BoundingBox { min_lat, min_lon, max_lat, max_lon } => {
                (*min_lat..=*max_lat).contains(&l.lat_micro) && (*min_lon..=*max_lon).contains(&l.lon_micro)
            }
            Region::Polygon { vertices } => point_in_polygon(vertices, l),
        }
    }

    fn encode(&self, w: &mut Writer) {
        match self {
            Region::BoundingBox { min_lat, min_lon, max_lat, max_lon } => {
                w.u8(0).i32(*min_lat).i32(*min_lon).i32(*max_lat).i32(*max_lon);
            }
            Region::Polygon { vertices } => {
                w.u8(1).u32(vertices.len() as u32);
                for (lat, lon) in vertices {
                    w.i32(*lat).i32(*lon);
                }
            }
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(Region::BoundingBox { min_lat: r.i32()?, min_lon: r.i32()?, max_lat: r.i32()?, max_lon: r.i32()? }),
            1 => {
                let n = r.count(8)?;
                let vertices = (0..n).map(|_| Ok((r.i32()?, r.i32()?))).collect::<Result<_, DecodeError>>()?;
                Ok(Region::Polygon { vertices })
            }
            v => Err(DecodeError::InvalidValue { field: "region kind", value: v.into() }),
        }
    }
}

fn point_in_polygon(vertices: &[(i32, i32)], l: Location) -> bool {
    if vertices.len() < 3 {
        return false;
    }
    let (py, px) = (f64::from(l.lat_micro), f64::from(l.lon_micro));
    let mut inside = false;
    let mut j = vertices.len() - 1;
    for i in 0..vertices.len() {
        let (yi, xi) = (f64::from(vertices[i].0), f64::from(vertices[i].1));
        let (yj, xj) = (f64::from(vertices[j].0), f64::from(vertices[j].1));
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryEntry {
    /// `None` matches every type.
    pub report_type: Option<ReportType>,
    pub region: Region,
    pub authority: PublicKey,
}

impl DirectoryEntry {
    pub fn encode(&self, w: &mut Writer) {
        w.u8(self.report_type.map_or(0xff, ReportType::code));
        self.region.encode(w);
        w.raw(self.authority.as_bytes());
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let t = r.u8()?;
        let report_type = match t {
            0xff => None,
            v => Some(
                ReportType::from_u8(v).ok_or(DecodeError::InvalidValue { field: "report type", value: v.into() })?,
            ),
        };
        Ok(Self { report_type, region: Region::decode(r)?, authority: PublicKey(r.array()?) })
    }

    pub fn matches(&self, t: ReportType, l: Location) -> bool {
        self.report_type.is_none_or(|x| x == t) && self.region.contains(l)
    }
}

/// Ordered `(type, region) → authority` table; the first match wins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorityDirectory {
    pub entries: Vec<DirectoryEntry>,
}

impl AuthorityDirectory {
    pub fn contains_authority(&self, pk: &PublicKey) -> bool {
        self.entries.iter().any(|e| e.authority == *pk)
    }
}

pub fn route(t: ReportType, l: Location, dir: &AuthorityDirectory) -> Result<PublicKey, RoutingError> {
    if dir.entries.is_empty() {
        return Err(RoutingError::EmptyDirectory);
    }
    dir.entries.iter().find(|e| e.matches(t, l)).map(|e| e.authority).ok_or(RoutingError::NoResponsibleAuthority)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisteredAuditor {
    pub public_key: PublicKey,
    pub activation_height: u64,
}

/// Auditors in on-chain registration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditorRegistry {
    pub auditors: Vec<RegisteredAuditor>,
}

impl AuditorRegistry {
    pub fn from_keys(keys: impl IntoIterator<Item = PublicKey>) -> Self {
        Self {
            auditors: keys
                .into_iter()
                .map(|public_key| RegisteredAuditor { public_key, activation_height: 0 })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.auditors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.auditors.is_empty()
    }

    /// Auditors whose registration took effect at or before `height`.
    pub fn active_at(&self, height: u64) -> AuditorRegistry {
        AuditorRegistry { auditors: self.auditors.iter().filter(|a| a.activation_height <= height).copied().collect() }
    }

    pub fn contains(&self, pk: &PublicKey) -> bool {
        self.auditors.iter().any(|a| a.public_key == *pk)
    }
}

/// `index = be_uint(H("acrp-auditor" ‖ id ‖ beacon)) mod |auditors|`.
pub fn select_auditor(
    id: &ReportId,
    beacon: &Digest,
    reg: &AuditorRegistry,
) -> Result<(usize, PublicKey), RoutingError> {
    if reg.is_empty() {
        return Err(RoutingError::EmptyRegistry);
    }
    let h = sha256_parts(&[b"acrp-auditor", &id.0, beacon]);
    let m = reg.len() as u128;
    let index = h.iter().fold(0u128, |acc, &b| (acc * 256 + u128::from(b)) % m) as usize;
    Ok((index, reg.auditors[index].public_key))
}
