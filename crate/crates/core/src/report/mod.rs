//! The citizen-filed report `(type, location, picture, description)`, its
//! canonical encoding and identifier, and the signed bundle a citizen uploads.

mod geo;
mod routing;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunking::{
    self, location_chunk, picture_chunks, reassemble_image, ChunkingError, ChunkingScheme, ImageDescriptor,
    TextGranularity,
};
use crate::hash::{sha256, Digest};
use crate::keys::SigningKey;
use crate::rss::{self, ChunkedMessage, FieldTag, RedactableSignature, SignatureCommitment, MAX_CHUNKS};
use crate::wire::{DecodeError, Reader, Writer};

pub use geo::{haversine_m, EARTH_RADIUS_M};
pub use routing::{
    route, select_auditor, AuditorRegistry, AuthorityDirectory, DirectoryEntry, Region, RegisteredAuditor, RoutingError,
};

pub const MICRODEGREES: i32 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("invalid report: {0}")]
    InvalidReport(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Chunking(#[from] ChunkingError),
}

impl ReportError {
    fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidReport(msg.into())
    }
}

/// Fixed issue taxonomy; the discriminant is the wire code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReportType {
    Pothole = 0,
    TrashDump = 1,
    Graffiti = 2,
    StreetDamage = 3,
    TrafficObstruction = 4,
    Other = 5,
}

impl ReportType {
    pub const ALL: [ReportType; 6] = [
        ReportType::Pothole,
        ReportType::TrashDump,
        ReportType::Graffiti,
        ReportType::StreetDamage,
        ReportType::TrafficObstruction,
        ReportType::Other,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

impl std::str::FromStr for ReportType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        Self::ALL
            .into_iter()
            .find(|t| format!("{t:?}").to_lowercase() == norm)
            .ok_or_else(|| format!("unknown report type {s:?}"))
    }
}

/// WGS84 coordinates in microdegrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Location {
    pub lat_micro: i32,
    pub lon_micro: i32,
}

impl Location {
    pub fn new(lat_micro: i32, lon_micro: i32) -> Result<Self, ReportError> {
        let loc = Self { lat_micro, lon_micro };
        if !loc.is_valid() {
            return Err(ReportError::invalid(format!("coordinates out of range: {lat_micro}, {lon_micro}")));
        }
        Ok(loc)
    }

    pub fn from_degrees(lat: f64, lon: f64) -> Result<Self, ReportError> {
        let to_micro = |v: f64| (v * f64::from(MICRODEGREES)).round();
        let (lat, lon) = (to_micro(lat), to_micro(lon));
        if !lat.is_finite() || !lon.is_finite() || lat.abs() > 2e9 || lon.abs() > 2e9 {
            return Err(ReportError::invalid("coordinates are not finite"));
        }
        Self::new(lat as i32, lon as i32)
    }

    pub fn is_valid(&self) -> bool {
        self.lat_micro.abs() <= 90 * MICRODEGREES && self.lon_micro.abs() <= 180 * MICRODEGREES
    }

    pub fn lat_deg(&self) -> f64 {
        f64::from(self.lat_micro) / f64::from(MICRODEGREES)
    }

    pub fn lon_deg(&self) -> f64 {
        f64::from(self.lon_micro) / f64::from(MICRODEGREES)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Picture {
    pub image: ImageDescriptor,
    pub scheme: ChunkingScheme,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub report_type: ReportType,
    pub location: Location,
    pub picture: Picture,
    pub description: String,
}

/// Digest of a report's canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReportId(#[serde(with = "crate::keys::hex_32")] pub Digest);

impl ReportId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        crate::hash::digest_from_hex(s).map(Self)
    }
}

impl std::fmt::Debug for ReportId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ReportId({})", &self.to_hex()[..12])
    }
}

impl std::str::FromStr for ReportId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s).ok_or_else(|| format!("report id must be 64 hex digits, got {s:?}"))
    }
}

impl std::fmt::Display for ReportId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Report {
    pub fn picture_chunks(&self) -> Result<Vec<Vec<u8>>, ReportError> {
        let chunks = picture_chunks(&self.picture.image, &self.picture.scheme)?;
        Ok(chunks)
    }

    pub fn description_chunks(&self) -> Vec<Vec<u8>> {
        chunking::text_chunks(&self.description, TextGranularity::Words)
    }

    pub fn location_chunks(&self) -> Vec<Vec<u8>> {
        vec![location_chunk(self.location.lat_micro, self.location.lon_micro)]
    }

    fn validate(&self) -> Result<Vec<Vec<u8>>, ReportError> {
        if !self.location.is_valid() {
            return Err(ReportError::invalid("coordinates out of range"));
        }
        if self.description_chunks().len() > MAX_CHUNKS {
            return Err(ReportError::invalid("description has too many words"));
        }
        self.picture_chunks()
    }

    /// `T:u8 ‖ lat:i32 ‖ lon:i32 ‖ len:u32 ‖ P ‖ len:u32 ‖ D` where
    /// `P = width:u32 ‖ height:u32 ‖ count:u32 ‖ (len:u32 ‖ chunk)*`.
    pub fn canonical_encode(&self) -> Result<Vec<u8>, ReportError> {
        let pic = self.validate()?;
        let mut p = Writer::new();
        p.u32(self.picture.image.width).u32(self.picture.image.height).u32(pic.len() as u32);
        for c in &pic {
            p.bytes(c);
        }
        let p = p.finish();
        let mut w = Writer::with_capacity(p.len() + self.description.len() + 17);
        w.u8(self.report_type.code())
            .i32(self.location.lat_micro)
            .i32(self.location.lon_micro)
            .bytes(&p)
            .str(&self.description);
        Ok(w.finish())
    }

    pub fn canonical_decode(bytes: &[u8]) -> Result<Self, ReportError> {
        let mut r = Reader::new(bytes);
        let code = r.u8()?;
        let report_type =
            ReportType::from_u8(code).ok_or_else(|| ReportError::invalid(format!("unknown type code {code}")))?;
        let location = Location::new(r.i32()?, r.i32()?)?;
        let mut p = Reader::new(r.bytes()?);
        let description = r.string("description")?;
        r.finish()?;

        let (width, height) = (p.u32()?, p.u32()?);
        let count = p.count(4)?;
        let chunks = (0..count).map(|_| p.bytes().map(<[u8]>::to_vec)).collect::<Result<Vec<_>, _>>()?;
        p.finish()?;
        let header = chunks.first().ok_or_else(|| ReportError::invalid("picture has no header"))?;
        let scheme = ChunkingScheme::from_header(header)?;
        let image = reassemble_image(width, height, &chunks)?;
        let report = Self { report_type, location, picture: Picture { image, scheme }, description };
        // Reject non-canonical encodings that happen to reassemble.
        if report.picture_chunks()? != chunks {
            return Err(ReportError::invalid("picture chunks are not canonical"));
        }
        Ok(report)
    }

    pub fn id(&self) -> Result<ReportId, ReportError> {
        Ok(ReportId(sha256(&self.canonical_encode()?)))
    }

    /// The three signed fields, bound to this report's id.
    pub fn messages(&self) -> Result<[ChunkedMessage; 3], ReportError> {
        let id = self.id()?.0;
        let mk = |tag, chunks| ChunkedMessage::new(tag, chunks, id).map_err(|e| ReportError::invalid(e.to_string()));
        Ok([
            mk(FieldTag::Location, self.location_chunks())?,
            mk(FieldTag::Picture, self.picture_chunks()?)?,
            mk(FieldTag::Description, self.description_chunks())?,
        ])
    }
}

pub fn report_id(r: &Report) -> Result<ReportId, ReportError> {
    r.id()
}

/// A report together with the citizen's redactable signatures over its
/// location, picture and description. This is what goes to storage; it holds
/// every nonce, so access is limited to the citizen and the assigned auditor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedReport {
    pub report: Report,
    pub signatures: [RedactableSignature; 3],
}

impl SignedReport {
    pub fn sign(report: Report, sk: &SigningKey) -> Result<Self, ReportError> {
        let msgs = report.messages()?;
        let signatures = msgs.each_ref().map(|m| rss::sign_redactable(sk, m));
        Ok(Self { report, signatures })
    }

    pub fn messages(&self) -> Result<[ChunkedMessage; 3], ReportError> {
        self.report.messages()
    }

    pub fn id(&self) -> Result<ReportId, ReportError> {
        self.report.id()
    }

    /// On-chain commitments, in `[location, picture, description]` order.
    pub fn commitments(&self) -> Result<[SignatureCommitment; 3], ReportError> {
        let msgs = self.messages()?;
        let mut out = Vec::with_capacity(3);
        for (m, s) in msgs.iter().zip(&self.signatures) {
            out.push(rss::commitment(m, s).ok_or_else(|| ReportError::invalid("signature does not fit field"))?);
        }
        Ok(out.try_into().expect("three fields"))
    }

    /// `len:u32 ‖ canonical report ‖ signature × 3`
    pub fn to_bytes(&self) -> Result<Vec<u8>, ReportError> {
        let mut w = Writer::new();
        w.bytes(&self.report.canonical_encode()?);
        for s in &self.signatures {
            s.encode(&mut w);
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ReportError> {
        let mut r = Reader::new(bytes);
        let report = Report::canonical_decode(r.bytes()?)?;
        let signatures = [
            RedactableSignature::decode(&mut r)?,
            RedactableSignature::decode(&mut r)?,
            RedactableSignature::decode(&mut r)?,
        ];
        r.finish()?;
        Ok(Self { report, signatures })
    }
}
