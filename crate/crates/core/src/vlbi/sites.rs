use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::VlbiError;
use crate::math::{cos, sin, sqrt};

/// Bundled twelve-site array (geodetic format).
pub const EHT_PLUS_SITES: &str = include_str!("../../data/eht_plus.sites");
/// Bundled nine candidate expansion sites (geodetic format).
pub const FUTURE_SITES: &str = include_str!("../../data/future.sites");
/// SEFD assumed for every candidate site.
pub const FUTURE_SEFD: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub name: String,
    /// Earth-centred, Earth-fixed position in metres.
    pub position: [f64; 3],
    /// System equivalent flux density in Jy.
    pub sefd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteTable {
    sites: Vec<Site>,
}

/// WGS84 geodetic coordinates to ECEF metres.
pub fn geodetic_to_ecef(lat_deg: f64, lon_deg: f64, elev_m: f64) -> [f64; 3] {
    const A: f64 = 6_378_137.0;
    const F: f64 = 1.0 / 298.257_223_563;
    let e2 = F * (2.0 - F);
    let lat = lat_deg.to_radians();
    let lon = lon_deg.to_radians();
    let n = A / sqrt(1.0 - e2 * sin(lat) * sin(lat));
    [
        (n + elev_m) * cos(lat) * cos(lon),
        (n + elev_m) * cos(lat) * sin(lon),
        (n * (1.0 - e2) + elev_m) * sin(lat),
    ]
}

impl SiteTable {
    pub fn new(sites: Vec<Site>) -> Result<Self, VlbiError> {
        for (i, s) in sites.iter().enumerate() {
            if sites[..i].iter().any(|o| o.name == s.name) {
                return Err(VlbiError::DuplicateSite(s.name.clone()));
            }
            if !(s.sefd > 0.0 && s.sefd.is_finite()) {
                return Err(VlbiError::BadSefd(s.name.clone()));
            }
        }
        Ok(Self { sites })
    }

    /// Parses the plain-text site format: one `NAME X Y Z SEFD` line per site
    /// (ECEF metres), or `NAME LAT LON ELEV SEFD` after a `#format: geodetic`
    /// header. Other `#` text is a comment.
    pub fn parse(text: &str) -> Result<Self, VlbiError> {
        let mut geodetic = false;
        let mut sites: Vec<Site> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |reason: String| VlbiError::Parse { line, reason };
            let trimmed = raw.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(fmt) = comment.trim().strip_prefix("format:") {
                    if !sites.is_empty() {
                        return Err(err("format header must precede all sites".to_string()));
                    }
                    geodetic = match fmt.trim() {
                        "geodetic" => true,
                        "ecef" | "xyz" => false,
                        other => return Err(err(format!("unknown format `{other}`"))),
                    };
                }
                continue;
            }
            let content = trimmed.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 5 {
                let what = if geodetic {
                    "NAME LAT LON ELEV SEFD"
                } else {
                    "NAME X Y Z SEFD"
                };
                return Err(err(format!("expected 5 fields ({what}), found {}", fields.len())));
            }
            let mut nums = [0.0; 4];
            for (slot, text) in nums.iter_mut().zip(&fields[1..]) {
                *slot = text
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("malformed number `{text}`")))?;
            }
            let name = fields[0].to_string();
            if sites.iter().any(|s| s.name == name) {
                return Err(err(format!("duplicate site name `{name}`")));
            }
            if nums[3] <= 0.0 {
                return Err(err(format!("SEFD of `{name}` must be positive")));
            }
            let position = if geodetic {
                if !(-90.0..=90.0).contains(&nums[0]) {
                    return Err(err(format!("latitude {} out of range", nums[0])));
                }
                geodetic_to_ecef(nums[0], nums[1], nums[2])
            } else {
                [nums[0], nums[1], nums[2]]
            };
            sites.push(Site {
                name,
                position,
                sefd: nums[3],
            });
        }
        Self::new(sites)
    }

    pub fn eht_plus() -> Self {
        Self::parse(EHT_PLUS_SITES).expect("bundled site file is valid")
    }

    /// The twelve-site array followed by the nine candidate sites.
    pub fn future() -> Self {
        Self::eht_plus()
            .concat(&Self::parse(FUTURE_SITES).expect("bundled site file is valid"))
            .expect("bundled names are distinct")
    }

    pub fn concat(&self, other: &SiteTable) -> Result<Self, VlbiError> {
        let mut sites = self.sites.clone();
        sites.extend(other.sites.iter().cloned());
        Self::new(sites)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, j: usize) -> &Site {
        &self.sites[j]
    }

    pub fn names(&self) -> Vec<&str> {
        self.sites.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, VlbiError> {
        self.sites
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| VlbiError::UnknownSite(name.to_string()))
    }

    pub fn sefds(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.sefd).collect()
    }
}
