//! Channel knowledge maps: per-site gain/LoS fields sampled over the corridor
//! layer, their `CKM1` binary encoding, and the per-cell statistics the
//! planner consumes.

use std::io::{self, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellIndex, CoarseSpec, GridSpec};
use crate::metrics::{echo_power, RadioParams};
use crate::scene::{point_gain, GainModel, Point3, Scene, SceneError};

pub const CKM_MAGIC: &[u8; 4] = b"CKM1";

#[derive(Debug, Error)]
pub enum CkmError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"CKM1\"")]
    BadMagic([u8; 4]),
    #[error("CKM header is inconsistent: {0}")]
    BadHeader(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Horizontal samples per fine-cell edge and vertical levels per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLattice {
    pub samples_per_edge: usize,
    pub vertical_levels: usize,
}

impl Default for SampleLattice {
    fn default() -> Self {
        Self {
            samples_per_edge: 4,
            vertical_levels: 2,
        }
    }
}

impl SampleLattice {
    pub fn validate(&self) -> Result<(), CkmError> {
        if self.samples_per_edge < 2 || self.vertical_levels < 2 {
            return Err(CkmError::BadHeader(format!(
                "lattice needs at least 2 samples per edge and 2 levels, got {}x{}",
                self.samples_per_edge, self.vertical_levels
            )));
        }
        Ok(())
    }

    /// Sample-lattice geometry over `grid`. Horizontal samples sit at the
    /// centres of an `s x s` subdivision of each cell; vertical samples span
    /// the cell bottom to top inclusive.
    pub fn geometry(&self, grid: &GridSpec) -> LatticeGeometry {
        let s = self.samples_per_edge;
        let nz = self.vertical_levels;
        LatticeGeometry {
            nx: grid.n * s,
            ny: grid.n * s,
            nz,
            origin: [
                grid.origin_x + grid.dx / (2.0 * s as f64),
                grid.origin_y + grid.dy / (2.0 * s as f64),
                grid.altitude,
            ],
            step: [
                grid.dx / s as f64,
                grid.dy / s as f64,
                grid.dz / (nz - 1) as f64,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub origin: [f64; 3],
    pub step: [f64; 3],
}

impl LatticeGeometry {
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.ny + iy) * self.nz + iz
    }

    pub fn point(&self, ix: usize, iy: usize, iz: usize) -> Point3 {
        Point3::new(
            self.origin[0] + ix as f64 * self.step[0],
            self.origin[1] + iy as f64 * self.step[1],
            self.origin[2] + iz as f64 * self.step[2],
        )
    }
}

/// Sampled gain and LoS field of one candidate site.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap {
    pub site_index: u32,
    pub geometry: LatticeGeometry,
    pub gains: Vec<f64>,
    pub los: Vec<bool>,
}

/// Samples `point_gain` for `site` at every lattice point.
pub fn build_channel_map(
    site_index: usize,
    scene: &Scene,
    grid: &GridSpec,
    lattice: &SampleLattice,
    model: &GainModel,
) -> Result<ChannelMap, CkmError> {
    lattice.validate()?;
    let geometry = lattice.geometry(grid);
    let site = scene.sites[site_index];
    let mut gains = Vec::with_capacity(geometry.len());
    let mut los = Vec::with_capacity(geometry.len());
    for ix in 0..geometry.nx {
        for iy in 0..geometry.ny {
            for iz in 0..geometry.nz {
                let (h, visible) = point_gain(&site, &geometry.point(ix, iy, iz), scene, model)?;
                gains.push(h);
                los.push(visible);
            }
        }
    }
    Ok(ChannelMap {
        site_index: site_index as u32,
        geometry,
        gains,
        los,
    })
}

/// One map per site, built concurrently.
pub fn build_all_maps(
    scene: &Scene,
    grid: &GridSpec,
    lattice: &SampleLattice,
    model: &GainModel,
) -> Result<Vec<ChannelMap>, CkmError> {
    (0..scene.site_count())
        .into_par_iter()
        .map(|k| build_channel_map(k, scene, grid, lattice, model))
        .collect()
}

impl ChannelMap {
    /// Little-endian `CKM1` encoding.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CkmError> {
        let g = &self.geometry;
        w.write_all(CKM_MAGIC)?;
        w.write_all(&self.site_index.to_le_bytes())?;
        for dim in [g.nx, g.ny, g.nz] {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for v in g.origin.iter().chain(g.step.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.gains.len() * 8 + self.los.len() / 8 + 1);
        for h in &self.gains {
            buf.extend_from_slice(&h.to_le_bytes());
        }
        for chunk in self.los.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (b, &v)| acc | (u8::from(v) << b));
            buf.push(byte);
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CkmError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CKM_MAGIC {
            return Err(CkmError::BadMagic(magic));
        }
        let site_index = read_u32(&mut r)?;
        let nx = read_u32(&mut r)? as usize;
        let ny = read_u32(&mut r)? as usize;
        let nz = read_u32(&mut r)? as usize;
        let mut vals = [0f64; 6];
        for v in vals.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        let count = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .filter(|&c| c > 0 && c <= 1 << 32)
            .ok_or_else(|| CkmError::BadHeader(format!("dims {nx}x{ny}x{nz}")))?;
        let mut raw = vec![0u8; count * 8];
        r.read_exact(&mut raw)?;
        let gains: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let mut bits = vec![0u8; count.div_ceil(8)];
        r.read_exact(&mut bits)?;
        let los = (0..count).map(|p| bits[p / 8] >> (p % 8) & 1 == 1).collect();
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(CkmError::BadHeader("trailing bytes after LoS bits".into()));
        }
        if gains.iter().any(|h| !(*h >= 0.0)) {
            return Err(CkmError::BadHeader("negative or NaN gain".into()));
        }
        Ok(Self {
            site_index,
            geometry: LatticeGeometry {
                nx,
                ny,
                nz,
                origin: [vals[0], vals[1], vals[2]],
                step: [vals[3], vals[4], vals[5]],
            },
            gains,
            los,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// How per-sample LoS collapses into one cell indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LosRule {
    /// Every sample in the cell must see the site.
    #[default]
    All,
    /// One visible sample suffices.
    Any,
}

/// Reduction of one site's samples over one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellChannelStats {
    pub h_min: f64,
    pub h_max: f64,
    pub h_min_trim: f64,
    pub h_max_trim: f64,
    pub los: bool,
    /// Minimum echo power over the cell, watts; zero without LoS.
    pub echo_min: f64,
    /// LoS indicator once the trimmed share of worst samples is ignored.
    pub los_trim: bool,
    /// Echo minimum over the samples left after trimming.
    pub echo_min_trim: f64,
}

impl CellChannelStats {
    #[inline]
    pub fn serving_gain(&self, trimmed: bool) -> f64 {
        if trimmed {
            self.h_min_trim
        } else {
            self.h_min
        }
    }

    #[inline]
    pub fn los_indicator(&self, trimmed: bool) -> bool {
        if trimmed {
            self.los_trim
        } else {
            self.los
        }
    }

    #[inline]
    pub fn echo(&self, trimmed: bool) -> f64 {
        if trimmed {
            self.echo_min_trim
        } else {
            self.echo_min
        }
    }

    #[inline]
    pub fn interfering_gain(&self, trimmed: bool) -> f64 {
        if trimmed {
            self.h_max_trim
        } else {
            self.h_max
        }
    }
}

/// Settings shared by every stats reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionParams<'a> {
    pub trim_fraction: f64,
    pub los_rule: LosRule,
    pub radio: &'a RadioParams,
}

/// Reduces the samples in `ix_range x iy_range` (all levels) of `map`.
fn region_stats(
    map: &ChannelMap,
    site: &Point3,
    ix_range: std::ops::Range<usize>,
    iy_range: std::ops::Range<usize>,
    red: &ReductionParams<'_>,
) -> CellChannelStats {
    let g = &map.geometry;
    let mut samples = Vec::with_capacity(ix_range.len() * iy_range.len() * g.nz);
    let mut dists = Vec::with_capacity(samples.capacity());
    let mut nlos = 0usize;
    for ix in ix_range {
        for iy in iy_range.clone() {
            for iz in 0..g.nz {
                let p = g.index(ix, iy, iz);
                samples.push(map.gains[p]);
                dists.push((site.distance(&g.point(ix, iy, iz)), map.los[p]));
                nlos += usize::from(!map.los[p]);
            }
        }
    }
    let count = samples.len();
    let h_min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let h_max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cut = (red.trim_fraction * count as f64).floor() as usize;
    let (h_min_trim, h_max_trim) = if cut == 0 {
        (h_min, h_max)
    } else {
        samples.sort_by(f64::total_cmp);
        (samples[cut], samples[count - 1 - cut])
    };
    let (los, los_trim) = match red.los_rule {
        LosRule::All => (nlos == 0, nlos <= cut),
        LosRule::Any => (nlos < count, nlos < count),
    };
    // Per-sample echo; under the all-samples rule a blocked sample returns nothing.
    let mut echoes: Vec<f64> = dists
        .iter()
        .map(|&(d, visible)| {
            if visible || red.los_rule == LosRule::Any {
                echo_power(d, red.radio)
            } else {
                0.0
            }
        })
        .collect();
    echoes.sort_by(f64::total_cmp);
    CellChannelStats {
        h_min,
        h_max,
        h_min_trim,
        h_max_trim,
        los,
        echo_min: if los { echoes[0] } else { 0.0 },
        los_trim,
        echo_min_trim: if los_trim { echoes[cut] } else { 0.0 },
    }
}

/// Statistics of fine cell `cell` for the site that produced `map`.
pub fn cell_stats(
    map: &ChannelMap,
    site: &Point3,
    lattice: &SampleLattice,
    cell: CellIndex,
    red: &ReductionParams<'_>,
) -> CellChannelStats {
    let s = lattice.samples_per_edge;
    region_stats(
        map,
        site,
        (cell.i - 1) * s..cell.i * s,
        (cell.j - 1) * s..cell.j * s,
        red,
    )
}

/// Per-(cell, site) statistics over a square lattice of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsGrid {
    pub side: usize,
    pub sites: usize,
    /// Whether SINR evaluation reads the trimmed extrema.
    pub use_trimmed: bool,
    /// Row-major by cell, then by site.
    pub cells: Vec<CellChannelStats>,
}

impl StatsGrid {
    pub fn new(side: usize, sites: usize, use_trimmed: bool, cells: Vec<CellChannelStats>) -> Self {
        assert_eq!(cells.len(), side * side * sites, "stats grid shape mismatch");
        Self {
            side,
            sites,
            use_trimmed,
            cells,
        }
    }

    /// All sites' stats at `cell`.
    #[inline]
    pub fn at(&self, cell: CellIndex) -> &[CellChannelStats] {
        let o = cell.offset(self.side) * self.sites;
        &self.cells[o..o + self.sites]
    }

    #[inline]
    pub fn get(&self, k: usize, cell: CellIndex) -> &CellChannelStats {
        &self.at(cell)[k]
    }

    pub fn get_mut(&mut self, k: usize, cell: CellIndex) -> &mut CellChannelStats {
        let o = cell.offset(self.side) * self.sites + k;
        &mut self.cells[o]
    }
}

fn stats_over_blocks(
    maps: &[ChannelMap],
    scene: &Scene,
    side: usize,
    samples_per_cell: usize,
    red: &ReductionParams<'_>,
    use_trimmed: bool,
) -> StatsGrid {
    let k_count = maps.len();
    let cells: Vec<CellChannelStats> = (0..side * side)
        .into_par_iter()
        .flat_map_iter(|o| {
            let cell = CellIndex::from_offset(o, side);
            maps.iter().enumerate().map(move |(k, map)| {
                region_stats(
                    map,
                    &scene.sites[k],
                    (cell.i - 1) * samples_per_cell..cell.i * samples_per_cell,
                    (cell.j - 1) * samples_per_cell..cell.j * samples_per_cell,
                    red,
                )
            })
        })
        .collect();
    StatsGrid::new(side, k_count, use_trimmed, cells)
}

/// Fine-layer statistics. SINR reads the trimmed extrema only when a
/// positive trim fraction is requested.
pub fn fine_stats(
    maps: &[ChannelMap],
    scene: &Scene,
    grid: &GridSpec,
    lattice: &SampleLattice,
    red: &ReductionParams<'_>,
) -> StatsGrid {
    stats_over_blocks(
        maps,
        scene,
        grid.n,
        lattice.samples_per_edge,
        red,
        red.trim_fraction > 0.0,
    )
}

/// Coarse-layer statistics over each block's sample superset; SINR reads the
/// trimmed extrema.
pub fn coarse_stats(
    maps: &[ChannelMap],
    scene: &Scene,
    lattice: &SampleLattice,
    coarse: &CoarseSpec,
    red: &ReductionParams<'_>,
) -> StatsGrid {
    stats_over_blocks(
        maps,
        scene,
        coarse.m,
        coarse.factor * lattice.samples_per_edge,
        red,
        true,
    )
}
