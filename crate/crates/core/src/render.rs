//! Rank × time idle images.
//!
//! Cells hold long-idle occupancy from [`analysis::binarize`]; every other
//! cell counts as busy. Pixel column `x` covers bins
//! `[x*cols/width, max(b0+1, (x+1)*cols/width))` and is idle when any of them
//! is. Row `y` shows rank `(height-1-y)*ranks/height`, so rank 0 sits at the
//! bottom.
//!
//! [`analysis::binarize`]: crate::analysis::binarize

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{binarize, BinarySeries, DEFAULT_THRESHOLD};
use crate::network::Topology;
use crate::trace::{IdleRecord, Trace};
use crate::{Cycles, Rank};

pub const BUSY: [u8; 3] = [250, 210, 40];
pub const IDLE: [u8; 3] = [30, 80, 200];
pub const SEPARATOR: [u8; 3] = [0, 0, 0];

const MIN_SIZE: u32 = 16;
const DASH: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Svg,
    #[default]
    Ppm,
    Ascii,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "svg" => Ok(Format::Svg),
            "ppm" => Ok(Format::Ppm),
            "ascii" => Ok(Format::Ascii),
            other => Err(format!("unknown format {other:?} (expected svg, ppm or ascii)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub threshold: Cycles,
    pub time_bin: Cycles,
    pub width: u32,
    pub height: u32,
    pub annotate_topology: bool,
    pub output_format: Format,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            time_bin: 1_000_000,
            width: 800,
            height: 512,
            annotate_topology: false,
            output_format: Format::Ppm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("image height {height} cannot hold {ranks} ranks; use a height of at least {ranks}")]
    TooSmall { height: u32, ranks: u32 },
    #[error("invalid render configuration: {0}")]
    Config(String),
    #[error("missing shift for rank {0}")]
    MissingShift(Rank),
    #[error("nothing to render: {0}")]
    Empty(&'static str),
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.width < MIN_SIZE || self.height < MIN_SIZE {
            return Err(RenderError::Config(format!("width and height must be at least {MIN_SIZE}")));
        }
        if self.time_bin == 0 || self.threshold == 0 {
            return Err(RenderError::Config("time_bin and threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pixel {
    Busy,
    Idle,
    Separator,
}

impl Pixel {
    fn rgb(self) -> [u8; 3] {
        match self {
            Pixel::Busy => BUSY,
            Pixel::Idle => IDLE,
            Pixel::Separator => SEPARATOR,
        }
    }

    fn ascii(self) -> char {
        match self {
            Pixel::Busy => '.',
            Pixel::Idle => '#',
            Pixel::Separator => '-',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Boundary {
    Socket,
    Node,
}

/// Rows listed top to bottom; each row is one lane of cells.
struct Grid {
    lanes: Vec<Vec<u8>>,
    /// `boundaries[i]` separates lane `i` from lane `i + 1`.
    boundaries: Vec<Option<Boundary>>,
}

fn column_range(x: usize, width: usize, cols: usize) -> (usize, usize) {
    let b0 = x * cols / width;
    let b1 = ((x + 1) * cols / width).max(b0 + 1);
    (b0, b1.min(cols))
}

fn raster(grid: &Grid, width: u32, height: u32) -> Vec<Vec<Pixel>> {
    let lanes = grid.lanes.len();
    let cols = grid.lanes.first().map_or(0, Vec::len).max(1);
    let (w, h) = (width as usize, height as usize);
    let lane_of = |y: usize| (h - 1 - y) * lanes / h;
    let mut px: Vec<Vec<Pixel>> = (0..h)
        .map(|y| {
            let lane = &grid.lanes[lane_of(y)];
            (0..w)
                .map(|x| {
                    let (b0, b1) = column_range(x, w, cols);
                    if lane.get(b0..b1).is_some_and(|s| s.contains(&1)) {
                        Pixel::Idle
                    } else {
                        Pixel::Busy
                    }
                })
                .collect()
        })
        .collect();
    // A separator sits on the lowest pixel row of the upper lane.
    for y in 0..h {
        let lane = lane_of(y);
        if lane == 0 || (y + 1 < h && lane_of(y + 1) == lane) {
            continue;
        }
        match grid.boundaries[lane - 1] {
            Some(Boundary::Socket) => px[y].fill(Pixel::Separator),
            Some(Boundary::Node) => {
                for (x, p) in px[y].iter_mut().enumerate() {
                    if (x as u32 / DASH) % 2 == 0 {
                        *p = Pixel::Separator;
                    }
                }
            }
            None => {}
        }
    }
    px
}

fn encode_ppm(px: &[Vec<Pixel>]) -> Vec<u8> {
    let h = px.len();
    let w = px.first().map_or(0, Vec::len);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    for row in px {
        for p in row {
            out.extend_from_slice(&p.rgb());
        }
    }
    out
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn encode_svg(px: &[Vec<Pixel>]) -> Vec<u8> {
    let h = px.len();
    let w = px.first().map_or(0, Vec::len);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="{}"/>"#, hex(BUSY));
    for (y, row) in px.iter().enumerate() {
        let mut x = 0;
        while x < w {
            let p = row[x];
            let run = row[x..].iter().take_while(|&&q| q == p).count();
            if p != Pixel::Busy {
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{run}" height="1" fill="{}"/>"#,
                    hex(p.rgb())
                );
            }
            x += run;
        }
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}

/// One text line per lane, highest lane first; `width` characters each.
fn encode_ascii(grid: &Grid, width: u32) -> Vec<u8> {
    let cols = grid.lanes.first().map_or(0, Vec::len).max(1);
    let w = width as usize;
    let mut s = String::new();
    for (i, lane) in grid.lanes.iter().enumerate().rev() {
        for x in 0..w {
            let (b0, b1) = column_range(x, w, cols);
            let p = if lane.get(b0..b1).is_some_and(|c| c.contains(&1)) {
                Pixel::Idle
            } else {
                Pixel::Busy
            };
            s.push(p.ascii());
        }
        s.push('\n');
        if i > 0 {
            match grid.boundaries[i - 1] {
                Some(Boundary::Node) => s.push_str(&"- ".repeat(w.div_ceil(2))[..w]),
                Some(Boundary::Socket) => s.push_str(&"-".repeat(w)),
                None => continue,
            }
            s.push('\n');
        }
    }
    s.into_bytes()
}

fn encode(grid: &Grid, cfg: &RenderConfig) -> Result<Vec<u8>, RenderError> {
    let lanes = grid.lanes.len() as u32;
    if cfg.output_format == Format::Ascii {
        return Ok(encode_ascii(grid, cfg.width));
    }
    if cfg.height < lanes {
        return Err(RenderError::TooSmall {
            height: cfg.height,
            ranks: lanes,
        });
    }
    let px = raster(grid, cfg.width, cfg.height);
    Ok(match cfg.output_format {
        Format::Ppm => encode_ppm(&px),
        Format::Svg => encode_svg(&px),
        Format::Ascii => unreachable!(),
    })
}

fn boundary_between(topo: &Topology, lo: Rank, hi: Rank) -> Option<Boundary> {
    let (a, b) = (topo.locate(lo).ok()?, topo.locate(hi).ok()?);
    if a.node != b.node {
        Some(Boundary::Node)
    } else if a.socket != b.socket {
        Some(Boundary::Socket)
    } else {
        None
    }
}

/// Heatmap of long idles with one lane per rank. Node boundaries are drawn
/// dashed and socket boundaries solid when `annotate_topology` is set and a
/// topology is given.
pub fn render_heatmap(trace: &Trace, cfg: &RenderConfig, topo: Option<&Topology>) -> Result<Vec<u8>, RenderError> {
    cfg.validate()?;
    if trace.is_empty() {
        return Err(RenderError::Empty("trace has no records"));
    }
    let BinarySeries { rows, .. } = binarize(trace, cfg.threshold, cfg.time_bin);
    let boundaries = (1..rows.len() as Rank)
        .map(|r| match topo {
            Some(t) if cfg.annotate_topology => boundary_between(t, r - 1, r),
            _ => None,
        })
        .collect();
    encode(&Grid { lanes: rows, boundaries }, cfg)
}

/// One strip per entry of `ranks`, the first at the bottom. Each rank's
/// timeline is moved `shifts[rank]` cycles earlier (clamped at 0).
pub fn render_shifted_timelines(
    trace: &Trace,
    ranks: &[Rank],
    shifts: &BTreeMap<Rank, Cycles>,
    cfg: &RenderConfig,
) -> Result<Vec<u8>, RenderError> {
    cfg.validate()?;
    if ranks.is_empty() {
        return Err(RenderError::Empty("no ranks selected"));
    }
    let shift_of = |r: Rank| shifts.get(&r).copied().ok_or(RenderError::MissingShift(r));
    for &r in ranks {
        shift_of(r)?;
    }
    let moved = |rec: &IdleRecord, s: Cycles| (rec.wait_start.saturating_sub(s), rec.wait_end.saturating_sub(s));
    let long = |rec: &&IdleRecord| rec.duration() >= cfg.threshold;

    let mut span = 0;
    for &r in ranks {
        let s = shift_of(r)?;
        span = trace.records_of(r).map(|rec| moved(rec, s).1).fold(span, Cycles::max);
    }
    let cols = span.div_ceil(cfg.time_bin).max(1) as usize;
    let mut lanes = Vec::with_capacity(ranks.len());
    for &r in ranks {
        let s = shift_of(r)?;
        let mut lane = vec![0u8; cols];
        for rec in trace.records_of(r).filter(long) {
            let (a, b) = moved(rec, s);
            if b > a {
                let first = (a / cfg.time_bin) as usize;
                let last = (b.div_ceil(cfg.time_bin) as usize).min(cols);
                lane[first..last].fill(1);
            }
        }
        lanes.push(lane);
    }
    let boundaries = vec![None; ranks.len().saturating_sub(1)];
    encode(&Grid { lanes, boundaries }, cfg)
}
