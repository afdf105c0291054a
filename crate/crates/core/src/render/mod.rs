//! Rasterizes an environment state onto a floor-plan image.
//!
//! Layout coordinates are in cells of half a glyph. The full profile uses
//! 12 px glyphs (6 px cells) on a 256 px canvas; the desk profile uses 3 px
//! glyphs on 64 px. All cell coordinates are even so both scales land on
//! whole pixels. Pixels outside the 42-cell plan are background margin.

mod pgm;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::home::{EnvState, Object, SensorKind, SensorManifest, Verb, Violation};

pub use pgm::{decode_pgm, encode_pgm};

pub const BACKGROUND: u8 = 128;
pub const WALL: u8 = 0;
/// Side of every bitmap on the glyph sheet.
pub const SHEET_GLYPH: usize = 12;
/// Cell origins of the verb and object glyphs, each two glyphs wide.
pub const COMMAND_VERB_CELL: (u32, u32) = (2, 26);
pub const COMMAND_OBJECT_CELL: (u32, u32) = (8, 26);
/// Pseudo sensor id hiding the command glyphs in a mask.
pub const COMMAND_TOKEN: &str = "@command";
pub const PRESENCE_TOKEN: &str = "@presence";

const GAUGE_PEAK: f64 = 180.0;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("layout: {0}")]
    Layout(String),
    #[error("glyph sheet: {0}")]
    Glyph(String),
    #[error("pgm: {0}")]
    Pgm(String),
    #[error("state is not renderable: {}", join_violations(.0))]
    State(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Full,
    Desk,
}

impl ProfileName {
    pub fn profile(self) -> RenderProfile {
        match self {
            ProfileName::Full => RenderProfile::full(),
            ProfileName::Desk => RenderProfile::desk(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(ProfileName::Full),
            "desk" => Some(ProfileName::Desk),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            ProfileName::Full => "full",
            ProfileName::Desk => "desk",
        }
    }
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderProfile {
    pub name: ProfileName,
    pub image_side: usize,
    pub glyph_side: usize,
}

impl RenderProfile {
    pub fn full() -> Self {
        RenderProfile { name: ProfileName::Full, image_side: 256, glyph_side: 12 }
    }

    pub fn desk() -> Self {
        RenderProfile { name: ProfileName::Desk, image_side: 64, glyph_side: 3 }
    }

    /// Pixel offset of an even cell coordinate.
    pub fn cell_px(&self, cell: u32) -> usize {
        cell as usize * self.glyph_side / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateImage {
    pub side: usize,
    pub pixels: Vec<u8>,
}

impl StateImage {
    pub fn filled(side: usize, value: u8) -> Self {
        StateImage { side, pixels: vec![value; side * side] }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.side + x]
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        export_pgm(self)
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, RenderError> {
        let (w, h, pixels) = decode_pgm(bytes)?;
        if w != h {
            return Err(RenderError::Pgm(format!("state images are square, got {w}x{h}")));
        }
        Ok(StateImage { side: w, pixels })
    }
}

pub fn export_pgm(img: &StateImage) -> Vec<u8> {
    encode_pgm(img.side, img.side, &img.pixels)
}

/// Sensors withheld from the rendered view.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SensorMask {
    pub hidden: BTreeSet<String>,
    pub hide_command: bool,
}

impl SensorMask {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty() && !self.hide_command
    }

    pub fn hides(&self, id: &str) -> bool {
        self.hidden.contains(id)
    }

    /// Builds a mask from sensor ids and the `@command`, `@presence` and
    /// `@presence:<room>` tokens. Unknown ids are dropped with a warning.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], manifest: &SensorManifest) -> Self {
        let mut mask = SensorMask::default();
        for tok in tokens {
            let tok = tok.as_ref().trim();
            if tok.is_empty() {
                continue;
            }
            if tok == COMMAND_TOKEN {
                mask.hide_command = true;
            } else if tok == PRESENCE_TOKEN {
                mask.hidden.extend(manifest.sensors().iter().filter(|s| s.is_presence()).map(|s| s.id.clone()));
            } else if let Some(room) = tok.strip_prefix("@presence:") {
                match crate::home::Room::parse(room) {
                    Ok(room) => mask.hidden.extend(manifest.presence_sensors(room).map(|s| s.id.clone())),
                    Err(_) => log::warn!("mask token `{tok}` names no room; ignored"),
                }
            } else if manifest.contains(tok) {
                mask.hidden.insert(tok.to_string());
            } else {
                log::warn!("mask names unknown sensor `{tok}`; ignored");
            }
        }
        mask
    }
}

/// Drops masked readings. The command is kept; hiding it is a render concern.
pub fn apply_mask(s: &EnvState, m: &SensorMask) -> EnvState {
    let mut out = s.clone();
    for id in &m.hidden {
        if out.readings.remove(id).is_none() {
            log::warn!("mask names `{id}`, which the state does not carry; ignored");
        }
    }
    out
}

/// 12×12 ink-coverage bitmaps keyed by glyph id. Coverage 255 is full ink.
#[derive(Debug, Clone)]
pub struct GlyphSheet {
    glyphs: HashMap<String, Vec<u8>>,
}

impl GlyphSheet {
    /// Parses a 12 px wide P5 strip (0 = ink) and its `glyph_id;offset` index.
    pub fn parse(pgm: &[u8], index: &str) -> Result<Self, RenderError> {
        let (w, h, pixels) = decode_pgm(pgm)?;
        if w != SHEET_GLYPH {
            return Err(RenderError::Glyph(format!("sheet is {w} px wide, expected {SHEET_GLYPH}")));
        }
        let mut glyphs = HashMap::new();
        for (n, raw) in index.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (id, offset) = body
                .split_once(';')
                .ok_or_else(|| RenderError::Glyph(format!("index line {}: expected id;offset", n + 1)))?;
            let offset: usize =
                offset.trim().parse().map_err(|_| RenderError::Glyph(format!("index line {}: bad offset", n + 1)))?;
            if offset + SHEET_GLYPH > h {
                return Err(RenderError::Glyph(format!("glyph `{id}` runs past the sheet")));
            }
            let start = offset * SHEET_GLYPH;
            let cov = pixels[start..start + SHEET_GLYPH * SHEET_GLYPH].iter().map(|p| 255 - p).collect();
            if glyphs.insert(id.trim().to_string(), cov).is_some() {
                return Err(RenderError::Glyph(format!("duplicate glyph `{id}`")));
            }
        }
        Ok(GlyphSheet { glyphs })
    }

    pub fn reference() -> Arc<GlyphSheet> {
        static SHEET: OnceLock<Arc<GlyphSheet>> = OnceLock::new();
        SHEET
            .get_or_init(|| {
                let sheet =
                    GlyphSheet::parse(include_bytes!("../../data/glyphs.pgm"), include_str!("../../data/glyphs.txt"));
                Arc::new(sheet.expect("bundled glyph sheet is valid"))
            })
            .clone()
    }

    pub fn get(&self, id: &str) -> Option<&[u8]> {
        self.glyphs.get(id).map(Vec::as_slice)
    }

    /// Coverage bitmap resampled to `side`: integer upscaling by pixel
    /// replication, integer downscaling by box averaging.
    pub fn scaled(&self, id: &str, side: usize) -> Result<Vec<u8>, RenderError> {
        let src = self.get(id).ok_or_else(|| RenderError::Glyph(format!("missing glyph `{id}`")))?;
        if side >= SHEET_GLYPH && side.is_multiple_of(SHEET_GLYPH) {
            let k = side / SHEET_GLYPH;
            Ok((0..side * side).map(|i| src[(i / side / k) * SHEET_GLYPH + (i % side) / k]).collect())
        } else if side > 0 && SHEET_GLYPH.is_multiple_of(side) {
            let k = SHEET_GLYPH / side;
            let mut out = Vec::with_capacity(side * side);
            for y in 0..side {
                for x in 0..side {
                    let mut sum = 0u32;
                    for dy in 0..k {
                        for dx in 0..k {
                            sum += src[(y * k + dy) * SHEET_GLYPH + x * k + dx] as u32;
                        }
                    }
                    let n = (k * k) as u32;
                    out.push(((sum + n / 2) / n) as u8);
                }
            }
            Ok(out)
        } else {
            Err(RenderError::Glyph(format!("cannot resample {SHEET_GLYPH} px glyphs to {side} px")))
        }
    }
}

/// Axis-aligned wall segments in cell units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FloorPlan {
    pub walls: Vec<(u32, u32, u32, u32)>,
}

impl FloorPlan {
    pub fn parse(text: &str) -> Result<Self, RenderError> {
        let mut walls = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let bad = || RenderError::Layout(format!("wall line {}: expected x0;y0;x1;y1", n + 1));
            let v: Vec<u32> = body.split(';').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
            let [x0, y0, x1, y1] = v[..] else { return Err(bad()) };
            if x0 != x1 && y0 != y1 {
                return Err(RenderError::Layout(format!("wall line {} is not axis-aligned", n + 1)));
            }
            walls.push((x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1)));
        }
        Ok(FloorPlan { walls })
    }

    pub fn reference() -> FloorPlan {
        FloorPlan::parse(include_str!("../../data/walls.txt")).expect("bundled floor plan is valid")
    }
}

#[derive(Debug, Clone)]
struct Slot {
    x: usize,
    y: usize,
    kind: SensorKind,
}

/// A validated layout for one profile: every glyph box fits the canvas and
/// no two boxes, walls or command plates overlap.
#[derive(Debug, Clone)]
pub struct Renderer {
    manifest: Arc<SensorManifest>,
    profile: RenderProfile,
    slots: Vec<Slot>,
    kind_glyphs: [Vec<u8>; 3],
    verbs: HashMap<Verb, Vec<u8>>,
    objects: HashMap<Object, Vec<u8>>,
    verb_origin: (usize, usize),
    object_origin: (usize, usize),
    base: Vec<u8>,
}

fn kind_slot(kind: SensorKind) -> usize {
    match kind {
        SensorKind::Binary => 0,
        SensorKind::Continuous => 1,
        SensorKind::Gauge => 2,
    }
}

impl Renderer {
    pub fn new(
        manifest: Arc<SensorManifest>,
        profile: RenderProfile,
        sheet: &GlyphSheet,
        plan: &FloorPlan,
    ) -> Result<Self, RenderError> {
        let side = profile.image_side;
        let g = profile.glyph_side;
        let px = |cell: u32| -> Result<usize, RenderError> {
            if !(cell as usize * g).is_multiple_of(2) {
                return Err(RenderError::Layout(format!("cell {cell} falls between pixels at glyph side {g}")));
            }
            Ok(profile.cell_px(cell))
        };
        let mut owner = vec![u16::MAX; side * side];
        let mut claim = |x: usize, y: usize, w: usize, h: usize, who: u16, what: &str| {
            if x + w > side || y + h > side {
                return Err(RenderError::Layout(format!("{what} at ({x}, {y}) leaves the {side} px canvas")));
            }
            for yy in y..y + h {
                for xx in x..x + w {
                    let cell = &mut owner[yy * side + xx];
                    if *cell != u16::MAX && *cell != who {
                        return Err(RenderError::Layout(format!("{what} overlaps another element at ({xx}, {yy})")));
                    }
                    *cell = who;
                }
            }
            Ok(())
        };

        let mut base = vec![BACKGROUND; side * side];
        const WALL_OWNER: u16 = u16::MAX - 1;
        for &(x0, y0, x1, y1) in &plan.walls {
            let (px0, py0, px1, py1) = (px(x0)?, px(y0)?, px(x1)?, px(y1)?);
            claim(px0, py0, px1 - px0 + 1, py1 - py0 + 1, WALL_OWNER, "wall")?;
            for y in py0..=py1 {
                for x in px0..=px1 {
                    base[y * side + x] = WALL;
                }
            }
        }

        let mut slots = Vec::with_capacity(manifest.len());
        for (i, s) in manifest.sensors().iter().enumerate() {
            let (x, y) = (px(s.cell_x)?, px(s.cell_y)?);
            claim(x, y, g, g, i as u16, &format!("sensor `{}`", s.id))?;
            slots.push(Slot { x, y, kind: s.kind });
        }

        let cmd = 2 * g;
        let verb_origin = (px(COMMAND_VERB_CELL.0)?, px(COMMAND_VERB_CELL.1)?);
        let object_origin = (px(COMMAND_OBJECT_CELL.0)?, px(COMMAND_OBJECT_CELL.1)?);
        const COMMAND_OWNER: u16 = u16::MAX - 2;
        for (x, y) in [verb_origin, object_origin] {
            claim(x, y, cmd, cmd, COMMAND_OWNER, "command plate")?;
            if x + cmd > side / 2 || y < side / 2 {
                return Err(RenderError::Layout("command plates must sit in the bottom-left quadrant".into()));
            }
        }

        let kind_glyphs = [sheet.scaled("binary", g)?, sheet.scaled("continuous", g)?, sheet.scaled("gauge", g)?];
        let mut verbs = HashMap::new();
        for &v in Verb::ALL.iter().filter(|&&v| v != Verb::None) {
            verbs.insert(v, sheet.scaled(&format!("verb:{v}"), cmd)?);
        }
        let mut objects = HashMap::new();
        for &o in Object::ALL.iter().filter(|&&o| o != Object::None) {
            objects.insert(o, sheet.scaled(&format!("object:{o}"), cmd)?);
        }

        Ok(Renderer { manifest, profile, slots, kind_glyphs, verbs, objects, verb_origin, object_origin, base })
    }

    /// Layout over the bundled manifest, glyphs and floor plan.
    pub fn reference(profile: ProfileName) -> Arc<Renderer> {
        static FULL: OnceLock<Arc<Renderer>> = OnceLock::new();
        static DESK: OnceLock<Arc<Renderer>> = OnceLock::new();
        let cell = match profile {
            ProfileName::Full => &FULL,
            ProfileName::Desk => &DESK,
        };
        cell.get_or_init(|| {
            let r = Renderer::new(
                SensorManifest::reference(),
                profile.profile(),
                &GlyphSheet::reference(),
                &FloorPlan::reference(),
            );
            Arc::new(r.expect("bundled layout is valid"))
        })
        .clone()
    }

    pub fn profile(&self) -> RenderProfile {
        self.profile
    }

    pub fn manifest(&self) -> &Arc<SensorManifest> {
        &self.manifest
    }

    /// Pixel box `(x, y, side)` of a sensor glyph.
    pub fn glyph_box(&self, sensor: usize) -> (usize, usize, usize) {
        let s = &self.slots[sensor];
        (s.x, s.y, self.profile.glyph_side)
    }

    /// Pixel boxes of the verb and object plates.
    pub fn command_boxes(&self) -> [(usize, usize, usize); 2] {
        let c = 2 * self.profile.glyph_side;
        [(self.verb_origin.0, self.verb_origin.1, c), (self.object_origin.0, self.object_origin.1, c)]
    }

    /// Draws walls, every unmasked sensor and the pending command. Fails if an
    /// unmasked sensor is missing or out of its domain.
    pub fn render(&self, s: &EnvState, m: &SensorMask) -> Result<StateImage, RenderError> {
        let side = self.profile.image_side;
        let mut img = StateImage { side, pixels: self.base.clone() };
        let mut violations = Vec::new();
        for (spec, slot) in self.manifest.sensors().iter().zip(&self.slots) {
            if m.hides(&spec.id) {
                continue;
            }
            let value = match s.readings.get(&spec.id) {
                Some(&v) if spec.accepts(v) => v,
                Some(&v) => {
                    violations.push(Violation::OutOfRange { id: spec.id.clone(), value: v });
                    continue;
                }
                None => {
                    violations.push(Violation::Missing(spec.id.clone()));
                    continue;
                }
            };
            let glyph = &self.kind_glyphs[kind_slot(slot.kind)];
            self.draw_sensor(&mut img, slot, glyph, spec.normalized(value));
        }
        if !violations.is_empty() {
            return Err(RenderError::State(violations));
        }
        if !m.hide_command && !s.command.is_none() {
            let cmd = 2 * self.profile.glyph_side;
            if let Some(g) = self.verbs.get(&s.command.verb) {
                blit_ink(&mut img, self.verb_origin, cmd, g);
            }
            if let Some(g) = self.objects.get(&s.command.object) {
                blit_ink(&mut img, self.object_origin, cmd, g);
            }
        }
        Ok(img)
    }

    fn draw_sensor(&self, img: &mut StateImage, slot: &Slot, cov: &[u8], v: f64) {
        let g = self.profile.glyph_side;
        for row in 0..g {
            // Fill of this row, counted from the bottom of the glyph.
            let fill = (v * g as f64 - (g - 1 - row) as f64).clamp(0.0, 1.0);
            for col in 0..g {
                let m = cov[row * g + col] as f64 / 255.0;
                let p = match slot.kind {
                    SensorKind::Binary => {
                        if v >= 0.5 {
                            255.0 - 255.0 * m
                        } else {
                            255.0 * m
                        }
                    }
                    SensorKind::Continuous => (1.0 - m) * (192.0 + 63.0 * fill) + m * (224.0 - 32.0 * fill),
                    SensorKind::Gauge => GAUGE_PEAK * m * fill,
                };
                img.pixels[(slot.y + row) * img.side + slot.x + col] = p.round() as u8;
            }
        }
    }
}

fn blit_ink(img: &mut StateImage, origin: (usize, usize), side: usize, cov: &[u8]) {
    for row in 0..side {
        for col in 0..side {
            img.pixels[(origin.1 + row) * img.side + origin.0 + col] = 255 - cov[row * side + col];
        }
    }
}

/// Renders with the bundled layout for `profile`.
pub fn render(s: &EnvState, profile: ProfileName, m: &SensorMask) -> Result<StateImage, RenderError> {
    Renderer::reference(profile).render(s, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::home::{Room, VoiceCommand};

    fn default_state() -> EnvState {
        EnvState::defaults(&SensorManifest::reference(), 0)
    }

    #[test]
    fn reference_layouts_build() {
        for p in [ProfileName::Full, ProfileName::Desk] {
            let r = Renderer::reference(p);
            let img = r.render(&default_state(), &SensorMask::none()).unwrap();
            assert_eq!(img.side, p.profile().image_side);
            assert_eq!(img.pixels.len(), img.side * img.side);
        }
    }

    #[test]
    fn glyph_contrast() {
        let m = SensorManifest::reference();
        for p in [ProfileName::Full, ProfileName::Desk] {
            let r = Renderer::reference(p);
            for value in [0.0f64, 1.0, 0.5] {
                let mut s = default_state();
                for spec in m.sensors() {
                    let v = match spec.kind {
                        SensorKind::Binary => value.round(),
                        _ => spec.lo + value * (spec.hi - spec.lo),
                    };
                    s.readings.insert(spec.id.clone(), v);
                }
                s.command = VoiceCommand::vocabulary()[0];
                let img = r.render(&s, &SensorMask::none()).unwrap();
                let mut boxes: Vec<_> = (0..m.len()).map(|i| r.glyph_box(i)).collect();
                boxes.extend(r.command_boxes());
                for (x, y, g) in boxes {
                    let mut sum = 0u32;
                    for yy in y..y + g {
                        for xx in x..x + g {
                            sum += img.get(xx, yy) as u32;
                        }
                    }
                    let mean = sum as f64 / (g * g) as f64;
                    assert!((mean - BACKGROUND as f64).abs() >= 64.0, "{p}: box at ({x},{y}) mean {mean}");
                }
            }
        }
    }

    #[test]
    fn all_glyphs_distinct() {
        let sheet = GlyphSheet::reference();
        let mut seen = BTreeSet::new();
        for &v in Verb::ALL.iter().filter(|&&v| v != Verb::None) {
            assert!(seen.insert(sheet.scaled(&format!("verb:{v}"), 6).unwrap()), "{v}");
        }
        for &o in Object::ALL.iter().filter(|&&o| o != Object::None) {
            assert!(seen.insert(sheet.scaled(&format!("object:{o}"), 6).unwrap()), "{o}");
        }
    }

    #[test]
    fn resampling() {
        let sheet = GlyphSheet::reference();
        let g = sheet.get("gauge").unwrap().to_vec();
        assert_eq!(sheet.scaled("gauge", 12).unwrap(), g);
        let up = sheet.scaled("gauge", 24).unwrap();
        assert_eq!(up[0], g[0]);
        assert_eq!(up[24 * 23 + 23], g[143]);
        let down = sheet.scaled("gauge", 3).unwrap();
        assert_eq!(down, vec![0, 255, 0, 0, 255, 0, 0, 255, 0]);
        assert!(sheet.scaled("gauge", 5).is_err());
        assert!(sheet.scaled("nope", 12).is_err());
    }

    #[test]
    fn masked_sensor_leaves_background() {
        let m = SensorManifest::reference();
        let r = Renderer::reference(ProfileName::Desk);
        let mask = SensorMask::from_tokens(&["@presence:kitchen"], &m);
        assert_eq!(mask.hidden.len(), 2);
        let img = r.render(&apply_mask(&default_state(), &mask), &mask).unwrap();
        for (i, spec) in m.sensors().iter().enumerate() {
            if mask.hides(&spec.id) {
                let (x, y, g) = r.glyph_box(i);
                for yy in y..y + g {
                    for xx in x..x + g {
                        assert_eq!(img.get(xx, yy), BACKGROUND);
                    }
                }
            }
        }
        assert!(m.presence_sensors(Room::Kitchen).all(|s| mask.hides(&s.id)));
    }

    #[test]
    fn mask_tokens() {
        let m = SensorManifest::reference();
        let mask = SensorMask::from_tokens(&["@command", "not_a_sensor", "kitchen_co2", ""], &m);
        assert!(mask.hide_command);
        assert_eq!(mask.hidden.iter().collect::<Vec<_>>(), vec!["kitchen_co2"]);
        assert_eq!(SensorMask::from_tokens(&["@presence"], &m).hidden.len(), 8);
    }

    #[test]
    fn unmasked_missing_sensor_is_an_error() {
        let mut s = default_state();
        s.readings.remove("kitchen_co2");
        assert!(
            matches!(render(&s, ProfileName::Desk, &SensorMask::none()), Err(RenderError::State(v)) if v.len() == 1)
        );
    }

    #[test]
    fn bad_layouts_are_rejected() {
        let sheet = GlyphSheet::reference();
        let plan = FloorPlan::reference();
        let outside = SensorManifest::parse("a;kitchen;binary;0;1;60;60\n").unwrap();
        assert!(Renderer::new(Arc::new(outside), RenderProfile::full(), &sheet, &plan).is_err());
        let on_wall = SensorManifest::parse("a;kitchen;binary;0;1;14;6\n").unwrap();
        assert!(Renderer::new(Arc::new(on_wall), RenderProfile::full(), &sheet, &plan).is_err());
        let odd = SensorManifest::parse("a;kitchen;binary;0;1;3;7\n").unwrap();
        assert!(Renderer::new(Arc::new(odd), RenderProfile::desk(), &sheet, &plan).is_err());
        assert!(FloorPlan::parse("0;0;3;4\n").is_err());
    }

    #[test]
    fn empty_mask_is_identity() {
        let s = default_state();
        assert_eq!(apply_mask(&s, &SensorMask::none()), s);
    }
}
